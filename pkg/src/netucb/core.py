"""Domain types shared by the environment, the policies and the harness."""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


class ConfigError(ValueError):
    """Raised for invalid dimensions, topologies or run configurations."""


class InvalidSample(ValueError):
    """Raised when a sampled vector contains non-finite values."""


@dataclass(frozen=True)
class Dimensions:
    n_nodes: int
    n_arms: int
    d_common: int
    d_specific: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "d_specific", tuple(int(d) for d in self.d_specific))
        if self.n_nodes < 1:
            raise ConfigError(f"n_nodes must be >= 1, got {self.n_nodes}")
        if self.n_arms < 2:
            raise ConfigError(f"n_arms must be >= 2, got {self.n_arms}")
        if self.d_common < 1:
            raise ConfigError(f"d_common must be >= 1, got {self.d_common}")
        if len(self.d_specific) != self.n_nodes:
            raise ConfigError(
                f"d_specific has {len(self.d_specific)} entries for {self.n_nodes} nodes"
            )
        if any(d < 1 for d in self.d_specific):
            raise ConfigError(f"d_specific entries must be >= 1, got {self.d_specific}")

    @classmethod
    def uniform(cls, n_nodes: int, n_arms: int, d_common: int, d_specific: int) -> "Dimensions":
        return cls(n_nodes, n_arms, d_common, (d_specific,) * n_nodes)

    def d_full(self, node: int) -> int:
        return self.d_common + self.d_specific[node]

    @property
    def d_global(self) -> int:
        """Width of the block-sparse embedding used by Shared LinUCB."""
        return self.d_common + sum(self.d_specific)

    def specific_offset(self, node: int) -> int:
        return self.d_common + sum(self.d_specific[:node])


@dataclass(frozen=True)
class Context:
    common: np.ndarray
    specific: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "common", np.asarray(self.common, dtype=float))
        object.__setattr__(self, "specific", np.asarray(self.specific, dtype=float))

    @property
    def dim(self) -> int:
        return self.common.size + self.specific.size

    def scaled(self, factor: float) -> "Context":
        return Context(self.common * factor, self.specific * factor)


def concat_context(ctx: Context) -> np.ndarray:
    return np.concatenate([ctx.common, ctx.specific])


def split_context(x: np.ndarray, d_common: int) -> Context:
    x = np.asarray(x, dtype=float)
    return Context(x[:d_common].copy(), x[d_common:].copy())


def clamp_to_unit_ball(v) -> np.ndarray:
    """Project ``v`` radially onto the closed unit ball: ``v / max(1, ||v||)``."""
    v = np.asarray(v, dtype=float)
    if not np.all(np.isfinite(v)):
        raise InvalidSample("cannot clamp a vector with non-finite entries")
    norm = np.linalg.norm(v)
    if norm <= 1.0:
        return v.copy()
    return v / norm


_TOPOLOGY_PRODUCT = re.compile(r"^\s*(\d+)\s*[x*×]\s*(\d+)\s*$")


@dataclass(frozen=True)
class Topology:
    """Disjoint union of fully connected components.

    ``component_of[i]`` is the component index of node ``i``; nodes in the
    same component exchange summaries, nodes in different ones never do.
    """

    component_of: tuple[int, ...]
    label: str = field(default="", compare=False)

    def __post_init__(self):
        object.__setattr__(self, "component_of", tuple(int(c) for c in self.component_of))
        if not self.component_of:
            raise ConfigError("topology must contain at least one node")

    @classmethod
    def from_sizes(cls, sizes: Sequence[int], label: str = "") -> "Topology":
        if not sizes or any(int(s) < 1 for s in sizes):
            raise ConfigError(f"component sizes must be positive, got {list(sizes)}")
        comp = [c for c, s in enumerate(sizes) for _ in range(int(s))]
        return cls(tuple(comp), label or "+".join(str(int(s)) for s in sizes))

    @classmethod
    def parse(cls, text: str | int, n_nodes: int | None = None) -> "Topology":
        """Parse a topology label.

        ``"SxC"`` is C fully connected components of S nodes each, so ``"1x12"``
        is twelve isolated nodes and ``"6x2"`` two cliques of six. A bare
        integer is one clique; a comma list gives explicit component sizes.
        The keywords ``disjoint`` and ``full`` need ``n_nodes``.
        """
        label = str(text).strip()
        if label in ("disjoint", "full"):
            if n_nodes is None:
                raise ConfigError(f"topology {label!r} needs n_nodes")
            sizes = [1] * n_nodes if label == "disjoint" else [n_nodes]
        elif (m := _TOPOLOGY_PRODUCT.match(label)) is not None:
            size, count = int(m.group(1)), int(m.group(2))
            sizes = [size] * count
        elif re.fullmatch(r"\s*\d+(\s*,\s*\d+)*\s*", label):
            sizes = [int(s) for s in label.split(",")]
        else:
            raise ConfigError(f"cannot parse topology {text!r}")
        topo = cls.from_sizes(sizes, label=label)
        if n_nodes is not None and topo.n_nodes != n_nodes:
            raise ConfigError(
                f"topology {label!r} covers {topo.n_nodes} nodes but the instance has {n_nodes}"
            )
        return topo

    @classmethod
    def singletons(cls, n_nodes: int) -> "Topology":
        return cls.from_sizes([1] * n_nodes, label=f"1x{n_nodes}")

    @classmethod
    def fully_connected(cls, n_nodes: int) -> "Topology":
        return cls.from_sizes([n_nodes], label=str(n_nodes))

    @property
    def n_nodes(self) -> int:
        return len(self.component_of)

    @property
    def component_sizes(self) -> list[int]:
        return np.bincount(self.component_of).tolist()

    def members(self, node: int) -> list[int]:
        c = self.component_of[node]
        return [j for j, cj in enumerate(self.component_of) if cj == c]

    def mask(self) -> np.ndarray:
        """Boolean N x N matrix, True where two nodes share a component."""
        comp = np.asarray(self.component_of)
        return comp[:, None] == comp[None, :]


@dataclass(frozen=True)
class RoundRecord:
    t: int
    node: int
    chosen_arm: int
    optimal_arm: int
    reward: float
    expected_reward_chosen: float
    expected_reward_optimal: float
    radius: float = 0.0
    comm_scalars: int = 0

    @property
    def regret(self) -> float:
        return self.expected_reward_optimal - self.expected_reward_chosen


@dataclass(frozen=True)
class Decision:
    """One node's choice in a round: the arm, its exploration bonus, and the
    number of scalars the node exchanged with other nodes to make it."""

    arm: int
    radius: float
    comm_scalars: int = 0


class Policy:
    """Base class for the four bandit policies.

    ``play_round`` receives the round's contexts and a ``pull(node, arm)``
    callback returning the realised reward, and owns the order in which nodes
    decide and update.
    """

    name = "policy"

    def play_round(self, t: int, contexts: Sequence[Context], pull) -> list[Decision]:
        raise NotImplementedError


def argmax_first(values: np.ndarray) -> int:
    """Index of the maximum, lowest index on ties."""
    return int(np.argmax(values))
