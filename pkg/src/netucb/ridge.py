"""Ridge-regression state with a maintained inverse, and the two LinUCB benchmarks."""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from .core import Context, Decision, Dimensions, Policy, argmax_first, concat_context

REFRESH_EVERY = 512


def default_alpha_ridge(horizon: int) -> float:
    """``1 + sqrt(log(2T) / 2)``, the Hoeffding-style exploration width."""
    return 1.0 + math.sqrt(math.log(2 * horizon) / 2.0)


class RidgeState:
    """Design matrix ``W = I + sum x x^T``, its inverse, and ``b = sum r x``.

    The arrays may be views into a :class:`RidgeBank`; updates are in place.
    The inverse follows Sherman-Morrison and is recomputed from ``W`` every
    ``REFRESH_EVERY`` updates.
    """

    __slots__ = ("W", "W_inv", "b", "n_updates")

    def __init__(self, W: np.ndarray, W_inv: np.ndarray, b: np.ndarray, n_updates: int = 0):
        self.W = W
        self.W_inv = W_inv
        self.b = b
        self.n_updates = n_updates

    @classmethod
    def fresh(cls, dim: int) -> "RidgeState":
        return cls(np.eye(dim), np.eye(dim), np.zeros(dim))

    @property
    def dim(self) -> int:
        return self.b.shape[0]

    def copy(self) -> "RidgeState":
        return RidgeState(self.W.copy(), self.W_inv.copy(), self.b.copy(), self.n_updates)

    def update(self, x, r: float) -> "RidgeState":
        x = np.asarray(x, dtype=float)
        u = self.W_inv @ x
        self.W += np.outer(x, x)
        self.b += r * x
        self.W_inv -= np.outer(u, u) / (1.0 + x @ u)
        self.n_updates += 1
        if self.n_updates % REFRESH_EVERY == 0:
            self.W_inv[...] = np.linalg.inv(self.W)
        return self

    def point(self) -> np.ndarray:
        return self.W_inv @ self.b

    def quad(self, x) -> float:
        x = np.asarray(x, dtype=float)
        return float(x @ self.W_inv @ x)


def ridge_update(state: RidgeState, x, r: float) -> RidgeState:
    return state.update(x, r)


def ridge_point(state: RidgeState) -> np.ndarray:
    return state.point()


def ridge_quad(state: RidgeState, x) -> float:
    return state.quad(x)


class RidgeBank:
    """A grid of same-width ridge states stored in contiguous arrays.

    ``bank[idx]`` returns a :class:`RidgeState` whose arrays are views, so
    per-state updates and batched reads (``points``, ``quads``) stay in sync.
    """

    def __init__(self, shape: tuple[int, ...], dim: int):
        self.shape = tuple(shape)
        self.dim = dim
        self.W = np.broadcast_to(np.eye(dim), (*self.shape, dim, dim)).copy()
        self.W_inv = self.W.copy()
        self.b = np.zeros((*self.shape, dim))
        self._states = {
            idx: RidgeState(self.W[idx], self.W_inv[idx], self.b[idx]) for idx in np.ndindex(*self.shape)
        }

    def __getitem__(self, idx) -> RidgeState:
        if not isinstance(idx, tuple):
            idx = (idx,)
        return self._states[idx]

    def points(self) -> np.ndarray:
        return np.einsum("...ab,...b->...a", self.W_inv, self.b)

    def quads(self, x: np.ndarray) -> np.ndarray:
        """``x^T W_inv x`` for every state in the grid."""
        return np.einsum("a,...ab,b->...", x, self.W_inv, x)


def ucb_scores(bank: RidgeBank, x: np.ndarray, alpha: float) -> tuple[np.ndarray, np.ndarray]:
    """Per-arm UCB and bonus for a bank of shape (K,) over context ``x``."""
    mean = bank.points() @ x
    bonus = alpha * np.sqrt(np.maximum(bank.quads(x), 0.0))
    return mean + bonus, bonus


def disjoint_select(states: Sequence[RidgeState], x, alpha_ridge: float) -> int:
    """Arm maximising ``x^T theta_k + alpha sqrt(x^T W_k^-1 x)``, lowest index on ties."""
    x = np.asarray(x, dtype=float)
    scores = [s.point() @ x + alpha_ridge * math.sqrt(max(s.quad(x), 0.0)) for s in states]
    return argmax_first(np.asarray(scores))


def shared_embed(node: int, ctx: Context, dims: Dimensions) -> np.ndarray:
    """Place the common block first and node ``node``'s specific block in its slot."""
    out = np.zeros(dims.d_global)
    out[: dims.d_common] = ctx.common
    start = dims.specific_offset(node)
    out[start : start + dims.d_specific[node]] = ctx.specific
    return out


def shared_select(states: Sequence[RidgeState], node: int, ctx: Context, dims: Dimensions, alpha_ridge: float) -> int:
    return disjoint_select(states, shared_embed(node, ctx, dims), alpha_ridge)


class DisjointLinUCB(Policy):
    """Independent LinUCB per node.

    With ``block_split`` the common and specific blocks keep separate ridge
    states and the bonus is ``sqrt(q_common + q_specific)``; this is what
    NetLinUCB reduces to when every node is isolated.
    """

    name = "disjoint"

    def __init__(self, dims: Dimensions, alpha_ridge: float, block_split: bool = False):
        self.dims = dims
        self.alpha = alpha_ridge
        self.block_split = block_split
        K = dims.n_arms
        if block_split:
            self.common = RidgeBank((dims.n_nodes, K), dims.d_common)
            self.specific = [RidgeBank((K,), d) for d in dims.d_specific]
        else:
            self.full = [RidgeBank((K,), dims.d_full(i)) for i in range(dims.n_nodes)]

    def scores(self, node: int, ctx: Context) -> tuple[np.ndarray, np.ndarray]:
        if not self.block_split:
            return ucb_scores(self.full[node], concat_context(ctx), self.alpha)
        common_pt = np.einsum("kab,kb->ka", self.common.W_inv[node], self.common.b[node]) @ ctx.common
        common_q = np.einsum("a,kab,b->k", ctx.common, self.common.W_inv[node], ctx.common)
        spec = self.specific[node]
        mean = common_pt + spec.points() @ ctx.specific
        bonus = self.alpha * np.sqrt(np.maximum(common_q + spec.quads(ctx.specific), 0.0))
        return mean + bonus, bonus

    def _update(self, node: int, arm: int, ctx: Context, reward: float):
        if self.block_split:
            self.common[node, arm].update(ctx.common, reward)
            self.specific[node][arm].update(ctx.specific, reward)
        else:
            self.full[node][arm].update(concat_context(ctx), reward)

    def play_round(self, t, contexts, pull):
        decisions = []
        for node, ctx in enumerate(contexts):
            ucb, bonus = self.scores(node, ctx)
            arm = argmax_first(ucb)
            decisions.append(Decision(arm, float(bonus[arm]), 0))
        for node, (ctx, d) in enumerate(zip(contexts, decisions)):
            self._update(node, d.arm, ctx, pull(node, d.arm))
        return decisions


class SharedLinUCB(Policy):
    """One central LinUCB over the block-sparse global embedding.

    Nodes are served in order within a round and each update is visible to
    the next node. Communication is counted as each node downloading the K
    global parameter vectors.
    """

    name = "shared"

    def __init__(self, dims: Dimensions, alpha_ridge: float):
        self.dims = dims
        self.alpha = alpha_ridge
        self.bank = RidgeBank((dims.n_arms,), dims.d_global)

    def play_round(self, t, contexts, pull):
        comm = 0 if self.dims.n_nodes == 1 else self.dims.n_arms * self.dims.d_global
        decisions = []
        for node, ctx in enumerate(contexts):
            x = shared_embed(node, ctx, self.dims)
            ucb, bonus = ucb_scores(self.bank, x, self.alpha)
            arm = argmax_first(ucb)
            self.bank[arm].update(x, pull(node, arm))
            decisions.append(Decision(arm, float(bonus[arm]), comm))
        return decisions
