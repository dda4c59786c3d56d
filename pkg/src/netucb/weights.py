"""Adaptive per-arm influence matrices.

``matrices[k, j, i]`` is the influence of node ``j`` on node ``i`` for arm
``k``; every column ``[:, i]`` sums to one and is zero outside the component
of node ``i``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import Topology


@dataclass
class WeightMatrixSet:
    matrices: np.ndarray  # (K, N, N)
    rho: float = 0.9

    def __post_init__(self):
        # rho = 1 freezes the matrices; allowed for ablations
        if not 0.0 <= self.rho <= 1.0:
            raise ValueError(f"rho must lie in [0, 1], got {self.rho}")

    @classmethod
    def identity(cls, n_nodes: int, n_arms: int, rho: float = 0.9) -> "WeightMatrixSet":
        return cls(np.tile(np.eye(n_nodes), (n_arms, 1, 1)), rho)

    @property
    def n_arms(self) -> int:
        return self.matrices.shape[0]

    @property
    def n_nodes(self) -> int:
        return self.matrices.shape[1]

    def column(self, k: int, i: int) -> np.ndarray:
        return self.matrices[k, :, i]

    def copy(self) -> "WeightMatrixSet":
        return WeightMatrixSet(self.matrices.copy(), self.rho)


def initial_counts(n_nodes: int, n_arms: int) -> np.ndarray:
    return np.ones((n_nodes, n_arms), dtype=np.int64)


def arm_selection_similarity(counts: np.ndarray, k: int, i: int, j: int) -> float:
    col = counts[:, k]
    total = float(col.sum())
    return float(col[i]) * float(col[j]) / (total * total)


def context_similarity(ctx_i_common, ctx_j_common) -> float:
    """Cosine similarity remapped to [0, 1]; 0 if either vector is zero."""
    a = np.asarray(ctx_i_common, dtype=float)
    b = np.asarray(ctx_j_common, dtype=float)
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        return 0.0
    cos = float(a @ b) / (na * nb)
    return (1.0 + min(1.0, max(-1.0, cos))) / 2.0


def _context_similarity_matrix(common: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(common, axis=1)
    safe = np.where(norms > 0, norms, 1.0)
    unit = common / safe[:, None]
    cos = np.clip(unit @ unit.T, -1.0, 1.0)
    sim = (1.0 + cos) / 2.0
    zero = norms == 0
    sim[zero, :] = 0.0
    sim[:, zero] = 0.0
    return sim


def raw_scores(counts: np.ndarray, common_contexts: np.ndarray, topology: Topology, beta: float = 0.5) -> np.ndarray:
    """Unnormalised scores, shape (K, N, N), zero across components."""
    counts = np.asarray(counts, dtype=float)
    totals = counts.sum(axis=0)  # (K,)
    arm_sim = np.einsum("ik,jk->kji", counts, counts) / (totals**2)[:, None, None]
    ctx_sim = _context_similarity_matrix(np.asarray(common_contexts, dtype=float))
    scores = beta * arm_sim + (1.0 - beta) * ctx_sim[None, :, :]
    return np.where(topology.mask()[None, :, :], scores, 0.0)


def normalize_columns(scores: np.ndarray) -> np.ndarray:
    """Column-normalise each (N, N) slice; an all-zero column becomes e_i."""
    sums = scores.sum(axis=-2, keepdims=True)
    n = scores.shape[-1]
    eye = np.broadcast_to(np.eye(n), scores.shape)
    dead = sums == 0
    out = np.where(dead, eye, scores / np.where(dead, 1.0, sums))
    return out


def update_weights(
    wset: WeightMatrixSet,
    counts: np.ndarray,
    common_contexts: np.ndarray,
    topology: Topology,
    beta: float = 0.5,
) -> WeightMatrixSet:
    """One smoothing step: ``rho * old + (1 - rho) * normalised(new scores)``."""
    fresh = normalize_columns(raw_scores(counts, common_contexts, topology, beta))
    mixed = wset.rho * wset.matrices + (1.0 - wset.rho) * fresh
    # exact zeros across components and exact identity on isolated nodes
    mixed = np.where(topology.mask()[None, :, :], mixed, 0.0)
    isolated = np.flatnonzero(topology.mask().sum(axis=0) == 1)
    mixed[:, isolated, isolated] = 1.0
    return WeightMatrixSet(mixed, wset.rho)


def check_invariants(wset: WeightMatrixSet, topology: Topology, atol: float = 1e-9) -> None:
    m = wset.matrices
    if np.any(m < 0):
        raise AssertionError("negative weight entry")
    sums = m.sum(axis=1)
    if not np.allclose(sums, 1.0, rtol=0, atol=atol):
        raise AssertionError(f"column sums deviate from 1 by {np.abs(sums - 1).max():.3e}")
    if np.any(m[:, ~topology.mask()] != 0):
        raise AssertionError("nonzero weight across topology components")


def dump_weights(wset: WeightMatrixSet, path: Path, t: int) -> None:
    """Append the matrices of round ``t`` as rows ``t,arm,row,col_0..col_{N-1}``."""
    path = Path(path)
    new = not path.exists()
    with path.open("a", newline="") as fh:
        writer = csv.writer(fh)
        if new:
            writer.writerow(["t", "arm", "row", *(f"col_{i}" for i in range(wset.n_nodes))])
        for k in range(wset.n_arms):
            for j in range(wset.n_nodes):
                writer.writerow([t, k, j, *(f"{v:.17g}" for v in wset.matrices[k, j])])
