"""Net-SGD-UCB: momentum SGD estimates with EMA diagonal gradient accumulators.

Each (node, arm) keeps ``theta``, a momentum vector ``v`` and the diagonal
``G`` of the accumulator, all of width ``d_c + d_s`` with the common block
first. Scoring mixes the common blocks of the component through the weight
matrix; updates only ever touch the deciding node's own selected arm.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import Context, Decision, Dimensions, Policy, Topology, argmax_first, concat_context
from .weights import WeightMatrixSet, initial_counts, update_weights


@dataclass(frozen=True)
class SgdHyperparams:
    eta_sgd: float = 0.5
    mu: float = 0.9
    gamma: float = 0.999
    alpha_sgd: float = 1.0

    def __post_init__(self):
        if self.eta_sgd <= 0:
            raise ValueError("eta_sgd must be > 0")
        if not 0.0 <= self.mu < 1.0:
            raise ValueError("mu must lie in [0, 1)")
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError("gamma must lie in [0, 1)")
        if self.alpha_sgd <= 0:
            raise ValueError("alpha_sgd must be > 0")

    @classmethod
    def for_noise(cls, sigma: float, alpha0: float = 0.6, **kw) -> "SgdHyperparams":
        """Exploration scaled with the noise level: ``alpha_sgd = (1 + sigma^2) * alpha0``."""
        return cls(alpha_sgd=(1.0 + sigma**2) * alpha0, **kw)


@dataclass
class SgdArmState:
    theta_hat: np.ndarray
    v: np.ndarray
    G_diag: np.ndarray

    @classmethod
    def fresh(cls, dim: int) -> "SgdArmState":
        return cls(np.zeros(dim), np.zeros(dim), np.ones(dim))

    def copy(self) -> "SgdArmState":
        return SgdArmState(self.theta_hat.copy(), self.v.copy(), self.G_diag.copy())


def sgd_gradient(theta_hat, ctx_full, r: float) -> np.ndarray:
    """Gradient of ``0.5 * (r - x^T theta)^2`` with respect to ``theta``."""
    x = np.asarray(ctx_full, dtype=float)
    return -(r - x @ theta_hat) * x


def sgd_apply(state: SgdArmState, grad: np.ndarray, hyper: SgdHyperparams) -> SgdArmState:
    """Momentum, parameter, then accumulator update, in place."""
    state.v *= hyper.mu
    state.v += (1.0 - hyper.mu) * grad
    state.theta_hat -= hyper.eta_sgd * state.v
    state.G_diag *= hyper.gamma
    state.G_diag += (1.0 - hyper.gamma) * grad * grad
    return state


def aggregate_common(common_estimates: np.ndarray, weights: WeightMatrixSet, i: int, k: int) -> np.ndarray:
    """``sum_j w_ji^k theta_jc^k`` for ``common_estimates`` of shape (N, d_c)."""
    return weights.matrices[k, :, i] @ np.asarray(common_estimates)


def summary_cost(component_size: int, d_common: int, n_arms: int) -> int:
    """Per requesting node: common estimate and common G block from each other member, per arm."""
    return n_arms * (component_size - 1) * 2 * d_common


class NetSGDUCB(Policy):
    """Net-SGD-UCB over a topology.

    ``consensus_feedback`` writes the weighted common estimate back into the
    selected arm's local state before the gradient step, so local estimates
    drift toward consensus; by default aggregation is used for scoring only.
    """

    name = "netsgducb"

    def __init__(
        self,
        dims: Dimensions,
        topology: Topology,
        hyper: SgdHyperparams,
        rho: float = 0.9,
        beta: float = 0.5,
        consensus_feedback: bool = False,
    ):
        if topology.n_nodes != dims.n_nodes:
            raise ValueError("topology size does not match the number of nodes")
        self.dims = dims
        self.topology = topology
        self.hyper = hyper
        self.beta = beta
        self.consensus_feedback = consensus_feedback
        N, K = dims.n_nodes, dims.n_arms
        self.theta = [np.zeros((K, dims.d_full(i))) for i in range(N)]
        self.v = [np.zeros((K, dims.d_full(i))) for i in range(N)]
        self.G = [np.ones((K, dims.d_full(i))) for i in range(N)]
        self.counts = initial_counts(N, K)
        self.weights = WeightMatrixSet.identity(N, K, rho)
        self._members = [np.asarray(topology.members(i)) for i in range(N)]
        self.comm_ledger = 0

    def arm_state(self, i: int, k: int) -> SgdArmState:
        """View of node ``i``'s state for arm ``k`` (writes go through)."""
        return SgdArmState(self.theta[i][k], self.v[i][k], self.G[i][k])

    def _common_stack(self, arrays: Sequence[np.ndarray], members) -> np.ndarray:
        d_c = self.dims.d_common
        return np.stack([arrays[int(j)][:, :d_c] for j in members])  # (s, K, d_c)

    def netsgd_ucb(self, i: int, ctx: Context, k: int) -> float:
        """Single-arm score, written out term by term."""
        d_c = self.dims.d_common
        col = self.weights.matrices[k, :, i]
        point = 0.0
        var = 0.0
        for j in self._members[i]:
            w = col[j]
            point += w * (self.theta[j][k, :d_c] @ ctx.common)
            var += w * w * float(np.sum(ctx.common**2 / self.G[j][k, :d_c]))
        point += self.theta[i][k, d_c:] @ ctx.specific
        var += float(np.sum(ctx.specific**2 / self.G[i][k, d_c:]))
        return float(point + self.hyper.alpha_sgd * math.sqrt(var))

    def scores(self, i: int, ctx: Context) -> tuple[np.ndarray, np.ndarray]:
        d_c = self.dims.d_common
        members = self._members[i]
        omega = self.weights.matrices[:, members, i].T  # (s, K)
        theta_c = (omega[:, :, None] * self._common_stack(self.theta, members)).sum(axis=0)
        q_c = (ctx.common**2 / self._common_stack(self.G, members)).sum(axis=-1)  # (s, K)
        var_c = (omega**2 * q_c).sum(axis=0)
        mean = theta_c @ ctx.common + self.theta[i][:, d_c:] @ ctx.specific
        var = var_c + (ctx.specific**2 / self.G[i][:, d_c:]).sum(axis=-1)
        bonus = self.hyper.alpha_sgd * np.sqrt(var)
        return mean + bonus, bonus

    def begin_round(self, contexts) -> None:
        common = np.stack([c.common for c in contexts])
        self.weights = update_weights(self.weights, self.counts, common, self.topology, self.beta)

    def play_round(self, t, contexts, pull):
        self.begin_round(contexts)
        d_c = self.dims.d_common
        decisions = []
        for i, ctx in enumerate(contexts):
            ucb, bonus = self.scores(i, ctx)
            arm = argmax_first(ucb)
            cost = summary_cost(len(self._members[i]), d_c, self.dims.n_arms)
            decisions.append(Decision(arm, float(bonus[arm]), cost))
        self.comm_ledger += sum(d.comm_scalars for d in decisions)

        consensus = None
        if self.consensus_feedback:
            consensus = [
                aggregate_common(np.stack([self.theta[int(j)][d.arm, :d_c] for j in range(self.dims.n_nodes)]), self.weights, i, d.arm)
                for i, d in enumerate(decisions)
            ]
        for i, (ctx, d) in enumerate(zip(contexts, decisions)):
            r = pull(i, d.arm)
            state = self.arm_state(i, d.arm)
            grad = sgd_gradient(state.theta_hat, concat_context(ctx), r)
            if consensus is not None:
                state.theta_hat[:d_c] = consensus[i]
            sgd_apply(state, grad, self.hyper)
            self.counts[i, d.arm] += 1
        return decisions


class SgdUCB:
    """Single-node SGD-UCB learner with no communication.

    Sums are taken per block (the first ``d_common`` coordinates, then the
    rest) in the same order as :class:`NetSGDUCB`, so an isolated networked
    node reproduces this learner bit for bit.
    """

    def __init__(self, n_arms: int, dim: int, hyper: SgdHyperparams, d_common: int | None = None):
        self.hyper = hyper
        self.d_common = dim if d_common is None else d_common
        self.theta = np.zeros((n_arms, dim))
        self.v = np.zeros((n_arms, dim))
        self.G = np.ones((n_arms, dim))

    @property
    def arms(self) -> list[SgdArmState]:
        return [SgdArmState(self.theta[k], self.v[k], self.G[k]) for k in range(self.theta.shape[0])]

    def scores(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        c = self.d_common
        mean = self.theta[:, :c] @ x[:c] + self.theta[:, c:] @ x[c:]
        var = (x[:c] ** 2 / self.G[:, :c]).sum(axis=-1) + (x[c:] ** 2 / self.G[:, c:]).sum(axis=-1)
        bonus = self.hyper.alpha_sgd * np.sqrt(var)
        return mean + bonus, bonus

    def update(self, arm: int, x: np.ndarray, r: float) -> None:
        state = SgdArmState(self.theta[arm], self.v[arm], self.G[arm])
        sgd_apply(state, sgd_gradient(state.theta_hat, x, r), self.hyper)


class IndependentSgdUCB(Policy):
    """N isolated SGD-UCB learners over the full contexts."""

    name = "sgducb"

    def __init__(self, dims: Dimensions, hyper: SgdHyperparams):
        self.learners = [SgdUCB(dims.n_arms, dims.d_full(i), hyper, dims.d_common) for i in range(dims.n_nodes)]

    def play_round(self, t, contexts, pull):
        decisions = []
        xs = [concat_context(c) for c in contexts]
        for learner, x in zip(self.learners, xs):
            ucb, bonus = learner.scores(x)
            arm = argmax_first(ucb)
            decisions.append(Decision(arm, float(bonus[arm]), 0))
        for i, (learner, x, d) in enumerate(zip(self.learners, xs, decisions)):
            learner.update(d.arm, x, pull(i, d.arm))
        return decisions
