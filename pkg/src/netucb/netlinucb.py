"""NetLinUCB: per-node block ridge states with weighted sharing of the common block.

A node asking for arm ``k`` broadcasts its common context to the members of
its component and each member ``j`` replies with two scalars, the predicted
common reward ``x_c^T W_jc^-1 b_jc`` and the quadratic form
``x_c^T W_jc^-1 x_c``. The requester combines the replies with its column of
the arm's weight matrix, weights squared in the radius.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import Context, Decision, Dimensions, Policy, Topology, argmax_first
from .ridge import RidgeBank
from .weights import WeightMatrixSet, initial_counts, update_weights


@dataclass(frozen=True)
class CommonSummary:
    from_node: int
    arm: int
    dot: float
    quad: float


def summary_cost(component_size: int, d_common: int, n_arms: int) -> int:
    """Scalars exchanged by one requesting node in one round.

    Per arm and per other member: the ``d_c`` broadcast context plus the
    two-scalar reply.
    """
    return n_arms * (component_size - 1) * (d_common + 2)


def round_comm_total(topology: Topology, d_common: int, n_arms: int) -> int:
    return n_arms * sum(s * (s - 1) * (d_common + 2) for s in topology.component_sizes)


class NetLinUCB(Policy):
    name = "netlinucb"

    def __init__(
        self,
        dims: Dimensions,
        topology: Topology,
        alpha_ridge: float,
        rho: float = 0.9,
        beta: float = 0.5,
    ):
        if topology.n_nodes != dims.n_nodes:
            raise ValueError("topology size does not match the number of nodes")
        self.dims = dims
        self.topology = topology
        self.alpha = alpha_ridge
        self.beta = beta
        K, N = dims.n_arms, dims.n_nodes
        self.common = RidgeBank((N, K), dims.d_common)
        self.specific = [RidgeBank((K,), d) for d in dims.d_specific]
        self.counts = initial_counts(N, K)
        self.weights = WeightMatrixSet.identity(N, K, rho)
        self._members = [np.asarray(topology.members(i)) for i in range(N)]
        self.comm_ledger = 0

    # op-level protocol, one message exchange at a time

    def request_summaries(self, i: int, ctx_common, k: int) -> list[CommonSummary]:
        x = np.asarray(ctx_common, dtype=float)
        out = []
        for j in self._members[i]:
            state = self.common[int(j), k]
            out.append(CommonSummary(int(j), k, float(state.point() @ x), state.quad(x)))
            if j != i:
                self.comm_ledger += self.dims.d_common + 2
        return out

    def netlin_ucb(self, i: int, ctx: Context, k: int, summaries: list[CommonSummary]) -> float:
        omega = self.weights.matrices[k]
        point = sum(omega[s.from_node, i] * s.dot for s in summaries)
        var = sum(omega[s.from_node, i] ** 2 * s.quad for s in summaries)
        spec = self.specific[i][k]
        point += spec.point() @ ctx.specific
        var += spec.quad(ctx.specific)
        return float(point + self.alpha * math.sqrt(max(var, 0.0)))

    # batched path used by play_round

    def scores(self, i: int, ctx: Context) -> tuple[np.ndarray, np.ndarray]:
        """UCB and bonus of every arm for node ``i`` from the current state."""
        members = self._members[i]
        K, d_c = self.dims.n_arms, self.dims.d_common
        W_inv = self.common.W_inv[members]  # (s, K, d, d)
        theta = np.einsum("jkab,jkb->jka", W_inv, self.common.b[members])
        dots = (theta.reshape(-1, d_c) @ ctx.common).reshape(len(members), K)
        quads = np.einsum("a,jkab,b->jk", ctx.common, W_inv, ctx.common)
        omega = self.weights.matrices[:, members, i].T  # (s, K)
        spec = self.specific[i]
        mean = (omega * dots).sum(axis=0) + spec.points() @ ctx.specific
        var = (omega**2 * quads).sum(axis=0) + spec.quads(ctx.specific)
        bonus = self.alpha * np.sqrt(np.maximum(var, 0.0))
        return mean + bonus, bonus

    def begin_round(self, contexts) -> None:
        common = np.stack([c.common for c in contexts])
        self.weights = update_weights(self.weights, self.counts, common, self.topology, self.beta)

    def play_round(self, t, contexts, pull):
        self.begin_round(contexts)
        decisions = []
        for i, ctx in enumerate(contexts):
            ucb, bonus = self.scores(i, ctx)
            arm = argmax_first(ucb)
            cost = summary_cost(len(self._members[i]), self.dims.d_common, self.dims.n_arms)
            decisions.append(Decision(arm, float(bonus[arm]), cost))
        self.comm_ledger += sum(d.comm_scalars for d in decisions)
        # updates after every node has decided: all reads above see the
        # start-of-round snapshot
        for i, (ctx, d) in enumerate(zip(contexts, decisions)):
            r = pull(i, d.arm)
            self.common[i, d.arm].update(ctx.common, r)
            self.specific[i][d.arm].update(ctx.specific, r)
            self.counts[i, d.arm] += 1
        return decisions

    def common_estimate(self, i: int, k: int) -> np.ndarray:
        """Weighted common-block estimate ``sum_j w_ji W_jc^-1 b_jc`` of node ``i``."""
        members = self._members[i]
        theta = np.stack([self.common[int(j), k].point() for j in members])
        return self.weights.matrices[k, members, i] @ theta
