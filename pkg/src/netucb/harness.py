"""Experiment runner: replications, regret metrics, sweeps and CSV output."""

from __future__ import annotations

import csv
import itertools
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import yaml

from .core import ConfigError, Policy, RoundRecord, Topology
from .environment import DEFAULT_HORIZON, Environment, InstanceConfig, preset
from .netlinucb import NetLinUCB
from .netsgducb import IndependentSgdUCB, NetSGDUCB, SgdHyperparams
from .ridge import DisjointLinUCB, SharedLinUCB, default_alpha_ridge
from .weights import check_invariants, dump_weights

log = logging.getLogger(__name__)

POLICIES = ("disjoint", "shared", "netlinucb", "netsgducb")
OUTPUT_ENV = "NETUCB_OUTPUT_DIR"
TRACE_HEADER = ["t", "node", "arm", "opt_arm", "inst_regret", "cum_regret", "radius", "comm_scalars"]
SUMMARY_HEADER = [
    "policy",
    "topology",
    "n_nodes",
    "horizon",
    "n_seeds",
    "mean_regret_per_node_round",
    "std_regret_per_node_round",
    "mean_final_regret",
    "std_final_regret",
    "mean_radius",
    "wall_ms_per_round",
    "comm_total",
    "status",
    "error",
]


def _fmt(x: float) -> str:
    return f"{x:.17g}"


@dataclass
class PolicyParams:
    alpha_ridge: float | None = None  # None: 1 + sqrt(log(2T)/2)
    rho: float = 0.9
    beta: float = 0.5
    eta_sgd: float = 0.5
    mu: float = 0.9
    gamma: float = 0.999
    alpha0: float = 0.6
    alpha_sgd: float | None = None  # None: (1 + sigma^2) * alpha0
    consensus_feedback: bool = False
    block_split: bool = False  # Disjoint LinUCB with separate common/specific blocks

    def sgd_hyper(self, sigma: float) -> SgdHyperparams:
        if self.alpha_sgd is not None:
            return SgdHyperparams(self.eta_sgd, self.mu, self.gamma, self.alpha_sgd)
        return SgdHyperparams.for_noise(sigma, self.alpha0, eta_sgd=self.eta_sgd, mu=self.mu, gamma=self.gamma)


@dataclass
class RunConfig:
    instance: InstanceConfig
    policy: str = "netlinucb"
    topology: str = "full"
    horizon: int = DEFAULT_HORIZON
    seeds: list[int] = field(default_factory=lambda: list(range(10)))
    params: PolicyParams = field(default_factory=PolicyParams)
    output_dir: Path | None = None
    preset: str | None = None
    dump_weights: bool = False

    def validate(self) -> None:
        problems = []
        if self.policy not in POLICIES and self.policy != "sgducb":
            problems.append(f"policy: {self.policy!r} not in {POLICIES}")
        if self.horizon < 1:
            problems.append(f"horizon: must be >= 1, got {self.horizon}")
        if not self.seeds:
            problems.append("seeds: need at least one seed")
        try:
            self.topology_obj()
        except ConfigError as exc:
            problems.append(f"topology: {exc}")
        if problems:
            raise ConfigError("; ".join(problems))

    def topology_obj(self) -> Topology:
        return Topology.parse(self.topology, self.instance.dims.n_nodes)

    @property
    def alpha_ridge(self) -> float:
        a = self.params.alpha_ridge
        return default_alpha_ridge(self.horizon) if a is None else a


def make_policy(cfg: RunConfig) -> Policy:
    dims = cfg.instance.dims
    p = cfg.params
    if cfg.policy == "disjoint":
        return DisjointLinUCB(dims, cfg.alpha_ridge, block_split=p.block_split)
    if cfg.policy == "shared":
        return SharedLinUCB(dims, cfg.alpha_ridge)
    if cfg.policy == "netlinucb":
        return NetLinUCB(dims, cfg.topology_obj(), cfg.alpha_ridge, rho=p.rho, beta=p.beta)
    if cfg.policy == "netsgducb":
        return NetSGDUCB(
            dims,
            cfg.topology_obj(),
            p.sgd_hyper(cfg.instance.noise_sigma),
            rho=p.rho,
            beta=p.beta,
            consensus_feedback=p.consensus_feedback,
        )
    if cfg.policy == "sgducb":
        return IndependentSgdUCB(dims, p.sgd_hyper(cfg.instance.noise_sigma))
    raise ConfigError(f"policy: unknown policy {cfg.policy!r}")


@dataclass
class RegretTrace:
    """Per-round, per-node log of one replication; arrays are (T, N)."""

    policy: str
    topology: str
    seed: int
    arms: np.ndarray
    opt_arms: np.ndarray
    node_regret: np.ndarray
    radius: np.ndarray
    comm: np.ndarray
    rewards: np.ndarray | None = None
    wall_seconds: float = 0.0

    @property
    def horizon(self) -> int:
        return self.arms.shape[0]

    @property
    def n_nodes(self) -> int:
        return self.arms.shape[1]

    @property
    def inst_regret(self) -> np.ndarray:
        """Network regret per round, ``sum_i Delta_{i,t}``."""
        return self.node_regret.sum(axis=1)

    @property
    def cum_regret(self) -> np.ndarray:
        """``R(t)`` for t = 1..T."""
        return np.cumsum(self.inst_regret)

    @property
    def comm_per_round(self) -> np.ndarray:
        return self.comm.sum(axis=1)

    @property
    def final_regret(self) -> float:
        return float(self.cum_regret[-1])


@dataclass
class Replication:
    trace: RegretTrace
    records: list[RoundRecord]


def run_replication(
    cfg: RunConfig,
    seed: int,
    *,
    check: bool = True,
    weight_dump: Path | None = None,
    keep_records: bool = True,
) -> Replication:
    """Run one seed of ``cfg``; regret is measured on expected rewards."""
    cfg.validate()
    env = Environment(replace(cfg.instance, seed=seed))
    policy = make_policy(cfg)
    topology = cfg.topology_obj()
    T, N = cfg.horizon, env.n_nodes

    arms = np.zeros((T, N), dtype=np.int64)
    opt = np.zeros((T, N), dtype=np.int64)
    regret = np.zeros((T, N))
    radius = np.zeros((T, N))
    comm = np.zeros((T, N), dtype=np.int64)
    rewards = np.zeros((T, N))
    records: list[RoundRecord] = []
    sigma = cfg.instance.noise_sigma

    start = time.perf_counter()
    for t in range(1, T + 1):
        contexts = env.sample_contexts(t)
        means = np.stack([env.expected_rewards(i, c) for i, c in enumerate(contexts)])
        noise = env.round_noise(t)
        row = t - 1

        def pull(node: int, arm: int) -> float:
            r = means[node, arm] + sigma * noise[node, arm]
            rewards[row, node] = r
            return float(r)

        decisions = policy.play_round(t, contexts, pull)
        best = means.argmax(axis=1)
        for i, d in enumerate(decisions):
            arms[row, i] = d.arm
            opt[row, i] = best[i]
            regret[row, i] = means[i, best[i]] - means[i, d.arm]
            radius[row, i] = d.radius
            comm[row, i] = d.comm_scalars
        if check:
            if np.any(regret[row] < 0):
                raise AssertionError(f"negative regret at t={t}")
            if np.any(np.abs(means) > 1 + 1e-12):
                raise AssertionError(f"expected reward outside [-1, 1] at t={t}")
            if hasattr(policy, "weights"):
                check_invariants(policy.weights, topology)
        if weight_dump is not None and hasattr(policy, "weights"):
            dump_weights(policy.weights, weight_dump, t)
        if keep_records:
            records.extend(
                RoundRecord(t, i, int(arms[row, i]), int(best[i]), float(rewards[row, i]),
                            float(means[i, arms[row, i]]), float(means[i, best[i]]),
                            float(radius[row, i]), int(comm[row, i]))
                for i in range(N)
            )
    wall = time.perf_counter() - start
    trace = RegretTrace(cfg.policy, topology.label, seed, arms, opt, regret, radius, comm, rewards, wall)
    return Replication(trace, records)


# metrics


def time_average_curve(cum_regret: Sequence[float] | RegretTrace) -> np.ndarray:
    """Rows ``(t, R(t)/t)`` for t = 1..T."""
    cum = cum_regret.cum_regret if isinstance(cum_regret, RegretTrace) else np.asarray(cum_regret, dtype=float)
    t = np.arange(1, len(cum) + 1)
    return np.column_stack([t, cum / t])


def per_node_average(traces: Iterable[RegretTrace]) -> list[tuple[int, float]]:
    """``(N, mean over seeds of R(T)/(N T))`` per network size, sorted by N."""
    traces = list(traces)
    if not traces:
        return []
    horizons = {tr.horizon for tr in traces}
    if len(horizons) != 1:
        raise ValueError(f"traces have different horizons: {sorted(horizons)}")
    groups: dict[int, list[float]] = {}
    for tr in traces:
        groups.setdefault(tr.n_nodes, []).append(tr.final_regret / (tr.n_nodes * tr.horizon))
    return [(n, float(np.mean(v))) for n, v in sorted(groups.items())]


def mean_radius(traces: Iterable[RegretTrace]) -> float:
    return float(np.mean([tr.radius.mean() for tr in traces]))


def radius_reduction(policy_traces, disjoint_traces) -> float:
    """Percentage drop of the mean chosen-arm bonus relative to Disjoint LinUCB."""
    if isinstance(policy_traces, RegretTrace):
        policy_traces = [policy_traces]
    if isinstance(disjoint_traces, RegretTrace):
        disjoint_traces = [disjoint_traces]
    return 100.0 * (1.0 - mean_radius(policy_traces) / mean_radius(disjoint_traces))


# CSV


def trace_filename(trace: RegretTrace) -> str:
    topo = trace.topology.replace(",", "-") or "na"
    return f"trace_{trace.policy}_{topo}_seed{trace.seed}.csv"


def write_trace(trace: RegretTrace, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    cum_node = np.cumsum(trace.node_regret, axis=0)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRACE_HEADER)
        for row in range(trace.horizon):
            for i in range(trace.n_nodes):
                w.writerow([
                    row + 1,
                    i,
                    int(trace.arms[row, i]),
                    int(trace.opt_arms[row, i]),
                    _fmt(trace.node_regret[row, i]),
                    _fmt(cum_node[row, i]),
                    _fmt(trace.radius[row, i]),
                    int(trace.comm[row, i]),
                ])
    if trace.rewards is not None:
        with path.with_suffix(".rewards.csv").open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "node", "reward"])
            for row in range(trace.horizon):
                for i in range(trace.n_nodes):
                    w.writerow([row + 1, i, _fmt(trace.rewards[row, i])])
    return path


def read_trace(path: Path, policy: str | None = None, topology: str | None = None, seed: int | None = None) -> RegretTrace:
    """Rebuild a trace from its CSV; metadata defaults to what the filename encodes."""
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != TRACE_HEADER:
            raise ValueError(f"{path}: unexpected header {header}")
        rows = list(reader)
    if not rows:
        raise ValueError(f"{path}: empty trace")
    T = max(int(r[0]) for r in rows)
    N = max(int(r[1]) for r in rows) + 1
    arms = np.zeros((T, N), dtype=np.int64)
    opt = np.zeros((T, N), dtype=np.int64)
    regret = np.zeros((T, N))
    radius = np.zeros((T, N))
    comm = np.zeros((T, N), dtype=np.int64)
    for r in rows:
        t, i = int(r[0]) - 1, int(r[1])
        arms[t, i] = int(r[2])
        opt[t, i] = int(r[3])
        regret[t, i] = float(r[4])
        radius[t, i] = float(r[6])
        comm[t, i] = int(r[7])
    meta = _parse_trace_name(path.name)
    return RegretTrace(
        policy or meta.get("policy", "unknown"),
        topology or meta.get("topology", ""),
        seed if seed is not None else int(meta.get("seed", 0)),
        arms,
        opt,
        regret,
        radius,
        comm,
    )


def _parse_trace_name(name: str) -> dict:
    stem = name[: -len(".csv")] if name.endswith(".csv") else name
    parts = stem.split("_")
    if len(parts) >= 4 and parts[0] == "trace" and parts[-1].startswith("seed"):
        return {"policy": parts[1], "topology": "_".join(parts[2:-1]), "seed": parts[-1][4:]}
    return {}


def write_curve(trace_or_cum, path: Path) -> Path:
    curve = time_average_curve(trace_or_cum)
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "avg_regret"])
        for t, v in curve:
            w.writerow([int(t), _fmt(v)])
    return Path(path)


# sweep


@dataclass
class CellResult:
    policy: str
    topology: str
    n_nodes: int
    horizon: int
    traces: list[RegretTrace] = field(default_factory=list)
    error: str = ""

    @property
    def ok(self) -> bool:
        return not self.error

    def summary_row(self) -> dict:
        row = {
            "policy": self.policy,
            "topology": self.topology,
            "n_nodes": self.n_nodes,
            "horizon": self.horizon,
            "n_seeds": len(self.traces),
            "status": "ok" if self.ok else "failed",
            "error": self.error,
        }
        if self.traces:
            finals = np.array([tr.final_regret for tr in self.traces])
            per_node = finals / (self.n_nodes * self.horizon)
            row.update(
                mean_regret_per_node_round=_fmt(per_node.mean()),
                std_regret_per_node_round=_fmt(per_node.std(ddof=1) if len(per_node) > 1 else 0.0),
                mean_final_regret=_fmt(finals.mean()),
                std_final_regret=_fmt(finals.std(ddof=1) if len(finals) > 1 else 0.0),
                mean_radius=_fmt(mean_radius(self.traces)),
                wall_ms_per_round=_fmt(1000 * np.mean([tr.wall_seconds for tr in self.traces]) / self.horizon),
                comm_total=int(sum(int(tr.comm.sum()) for tr in self.traces)),
            )
        return {k: row.get(k, "") for k in SUMMARY_HEADER}


def _run_cell(cfg: RunConfig, check: bool) -> CellResult:
    cell = CellResult(cfg.policy, cfg.topology, cfg.instance.dims.n_nodes, cfg.horizon)
    try:
        cfg.validate()
        for seed in cfg.seeds:
            weight_dump = None
            if cfg.dump_weights and cfg.output_dir is not None:
                weight_dump = Path(cfg.output_dir) / f"weights_{cfg.policy}_{cfg.topology}_seed{seed}.csv"
            rep = run_replication(cfg, seed, check=check, weight_dump=weight_dump, keep_records=False)
            cell.traces.append(rep.trace)
            if cfg.output_dir is not None:
                write_trace(rep.trace, Path(cfg.output_dir) / trace_filename(rep.trace))
    except Exception as exc:  # a failing cell must not stop the sweep
        log.exception("cell %s/%s failed", cfg.policy, cfg.topology)
        cell.error = f"{type(exc).__name__}: {exc}"
    return cell


def expand_grid(
    base: RunConfig, policies: Sequence[str], topologies: Sequence[str], collapse: bool = False
) -> list[RunConfig]:
    """Cross product of policies and topologies.

    Disjoint and Shared LinUCB ignore the topology. With ``collapse`` they get
    one cell each, labelled ``1xN`` and ``N``; otherwise they are repeated
    under every topology label.
    """
    n = base.instance.dims.n_nodes
    cells = []
    seen = set()
    for policy, topo in itertools.product(policies, topologies):
        if collapse and policy == "disjoint":
            topo = f"1x{n}"
        elif collapse and policy == "shared":
            topo = str(n)
        if (policy, topo) in seen:
            continue
        seen.add((policy, topo))
        cells.append(replace(base, policy=policy, topology=topo))
    return cells


def sweep(cells: Sequence[RunConfig], jobs: int = 1, check: bool = True) -> list[CellResult]:
    if not cells:
        raise ConfigError("sweep grid is empty")
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_run_cell, cells, itertools.repeat(check)))
    return [_run_cell(c, check) for c in cells]


def write_summary(results: Sequence[CellResult], path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=SUMMARY_HEADER)
        w.writeheader()
        for cell in results:
            w.writerow(cell.summary_row())
    return path


# config files


def _coerce_params(data: dict) -> PolicyParams:
    known = {f.name for f in fields(PolicyParams)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"params: unknown fields {sorted(unknown)}")
    return PolicyParams(**data)


def load_config(path: Path | None = None, overrides: dict | None = None) -> RunConfig:
    """Build a RunConfig from a YAML file, then apply ``overrides``.

    Recognised top-level keys: ``preset``, ``instance`` (field overrides, or a
    full instance when no preset is given), ``policy``, ``topology``,
    ``horizon``, ``seeds``, ``params``, ``output_dir``, ``dump_weights``.
    """
    data: dict = {}
    if path is not None:
        with Path(path).open() as fh:
            data = yaml.safe_load(fh) or {}
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: top level must be a mapping")
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key == "params":
            data.setdefault("params", {}).update(value)
        elif key == "instance":
            data.setdefault("instance", {}).update(value)
        else:
            data[key] = value

    unknown = set(data) - {"preset", "instance", "policy", "topology", "horizon", "seeds", "params", "output_dir", "dump_weights"}
    if unknown:
        raise ConfigError(f"unknown config sections: {sorted(unknown)}")

    preset_name = data.get("preset")
    inst_over = dict(data.get("instance") or {})
    if preset_name is not None or "dims" not in inst_over:
        base = preset(preset_name or "default")
        n_nodes = inst_over.pop("n_nodes", None)
        if n_nodes is not None:
            base = base.with_nodes(int(n_nodes))
        if "dims" in inst_over:
            base = InstanceConfig.from_dict({**base.to_dict(), "dims": inst_over.pop("dims")})
        instance = InstanceConfig.from_dict({**base.to_dict(), **inst_over})
    else:
        instance = InstanceConfig.from_dict(inst_over)

    seeds = data.get("seeds", list(range(10)))
    if isinstance(seeds, str):
        seeds = [int(s) for s in seeds.split(",") if s.strip()]
    output_dir = data.get("output_dir") or os.environ.get(OUTPUT_ENV)
    cfg = RunConfig(
        instance=instance,
        policy=data.get("policy", "netlinucb"),
        topology=str(data.get("topology", "full")),
        horizon=int(data.get("horizon", DEFAULT_HORIZON)),
        seeds=[int(s) for s in seeds],
        params=_coerce_params(data.get("params") or {}),
        output_dir=Path(output_dir) if output_dir else None,
        preset=preset_name,
        dump_weights=bool(data.get("dump_weights", False)),
    )
    return cfg


def config_to_dict(cfg: RunConfig) -> dict:
    return {
        "instance": cfg.instance.to_dict(),
        "policy": cfg.policy,
        "topology": cfg.topology,
        "horizon": cfg.horizon,
        "seeds": list(cfg.seeds),
        "params": asdict(cfg.params),
        "output_dir": str(cfg.output_dir) if cfg.output_dir else None,
        "dump_weights": cfg.dump_weights,
    }
