"""Command line entry point: ``netucb run|sweep|report|presets``."""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from collections import defaultdict
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import harness
from .core import ConfigError
from .environment import preset, preset_names

log = logging.getLogger("netucb")


def _seed_list(text: str) -> list[int]:
    try:
        seeds = [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"seeds must be comma-separated integers, got {text!r}")
    if not seeds:
        raise argparse.ArgumentTypeError("need at least one seed")
    return seeds


def _common_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="YAML run configuration")
    p.add_argument("--preset", choices=preset_names())
    p.add_argument("--n-nodes", type=int, help="override the number of nodes of the preset")
    p.add_argument("--horizon", "-T", type=int)
    p.add_argument("--seed-list", type=_seed_list, help="comma-separated seeds, e.g. 0,1,2")
    p.add_argument("--output-dir", type=Path, help=f"defaults to ${harness.OUTPUT_ENV}")
    p.add_argument("--alpha-ridge", type=float)
    p.add_argument("--rho", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--eta-sgd", type=float)
    p.add_argument("--alpha0", type=float)
    p.add_argument("--consensus-feedback", action="store_true", default=None)
    p.add_argument("--no-check", action="store_true", help="skip per-round invariant assertions")


def _overrides(args: argparse.Namespace) -> dict:
    params = {
        name: getattr(args, name)
        for name in ("alpha_ridge", "rho", "beta", "eta_sgd", "alpha0", "consensus_feedback")
        if getattr(args, name) is not None
    }
    out = {
        "preset": args.preset,
        "horizon": args.horizon,
        "seeds": args.seed_list,
        "output_dir": str(args.output_dir) if args.output_dir else None,
        "params": params or None,
        "instance": {"n_nodes": args.n_nodes} if args.n_nodes else None,
    }
    for key in ("policy", "topology"):
        if getattr(args, key, None) is not None:
            out[key] = getattr(args, key)
    if getattr(args, "dump_weights", False):
        out["dump_weights"] = True
    return out


def _report_cells(results: list[harness.CellResult], out_dir: Path | None) -> int:
    writer = csv.DictWriter(sys.stdout, fieldnames=harness.SUMMARY_HEADER, lineterminator="\n")
    writer.writeheader()
    for cell in results:
        writer.writerow(cell.summary_row())
    if out_dir is not None:
        path = harness.write_summary(results, out_dir / "summary.csv")
        log.info("summary written to %s", path)
    failed = [c for c in results if not c.ok]
    for cell in failed:
        print(f"FAILED {cell.policy}/{cell.topology}: {cell.error}", file=sys.stderr)
    return 1 if failed else 0


def cmd_run(args: argparse.Namespace) -> int:
    cfg = harness.load_config(args.config, _overrides(args))
    cfg.validate()
    return _report_cells(harness.sweep([cfg], check=not args.no_check), cfg.output_dir)


def cmd_sweep(args: argparse.Namespace) -> int:
    base = harness.load_config(args.config, _overrides(args))
    cells = harness.expand_grid(base, args.policies.split(","), args.topologies.split(","), collapse=not args.no_collapse)
    results = harness.sweep(cells, jobs=args.jobs, check=not args.no_check)
    return _report_cells(results, base.output_dir)


def cmd_report(args: argparse.Namespace) -> int:
    paths = sorted(p for p in Path(args.trace_dir).glob("trace_*.csv") if not p.name.endswith(".rewards.csv"))
    if not paths:
        print(f"no trace CSVs under {args.trace_dir}", file=sys.stderr)
        return 1
    groups: dict[tuple[str, str], list[harness.RegretTrace]] = defaultdict(list)
    for path in paths:
        tr = harness.read_trace(path)
        groups[(tr.policy, tr.topology)].append(tr)
    disjoint = next((v for (pol, _), v in groups.items() if pol == "disjoint"), None)

    writer = csv.writer(sys.stdout, lineterminator="\n")
    writer.writerow(["policy", "topology", "n_seeds", "mean_final_regret", "mean_regret_per_node_round",
                     "mean_radius", "radius_reduction_pct", "comm_total"])
    for (pol, topo), traces in sorted(groups.items()):
        finals = np.array([t.final_regret for t in traces])
        per_node = [n_avg for _, n_avg in harness.per_node_average(traces)]
        reduction = harness.radius_reduction(traces, disjoint) if disjoint else float("nan")
        writer.writerow([pol, topo, len(traces), f"{finals.mean():.6g}", f"{np.mean(per_node):.6g}",
                         f"{harness.mean_radius(traces):.6g}", f"{reduction:.4g}",
                         sum(int(t.comm.sum()) for t in traces)])
        if args.curves:
            for tr in traces:
                harness.write_curve(tr, Path(args.trace_dir) / f"curve_{pol}_{topo}_seed{tr.seed}.csv")
    return 0


def cmd_presets(args: argparse.Namespace) -> int:
    for name in preset_names():
        cfg = preset(name)
        d = cfg.dims
        print(f"{name:18s} N={d.n_nodes} K={d.n_arms} d_c={d.d_common} d_s={d.d_specific[0]} "
              f"sigma={cfg.noise_sigma} gap={cfg.reward_gap_scale} outlier_p={cfg.outlier_probability}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="netucb", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one policy/topology cell over the seeds")
    _common_args(run)
    run.add_argument("--policy", choices=harness.POLICIES)
    run.add_argument("--topology", help="SIZExCOUNT cliques, e.g. 4x3 (three cliques of four), 6x2, 12, 1x12")
    run.add_argument("--dump-weights", action="store_true")
    run.set_defaults(func=cmd_run)

    sw = sub.add_parser("sweep", help="run a policy x topology grid")
    _common_args(sw)
    sw.add_argument("--policies", default=",".join(harness.POLICIES))
    sw.add_argument("--topologies", default="4x3,6x2,12")
    sw.add_argument("--jobs", "-j", type=int, default=1)
    sw.add_argument("--no-collapse", action="store_true",
                    help="repeat disjoint and shared under every topology label")
    sw.set_defaults(func=cmd_sweep)

    rep = sub.add_parser("report", help="recompute metrics from trace CSVs")
    rep.add_argument("trace_dir", type=Path)
    rep.add_argument("--curves", action="store_true", help="also write R(t)/t curves next to the traces")
    rep.set_defaults(func=cmd_report)

    pr = sub.add_parser("presets", help="list instance presets")
    pr.set_defaults(func=cmd_presets)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
