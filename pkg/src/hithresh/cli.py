"""Command-line entry point: ``hithresh <subcommand> [--config PATH] [--seed N] ...``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .config import default_config, describe, parse_config
from .errors import HiThreshError
from .experiments import MetricsReport, build_network, emit_curve, merge_seeds, run_experiment
from .sampling import SampleOracle, sample_batch

log = logging.getLogger("hithresh")

SUBCOMMANDS = {
    "landscape": "landscape-obo",
    "simul": "landscape-simul",
    "refine": "refine",
    "halfspaces": "halfspaces",
    "delta-scan": "delta-scan",
    "corrgraph": "corrgraph",
    "exp-ascent": "exp-ascent",
    "even": "even",
}


def _global_flags(p: argparse.ArgumentParser):
    p.add_argument("--config", type=Path, help="YAML experiment config")
    p.add_argument("--seed", type=int, help="master seed (overrides the config)")
    p.add_argument("--samples", type=int, help="sample count (overrides the config)")
    p.add_argument("--out", type=Path, help="output directory (overrides the config)")
    p.add_argument("--threads", type=int, help="worker threads (overrides the config)")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hithresh", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)
    g = sub.add_parser("gen", help="write a planted network and a sample dataset")
    _global_flags(g)
    g.add_argument("--scenario", default="landscape-obo", help="scenario whose network defaults to use")
    for name, scen in SUBCOMMANDS.items():
        sp = sub.add_parser(name, help=f"run the {scen} scenario")
        _global_flags(sp)
        sp.add_argument("--show-config", action="store_true", help="print the resolved config and exit")
    r = sub.add_parser("report", help="merge report.json files into a curve CSV")
    r.add_argument("reports", nargs="+", type=Path, help="report.json files or directories holding one")
    r.add_argument("--variable", required=True, help="dotted config key used as the x column")
    r.add_argument("--metric", default="max_angle_deg")
    r.add_argument("--out", type=Path, required=True, help="CSV file to write")
    r.add_argument("-v", "--verbose", action="store_true")
    return ap


def resolve_config(args, scenario: str):
    if args.config is not None:
        cfg = parse_config(args.config.read_text())
        if cfg.scenario != scenario:
            raise HiThreshError(f"config is for scenario {cfg.scenario!r}, subcommand runs {scenario!r}")
    else:
        cfg = default_config(scenario)
    for flag in ("seed", "samples", "threads"):
        val = getattr(args, flag)
        if val is not None:
            cfg = cfg.with_value(flag, val)
    if args.out is not None:
        cfg = cfg.with_value("out", str(args.out))
    return cfg


def _load_report(path: Path) -> MetricsReport:
    if path.is_dir():
        path = path / "report.json"
    return MetricsReport.from_json(path.read_text())


def cmd_report(args) -> int:
    per_seed: dict = {}
    for path in args.reports:
        rep = _load_report(path)
        cfg_path = (path if path.is_dir() else path.parent) / "config.yaml"
        x = parse_config(cfg_path.read_text()).get(args.variable)
        per_seed.setdefault(rep.seed, []).append((x, rep.metrics[args.metric]))
    points = merge_seeds(per_seed)
    emit_curve(points, args.out, args.variable, args.metric)
    print(f"wrote {len(points)} points to {args.out}")
    return 0


def cmd_gen(args) -> int:
    cfg = resolve_config(args, args.scenario)
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    net = build_network(cfg)
    net.save(out / "network.txt")
    data = sample_batch(SampleOracle(net, cfg.seed), int(cfg["samples"]))
    data.save(out / "data.bin")
    print(f"network (n={net.n}, d={net.d}, t={net.t:.4g}) and {len(data)} samples written to {out}")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "report":
            return cmd_report(args)
        if args.command == "gen":
            return cmd_gen(args)
        cfg = resolve_config(args, SUBCOMMANDS[args.command])
        if args.show_config:
            print(describe(cfg))
            return 0
        rep = run_experiment(cfg)
    except HiThreshError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(json.dumps({"scenario": rep.scenario, "seed": rep.seed, "config_hash": rep.config_hash,
                      "passed": rep.passed, **{k: v for k, v in rep.metrics.items()
                                               if not isinstance(v, (list, dict))}},
                     default=str, sort_keys=True))
    return 0 if rep.passed is not False else 1


if __name__ == "__main__":
    sys.exit(main())
