"""``survey`` command line: run, suite and export."""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from collections import Counter
from pathlib import Path

from .harness import (METHODS, ConfigError, MissionConfig, MissionError, export_checkpoint,
                      parse_config, parse_config_text, run_mission, run_suite)


def _load(path) -> MissionConfig:
    return parse_config(path) if path else parse_config_text("", "<defaults>")


def _cmd_run(args) -> int:
    cfg = _load(args.config)
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.method is not None:
        changes["method"] = args.method
    if args.out is not None:
        changes["output_dir"] = args.out
    cfg = dataclasses.replace(cfg, **changes)
    res = run_mission(cfg)
    tags = Counter(res.tags())
    print(f"run {res.run_id}: {res.distance:.1f} m, {res.n_pings} pings, "
          f"final RMSE {res.curve[-1].rmse:.4f} m, plans {dict(tags)}")
    print(f"outputs in {Path(cfg.output_dir).resolve()}")
    return 0


def _cmd_suite(args) -> int:
    base = _load(args.config)
    methods = args.methods.split(",") if args.methods else list(METHODS)
    for m in methods:
        if m not in METHODS:
            raise ConfigError(f"unknown method '{m}'")
    cfgs = [dataclasses.replace(base, method=m) for m in methods]
    out = args.out or base.output_dir
    res = run_suite(cfgs, args.seeds, out, base_seed=base.seed)
    for method, p in res.parity.items():
        print(f"{method}: median distance to parity {p['median_reach']:.1f} m "
              f"(lawn-mower {p['lawnmower_length']:.1f} m), "
              f"terminal RMSE ratio {p['median_terminal_ratio']:.3f}")
    for method, seed, err in res.failures:
        print(f"FAILED {method} seed {seed}: {err}", file=sys.stderr)
    print(f"summary in {Path(out).resolve() / 'summary.csv'}")
    return 1 if res.failures else 0


def _cmd_export(args) -> int:
    extent = None
    if args.extent:
        extent = tuple(float(v) for v in args.extent.split(","))
        if len(extent) != 4:
            raise ConfigError("--extent needs xmin,ymin,xmax,ymax")
    paths = export_checkpoint(args.checkpoint, args.res, extent, args.out)
    for p in paths:
        print(p)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="survey", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run one mission")
    r.add_argument("--config")
    r.add_argument("--seed", type=int)
    r.add_argument("--method", choices=METHODS)
    r.add_argument("--out")
    r.set_defaults(func=_cmd_run)

    s = sub.add_parser("suite", help="run every method over several seeds")
    s.add_argument("--config")
    s.add_argument("--seeds", type=int, default=10)
    s.add_argument("--methods", help="comma-separated subset of methods")
    s.add_argument("--out")
    s.set_defaults(func=_cmd_suite)

    e = sub.add_parser("export", help="render posterior mean/std images from a checkpoint")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--res", type=float, required=True)
    e.add_argument("--extent", help="xmin,ymin,xmax,ymax (default: inducing-point hull)")
    e.add_argument("--out", help="output prefix")
    e.set_defaults(func=_cmd_export)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    try:
        return args.func(args)
    except (ConfigError, MissionError, OSError, ValueError) as exc:
        print(f"survey: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
