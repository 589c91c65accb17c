"""Command line entry point."""

from __future__ import annotations

import argparse
import sys

from .errors import CCXError, SchemaError
from .pipeline import EXIT, STAGES, PipelineConfig, Run

PLOT_EXIT = 20
CONVERT_EXIT = 21


def _config(args) -> PipelineConfig:
    cfg = PipelineConfig.load(args.config)
    if args.horizon is not None:
        cfg.horizon = args.horizon
    if args.epsilon is not None:
        cfg.epsilon = args.epsilon
    if args.seed is not None:
        cfg.seed = args.seed
    if args.budget is not None:
        cfg.budget = args.budget
    return cfg


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ccx", description="Coarsely convex space workbench")
    sub = p.add_subparsers(dest="command", required=True)
    for name in STAGES + ("run",):
        s = sub.add_parser(name, help="run the pipeline through " + ("all stages" if name == "run" else name))
        s.add_argument("config", help="pipeline config JSON")
        s.add_argument("--out", help="output directory (default: config 'out')")
        s.add_argument("--horizon", type=float)
        s.add_argument("--epsilon", type=float)
        s.add_argument("--seed", type=int)
        s.add_argument("--budget", type=int, help="tuple sample budget for fitting")
        s.add_argument("--expect-violation", action="append", default=[], metavar="MODULE",
                       help="treat audit violations in this module as expected")
    s = sub.add_parser("plot", help="render an artifact table to SVG")
    s.add_argument("artifact")
    s.add_argument("--kind", required=True, choices=["boundary-circle", "bound-curve", "homotopy-heatmap"])
    s.add_argument("--out", required=True)
    s = sub.add_parser("convert", help="convert between JSON artifacts and CSV dumps")
    s.add_argument("src")
    s.add_argument("dst")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "plot":
        from .plotting import plot
        try:
            plot(args.artifact, args.kind, args.out)
        except (CCXError, OSError) as e:
            print(f"ccx plot: {e}", file=sys.stderr)
            return PLOT_EXIT
        return 0
    if args.command == "convert":
        from .io import convert
        try:
            convert(args.src, args.dst)
        except (CCXError, OSError) as e:
            print(f"ccx convert: {e}", file=sys.stderr)
            return CONVERT_EXIT
        return 0
    try:
        cfg = _config(args)
    except CCXError as e:
        print(f"ccx: {e}", file=sys.stderr)
        return EXIT["config"]
    until = "functions" if args.command == "run" else args.command
    run = Run(cfg, args.out, args.expect_violation)
    code = run.execute(until)
    stages = run.summary["stages"]
    for name in STAGES:
        if name in stages:
            print(f"{name}: {'ok' if stages[name].get('ok') else 'violation'}")
    if code:
        print(f"ccx: stage {run.summary.get('failed_stage')} failed: {run.summary.get('message')}",
              file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
