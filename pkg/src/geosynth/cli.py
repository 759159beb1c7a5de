"""Command-line entry point.

    geosynth {cluster,synthesize,evaluate-risk,evaluate-utility,pipeline}
             --config FILE [--seed N] [--threads N] [--out DIR] [--set key=value ...]

Exit codes: 0 success, 1 input error, 2 internal error.
"""
from __future__ import annotations

import argparse
import logging
import sys

from . import pipeline

STAGES = {
    "cluster": lambda cfg: pipeline.stage_cluster(cfg),
    "synthesize": lambda cfg: pipeline.stage_synthesize(cfg),
    "evaluate-risk": lambda cfg: pipeline.stage_risk(cfg),
    "evaluate-utility": lambda cfg: pipeline.stage_utility(cfg),
    "pipeline": lambda cfg: pipeline.run_pipeline(cfg),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="geosynth", description="Partially synthetic geocoded microdata.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in STAGES:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="YAML pipeline config")
        p.add_argument("--seed", type=int, help="master seed")
        p.add_argument("--threads", type=int, help="worker processes for per-cluster synthesis")
        p.add_argument("--out", help="output directory")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config value, e.g. --set cart.cp=0.01")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = pipeline.load_config(args.config, args.set, seed=args.seed, threads=args.threads, output=args.out)
        if args.command == "cluster":
            pipeline.write_manifest(cfg)
        STAGES[args.command](cfg)
    except pipeline.INPUT_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except pipeline.PipelineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
