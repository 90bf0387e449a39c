"""Command-line orchestrator.

Subcommands: extract, synth, scope, route, chains, eval, pipeline. Each
stage is independently runnable given its input files. Exit codes: 0 on
success, 1 for validation errors, 2 for I/O errors, 3 when the remote
generation backend is exhausted.
"""

from __future__ import annotations

import argparse
import logging
import sys

from .chains import BackendError
from .config import load_config
from .errors import InputError, ValidationError
from . import pipeline

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_IO = 2
EXIT_BACKEND = 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="toursynth",
        description="Synthetic tourist itinerary pipeline",
    )
    parser.add_argument("-c", "--config", default="toursynth.toml", help="pipeline config file")
    parser.add_argument("--seed", type=int, help="override the global seed")
    parser.add_argument("--output-dir", help="override the output directory")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("extract", help="Stage 0: cohort extraction and monthly priors")
    p_synth = sub.add_parser("synth", help="synthesize the base population")
    p_synth.add_argument("-n", "--n-agents", type=int, help="population size override")
    sub.add_parser("scope", help="Stage 1: trip-scope model and sampling")
    sub.add_parser("route", help="Stage 2: ward itineraries")
    p_chains = sub.add_parser("chains", help="Stage 3: activity chains")
    p_chains.add_argument("--backend", choices=["fallback", "remote"], help="backend override")
    sub.add_parser("eval", help="evaluation reports")
    p_all = sub.add_parser("pipeline", help="run every stage in order")
    p_all.add_argument("-n", "--n-agents", type=int, help="population size override")
    p_all.add_argument("--backend", choices=["fallback", "remote"], help="backend override")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg.seed = args.seed
        if args.output_dir:
            cfg.output_dir = args.output_dir
        if getattr(args, "backend", None):
            cfg.stage3.backend = args.backend
            cfg.stage3.__post_init__()

        if args.command == "extract":
            outputs = pipeline.run_extract(cfg)
        elif args.command == "synth":
            outputs = pipeline.run_synth(cfg, args.n_agents)
        elif args.command == "scope":
            outputs = pipeline.run_scope(cfg)
        elif args.command == "route":
            outputs = pipeline.run_route(cfg)
        elif args.command == "chains":
            outputs = pipeline.run_chains(cfg)
        elif args.command == "eval":
            outputs = pipeline.run_eval(cfg)
        else:
            outputs = pipeline.run_pipeline(cfg, args.n_agents)
    except BackendError as exc:
        print(f"error: remote backend exhausted: {exc}", file=sys.stderr)
        return EXIT_BACKEND
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION

    for name, path in outputs.items():
        print(f"{name}: {path}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
