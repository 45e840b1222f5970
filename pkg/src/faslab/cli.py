"""``faslab`` command line.

Flags may also come from the environment (``FASLAB_SPEC``, ``FASLAB_SEED``,
``FASLAB_WORKERS``, ``FASLAB_OUT``, ``FASLAB_PAPER_SCALE``); command-line
flags win over the environment, which wins over the spec file.  Human
summaries go to stdout, data to files under ``--out``; failures print one
JSON object on stderr and exit nonzero.
"""
from __future__ import annotations

import argparse
import json
import os
import sys

from .experiments import FULL_SIZE, ExperimentSpec, SpecError, run

EXIT_SPEC = 2
EXIT_IO = 3


def _env_flag(name: str) -> bool:
    return os.environ.get(name, "").strip().lower() in ("1", "true", "yes", "on")


def _u64(text: str) -> int:
    value = int(text)
    if not 0 <= value < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def _positive(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be at least 1")
    return value


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise SpecError(message)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--spec", help="experiment spec JSON file")
    common.add_argument("--seed", type=_u64, help="experiment seed (overrides the spec)")
    common.add_argument("--workers", type=_positive, help="worker processes for trials (default 1)")
    common.add_argument("--out", help="output directory (overrides the spec)")
    common.add_argument("--paper-scale", action="store_true", default=None,
                        help=f"use the {FULL_SIZE}x{FULL_SIZE} grid instead of the desk default")
    common.add_argument("--trials", type=_positive, help="number of trials (overrides the spec)")

    parser = _Parser(prog="faslab", description="Fluid-antenna channel estimation and spatial equalization lab.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("synth", parents=[common], help="draw channels and write grids")
    p = sub.add_parser("estimate", parents=[common], help="recover grids from sampled observations")
    p.add_argument("--method", action="append", help="dc-gomp, omp, gomp or ls (repeatable)")
    p = sub.add_parser("equalize", parents=[common], help="select antenna positions")
    p.add_argument("--method", action="append", help="bb, grsip, equal or random:N (repeatable)")
    p = sub.add_parser("ber", parents=[common], help="QPSK/MRC bit error rate per selection")
    p.add_argument("--method", action="append", help="bb, grsip, equal or random:N (repeatable)")
    p = sub.add_parser("sweep", parents=[common], help="run a figure recipe")
    p.add_argument("--fig", type=int, default=3, help="figure recipe, 3 to 10 (default 3)")
    sub.add_parser("diagnose", parents=[common], help="leakage, coherence and error-bound constants")
    return parser


def resolve(args) -> tuple[ExperimentSpec, str, int]:
    """Merge spec file, environment and flags into (spec, output dir, workers)."""
    spec_path = args.spec or os.environ.get("FASLAB_SPEC")
    spec = ExperimentSpec.load(spec_path) if spec_path else ExperimentSpec()
    seed = args.seed if args.seed is not None else os.environ.get("FASLAB_SEED")
    if seed is not None:
        spec = spec.replace(seed=_u64(str(seed)))
    full = args.paper_scale if args.paper_scale is not None else _env_flag("FASLAB_PAPER_SCALE")
    if full:
        spec = spec.with_size(FULL_SIZE)
    if args.trials is not None:
        spec = spec.replace(trials=args.trials)
    if getattr(args, "method", None):
        spec = spec.replace(method=list(args.method))
    out = args.out or os.environ.get("FASLAB_OUT") or spec.output_dir
    workers = args.workers if args.workers is not None else int(os.environ.get("FASLAB_WORKERS", "1"))
    if workers < 1:
        raise SpecError("workers must be at least 1")
    return spec, out, workers


def _fail(kind: str, message: str, code: int) -> int:
    sys.stderr.write(json.dumps({"error": kind, "message": message}) + "\n")
    return code


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        spec, out, workers = resolve(args)
        return run(spec, args.command, out=out, workers=workers, fig=getattr(args, "fig", 3))
    except SpecError as exc:
        return _fail("invalid_spec", str(exc), EXIT_SPEC)
    except (ValueError, TypeError) as exc:
        return _fail("invalid_config", str(exc), EXIT_SPEC)
    except OSError as exc:
        return _fail("io_error", str(exc), EXIT_IO)


if __name__ == "__main__":
    sys.exit(main())
