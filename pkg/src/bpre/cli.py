"""Command-line entry point: ``bpre <experiment> --config <file.json> --seed <u64> --out <dir>``."""

from __future__ import annotations

import argparse
import json
import sys

from .errors import BpreError, BudgetExceeded
from .experiments import EXPERIMENTS, ExperimentConfig, run_experiment


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bpre", description=(
        "Run a reproducible experiment on branching processes in random environments."))
    p.add_argument("experiment", choices=EXPERIMENTS)
    p.add_argument("--config", help="JSON file with model and sizes (see docs/config.md)")
    p.add_argument("--seed", type=int, required=True, help="unsigned 64-bit seed")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--threads", type=int, default=1, help="worker threads (results do not change)")
    p.add_argument("--svg", action="store_true", help="also write SVG plots")
    return p


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    try:
        options = {}
        if args.config:
            with open(args.config) as fh:
                options = json.load(fh)
            if not isinstance(options, dict):
                raise BpreError("config must be a JSON object")
        cfg = ExperimentConfig.build(args.experiment, args.seed, args.out, options,
                                     args.threads, args.svg)
        manifest = run_experiment(cfg)
    except BudgetExceeded as exc:
        print(f"bpre: {exc} (partial manifest written to {args.out}/manifest.json)",
              file=sys.stderr)
        return 3
    except (BpreError, OSError, json.JSONDecodeError) as exc:
        print(f"bpre: {exc}", file=sys.stderr)
        return 2
    for name, v in manifest.verdicts.items():
        print(f"{'PASS' if v['passed'] else 'FAIL'}  {name}")
    print(f"{args.experiment}: {'passed' if manifest.passed else 'failed'} "
          f"({manifest.wall_time:.1f} s, {len(manifest.files)} files)")
    return 0 if manifest.passed else 1


if __name__ == "__main__":
    sys.exit(main())
