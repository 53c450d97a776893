"""Command line entry point: train the fixture net and export everything."""

import argparse
import json
import os
import sys

from .data import EVAL_COUNT, export_batches, split_arrays
from .export import export, export_probe_batch
from .train import accuracy, train_tiny

PROBE_COUNT = 32


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="udfc-export",
        description="Train a small digits CNN and export it with eval data.")
    parser.add_argument("--epochs", type=int, default=10)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out", required=True)
    args = parser.parse_args(argv)
    if args.epochs < 0:
        parser.error(f"--epochs must be >= 0, got {args.epochs}")

    model = train_tiny(args.epochs, args.seed)
    export(model, os.path.join(args.out, "model"))
    export_batches("eval", EVAL_COUNT, os.path.join(args.out, "eval-1000"))
    export_probe_batch(model, PROBE_COUNT, os.path.join(args.out, "probe-32"))

    data, labels = split_arrays("eval")
    summary = {
        "epochs": args.epochs,
        "seed": args.seed,
        "eval_top1": round(accuracy(model, data, labels), 4),
        "out": args.out,
    }
    json.dump(summary, sys.stdout, indent=2, sort_keys=True)
    sys.stdout.write("\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())
