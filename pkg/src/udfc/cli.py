"""Command-line entry point.

Subcommands: compress (prune + quantize a saved model), eval (feature-map
drift and top-1 accuracy), gen-random (seeded fixture networks).  Exit
codes: 0 ok, 2 usage, 3 validation, 4 I/O.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .harness import evaluate_accuracy, matching_taps_mse, random_inputs
from .generate import random_network
from .model import UdfcError
from .pipeline import CompressionConfig, compress
from .serialize import load_dataset, load_model, save_model


def _ratio(text: str) -> float:
    try:
        val = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}")
    if not 0.0 <= val < 1.0:
        raise argparse.ArgumentTypeError(f"prune ratio {val} outside [0, 1)")
    return val


def _wbits(text: str) -> int:
    try:
        val = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}")
    if val != 32 and not 2 <= val <= 8:
        raise argparse.ArgumentTypeError(
            f"wbits {val} unsupported: use 2..8, or 32 for full precision")
    return val


def _nonneg(text: str) -> float:
    try:
        val = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}")
    if val < 0:
        raise argparse.ArgumentTypeError(f"{val} must be nonnegative")
    return val


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="udfc",
        description="Data-free CNN compression: joint channel pruning and "
                    "weight quantization with closed-form reconstruction.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("compress", help="compress a saved model")
    p.add_argument("--model", required=True, help="input model directory")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--prune-ratio", type=_ratio, default=0.0)
    p.add_argument("--criterion", choices=("l1", "l2"), default="l1")
    p.add_argument("--wbits", type=_wbits, default=32)
    p.add_argument("--alpha1", type=_nonneg, default=0.01)
    p.add_argument("--alpha2", type=_nonneg, default=0.008)
    p.add_argument("--ridge", type=_nonneg, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_compress)

    p = sub.add_parser("eval", help="measure drift against a baseline model "
                                    "and/or accuracy on a dataset")
    p.add_argument("--model", required=True)
    p.add_argument("--baseline", default=None, help="reference model directory")
    p.add_argument("--data", default=None, help="dataset directory")
    p.add_argument("--trials", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("gen-random", help="emit a seeded random fixture model")
    p.add_argument("--spec", required=True,
                   help="topology string, e.g. c16-c32-mp-c64-gap-fc10")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--input-shape", default="3,32,32",
                   help="C,H,W of the network input")
    p.set_defaults(func=cmd_gen_random)
    return parser


def cmd_compress(args) -> int:
    net = load_model(args.model)
    cfg = CompressionConfig(
        prune_ratio=args.prune_ratio, criterion=args.criterion,
        wbits=args.wbits, alpha1=args.alpha1, alpha2=args.alpha2,
        ridge=args.ridge, seed=args.seed)
    compressed, report = compress(net, cfg)
    save_model(compressed, args.out)
    report.write_json(os.path.join(args.out, "report.json"))
    report.write_csv(os.path.join(args.out, "report.csv"))
    t = report.totals
    print(f"size {t['orig_size_bytes']} -> {t['size_bytes']} bytes "
          f"({t['size_ratio']:.3f}x), flops {t['orig_flops']} -> {t['flops']} "
          f"({t['flops_ratio']:.3f}x), {report.elapsed_seconds:.3f}s")
    return 0


def cmd_eval(args) -> int:
    net = load_model(args.model)
    result = {"model": args.model, "trials": args.trials, "seed": args.seed}
    if args.baseline:
        ref = load_model(args.baseline)
        rng = np.random.default_rng(args.seed)
        inputs = random_inputs(net.input_shape, args.trials, rng)
        result["feature_mse"] = {
            str(k): v for k, v in matching_taps_mse(ref, net, inputs).items()}
        result["baseline"] = args.baseline
    if args.data:
        data, labels, _meta = load_dataset(args.data)
        result["top1"] = evaluate_accuracy(net, data, labels).top1
    print(json.dumps(result, indent=2, sort_keys=True))
    report_path = os.path.join(args.model, "report.json")
    if os.path.exists(report_path):
        with open(report_path) as f:
            report = json.load(f)
        report["eval"] = result
        with open(report_path, "w") as f:
            json.dump(report, f, indent=2, sort_keys=True)
            f.write("\n")
    return 0


def cmd_gen_random(args) -> int:
    try:
        shape = tuple(int(d) for d in args.input_shape.split(","))
    except ValueError:
        print(f"error: bad --input-shape {args.input_shape!r}", file=sys.stderr)
        return 2
    net = random_network(args.spec, args.seed, shape)
    save_model(net, args.out)
    print(f"wrote {args.out}")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code) if e.code else 0
    try:
        return args.func(args)
    except FileNotFoundError as e:
        print(f"error: {e}", file=sys.stderr)
        return 4
    except UdfcError as e:
        print(f"error: {e}", file=sys.stderr)
        return 3
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
