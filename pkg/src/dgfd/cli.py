"""Command-line entry point.

Subcommands: train, eval, ablate, sweep-lambda, gen-data, bank-inspect.
Failures exit nonzero and print one JSON object to stderr with ``error``
and ``type`` fields so callers can parse the cause without scraping logs.
"""

from __future__ import annotations

import argparse
import contextlib
import json
import logging
import sys
from dataclasses import replace


def _add_common(sub: argparse.ArgumentParser, manifest_required: bool = True) -> None:
    sub.add_argument("--manifest", required=manifest_required,
                     help="TOML manifest path (env DGFD_<TABLE>__<KEY> overrides keys)")
    sub.add_argument("--seed", type=int, default=None,
                     help="override the manifest seed list with this single seed")
    sub.add_argument("--out", default=None, help="override the manifest output directory")
    sub.add_argument("--deterministic", action="store_true",
                     help="pin BLAS thread pools to 1 for cross-machine reproducibility")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dgfd",
        description="Face-forgery detection with style diversification, "
                    "dynamic feature extraction, and domain-adversarial training.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    _add_common(sub.add_parser("train", help="train one run; writes CSVs + checkpoint"))
    p_eval = sub.add_parser("eval", help="evaluate a checkpoint on a dataset")
    p_eval.add_argument("--checkpoint", required=True, help="checkpoint .npz path")
    _add_common(p_eval)
    _add_common(sub.add_parser("ablate", help="train the 4-config module ladder"))
    p_sweep = sub.add_parser("sweep-lambda", help="train across adversarial weights")
    p_sweep.add_argument("--lambdas", default=None,
                         help="comma-separated grid, e.g. '0,0.1,0.5,1,2,5' (default grid)")
    _add_common(p_sweep)
    _add_common(sub.add_parser("gen-data", help="write the synthetic dataset as PNG + manifest"))
    p_bank = sub.add_parser("bank-inspect", help="print a JSON summary of a saved style bank")
    p_bank.add_argument("--bank", required=True, help="bank .npz path")
    p_bank.add_argument("--deterministic", action="store_true",
                        help="accepted for interface symmetry; inspection is always deterministic")
    return parser


def _load_manifest(args):
    from .config import load_manifest_file
    manifest = load_manifest_file(args.manifest)
    if args.seed is not None:
        manifest = replace(manifest, seeds=(int(args.seed),))
    if args.out is not None:
        manifest = replace(manifest, out_dir=str(args.out))
    return manifest


def _dispatch(args) -> int:
    from . import pipeline

    if args.command == "bank-inspect":
        summary = pipeline.run_bank_inspect(args.bank)
        print(json.dumps(summary, sort_keys=True, indent=2))
        return 0

    manifest = _load_manifest(args)
    pipeline.setup_run_logging(manifest.out_dir)
    if args.command == "train":
        result = pipeline.run_train(manifest)
        print(f"checkpoint: {result['checkpoint']}")
        print(f"training log: {result['train_csv']}")
        print(f"metrics: {result['metrics_csv']}")
    elif args.command == "eval":
        result = pipeline.run_eval(args.checkpoint, manifest)
        print(f"metrics: {result['metrics_csv']}")
    elif args.command == "ablate":
        result = pipeline.run_ablate(manifest)
        print(f"ablation table: {result['ablation_csv']}")
    elif args.command == "sweep-lambda":
        lambdas = None
        if args.lambdas is not None:
            lambdas = [float(v) for v in args.lambdas.split(",") if v.strip()]
        result = pipeline.run_sweep_lambda(manifest, lambdas=lambdas)
        print(f"sweep table: {result['sweep_csv']}")
        print(f"plot data: {result['plot']}")
    elif args.command == "gen-data":
        result = pipeline.run_gen_data(manifest)
        print(f"dataset manifest: {result['manifest_csv']}")
    else:  # pragma: no cover - argparse enforces the choices
        raise ValueError(f"unknown command {args.command}")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(stream=sys.stderr, level=logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    limits = contextlib.nullcontext()
    if getattr(args, "deterministic", False):
        from threadpoolctl import threadpool_limits
        limits = threadpool_limits(limits=1)
    try:
        with limits:
            return _dispatch(args)
    except Exception as exc:
        print(json.dumps({"error": str(exc), "type": type(exc).__name__}), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
