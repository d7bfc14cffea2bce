#!/usr/bin/env python3
"""Talab CLI - audits, dataset generation and probe training.

Thin wrapper over ``talab.api``: parses arguments, prints tables and maps
library errors to exit status 1.
"""

import logging
import sys
from argparse import ArgumentParser, Namespace, RawDescriptionHelpFormatter
from collections.abc import Sequence
from pathlib import Path

import talab.api
from talab.depthlog import COMPONENTS
from talab.errors import TalabError
from talab.exporters.csv import format_table, rows_to_csv
from talab.exporters.json import to_json, write_dataset, write_monoid
from talab.exporters.yaml import to_yaml

LOG_LEVELS = (logging.WARNING, logging.INFO, logging.DEBUG)


def _emit(rows: list[dict[str, object]], columns: Sequence[str], fmt: str) -> None:
    if fmt == "json":
        print(to_json(rows))
    elif fmt == "yaml":
        print(to_yaml(rows), end="")
    elif fmt == "csv":
        print(rows_to_csv(rows, columns), end="")
    else:
        print(format_table(rows, columns), end="")


def create_argument_parser() -> ArgumentParser:
    """Create and configure argument parser with subcommands."""
    parser = ArgumentParser(
        prog="talab",
        description="Talab - tensor attention laboratory",
        formatter_class=RawDescriptionHelpFormatter,
        epilog="""
Examples:
  talab fp-audit --p 3                                   # exhaustive 3-bit float check
  talab depth-audit --component rope-layer               # traced vs proved depth
  talab swap-check --trials 1000 --seed 7                # exact swap-rule trials
  talab gen --task closure --monoid s5 --r 3 --len 32 --count 100 --seed 0 --out s5.jsonl
  talab train --config run.yaml                          # writes metrics.csv, weights.json
  talab eval --model run/weights.json --data s5.jsonl --backend floatp --precision 16
        """,
    )
    parser.add_argument(
        "-v", "--verbose", action="count", default=0, help="More logging (-v info, -vv debug)"
    )
    subparsers = parser.add_subparsers(dest="command", help="Available commands")

    fp_parser = subparsers.add_parser("fp-audit", help="Compare p-bit float ops with the rounding oracle")
    fp_parser.add_argument("--p", type=int, default=3, help="Precision (default: 3)")
    fp_parser.add_argument("--format", choices=["text", "csv", "yaml", "json"], default="text")

    depth_parser = subparsers.add_parser("depth-audit", help="Trace circuit depth of attention components")
    depth_parser.add_argument("--component", choices=COMPONENTS, help="Single component (default: all)")
    depth_parser.add_argument("--m", type=int, help="Layer count for tf stacks (default: 1, 2, 3)")
    depth_parser.add_argument("--format", choices=["text", "csv", "yaml", "json"], default="text")

    swap_parser = subparsers.add_parser("swap-check", help="Exact swap-rule trials")
    swap_parser.add_argument("--trials", type=int, default=1000)
    swap_parser.add_argument("--seed", type=int, default=0)

    gen_parser = subparsers.add_parser(
        "gen",
        help="Generate a labeled closure or membership dataset",
        formatter_class=RawDescriptionHelpFormatter,
        epilog="""
Examples:
  talab gen --task closure --monoid z2 --r 2 --len 16 --count 512 --seed 0 --out z2.jsonl
  talab gen --task membership --monoid u1 --len 4 --count 200 --seed 1 --out u1.jsonl
  talab gen --task closure --monoid table.json --accept 0,2 --count 50 --seed 0 --out t.jsonl
        """,
    )
    gen_parser.add_argument("--task", choices=["closure", "membership"], required=True)
    gen_parser.add_argument("--monoid", default="z2", help="z2, s3, s5, u1 or a JSON table file")
    gen_parser.add_argument("--r", type=int, default=2, help="Chunk length bound (closure)")
    gen_parser.add_argument("--len", dest="length", type=int, default=8, help="Maximum string length")
    gen_parser.add_argument("--min-len", dest="min_length", type=int, default=1)
    gen_parser.add_argument("--accept", help="Accepted elements F, e.g. 0,2 (default: identity)")
    gen_parser.add_argument("--pairs", help="Accepted linked pairs, e.g. 1:0,3:0 (membership)")
    gen_parser.add_argument("--raw-pairs", action="store_true", help="Do not close pairs under conjugacy")
    gen_parser.add_argument("--balance", type=float, default=0.5)
    gen_parser.add_argument("--tolerance", type=float, default=0.1)
    gen_parser.add_argument("--count", type=int, required=True)
    gen_parser.add_argument("--seed", type=int, default=0)
    gen_parser.add_argument("--out", required=True, help="Output JSON-lines file")
    gen_parser.add_argument("--monoid-out", help="Also write the monoid table and letter map as JSON")

    train_parser = subparsers.add_parser("train", help="Train a probe model")
    train_parser.add_argument("--config", required=True, help="YAML or JSON train config")

    eval_parser = subparsers.add_parser("eval", help="Score saved weights on a dataset")
    eval_parser.add_argument("--model", required=True, help="weights.json from train")
    eval_parser.add_argument("--data", required=True, help="JSON-lines dataset")
    eval_parser.add_argument("--backend", choices=["real64", "floatp", "exact"], default="real64")
    eval_parser.add_argument("--precision", type=int, help="Bits for the floatp backend")

    grad_parser = subparsers.add_parser("grad-check", help="Analytic vs finite-difference gradients")
    grad_parser.add_argument("--config", required=True, help="YAML or JSON file with a model section")
    grad_parser.add_argument("--h", type=float, default=1e-5)
    grad_parser.add_argument("--tol", type=float, default=1e-5)

    return parser


def handle_fp_audit_command(args: Namespace) -> int:
    """Handle the fp-audit subcommand."""
    report = talab.api.run_fp_audit(args.p)
    _emit(report.summary_rows(), ("operation", "pairs", "mismatches", "drift"), args.format)
    if report.passed:
        print(f"✅ p={args.p}: all operations agree with the oracle", file=sys.stderr)
        return 0
    print(f"❌ p={args.p}: mismatches found", file=sys.stderr)
    return 1


def handle_depth_audit_command(args: Namespace) -> int:
    """Handle the depth-audit subcommand."""
    rows = talab.api.run_depth_audit(args.component, args.m)
    _emit([row.as_dict() for row in rows], ("component", "traced", "proved", "stated", "match"), args.format)
    return 0 if all(row.match for row in rows) else 1


def handle_swap_check_command(args: Namespace) -> int:
    """Handle the swap-check subcommand."""
    report = talab.api.run_swap_check(args.trials, args.seed)
    if report.passed:
        print(f"✅ {report.trials} swap-rule trials held exactly")
        return 0
    print(f"❌ {len(report.failures)} of {report.trials} trials failed: {report.failures[:10]}")
    return 1


def handle_gen_command(args: Namespace) -> int:
    """Handle the gen subcommand."""
    examples = talab.api.generate(
        args.task,
        args.monoid,
        args.count,
        args.seed,
        r=args.r,
        length=args.length,
        min_length=args.min_length,
        accept=args.accept,
        pairs=args.pairs,
        saturate=not args.raw_pairs,
        balance=args.balance,
        tolerance=args.tolerance,
    )
    write_dataset(examples, Path(args.out))
    if args.monoid_out:
        write_monoid(talab.api.resolve_monoid(args.monoid), Path(args.monoid_out))
    positive = sum(example.label for example in examples)
    print(f"✅ Wrote {len(examples)} {args.task} examples ({positive} positive) -> {args.out}")
    return 0


def handle_train_command(args: Namespace) -> int:
    """Handle the train subcommand."""
    metrics = talab.api.run_train(Path(args.config))
    summary = f"train accuracy {metrics.final_train_acc:.3f}"
    if metrics.final_eval_acc is not None:
        summary += f", eval accuracy {metrics.final_eval_acc:.3f}"
    print(f"✅ Trained {len(metrics.rows)} steps: {summary}")
    return 0


def handle_eval_command(args: Namespace) -> int:
    """Handle the eval subcommand."""
    accuracy = talab.api.run_eval(Path(args.model), Path(args.data), args.backend, args.precision)
    print(f"accuracy {accuracy:.4f}")
    return 0


def handle_grad_check_command(args: Namespace) -> int:
    """Handle the grad-check subcommand."""
    report = talab.api.run_grad_check(Path(args.config), args.h, args.tol)
    print(format_table(report.rows(), ("parameter", "max_rel_error", "pass")), end="")
    if report.passed:
        print(f"✅ max relative error {report.max_error:.3e} <= {args.tol}")
        return 0
    print(f"❌ max relative error {report.max_error:.3e} > {args.tol}")
    return 1


HANDLERS = {
    "fp-audit": handle_fp_audit_command,
    "depth-audit": handle_depth_audit_command,
    "swap-check": handle_swap_check_command,
    "gen": handle_gen_command,
    "train": handle_train_command,
    "eval": handle_eval_command,
    "grad-check": handle_grad_check_command,
}


def main(argv: Sequence[str] | None = None) -> None:
    """Main entry point."""
    parser = create_argument_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=LOG_LEVELS[min(args.verbose, len(LOG_LEVELS) - 1)],
        format="%(levelname)s %(name)s: %(message)s",
    )

    handler = HANDLERS.get(args.command)
    if handler is None:
        # No subcommand provided, show help
        parser.print_help()
        sys.exit(1)
    try:
        status = handler(args)
    except TalabError as talab_error:
        print(f"❌ Error: {talab_error.message}", file=sys.stderr)
        sys.exit(1)
    except OSError as os_error:
        print(f"❌ Error: {os_error}", file=sys.stderr)
        sys.exit(1)
    sys.exit(status)


if __name__ == "__main__":
    main()
