"""Command line entry point: ``cqsrs <subcommand> --config FILE [--seed N] [--out PATH]``."""
from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .runner import (
    ConfigError,
    csv_text,
    dump_json,
    emit,
    load_config,
    metadata_path,
    optimize_point,
    protocol_metadata,
    sweep_fisher,
    sweep_negativity,
    with_seed,
)
from .protocol import run_protocol

log = logging.getLogger("cqsrs")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cqsrs", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_ in (
        ("protocol", "run the full protocol once and write a JSON transcript"),
        ("sweep-negativity", "tripartite negativity vs T, uncontrolled and controlled"),
        ("sweep-fisher", "QFI and CFI vs T, uncontrolled and controlled"),
        ("optimize", "optimise a single (T, objective) pulse and report it"),
    ):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", required=True, help="JSON config file")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--out", default=None, help="output path (stdout if omitted)")
        if name in ("sweep-negativity", "optimize"):
            p.add_argument("--objective", choices=("qfi", "cfi"), default="qfi")
        if name.startswith("sweep"):
            p.add_argument("--workers", type=int, default=1, help="parallel sweep processes")
    return parser


def _write(text: str, out: str | None) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


def run(args: argparse.Namespace) -> None:
    if args.command == "protocol":
        config = load_config(args.config, "protocol")
        if args.seed is not None:
            config = replace(config, seed=args.seed)
        result = run_protocol(config)
        doc = {**protocol_metadata(config), **result.transcript()}
        _write(dump_json(doc), args.out)
        return

    spec = load_config(args.config, "scenario")
    if args.seed is not None:
        with_seed(spec, args.seed)
    if args.command == "optimize":
        t = spec.T if spec.T is not None else spec.t_grid[-1]
        report = optimize_point(spec, t, args.objective)
        doc = {
            "command": "optimize", "scenario": spec.tag, "method": report.method,
            "objective": args.objective, "T": t, "baseline": report.baseline,
            "best": report.best_value, "evaluations": report.evaluations,
            "history": report.history, "amplitudes": report.best_pulse.amplitudes,
            "config": spec.resolved,
        }
        _write(dump_json(doc), args.out)
        return

    if args.command == "sweep-fisher":
        output = sweep_fisher(spec, args.workers)
    else:
        output = sweep_negativity(spec, args.objective, args.workers)
    if args.out is None:
        sys.stdout.write(csv_text(output))
    else:
        emit(output, args.out)
        log.info("wrote %s and %s", args.out, metadata_path(args.out))


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        run(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
