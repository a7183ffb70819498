"""Command line entry point: ``sweep``, ``single`` and ``pulse-dump``.

Exit codes: 0 success, 1 configuration error, 2 numerical failure.
"""
from __future__ import annotations

import argparse
import dataclasses
import sys

from .harness import (ALGORITHMS, ConfigError, ExperimentConfig, SweepFailure, emit_outputs,
                      pulse_dump, run_single, run_sweep)


def _algos(text: str) -> tuple[str, ...]:
    return tuple(a.strip() for a in text.split(",") if a.strip())


def _common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="JSON config (or a previous manifest.json)")
    p.add_argument("--seed", type=int, help="master seed")
    p.add_argument("--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pulsedelay", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    sweep = sub.add_parser("sweep", help="Monte-Carlo SNR sweep, writes CSV tables")
    _common(sweep)
    sweep.add_argument("--trials", type=int, help="trials per SNR point")
    sweep.add_argument("--snr", type=float, nargs="+", help="SNR points in dB")
    sweep.add_argument("--algos", type=_algos, help=f"comma list from {','.join(ALGORITHMS)}")
    sweep.add_argument("--out", help="output directory")
    sweep.add_argument("--force", action="store_true", help="overwrite existing outputs")
    sweep.add_argument("--workers", type=int, help="worker processes")

    single = sub.add_parser("single", help="run one trial and print diagnostics")
    _common(single)
    single.add_argument("--snr", type=float, default=40.0)
    single.add_argument("--trial", type=int, default=0)
    single.add_argument("--algos", type=_algos)

    dump = sub.add_parser("pulse-dump", help="write pulse samples and one dictionary column")
    _common(dump)
    dump.add_argument("--delay", type=float, default=20.0, help="delay of the dumped column (ns)")
    dump.add_argument("--out", help="output directory")
    dump.add_argument("--force", action="store_true")
    return parser


def _resolve(args) -> ExperimentConfig:
    cfg = ExperimentConfig.from_json(args.config) if args.config else ExperimentConfig()
    changes = {}
    if args.seed is not None:
        changes["master_seed"] = args.seed
    if getattr(args, "trials", None) is not None:
        changes["num_trials"] = args.trials
    if getattr(args, "snr", None) is not None and args.command == "sweep":
        changes["snr_points_db"] = tuple(args.snr)
    if getattr(args, "algos", None):
        changes["algorithms"] = args.algos
    if getattr(args, "out", None):
        changes["out_dir"] = args.out
    if getattr(args, "workers", None) is not None:
        changes["workers"] = args.workers
    try:
        return dataclasses.replace(cfg, **changes).validate()
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _resolve(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1

    if args.command == "single":
        try:
            run_single(cfg, args.snr, args.trial, verbose=args.verbose)
        except SweepFailure as exc:
            print(f"numerical failure: {exc}", file=sys.stderr)
            return 2
        return 0

    if args.command == "pulse-dump":
        try:
            paths = pulse_dump(cfg, args.out or cfg.out_dir, args.delay, force=args.force)
        except FileExistsError as exc:
            print(exc, file=sys.stderr)
            return 1
        for p in paths:
            print(p)
        return 0

    progress = sys.stderr if args.verbose else None
    try:
        result = run_sweep(cfg, progress=progress)
    except SweepFailure as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        try:
            emit_outputs(None, cfg, cfg.out_dir, force=args.force, failure=exc, records=exc.records)
        except FileExistsError as exc2:
            print(exc2, file=sys.stderr)
        return 2
    try:
        paths = emit_outputs(result.report, cfg, cfg.out_dir, force=args.force,
                             wall_clock_s=round(result.wall_clock_s, 3), records=result.records)
    except FileExistsError as exc:
        print(exc, file=sys.stderr)
        return 1
    for r in result.report.rows:
        print(f"snr={r.snr_db:g} {r.algorithm:>4}: P(L)={r.prob_correct_count:.4f} "
              f"MAE(L)={r.count_mae:.4f} NRMSE={r.csi_nrmse_mean:.4g} "
              f"MAE(dtau)={r.delay_diff_mae_ns:.3f} ns (excluded {r.delay_diff_excluded_trials})")
    for p in paths:
        print(p)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
