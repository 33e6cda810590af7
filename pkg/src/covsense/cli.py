"""Command-line entry point: ``covsense <subcommand> [--config F] [--seed N] ...``."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .channel import ConfigurationError
from .experiments import CSV_COLUMNS, ExperimentConfig, rows_to_csv, run_experiment, run_single, write_results

SUBCOMMANDS = {
    "energy": ("energy", "captured-energy curves of R and its permuted form per cluster count", "energy"),
    "sweep-t": ("sweep_t", "eta / NMSE versus number of snapshots T", "result"),
    "sweep-s": ("sweep_s", "eta / NMSE versus number of training beams S", "result"),
    "sweep-spread": ("sweep_spread", "eta / NMSE versus azimuth angular spread", "result"),
    "flops": ("flops", "flop-count model of both estimators versus T", "flops"),
    "estimate": ("estimate", "single GCG-Alt run; writes R_hat (.npy), trace (.jsonl) and one CSV row",
                 "result"),
}

COLUMN_NOTES = """\
CSV columns
  result rows (sweep-t, sweep-s, sweep-spread, estimate):
    {result}
    kind is "trial" for per-trial rows and "mean" for aggregates; eta_se and
    nmse_se are standard errors over successful trials; n_failed counts trials
    that raised and were excluded from the means. --timing appends wall_time
    (seconds), which makes files differ between otherwise identical runs.
  energy rows:
    {energy}
  flops rows:
    {flops}
A JSON sidecar with the same stem echoes the full configuration and seed.
""".format(**{k: ", ".join(v) for k, v in CSV_COLUMNS.items()})


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="covsense", description="Channel-covariance estimation experiments.",
        epilog=COLUMN_NOTES, formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text, _) in SUBCOMMANDS.items():
        p = sub.add_parser(name, help=help_text, description=help_text, epilog=COLUMN_NOTES,
                           formatter_class=argparse.RawDescriptionHelpFormatter)
        p.add_argument("--config", type=Path, help="JSON file with ExperimentConfig fields")
        p.add_argument("--seed", type=int, help="master seed (unsigned 64-bit)")
        p.add_argument("--out", type=Path, help="output CSV path (default: stdout)")
        p.add_argument("--trials", type=int, help="Monte-Carlo trials per sweep point")
        p.add_argument("--threads", type=int, default=1, help="worker threads (results do not depend on it)")
        p.add_argument("--timing", action="store_true", help="add a wall_time column to result rows")
    return parser


def load_config(args) -> ExperimentConfig:
    mode = SUBCOMMANDS[args.command][0]
    data = {}
    if args.config is not None:
        try:
            data = json.loads(args.config.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigurationError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigurationError("config file must hold a JSON object")
    data["mode"] = mode
    if args.seed is not None:
        if not 0 <= args.seed < 2**64:
            raise ConfigurationError("seed must be an unsigned 64-bit integer")
        data["seed"] = args.seed
    if args.trials is not None:
        data["trials"] = args.trials
    if args.out is not None:
        data["out"] = str(args.out)
    if args.threads < 1:
        raise ConfigurationError("threads must be >= 1")
    try:
        return ExperimentConfig.from_dict(data)
    except TypeError as exc:
        raise ConfigurationError(str(exc)) from exc


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args)
    except ConfigurationError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    if cfg.mode == "estimate":
        R_hat, _, trace, row = run_single(cfg)
        rows = [row]
        if cfg.out:
            out = Path(cfg.out)
            out.parent.mkdir(parents=True, exist_ok=True)
            np.save(out.with_suffix(".npy"), R_hat)
            out.with_suffix(".jsonl").write_text(trace.to_jsonl() + "\n")
    else:
        rows = run_experiment(cfg, threads=args.threads)
    if cfg.out:
        write_results(rows, cfg, cfg.out, args.timing)
    else:
        sys.stdout.write(rows_to_csv(rows, args.timing))
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
