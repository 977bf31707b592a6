"""Command-line entry point.

Three subcommands: ``run`` executes a config end to end and writes the
artifact tree, ``selftest`` runs the release checks, and ``gap`` scores a
saved iterate checkpoint against a config's instance.

Exit codes: 0 success, 1 check or run failure, 2 config error (including
mismatched inputs), 3 I/O error.
"""

from __future__ import annotations

import argparse
import json
import sys
import zipfile
from pathlib import Path

import numpy as np

from .config import ConfigError, build_game, load_config
from .diagnostics import projected_residual, restricted_gap, standard_probes
from .experiments import run_experiment, write_bundle
from .games import JointPoint
from .selftest import selftest

__all__ = ["main"]


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="drnash",
        description="Solve distributionally robust Nash games and report convergence diagnostics.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--workers", type=int, default=1, metavar="N",
                        help="number of worker processes for run grids")
    common.add_argument("--out", metavar="DIR", help="output directory override")
    common.add_argument("--quiet", action="store_true", help="suppress progress output")

    p_run = sub.add_parser("run", parents=[common],
                           help="run all (seed x batch size) experiments of a config")
    p_run.add_argument("config", help="path to the experiment config (JSON)")

    sub.add_parser("selftest", parents=[common], help="run the release checks")

    p_gap = sub.add_parser("gap", parents=[common],
                           help="evaluate gap and residual of a saved checkpoint")
    p_gap.add_argument("checkpoint", help="final-iterate checkpoint (.npz) from a run")
    p_gap.add_argument("config", help="config whose instance the checkpoint belongs to")
    return parser


def cmd_run(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    if args.workers < 1:
        raise ConfigError(f"--workers: must be >= 1, got {args.workers}")
    bundle = run_experiment(config, workers=args.workers)
    manifest = write_bundle(bundle, outdir=args.out)
    outdir = Path(args.out if args.out is not None else config.output.directory)
    if not args.quiet:
        for entry in manifest["runs"]:
            print(
                f"run seed={entry['seed']} b1={entry['b1']} b2={entry['b2']}: "
                f"final checkpoint {entry['final_checkpoint']}"
            )
        for failure in manifest["failures"]:
            print(
                f"run seed={failure['seed']} b1={failure['b1']} b2={failure['b2']}: "
                f"FAILED ({failure['error']})"
            )
        print(f"wrote {len(manifest['files'])} files to {outdir}")
    if manifest["failures"]:
        print("experiment finished with failed runs", file=sys.stderr)
        return 1
    return 0


def cmd_selftest(args: argparse.Namespace) -> int:
    results = selftest(quiet=args.quiet, out=args.out)
    failed = [r.name for r in results if not r.passed]
    if failed:
        print(f"selftest failed: {', '.join(failed)}", file=sys.stderr)
        return 1
    return 0


def cmd_gap(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    game = build_game(config.instance)
    try:
        with np.load(args.checkpoint) as data:
            x = np.asarray(data["x"], dtype=float)
            p = np.asarray(data["p"], dtype=float)
    except (zipfile.BadZipFile, KeyError, ValueError) as exc:
        print(f"I/O error: cannot read checkpoint {args.checkpoint}: {exc}", file=sys.stderr)
        return 3
    if x.shape != (game.x_dim,) or p.shape != (game.p_dim,):
        print(
            f"shape error: checkpoint has x{x.shape}, p{p.shape}; the config's "
            f"instance expects x({game.x_dim},), p({game.p_dim},)",
            file=sys.stderr,
        )
        return 2
    z = JointPoint(x, p)
    if not game.contains(z, tol=1e-6):
        print("shape error: checkpoint is not feasible for the config's instance",
              file=sys.stderr)
        return 2
    probe_seed = [config.instance.seed, 271828]
    probes = standard_probes(game, seed=np.random.default_rng(probe_seed), extra=[z])
    estimate = restricted_gap(game, z, probes)
    residual = projected_residual(game, z)
    if not args.quiet:
        print(
            f"probe set: {estimate.n_points} points ({estimate.method}), "
            f"{estimate.n_selections} operator selections, seed {probe_seed}"
        )
    print(f"restricted gap: {estimate.value:.6e}")
    print(f"projected residual: {residual:.6e}")
    if args.out is not None:
        outdir = Path(args.out)
        outdir.mkdir(parents=True, exist_ok=True)
        report = {
            "checkpoint": str(args.checkpoint),
            "config": str(args.config),
            "gap": estimate.value,
            "residual": residual,
            "probe_points": estimate.n_points,
            "probe_selections": estimate.n_selections,
            "probe_method": estimate.method,
            "probe_seed": probe_seed,
        }
        with open(outdir / "gap_report.json", "w", encoding="utf-8") as fh:
            json.dump(report, fh, indent=2, sort_keys=True)
            fh.write("\n")
    return 0


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    handlers = {"run": cmd_run, "selftest": cmd_selftest, "gap": cmd_gap}
    try:
        return handlers[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
