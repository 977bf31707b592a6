"""Experiment orchestration: run grids, gap curves, output files.

One experiment expands a config into (batch-size pair) x (seed) runs, solves
each, evaluates the restricted gap and projected residual of the ergodic
average at every checkpoint, and aggregates across seeds per batch size.
Runs are independent; with ``workers > 1`` they execute in separate
processes.  Emission order, file contents and all randomness depend only on
the config, never on scheduling, so reruns reproduce the CSVs byte for byte.
"""

from __future__ import annotations

import csv
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import ExperimentConfig, InstanceConfig, build_game
from .diagnostics import (
    AssumptionReport,
    fit_rate,
    probe_assumptions,
    projected_residual,
    restricted_gap,
    standard_probes,
)
from .games import GameDefinition, JointPoint, save_instance
from .solver import RunHistory, StepSchedule, run

__all__ = [
    "RunResult",
    "ResultBundle",
    "execute_run",
    "experiment_start",
    "run_experiment",
    "write_bundle",
]

INSTANCE_DIR = "instance"
GAP_CURVE_FILE = "gap_curve.csv"
AGGREGATE_FILE = "aggregate.csv"
REPORT_FILE = "report.json"
CONFIG_COPY = "config.json"
MANIFEST_FILE = "manifest.json"
GAP_FIGURE = "gap_curves.svg"


def _fmt(value: float) -> str:
    # shortest round-trip decimal; parsing it back restores the exact double
    return repr(float(value))


@dataclass(eq=False)
class RunResult:
    """One solved (seed, batch-size) cell with its diagnostic curve."""

    seed: int
    b1: int
    b2: int
    history: RunHistory
    gap_curve: list[tuple[int, float, float]]  # (T, gap, residual) per checkpoint

    @property
    def batch_size(self) -> int:
        # single label for reports; the stock experiments use b1 == b2
        return self.b1


@dataclass(eq=False)
class ResultBundle:
    """Everything an experiment produced, before any file is written."""

    config: ExperimentConfig
    results: list[RunResult]
    failures: list[dict] = field(default_factory=list)
    assumptions: AssumptionReport | None = None

    def ok(self) -> bool:
        return not self.failures

    def aggregates(self) -> dict[int, list[tuple[int, float, float, float, float]]]:
        """Per batch size: (T, gap mean, gap spread, residual mean, residual spread)."""
        grouped: dict[int, dict[int, list[tuple[float, float]]]] = {}
        for res in self.results:
            per_t = grouped.setdefault(res.batch_size, {})
            for T, gap, residual in res.gap_curve:
                per_t.setdefault(T, []).append((gap, residual))
        out: dict[int, list[tuple[int, float, float, float, float]]] = {}
        for b, per_t in sorted(grouped.items()):
            rows = []
            for T in sorted(per_t):
                gaps = np.array([g for g, _ in per_t[T]])
                residuals = np.array([r for _, r in per_t[T]])
                spread = float(gaps.std(ddof=1)) if gaps.size > 1 else 0.0
                rspread = float(residuals.std(ddof=1)) if residuals.size > 1 else 0.0
                rows.append((T, float(gaps.mean()), spread, float(residuals.mean()), rspread))
            out[b] = rows
        return out

    def mean_curve(self, batch_size: int) -> list[tuple[int, float]]:
        rows = self.aggregates().get(batch_size)
        if rows is None:
            raise ValueError(f"no results for batch size {batch_size}")
        return [(T, gap_mean) for T, gap_mean, _, _, _ in rows]


def experiment_start(game: GameDefinition, rng: np.random.Generator) -> JointPoint:
    """Generic-position start used by the experiment pipeline.

    The solver's library default (box centres, uniform weights) sits in a
    flat region of the CVaR instances where nothing interesting happens, so
    experiments instead start from strategies drawn uniformly over their
    boxes.  Each CVaR threshold starts a few box-widths *below* zero: while
    the hinge is active the threshold moves (1/(1-alpha) - 1) times faster
    than while it is inactive, so the start must be deep enough that the
    opening strategy transient (hinge fully active) cannot pump the
    threshold past its optimum into the slow inactive-side crawl, yet
    shallow enough that climbing back consumes a negligible share of the
    schedule's weighted mass.
    """
    x = game.lower + (game.upper - game.lower) * rng.uniform(size=game.x_dim)
    if game.family == "cvar":
        depth = 4.5 * game.params["bounds"]
        for block in game.x_slices:
            aux = block.stop - 1  # threshold is the last coordinate of a block
            x[aux] = max(-depth, game.lower[aux])
    p = np.full(game.p_dim, 1.0 / game.m)
    return JointPoint(x=x, p=p)


def _solve_cell(
    instance: InstanceConfig,
    iterations: int,
    b1: int,
    b2: int,
    schedule: StepSchedule,
    seed: int,
    checkpoints: str | tuple[int, ...],
) -> tuple[RunHistory, JointPoint]:
    """Solve one grid cell; reconstructs the game so it can run in a worker."""
    game = build_game(instance)
    z0 = experiment_start(game, np.random.default_rng([instance.seed, seed]))
    history = run(
        game,
        iterations=iterations,
        b1=b1,
        b2=b2,
        schedule=schedule,
        seed=seed,
        z0=z0,
        checkpoints=checkpoints,
    )
    return history, z0


def _history_probe_points(history: RunHistory, z0: JointPoint) -> list[JointPoint]:
    # Checkpoint averages trace a smooth path from z0 towards the solution
    # and act as approach-path certificates for each other.  Raw mid-run
    # iterates are deliberately excluded: early iterates bounce around the
    # box corners, and scoring a converged average against another run's
    # transient produces large, sign-unstable values (the operator is not
    # verified monotone) that swamp the trend the curve is meant to show.
    points = [cp.average for cp in history.checkpoints]
    points.append(history.final)
    points.append(z0)
    return points


def _evaluate_curve(game, history: RunHistory, probes) -> list[tuple[int, float, float]]:
    curve = []
    gaps = []
    residuals = []
    for cp in history.checkpoints:
        gap = restricted_gap(game, cp.average, probes).value
        residual = projected_residual(game, cp.average)
        curve.append((cp.t, gap, residual))
        gaps.append(gap)
        residuals.append(residual)
    history.metrics["gap"] = gaps
    history.metrics["residual"] = residuals
    return curve


def execute_run(
    instance: InstanceConfig,
    iterations: int,
    b1: int,
    b2: int,
    schedule: StepSchedule,
    seed: int,
    checkpoints: str | tuple[int, ...] = "geometric",
) -> RunResult:
    """Solve one grid cell and evaluate its gap curve in isolation.

    The probe set is seeded from (instance seed, run seed, batch sizes) and
    contains every checkpoint iterate and average of this run, which keeps
    the evaluated gaps nonnegative along the curve.  Gap values from
    different calls use different probe sets and are not comparable with
    each other; ``run_experiment`` evaluates all of its runs against one
    shared probe set instead.
    """
    game = build_game(instance)
    history, z0 = _solve_cell(instance, iterations, b1, b2, schedule, seed, checkpoints)
    probes = standard_probes(
        game,
        seed=np.random.default_rng([instance.seed, seed, b1, b2]),
        extra=_history_probe_points(history, z0),
    )
    curve = _evaluate_curve(game, history, probes)
    return RunResult(seed=seed, b1=b1, b2=b2, history=history, gap_curve=curve)


def _grid(config: ExperimentConfig) -> list[tuple[int, int, int]]:
    cells = []
    for b1, b2 in zip(config.solver.b1, config.solver.b2):
        for seed in config.solver.seeds:
            cells.append((b1, b2, seed))
    cells.sort()
    return cells


def run_experiment(config: ExperimentConfig, workers: int = 1) -> ResultBundle:
    """Run the whole grid of a config, sequentially or across processes.

    A run that dies with a floating-point failure is recorded under
    ``failures`` and the rest of the grid still completes; any other error
    propagates.  All runs are scored against one shared probe set (the
    standard draw plus every run's checkpoints), so gap values are
    comparable across seeds and batch sizes.  Results come back ordered by
    (batch size, seed) no matter how execution interleaved.
    """
    if workers < 1:
        raise ValueError(f"workers must be >= 1, got {workers}")
    schedule = config.step_schedule()
    cells = _grid(config)
    args = [
        (config.instance, config.solver.iterations, b1, b2, schedule, seed,
         config.solver.checkpoints)
        for b1, b2, seed in cells
    ]
    outcomes: list[tuple[RunHistory, JointPoint] | Exception] = []
    if workers == 1:
        for cell_args in args:
            try:
                outcomes.append(_solve_cell(*cell_args))
            except FloatingPointError as exc:
                outcomes.append(exc)
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_solve_cell, *cell_args) for cell_args in args]
            for future in futures:
                exc = future.exception()
                if exc is None:
                    outcomes.append(future.result())
                elif isinstance(exc, FloatingPointError):
                    outcomes.append(exc)
                else:
                    raise exc

    game = build_game(config.instance)
    extra: list[JointPoint] = []
    for outcome in outcomes:
        if not isinstance(outcome, Exception):
            extra += _history_probe_points(*outcome)
    probes = standard_probes(
        game, seed=np.random.default_rng([config.instance.seed]), extra=extra
    )

    results = []
    failures = []
    for (b1, b2, seed), outcome in zip(cells, outcomes):
        if isinstance(outcome, Exception):
            failures.append(
                {"seed": seed, "b1": b1, "b2": b2, "error": str(outcome)}
            )
        else:
            history, _ = outcome
            curve = _evaluate_curve(game, history, probes)
            results.append(
                RunResult(seed=seed, b1=b1, b2=b2, history=history, gap_curve=curve)
            )
    assumptions = probe_assumptions(
        build_game(config.instance), samples=200, seed=config.instance.seed
    )
    return ResultBundle(
        config=config, results=results, failures=failures, assumptions=assumptions
    )


# ---------------------------------------------------------------------------
# file emission
# ---------------------------------------------------------------------------


def _entropy(p: np.ndarray) -> float:
    positive = p[p > 0]
    return float(-np.sum(positive * np.log(positive)))


def _write_gap_curve(bundle: ResultBundle, path: Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["batch_size", "seed", "T", "gap", "residual"])
        for res in bundle.results:
            for T, gap, residual in res.gap_curve:
                writer.writerow([res.batch_size, res.seed, T, _fmt(gap), _fmt(residual)])


def _write_aggregate(bundle: ResultBundle, path: Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["batch_size", "T", "gap_mean", "gap_std", "residual_mean", "residual_std"]
        )
        for b, rows in bundle.aggregates().items():
            for T, gmean, gstd, rmean, rstd in rows:
                writer.writerow([b, T, _fmt(gmean), _fmt(gstd), _fmt(rmean), _fmt(rstd)])


def _write_history(res: RunResult, path: Path) -> None:
    final = res.history.final
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "lambda", "x_norm", "p_entropy", "dist_to_final"])
        for cp in res.history.checkpoints:
            dist = np.sqrt(
                np.sum((cp.iterate.x - final.x) ** 2) + np.sum((cp.iterate.p - final.p) ** 2)
            )
            writer.writerow(
                [
                    cp.t,
                    _fmt(cp.step_size),
                    _fmt(np.linalg.norm(cp.iterate.x)),
                    _fmt(_entropy(cp.iterate.p)),
                    _fmt(dist),
                ]
            )


def _write_final(res: RunResult, game_dims: dict, path: Path) -> None:
    np.savez(
        path,
        x=res.history.final.x,
        p=res.history.final.p,
        n=game_dims["n"],
        m=game_dims["m"],
        block_dims=np.array(game_dims["block_dims"]),
        seed=res.seed,
        b1=res.b1,
        b2=res.b2,
        iterations=res.history.iterations,
    )


def _report_dict(bundle: ResultBundle) -> dict:
    smallest = min(res.batch_size for res in bundle.results) if bundle.results else None
    curve = bundle.mean_curve(smallest) if smallest is not None else []
    slope = None
    if len(curve) >= 5:
        try:
            slope = fit_rate(curve).slope
        except ValueError:
            slope = None
    report = {
        "gap_curve": [[T, value] for T, value in curve],
        "gap_curve_batch_size": smallest,
        "slope": slope,
        "seeds": list(bundle.config.solver.seeds),
    }
    if bundle.assumptions is not None:
        probe = bundle.assumptions.to_json()
        for key in ("monotonicity_min", "nu1_sq", "nu2_sq", "Mx_sq", "Mp_sq"):
            report[key] = probe[key]
        report["assumption_probe"] = probe
    return report


def write_bundle(bundle: ResultBundle, outdir: str | Path | None = None) -> dict:
    """Write all experiment artifacts and return the manifest.

    Emits the resolved config copy, the instance dump, the per-run history
    CSVs and final-iterate checkpoints, the joint and aggregate gap-curve
    CSVs, the assumption/rate report, figures (if enabled) and last the
    manifest listing every file written.  Figures are rendered from the CSV
    rows, not from solver state.
    """
    from .config import save_config  # local import keeps module load light

    config = bundle.config
    outdir = Path(config.output.directory if outdir is None else outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    files: list[str] = []

    save_config(config, outdir / CONFIG_COPY)
    files.append(CONFIG_COPY)

    game = build_game(config.instance)
    save_instance(game, outdir / INSTANCE_DIR)
    files += [f"{INSTANCE_DIR}/instance.json", f"{INSTANCE_DIR}/scenarios.csv",
              f"{INSTANCE_DIR}/c_vector.csv"]
    game_dims = {"n": game.n, "m": game.m, "block_dims": game.block_dims}

    gap_rows: list[dict] = []
    runs_index = []
    for res in bundle.results:
        entry = {
            "seed": res.seed,
            "b1": res.b1,
            "b2": res.b2,
            "batch_size": res.batch_size,
            "iterations": res.history.iterations,
        }
        final_name = f"final_{res.seed}_{res.batch_size}.npz"
        _write_final(res, game_dims, outdir / final_name)
        files.append(final_name)
        entry["final_checkpoint"] = final_name
        if config.output.emit_csv:
            history_name = f"history_{res.seed}_{res.batch_size}.csv"
            _write_history(res, outdir / history_name)
            files.append(history_name)
            entry["history_csv"] = history_name
        runs_index.append(entry)
        for T, gap, residual in res.gap_curve:
            gap_rows.append(
                {
                    "batch_size": str(res.batch_size),
                    "seed": str(res.seed),
                    "T": str(T),
                    "gap": _fmt(gap),
                    "residual": _fmt(residual),
                }
            )

    if config.output.emit_csv and bundle.results:
        _write_gap_curve(bundle, outdir / GAP_CURVE_FILE)
        _write_aggregate(bundle, outdir / AGGREGATE_FILE)
        files += [GAP_CURVE_FILE, AGGREGATE_FILE]
        with open(outdir / GAP_CURVE_FILE, "r", newline="", encoding="utf-8") as fh:
            gap_rows = list(csv.DictReader(fh))

    with open(outdir / REPORT_FILE, "w", encoding="utf-8") as fh:
        json.dump(_report_dict(bundle), fh, indent=2, sort_keys=True)
        fh.write("\n")
    files.append(REPORT_FILE)

    figure_name = None
    if config.output.emit_svg and gap_rows:
        from . import plots

        figure_name = GAP_FIGURE
        plots.plot_gap_curves(gap_rows, outdir / figure_name)
        files.append(figure_name)
        for res, entry in zip(bundle.results, runs_index):
            if "history_csv" not in entry:
                continue
            with open(outdir / entry["history_csv"], "r", newline="", encoding="utf-8") as fh:
                history_rows = list(csv.DictReader(fh))
            svg_name = entry["history_csv"].replace(".csv", ".svg")
            plots.plot_history(
                history_rows,
                outdir / svg_name,
                label=f"seed {res.seed}, batch size {res.batch_size}",
            )
            files.append(svg_name)
            entry["history_svg"] = svg_name

    manifest = {
        "tool": "drnash",
        "config": CONFIG_COPY,
        "figure": figure_name,
        "runs": runs_index,
        "failures": bundle.failures,
        "files": sorted(files),
    }
    with open(outdir / MANIFEST_FILE, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest
