"""Acceptance gate: the seven advertised guarantees at their stated tolerances.

Each test exercises one end-to-end claim, records a single ``[PASS]``/``[FAIL]``
line through the shared recorder (replayed in the terminal summary), and then
asserts.  Criteria 3 and 4 interrogate the same five solved runs, so those
runs are produced once by a session fixture and the solve time is charged to
both budgets.
"""

from __future__ import annotations

import time
from itertools import combinations

import numpy as np
import pytest

from drnash.config import parse_config
from drnash.diagnostics import fit_rate, probe_assumptions, projected_residual
from drnash.games import JointPoint, build_cvar_game, build_quadratic_game
from drnash.operators import batch_g1, batch_g2, full_g1, full_g2
from drnash.projections import project_box, project_simplex
from drnash.selftest import project_simplex_enumerated, scalar_quadratic_game
from drnash.solver import ergodic_average, run
from drnash.experiments import run_experiment


def random_feasible(game, rng):
    x = rng.uniform(game.lower, game.upper)
    p = np.concatenate([rng.dirichlet(np.ones(game.m)) for _ in range(game.n)])
    return JointPoint(x, p)


def test_criterion_1_estimators_unbiased_by_enumeration(acceptance_record):
    # over every possible batch of sizes 1..3 from m=6 scenarios, the
    # mean of the mini-batch operator equals the full operator to 1e-12
    start = time.perf_counter()
    game = build_cvar_game(n=2, n_i=2, m=6, alpha=0.9, seed=20240805, bounds=3.0)
    rng = np.random.default_rng(0)
    worst = 0.0
    for _ in range(20):
        z = random_feasible(game, rng)
        g1 = full_g1(game, z)
        g2 = full_g2(game, z)
        for b in (1, 2, 3):
            batches = [np.array(s) for s in combinations(range(game.m), b)]
            mean1 = np.mean([batch_g1(game, z, s) for s in batches], axis=0)
            mean2 = np.mean([batch_g2(game, z, s) for s in batches], axis=0)
            worst = max(worst, float(np.abs(mean1 - g1).max()),
                        float(np.abs(mean2 - g2).max()))
    elapsed = time.perf_counter() - start
    passed = worst <= 1e-12 and elapsed < 5.0
    acceptance_record(
        1, passed,
        f"enumerated-batch mean vs full operator: max deviation {worst:.3e} "
        f"(tol 1e-12) over 20 points, b in (1,2,3), m=6; {elapsed:.2f}s (budget 5s)",
    )
    assert worst <= 1e-12
    assert elapsed < 5.0


def test_criterion_2_projections_match_oracles(acceptance_record):
    # simplex projection vs exhaustive active-set enumeration at 1000
    # random 5-dim points; box projection vs the clamp definition
    start = time.perf_counter()
    rng = np.random.default_rng(2)
    worst = 0.0
    for _ in range(1000):
        v = rng.uniform(-2.0, 2.0, size=5)
        worst = max(worst, float(np.abs(project_simplex(v) - project_simplex_enumerated(v)).max()))
    box_worst = 0.0
    for _ in range(200):
        dim = int(rng.integers(1, 8))
        lower = rng.uniform(-3.0, 0.0, size=dim)
        upper = lower + rng.uniform(0.0, 3.0, size=dim)
        v = rng.uniform(-5.0, 5.0, size=dim)
        clamp = np.minimum(np.maximum(v, lower), upper)
        box_worst = max(box_worst, float(np.abs(project_box(v, lower, upper) - clamp).max()))
    scalar = float(project_box(np.array([12.0]), np.array([-10.0]), np.array([10.0]))[0])
    elapsed = time.perf_counter() - start
    passed = worst <= 1e-9 and box_worst == 0.0 and scalar == 10.0 and elapsed < 5.0
    acceptance_record(
        2, passed,
        f"simplex vs enumeration oracle: max deviation {worst:.3e} (tol 1e-09) "
        f"over 1000 points; box vs clamp: {box_worst:.1e}; {elapsed:.2f}s (budget 5s)",
    )
    assert worst <= 1e-9
    assert box_worst == 0.0 and scalar == 10.0
    assert elapsed < 5.0


@pytest.fixture(scope="session")
def rate_bundle():
    """Five seeded runs on the rate-study instance, shared by criteria 3 and 4."""
    config = parse_config(
        {
            "instance": {"family": "cvar", "n": 3, "n_i": 4, "m": 20,
                         "alpha": 0.9, "bounds": 10.0, "seed": 11},
            "solver": {
                "iterations": 100_000,
                "b1": [5],
                "b2": [5],
                "seeds": [0, 1, 2, 3, 4],
                "checkpoints": [100, 316, 1000, 3162, 10_000, 31_623, 100_000],
            },
        }
    )
    start = time.perf_counter()
    bundle = run_experiment(config)
    return bundle, time.perf_counter() - start


def test_criterion_3_gap_decays_at_the_advertised_rate(acceptance_record, rate_bundle):
    # median restricted gap of the ergodic average over 5 seeds must fit a
    # log-log slope of at most -0.35 and be non-increasing along the grid
    bundle, solve_time = rate_bundle
    start = time.perf_counter()
    assert bundle.ok()
    ts = [T for T, _, _ in bundle.results[0].gap_curve]
    medians = [
        float(np.median([res.gap_curve[k][1] for res in bundle.results]))
        for k in range(len(ts))
    ]
    fit = fit_rate(list(zip(ts, medians)))
    monotone = all(b <= a for a, b in zip(medians, medians[1:]))
    elapsed = solve_time + (time.perf_counter() - start)
    passed = fit.slope <= -0.35 and monotone and elapsed < 180.0
    acceptance_record(
        3, passed,
        f"median gap over 5 seeds, T=1e2..1e5: slope {fit.slope:.3f} "
        f"(need <= -0.35), non-increasing={monotone}, "
        f"curve {medians[0]:.1f}->{medians[-1]:.2f}; {elapsed:.0f}s (budget 180s)",
    )
    assert fit.slope <= -0.35
    assert monotone
    assert elapsed < 180.0


def test_criterion_4_trajectories_settle_together(acceptance_record, rate_bundle):
    # the five final ergodic averages agree to within 1% of the feasible-set
    # diameter, and the final displacement obeys the step-size bound built
    # from the probed second moments
    bundle, solve_time = rate_bundle
    start = time.perf_counter()
    from drnash.config import build_game

    game = build_game(bundle.config.instance)
    diam = game.diameter()
    finals = [ergodic_average(res.history).concat() for res in bundle.results]
    max_pair = max(
        float(np.sqrt(np.sum((a - b) ** 2)))
        for a, b in combinations(finals, 2)
    )
    m_hat = np.sqrt(bundle.assumptions.mx_sq) + np.sqrt(bundle.assumptions.mp_sq)
    norm_ok = True
    worst_ratio = 0.0
    for res in bundle.results:
        last = res.history.checkpoints[-1]
        bound = 10.0 * last.step_size * m_hat
        worst_ratio = max(worst_ratio, last.step_norm / bound)
        norm_ok = norm_ok and last.step_norm <= bound
    elapsed = solve_time + (time.perf_counter() - start)
    passed = max_pair <= 1e-2 * diam and norm_ok and elapsed < 180.0
    acceptance_record(
        4, passed,
        f"pairwise final-average distance {max_pair:.3f} <= 1% of diameter "
        f"{diam:.1f}; final step norm within {worst_ratio:.2e} of its bound; "
        f"{elapsed:.0f}s (budget 180s)",
    )
    assert max_pair <= 1e-2 * diam
    assert norm_ok
    assert elapsed < 180.0


def test_criterion_5_analytic_problem_is_solved(acceptance_record):
    # single player, cost x^2 on [-1, 1] from x0 = 1: after 1e4 steps the
    # ergodic average sits near the known solution x* = 0
    start = time.perf_counter()
    game = scalar_quadratic_game()
    history = run(
        game, iterations=10_000, seed=0,
        z0=JointPoint(np.array([1.0]), np.array([1.0])),
    )
    avg = ergodic_average(history)
    residual = projected_residual(game, avg)
    elapsed = time.perf_counter() - start
    passed = abs(avg.x[0]) <= 5e-2 and residual <= 1e-1 and elapsed < 1.0
    acceptance_record(
        5, passed,
        f"1-D analytic game: |mean strategy| {abs(avg.x[0]):.4f} (tol 0.05), "
        f"residual {residual:.4f} (tol 0.1); {elapsed:.2f}s (budget 1s)",
    )
    assert abs(avg.x[0]) <= 5e-2
    assert residual <= 1e-1
    assert elapsed < 1.0


def test_criterion_6_assumption_probe_confirms_the_constants(acceptance_record):
    # on the smooth quadratic family the pairing term is nonnegative over
    # 1000 random pairs; doubling the batch size cuts the estimator variance
    # by at least 25 percent; second moments are finite
    start = time.perf_counter()
    game = build_quadratic_game(n=5, n_i=10, m=100, seed=7, bounds=10.0)
    report = probe_assumptions(game, samples=1000, seed=0, batch_sizes=[5, 10, 20, 40])
    ratios = {}
    for b in (5, 10, 20):
        ratios[b] = max(
            report.variance_g1[2 * b] / report.variance_g1[b],
            report.variance_g2[2 * b] / report.variance_g2[b],
        )
    moments_ok = (
        0.0 < report.mx_sq < np.inf and 0.0 < report.mp_sq < np.inf
        and 0.0 < report.nu1_sq < np.inf and 0.0 < report.nu2_sq < np.inf
    )
    elapsed = time.perf_counter() - start
    passed = (
        report.monotonicity_min >= -1e-10
        and all(r <= 0.75 for r in ratios.values())
        and moments_ok
        and elapsed < 30.0
    )
    acceptance_record(
        6, passed,
        f"monotonicity min {report.monotonicity_min:.2e} (tol -1e-10) over 1000 "
        f"pairs; variance ratios b->2b "
        + ", ".join(f"{b}:{r:.3f}" for b, r in sorted(ratios.items()))
        + f" (need <= 0.75); Mx^2 {report.mx_sq:.3g}, Mp^2 {report.mp_sq:.3g}; "
        f"{elapsed:.0f}s (budget 30s)",
    )
    assert report.monotonicity_min >= -1e-10
    for b, ratio in ratios.items():
        assert ratio <= 0.75, (b, ratio)
    assert moments_ok
    assert elapsed < 30.0


def test_criterion_7_larger_batches_reach_lower_gaps(acceptance_record):
    # stock instance, batch sizes 5/20/100, five seeds each: every mean gap
    # curve decreases from its first to its last checkpoint, and the
    # full-batch runs end at least as low as the smallest-batch runs
    start = time.perf_counter()
    config = parse_config(
        {
            "instance": {"family": "cvar", "n": 5, "n_i": 10, "m": 100,
                         "alpha": 0.95, "bounds": 10.0, "seed": 7},
            "solver": {
                "iterations": 20_000,
                "b1": [5, 20, 100],
                "b2": [5, 20, 100],
                "seeds": [0, 1, 2, 3, 4],
            },
        }
    )
    bundle = run_experiment(config)
    assert bundle.ok()
    finals = {}
    decreasing = {}
    for b in (5, 20, 100):
        curve = bundle.mean_curve(b)
        finals[b] = curve[-1][1]
        decreasing[b] = curve[-1][1] < curve[0][1]
    elapsed = time.perf_counter() - start
    passed = all(decreasing.values()) and finals[100] <= finals[5] and elapsed < 600.0
    acceptance_record(
        7, passed,
        "mean gap first->last decreases for b in (5,20,100)="
        f"{[decreasing[b] for b in (5, 20, 100)]}; finals "
        + ", ".join(f"b={b}:{finals[b]:.1f}" for b in (5, 20, 100))
        + f"; b=100 <= b=5: {finals[100] <= finals[5]}; {elapsed:.0f}s (budget 600s)",
    )
    assert all(decreasing.values())
    assert finals[100] <= finals[5]
    assert elapsed < 600.0
