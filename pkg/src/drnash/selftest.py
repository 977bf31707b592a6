"""Built-in release checks.

Four independent oracles guard the numerical core: an exhaustive active-set
enumeration for the simplex projection, exact enumeration of every mini-batch
for estimator unbiasedness, closed-form step-schedule values, and a
single-player problem whose solution is known analytically.  All of them are
cheap enough to run on every build.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations
from pathlib import Path

import numpy as np

from .diagnostics import projected_residual
from .games import GameDefinition, JointPoint, build_cvar_game
from .operators import batch_g1, batch_g2, full_g1, full_g2
from .projections import project_box, project_simplex
from .solver import StepSchedule, ergodic_average, run, step_value

__all__ = [
    "CheckResult",
    "project_simplex_enumerated",
    "scalar_quadratic_game",
    "selftest",
]


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str


def project_simplex_enumerated(v: np.ndarray) -> np.ndarray:
    """Simplex projection by brute force over all support sets.

    For every nonempty coordinate subset S the equality-constrained
    projection is ``v_S - (sum(v_S) - 1) / |S|`` on S and zero elsewhere;
    the true projection is the feasible candidate closest to ``v``.  Cost
    grows as ``2^len(v)``, so this is an oracle for testing, not a method.
    """
    v = np.asarray(v, dtype=float)
    m = v.size
    best = None
    best_dist = math.inf
    for size in range(1, m + 1):
        for subset in combinations(range(m), size):
            idx = np.array(subset)
            tau = (v[idx].sum() - 1.0) / size
            candidate = v[idx] - tau
            if candidate.min() < -1e-12:
                continue
            p = np.zeros(m)
            p[idx] = candidate
            dist = float(np.sum((p - v) ** 2))
            if dist < best_dist:
                best = p
                best_dist = dist
    assert best is not None  # the full support set is always feasible
    return best


def scalar_quadratic_game() -> GameDefinition:
    """One player, one scenario, cost x^2 on [-1, 1]; solution x* = 0."""
    return GameDefinition(
        n=1,
        m=1,
        block_dims=(1,),
        lower=np.array([-1.0]),
        upper=np.array([1.0]),
        cost_many=lambda i, x, idx: np.full(idx.size, x[0] ** 2),
        subgrad_many=lambda i, x, idx: np.full((idx.size, 1), 2.0 * x[0]),
        family="scalar-test",
    )


def _check_simplex_oracle(perturb: float, rng: np.random.Generator) -> CheckResult:
    worst = 0.0
    for _ in range(1000):
        v = rng.uniform(-2.0, 2.0, size=5)
        fast = project_simplex(v)
        if perturb:
            fast = fast.copy()
            fast[0] += perturb
        worst = max(worst, float(np.abs(fast - project_simplex_enumerated(v)).max()))
    return CheckResult(
        name="simplex-projection-oracle",
        passed=worst <= 1e-9,
        detail=f"max deviation {worst:.3e} over 1000 random 5-dim inputs (tol 1e-09)",
    )


def _check_box_clamp(rng: np.random.Generator) -> CheckResult:
    worst = 0.0
    for _ in range(200):
        dim = int(rng.integers(1, 8))
        lower = rng.uniform(-3.0, 0.0, size=dim)
        upper = lower + rng.uniform(0.0, 3.0, size=dim)
        v = rng.uniform(-5.0, 5.0, size=dim)
        expected = np.minimum(np.maximum(v, lower), upper)
        worst = max(worst, float(np.abs(project_box(v, lower, upper) - expected).max()))
    scalar = float(project_box(np.array([12.0]), np.array([-10.0]), np.array([10.0]))[0])
    passed = worst == 0.0 and scalar == 10.0
    return CheckResult(
        name="box-projection-clamp",
        passed=passed,
        detail=f"max deviation {worst:.3e} from the clamp definition",
    )


def _random_feasible(game: GameDefinition, rng: np.random.Generator) -> JointPoint:
    x = rng.uniform(game.lower, game.upper)
    p = np.concatenate([rng.dirichlet(np.ones(game.m)) for _ in range(game.n)])
    return JointPoint(x, p)


def _check_unbiasedness(rng: np.random.Generator) -> CheckResult:
    game = build_cvar_game(n=2, n_i=2, m=6, alpha=0.9, seed=20240805, bounds=3.0)
    worst = 0.0
    for _ in range(20):
        z = _random_feasible(game, rng)
        g1 = full_g1(game, z)
        g2 = full_g2(game, z)
        for b in (1, 2, 3):
            batches = list(combinations(range(game.m), b))
            mean1 = np.mean([batch_g1(game, z, np.array(s)) for s in batches], axis=0)
            mean2 = np.mean([batch_g2(game, z, np.array(s)) for s in batches], axis=0)
            worst = max(worst, float(np.abs(mean1 - g1).max()))
            worst = max(worst, float(np.abs(mean2 - g2).max()))
    return CheckResult(
        name="batch-enumeration-unbiasedness",
        passed=worst <= 1e-12,
        detail=f"max deviation {worst:.3e} over all batches, b in (1, 2, 3), m=6",
    )


def _check_schedule() -> CheckResult:
    schedule = StepSchedule.sqrt_log()
    expected = {
        0: 1.0 / math.log(2.0),
        1: 1.0 / (math.sqrt(2.0) * math.log(3.0)),
        99: 1.0 / (10.0 * math.log(101.0)),
    }
    worst = max(abs(step_value(schedule, t) - v) for t, v in expected.items())
    ok = worst <= 1e-15
    ok = ok and step_value(StepSchedule.constant(0.5), 7) == 0.5
    try:
        step_value(schedule, -1)
        ok = False
    except ValueError:
        pass
    try:
        step_value(StepSchedule.custom(lambda t: -1.0), 3)
        ok = False
    except ValueError:
        pass
    return CheckResult(
        name="step-schedule-values",
        passed=ok,
        detail=f"max deviation {worst:.3e} from closed-form values at t in (0, 1, 99)",
    )


def _check_analytic_run() -> CheckResult:
    game = scalar_quadratic_game()
    history = run(
        game,
        iterations=10_000,
        seed=0,
        z0=JointPoint(np.array([1.0]), np.array([1.0])),
    )
    avg = ergodic_average(history)
    residual = projected_residual(game, avg)
    passed = abs(avg.x[0]) <= 5e-2 and residual <= 1e-1
    return CheckResult(
        name="analytic-1d-run",
        passed=passed,
        detail=f"|mean strategy| {abs(avg.x[0]):.4f} (tol 0.05), residual {residual:.4f} (tol 0.1)",
    )


def selftest(
    perturb_simplex: float = 0.0,
    quiet: bool = False,
    out: str | Path | None = None,
    seed: int = 0,
) -> list[CheckResult]:
    """Run every release check and return the results.

    ``perturb_simplex`` is a test hook that offsets the simplex projection
    under test by the given amount, so the oracle-equivalence check must
    fail for offsets above its tolerance.  With ``out`` the pass/fail table
    is also written to ``<out>/selftest_report.txt``.
    """
    rng = np.random.default_rng(seed)
    results = [
        _check_simplex_oracle(perturb_simplex, rng),
        _check_box_clamp(rng),
        _check_unbiasedness(rng),
        _check_schedule(),
        _check_analytic_run(),
    ]
    lines = [
        f"[{'PASS' if r.passed else 'FAIL'}] {r.name}: {r.detail}" for r in results
    ]
    if not quiet:
        for line in lines:
            print(line)
    if out is not None:
        path = Path(out) / "selftest_report.txt"
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("\n".join(lines) + "\n")
    return results
