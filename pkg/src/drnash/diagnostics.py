"""Convergence diagnostics: gap surrogates, residuals, rates, assumptions.

The natural merit function of a monotone problem compares a candidate ``z``
against every feasible ``y`` through ``sup_y sup_{g in F(y)} <g, z - y>``.
That supremum is not computable here, so :func:`restricted_gap` restricts it
to a finite probe set.  The restriction keeps two properties that matter for
diagnostics: it never exceeds the true gap, and it stays nonnegative as long
as the probe set contains the evaluated point.  At probe points where a
scenario hinge sits exactly at its kink the operator is set valued; the probe
evaluation enumerates the finitely many branch selections there so the inner
supremum over ``F(y)`` is exact.

:func:`projected_residual` measures stationarity of a single point,
:func:`fit_rate` turns a gap-versus-iterations curve into a log-log slope,
and :func:`probe_assumptions` estimates the constants behind the method's
guarantees (monotonicity, estimator variance, second moments) by sampling.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from itertools import combinations
from typing import Iterable, Sequence

import numpy as np

from .games import GameDefinition, JointPoint
from .operators import batch_g1, batch_g2, full_g1, full_g2, sample_batch
from .projections import project_joint
from .solver import RunHistory

__all__ = [
    "ProbeSet",
    "GapEstimate",
    "RateFit",
    "AssumptionReport",
    "build_probe_set",
    "standard_probes",
    "restricted_gap",
    "projected_residual",
    "fit_rate",
    "probe_assumptions",
]

# with more kinks than this at one probe point, enumerating every branch
# subset is off the table; fall back to single flips plus the all-flipped one
_MAX_ENUMERATED_KINKS = 10


@dataclass(frozen=True, eq=False)
class ProbeSet:
    """Precomputed operator selections at a fixed finite set of probes.

    Row ``r`` of ``matrix`` is one selection ``g`` from ``F`` at probe
    ``owner[r]``, and ``coords[r]`` is that probe's coordinate vector; a gap
    evaluation scores each row as ``g @ (z - coords[r])``.  Keeping the
    difference inside the product makes the score of an evaluated point
    against itself exactly zero, so the restricted gap cannot dip below zero
    through rounding when the point is among the probes.  Probes are game
    specific.
    """

    points: list[JointPoint]
    matrix: np.ndarray
    coords: np.ndarray
    owner: np.ndarray
    method: str

    @property
    def n_points(self) -> int:
        return len(self.points)

    @property
    def n_selections(self) -> int:
        return int(self.matrix.shape[0])


@dataclass(frozen=True, eq=False)
class GapEstimate:
    """Restricted merit value of one point against a probe set."""

    value: float
    probe_index: int
    n_points: int
    n_selections: int
    method: str


@dataclass(frozen=True, eq=False)
class RateFit:
    """Least-squares slope of ``log(value)`` against ``log(T)``."""

    slope: float
    intercept: float
    rms_residual: float
    points: tuple[tuple[float, float], ...]
    excluded: int


def _selections_at(
    game: GameDefinition, y: JointPoint, kink_tol: float
) -> list[np.ndarray]:
    """All operator selections at ``y``: one row per subgradient branch choice."""
    g1 = full_g1(game, y)
    g2 = full_g2(game, y)
    base = np.concatenate([g1, g2])
    if game.kink_flips is None:
        return [base]
    flips = game.kink_flips(y.x, kink_tol)
    if not flips:
        return [base]
    rows = y.p.reshape(game.n, game.m)
    deltas = []
    for flip in flips:
        d = np.zeros(base.size)
        d[game.x_slices[flip.player]] = rows[flip.player, flip.scenario] * flip.delta
        deltas.append(d)
    if len(flips) <= _MAX_ENUMERATED_KINKS:
        subsets: Iterable[tuple[int, ...]] = (
            s for r in range(len(flips) + 1) for s in combinations(range(len(flips)), r)
        )
    else:
        warnings.warn(
            f"{len(flips)} kinks at one probe point; enumerating single flips only",
            stacklevel=3,
        )
        everything = tuple(range(len(flips)))
        subsets = [()] + [(k,) for k in everything] + [everything]
    out = []
    for subset in subsets:
        g = base.copy()
        for k in subset:
            g += deltas[k]
        out.append(g)
    return out


def build_probe_set(
    game: GameDefinition,
    points: Sequence[JointPoint],
    kink_tol: float = 1e-9,
    method: str = "custom",
) -> ProbeSet:
    """Evaluate the operator at ``points`` and freeze the result.

    The heavy part of a restricted-gap computation depends only on the
    probes, so one :class:`ProbeSet` can be reused across many evaluated
    points (for instance along a whole gap-versus-iterations curve).
    """
    points = [pt for pt in points]
    if not points:
        raise ValueError("probe set must contain at least one point")
    rows: list[np.ndarray] = []
    coords: list[np.ndarray] = []
    owner: list[int] = []
    for k, y in enumerate(points):
        if not game.contains(y, tol=1e-7):
            raise ValueError(f"probe point {k} is infeasible for this game")
        yc = y.concat()
        for g in _selections_at(game, y, kink_tol):
            rows.append(g)
            coords.append(yc)
            owner.append(k)
    return ProbeSet(
        points=points,
        matrix=np.vstack(rows),
        coords=np.vstack(coords),
        owner=np.array(owner, dtype=int),
        method=method,
    )


def _random_feasible(game: GameDefinition, rng: np.random.Generator) -> JointPoint:
    x = rng.uniform(game.lower, game.upper)
    p = np.concatenate([rng.dirichlet(np.ones(game.m)) for _ in range(game.n)])
    return JointPoint(x, p)


def _random_vertex(game: GameDefinition, rng: np.random.Generator) -> JointPoint:
    pick = rng.integers(0, 2, size=game.x_dim).astype(bool)
    x = np.where(pick, game.upper, game.lower)
    p = np.zeros(game.p_dim)
    for i in range(game.n):
        p[i * game.m + rng.integers(0, game.m)] = 1.0
    return JointPoint(x.astype(float), p)


def standard_probes(
    game: GameDefinition,
    seed: int | np.random.Generator | None = 0,
    extra: Sequence[JointPoint] = (),
    n_uniform: int = 512,
    n_vertices: int = 32,
    kink_tol: float = 1e-9,
) -> ProbeSet:
    """Default probe set: caller-supplied points, uniform draws, vertices.

    ``extra`` is where iterate history belongs; passing the points that will
    later be evaluated keeps the restricted gap nonnegative.
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    points = list(extra)
    points.extend(_random_feasible(game, rng) for _ in range(n_uniform))
    points.extend(_random_vertex(game, rng) for _ in range(n_vertices))
    return build_probe_set(game, points, kink_tol=kink_tol, method="history+sampled")


def restricted_gap(
    game: GameDefinition,
    z: JointPoint,
    probes: ProbeSet | Sequence[JointPoint],
) -> GapEstimate:
    """Merit of ``z`` restricted to a probe set.

    Maximises ``<g(y), z - y>`` over the probe points ``y`` and, at kinks,
    over the available subgradient selections.  A lower bound on the true
    merit value; nonnegative whenever ``z`` itself is among the probes.
    """
    if not isinstance(probes, ProbeSet):
        probes = build_probe_set(game, list(probes))
    if z.x.shape != (game.x_dim,) or z.p.shape != (game.p_dim,):
        raise ValueError(
            f"point has shapes x{z.x.shape}, p{z.p.shape}; game expects "
            f"x({game.x_dim},), p({game.p_dim},)"
        )
    diffs = z.concat()[None, :] - probes.coords
    scores = np.einsum("rj,rj->r", probes.matrix, diffs)
    best = int(np.argmax(scores))
    return GapEstimate(
        value=float(scores[best]),
        probe_index=int(probes.owner[best]),
        n_points=probes.n_points,
        n_selections=probes.n_selections,
        method=probes.method,
    )


def projected_residual(game: GameDefinition, z: JointPoint, step: float = 1.0) -> float:
    """Stationarity measure ``||z - P(z - step * g(z))|| / step``.

    Zero exactly at solutions of the problem (for the default branch of the
    operator); insensitive to ``step`` scaling to first order.
    """
    if not step > 0.0:
        raise ValueError(f"step must be positive, got {step}")
    g1 = full_g1(game, z)
    g2 = full_g2(game, z)
    moved = project_joint(JointPoint(z.x - step * g1, z.p - step * g2), game)
    dist_sq = float(np.sum((z.x - moved.x) ** 2)) + float(np.sum((z.p - moved.p) ** 2))
    return math.sqrt(dist_sq) / step


def fit_rate(
    source: RunHistory | Sequence[tuple[float, float]],
    metric: str = "gap",
) -> RateFit:
    """Fit ``log(value) = slope * log(T) + intercept`` by least squares.

    ``source`` is either a run history whose ``metrics[metric]`` column is
    aligned with its checkpoints, or explicit ``(T, value)`` pairs.  Needs at
    least five points spanning at least two decades in ``T``; nonpositive
    values cannot be fit in log space and are dropped with a warning.
    """
    if isinstance(source, RunHistory):
        if metric not in source.metrics:
            raise ValueError(f"history has no metric {metric!r}")
        values = source.metrics[metric]
        if len(values) != len(source.checkpoints):
            raise ValueError(
                f"metric {metric!r} has {len(values)} entries for "
                f"{len(source.checkpoints)} checkpoints"
            )
        pairs = [(float(cp.t), float(v)) for cp, v in zip(source.checkpoints, values)]
    else:
        pairs = [(float(t), float(v)) for t, v in source]
    if len(pairs) < 5:
        raise ValueError(f"rate fit needs at least 5 points, got {len(pairs)}")
    ts = [t for t, _ in pairs]
    if min(ts) <= 0:
        raise ValueError("iteration counts must be positive")
    if max(ts) / min(ts) < 100.0:
        raise ValueError(
            f"rate fit needs iteration counts spanning at least two decades, "
            f"got [{min(ts):g}, {max(ts):g}]"
        )
    kept = [(t, v) for t, v in pairs if v > 0.0]
    excluded = len(pairs) - len(kept)
    if excluded:
        warnings.warn(
            f"fit_rate dropped {excluded} nonpositive value(s) before the log fit",
            stacklevel=2,
        )
    if len(kept) < 2:
        raise ValueError("too few positive values left to fit a rate")
    log_t = np.log([t for t, _ in kept])
    log_v = np.log([v for _, v in kept])
    slope, intercept = np.polyfit(log_t, log_v, deg=1)
    fitted = slope * log_t + intercept
    rms = float(np.sqrt(np.mean((log_v - fitted) ** 2)))
    return RateFit(
        slope=float(slope),
        intercept=float(intercept),
        rms_residual=rms,
        points=tuple(kept),
        excluded=excluded,
    )


@dataclass(frozen=True, eq=False)
class AssumptionReport:
    """Sampled estimates of the constants behind the convergence guarantees.

    ``monotonicity_min`` is the smallest value of
    ``<g1(x, p) - g1(y, p), x - y>`` over random strategy pairs at a shared
    random weight point (the weight block drops out of the pairing because it
    is held fixed).  ``variance_g1[b]`` is the mean squared deviation of the
    size-``b`` estimator from the exact value; ``nu1_sq`` is the largest
    ``b``-scaled such deviation, which is the constant a ``1/b`` variance
    bound would need.  ``mx_sq``/``mp_sq`` are the largest observed squared
    estimator norms (second-moment bounds).
    """

    family: str
    monotonicity_min: float
    variance_g1: dict[int, float]
    variance_g2: dict[int, float]
    nu1_sq: float
    nu2_sq: float
    mx_sq: float
    mp_sq: float
    n_pairs: int
    n_points: int
    draws: int
    seed: int

    def to_json(self) -> dict:
        return {
            "family": self.family,
            "monotonicity_min": self.monotonicity_min,
            "variance_g1": {str(b): v for b, v in self.variance_g1.items()},
            "variance_g2": {str(b): v for b, v in self.variance_g2.items()},
            "nu1_sq": self.nu1_sq,
            "nu2_sq": self.nu2_sq,
            "Mx_sq": self.mx_sq,
            "Mp_sq": self.mp_sq,
            "n_pairs": self.n_pairs,
            "n_points": self.n_points,
            "draws": self.draws,
            "seed": self.seed,
        }


def probe_assumptions(
    game: GameDefinition,
    samples: int = 200,
    seed: int = 0,
    *,
    batch_sizes: Sequence[int] | None = None,
    variance_points: int = 8,
    draws: int = 200,
    moment_points: int = 10_000,
) -> AssumptionReport:
    """Estimate monotonicity, estimator variance and second moments.

    Monotonicity is probed on ``samples`` random strategy pairs, each with
    its own shared random weight point.  Variances are averaged over
    ``variance_points`` random feasible points with ``draws`` batch draws per
    point and batch size (default sizes ``{1, 5, 25, m}``); second moments
    take the max over ``moment_points`` further points with one batch draw
    each, cycling through the batch sizes.  All sampling is driven by
    ``seed``.
    """
    if samples < 1 or variance_points < 1 or draws < 1 or moment_points < 0:
        raise ValueError("sample counts must be positive")
    if batch_sizes is None:
        batch_sizes = [b for b in (1, 5, 25, game.m) if b <= game.m]
    sizes = sorted(set(int(b) for b in batch_sizes))
    if not sizes:
        raise ValueError("need at least one batch size")
    if sizes[0] < 1 or sizes[-1] > game.m:
        raise ValueError(f"batch sizes must lie in [1, {game.m}], got {sizes}")
    rng = np.random.default_rng(seed)

    mono_min = math.inf
    for _ in range(samples):
        za = _random_feasible(game, rng)
        zb = JointPoint(rng.uniform(game.lower, game.upper), za.p)
        d = float((full_g1(game, za) - full_g1(game, zb)) @ (za.x - zb.x))
        mono_min = min(mono_min, d)

    dev1 = {b: 0.0 for b in sizes}
    dev2 = {b: 0.0 for b in sizes}
    mx_sq = 0.0
    mp_sq = 0.0
    for _ in range(variance_points):
        z = _random_feasible(game, rng)
        g1 = full_g1(game, z)
        g2 = full_g2(game, z)
        for b in sizes:
            acc1 = 0.0
            acc2 = 0.0
            for _ in range(draws):
                e1 = batch_g1(game, z, sample_batch(game.m, b, rng))
                e2 = batch_g2(game, z, sample_batch(game.m, b, rng))
                acc1 += float(np.sum((e1 - g1) ** 2))
                acc2 += float(np.sum((e2 - g2) ** 2))
                mx_sq = max(mx_sq, float(e1 @ e1))
                mp_sq = max(mp_sq, float(e2 @ e2))
            dev1[b] += acc1 / draws
            dev2[b] += acc2 / draws
    for k in range(moment_points):
        z = _random_feasible(game, rng)
        b = sizes[k % len(sizes)]
        e1 = batch_g1(game, z, sample_batch(game.m, b, rng))
        e2 = batch_g2(game, z, sample_batch(game.m, b, rng))
        mx_sq = max(mx_sq, float(e1 @ e1))
        mp_sq = max(mp_sq, float(e2 @ e2))

    variance_g1 = {b: dev1[b] / variance_points for b in sizes}
    variance_g2 = {b: dev2[b] / variance_points for b in sizes}
    return AssumptionReport(
        family=game.family,
        monotonicity_min=mono_min,
        variance_g1=variance_g1,
        variance_g2=variance_g2,
        nu1_sq=max(b * variance_g1[b] for b in sizes),
        nu2_sq=max(b * variance_g2[b] for b in sizes),
        mx_sq=mx_sq,
        mp_sq=mp_sq,
        n_pairs=samples,
        n_points=variance_points,
        draws=draws,
        seed=seed,
    )
