"""Stochastic gradient descent-ascent on the saddle-point operator.

One iteration reads the current joint point, draws the two scenario batches,
takes a descent step in the strategies and an ascent step in the scenario
weights, and projects back onto the feasible set.  Both blocks are updated
from the same old point; no player sees another player's new strategy within
an iteration.

The default step schedule ``1 / (sqrt(1 + t) * ln(t + 2))`` is square
summable "up to logs": it decays slowly enough to keep moving and fast enough
that the weighted (ergodic) average of the iterates settles.  The ergodic
average after ``T`` steps is

    avg_T = sum_{t < T} step_t * z_t / sum_{t < T} step_t,

accumulated online so no trajectory storage is needed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .games import GameDefinition, JointPoint
from .operators import MiniBatch, batch_g1, batch_g2, full_g1, full_g2, sample_minibatch
from .projections import project_joint

__all__ = [
    "StepSchedule",
    "step_value",
    "gda_step",
    "Checkpoint",
    "RunHistory",
    "run",
    "ergodic_average",
]


@dataclass(frozen=True)
class StepSchedule:
    """Step-size rule ``t -> step``, shared by both blocks.

    ``kind`` is one of ``"sqrt_log"`` (the default decaying rule),
    ``"constant"`` or ``"custom"``.  Use the classmethod constructors.
    """

    kind: str
    value: float | None = None
    fn: Callable[[int], float] | None = None

    @classmethod
    def sqrt_log(cls) -> "StepSchedule":
        """Decaying rule ``1 / (sqrt(1 + t) * ln(t + 2))`` (natural log)."""
        return cls(kind="sqrt_log")

    @classmethod
    def constant(cls, value: float) -> "StepSchedule":
        if not value > 0.0 or not math.isfinite(value):
            raise ValueError(f"constant step must be positive and finite, got {value}")
        return cls(kind="constant", value=float(value))

    @classmethod
    def custom(cls, fn: Callable[[int], float]) -> "StepSchedule":
        return cls(kind="custom", fn=fn)

    def __call__(self, t: int) -> float:
        return step_value(self, t)


def step_value(schedule: StepSchedule, t: int) -> float:
    """Evaluate a schedule at iteration ``t`` and validate the result."""
    if t != int(t) or t < 0:
        raise ValueError(f"iteration index must be a nonnegative integer, got {t}")
    t = int(t)
    if schedule.kind == "sqrt_log":
        value = 1.0 / (math.sqrt(1.0 + t) * math.log(t + 2.0))
    elif schedule.kind == "constant":
        value = schedule.value
    elif schedule.kind == "custom":
        value = float(schedule.fn(t))
    else:
        raise ValueError(f"unknown schedule kind {schedule.kind!r}")
    if not (value is not None and math.isfinite(value) and value > 0.0):
        raise ValueError(f"schedule produced a nonpositive step {value} at t={t}")
    return float(value)


def gda_step(
    game: GameDefinition,
    z: JointPoint,
    step_x: float,
    step_p: float,
    batch: MiniBatch,
    validate: bool = True,
) -> JointPoint:
    """One projected descent-ascent step from a feasible point.

    Both blocks are evaluated at the incoming ``z`` before either moves.
    """
    if validate:
        if not (step_x > 0.0 and step_p > 0.0):
            raise ValueError(f"step sizes must be positive, got {step_x}, {step_p}")
        if not game.contains(z, tol=1e-7):
            raise ValueError("gda_step requires a feasible point")
    g1 = batch_g1(game, z, batch.b1)
    g2 = batch_g2(game, z, batch.b2)
    if not (np.isfinite(g1).all() and np.isfinite(g2).all()):
        raise FloatingPointError("non-finite operator value")
    return project_joint(JointPoint(z.x - step_x * g1, z.p - step_p * g2), game)


@dataclass(frozen=True, eq=False)
class Checkpoint:
    """Snapshot after ``t`` completed iterations.

    ``average`` is the step-weighted mean of the iterates seen before each of
    the ``t`` steps; ``step_size`` and ``batch`` belong to the step that
    produced ``iterate``, and ``step_norm`` is that step's displacement.
    """

    t: int
    iterate: JointPoint
    average: JointPoint
    weight_sum: float
    step_size: float
    step_norm: float
    batch: MiniBatch


@dataclass(eq=False)
class RunHistory:
    """Everything a run leaves behind for diagnostics and reporting."""

    iterations: int
    b1: int
    b2: int
    seed: int | None
    schedule: StepSchedule
    checkpoints: list[Checkpoint]
    final: JointPoint
    errors: list[tuple[int, np.ndarray, np.ndarray]] | None = None
    metrics: dict[str, list[float]] = field(default_factory=dict)

    def checkpoint_at(self, t: int) -> Checkpoint:
        for cp in self.checkpoints:
            if cp.t == t:
                return cp
        recorded = [cp.t for cp in self.checkpoints]
        raise ValueError(f"no checkpoint at t={t}; recorded: {recorded}")


def _checkpoint_set(spec: str | Iterable[int], iterations: int) -> list[int]:
    if isinstance(spec, str):
        if spec == "geometric":
            ts = set()
            t = 1
            while t < iterations:
                ts.add(t)
                t *= 2
        elif spec == "all":
            ts = set(range(1, iterations))
        else:
            raise ValueError(f"unknown checkpoint spec {spec!r}")
    else:
        ts = set()
        for t in spec:
            if t != int(t) or not 1 <= t <= iterations:
                raise ValueError(
                    f"checkpoint {t} outside the valid range [1, {iterations}]"
                )
            ts.add(int(t))
    ts.add(iterations)
    return sorted(ts)


def run(
    game: GameDefinition,
    iterations: int,
    b1: int | None = None,
    b2: int | None = None,
    schedule: StepSchedule | None = None,
    seed: int | None = None,
    z0: JointPoint | None = None,
    checkpoints: str | Iterable[int] = "geometric",
    record_errors: bool = False,
) -> RunHistory:
    """Run the descent-ascent loop for ``iterations`` steps.

    ``b1`` and ``b2`` default to the full scenario count (deterministic
    operator).  ``z0`` defaults to the game's centre point and is projected
    onto the feasible set either way.  ``checkpoints`` selects where
    snapshots are stored: ``"geometric"`` for powers of two, ``"all"`` for
    every step, or an explicit iterable; the final step is always recorded.
    With ``record_errors`` the run also stores, per checkpoint, the gap
    between the mini-batch operator values and the exact ones at the point
    where that step was taken.

    The same arguments and seed reproduce the trajectory bit for bit.
    """
    if iterations != int(iterations) or iterations < 1:
        raise ValueError(f"iterations must be a positive integer, got {iterations}")
    iterations = int(iterations)
    b1 = game.m if b1 is None else int(b1)
    b2 = game.m if b2 is None else int(b2)
    if not (1 <= b1 <= game.m and 1 <= b2 <= game.m):
        raise ValueError(
            f"batch sizes must lie in [1, {game.m}], got b1={b1}, b2={b2}"
        )
    schedule = StepSchedule.sqrt_log() if schedule is None else schedule
    marks = _checkpoint_set(checkpoints, iterations)
    mark_set = set(marks)

    rng = np.random.default_rng(seed)
    z = game.initial_point() if z0 is None else z0
    z = project_joint(z, game)

    acc_x = np.zeros(game.x_dim)
    acc_p = np.zeros(game.p_dim)
    weight_sum = 0.0
    recorded: list[Checkpoint] = []
    errors: list[tuple[int, np.ndarray, np.ndarray]] | None = [] if record_errors else None

    for t in range(iterations):
        step = step_value(schedule, t)
        acc_x += step * z.x
        acc_p += step * z.p
        weight_sum += step
        batch = sample_minibatch(game.m, b1, b2, rng)
        try:
            z_new = gda_step(game, z, step, step, batch, validate=False)
        except FloatingPointError as exc:
            raise FloatingPointError(f"{exc} at iteration {t}") from None
        done = t + 1
        if done in mark_set:
            if record_errors:
                w1 = batch_g1(game, z, batch.b1) - full_g1(game, z)
                w2 = batch_g2(game, z, batch.b2) - full_g2(game, z)
                errors.append((done, w1, w2))
            step_norm = math.sqrt(
                float(np.sum((z_new.x - z.x) ** 2)) + float(np.sum((z_new.p - z.p) ** 2))
            )
            recorded.append(
                Checkpoint(
                    t=done,
                    iterate=z_new.copy(),
                    average=JointPoint(acc_x / weight_sum, acc_p / weight_sum),
                    weight_sum=weight_sum,
                    step_size=step,
                    step_norm=step_norm,
                    batch=batch,
                )
            )
        z = z_new

    return RunHistory(
        iterations=iterations,
        b1=b1,
        b2=b2,
        seed=seed,
        schedule=schedule,
        checkpoints=recorded,
        final=z,
        errors=errors,
    )


def ergodic_average(history: RunHistory, T: int | None = None) -> JointPoint:
    """Step-weighted average of the first ``T`` iterates (``z_0 .. z_{T-1}``).

    ``T`` must be a recorded checkpoint; by default the full run length is
    used.  ``T == 1`` returns the starting point itself.
    """
    if T is None:
        T = history.iterations
    return history.checkpoint_at(int(T)).average
