"""Step schedule, single descent-ascent step, and the solver loop."""

from __future__ import annotations

import math

import numpy as np
import pytest

from drnash.games import GameDefinition, JointPoint, build_cvar_game, build_quadratic_game
from drnash.operators import MiniBatch, batch_g1, batch_g2
from drnash.projections import project_box, project_joint, project_simplex
from drnash.solver import (
    StepSchedule,
    ergodic_average,
    gda_step,
    run,
    step_value,
)


class TestStepSchedule:
    def test_sqrt_log_known_values(self):
        sched = StepSchedule.sqrt_log()
        assert sched(0) == pytest.approx(1.0 / math.log(2.0), abs=1e-15)
        assert sched(1) == pytest.approx(1.0 / (math.sqrt(2.0) * math.log(3.0)), abs=1e-15)
        assert sched(99) == pytest.approx(1.0 / (10.0 * math.log(101.0)), abs=1e-15)

    def test_sqrt_log_decreases(self):
        sched = StepSchedule.sqrt_log()
        values = np.array([sched(t) for t in range(1000)])
        assert np.all(np.diff(values) < 0)

    def test_sqrt_log_squares_are_summable(self):
        # sum_t step_t^2 = sum_t 1 / ((1+t) ln^2(t+2)) stays below 4 even
        # far out; the first terms must match the schedule itself
        sched = StepSchedule.sqrt_log()
        t = np.arange(100_000, dtype=float)
        squares = 1.0 / ((1.0 + t) * np.log(t + 2.0) ** 2)
        for k in range(100):
            assert squares[k] == pytest.approx(sched(k) ** 2, rel=1e-12)
        assert squares.sum() <= 4.0

    def test_constant_and_custom(self):
        const = StepSchedule.constant(0.125)
        assert const(0) == 0.125 and const(10_000) == 0.125
        custom = StepSchedule.custom(lambda t: 0.5 / (t + 1))
        assert custom(0) == 0.5 and custom(3) == 0.125

    def test_rejects_bad_parameters(self):
        for bad in (0.0, -1.0, math.inf, math.nan):
            with pytest.raises(ValueError):
                StepSchedule.constant(bad)
        sched = StepSchedule.sqrt_log()
        with pytest.raises(ValueError, match="nonnegative"):
            sched(-1)
        with pytest.raises(ValueError, match="nonnegative"):
            step_value(sched, 0.5)
        with pytest.raises(ValueError, match="nonpositive"):
            StepSchedule.custom(lambda t: 0.0)(5)
        with pytest.raises(ValueError, match="nonpositive"):
            StepSchedule.custom(lambda t: math.nan)(5)
        with pytest.raises(ValueError, match="unknown"):
            step_value(StepSchedule(kind="bogus"), 0)


def _scalar_game() -> GameDefinition:
    """One player, one scenario, cost x^2 on [-1, 1]."""
    return GameDefinition(
        n=1,
        m=1,
        block_dims=(1,),
        lower=np.array([-1.0]),
        upper=np.array([1.0]),
        cost_many=lambda i, x, idx: np.array([x[0] ** 2]),
        subgrad_many=lambda i, x, idx: np.array([[2.0 * x[0]]]),
    )


def _broken_game() -> GameDefinition:
    return GameDefinition(
        n=1,
        m=2,
        block_dims=(1,),
        lower=np.array([-1.0]),
        upper=np.array([1.0]),
        cost_many=lambda i, x, idx: np.zeros(len(idx)),
        subgrad_many=lambda i, x, idx: np.full((len(idx), 1), np.inf),
    )


class TestGdaStep:
    def test_matches_manual_composition(self):
        game = build_cvar_game(n=2, n_i=2, m=6, alpha=0.9, seed=50, bounds=3.0)
        rng = np.random.default_rng(0)
        x = rng.uniform(game.lower, game.upper)
        p = np.concatenate([rng.dirichlet(np.ones(game.m)) for _ in range(game.n)])
        z = JointPoint(x, p)
        batch = MiniBatch(np.array([0, 2, 5]), np.array([1, 3]))
        step_x, step_p = 0.3, 0.7

        moved = gda_step(game, z, step_x, step_p, batch)
        want_x = project_box(x - step_x * batch_g1(game, z, batch.b1), game.lower, game.upper)
        raw_p = p - step_p * batch_g2(game, z, batch.b2)
        want_p = np.concatenate(
            [project_simplex(raw_p[i * game.m:(i + 1) * game.m]) for i in range(game.n)]
        )
        assert np.array_equal(moved.x, want_x)
        assert np.array_equal(moved.p, want_p)

    def test_scalar_quadratic_hand_check(self):
        # x=1, p=1, step 0.25: gradient 2, new x = clip(1 - 0.5) = 0.5
        game = _scalar_game()
        z = JointPoint(np.array([1.0]), np.array([1.0]))
        batch = MiniBatch(np.array([0]), np.array([0]))
        moved = gda_step(game, z, 0.25, 0.25, batch)
        assert moved.x[0] == pytest.approx(0.5, abs=1e-15)
        assert moved.p[0] == 1.0

    def test_validates_inputs(self):
        game = _scalar_game()
        z = game.initial_point()
        batch = MiniBatch(np.array([0]), np.array([0]))
        with pytest.raises(ValueError, match="positive"):
            gda_step(game, z, 0.0, 0.1, batch)
        with pytest.raises(ValueError, match="feasible"):
            gda_step(game, JointPoint(np.array([5.0]), np.array([1.0])), 0.1, 0.1, batch)

    def test_non_finite_operator_raises(self):
        game = _broken_game()
        z = game.initial_point()
        batch = MiniBatch(np.array([0]), np.array([0]))
        with pytest.raises(FloatingPointError, match="non-finite operator value"):
            gda_step(game, z, 0.1, 0.1, batch)


class TestRun:
    def test_reproducible_and_seed_sensitive(self):
        game = build_cvar_game(n=2, n_i=2, m=10, alpha=0.9, seed=51, bounds=3.0)
        a = run(game, iterations=40, b1=3, b2=3, seed=7)
        b = run(game, iterations=40, b1=3, b2=3, seed=7)
        c = run(game, iterations=40, b1=3, b2=3, seed=8)
        assert np.array_equal(a.final.concat(), b.final.concat())
        for cp_a, cp_b in zip(a.checkpoints, b.checkpoints):
            assert cp_a.t == cp_b.t
            assert np.array_equal(cp_a.iterate.concat(), cp_b.iterate.concat())
            assert np.array_equal(cp_a.average.concat(), cp_b.average.concat())
        assert not np.array_equal(a.final.concat(), c.final.concat())

    def test_full_batch_ignores_the_seed(self):
        game = build_cvar_game(n=2, n_i=2, m=6, alpha=0.9, seed=52, bounds=3.0)
        a = run(game, iterations=25, seed=1)  # b1=b2 default to m
        b = run(game, iterations=25, seed=99)
        assert np.array_equal(a.final.concat(), b.final.concat())
        assert a.b1 == a.b2 == game.m

    def test_geometric_checkpoints(self):
        game = _scalar_game()
        history = run(game, iterations=100)
        assert [cp.t for cp in history.checkpoints] == [1, 2, 4, 8, 16, 32, 64, 100]
        history = run(game, iterations=64)
        assert [cp.t for cp in history.checkpoints] == [1, 2, 4, 8, 16, 32, 64]

    def test_explicit_and_all_checkpoints(self):
        game = _scalar_game()
        history = run(game, iterations=10, checkpoints=[3, 7])
        assert [cp.t for cp in history.checkpoints] == [3, 7, 10]
        history = run(game, iterations=10, checkpoints="all")
        assert [cp.t for cp in history.checkpoints] == list(range(1, 11))
        with pytest.raises(ValueError, match="valid range"):
            run(game, iterations=10, checkpoints=[11])
        with pytest.raises(ValueError, match="valid range"):
            run(game, iterations=10, checkpoints=[0])
        with pytest.raises(ValueError, match="unknown checkpoint"):
            run(game, iterations=10, checkpoints="sometimes")

    def test_average_at_one_is_the_start(self):
        game = build_cvar_game(n=2, n_i=2, m=5, alpha=0.9, seed=53, bounds=3.0)
        rng = np.random.default_rng(1)
        x = rng.uniform(game.lower, game.upper)
        p = np.concatenate([rng.dirichlet(np.ones(game.m)) for _ in range(game.n)])
        z0 = JointPoint(x, p)
        history = run(game, iterations=8, b1=2, b2=2, seed=0, z0=z0, checkpoints="all")
        start = ergodic_average(history, 1)
        # the recorded average is (step_0 * z_0) / step_0: equal to the
        # projected start up to one rounding per entry
        projected = project_joint(z0, game)
        assert np.allclose(start.x, projected.x, rtol=1e-15, atol=0.0)
        assert np.allclose(start.p, projected.p, rtol=1e-15, atol=1e-18)
        assert np.abs(start.concat() - z0.concat()).max() <= 1e-12

    def test_infeasible_start_is_projected(self):
        game = _scalar_game()
        z0 = JointPoint(np.array([9.0]), np.array([1.0]))
        history = run(game, iterations=1)
        del history
        history = run(game, iterations=1, z0=z0)
        assert ergodic_average(history, 1).x[0] == 1.0  # clipped to the box

    def test_average_and_weights_reconstruct_from_iterates(self):
        game = build_cvar_game(n=2, n_i=2, m=6, alpha=0.9, seed=54, bounds=3.0)
        history = run(game, iterations=12, b1=2, b2=2, seed=3, checkpoints="all")
        sched = history.schedule
        # iterates seen before each step: the start, then every checkpointed
        # iterate except the last
        z0 = ergodic_average(history, 1)
        trail = [z0.concat()] + [cp.iterate.concat() for cp in history.checkpoints[:-1]]
        steps = np.array([step_value(sched, t) for t in range(12)])
        for cp in history.checkpoints:
            want_weight = steps[: cp.t].sum()
            assert cp.weight_sum == pytest.approx(want_weight, rel=1e-12)
            want_avg = np.zeros_like(trail[0])
            for t in range(cp.t):
                want_avg += steps[t] * trail[t]
            want_avg /= want_weight
            assert np.abs(cp.average.concat() - want_avg).max() <= 1e-12

    def test_checkpoints_replay_bit_for_bit(self):
        # each checkpoint carries the exact step size and batch that produced
        # its iterate, so one manual step from the previous iterate lands on it
        game = build_cvar_game(n=2, n_i=2, m=8, alpha=0.9, seed=55, bounds=3.0)
        history = run(game, iterations=9, b1=3, b2=4, seed=5, checkpoints="all")
        prev = ergodic_average(history, 1)
        for cp in history.checkpoints:
            assert cp.step_size == step_value(history.schedule, cp.t - 1)
            replayed = gda_step(game, prev, cp.step_size, cp.step_size, cp.batch)
            assert np.array_equal(replayed.concat(), cp.iterate.concat())
            want_norm = math.sqrt(float(np.sum((replayed.concat() - prev.concat()) ** 2)))
            assert cp.step_norm == pytest.approx(want_norm, abs=1e-15)
            prev = cp.iterate
        assert np.array_equal(history.final.concat(), prev.concat())

    def test_everything_stays_feasible(self):
        game = build_cvar_game(n=3, n_i=2, m=7, alpha=0.95, seed=56, bounds=2.0)
        history = run(game, iterations=50, b1=2, b2=2, seed=9)
        for cp in history.checkpoints:
            assert game.contains(cp.iterate, tol=1e-9)
            assert game.contains(cp.average, tol=1e-9)
        assert game.contains(history.final, tol=1e-9)

    def test_record_errors_tracks_sampling_noise(self):
        game = build_cvar_game(n=2, n_i=2, m=9, alpha=0.9, seed=57, bounds=3.0)
        noisy = run(game, iterations=16, b1=2, b2=2, seed=4, record_errors=True)
        assert [t for t, _, _ in noisy.errors] == [cp.t for cp in noisy.checkpoints]
        assert any(np.abs(w1).max() > 0 for _, w1, _ in noisy.errors)
        for _, w1, w2 in noisy.errors:
            assert w1.shape == (game.x_dim,) and w2.shape == (game.p_dim,)
        exact = run(game, iterations=16, seed=4, record_errors=True)
        for _, w1, w2 in exact.errors:
            assert np.all(w1 == 0.0) and np.all(w2 == 0.0)
        assert run(game, iterations=4, seed=4).errors is None

    def test_scalar_quadratic_converges(self):
        game = _scalar_game()
        z0 = JointPoint(np.array([1.0]), np.array([1.0]))
        history = run(game, iterations=2000, z0=z0)
        assert abs(history.final.x[0]) <= 1e-3
        assert abs(ergodic_average(history).x[0]) <= 0.1

    def test_rejects_bad_arguments(self):
        game = _scalar_game()
        with pytest.raises(ValueError, match="positive integer"):
            run(game, iterations=0)
        with pytest.raises(ValueError, match="batch sizes"):
            run(game, iterations=5, b1=0)
        with pytest.raises(ValueError, match="batch sizes"):
            run(game, iterations=5, b2=2)

    def test_non_finite_failure_names_the_iteration(self):
        with pytest.raises(FloatingPointError, match="at iteration 0"):
            run(_broken_game(), iterations=5)


class TestErgodicAverage:
    def test_defaults_to_the_full_run(self):
        game = build_quadratic_game(n=2, n_i=2, m=4, seed=58, bounds=3.0)
        history = run(game, iterations=20, b1=2, b2=2, seed=0)
        full = ergodic_average(history)
        last = history.checkpoints[-1]
        assert last.t == 20
        assert np.array_equal(full.concat(), last.average.concat())

    def test_unrecorded_checkpoint_is_an_error(self):
        game = _scalar_game()
        history = run(game, iterations=10, checkpoints=[5])
        with pytest.raises(ValueError, match="no checkpoint at t=7"):
            ergodic_average(history, 7)
