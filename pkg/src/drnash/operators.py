"""Saddle-point operator of a game and its mini-batch estimators.

Stacking every player's weighted scenario subgradient gives the descent block

    g1(x, p)_i = sum_j p_ij * subgrad_i(x; scenario j)

and stacking the negated scenario costs gives the ascent block

    g2(x, p)_ij = -cost_i(x; scenario j).

The mini-batch versions replace the sums with rescaled partial sums over index
sets drawn uniformly without replacement; one draw is shared by all players
within an iteration, and the two blocks use independent draws.  Rescaling by
``m / b`` makes both estimators exactly unbiased.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .games import GameDefinition, JointPoint

__all__ = [
    "MiniBatch",
    "sample_batch",
    "sample_minibatch",
    "full_g1",
    "full_g2",
    "full_g",
    "batch_g1",
    "batch_g2",
]


@dataclass(frozen=True, eq=False)
class MiniBatch:
    """Scenario index sets for one iteration: ``b1`` feeds g1, ``b2`` feeds g2."""

    b1: np.ndarray
    b2: np.ndarray


def sample_batch(m: int, b: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``b`` of ``m`` scenario indices uniformly without replacement.

    Returns a sorted index array.  Every size-``b`` subset is equally likely;
    ``b == m`` degenerates to the full index range.
    """
    if not 1 <= b <= m:
        raise ValueError(f"batch size must satisfy 1 <= b <= m, got b={b}, m={m}")
    return np.sort(rng.choice(m, size=b, replace=False))


def sample_minibatch(m: int, b1: int, b2: int, rng: np.random.Generator) -> MiniBatch:
    """Draw the two per-iteration batches; the draws are independent."""
    return MiniBatch(b1=sample_batch(m, b1, rng), b2=sample_batch(m, b2, rng))


def _check_point(game: GameDefinition, z: JointPoint) -> np.ndarray:
    if z.x.shape != (game.x_dim,) or z.p.shape != (game.p_dim,):
        raise ValueError(
            f"point has shapes x{z.x.shape}, p{z.p.shape}; game expects "
            f"x({game.x_dim},), p({game.p_dim},)"
        )
    return z.p.reshape(game.n, game.m)


def _check_batch(game: GameDefinition, idx: np.ndarray) -> np.ndarray:
    idx = np.asarray(idx)
    if idx.size == 0:
        raise ValueError("batch is empty")
    if idx.min() < 0 or idx.max() >= game.m:
        raise ValueError(f"batch indices must lie in [0, {game.m}), got {idx}")
    return idx


def batch_g1(game: GameDefinition, z: JointPoint, idx: np.ndarray) -> np.ndarray:
    """Mini-batch descent block ``(m / b) * sum_{j in idx} p_ij * subgrad_ij``."""
    rows = _check_point(game, z)
    idx = _check_batch(game, idx)
    scale = game.m / idx.size
    out = np.empty(game.x_dim)
    for i, block in enumerate(game.x_slices):
        grads = game.subgrad_many(i, z.x, idx)
        out[block] = scale * (rows[i, idx] @ grads)
    return out


def batch_g2(game: GameDefinition, z: JointPoint, idx: np.ndarray) -> np.ndarray:
    """Mini-batch ascent block; entries outside ``idx`` are zero."""
    _check_point(game, z)
    idx = _check_batch(game, idx)
    scale = game.m / idx.size
    out = np.zeros(game.p_dim)
    for i, block in enumerate(game.p_slices):
        values = np.zeros(game.m)
        values[idx] = -scale * game.cost_many(i, z.x, idx)
        out[block] = values
    return out


_FULL_IDX_CACHE: dict[int, np.ndarray] = {}


def _full_idx(m: int) -> np.ndarray:
    idx = _FULL_IDX_CACHE.get(m)
    if idx is None:
        idx = np.arange(m)
        idx.setflags(write=False)
        _FULL_IDX_CACHE[m] = idx
    return idx


def full_g1(game: GameDefinition, z: JointPoint) -> np.ndarray:
    """Exact descent block (all scenarios)."""
    return batch_g1(game, z, _full_idx(game.m))


def full_g2(game: GameDefinition, z: JointPoint) -> np.ndarray:
    """Exact ascent block (all scenarios)."""
    return batch_g2(game, z, _full_idx(game.m))


def full_g(game: GameDefinition, z: JointPoint) -> tuple[np.ndarray, np.ndarray]:
    """Both exact blocks as a pair ``(g1, g2)``."""
    return full_g1(game, z), full_g2(game, z)
