"""Euclidean projections onto the feasible sets of a game.

The joint feasible set is a product of one box (all strategy blocks) and
``n`` probability simplices (one scenario-weight vector per player), so the
projection splits into a componentwise clamp and independent simplex
projections.  The simplex routine is the usual sort-and-threshold method; for
very long weight vectors the running sums are compensated so the threshold
does not drift.
"""

from __future__ import annotations

import numpy as np

from .games import GameDefinition, JointPoint

__all__ = ["project_box", "project_simplex", "project_joint"]

# beyond this length a plain float64 cumulative sum can lose enough precision
# to move the simplex threshold; switch to compensated summation
_COMPENSATE_FROM = 10_000


def project_box(v: np.ndarray, lower: np.ndarray, upper: np.ndarray) -> np.ndarray:
    """Project ``v`` onto ``{x : lower <= x <= upper}`` (componentwise clamp)."""
    v = np.asarray(v, dtype=float)
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    if v.shape != lower.shape or v.shape != upper.shape:
        raise ValueError(
            f"shape mismatch: point {v.shape}, lower {lower.shape}, upper {upper.shape}"
        )
    if np.any(lower > upper):
        raise ValueError("box is empty: lower > upper somewhere")
    return np.clip(v, lower, upper)


def _prefix_sums(u: np.ndarray) -> np.ndarray:
    if u.size < _COMPENSATE_FROM:
        return np.cumsum(u)
    out = np.empty_like(u)
    total = 0.0
    carry = 0.0
    for k, value in enumerate(u):
        y = value - carry
        t = total + y
        carry = (t - total) - y
        total = t
        out[k] = total
    return out


def project_simplex(v: np.ndarray) -> np.ndarray:
    """Project ``v`` onto the probability simplex ``{p >= 0, sum(p) = 1}``.

    Sorts the coordinates in decreasing order (stable, so ties keep their
    original relative order), finds the largest support size ``k`` with
    ``v_(k) - (sum of top k - 1) / k > 0`` and clips at that threshold.
    """
    v = np.asarray(v, dtype=float)
    if v.ndim != 1 or v.size == 0:
        raise ValueError(f"expected a nonempty vector, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValueError("cannot project a vector with non-finite entries")
    order = np.argsort(-v, kind="stable")
    u = v[order]
    sums = _prefix_sums(u)
    counts = np.arange(1, v.size + 1)
    support = np.nonzero(u - (sums - 1.0) / counts > 0.0)[0]
    k = support[-1]  # the condition always holds at k = 0
    tau = (sums[k] - 1.0) / (k + 1.0)
    return np.maximum(v - tau, 0.0)


def _project_simplex_rows(rows: np.ndarray) -> np.ndarray:
    """Row-wise simplex projection; rows short enough for plain cumsum."""
    u = -np.sort(-rows, axis=1, kind="stable")
    sums = np.cumsum(u, axis=1)
    counts = np.arange(1, rows.shape[1] + 1)
    mask = u - (sums - 1.0) / counts > 0.0
    k = mask.shape[1] - 1 - np.argmax(mask[:, ::-1], axis=1)
    tau = (sums[np.arange(rows.shape[0]), k] - 1.0) / (k + 1.0)
    return np.maximum(rows - tau[:, None], 0.0)


def project_joint(z: JointPoint, game: GameDefinition) -> JointPoint:
    """Project a joint point onto the game's box-times-simplices set."""
    if z.x.shape != (game.x_dim,) or z.p.shape != (game.p_dim,):
        raise ValueError(
            f"point has shapes x{z.x.shape}, p{z.p.shape}; game expects "
            f"x({game.x_dim},), p({game.p_dim},)"
        )
    x = project_box(z.x, game.lower, game.upper)
    rows = np.asarray(z.p, dtype=float).reshape(game.n, game.m)
    if not np.all(np.isfinite(rows)):
        raise ValueError("cannot project a vector with non-finite entries")
    if game.m < _COMPENSATE_FROM:
        p = _project_simplex_rows(rows).ravel()
    else:
        p = np.concatenate([project_simplex(row) for row in rows])
    return JointPoint(x, p)
