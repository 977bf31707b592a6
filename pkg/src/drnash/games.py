"""Game models for distributionally robust Nash equilibrium problems.

Each of the ``n`` players picks a strategy from a box and plays against an
ambiguity adversary that reweights a finite set of ``m`` cost scenarios on the
probability simplex.  A game is described by per-scenario cost oracles and a
per-scenario subgradient oracle for every player; the saddle-point operator in
:mod:`drnash.operators` is assembled from those pieces.

Two concrete families ship with the package:

* :func:`build_cvar_game` -- players minimise the conditional value at risk of
  a random quadratic loss.  Each player's strategy block carries one auxiliary
  threshold coordinate so the CVaR appears as a plain expectation of a hinge.
* :func:`build_quadratic_game` -- the same random quadratic losses without the
  risk transform.  Its scenario costs are smooth and strongly monotone in the
  strategies, which makes it the reference instance for monotonicity probes.

Custom games can be built by constructing :class:`GameDefinition` directly
with vectorised oracles.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Callable

import numpy as np

__all__ = [
    "JointPoint",
    "KinkFlip",
    "ScenarioSet",
    "GameDefinition",
    "quadratic_loss",
    "cvar_cost",
    "cvar_subgradient",
    "build_cvar_game",
    "build_quadratic_game",
    "save_instance",
    "load_instance",
]

INSTANCE_FILE = "instance.json"
SCENARIO_FILE = "scenarios.csv"
CVECTOR_FILE = "c_vector.csv"


@dataclass(frozen=True, eq=False)
class JointPoint:
    """One point of the joint strategy/weight space.

    ``x`` concatenates all player strategy blocks (auxiliary coordinates
    included, when the game has them) and ``p`` concatenates the ``n``
    scenario-weight vectors, each of length ``m``.
    """

    x: np.ndarray
    p: np.ndarray

    def copy(self) -> "JointPoint":
        return JointPoint(self.x.copy(), self.p.copy())

    def concat(self) -> np.ndarray:
        """Flatten to a single vector ``[x; p]`` (used by gap evaluations)."""
        return np.concatenate([self.x, self.p])


@dataclass(frozen=True)
class KinkFlip:
    """Alternative subgradient branch available at a hinge kink.

    ``delta`` is the change of the player's per-scenario subgradient block
    when the branch indicator at scenario ``j`` flips from its default value.
    """

    player: int
    scenario: int
    delta: np.ndarray


@dataclass(frozen=True, eq=False)
class ScenarioSet:
    """Sampled scenario data shared by the built-in game families.

    ``xi1`` and ``xi2`` have shape ``(n, m)``; ``c`` is the joint linear-cost
    vector over all strategy coordinates (auxiliary coordinates excluded).
    """

    xi1: np.ndarray
    xi2: np.ndarray
    c: np.ndarray

    def __post_init__(self) -> None:
        for arr in (self.xi1, self.xi2, self.c):
            arr.setflags(write=False)


@dataclass(frozen=True, eq=False)
class GameDefinition:
    """Immutable description of one game instance.

    The oracles are vectorised over scenarios: ``cost_many(i, x, idx)``
    returns the scenario costs ``f_i(x; xi_ij)`` for ``j in idx`` as a vector,
    and ``subgrad_many(i, x, idx)`` returns the matching subgradients with
    respect to player ``i``'s own block, one row per scenario.  ``x`` is
    always the full concatenated strategy vector.

    ``kink_flips``, when present, reports the alternative subgradient
    branches available at a point (see :class:`KinkFlip`); smooth games leave
    it as ``None``.
    """

    n: int
    m: int
    block_dims: tuple[int, ...]
    lower: np.ndarray
    upper: np.ndarray
    cost_many: Callable[[int, np.ndarray, np.ndarray], np.ndarray]
    subgrad_many: Callable[[int, np.ndarray, np.ndarray], np.ndarray]
    kink_flips: Callable[[np.ndarray, float], list[KinkFlip]] | None = None
    family: str = "custom"
    params: dict | None = None
    scenarios: ScenarioSet | None = None

    def __post_init__(self) -> None:
        if self.n < 1 or self.m < 1:
            raise ValueError(f"need n >= 1 and m >= 1, got n={self.n}, m={self.m}")
        if len(self.block_dims) != self.n:
            raise ValueError(
                f"block_dims has {len(self.block_dims)} entries for {self.n} players"
            )
        if self.lower.shape != (self.x_dim,) or self.upper.shape != (self.x_dim,):
            raise ValueError(
                f"bound vectors must have shape ({self.x_dim},), got "
                f"{self.lower.shape} and {self.upper.shape}"
            )
        if np.any(self.lower > self.upper):
            raise ValueError("box is empty: lower > upper somewhere")
        self.lower.setflags(write=False)
        self.upper.setflags(write=False)

    @cached_property
    def x_dim(self) -> int:
        return int(sum(self.block_dims))

    @cached_property
    def p_dim(self) -> int:
        return self.n * self.m

    @cached_property
    def x_slices(self) -> tuple[slice, ...]:
        offsets = np.cumsum((0,) + self.block_dims)
        return tuple(slice(int(a), int(b)) for a, b in zip(offsets[:-1], offsets[1:]))

    @cached_property
    def p_slices(self) -> tuple[slice, ...]:
        return tuple(slice(i * self.m, (i + 1) * self.m) for i in range(self.n))

    def initial_point(self) -> JointPoint:
        """Box centre for the strategies, uniform weights for the adversary."""
        x0 = 0.5 * (self.lower + self.upper)
        p0 = np.full(self.p_dim, 1.0 / self.m)
        return JointPoint(x0, p0)

    def contains(self, z: JointPoint, tol: float = 1e-9) -> bool:
        if z.x.shape != (self.x_dim,) or z.p.shape != (self.p_dim,):
            return False
        if np.any(z.x < self.lower - tol) or np.any(z.x > self.upper + tol):
            return False
        rows = z.p.reshape(self.n, self.m)
        if np.any(rows < -tol):
            return False
        return bool(np.all(np.abs(rows.sum(axis=1) - 1.0) <= max(tol, 1e-12)))

    def diameter(self) -> float:
        """Euclidean diameter of the joint feasible set.

        Each weight simplex has diameter sqrt(2); the blocks are orthogonal,
        so the squares add up.
        """
        box_sq = float(np.sum((self.upper - self.lower) ** 2))
        return float(np.sqrt(box_sq + 2.0 * self.n))

    def cost(self, i: int, x: np.ndarray, j: int) -> float:
        """Scenario cost of player ``i`` at joint strategy ``x``, scenario ``j``."""
        return float(self.cost_many(i, np.asarray(x, dtype=float), np.array([j]))[0])

    def subgrad(self, i: int, x: np.ndarray, j: int) -> np.ndarray:
        """Scenario subgradient of player ``i`` with respect to its own block."""
        return self.subgrad_many(i, np.asarray(x, dtype=float), np.array([j]))[0]


# ---------------------------------------------------------------------------
# scenario costs for the built-in families
# ---------------------------------------------------------------------------


def quadratic_loss(x: np.ndarray, xi1: float, xi2: float, c: np.ndarray) -> float:
    """Random quadratic loss ``0.5 * xi1 * ||x||^2 + xi2 * c @ x``.

    ``x`` is the joint strategy vector over all players, without auxiliary
    coordinates.  Every player of a built-in game shares this loss shape and
    differs only through its own scenario draws ``(xi1, xi2)``.
    """
    x = np.asarray(x, dtype=float)
    return float(0.5 * xi1 * (x @ x) + xi2 * (c @ x))


def cvar_cost(
    x: np.ndarray, u: float, xi1: float, xi2: float, alpha: float, c: np.ndarray
) -> float:
    """Scenario cost of the risk-averse family.

    Evaluates ``u + max(h - u, 0) / (1 - alpha)`` where ``h`` is
    :func:`quadratic_loss`.  Averaging this expression over scenarios and
    minimising over the threshold ``u`` yields the CVaR of the loss at
    level ``alpha``.
    """
    if not 0.0 <= alpha < 1.0:
        raise ValueError(f"alpha must lie in [0, 1), got {alpha}")
    h = quadratic_loss(x, xi1, xi2, c)
    return u + max(h - u, 0.0) / (1.0 - alpha)


def cvar_subgradient(
    x: np.ndarray,
    u: float,
    xi1: float,
    xi2: float,
    alpha: float,
    c: np.ndarray,
    block: slice,
) -> tuple[np.ndarray, float]:
    """Subgradient of :func:`cvar_cost` in one player's own coordinates.

    ``block`` selects the player's strategy coordinates inside ``x`` (and the
    matching slice of ``c``).  Returns the pair ``(g_x, g_u)``.  At the hinge
    kink ``h == u`` the inactive branch is used, i.e. the indicator is 0.
    """
    if not 0.0 <= alpha < 1.0:
        raise ValueError(f"alpha must lie in [0, 1), got {alpha}")
    x = np.asarray(x, dtype=float)
    h = quadratic_loss(x, xi1, xi2, c)
    scale = 1.0 / (1.0 - alpha)
    if h > u:
        g_x = (xi1 * x[block] + xi2 * np.asarray(c, dtype=float)[block]) * scale
        g_u = 1.0 - scale
    else:
        g_x = np.zeros(x[block].shape)
        g_u = 1.0
    return g_x, g_u


# ---------------------------------------------------------------------------
# instance construction
# ---------------------------------------------------------------------------


def _draw_scenarios(
    n: int,
    n_i: int,
    m: int,
    seed: int,
    xi1_range: tuple[float, float],
    xi2_range: tuple[float, float],
) -> ScenarioSet:
    # fixed draw order (xi1, xi2, c) so instances are reproducible by seed
    rng = np.random.default_rng(seed)
    xi1 = rng.uniform(xi1_range[0], xi1_range[1], size=(n, m))
    xi2 = rng.uniform(xi2_range[0], xi2_range[1], size=(n, m))
    c = rng.standard_normal(n * n_i)
    return ScenarioSet(xi1=xi1, xi2=xi2, c=c)


def _validate_family_args(
    n: int, n_i: int, m: int, alpha: float, bounds: float
) -> None:
    if n < 1:
        raise ValueError(f"need at least one player, got n={n}")
    if n_i < 1:
        raise ValueError(f"need at least one strategy coordinate, got n_i={n_i}")
    if m < 1:
        raise ValueError(f"need at least one scenario, got m={m}")
    if not 0.0 <= alpha < 1.0:
        raise ValueError(f"alpha must lie in [0, 1), got {alpha}")
    if not bounds > 0.0:
        raise ValueError(f"strategy bound must be positive, got {bounds}")


def _assemble_cvar_game(params: dict, scen: ScenarioSet) -> GameDefinition:
    n = params["n"]
    n_i = params["n_i"]
    m = params["m"]
    alpha = params["alpha"]
    bounds = params["bounds"]
    xi1, xi2, c = scen.xi1, scen.xi2, scen.c
    scale = 1.0 / (1.0 - alpha)

    block = n_i + 1
    # per-player block layout: n_i strategy coordinates then the threshold u_i
    strat_idx = np.concatenate([np.arange(i * block, i * block + n_i) for i in range(n)])
    aux_idx = np.array([i * block + n_i for i in range(n)])
    own_slices = [slice(i * n_i, (i + 1) * n_i) for i in range(n)]

    # threshold box large enough to keep the optimal u_i strictly interior:
    # |h_i| <= 0.5 max_j xi1_ij * sup||x||^2 + max_j |xi2_ij| * bounds * ||c||_1
    sup_sq = n * n_i * bounds**2
    h_bound = 0.5 * xi1.max(axis=1) * sup_sq + np.abs(xi2).max(axis=1) * bounds * np.abs(c).sum()
    u_bound = np.maximum(h_bound, 1.0)

    lower = np.empty(n * block)
    upper = np.empty(n * block)
    lower[strat_idx] = -bounds
    upper[strat_idx] = bounds
    lower[aux_idx] = -u_bound
    upper[aux_idx] = u_bound

    def cost_many(i: int, x: np.ndarray, idx: np.ndarray) -> np.ndarray:
        xs = x[strat_idx]
        h = 0.5 * (xs @ xs) * xi1[i, idx] + (c @ xs) * xi2[i, idx]
        u = x[aux_idx[i]]
        return u + np.maximum(h - u, 0.0) * scale

    def subgrad_many(i: int, x: np.ndarray, idx: np.ndarray) -> np.ndarray:
        xs = x[strat_idx]
        u = x[aux_idx[i]]
        xi1b = xi1[i, idx]
        xi2b = xi2[i, idx]
        h = 0.5 * (xs @ xs) * xi1b + (c @ xs) * xi2b
        active = h > u  # kink convention: the inactive branch wins ties
        out = np.zeros((idx.size, block))
        own = own_slices[i]
        out[active, :n_i] = (
            np.outer(xi1b[active], xs[own]) + np.outer(xi2b[active], c[own])
        ) * scale
        out[:, n_i] = 1.0 - active * scale
        return out

    def kink_flips(x: np.ndarray, tol: float) -> list[KinkFlip]:
        xs = x[strat_idx]
        flips: list[KinkFlip] = []
        for i in range(n):
            u = x[aux_idx[i]]
            h = 0.5 * (xs @ xs) * xi1[i] + (c @ xs) * xi2[i]
            for j in np.nonzero(np.abs(h - u) <= tol)[0]:
                delta = np.zeros(block)
                delta[:n_i] = (xi1[i, j] * xs[own_slices[i]] + xi2[i, j] * c[own_slices[i]]) * scale
                delta[n_i] = -scale
                flips.append(KinkFlip(player=i, scenario=int(j), delta=delta))
        return flips

    return GameDefinition(
        n=n,
        m=m,
        block_dims=(block,) * n,
        lower=lower,
        upper=upper,
        cost_many=cost_many,
        subgrad_many=subgrad_many,
        kink_flips=kink_flips,
        family="cvar",
        params=dict(params),
        scenarios=scen,
    )


def _assemble_quadratic_game(params: dict, scen: ScenarioSet) -> GameDefinition:
    n = params["n"]
    n_i = params["n_i"]
    m = params["m"]
    bounds = params["bounds"]
    xi1, xi2, c = scen.xi1, scen.xi2, scen.c
    own_slices = [slice(i * n_i, (i + 1) * n_i) for i in range(n)]

    dim = n * n_i
    lower = np.full(dim, -bounds)
    upper = np.full(dim, bounds)

    def cost_many(i: int, x: np.ndarray, idx: np.ndarray) -> np.ndarray:
        return 0.5 * (x @ x) * xi1[i, idx] + (c @ x) * xi2[i, idx]

    def subgrad_many(i: int, x: np.ndarray, idx: np.ndarray) -> np.ndarray:
        own = own_slices[i]
        return np.outer(xi1[i, idx], x[own]) + np.outer(xi2[i, idx], c[own])

    return GameDefinition(
        n=n,
        m=m,
        block_dims=(n_i,) * n,
        lower=lower,
        upper=upper,
        cost_many=cost_many,
        subgrad_many=subgrad_many,
        kink_flips=None,
        family="quadratic",
        params=dict(params),
        scenarios=scen,
    )


_ASSEMBLERS = {"cvar": _assemble_cvar_game, "quadratic": _assemble_quadratic_game}


def build_cvar_game(
    n: int,
    n_i: int,
    m: int,
    alpha: float,
    seed: int,
    bounds: float = 10.0,
    xi1_range: tuple[float, float] = (0.5, 1.5),
    xi2_range: tuple[float, float] = (-1.0, 1.0),
) -> GameDefinition:
    """Build a risk-averse game with random quadratic scenario losses.

    Player ``i`` controls ``n_i`` strategy coordinates in ``[-bounds, bounds]``
    plus one auxiliary threshold coordinate, and its scenario cost is
    :func:`cvar_cost` with scenario draws ``xi1 ~ U(xi1_range)``,
    ``xi2 ~ U(xi2_range)`` and a shared standard-normal linear cost vector.
    All draws come from one ``numpy`` generator seeded with ``seed``.
    """
    _validate_family_args(n, n_i, m, alpha, bounds)
    params = {
        "family": "cvar",
        "n": n,
        "n_i": n_i,
        "m": m,
        "alpha": alpha,
        "bounds": bounds,
        "seed": seed,
        "xi1_range": (float(xi1_range[0]), float(xi1_range[1])),
        "xi2_range": (float(xi2_range[0]), float(xi2_range[1])),
    }
    scen = _draw_scenarios(n, n_i, m, seed, params["xi1_range"], params["xi2_range"])
    return _assemble_cvar_game(params, scen)


def build_quadratic_game(
    n: int,
    n_i: int,
    m: int,
    seed: int,
    bounds: float = 10.0,
    xi1_range: tuple[float, float] = (0.5, 1.5),
    xi2_range: tuple[float, float] = (-1.0, 1.0),
) -> GameDefinition:
    """Risk-neutral twin of :func:`build_cvar_game` (same scenario draws).

    Scenario costs are the raw quadratic losses, so each player's operator
    block is strongly monotone whenever ``xi1 > 0``; there are no auxiliary
    coordinates and no kinks.
    """
    _validate_family_args(n, n_i, m, 0.0, bounds)
    params = {
        "family": "quadratic",
        "n": n,
        "n_i": n_i,
        "m": m,
        "alpha": 0.0,
        "bounds": bounds,
        "seed": seed,
        "xi1_range": (float(xi1_range[0]), float(xi1_range[1])),
        "xi2_range": (float(xi2_range[0]), float(xi2_range[1])),
    }
    scen = _draw_scenarios(n, n_i, m, seed, params["xi1_range"], params["xi2_range"])
    return _assemble_quadratic_game(params, scen)


# ---------------------------------------------------------------------------
# instance serialization
# ---------------------------------------------------------------------------


def save_instance(game: GameDefinition, directory: str | Path) -> None:
    """Write a built-in instance to ``directory``.

    Emits ``instance.json`` with the construction parameters, a scenario
    table ``scenarios.csv`` with columns ``player, j, xi1, xi2`` and the
    linear cost vector as ``c_vector.csv``.  Only games from the built-in
    families carry enough data to be serialised.
    """
    if game.params is None or game.scenarios is None or game.family not in _ASSEMBLERS:
        raise ValueError("only instances from the built-in families can be saved")
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    with open(directory / INSTANCE_FILE, "w", encoding="utf-8") as fh:
        json.dump(game.params, fh, indent=2, sort_keys=True)
        fh.write("\n")
    scen = game.scenarios
    with open(directory / SCENARIO_FILE, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["player", "j", "xi1", "xi2"])
        for i in range(game.n):
            for j in range(game.m):
                # repr of a Python float is the shortest exact round-trip form
                writer.writerow([i, j, repr(float(scen.xi1[i, j])), repr(float(scen.xi2[i, j]))])
    with open(directory / CVECTOR_FILE, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["k", "c"])
        for k, value in enumerate(scen.c):
            writer.writerow([k, repr(float(value))])


def load_instance(directory: str | Path) -> GameDefinition:
    """Rebuild a game saved by :func:`save_instance`.

    The stored tables are authoritative: the scenario data is read back from
    the files rather than redrawn from the seed, so a round trip reproduces
    the oracles bit for bit.
    """
    directory = Path(directory)
    with open(directory / INSTANCE_FILE, "r", encoding="utf-8") as fh:
        params = json.load(fh)
    family = params.get("family", "cvar")
    if family not in _ASSEMBLERS:
        raise ValueError(f"unknown game family {family!r} in {directory / INSTANCE_FILE}")
    params["xi1_range"] = tuple(params["xi1_range"])
    params["xi2_range"] = tuple(params["xi2_range"])
    n, n_i, m = params["n"], params["n_i"], params["m"]

    xi1 = np.zeros((n, m))
    xi2 = np.zeros((n, m))
    seen = np.zeros((n, m), dtype=bool)
    with open(directory / SCENARIO_FILE, "r", newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            i, j = int(row["player"]), int(row["j"])
            if not (0 <= i < n and 0 <= j < m):
                raise ValueError(f"scenario row ({i}, {j}) outside ({n}, {m}) table")
            xi1[i, j] = float(row["xi1"])
            xi2[i, j] = float(row["xi2"])
            seen[i, j] = True
    if not seen.all():
        raise ValueError(f"scenario table is missing {int((~seen).sum())} rows")

    c = np.zeros(n * n_i)
    seen_c = np.zeros(n * n_i, dtype=bool)
    with open(directory / CVECTOR_FILE, "r", newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            k = int(row["k"])
            if not 0 <= k < n * n_i:
                raise ValueError(f"c vector index {k} outside dimension {n * n_i}")
            c[k] = float(row["c"])
            seen_c[k] = True
    if not seen_c.all():
        raise ValueError(f"c vector is missing {int((~seen_c).sum())} entries")

    scen = ScenarioSet(xi1=xi1, xi2=xi2, c=c)
    return _ASSEMBLERS[family](params, scen)
