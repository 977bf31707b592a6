"""Experiment configuration: one JSON file, three blocks, no other inputs.

A config fully determines an experiment: the ``instance`` block names the
game family and its construction parameters, the ``solver`` block fixes the
run grid (iterations, batch sizes, schedule, seeds, logging cadence) and the
``output`` block says where and what to write.  Environment variables are
never consulted, and every seed is explicit, so a config plus this package
version reproduces the outputs byte for byte.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

from .games import GameDefinition, build_cvar_game, build_quadratic_game
from .solver import StepSchedule

__all__ = [
    "ConfigError",
    "InstanceConfig",
    "SolverConfig",
    "OutputConfig",
    "ExperimentConfig",
    "load_config",
    "save_config",
    "build_game",
]


class ConfigError(ValueError):
    """Schema violation; the message starts with the offending field path."""


@dataclass(frozen=True)
class InstanceConfig:
    family: str = "cvar"
    n: int = 5
    n_i: int = 10
    m: int = 100
    alpha: float = 0.95
    bounds: float = 10.0
    seed: int = 0
    xi1_range: tuple[float, float] = (0.5, 1.5)
    xi2_range: tuple[float, float] = (-1.0, 1.0)


@dataclass(frozen=True)
class SolverConfig:
    iterations: int = 20_000
    b1: tuple[int, ...] = (5, 20, 100)
    b2: tuple[int, ...] = (5, 20, 100)
    schedule: str = "sqrt_log"
    step_value: float | None = None
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)
    checkpoints: str | tuple[int, ...] = "geometric"


@dataclass(frozen=True)
class OutputConfig:
    directory: str = "out"
    emit_csv: bool = True
    emit_svg: bool = True


@dataclass(frozen=True)
class ExperimentConfig:
    instance: InstanceConfig
    solver: SolverConfig
    output: OutputConfig

    def step_schedule(self) -> StepSchedule:
        if self.solver.schedule == "sqrt_log":
            return StepSchedule.sqrt_log()
        return StepSchedule.constant(self.solver.step_value)

    def to_dict(self) -> dict:
        data = {
            "instance": asdict(self.instance),
            "solver": asdict(self.solver),
            "output": asdict(self.output),
        }
        data["instance"]["xi1_range"] = list(self.instance.xi1_range)
        data["instance"]["xi2_range"] = list(self.instance.xi2_range)
        data["solver"]["b1"] = list(self.solver.b1)
        data["solver"]["b2"] = list(self.solver.b2)
        data["solver"]["seeds"] = list(self.solver.seeds)
        cps = self.solver.checkpoints
        data["solver"]["checkpoints"] = cps if isinstance(cps, str) else list(cps)
        return data


_MISSING = object()


def _is_int(value) -> bool:
    return isinstance(value, int) and not isinstance(value, bool)


def _need(block: dict, block_name: str, key: str, kind, default=_MISSING):
    if key not in block:
        if default is not _MISSING:
            return default
        raise ConfigError(f"{block_name}.{key}: required field is missing")
    value = block[key]
    if kind is bool and isinstance(value, bool):
        return value
    if kind is int and _is_int(value):
        return value
    if kind is float and (_is_int(value) or isinstance(value, float)):
        return float(value)
    if kind is str and isinstance(value, str):
        return value
    raise ConfigError(f"{block_name}.{key}: expected {kind.__name__}, got {value!r}")


def _int_list(block: dict, block_name: str, key: str, default) -> tuple[int, ...]:
    value = block.get(key, default)
    if _is_int(value):
        value = [value]
    if not isinstance(value, (list, tuple)) or not value:
        raise ConfigError(
            f"{block_name}.{key}: expected an integer or nonempty list of integers"
        )
    for k, entry in enumerate(value):
        if not _is_int(entry):
            raise ConfigError(f"{block_name}.{key}[{k}]: expected an integer, got {entry!r}")
    return tuple(int(v) for v in value)


def _pair(block: dict, block_name: str, key: str, default) -> tuple[float, float]:
    value = block.get(key, default)
    if not isinstance(value, (list, tuple)) or len(value) != 2:
        raise ConfigError(f"{block_name}.{key}: expected a [low, high] pair")
    low, high = value
    for label, entry in (("low", low), ("high", high)):
        if isinstance(entry, bool) or not isinstance(entry, (int, float)):
            raise ConfigError(f"{block_name}.{key}: {label} end must be a number")
    if not low < high:
        raise ConfigError(f"{block_name}.{key}: must satisfy low < high, got {value}")
    return (float(low), float(high))


def _parse_instance(block: dict) -> InstanceConfig:
    family = _need(block, "instance", "family", str, "cvar")
    if family not in ("cvar", "quadratic"):
        raise ConfigError(f"instance.family: unknown family {family!r}")
    cfg = InstanceConfig(
        family=family,
        n=_need(block, "instance", "n", int),
        n_i=_need(block, "instance", "n_i", int),
        m=_need(block, "instance", "m", int),
        alpha=_need(block, "instance", "alpha", float, 0.95),
        bounds=_need(block, "instance", "bounds", float, 10.0),
        seed=_need(block, "instance", "seed", int),
        xi1_range=_pair(block, "instance", "xi1_range", [0.5, 1.5]),
        xi2_range=_pair(block, "instance", "xi2_range", [-1.0, 1.0]),
    )
    if cfg.n < 1:
        raise ConfigError(f"instance.n: must be >= 1, got {cfg.n}")
    if cfg.n_i < 1:
        raise ConfigError(f"instance.n_i: must be >= 1, got {cfg.n_i}")
    if cfg.m < 1:
        raise ConfigError(f"instance.m: must be >= 1, got {cfg.m}")
    if not 0.0 <= cfg.alpha < 1.0:
        raise ConfigError(f"instance.alpha: must lie in [0, 1), got {cfg.alpha}")
    if not cfg.bounds > 0.0:
        raise ConfigError(f"instance.bounds: must be positive, got {cfg.bounds}")
    if cfg.seed < 0:
        # seeds feed numpy generators, which reject negative values
        raise ConfigError(f"instance.seed: must be >= 0, got {cfg.seed}")
    if cfg.xi1_range[0] <= 0.0 and family == "cvar":
        raise ConfigError(
            f"instance.xi1_range: lower end must be positive to keep scenario "
            f"losses convex, got {cfg.xi1_range[0]}"
        )
    return cfg


def _parse_solver(block: dict, m: int) -> SolverConfig:
    iterations = _need(block, "solver", "iterations", int)
    if iterations < 1:
        raise ConfigError(f"solver.iterations: must be >= 1, got {iterations}")
    b1 = _int_list(block, "solver", "b1", [m])
    b2 = _int_list(block, "solver", "b2", list(b1))
    if len(b1) != len(b2):
        raise ConfigError(
            f"solver.b2: must pair up with solver.b1 ({len(b1)} entries), "
            f"got {len(b2)}"
        )
    if len(set(b1)) != len(b1):
        # b1 labels the per-run output files, so duplicates would collide
        raise ConfigError(f"solver.b1: batch sizes must be distinct, got {list(b1)}")
    for key, sizes in (("b1", b1), ("b2", b2)):
        for k, b in enumerate(sizes):
            if not 1 <= b <= m:
                raise ConfigError(
                    f"solver.{key}[{k}]: batch size must lie in [1, {m}], got {b}"
                )
    schedule = _need(block, "solver", "schedule", str, "sqrt_log")
    if schedule not in ("sqrt_log", "constant"):
        raise ConfigError(f"solver.schedule: unknown schedule {schedule!r}")
    step = block.get("step_value")
    if schedule == "constant":
        if not isinstance(step, (int, float)) or isinstance(step, bool) or not step > 0:
            raise ConfigError(
                f"solver.step_value: constant schedule needs a positive number, got {step!r}"
            )
        step = float(step)
    elif step is not None:
        raise ConfigError("solver.step_value: only valid with the constant schedule")
    seeds = _int_list(block, "solver", "seeds", [0])
    if len(set(seeds)) != len(seeds):
        raise ConfigError(f"solver.seeds: seeds must be distinct, got {list(seeds)}")
    for k, s in enumerate(seeds):
        if s < 0:
            raise ConfigError(f"solver.seeds[{k}]: must be >= 0, got {s}")
    checkpoints = block.get("checkpoints", "geometric")
    if isinstance(checkpoints, str):
        if checkpoints not in ("geometric", "all"):
            raise ConfigError(
                f"solver.checkpoints: expected 'geometric', 'all' or a list, got {checkpoints!r}"
            )
    else:
        checkpoints = _int_list(block, "solver", "checkpoints", checkpoints)
        for k, t in enumerate(checkpoints):
            if not 1 <= t <= iterations:
                raise ConfigError(
                    f"solver.checkpoints[{k}]: must lie in [1, {iterations}], got {t}"
                )
    return SolverConfig(
        iterations=iterations,
        b1=b1,
        b2=b2,
        schedule=schedule,
        step_value=step,
        seeds=seeds,
        checkpoints=checkpoints,
    )


def _parse_output(block: dict) -> OutputConfig:
    return OutputConfig(
        directory=_need(block, "output", "directory", str, "out"),
        emit_csv=_need(block, "output", "emit_csv", bool, True),
        emit_svg=_need(block, "output", "emit_svg", bool, True),
    )


def parse_config(data: dict) -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ConfigError(f"top level: expected an object, got {type(data).__name__}")
    for name in ("instance", "solver", "output"):
        if name in data and not isinstance(data[name], dict):
            raise ConfigError(f"{name}: expected an object")
    known = {"instance", "solver", "output"}
    for key in data:
        if key not in known:
            raise ConfigError(f"{key}: unknown top-level block")
    if "instance" not in data:
        raise ConfigError("instance: required block is missing")
    if "solver" not in data:
        raise ConfigError("solver: required block is missing")
    instance = _parse_instance(data["instance"])
    solver = _parse_solver(data["solver"], instance.m)
    output = _parse_output(data.get("output", {}))
    return ExperimentConfig(instance=instance, solver=solver, output=output)


def load_config(path: str | Path) -> ExperimentConfig:
    """Read and validate a config file; raises :class:`ConfigError` on bad schema."""
    with open(path, "r", encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"top level: not valid JSON ({exc})") from None
    return parse_config(data)


def save_config(config: ExperimentConfig, path: str | Path) -> None:
    """Write a config back out; loading the result reproduces it exactly."""
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(config.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def build_game(instance: InstanceConfig) -> GameDefinition:
    """Construct the game an instance block describes."""
    if instance.family == "cvar":
        return build_cvar_game(
            n=instance.n,
            n_i=instance.n_i,
            m=instance.m,
            alpha=instance.alpha,
            seed=instance.seed,
            bounds=instance.bounds,
            xi1_range=instance.xi1_range,
            xi2_range=instance.xi2_range,
        )
    if instance.family == "quadratic":
        return build_quadratic_game(
            n=instance.n,
            n_i=instance.n_i,
            m=instance.m,
            seed=instance.seed,
            bounds=instance.bounds,
            xi1_range=instance.xi1_range,
            xi2_range=instance.xi2_range,
        )
    raise ConfigError(f"instance.family: unknown family {instance.family!r}")
