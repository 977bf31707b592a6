"""Distributionally robust Nash games: models, solver, diagnostics.

Players minimise worst-case expected scenario costs over simplex ambiguity
sets.  Stacking all optimality conditions yields one monotone saddle-point
operator; :func:`run` applies projected stochastic descent-ascent to it, and
the diagnostics quantify convergence through restricted gap functions,
projected residuals and empirical rate fits.
"""

from .games import (
    GameDefinition,
    JointPoint,
    ScenarioSet,
    build_cvar_game,
    build_quadratic_game,
    cvar_cost,
    cvar_subgradient,
    load_instance,
    quadratic_loss,
    save_instance,
)
from .projections import project_box, project_joint, project_simplex
from .operators import (
    MiniBatch,
    batch_g1,
    batch_g2,
    full_g,
    full_g1,
    full_g2,
    sample_batch,
    sample_minibatch,
)
from .solver import (
    Checkpoint,
    RunHistory,
    StepSchedule,
    ergodic_average,
    gda_step,
    run,
    step_value,
)
from .diagnostics import (
    AssumptionReport,
    GapEstimate,
    ProbeSet,
    RateFit,
    build_probe_set,
    fit_rate,
    probe_assumptions,
    projected_residual,
    restricted_gap,
    standard_probes,
)
from .config import (
    ConfigError,
    ExperimentConfig,
    InstanceConfig,
    OutputConfig,
    SolverConfig,
    build_game,
    load_config,
    save_config,
)
from .experiments import (
    ResultBundle,
    RunResult,
    execute_run,
    experiment_start,
    run_experiment,
    write_bundle,
)
from .selftest import CheckResult, selftest

__version__ = "0.1.0"

__all__ = [
    "GameDefinition",
    "JointPoint",
    "ScenarioSet",
    "build_cvar_game",
    "build_quadratic_game",
    "cvar_cost",
    "cvar_subgradient",
    "quadratic_loss",
    "save_instance",
    "load_instance",
    "project_box",
    "project_simplex",
    "project_joint",
    "MiniBatch",
    "sample_batch",
    "sample_minibatch",
    "full_g1",
    "full_g2",
    "full_g",
    "batch_g1",
    "batch_g2",
    "StepSchedule",
    "step_value",
    "gda_step",
    "run",
    "ergodic_average",
    "Checkpoint",
    "RunHistory",
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
    "ConfigError",
    "InstanceConfig",
    "SolverConfig",
    "OutputConfig",
    "ExperimentConfig",
    "load_config",
    "save_config",
    "build_game",
    "RunResult",
    "ResultBundle",
    "execute_run",
    "experiment_start",
    "run_experiment",
    "write_bundle",
    "CheckResult",
    "selftest",
    "__version__",
]
