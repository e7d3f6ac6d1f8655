"""Growing residual students under distillation: core bindings."""

from ._ev3 import (
    CalibrationError,
    ConfigError,
    ContractError,
    DimensionError,
    GraphSpec,
    ParameterSet,
    StageSpec,
    deepen,
    forward,
    generate_dataset,
    init_params,
    normalize_config,
    param_count,
    preset,
    run,
    significantly_better,
    size_ladder,
    z_critical,
    z_score,
)

TRACE_COLUMNS = (
    "regime", "seed", "t", "depth", "param_count", "train_err", "val_err", "test_err",
    "arm_id", "accepted", "expanded", "cum_steps", "pass", "assess_n",
    "incumbent_correct", "candidate_correct",
)
PARETO_COLUMNS = ("regime", "depth", "param_count", "best_test_err")

__all__ = [name for name in dir() if not name.startswith("_")]
