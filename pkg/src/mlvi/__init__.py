"""Variational inference with multi-level Monte Carlo gradient estimation.

A diagonal-Gaussian variational family optimized by stochastic gradients
from three interchangeable estimators: plain Monte Carlo, randomized
quasi-Monte Carlo (shifted Sobol), and a multi-level estimator that
recycles the previous iterate's gradient as the coarse level and adapts
its sample size per iteration.  Includes the model zoo, schedulers,
metrics, and a reproducible benchmark harness with a CLI.
"""

from .core import (ConfigError, EstimateKind, Estimator, ExperimentConfig,
                   GradientEstimate, Model, MrgState, Optimizer,
                   SampleSizeRule, ScheduleConfig, ScheduleKind, StepRounding,
                   VariationalParams, validate_config)
from .harness import (RunTrace, emit_summary_plot, read_trace_csv,
                      run_experiment, write_trace_csv)
from .models import Dataset, ModelSpec, Rows
from .rng import NoiseBatch

__version__ = "0.1.0"

__all__ = [
    "ConfigError", "Dataset", "EstimateKind", "Estimator", "ExperimentConfig",
    "GradientEstimate", "Model", "ModelSpec", "MrgState", "NoiseBatch",
    "Optimizer", "Rows", "RunTrace", "SampleSizeRule", "ScheduleConfig",
    "ScheduleKind", "StepRounding", "VariationalParams", "emit_summary_plot",
    "read_trace_csv", "run_experiment", "validate_config", "write_trace_csv",
    "__version__",
]
