"""Shared domain types: variational parameters, gradients, run configuration.

The variational family is a diagonal Gaussian over an unconstrained latent
space, stored as (mean, log_scale) so that scale = exp(log_scale) stays
positive under unconstrained gradient steps.  Optimizers see one flat vector
of length 2d ordered [mean | log_scale].
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, fields

import numpy as np

__all__ = [
    "Model",
    "Estimator",
    "Optimizer",
    "ScheduleKind",
    "StepRounding",
    "SampleSizeRule",
    "VariationalParams",
    "GradientEstimate",
    "MrgState",
    "ScheduleConfig",
    "ExperimentConfig",
    "ConfigError",
    "validate_config",
    "config_to_text",
    "parse_config_text",
    "load_config_file",
]


class Model(enum.Enum):
    HLR = "hlr"
    BLR = "blr"
    BNN = "bnn"
    CONJUGATE_GAUSSIAN = "conjugate_gaussian"


class Estimator(enum.Enum):
    MC = "mc"
    RQMC = "rqmc"
    MLMC = "mlmc"


class Optimizer(enum.Enum):
    SGD = "sgd"
    ADAM = "adam"


class ScheduleKind(enum.Enum):
    TIME_BASED = "time_based"
    STEP_BASED = "step_based"
    EXPONENTIAL = "exponential"


class StepRounding(enum.Enum):
    CEIL = "ceil"
    FLOOR = "floor"


class SampleSizeRule(enum.Enum):
    VARIANCE_RATIO = "variance_ratio"
    SCHEDULE_RATIO = "schedule_ratio"


def _readonly(a) -> np.ndarray:
    out = np.array(a, dtype=np.float64, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class VariationalParams:
    """Mean and log-scale of the diagonal-Gaussian variational family.

    Both vectors have length ``dim``; the per-coordinate scale is
    ``exp(log_scale)``.  Instances are immutable value objects; optimizer
    steps construct successors.
    """

    mean: np.ndarray
    log_scale: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "mean", _readonly(self.mean))
        object.__setattr__(self, "log_scale", _readonly(self.log_scale))
        if self.mean.ndim != 1 or self.log_scale.ndim != 1:
            raise ValueError("mean and log_scale must be 1-d vectors")
        if self.mean.shape != self.log_scale.shape:
            raise ValueError(
                f"length mismatch: mean has {self.mean.size}, "
                f"log_scale has {self.log_scale.size}"
            )
        if self.mean.size < 1:
            raise ValueError("dimension must be >= 1")
        if not (np.isfinite(self.mean).all() and np.isfinite(self.log_scale).all()):
            raise ValueError("non-finite entries in variational parameters")

    @property
    def dim(self) -> int:
        return self.mean.size

    @property
    def scale(self) -> np.ndarray:
        return np.exp(self.log_scale)

    def to_flat(self) -> np.ndarray:
        """Flat [mean | log_scale] vector of length 2*dim."""
        return np.concatenate([self.mean, self.log_scale])

    @staticmethod
    def from_flat(flat: np.ndarray) -> "VariationalParams":
        flat = np.asarray(flat, dtype=np.float64)
        d = flat.size // 2
        if flat.size != 2 * d or d < 1:
            raise ValueError("flat vector length must be an even number >= 2")
        return VariationalParams(flat[:d], flat[d:])

    @staticmethod
    def zeros(dim: int) -> "VariationalParams":
        return VariationalParams(np.zeros(dim), np.zeros(dim))

    def __eq__(self, other):
        if not isinstance(other, VariationalParams):
            return NotImplemented
        return np.array_equal(self.mean, other.mean) and np.array_equal(
            self.log_scale, other.log_scale
        )


class EstimateKind(enum.Enum):
    MC = "mc"
    RQMC = "rqmc"
    MRG = "mrg"


@dataclass(frozen=True)
class GradientEstimate:
    """A gradient estimate over all variational parameters, plus provenance."""

    d_mean: np.ndarray
    d_log_scale: np.ndarray
    n_samples: int
    kind: EstimateKind
    iteration: int = 0

    def __post_init__(self):
        object.__setattr__(self, "d_mean", _readonly(self.d_mean))
        object.__setattr__(self, "d_log_scale", _readonly(self.d_log_scale))
        if self.d_mean.shape != self.d_log_scale.shape or self.d_mean.ndim != 1:
            raise ValueError("gradient blocks must be 1-d vectors of equal length")
        if self.n_samples < 1:
            raise ValueError("n_samples must be >= 1")
        if self.iteration < 0:
            raise ValueError("iteration must be >= 0")

    @property
    def dim(self) -> int:
        return self.d_mean.size

    def to_flat(self) -> np.ndarray:
        return np.concatenate([self.d_mean, self.d_log_scale])

    def negated(self) -> "GradientEstimate":
        """Loss-oriented copy (optimizers subtract; ELBO gradients ascend)."""
        return GradientEstimate(-self.d_mean, -self.d_log_scale,
                                self.n_samples, self.kind, self.iteration)


@dataclass(frozen=True)
class MrgState:
    """Recycled state of the multi-level gradient recursion.

    Carries the previous and current iterates, the previous two scheduler
    values (eta_prev2 is defined as 1 for t <= 1), the cached one-sample
    variance proxy, and the current sample size, clamped to [1, n_initial].
    """

    params_prev: VariationalParams
    params_curr: VariationalParams
    eta_prev: float
    eta_prev2: float
    v_prev: float
    v_zero: float
    n_curr: int
    n_initial: int
    t: int

    def __post_init__(self):
        if self.params_prev.dim != self.params_curr.dim:
            raise ValueError("state parameter dimensions differ")
        if not (0.0 < self.eta_prev <= 1.0 and 0.0 < self.eta_prev2 <= 1.0):
            raise ValueError("scheduler values must lie in (0, 1]")
        if self.v_prev < 0.0:
            raise ValueError("v_prev must be >= 0")
        if self.v_zero <= 0.0:
            raise ValueError("v_zero must be > 0")
        if not (1 <= self.n_curr <= self.n_initial):
            raise ValueError("need 1 <= n_curr <= n_initial")


@dataclass(frozen=True)
class ScheduleConfig:
    """Learning-rate scheduler: kind, decay degree, and drop rate."""

    kind: ScheduleKind = ScheduleKind.STEP_BASED
    beta: float = 0.5
    drop_rate: int = 100
    alpha0: float = 0.01
    rounding: StepRounding = StepRounding.CEIL

    def violations(self) -> list[str]:
        errs = []
        if not self.beta > 0:
            errs.append("beta must be > 0")
        if self.kind is ScheduleKind.STEP_BASED:
            if not (0.0 < self.beta < 1.0):
                errs.append("step-based decay requires beta in (0, 1)")
            if self.drop_rate < 1:
                errs.append("drop_rate must be >= 1")
        if not self.alpha0 > 0:
            errs.append("alpha0 must be > 0")
        return errs


@dataclass(frozen=True)
class ExperimentConfig:
    """Full specification of one optimization run."""

    model: Model = Model.BLR
    estimator: Estimator = Estimator.MC
    optimizer: Optimizer = Optimizer.ADAM
    schedule: ScheduleConfig = field(default_factory=ScheduleConfig)
    n0: int = 100
    iterations: int = 1500
    seed: int = 0
    dataset_path: str | None = None
    train_fraction: float = 0.8
    sample_size_rule: SampleSizeRule = SampleSizeRule.SCHEDULE_RATIO
    metric_every: int = 10
    variance_repeats: int = 1000
    test_mc_samples: int = 2000
    prox_radius: float | None = None


class ConfigError(ValueError):
    """Invalid run configuration; carries every violated constraint."""

    def __init__(self, violations: list[str]):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


def validate_config(cfg: ExperimentConfig) -> ExperimentConfig:
    """Return ``cfg`` unchanged if valid, else raise ConfigError listing
    every violated constraint."""
    errs = []
    if cfg.estimator is Estimator.MLMC and cfg.optimizer is not Optimizer.SGD:
        errs.append("MLMC requires SGD")
    if cfg.model in (Model.BLR, Model.BNN) and not cfg.dataset_path:
        errs.append(f"dataset_path required for model {cfg.model.value}")
    if cfg.n0 < 1:
        errs.append("n0 must be >= 1")
    if cfg.iterations < 0:
        errs.append("iterations must be >= 0")
    if not (0 <= cfg.seed < 2**64):
        errs.append("seed must fit in 64 unsigned bits")
    if not (0.0 < cfg.train_fraction <= 1.0):
        errs.append("train_fraction must lie in (0, 1]")
    if cfg.metric_every < 1:
        errs.append("metric_every must be >= 1")
    if cfg.variance_repeats < 2:
        errs.append("variance_repeats must be >= 2")
    if cfg.test_mc_samples < 1:
        errs.append("test_mc_samples must be >= 1")
    if cfg.prox_radius is not None and not cfg.prox_radius > 0:
        errs.append("prox_radius must be > 0 when set")
    errs.extend(cfg.schedule.violations())
    if errs:
        raise ConfigError(errs)
    return cfg


# --- flat "key = value" config file format -------------------------------
#
# One entry per line, '#' starts a comment, keys are the ExperimentConfig
# field names in snake_case.  The nested schedule serializes under the keys
# scheduler, beta, drop_rate, alpha0, step_decay_rounding.

_ENUM_KEYS = {
    "model": Model,
    "estimator": Estimator,
    "optimizer": Optimizer,
    "scheduler": ScheduleKind,
    "step_decay_rounding": StepRounding,
    "sample_size_rule": SampleSizeRule,
}
_INT_KEYS = {"n0", "iterations", "seed", "drop_rate", "metric_every",
             "variance_repeats", "test_mc_samples"}
_FLOAT_KEYS = {"beta", "alpha0", "train_fraction", "prox_radius"}
_STR_KEYS = {"dataset_path"}


def config_to_text(cfg: ExperimentConfig) -> str:
    """Serialize a config to the flat key = value format."""
    lines = [
        f"model = {cfg.model.value}",
        f"estimator = {cfg.estimator.value}",
        f"optimizer = {cfg.optimizer.value}",
        f"scheduler = {cfg.schedule.kind.value}",
        f"beta = {cfg.schedule.beta!r}",
        f"drop_rate = {cfg.schedule.drop_rate}",
        f"alpha0 = {cfg.schedule.alpha0!r}",
        f"step_decay_rounding = {cfg.schedule.rounding.value}",
        f"n0 = {cfg.n0}",
        f"iterations = {cfg.iterations}",
        f"seed = {cfg.seed}",
    ]
    if cfg.dataset_path is not None:
        lines.append(f"dataset_path = {cfg.dataset_path}")
    lines += [
        f"train_fraction = {cfg.train_fraction!r}",
        f"sample_size_rule = {cfg.sample_size_rule.value}",
        f"metric_every = {cfg.metric_every}",
        f"variance_repeats = {cfg.variance_repeats}",
        f"test_mc_samples = {cfg.test_mc_samples}",
    ]
    if cfg.prox_radius is not None:
        lines.append(f"prox_radius = {cfg.prox_radius!r}")
    return "\n".join(lines) + "\n"


def _parse_value(key: str, raw: str):
    if key in _ENUM_KEYS:
        enum_cls = _ENUM_KEYS[key]
        try:
            return enum_cls(raw.strip().lower())
        except ValueError:
            valid = ", ".join(e.value for e in enum_cls)
            raise ConfigError([f"{key}: unknown value {raw!r} (expected one of {valid})"])
    if key in _INT_KEYS:
        try:
            return int(raw)
        except ValueError:
            raise ConfigError([f"{key}: expected an integer, got {raw!r}"])
    if key in _FLOAT_KEYS:
        try:
            return float(raw)
        except ValueError:
            raise ConfigError([f"{key}: expected a number, got {raw!r}"])
    if key in _STR_KEYS:
        return raw
    raise ConfigError([f"unknown config key {key!r}"])


def parse_config_text(text: str, overrides: dict | None = None) -> ExperimentConfig:
    """Parse the flat config format; ``overrides`` (already-typed values by
    key) win over file entries, mirroring CLI-flag precedence."""
    values: dict = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError([f"line {lineno}: expected 'key = value', got {line!r}"])
        key, raw = (part.strip() for part in stripped.split("=", 1))
        values[key] = _parse_value(key, raw)
    if overrides:
        values.update(overrides)

    sched_kwargs = {}
    for src, dst in (("scheduler", "kind"), ("beta", "beta"),
                     ("drop_rate", "drop_rate"), ("alpha0", "alpha0"),
                     ("step_decay_rounding", "rounding")):
        if src in values:
            sched_kwargs[dst] = values.pop(src)
    cfg_field_names = {f.name for f in fields(ExperimentConfig)}
    unknown = set(values) - cfg_field_names
    if unknown:
        raise ConfigError([f"unknown config key {k!r}" for k in sorted(unknown)])
    return ExperimentConfig(schedule=ScheduleConfig(**sched_kwargs), **values)


def load_config_file(path: str, overrides: dict | None = None) -> ExperimentConfig:
    with open(path, "r") as fh:
        return parse_config_text(fh.read(), overrides)
