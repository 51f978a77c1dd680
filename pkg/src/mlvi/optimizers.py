"""SGD with decaying learning rate, the Adam baseline, and the schedulers.

All schedulers are non-increasing in t with eta_0 = 1; the effective step
size everywhere is alpha_t = alpha0 * eta_t.  Optimizer steps subtract
alpha_t times the supplied gradient, so callers pass loss (negative-ELBO)
gradients.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import (GradientEstimate, ScheduleConfig, ScheduleKind,
                   StepRounding, VariationalParams)

__all__ = ["AdamState", "DivergenceError", "eta", "sgd_step", "adam_init",
           "adam_step"]


class DivergenceError(FloatingPointError):
    """An optimizer step produced non-finite parameters."""


def eta(schedule: ScheduleConfig, t: int) -> float:
    """Scheduler value at iteration t >= 0.

    time_based:  1 / (1 + beta t)
    step_based:  beta ** ceil(t / r)   (or floor(t / r) with Floor rounding)
    exponential: exp(-beta t)
    """
    if t < 0:
        raise ValueError("t must be >= 0")
    if schedule.kind is ScheduleKind.TIME_BASED:
        return 1.0 / (1.0 + schedule.beta * t)
    if schedule.kind is ScheduleKind.STEP_BASED:
        r = schedule.drop_rate
        exponent = -(-t // r) if schedule.rounding is StepRounding.CEIL else t // r
        return schedule.beta ** exponent
    return math.exp(-schedule.beta * t)


def _stepped(flat: np.ndarray, t_label: str) -> VariationalParams:
    if not np.isfinite(flat).all():
        raise DivergenceError(f"non-finite parameters after {t_label}")
    return VariationalParams.from_flat(flat)


def sgd_step(params: VariationalParams, grad: GradientEstimate,
             alpha_t: float) -> VariationalParams:
    """Plain descent step on the flat [mean | log_scale] vector."""
    if grad.dim != params.dim:
        raise ValueError("gradient dimension mismatch")
    if alpha_t <= 0:
        raise ValueError("alpha_t must be > 0")
    flat = params.to_flat() - alpha_t * grad.to_flat()
    return _stepped(flat, f"sgd step (iteration {grad.iteration})")


@dataclass(frozen=True)
class AdamState:
    first_moment: np.ndarray
    second_moment: np.ndarray
    step_count: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    def __post_init__(self):
        for name in ("first_moment", "second_moment"):
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if not (np.isfinite(self.first_moment).all()
                and np.isfinite(self.second_moment).all()):
            raise ValueError("non-finite Adam moments")
        if self.step_count < 0:
            raise ValueError("step_count must be >= 0")


def adam_init(dim: int, beta1: float = 0.9, beta2: float = 0.999,
              epsilon: float = 1e-8) -> AdamState:
    return AdamState(np.zeros(2 * dim), np.zeros(2 * dim), 0, beta1, beta2,
                     epsilon)


def adam_step(state: AdamState, params: VariationalParams,
              grad: GradientEstimate, alpha_t: float
              ) -> tuple[VariationalParams, AdamState]:
    """Standard bias-corrected Adam update on the flat parameter vector."""
    if alpha_t <= 0:
        raise ValueError("alpha_t must be > 0")
    g = grad.to_flat()
    if g.size != state.first_moment.size:
        raise ValueError("gradient dimension mismatch")
    count = state.step_count + 1
    m = state.beta1 * state.first_moment + (1.0 - state.beta1) * g
    v = state.beta2 * state.second_moment + (1.0 - state.beta2) * g ** 2
    m_hat = m / (1.0 - state.beta1 ** count)
    v_hat = v / (1.0 - state.beta2 ** count)
    flat = params.to_flat() - alpha_t * m_hat / (np.sqrt(v_hat) + state.epsilon)
    new_params = _stepped(flat, f"adam step (iteration {grad.iteration})")
    return new_params, AdamState(m, v, count, state.beta1, state.beta2,
                                 state.epsilon)
