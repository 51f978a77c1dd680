"""Measured quantities: ELBO traces, test log-likelihood, empirical gradient
variance and SNR, and the theoretical SNR lower bounds.

Vector-estimator variance is scalarized as the trace of the sample
covariance (sum of per-coordinate variances), matching the squared-norm
algebra the sample-size rules are built on.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .core import EstimateKind, VariationalParams
from .estimators import coupled_difference
from .gradient import batch_gradient, elbo_estimate, transform
from .models import ModelSpec, Rows
from .rng import mc_normal_batch, rqmc_normal_batch

__all__ = [
    "MetricRow",
    "SnrUndefinedError",
    "TestLogLik",
    "gradient_resample_stats",
    "empirical_gradient_variance",
    "empirical_snr",
    "snr_lower_bound",
    "test_log_likelihood",
    "elbo_metrics",
]


@dataclass(frozen=True)
class MetricRow:
    """One measurement checkpoint of a run."""

    iteration: int
    wall_clock_seconds: float
    train_elbo: float
    test_elbo: float | None
    test_log_likelihood: float | None
    n_samples_used: int
    grad_variance_trace: float | None
    snr_empirical: float | None
    eta_value: float
    estimator_kind: str

    def __post_init__(self):
        if self.n_samples_used < 1:
            raise ValueError("n_samples_used must be >= 1")


class SnrUndefinedError(ValueError):
    """SNR is undefined at zero estimator variance."""


def gradient_resample_stats(model: ModelSpec, params: VariationalParams,
                            kind: EstimateKind, n: int, repeats: int,
                            seed: int,
                            params_prev: VariationalParams | None = None,
                            rows: Rows | None = None,
                            prox_radius: float | None = None,
                            offset: np.ndarray | None = None
                            ) -> tuple[np.ndarray, float]:
    """Resample a gradient estimator ``repeats`` times at fixed params.

    Returns (mean flat gradient, trace of the unbiased sample covariance).
    MC and RQMC draw fresh batches per repeat; the multi-level kind requires
    ``params_prev`` and resamples the coupled level difference (the
    stochastic part of the recycled update), optionally shifted by a
    deterministic ``offset`` (the momentum term over alpha_t) so the mean
    reflects the effective gradient.
    """
    if repeats < 2:
        raise ValueError("repeats must be >= 2")
    if kind is EstimateKind.MRG and params_prev is None:
        raise ValueError("multi-level resampling requires params_prev")
    d = model.latent_dim
    draws = np.empty((repeats, 2 * d))
    for r in range(repeats):
        if kind is EstimateKind.MC:
            est = batch_gradient(model, params,
                                 mc_normal_batch(seed, r, n, d), rows,
                                 prox_radius)
        elif kind is EstimateKind.RQMC:
            est = batch_gradient(model, params,
                                 rqmc_normal_batch(seed, r, n, d), rows,
                                 prox_radius)
        else:
            est = coupled_difference(model, params, params_prev,
                                     mc_normal_batch(seed, r, n, d), rows,
                                     prox_radius)
        draws[r] = est.to_flat()
    if offset is not None:
        draws += np.asarray(offset, dtype=np.float64)[None, :]
    mean = draws.mean(axis=0)
    var_trace = float(draws.var(axis=0, ddof=1).sum())
    return mean, var_trace


def empirical_gradient_variance(model: ModelSpec, params: VariationalParams,
                                kind: EstimateKind, n: int, repeats: int,
                                seed: int,
                                params_prev: VariationalParams | None = None,
                                rows: Rows | None = None,
                                prox_radius: float | None = None) -> float:
    """Trace of the sample covariance of ``repeats`` independent estimates."""
    _, var_trace = gradient_resample_stats(
        model, params, kind, n, repeats, seed, params_prev, rows, prox_radius)
    return var_trace


def empirical_snr(mean_grad: np.ndarray, variance_trace: float) -> float:
    """Squared norm of the mean gradient over the root of the variance trace."""
    if variance_trace <= 0.0:
        raise SnrUndefinedError("SNR undefined at zero estimator variance")
    mean_grad = np.asarray(mean_grad, dtype=np.float64)
    return float((mean_grad ** 2).sum() / math.sqrt(variance_trace))


def snr_lower_bound(grad_norm_sq: float, kappa: float, n: int,
                    eta_prev: float, method: EstimateKind) -> float:
    """Method-specific SNR lower bound: sqrt(N), N, or sqrt(N_t)/eta_{t-1}
    times |grad|^2 / sqrt(kappa)."""
    if kappa <= 0:
        raise ValueError("kappa must be > 0")
    if n < 1:
        raise ValueError("n must be >= 1")
    if not (0.0 < eta_prev <= 1.0):
        raise ValueError("eta_prev must lie in (0, 1]")
    base = grad_norm_sq / math.sqrt(kappa)
    if method is EstimateKind.MC:
        return base * math.sqrt(n)
    if method is EstimateKind.RQMC:
        return base * n
    return base * math.sqrt(n) / eta_prev


class TestLogLik(NamedTuple):
    total: float
    per_datum: float
    n_points: int


def test_log_likelihood(model: ModelSpec, params: VariationalParams,
                        rows: Rows | None, mc_samples: int,
                        seed: int) -> TestLogLik | None:
    """Posterior-predictive log-likelihood of held-out rows.

    For each point, log( (1/S) sum_s p(y | x, z_s) ) with z_s drawn from the
    variational distribution, stabilized with log-sum-exp; returns the sum
    over the split and the per-datum mean, or None for an empty split.
    """
    if rows is None or rows.n == 0:
        return None
    if model.log_predictive is None:
        return None
    eps = mc_normal_batch(seed, 0, mc_samples, model.latent_dim).values
    Z = transform(eps, params)
    per_sample = np.empty((mc_samples, rows.n))
    for s in range(mc_samples):
        per_sample[s] = model.log_predictive(rows, Z[s])
    peak = per_sample.max(axis=0)
    lse = peak + np.log(np.exp(per_sample - peak[None, :]).sum(axis=0))
    per_point = lse - math.log(mc_samples)
    total = float(per_point.sum())
    return TestLogLik(total, total / rows.n, rows.n)


def elbo_metrics(model: ModelSpec, params: VariationalParams,
                 train_rows: Rows, test_rows: Rows | None, mc_samples: int,
                 seed: int, prox_radius: float | None = None
                 ) -> tuple[float, float | None]:
    """ELBO estimates on the training and test splits from one shared
    noise batch; the test value is absent for empty splits and for models
    whose latents are tied to training rows."""
    batch = mc_normal_batch(seed, 0, mc_samples, model.latent_dim)
    train_elbo = elbo_estimate(model, params, batch, train_rows, prox_radius)
    test_elbo = None
    if test_rows is not None and test_rows.n > 0 and not model.row_latents:
        test_elbo = elbo_estimate(model, params, batch, test_rows, prox_radius)
    return train_elbo, test_elbo
