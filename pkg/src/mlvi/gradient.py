"""Reparameterized per-sample gradients and ELBO estimation.

For the diagonal-Gaussian family with parameters (m, s), scale v = exp(s),
a noise draw eps maps to z = m + v * eps, and the per-sample ELBO gradient
(Eq. of the total derivative, path term plus direct term) collapses to

    d_mean       = g_z
    d_log_scale  = g_z * v * eps + 1

where g_z is the model's latent gradient at z.  The +1 is the analytic
derivative of the negative entropy of q: at fixed eps,
log q(z | m, s) = -sum(s) - |eps|^2 / 2 - (d/2) log 2pi depends on (m, s)
only through -sum(s).

All gradients here are ELBO-ascent oriented; optimizers subtract, so the
harness negates when forming optimizer inputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import EstimateKind, GradientEstimate, VariationalParams
from .models import ModelSpec, Rows
from .rng import NoiseBatch

__all__ = [
    "PerSampleGradient",
    "GradientNumericsError",
    "transform",
    "proximal_truncate",
    "per_sample_gradient",
    "per_sample_grad_matrix",
    "batch_gradient",
    "elbo_estimate",
    "log_q_batch",
]

_LOG_2PI = math.log(2.0 * math.pi)
_CHUNK_ELEMS = 20_000_000  # soft cap on per-sample matrix size (elements)


class GradientNumericsError(FloatingPointError):
    """A model gradient went non-finite; carries the first bad latent index."""


@dataclass(frozen=True)
class PerSampleGradient:
    d_mean: np.ndarray
    d_log_scale: np.ndarray
    eps_index: int = 0

    def to_flat(self) -> np.ndarray:
        return np.concatenate([self.d_mean, self.d_log_scale])


def transform(eps: np.ndarray, params: VariationalParams) -> np.ndarray:
    """z = mean + exp(log_scale) * eps."""
    eps = np.asarray(eps, dtype=np.float64)
    if eps.shape[-1] != params.dim:
        raise ValueError(f"eps dimension {eps.shape[-1]} != params dim {params.dim}")
    return params.mean + params.scale * eps


def proximal_truncate(z: np.ndarray, radius: float) -> np.ndarray:
    """Euclidean projection of z onto the L2 ball of the given radius."""
    if radius <= 0:
        raise ValueError("radius must be > 0")
    z = np.asarray(z, dtype=np.float64)
    norm = float(np.linalg.norm(z))
    if norm <= radius:
        return z.copy()
    return z * (radius / norm)


def _project_rows(Z: np.ndarray, radius: float):
    """Row-wise ball projection; returns (projected, norms, outside mask)."""
    norms = np.linalg.norm(Z, axis=1)
    outside = norms > radius
    Zp = Z.copy()
    if outside.any():
        Zp[outside] *= (radius / norms[outside])[:, None]
    return Zp, norms, outside


def per_sample_grad_matrix(model: ModelSpec, params: VariationalParams,
                           eps: np.ndarray, rows: Rows | None = None,
                           prox_radius: float | None = None) -> np.ndarray:
    """Per-sample gradients for a whole (B, d) noise matrix.

    Returns (B, 2d): columns [d_mean | d_log_scale].  With a prox radius the
    draw z is projected onto the ball before the model gradient and the
    projection's Jacobian (identity inside; scaled tangential projector
    outside) is chained into the path derivative.
    """
    rows = model.rows if rows is None else rows
    eps = np.atleast_2d(np.asarray(eps, dtype=np.float64))
    B, d = eps.shape
    if d != params.dim or d != model.latent_dim:
        raise ValueError("dimension mismatch between eps, params, and model")
    out = np.empty((B, 2 * d))
    scale = params.scale
    chunk = max(1, _CHUNK_ELEMS // max(d, 1))
    for lo in range(0, B, chunk):
        hi = min(B, lo + chunk)
        E = eps[lo:hi]
        Z = params.mean + scale * E
        if prox_radius is not None:
            Zp, norms, outside = _project_rows(Z, prox_radius)
            G = model.grad_z_log_joint_batch(rows, Zp)
            if outside.any():
                # J^T g = (R/|z|) (g - zhat (zhat . g)) on projected rows
                zh = Z[outside] / norms[outside, None]
                Go = G[outside]
                G[outside] = (prox_radius / norms[outside, None]) * (
                    Go - zh * np.einsum("bj,bj->b", zh, Go)[:, None])
        else:
            G = model.grad_z_log_joint_batch(rows, Z)
        if not np.isfinite(G).all():
            bad = np.argwhere(~np.isfinite(G))[0]
            raise GradientNumericsError(
                f"non-finite model gradient at latent index {int(bad[1])}")
        out[lo:hi, :d] = G
        out[lo:hi, d:] = G * (scale * E) + 1.0
    return out


def per_sample_gradient(model: ModelSpec, params: VariationalParams,
                        eps: np.ndarray, rows: Rows | None = None,
                        prox_radius: float | None = None,
                        eps_index: int = 0) -> PerSampleGradient:
    """Single-draw reparameterized gradient g(eps) at the given params."""
    mat = per_sample_grad_matrix(model, params, np.asarray(eps)[None, :],
                                 rows, prox_radius)
    d = params.dim
    return PerSampleGradient(mat[0, :d], mat[0, d:], eps_index)


def batch_gradient(model: ModelSpec, params: VariationalParams,
                   batch: NoiseBatch, rows: Rows | None = None,
                   prox_radius: float | None = None,
                   iteration: int = 0) -> GradientEstimate:
    """Arithmetic mean of per-sample gradients over a noise batch."""
    if batch.d != model.latent_dim:
        raise ValueError(f"batch dimension {batch.d} != model dim "
                         f"{model.latent_dim}")
    mat = per_sample_grad_matrix(model, params, batch.values, rows, prox_radius)
    mean = mat.mean(axis=0)
    d = params.dim
    return GradientEstimate(mean[:d], mean[d:], batch.n, batch.kind, iteration)


def log_q_batch(params: VariationalParams, eps: np.ndarray) -> np.ndarray:
    """log q(T(eps; params) | params), evaluated analytically per draw."""
    eps = np.atleast_2d(np.asarray(eps, dtype=np.float64))
    d = params.dim
    return (-0.5 * (eps ** 2).sum(axis=1) - params.log_scale.sum()
            - 0.5 * d * _LOG_2PI)


def elbo_estimate(model: ModelSpec, params: VariationalParams,
                  batch: NoiseBatch, rows: Rows | None = None,
                  prox_radius: float | None = None) -> float:
    """Monte Carlo ELBO: mean over the batch of log p(x, z) - log q(z)."""
    rows = model.rows if rows is None else rows
    Z = transform(batch.values, params)
    if prox_radius is not None:
        Z, _, _ = _project_rows(Z, prox_radius)
    lp = model.log_joint_batch(rows, Z)
    return float(np.mean(lp - log_q_batch(params, batch.values)))
