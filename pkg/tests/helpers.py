"""Shared test fixtures and independent oracles."""

from __future__ import annotations

import math

import numpy as np

from mlvi.core import VariationalParams
from mlvi.models import Dataset, ModelSpec, Rows

_LOG_2PI = math.log(2.0 * math.pi)


def flat_model(dim: int) -> ModelSpec:
    """log p identically zero: isolates the entropy term of the gradient."""
    rows = Rows(np.zeros((1, 1)), np.zeros(1), np.arange(1))
    return ModelSpec(
        "flat", dim,
        lambda r, Z: np.zeros(Z.shape[0]),
        lambda r, Z: np.zeros_like(Z),
        np.zeros(dim, dtype=bool), rows)


def quadratic_model(dim: int, coeff: float = 1.0) -> ModelSpec:
    """log p(z) = -coeff * |z|^2 / 2, gradient -coeff * z."""
    rows = Rows(np.zeros((1, 1)), np.zeros(1), np.arange(1))
    return ModelSpec(
        "quadratic", dim,
        lambda r, Z: -coeff * (Z ** 2).sum(axis=1) / 2.0,
        lambda r, Z: -coeff * Z,
        np.zeros(dim, dtype=bool), rows)


def small_blr_dataset(n: int = 60, k: int = 4, seed: int = 5) -> Dataset:
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n, k))
    w = rng.standard_normal(k)
    y = (rng.random(n) < 1.0 / (1.0 + np.exp(-(x @ w)))).astype(float)
    feats = np.hstack([x, np.ones((n, 1))])
    n_train = int(0.8 * n)
    return Dataset(feats, y, np.arange(n_train), np.arange(n_train, n))


def small_regression_dataset(n: int = 40, k: int = 3, seed: int = 6) -> Dataset:
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n, k))
    w = rng.standard_normal(k)
    y = x @ w + 0.2 * rng.standard_normal(n)
    n_train = int(0.8 * n)
    return Dataset(x, y, np.arange(n_train), np.arange(n_train, n))


def bnn_smooth_probes(model: ModelSpec, hidden: int, count: int,
                      rng: np.random.Generator, scale: float = 0.4,
                      margin: float = 1e-3) -> np.ndarray:
    """Random latent probes whose hidden pre-activations stay a margin away
    from the ReLU kink, where central differences stop being a valid oracle
    for the (correct) subgradient."""
    k = model.rows.features.shape[1]
    out = []
    while len(out) < count:
        z = scale * rng.standard_normal(model.latent_dim)
        w1 = z[: hidden * k].reshape(hidden, k)
        b1 = z[hidden * k: hidden * k + hidden]
        pre = model.rows.features @ w1.T + b1
        if np.abs(pre).min() > margin:
            out.append(z)
    return np.array(out)


def elbo_integrand_batch(model: ModelSpec, rows: Rows, eps: np.ndarray,
                         flats: np.ndarray) -> np.ndarray:
    """Single-sample ELBO integrand log p(x, T(eps; lam)) - log q(T|lam) as a
    batched function of the flat [mean | log_scale] parameter vector, for
    finite-difference checks in lambda-space."""
    d = model.latent_dim
    flats = np.atleast_2d(flats)
    M, S = flats[:, :d], flats[:, d:]
    Z = M + np.exp(S) * eps[None, :]
    log_q = -0.5 * float(eps @ eps) - S.sum(axis=1) - 0.5 * d * _LOG_2PI
    return model.log_joint_batch(rows, Z) - log_q


def random_params(dim: int, rng: np.random.Generator,
                  scale: float = 0.4) -> VariationalParams:
    return VariationalParams(scale * rng.standard_normal(dim),
                             scale * rng.standard_normal(dim))
