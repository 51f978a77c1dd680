"""Model zoo: log-joint densities, hand-coded latent gradients, and data.

Each model exposes its latent dimensionality, ``log_joint(rows, z)``, and
``grad_z_log_joint(rows, z)`` (plus batched variants used by the estimator
machinery).  Positive latents (variances / precisions) are handled in log
space with the Jacobian correction folded into the prior term, so every
latent vector lives in an unconstrained space and the diagonal-Gaussian
variational family applies directly.

All gradients are hand-derived (no autodiff); the central-difference oracle
in ``mlvi.checks`` validates them in the permanent test suite.
"""

from __future__ import annotations

import importlib.resources
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

__all__ = [
    "Rows",
    "Dataset",
    "ModelSpec",
    "CsvParseError",
    "generate_hlr_data",
    "load_uci_csv",
    "bundled_dataset_path",
    "hlr_model",
    "blr_model",
    "bnn_model",
    "conjugate_gaussian_model",
    "conjugate_analytic_elbo",
    "conjugate_analytic_elbo_grad",
]

_LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class Rows:
    """A view of dataset rows: features, targets, and original row indices."""

    features: np.ndarray
    targets: np.ndarray
    index: np.ndarray

    def __post_init__(self):
        for name in ("features", "targets", "index"):
            arr = np.asarray(getattr(self, name))
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n(self) -> int:
        return self.targets.size


@dataclass(frozen=True)
class Dataset:
    """Immutable feature/target table with a train/test index partition."""

    features: np.ndarray
    targets: np.ndarray
    train_idx: np.ndarray
    test_idx: np.ndarray

    def __post_init__(self):
        feats = np.asarray(self.features, dtype=np.float64)
        targs = np.asarray(self.targets, dtype=np.float64)
        if feats.ndim != 2 or targs.ndim != 1 or feats.shape[0] != targs.size:
            raise ValueError("features must be (n, k) and targets length n")
        if not (np.isfinite(feats).all() and np.isfinite(targs).all()):
            raise ValueError("non-finite entries after preprocessing")
        tr = np.asarray(self.train_idx, dtype=np.int64)
        te = np.asarray(self.test_idx, dtype=np.int64)
        merged = np.sort(np.concatenate([tr, te]))
        if not np.array_equal(merged, np.arange(targs.size)):
            raise ValueError("split indices must be disjoint and exhaustive")
        for name, arr in (("features", feats), ("targets", targs),
                          ("train_idx", tr), ("test_idx", te)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n(self) -> int:
        return self.targets.size

    @property
    def k(self) -> int:
        return self.features.shape[1]

    def train_rows(self) -> Rows:
        return Rows(self.features[self.train_idx], self.targets[self.train_idx],
                    self.train_idx)

    def test_rows(self) -> Rows:
        return Rows(self.features[self.test_idx], self.targets[self.test_idx],
                    self.test_idx)


@dataclass(frozen=True)
class ModelSpec:
    """Latent dimension, log-joint, and latent gradient of one model.

    ``log_joint_batch`` / ``grad_z_log_joint_batch`` evaluate a (B, d) matrix
    of latent vectors at once; the scalar forms delegate to them.  ``rows``
    is the training binding the model was built from.  ``log_predictive``
    returns per-row log p(y | x, z) for held-out data; ``row_latents`` marks
    models whose latents are tied to specific training rows (no test-split
    log-joint exists for those).
    """

    name: str
    latent_dim: int
    log_joint_batch: Callable[[Rows, np.ndarray], np.ndarray]
    grad_z_log_joint_batch: Callable[[Rows, np.ndarray], np.ndarray]
    positive_mask: np.ndarray
    rows: Rows
    log_predictive: Callable[[Rows, np.ndarray], np.ndarray] | None = None
    predict: Callable[[Rows, np.ndarray], np.ndarray] | None = None
    row_latents: bool = False
    init_mean: np.ndarray | None = None  # moment-matched variational init

    def log_joint(self, rows: Rows, z: np.ndarray) -> float:
        return float(self.log_joint_batch(rows, np.asarray(z)[None, :])[0])

    def grad_z_log_joint(self, rows: Rows, z: np.ndarray) -> np.ndarray:
        return self.grad_z_log_joint_batch(rows, np.asarray(z)[None, :])[0]


# --- data generation and ingestion -----------------------------------------

def generate_hlr_data(I: int, k: int, seed: int):
    """Draw a hierarchical-regression toy dataset from its own prior.

    Per-observation weights b_i ~ N(mu', sigma' I_k) with mu' ~ N(0, 10^2)
    elementwise, variances sigma' and eps ~ LogNormal(0, 0.5), features
    x_i ~ N(0, I_k), responses y_i ~ N(x_i . b_i, eps).  All rows land in
    the training split (per-row weights make held-out rows meaningless).

    Returns (dataset, truth) where truth holds the sampled ground-truth
    latents.
    """
    if I < 1 or k < 1:
        raise ValueError("need I >= 1 and k >= 1")
    rng = np.random.default_rng(seed)
    mu_prime = 10.0 * rng.standard_normal(k)
    sigma_prime = float(np.exp(0.5 * rng.standard_normal()))
    noise_var = float(np.exp(0.5 * rng.standard_normal()))
    b = mu_prime + math.sqrt(sigma_prime) * rng.standard_normal((I, k))
    x = rng.standard_normal((I, k))
    y = np.einsum("ik,ik->i", x, b) + math.sqrt(noise_var) * rng.standard_normal(I)
    ds = Dataset(x, y, np.arange(I), np.arange(0))
    truth = {"mu_prime": mu_prime, "sigma_prime": sigma_prime,
             "noise_var": noise_var, "b": b}
    return ds, truth


class CsvParseError(ValueError):
    pass


def bundled_dataset_path(name: str) -> str:
    """Filesystem path of a CSV shipped with the package (synthetic
    stand-ins shaped like the UCI breast-cancer and wine-quality-red
    tables)."""
    known = {"breast_cancer": "breast_cancer_synth.csv",
             "wine_red": "wine_red_synth.csv"}
    if name not in known:
        raise ValueError(f"unknown bundled dataset {name!r}; "
                         f"options: {sorted(known)}")
    return str(importlib.resources.files("mlvi").joinpath("data", known[name]))


def load_uci_csv(path: str, target_column: int | str = -1,
                 positive_label: str | None = None,
                 train_fraction: float = 0.8, seed: int = 0,
                 add_bias: bool = True) -> Dataset:
    """Load a comma-separated numeric table as a Dataset.

    A non-numeric first line is treated as a header; the target column is
    selected by name or index.  Non-numeric target labels require
    ``positive_label`` (mapped to 1, everything else to 0).  Features are
    z-scored with statistics from the training split only, then a bias
    column of ones is appended.  The split is an 80/20 (by default) seeded
    shuffle; ``train_fraction=1.0`` leaves the test split empty.
    """
    with open(path, "r") as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines:
        raise CsvParseError(f"{path}: empty file")

    def _numeric(tok: str) -> bool:
        try:
            float(tok)
            return True
        except ValueError:
            return False

    first = [t.strip() for t in lines[0].split(",")]
    has_header = not all(_numeric(t) for t in first)
    header = first if has_header else None
    body = lines[1:] if has_header else lines

    cells = [[t.strip() for t in ln.split(",")] for ln in body]
    ncol = len(cells[0])
    for r, row in enumerate(cells):
        if len(row) != ncol:
            raise CsvParseError(
                f"{path}: row {r + 1} has {len(row)} columns, expected {ncol}")

    if isinstance(target_column, str):
        if header is None or target_column not in header:
            raise CsvParseError(f"{path}: no target column named {target_column!r}")
        tcol = header.index(target_column)
    else:
        tcol = target_column % ncol

    feats = np.empty((len(cells), ncol - 1))
    for r, row in enumerate(cells):
        c_out = 0
        for c, tok in enumerate(row):
            if c == tcol:
                continue
            try:
                feats[r, c_out] = float(tok)
            except ValueError:
                colname = header[c] if header else str(c)
                raise CsvParseError(
                    f"{path}: non-numeric value {tok!r} at row {r + 1}, "
                    f"column {colname!r}") from None
            c_out += 1

    raw_targets = [row[tcol] for row in cells]
    if positive_label is not None:
        targets = np.array([1.0 if t == str(positive_label) else 0.0
                            for t in raw_targets])
    else:
        try:
            targets = np.array([float(t) for t in raw_targets])
        except ValueError:
            raise CsvParseError(
                f"{path}: non-numeric target labels; pass positive_label") from None

    n = len(cells)
    if not (0.0 < train_fraction <= 1.0):
        raise ValueError("train_fraction must lie in (0, 1]")
    n_train = max(1, min(n, int(round(train_fraction * n))))
    perm = np.random.default_rng(seed).permutation(n)
    train_idx = np.sort(perm[:n_train])
    test_idx = np.sort(perm[n_train:])

    mean = feats[train_idx].mean(axis=0)
    std = feats[train_idx].std(axis=0)
    std[std == 0.0] = 1.0
    feats = (feats - mean) / std
    if add_bias:
        feats = np.hstack([feats, np.ones((n, 1))])
    return Dataset(feats, targets, train_idx, test_idx)


def subsample_dataset(ds: Dataset, n_rows: int, seed: int,
                      train_fraction: float = 0.8) -> Dataset:
    """Take a seeded row subsample and re-split it."""
    if n_rows > ds.n:
        raise ValueError(f"cannot subsample {n_rows} of {ds.n} rows")
    rng = np.random.default_rng(seed)
    keep = np.sort(rng.choice(ds.n, size=n_rows, replace=False))
    n_train = max(1, min(n_rows, int(round(train_fraction * n_rows))))
    perm = rng.permutation(n_rows)
    return Dataset(ds.features[keep], ds.targets[keep],
                   np.sort(perm[:n_train]), np.sort(perm[n_train:]))


# --- log-space prior helpers ------------------------------------------------
#
# For a positive latent theta = exp(t), the log-prior contribution is
# log p(exp(t)) + t (change of variables).  For a LogNormal(0, w) prior this
# collapses to a plain N(0, w^2) density in t; for a Gamma(shape, rate)
# prior it is  const + shape * t - rate * exp(t).

def _gamma_log_prior(t, shape: float, rate: float):
    const = shape * math.log(rate) - math.lgamma(shape)
    return const + shape * t - rate * np.exp(t)


def _gamma_log_prior_grad(t, shape: float, rate: float):
    return shape - rate * np.exp(t)


def _normal_logpdf(x, var: float):
    return -0.5 * _LOG_2PI - 0.5 * math.log(var) - x ** 2 / (2.0 * var)


# --- hierarchical linear regression ----------------------------------------

def hlr_model(dataset: Dataset) -> ModelSpec:
    """Hierarchical linear regression with per-observation weights.

    Latents (dimension I*k + k + 2, in order):
    [b_1 .. b_I | mu' | log sigma' | log eps], where each row's weights
    b_i ~ N(mu', sigma' I_k), mu'_j ~ N(0, 10^2), and sigma', eps carry
    LogNormal(0, 0.5) priors (plain normals on the log-latents).
    """
    rows = dataset.train_rows()
    I, k = rows.features.shape
    d = I * k + k + 2
    x, y = rows.features, rows.targets

    def _split(Z):
        b = Z[:, : I * k].reshape(-1, I, k)
        mu = Z[:, I * k: I * k + k]
        sp = Z[:, -2]
        e = Z[:, -1]
        return b, mu, sp, e

    def _require_full(r: Rows):
        if r.n != I:
            raise ValueError("per-row weights: log-joint needs the full "
                             "training rows")

    def log_joint_batch(r: Rows, Z: np.ndarray) -> np.ndarray:
        _require_full(r)
        b, mu, sp, e = _split(Z)
        fit = np.einsum("bik,ik->bi", b, x, optimize=True)
        ssr = ((y[None, :] - fit) ** 2).sum(axis=1)
        loglik = -0.5 * I * _LOG_2PI - 0.5 * I * e - ssr / (2.0 * np.exp(e))
        # sum_ij (b_ij - mu_j)^2 via moments, avoiding a (B, I, k) temporary
        b_sq = np.einsum("bik,bik->b", b, b, optimize=True)
        b_colsum = b.sum(axis=1)
        ssb = b_sq - 2.0 * (b_colsum * mu).sum(axis=1) + I * (mu ** 2).sum(axis=1)
        lp_b = -0.5 * I * k * _LOG_2PI - 0.5 * I * k * sp - ssb / (2.0 * np.exp(sp))
        lp_mu = _normal_logpdf(mu, 100.0).sum(axis=1)
        lp_sp = _normal_logpdf(sp, 0.25)
        lp_e = _normal_logpdf(e, 0.25)
        return loglik + lp_b + lp_mu + lp_sp + lp_e

    def grad_batch(r: Rows, Z: np.ndarray) -> np.ndarray:
        _require_full(r)
        b, mu, sp, e = _split(Z)
        sig = np.exp(sp)[:, None, None]
        noise = np.exp(e)[:, None]
        fit = np.einsum("bik,ik->bi", b, x)
        resid = y[None, :] - fit
        centered = b - mu[:, None, :]
        db = -centered / sig + (resid / noise)[:, :, None] * x[None, :, :]
        dmu = centered.sum(axis=1) / sig[:, :, 0] - mu / 100.0
        ssb = (centered ** 2).sum(axis=(1, 2))
        dsp = -0.5 * I * k + ssb / (2.0 * np.exp(sp)) - sp / 0.25
        ssr = (resid ** 2).sum(axis=1)
        de = -0.5 * I + ssr / (2.0 * np.exp(e)) - e / 0.25
        return np.concatenate(
            [db.reshape(-1, I * k), dmu, dsp[:, None], de[:, None]], axis=1)

    def log_predictive(r: Rows, z: np.ndarray) -> np.ndarray:
        # b_new integrated out: y | x, (mu', sigma', eps) is normal with
        # mean x . mu' and variance eps + sigma' * |x|^2.
        mu = z[I * k: I * k + k]
        sigma_p = math.exp(z[-2])
        noise = math.exp(z[-1])
        mean = r.features @ mu
        var = noise + sigma_p * (r.features ** 2).sum(axis=1)
        return -0.5 * _LOG_2PI - 0.5 * np.log(var) - (r.targets - mean) ** 2 / (2 * var)

    mask = np.zeros(d, dtype=bool)
    mask[-2:] = True
    # start the noise-variance latent at the marginal target variance so the
    # first gradients are not dominated by a mis-scaled residual term
    init = np.zeros(d)
    init[-1] = math.log(max(float(np.var(y)), 1e-12))
    return ModelSpec("hlr", d, log_joint_batch, grad_batch, mask, rows,
                     log_predictive=log_predictive, row_latents=True,
                     init_mean=init)


# --- Bayesian logistic regression -------------------------------------------

def blr_model(dataset: Dataset) -> ModelSpec:
    """Binary logistic regression with a hierarchical weight prior.

    Latents (dimension k + 2): [w | mu' | log sigma'], with weights
    w_j ~ N(mu', 1/sigma'), mu' ~ N(0, 1), and a Gamma(0.5, 0.5) prior on
    the weight precision sigma'.
    """
    rows = dataset.train_rows()
    uniq = np.unique(rows.targets)
    if not np.isin(uniq, (0.0, 1.0)).all():
        raise ValueError(f"targets must be in {{0,1}}, got values {uniq[:5]}")
    k = dataset.k
    d = k + 2

    def _split(Z):
        return Z[:, :k], Z[:, k], Z[:, k + 1]

    def log_joint_batch(r: Rows, Z: np.ndarray) -> np.ndarray:
        w, mu, s = _split(Z)
        f = w @ r.features.T
        loglik = (r.targets[None, :] * f - np.logaddexp(0.0, f)).sum(axis=1)
        centered = w - mu[:, None]
        lp_w = (-0.5 * k * _LOG_2PI + 0.5 * k * s
                - np.exp(s) * (centered ** 2).sum(axis=1) / 2.0)
        lp_mu = _normal_logpdf(mu, 1.0)
        lp_s = _gamma_log_prior(s, 0.5, 0.5)
        return loglik + lp_w + lp_mu + lp_s

    def grad_batch(r: Rows, Z: np.ndarray) -> np.ndarray:
        w, mu, s = _split(Z)
        f = w @ r.features.T
        prob = 1.0 / (1.0 + np.exp(-f))
        prec = np.exp(s)
        centered = w - mu[:, None]
        dw = (r.targets[None, :] - prob) @ r.features - prec[:, None] * centered
        dmu = prec * centered.sum(axis=1) - mu
        ds = (0.5 * k - prec * (centered ** 2).sum(axis=1) / 2.0
              + _gamma_log_prior_grad(s, 0.5, 0.5))
        return np.concatenate([dw, dmu[:, None], ds[:, None]], axis=1)

    def log_predictive(r: Rows, z: np.ndarray) -> np.ndarray:
        f = r.features @ z[:k]
        return r.targets * f - np.logaddexp(0.0, f)

    def predict(r: Rows, z: np.ndarray) -> np.ndarray:
        return 1.0 / (1.0 + np.exp(-(r.features @ z[:k])))

    mask = np.zeros(d, dtype=bool)
    mask[-1] = True
    return ModelSpec("blr", d, log_joint_batch, grad_batch, mask, rows,
                     log_predictive=log_predictive, predict=predict)


# --- Bayesian neural-network regression --------------------------------------

def bnn_model(dataset: Dataset, hidden: int = 50) -> ModelSpec:
    """One-hidden-layer ReLU regression network with Gaussian weight priors.

    Latents (dimension h*k + h + h + 1 + 2, in order):
    [W1 | b1 | W2 | b2 | log alpha | log tau].  All weights share the prior
    N(0, 1/alpha); observations are N(net(x), 1/tau); alpha and tau carry
    Gamma(1, 0.1) priors.  The latent gradient is manual backpropagation
    through the ReLU layer.
    """
    rows = dataset.train_rows()
    k = dataset.k
    h = hidden
    n_w = h * k + h + h + 1
    d = n_w + 2

    def _split(Z):
        W1 = Z[:, : h * k].reshape(-1, h, k)
        b1 = Z[:, h * k: h * k + h]
        W2 = Z[:, h * k + h: h * k + 2 * h]
        b2 = Z[:, n_w - 1]
        a = Z[:, n_w]
        u = Z[:, n_w + 1]
        return W1, b1, W2, b2, a, u

    def _forward(r: Rows, W1, b1, W2, b2):
        # (B, h, n) layout; one large GEMM instead of B small ones
        B = W1.shape[0]
        pre = (W1.reshape(B * h, k) @ r.features.T).reshape(B, h, -1)
        pre += b1[:, :, None]
        act = np.maximum(pre, 0.0)
        f = (act * W2[:, :, None]).sum(axis=1) + b2[:, None]
        return pre, act, f

    def log_joint_batch(r: Rows, Z: np.ndarray) -> np.ndarray:
        W1, b1, W2, b2, a, u = _split(Z)
        _, _, f = _forward(r, W1, b1, W2, b2)
        n = r.n
        ssr = ((r.targets[None, :] - f) ** 2).sum(axis=1)
        loglik = -0.5 * n * _LOG_2PI + 0.5 * n * u - np.exp(u) * ssr / 2.0
        wsq = (Z[:, :n_w] ** 2).sum(axis=1)
        lp_w = -0.5 * n_w * _LOG_2PI + 0.5 * n_w * a - np.exp(a) * wsq / 2.0
        lp_a = _gamma_log_prior(a, 1.0, 0.1)
        lp_u = _gamma_log_prior(u, 1.0, 0.1)
        return loglik + lp_w + lp_a + lp_u

    def grad_batch(r: Rows, Z: np.ndarray) -> np.ndarray:
        W1, b1, W2, b2, a, u = _split(Z)
        pre, act, f = _forward(r, W1, b1, W2, b2)
        alpha = np.exp(a)
        tau = np.exp(u)
        resid = r.targets[None, :] - f
        rfac = tau[:, None] * resid
        B = Z.shape[0]
        dW2 = (act * rfac[:, None, :]).sum(axis=2) - alpha[:, None] * W2
        db2 = rfac.sum(axis=1) - alpha * b2
        dpre = (W2[:, :, None] * rfac[:, None, :]) * (pre > 0.0)
        dW1 = (dpre.reshape(B * h, -1) @ r.features).reshape(B, h, k)
        dW1 -= alpha[:, None, None] * W1
        db1 = dpre.sum(axis=2) - alpha[:, None] * b1
        wsq = (Z[:, :n_w] ** 2).sum(axis=1)
        da = (0.5 * n_w - alpha * wsq / 2.0
              + _gamma_log_prior_grad(a, 1.0, 0.1))
        ssr = (resid ** 2).sum(axis=1)
        du = (0.5 * r.n - tau * ssr / 2.0
              + _gamma_log_prior_grad(u, 1.0, 0.1))
        return np.concatenate(
            [dW1.reshape(-1, h * k), db1, dW2, db2[:, None],
             da[:, None], du[:, None]], axis=1)

    def predict(r: Rows, z: np.ndarray) -> np.ndarray:
        W1, b1, W2, b2, _, _ = _split(z[None, :])
        _, _, f = _forward(r, W1, b1, W2, b2)
        return f[0]

    def log_predictive(r: Rows, z: np.ndarray) -> np.ndarray:
        f = predict(r, z)
        u = z[n_w + 1]  # log precision; stays finite when exp(u) underflows
        return 0.5 * (u - _LOG_2PI) - math.exp(u) * (r.targets - f) ** 2 / 2.0

    mask = np.zeros(d, dtype=bool)
    mask[-2:] = True
    # noise precision starts at 1 / var(y) for the same reason as above
    init = np.zeros(d)
    init[-1] = -math.log(max(float(np.var(rows.targets)), 1e-12))
    return ModelSpec("bnn", d, log_joint_batch, grad_batch, mask, rows,
                     log_predictive=log_predictive, predict=predict,
                     init_mean=init)


# --- conjugate Gaussian test oracle ------------------------------------------

def conjugate_gaussian_model(x_obs: float) -> ModelSpec:
    """Prior z ~ N(0,1), likelihood x | z ~ N(z,1); d = 1.

    Everything about the ELBO is available in closed form, which makes this
    the oracle model of the test suite.
    """
    if not math.isfinite(x_obs):
        raise ValueError("x_obs must be finite")
    rows = Rows(np.zeros((1, 1)), np.array([x_obs]), np.arange(1))

    def log_joint_batch(r: Rows, Z: np.ndarray) -> np.ndarray:
        z = Z[:, 0]
        x = r.targets[0]
        return -_LOG_2PI - z ** 2 / 2.0 - (x - z) ** 2 / 2.0

    def grad_batch(r: Rows, Z: np.ndarray) -> np.ndarray:
        z = Z[:, 0]
        return (r.targets[0] - 2.0 * z)[:, None]

    def log_predictive(r: Rows, z: np.ndarray) -> np.ndarray:
        return -0.5 * _LOG_2PI - (r.targets - z[0]) ** 2 / 2.0

    return ModelSpec("conjugate_gaussian", 1, log_joint_batch, grad_batch,
                     np.zeros(1, dtype=bool), rows,
                     log_predictive=log_predictive)


def conjugate_analytic_elbo(m: float, log_scale: float, x_obs: float) -> float:
    """Closed-form ELBO of the conjugate model under q = N(m, exp(2s))."""
    v2 = math.exp(2.0 * log_scale)
    return (-_LOG_2PI - (m ** 2 + v2) / 2.0 - ((x_obs - m) ** 2 + v2) / 2.0
            + 0.5 * math.log(2.0 * math.pi * math.e * v2))


def conjugate_analytic_elbo_grad(m: float, log_scale: float,
                                 x_obs: float) -> tuple[float, float]:
    """(d ELBO / d m, d ELBO / d log_scale) in closed form."""
    v2 = math.exp(2.0 * log_scale)
    return x_obs - 2.0 * m, 1.0 - 2.0 * v2
