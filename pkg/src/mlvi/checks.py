"""Central-difference oracle and the fast self-check suite behind `mlvi check`.

The oracle is deliberately independent of the hand-coded gradients it
verifies: it only ever calls batched scalar functions.
"""

from __future__ import annotations

import math
from typing import Callable

import numpy as np

__all__ = ["central_difference", "relative_error", "run_self_checks"]


def central_difference(f_batch: Callable[[np.ndarray], np.ndarray],
                       x: np.ndarray, rel_step: float = 1e-5) -> np.ndarray:
    """Central finite differences of a batched scalar function.

    ``f_batch`` maps an (B, d) matrix to (B,) values.  The step for
    coordinate j is rel_step * (1 + |x_j|).
    """
    x = np.asarray(x, dtype=np.float64)
    d = x.size
    steps = rel_step * (1.0 + np.abs(x))
    probes = np.repeat(x[None, :], 2 * d, axis=0)
    idx = np.arange(d)
    probes[2 * idx, idx] += steps
    probes[2 * idx + 1, idx] -= steps
    vals = np.asarray(f_batch(probes), dtype=np.float64)
    return (vals[0::2] - vals[1::2]) / (2.0 * steps)


def relative_error(approx: np.ndarray, exact: np.ndarray) -> float:
    """Worst per-coordinate error scaled by max(1, |exact coordinate|)."""
    approx = np.asarray(approx, dtype=np.float64)
    exact = np.asarray(exact, dtype=np.float64)
    return float(np.max(np.abs(approx - exact) / np.maximum(1.0, np.abs(exact))))


def model_gradient_check(model, rows, probes: np.ndarray,
                         rel_tol: float = 1e-5) -> float:
    """Worst relative error of grad_z_log_joint vs finite differences over
    the given probe latent vectors; raises AssertionError above rel_tol."""
    worst = 0.0
    for z in np.atleast_2d(probes):
        fd = central_difference(lambda Z: model.log_joint_batch(rows, Z), z)
        an = model.grad_z_log_joint(rows, z)
        worst = max(worst, relative_error(fd, an))
    if worst > rel_tol:
        raise AssertionError(
            f"{model.name}: gradient check failed (rel err {worst:.3e})")
    return worst


def run_self_checks(verbose: bool = True) -> bool:
    """Fast invariant suite used by the `check` CLI subcommand.

    Returns True iff every check passes; prints one line per check.
    """
    from . import estimators, gradient, metrics, models, optimizers, rng
    from .core import EstimateKind, ScheduleConfig, ScheduleKind, VariationalParams

    results: list[tuple[str, bool, str]] = []

    def record(name: str, fn: Callable[[], str | None]):
        try:
            detail = fn() or ""
            results.append((name, True, detail))
        except Exception as exc:  # noqa: BLE001 - report, do not crash
            results.append((name, False, f"{type(exc).__name__}: {exc}"))

    def sobol_reference():
        pts = rng.sobol_uniform(3, 2)
        want = np.array([[0.5, 0.5], [0.75, 0.25], [0.25, 0.75]])
        assert np.array_equal(pts, want), pts
        return "first three 2-d points exact"

    def inverse_cdf_roundtrip():
        u = np.linspace(1e-12, 1.0 - 1e-12, 10001)
        x = rng.inverse_normal_cdf(u)
        # forward CDF from math.erf is an independent double-precision path
        back = 0.5 * (1.0 + np.array([math.erf(v / math.sqrt(2.0)) for v in x]))
        err = np.abs(back - u).max()
        assert err < 1e-9, err
        return f"max |Phi(Phi^-1(u)) - u| = {err:.2e}"

    def batch_determinism():
        a = rng.mc_normal_batch(7, 3, 64, 5)
        b = rng.mc_normal_batch(7, 3, 64, 5)
        c = rng.rqmc_normal_batch(7, 3, 64, 5)
        d = rng.rqmc_normal_batch(7, 3, 64, 5)
        assert np.array_equal(a.values, b.values)
        assert np.array_equal(c.values, d.values)
        return "mc and rqmc streams replay bit-identically"

    def entropy_identity():
        flat = models.ModelSpec(
            "flat", 4,
            lambda r, Z: np.zeros(Z.shape[0]),
            lambda r, Z: np.zeros_like(Z),
            np.zeros(4, dtype=bool),
            models.Rows(np.zeros((1, 1)), np.zeros(1), np.arange(1)))
        params = VariationalParams(np.arange(4.0), 0.1 * np.arange(4.0))
        g = gradient.per_sample_gradient(flat, params, np.array([0.3, -1, 2, 0.0]))
        assert np.abs(g.d_log_scale - 1.0).max() < 1e-12
        assert np.abs(g.d_mean).max() == 0.0
        return "d_log_scale == 1 for log p == 0"

    def coupling_identity():
        model = models.conjugate_gaussian_model(1.0)
        params = VariationalParams(np.array([0.3]), np.array([-0.2]))
        batch = rng.mc_normal_batch(0, 0, 16, 1)
        diff = estimators.coupled_difference(model, params, params, batch)
        assert np.all(diff.to_flat() == 0.0)
        return "coupled difference at equal params is exactly zero"

    def sample_size_rules():
        assert estimators.estimate_n_variance_ratio(1, 1.0, 1.0, 1.0, 100, 100) == 71
        assert estimators.estimate_n_variance_ratio(2, 1.0, 1.0, 1.0, 50, 100) == 50
        assert estimators.estimate_n_variance_ratio(3, 0.25, 1.0, 1.0, 40, 100) == 20
        assert estimators.estimate_n_schedule_ratio(1, 1.0, 1.0, 0.5, 100, 100) == 100
        assert estimators.estimate_n_schedule_ratio(5, 0.25, 0.5, 0.5, 40, 100) == 20
        return "hand-evaluated values 71 / 50 / 20 / 100 / 20"

    def scheduler_values():
        step = ScheduleConfig(ScheduleKind.STEP_BASED, 0.5, 100, 0.01)
        assert optimizers.eta(step, 0) == 1.0
        assert optimizers.eta(step, 1) == 0.5
        assert optimizers.eta(step, 150) == 0.25
        time = ScheduleConfig(ScheduleKind.TIME_BASED, 0.1, 1, 0.01)
        assert abs(optimizers.eta(time, 9) - 1.0 / 1.9) < 1e-15
        return "step and time decay values match"

    def conjugate_gradcheck():
        model = models.conjugate_gaussian_model(1.0)
        probes = np.random.default_rng(0).normal(size=(5, 1))
        worst = model_gradient_check(model, model.rows, probes)
        return f"worst rel err {worst:.2e}"

    def prox_examples():
        z = np.array([3.0, 4.0])
        out = estimators.proximal_truncate(z, 1.0)
        assert np.allclose(out, [0.6, 0.8], atol=1e-15)
        inside = np.array([0.1, -0.2])
        assert np.array_equal(estimators.proximal_truncate(inside, 1.0), inside)
        return "projection onto the radius-1 ball"

    def snr_formulas():
        assert metrics.snr_lower_bound(1.0, 1.0, 4, 1.0, EstimateKind.MC) == 2.0
        assert metrics.snr_lower_bound(1.0, 1.0, 4, 1.0, EstimateKind.RQMC) == 4.0
        assert metrics.snr_lower_bound(1.0, 1.0, 1, 0.25, EstimateKind.MRG) == 4.0
        return "bound formulas at the reference points"

    for name, fn in [
        ("sobol reference points", sobol_reference),
        ("inverse normal cdf round-trip", inverse_cdf_roundtrip),
        ("noise batch determinism", batch_determinism),
        ("entropy analytic identity", entropy_identity),
        ("coupling identity", coupling_identity),
        ("sample-size rules", sample_size_rules),
        ("scheduler values", scheduler_values),
        ("conjugate model gradient check", conjugate_gradcheck),
        ("proximal truncation", prox_examples),
        ("snr bound formulas", snr_formulas),
    ]:
        record(name, fn)

    all_ok = all(ok for _, ok, _ in results)
    if verbose:
        for name, ok, detail in results:
            status = "PASS" if ok else "FAIL"
            suffix = f" ({detail})" if detail else ""
            print(f"[{status}] {name}{suffix}")
    return all_ok
