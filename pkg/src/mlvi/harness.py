"""Experiment harness: run one configured optimization, capture per-iteration
traces, and emit CSV files and figures.

Loop structure (iteration counter t):
  * t = 0: plain reparameterized-gradient step with n0 samples (all
    estimators), recording the initial one-sample variance V_0 for the
    multi-level rules.
  * t >= 1, MC/RQMC: fresh n0-sample batch, batch gradient, SGD/Adam step
    at alpha_t = alpha0 * eta_t.
  * t >= 1, MLMC: one-sample coupled probe, sample-size estimation by the
    configured rule, fresh N_t-sample batch, recycled multi-level step.

Per-sample gradient evaluations are counted along the optimization path
only: n0 at t = 0, then n0 (baselines) or 2 N_t (MLMC) per iteration, plus
2 per probe when the probe feeds the variance-ratio rule.  Under the
schedule-ratio rule the probe is a pure diagnostic (recorded in the trace,
excluded from the counter), as are all metric evaluations.  Elapsed time
likewise excludes metric computation.
"""

from __future__ import annotations

import dataclasses
import time
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .core import (EstimateKind, Estimator, ExperimentConfig, GradientEstimate,
                   Model, MrgState, Optimizer, SampleSizeRule,
                   VariationalParams, config_to_text, validate_config)
from .estimators import (estimate_n_schedule_ratio, estimate_n_variance_ratio,
                         mrg_step, probe_one_sample_variance)
from .gradient import (GradientNumericsError, batch_gradient,
                       per_sample_grad_matrix)
from .metrics import (MetricRow, empirical_snr, elbo_metrics,
                      gradient_resample_stats, test_log_likelihood)
from .models import (Dataset, ModelSpec, blr_model, bnn_model,
                     bundled_dataset_path, conjugate_gaussian_model,
                     generate_hlr_data, hlr_model, load_uci_csv,
                     subsample_dataset)
from .optimizers import DivergenceError, adam_init, adam_step, eta, sgd_step
from .rng import mc_normal_batch, rqmc_normal_batch

__all__ = [
    "RunTrace",
    "CSV_HEADER",
    "build_dataset",
    "build_model",
    "run_experiment",
    "write_trace_csv",
    "read_trace_csv",
    "emit_summary_plot",
]

# stream tags: xor-derived seeds keep probe and metric noise out of the
# optimization streams
_PROBE_TAG = 0x9E3779B97F4A7C15
_METRIC_TAG = 0xD1B54A32D192ED03
_VARIANCE_TAG = 0x2545F4914F6CDD1D

_CONVERGENCE_TOL = 1e-8
_CONVERGENCE_RUN = 50

CSV_HEADER = ("iter", "elapsed_s", "train_elbo", "test_elbo", "test_ll",
              "n_samples", "grad_var", "snr", "eta", "estimator")

_HLR_GROUPS = 100
_HLR_FEATURES = 10
_BNN_HIDDEN = 50
_BNN_SUBSAMPLE = 100
_CONJUGATE_X_OBS = 1.0


@dataclass
class RunTrace:
    """Everything one run produced: config snapshot, metric rows, the full
    per-iteration sample-size and probe traces, the evaluation counter, and
    the termination reason."""

    config: ExperimentConfig
    rows: list[MetricRow]
    final_params: VariationalParams
    termination: str  # iterations-exhausted | converged | diverged
    n_samples_per_iter: list[int]
    probe_v_per_iter: list[float]
    v_zero: float | None
    grad_evals: int
    elapsed_seconds: float


def _resolve_path(path: str) -> str:
    if path.startswith("bundled:"):
        return bundled_dataset_path(path.split(":", 1)[1])
    return path


def _binarize_targets(ds: Dataset) -> Dataset:
    values = np.unique(ds.targets)
    if np.isin(values, (0.0, 1.0)).all():
        return ds
    if values.size != 2:
        raise ValueError(
            f"non-binary labels for logistic regression: {values[:6]}")
    targets = (ds.targets == values.max()).astype(np.float64)
    return Dataset(ds.features, targets, ds.train_idx, ds.test_idx)


def build_dataset(cfg: ExperimentConfig) -> Dataset | None:
    """Deterministic (per seed) dataset construction for a config."""
    if cfg.model is Model.HLR:
        ds, _ = generate_hlr_data(_HLR_GROUPS, _HLR_FEATURES, cfg.seed)
        return ds
    if cfg.model is Model.BLR:
        ds = load_uci_csv(_resolve_path(cfg.dataset_path),
                          train_fraction=cfg.train_fraction, seed=cfg.seed)
        return _binarize_targets(ds)
    if cfg.model is Model.BNN:
        ds = load_uci_csv(_resolve_path(cfg.dataset_path),
                          train_fraction=1.0, seed=cfg.seed, add_bias=False)
        return subsample_dataset(ds, min(_BNN_SUBSAMPLE, ds.n), cfg.seed,
                                 cfg.train_fraction)
    return None  # conjugate oracle model carries its own pseudo-data


def build_model(cfg: ExperimentConfig, dataset: Dataset | None) -> ModelSpec:
    if cfg.model is Model.HLR:
        return hlr_model(dataset)
    if cfg.model is Model.BLR:
        return blr_model(dataset)
    if cfg.model is Model.BNN:
        return bnn_model(dataset, hidden=_BNN_HIDDEN)
    return conjugate_gaussian_model(_CONJUGATE_X_OBS)


def run_experiment(cfg: ExperimentConfig, dataset: Dataset | None = None,
                   clock: Callable[[], float] = time.perf_counter) -> RunTrace:
    """Execute one run and return its trace.

    ``dataset`` may be injected (sweeps reuse one); ``clock`` is injectable
    so tests can pin elapsed times.  Divergence is caught: the partial trace
    is preserved with termination reason "diverged".
    """
    validate_config(cfg)
    if dataset is None:
        dataset = build_dataset(cfg)
    model = build_model(cfg, dataset)
    d = model.latent_dim
    test_rows = None
    if dataset is not None and dataset.test_idx.size > 0:
        test_rows = dataset.test_rows()

    seed = cfg.seed
    metric_seed = (seed ^ _METRIC_TAG) % 2**64
    probe_seed = (seed ^ _PROBE_TAG) % 2**64
    variance_seed = (seed ^ _VARIANCE_TAG) % 2**64

    is_mlmc = cfg.estimator is Estimator.MLMC
    noise_fn = (rqmc_normal_batch if cfg.estimator is Estimator.RQMC
                else mc_normal_batch)
    baseline_kind = (EstimateKind.RQMC if cfg.estimator is Estimator.RQMC
                     else EstimateKind.MC)
    sched = cfg.schedule
    prox = cfg.prox_radius

    if model.init_mean is not None:
        params = VariationalParams(model.init_mean, np.zeros(d))
    else:
        params = VariationalParams.zeros(d)
    params_prev: VariationalParams | None = None
    adam = adam_init(d) if cfg.optimizer is Optimizer.ADAM else None
    state: MrgState | None = None
    v_zero: float | None = None

    rows: list[MetricRow] = []
    n_hist: list[int] = []
    probe_hist: list[float] = []
    evals = 0
    opt_seconds = 0.0
    termination = "iterations-exhausted"
    quiet_streak = 0

    def record(t: int, n_used: int, mrg_ctx: tuple | None) -> None:
        """Append a metric row for the iterate at iteration t (untimed)."""
        train_elbo, test_elbo = elbo_metrics(
            model, params, model.rows, test_rows, cfg.test_mc_samples,
            metric_seed, prox)
        tll = test_log_likelihood(model, params, test_rows,
                                  cfg.test_mc_samples, metric_seed)
        if mrg_ctx is not None:
            prev, n_next, offset = mrg_ctx
            mean, var_trace = gradient_resample_stats(
                model, params, EstimateKind.MRG, n_next, cfg.variance_repeats,
                variance_seed, params_prev=prev, prox_radius=prox,
                offset=offset)
        else:
            mean, var_trace = gradient_resample_stats(
                model, params, baseline_kind, cfg.n0, cfg.variance_repeats,
                variance_seed, prox_radius=prox)
        snr = empirical_snr(mean, var_trace) if var_trace > 0 else None
        rows.append(MetricRow(
            iteration=t,
            wall_clock_seconds=opt_seconds,
            train_elbo=train_elbo,
            test_elbo=test_elbo,
            test_log_likelihood=None if tll is None else tll.total,
            n_samples_used=n_used,
            grad_variance_trace=var_trace,
            snr_empirical=snr,
            eta_value=eta(sched, t),
            estimator_kind=cfg.estimator.value,
        ))

    def due(t: int) -> bool:
        return t % cfg.metric_every == 0

    try:
        if cfg.iterations > 0:
            # t = 0: plain reparameterized-gradient step, all estimators
            tic = clock()
            batch0 = noise_fn(seed, 0, cfg.n0, d)
            mat0 = per_sample_grad_matrix(model, params, batch0.values,
                                          prox_radius=prox)
            mean0 = mat0.mean(axis=0)
            if is_mlmc:
                if cfg.n0 >= 2:
                    v_zero = float(mat0.var(axis=0, ddof=1).sum())
                else:
                    v_zero = float((mat0[0] ** 2).sum())
                v_zero = max(v_zero, np.finfo(np.float64).tiny)
            g0 = GradientEstimate(mean0[:d], mean0[d:], cfg.n0, baseline_kind, 0)
            evals += cfg.n0
            alpha_0 = sched.alpha0 * eta(sched, 0)
            loss0 = g0.negated()
            opt_seconds += clock() - tic
            if due(0):
                record(0, cfg.n0, None)
            tic = clock()
            if cfg.optimizer is Optimizer.ADAM:
                new_params, adam = adam_step(adam, params, loss0, alpha_0)
            else:
                new_params = sgd_step(params, loss0, alpha_0)
            params_prev, params = params, new_params
            n_hist.append(cfg.n0)
            if is_mlmc:
                state = MrgState(params_prev, params, eta(sched, 0), 1.0,
                                 v_zero, v_zero, cfg.n0, cfg.n0, 1)
            opt_seconds += clock() - tic
        else:
            record(0, cfg.n0, None)

        for t in range(1, cfg.iterations):
            tic = clock()
            if is_mlmc:
                probe_batch = mc_normal_batch(probe_seed, t, 1, d)
                probe = probe_one_sample_variance(
                    model, state.params_curr, state.params_prev,
                    probe_batch.values[0], prox_radius=prox,
                    eps_id=probe_batch.stream_id)
                probe_hist.append(probe.v_t)
                if cfg.sample_size_rule is SampleSizeRule.VARIANCE_RATIO:
                    n_t = estimate_n_variance_ratio(
                        t, probe.v_t, state.v_prev, state.v_zero,
                        state.n_curr, state.n_initial)
                    evals += 2  # the probe feeds the rule: 2 evaluations
                else:
                    n_t = estimate_n_schedule_ratio(
                        t, state.eta_prev, state.eta_prev2, state.v_zero,
                        state.n_curr, state.n_initial)
                opt_seconds += clock() - tic
                if due(t):
                    eta_t = eta(sched, t)
                    offset = ((eta_t / state.eta_prev)
                              * (state.params_curr.to_flat()
                                 - state.params_prev.to_flat())
                              / (sched.alpha0 * eta_t))
                    record(t, n_t, (state.params_prev, n_t, offset))
                tic = clock()
                batch = mc_normal_batch(seed, t, n_t, d)
                new_params, state, _est = mrg_step(
                    state, model, sched, batch, prox_radius=prox,
                    v_probe=probe.v_t)
                evals += 2 * n_t
                n_hist.append(n_t)
            else:
                opt_seconds += clock() - tic
                if due(t):
                    record(t, cfg.n0, None)
                tic = clock()
                batch = noise_fn(seed, t, cfg.n0, d)
                g = batch_gradient(model, params, batch, prox_radius=prox,
                                   iteration=t)
                evals += cfg.n0
                alpha_t = sched.alpha0 * eta(sched, t)
                if cfg.optimizer is Optimizer.ADAM:
                    new_params, adam = adam_step(adam, params, g.negated(),
                                                 alpha_t)
                else:
                    new_params = sgd_step(params, g.negated(), alpha_t)
                n_hist.append(cfg.n0)

            delta = float(np.linalg.norm(new_params.to_flat()
                                         - params.to_flat()))
            params_prev, params = params, new_params
            opt_seconds += clock() - tic
            quiet_streak = quiet_streak + 1 if delta < _CONVERGENCE_TOL else 0
            if quiet_streak >= _CONVERGENCE_RUN:
                termination = "converged"
                _final_record(record, t + 1, n_hist, is_mlmc, state, sched, cfg)
                break
        else:
            if cfg.iterations > 0:
                _final_record(record, cfg.iterations, n_hist, is_mlmc, state,
                              sched, cfg)
    except (DivergenceError, GradientNumericsError):
        termination = "diverged"

    return RunTrace(cfg, rows, params, termination, n_hist, probe_hist,
                    v_zero, evals, opt_seconds)


def _final_record(record, t: int, n_hist: list[int], is_mlmc: bool,
                  state: MrgState | None, sched, cfg) -> None:
    """Row for the final iterate, with the last-used sample size."""
    n_used = n_hist[-1] if n_hist else cfg.n0
    if is_mlmc and state is not None:
        eta_t = eta(sched, t)
        offset = ((eta_t / state.eta_prev)
                  * (state.params_curr.to_flat() - state.params_prev.to_flat())
                  / (sched.alpha0 * eta_t))
        record(t, n_used, (state.params_prev, n_used, offset))
    else:
        record(t, n_used, None)


# --- delimited output --------------------------------------------------------

def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return f"{value:.10g}"


def write_trace_csv(trace: RunTrace, path: str) -> None:
    """One header line plus one row per metric checkpoint; floats at 10
    significant digits, absent metrics as empty fields."""
    lines = [",".join(CSV_HEADER)]
    for r in trace.rows:
        lines.append(",".join([
            str(r.iteration), _fmt(r.wall_clock_seconds), _fmt(r.train_elbo),
            _fmt(r.test_elbo), _fmt(r.test_log_likelihood),
            str(r.n_samples_used), _fmt(r.grad_variance_trace),
            _fmt(r.snr_empirical), _fmt(r.eta_value), r.estimator_kind,
        ]))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_trace_csv(path: str) -> list[MetricRow]:
    """Parse a trace CSV back into metric rows."""
    with open(path, "r") as fh:
        lines = [ln.rstrip("\n") for ln in fh if ln.strip()]
    if not lines or lines[0] != ",".join(CSV_HEADER):
        raise ValueError(f"{path}: not a trace CSV (bad header)")
    out = []
    for ln in lines[1:]:
        parts = ln.split(",")
        if len(parts) != len(CSV_HEADER):
            raise ValueError(f"{path}: malformed row {ln!r}")
        opt = lambda s: None if s == "" else float(s)
        out.append(MetricRow(
            iteration=int(parts[0]), wall_clock_seconds=float(parts[1]),
            train_elbo=float(parts[2]), test_elbo=opt(parts[3]),
            test_log_likelihood=opt(parts[4]), n_samples_used=int(parts[5]),
            grad_variance_trace=opt(parts[6]), snr_empirical=opt(parts[7]),
            eta_value=float(parts[8]), estimator_kind=parts[9]))
    return out


# --- figures -----------------------------------------------------------------

_PLOT_COLUMNS = {
    "elapsed_s": "wall_clock_seconds",
    "train_elbo": "train_elbo",
    "test_elbo": "test_elbo",
    "test_ll": "test_log_likelihood",
    "n_samples": "n_samples_used",
    "grad_var": "grad_variance_trace",
    "snr": "snr_empirical",
    "eta": "eta_value",
}


def emit_summary_plot(traces: Sequence, metric: str, path: str) -> None:
    """Render one polyline per trace for the chosen metric column, legend
    keyed by estimator kind, to a self-contained vector-graphics file.

    ``traces`` may hold RunTrace objects or (label, rows) pairs (the CSV
    path used by the CLI).
    """
    if metric not in _PLOT_COLUMNS:
        raise ValueError(
            f"unknown metric column {metric!r}; valid columns: "
            f"{', '.join(sorted(_PLOT_COLUMNS))}")
    attr = _PLOT_COLUMNS[metric]

    import matplotlib
    from matplotlib.figure import Figure

    fig = Figure(figsize=(6.0, 4.0))
    ax = fig.add_subplot()
    for i, item in enumerate(traces):
        if isinstance(item, RunTrace):
            label, rows = item.config.estimator.value, item.rows
        else:
            label, rows = item
        xs = [r.iteration for r in rows if getattr(r, attr) is not None]
        ys = [getattr(r, attr) for r in rows if getattr(r, attr) is not None]
        (line,) = ax.plot(xs, ys, label=label)
        line.set_gid(f"trace_{label}_{i}")
    ax.set_xlabel("iteration")
    ax.set_ylabel(metric)
    ax.legend()
    # keep text as text in the SVG so legends stay grep-able
    with matplotlib.rc_context({"svg.fonttype": "none"}):
        fig.savefig(path,
                    format=path.rsplit(".", 1)[-1] if "." in path else "svg")


def sweep_config(cfg: ExperimentConfig, estimator: Estimator) -> ExperimentConfig:
    """Per-estimator config for a sweep: the seed and data stay shared; the
    multi-level estimator always pairs with SGD, baselines keep the
    configured optimizer."""
    optimizer = Optimizer.SGD if estimator is Estimator.MLMC else cfg.optimizer
    return dataclasses.replace(cfg, estimator=estimator, optimizer=optimizer)


def config_snapshot_text(cfg: ExperimentConfig) -> str:
    return config_to_text(cfg)
