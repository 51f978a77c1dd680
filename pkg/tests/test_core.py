import numpy as np
import pytest
from hypothesis import given, strategies as st

from mlvi.core import (ConfigError, Estimator, ExperimentConfig, GradientEstimate,
                       EstimateKind, Model, Optimizer, SampleSizeRule,
                       ScheduleConfig, ScheduleKind, StepRounding,
                       VariationalParams, config_to_text, parse_config_text,
                       validate_config)


def make_config(**overrides):
    base = dict(model=Model.CONJUGATE_GAUSSIAN, estimator=Estimator.MC,
                optimizer=Optimizer.ADAM, n0=100, iterations=10, seed=1)
    base.update(overrides)
    return ExperimentConfig(**base)


class TestValidateConfig:
    def test_mlmc_requires_sgd(self):
        cfg = make_config(estimator=Estimator.MLMC, optimizer=Optimizer.ADAM)
        with pytest.raises(ConfigError, match="MLMC requires SGD"):
            validate_config(cfg)

    def test_valid_config_is_identity(self):
        cfg = make_config()
        assert validate_config(cfg) is cfg

    def test_n0_zero_rejected(self):
        with pytest.raises(ConfigError, match="n0 must be >= 1"):
            validate_config(make_config(n0=0))

    def test_missing_dataset_path(self):
        for model in (Model.BLR, Model.BNN):
            with pytest.raises(ConfigError, match="dataset_path"):
                validate_config(make_config(model=model, dataset_path=None))

    def test_all_violations_reported(self):
        cfg = make_config(estimator=Estimator.MLMC, optimizer=Optimizer.ADAM,
                          n0=0, train_fraction=1.5)
        with pytest.raises(ConfigError) as err:
            validate_config(cfg)
        assert len(err.value.violations) >= 3

    def test_step_schedule_constraints(self):
        bad = ScheduleConfig(ScheduleKind.STEP_BASED, beta=1.5, drop_rate=0)
        assert len(bad.violations()) == 2

    def test_prox_radius_must_be_positive(self):
        with pytest.raises(ConfigError, match="prox_radius"):
            validate_config(make_config(prox_radius=-1.0))
        validate_config(make_config(prox_radius=10.0))


schedule_strategy = st.builds(
    ScheduleConfig,
    kind=st.sampled_from(ScheduleKind),
    beta=st.floats(0.01, 0.99),
    drop_rate=st.integers(1, 500),
    alpha0=st.floats(1e-5, 1.0),
    rounding=st.sampled_from(StepRounding),
)

config_strategy = st.builds(
    ExperimentConfig,
    model=st.sampled_from(Model),
    estimator=st.sampled_from([Estimator.MC, Estimator.RQMC]),
    optimizer=st.sampled_from(Optimizer),
    schedule=schedule_strategy,
    n0=st.integers(2, 1000),
    iterations=st.integers(0, 10_000),
    seed=st.integers(0, 2**64 - 1),
    dataset_path=st.one_of(st.none(), st.just("bundled:breast_cancer")),
    train_fraction=st.floats(0.1, 1.0),
    sample_size_rule=st.sampled_from(SampleSizeRule),
    metric_every=st.integers(1, 100),
    variance_repeats=st.integers(2, 2000),
    test_mc_samples=st.integers(1, 5000),
    prox_radius=st.one_of(st.none(), st.floats(0.1, 100.0)),
)


class TestConfigSerialization:
    @given(config_strategy)
    def test_round_trip_field_for_field(self, cfg):
        assert parse_config_text(config_to_text(cfg)) == cfg

    def test_comments_and_blank_lines(self):
        text = "# a comment\n\nmodel = blr\ndataset_path = x.csv  # trailing\n"
        cfg = parse_config_text(text)
        assert cfg.model is Model.BLR
        assert cfg.dataset_path == "x.csv"

    def test_overrides_win(self):
        cfg = parse_config_text("seed = 1\n", overrides={"seed": 99})
        assert cfg.seed == 99

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError, match="unknown config key"):
            parse_config_text("bogus = 1\n")

    def test_bad_enum_value_lists_options(self):
        with pytest.raises(ConfigError, match="expected one of"):
            parse_config_text("estimator = qmc\n")


class TestVariationalParams:
    def test_rejects_mismatched_lengths(self):
        with pytest.raises(ValueError, match="length mismatch"):
            VariationalParams(np.zeros(3), np.zeros(2))

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError, match="non-finite"):
            VariationalParams(np.array([np.nan]), np.zeros(1))
        with pytest.raises(ValueError, match="non-finite"):
            VariationalParams(np.zeros(1), np.array([np.inf]))

    def test_rejects_empty(self):
        with pytest.raises(ValueError):
            VariationalParams(np.zeros(0), np.zeros(0))

    def test_scale_positive_by_construction(self):
        p = VariationalParams(np.zeros(3), np.array([-50.0, 0.0, 50.0]))
        assert (p.scale > 0).all()

    @given(st.integers(1, 20), st.integers(0, 2**32 - 1))
    def test_flat_round_trip(self, dim, seed):
        rng = np.random.default_rng(seed)
        p = VariationalParams(rng.standard_normal(dim),
                              rng.standard_normal(dim))
        assert VariationalParams.from_flat(p.to_flat()) == p

    def test_immutable(self):
        p = VariationalParams(np.zeros(2), np.zeros(2))
        with pytest.raises(ValueError):
            p.mean[0] = 1.0


class TestGradientEstimate:
    def test_invariants(self):
        with pytest.raises(ValueError):
            GradientEstimate(np.zeros(2), np.zeros(2), 0, EstimateKind.MC)
        with pytest.raises(ValueError):
            GradientEstimate(np.zeros(2), np.zeros(3), 1, EstimateKind.MC)

    def test_negated(self):
        g = GradientEstimate(np.array([1.0]), np.array([-2.0]), 5,
                             EstimateKind.RQMC, 3)
        ng = g.negated()
        assert ng.d_mean[0] == -1.0 and ng.d_log_scale[0] == 2.0
        assert (ng.n_samples, ng.kind, ng.iteration) == (5, EstimateKind.RQMC, 3)
