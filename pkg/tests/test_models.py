import numpy as np
import pytest

from mlvi.checks import central_difference, relative_error
from mlvi.models import (CsvParseError, Dataset, bundled_dataset_path,
                         blr_model, bnn_model, conjugate_gaussian_model,
                         conjugate_analytic_elbo_grad, generate_hlr_data,
                         hlr_model, load_uci_csv, subsample_dataset)

from helpers import (bnn_smooth_probes, small_blr_dataset,
                     small_regression_dataset)


def gradcheck(model, rows, probes, rel_tol=1e-5):
    worst = 0.0
    for z in probes:
        fd = central_difference(lambda Z: model.log_joint_batch(rows, Z), z)
        worst = max(worst, relative_error(fd, model.grad_z_log_joint(rows, z)))
    assert worst <= rel_tol, f"{model.name}: rel err {worst:.3e}"


class TestGenerateHlrData:
    def test_paper_scale_dimension(self):
        ds, _ = generate_hlr_data(100, 10, seed=0)
        assert hlr_model(ds).latent_dim == 100 * 10 + 10 + 2 == 1012

    def test_deterministic_per_seed(self):
        a, ta = generate_hlr_data(30, 4, seed=7)
        b, tb = generate_hlr_data(30, 4, seed=7)
        assert np.array_equal(a.features, b.features)
        assert np.array_equal(a.targets, b.targets)
        assert ta["sigma_prime"] == tb["sigma_prime"]

    def test_residual_variance_matches_sampled_noise(self):
        ds, truth = generate_hlr_data(1000, 5, seed=3)
        residuals = ds.targets - np.einsum("ik,ik->i", ds.features, truth["b"])
        assert abs(residuals.var() / truth["noise_var"] - 1.0) <= 0.2

    def test_all_rows_train(self):
        ds, _ = generate_hlr_data(20, 3, seed=1)
        assert ds.train_idx.size == 20 and ds.test_idx.size == 0


class TestModelGradients:
    """Every model passes the central-difference oracle at random probes."""

    def test_hlr(self):
        rng = np.random.default_rng(11)
        ds, _ = generate_hlr_data(25, 3, seed=2)
        m = hlr_model(ds)
        gradcheck(m, m.rows, 0.3 * rng.standard_normal((20, m.latent_dim)))

    def test_blr(self):
        rng = np.random.default_rng(12)
        m = blr_model(small_blr_dataset())
        gradcheck(m, m.rows, 0.4 * rng.standard_normal((20, m.latent_dim)))

    def test_bnn(self):
        # probes keep pre-activations off the ReLU kink, where a central
        # difference stops estimating the (correct) one-sided derivative
        rng = np.random.default_rng(13)
        m = bnn_model(small_regression_dataset(), hidden=6)
        gradcheck(m, m.rows, bnn_smooth_probes(m, 6, 20, rng))

    def test_conjugate(self):
        rng = np.random.default_rng(14)
        m = conjugate_gaussian_model(1.5)
        gradcheck(m, m.rows, rng.standard_normal((20, 1)))


class TestModelStructure:
    def test_log_joint_proper(self):
        # proper priors: log-joint decays toward -inf as |z| grows
        for m in (blr_model(small_blr_dataset()),
                  bnn_model(small_regression_dataset(), hidden=4),
                  conjugate_gaussian_model(0.3)):
            direction = np.ones(m.latent_dim) / np.sqrt(m.latent_dim)
            vals = [m.log_joint(m.rows, c * direction) for c in (1, 30, 300)]
            assert vals[0] > vals[1] > vals[2]
            assert vals[2] < -1e4

    def test_positive_masks(self):
        ds, _ = generate_hlr_data(10, 2, seed=0)
        assert hlr_model(ds).positive_mask.sum() == 2
        assert blr_model(small_blr_dataset()).positive_mask.sum() == 1
        assert bnn_model(small_regression_dataset(), hidden=3).positive_mask.sum() == 2

    def test_bnn_zero_weights_zero_prediction(self):
        m = bnn_model(small_regression_dataset(), hidden=8)
        pred = m.predict(m.rows, np.zeros(m.latent_dim))
        assert np.all(pred == 0.0)

    def test_bnn_paper_scale_dimension(self):
        ds = load_uci_csv(bundled_dataset_path("wine_red"), train_fraction=1.0,
                          seed=0, add_bias=False)
        sub = subsample_dataset(ds, 100, seed=0)
        assert bnn_model(sub, hidden=50).latent_dim == 653

    def test_blr_requires_binary_targets(self):
        ds = small_regression_dataset()
        with pytest.raises(ValueError, match="0,1"):
            blr_model(ds)

    def test_hlr_rejects_partial_rows(self):
        ds, _ = generate_hlr_data(10, 2, seed=0)
        m = hlr_model(ds)
        partial = Dataset(ds.features, ds.targets, np.arange(5),
                          np.arange(5, 10)).train_rows()
        with pytest.raises(ValueError, match="full"):
            m.log_joint(partial, np.zeros(m.latent_dim))


class TestConjugateModel:
    def test_symmetry_at_origin(self):
        m = conjugate_gaussian_model(0.0)
        assert m.grad_z_log_joint(m.rows, np.zeros(1))[0] == 0.0

    def test_analytic_gradient_values(self):
        # d ELBO / d mean = x - 2m
        assert conjugate_analytic_elbo_grad(0.0, 0.0, 1.0)[0] == 1.0
        assert conjugate_analytic_elbo_grad(0.5, 0.0, 1.0)[0] == 0.0

    def test_rejects_non_finite_observation(self):
        with pytest.raises(ValueError):
            conjugate_gaussian_model(float("nan"))


class TestLoadUciCsv:
    def test_bias_append_gives_k_plus_one(self, tmp_path):
        p = tmp_path / "cancer_like.csv"
        rng = np.random.default_rng(0)
        rows = ["f1,f2,f3,f4,f5,f6,f7,f8,f9,class"]
        for _ in range(50):
            feats = rng.integers(1, 11, size=9)
            rows.append(",".join(map(str, feats)) + f",{rng.choice([2, 4])}")
        p.write_text("\n".join(rows))
        ds = load_uci_csv(str(p))
        assert ds.k == 10  # 9 features + bias

    def test_parse_error_names_row_and_column(self, tmp_path):
        p = tmp_path / "bad.csv"
        p.write_text("a,b,y\n1,2,0\n1,oops,1\n")
        with pytest.raises(CsvParseError, match=r"row 2.*'b'"):
            load_uci_csv(str(p))

    def test_full_train_fraction_empty_test(self, tmp_path):
        p = tmp_path / "d.csv"
        p.write_text("\n".join(f"{i},{i % 2}" for i in range(10)))
        ds = load_uci_csv(str(p), train_fraction=1.0)
        assert ds.test_idx.size == 0 and ds.train_idx.size == 10

    def test_target_by_name_and_missing_column(self, tmp_path):
        p = tmp_path / "named.csv"
        p.write_text("x,y,label\n1,2,0\n3,4,1\n")
        ds = load_uci_csv(str(p), target_column="label", train_fraction=1.0)
        assert ds.k == 3
        with pytest.raises(CsvParseError, match="no target column"):
            load_uci_csv(str(p), target_column="missing")

    def test_positive_label_mapping(self, tmp_path):
        p = tmp_path / "lab.csv"
        p.write_text("x,label\n1,M\n2,B\n3,M\n4,B\n")
        ds = load_uci_csv(str(p), positive_label="M", train_fraction=1.0)
        assert set(ds.targets) == {0.0, 1.0}
        assert ds.targets.sum() == 2.0

    def test_non_numeric_target_without_label(self, tmp_path):
        p = tmp_path / "lab2.csv"
        p.write_text("x,label\n1,M\n2,B\n")
        with pytest.raises(CsvParseError, match="positive_label"):
            load_uci_csv(str(p))

    def test_standardization_uses_train_split_only(self, tmp_path):
        p = tmp_path / "std.csv"
        rng = np.random.default_rng(1)
        lines = [f"{v},{t}" for v, t in
                 zip(5.0 + 2.0 * rng.standard_normal(50), rng.integers(0, 2, 50))]
        p.write_text("\n".join(lines))
        ds = load_uci_csv(str(p), train_fraction=0.8, seed=0)
        train_col = ds.features[ds.train_idx, 0]
        assert abs(train_col.mean()) < 1e-12
        assert abs(train_col.std() - 1.0) < 1e-12

    def test_split_determinism(self, tmp_path):
        p = tmp_path / "s.csv"
        p.write_text("\n".join(f"{i},{i % 2}" for i in range(30)))
        a = load_uci_csv(str(p), seed=3)
        b = load_uci_csv(str(p), seed=3)
        assert np.array_equal(a.train_idx, b.train_idx)


class TestDatasetInvariants:
    def test_split_must_partition(self):
        with pytest.raises(ValueError, match="disjoint and exhaustive"):
            Dataset(np.zeros((3, 1)), np.zeros(3), np.array([0, 1]),
                    np.array([1, 2]))

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError, match="non-finite"):
            Dataset(np.array([[np.nan]]), np.zeros(1), np.arange(1),
                    np.arange(0))

    def test_subsample_deterministic(self):
        ds = small_blr_dataset(n=40)
        a = subsample_dataset(ds, 10, seed=5)
        b = subsample_dataset(ds, 10, seed=5)
        assert np.array_equal(a.features, b.features)
        with pytest.raises(ValueError):
            subsample_dataset(ds, 99, seed=0)
