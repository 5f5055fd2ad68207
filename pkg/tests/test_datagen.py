import numpy as np
import pytest

from tenreg.datagen import (
    ModelClassSpec,
    VarModel,
    class_certificate,
    coefficient_tensor,
    gen_pairwise_components,
    gen_problem,
    gen_truth,
    gen_var_model,
    gen_var_series,
    var_spectral_extrema,
    var_truth,
)
from tenreg.errors import BadCovarianceFactor, InfeasibleClass, UnstableModel
from tenreg.solver import objective
from tenreg.regularizers import entry_l1
from tenreg.tensor import inner, matricize

rng = np.random.default_rng(31)


class TestGenTruth:
    def test_theta1_empty(self):
        spec = ModelClassSpec("theta1", (3, 3, 3), s=0)
        np.testing.assert_array_equal(gen_truth(spec, 0), np.zeros((3, 3, 3)))

    def test_theta1_support(self):
        spec = ModelClassSpec("theta1", (4, 4, 4), s=5)
        t = gen_truth(spec, 1)
        assert np.count_nonzero(t) == 5
        assert set(np.abs(t[t != 0])) == {1.0}
        assert class_certificate(spec, t)["ok"]

    def test_theta2_fibers(self):
        spec = ModelClassSpec("theta2", (3, 4, 5), s=3, mode=1)
        t = gen_truth(spec, 2)
        norms = np.sqrt((t * t).sum(axis=1))
        assert np.count_nonzero(norms) == 3
        assert class_certificate(spec, t)["ok"]

    def test_theta3_slices(self):
        spec = ModelClassSpec("theta3", (3, 4, 6), s=2, axes=(0, 1))
        t = gen_truth(spec, 3)
        assert class_certificate(spec, t)["ok"]

    def test_theta4_slice_ranks(self):
        spec = ModelClassSpec("theta4", (4, 5, 6), s=None, r=3, axes=(0, 1))
        t = gen_truth(spec, 4)
        cert = class_certificate(spec, t)
        assert cert["ok"] and sum(cert["slice_ranks"]) == 3

    def test_theta5_tucker_rank_one(self):
        spec = ModelClassSpec("theta5", (4, 4, 4), r=1)
        t = gen_truth(spec, 5)
        for k in range(3):
            assert np.linalg.matrix_rank(matricize(t, [k]), tol=1e-10) == 1
        assert class_certificate(spec, t)["ok"]
        assert np.linalg.norm(t) == pytest.approx(1.0)

    def test_t1_is_slice_sparse_on_first_axis(self):
        spec = ModelClassSpec("t1", (50, 4, 4), s=3)
        t = gen_truth(spec, 6)
        norms = np.sqrt((t * t).sum(axis=(1, 2)))
        assert np.count_nonzero(norms) == 3
        assert class_certificate(spec, t)["ok"]

    def test_t4_components_centered_low_rank(self):
        spec = ModelClassSpec("t4", (6, 6, 6), r=2, magnitude=1.0)
        comps = gen_pairwise_components(spec, 7)
        for m in comps:
            assert float(np.abs(m.sum(axis=0)).max()) < 1e-12
            assert float(np.abs(m.sum(axis=1)).max()) < 1e-12
            assert np.linalg.matrix_rank(m, tol=1e-10) <= 2
        t = gen_truth(spec, 7)
        assert class_certificate(spec, t)["ok"]

    def test_infeasible(self):
        with pytest.raises(InfeasibleClass):
            gen_truth(ModelClassSpec("theta1", (2, 2, 2), s=9), 0)
        with pytest.raises(InfeasibleClass):
            gen_truth(ModelClassSpec("theta5", (3, 3, 3), r=4), 0)
        with pytest.raises(InfeasibleClass):
            gen_truth(ModelClassSpec("t4", (3, 3, 3), r=3), 0)

    def test_json_round_trip(self):
        spec = ModelClassSpec("theta3", (3, 4, 6), s=2, axes=(0, 2), magnitude=2.0)
        assert ModelClassSpec.from_json(spec.to_json()) == spec


class TestGenProblem:
    def test_noiseless_interpolation(self):
        t = gen_truth(ModelClassSpec("theta1", (3, 3, 3), s=4), 8)
        p = gen_problem(t, 25, 3, 0.0, seed=9)
        assert objective(p, entry_l1(), 0.0, t) == pytest.approx(0.0, abs=1e-22)

    def test_identity_design_covariance(self):
        t = gen_truth(ModelClassSpec("theta1", (2, 2, 2), s=2), 10)
        p = gen_problem(t, 5000, 3, 1.0, seed=11)
        flat = p.covariates.reshape(5000, -1)
        cov = flat.T @ flat / 5000
        eig = np.linalg.eigvalsh(cov)
        assert eig.min() > 0.8 and eig.max() < 1.2

    def test_scalar_response_shape(self):
        t = gen_truth(ModelClassSpec("theta1", (3, 3, 3), s=2), 12)
        p = gen_problem(t, 10, 3, 0.5, seed=13)
        assert p.resp_shape == ()
        pred = inner(p.covariates[0], t)
        assert np.isscalar(pred) or np.asarray(pred).shape == ()

    def test_covariance_factor(self):
        t = gen_truth(ModelClassSpec("theta1", (2, 2, 2), s=2), 14)
        factor = np.diag(np.linspace(0.5, 2.0, 8))
        p = gen_problem(t, 4000, 3, 0.0, design=factor, seed=15)
        flat = p.covariates.reshape(4000, -1)
        emp = np.sqrt((flat**2).mean(axis=0))
        np.testing.assert_allclose(emp, np.diag(factor), rtol=0.1)

    def test_bad_factor(self):
        t = gen_truth(ModelClassSpec("theta1", (2, 2, 2), s=1), 16)
        with pytest.raises(BadCovarianceFactor):
            gen_problem(t, 5, 3, 0.0, design=np.zeros((3, 3)), seed=0)
        with pytest.raises(BadCovarianceFactor):
            gen_problem(t, 5, 3, 0.0, design=np.full((8, 8), np.nan), seed=0)


class TestVarModel:
    def test_rejects_unstable(self):
        with pytest.raises(UnstableModel):
            VarModel(coeffs=np.array([[[1.2]]]))

    def test_auto_stabilize(self):
        m = VarModel(coeffs=np.array([[[1.2]]]), auto_stabilize=True)
        assert m.spectral_radius() == pytest.approx(0.95, abs=1e-12)

    def test_json_round_trip(self):
        m = gen_var_model(3, 2, s=4, seed=17)
        back = VarModel.from_json(m.to_json())
        np.testing.assert_allclose(back.coeffs, m.coeffs)
        assert back.burn_in == m.burn_in

    def test_gen_var_model_properties(self):
        m = gen_var_model(5, 3, s=6, seed=18, target_rho=0.7)
        assert m.spectral_radius() == pytest.approx(0.7, abs=1e-9)
        fibers = np.sqrt((m.coeffs**2).sum(axis=0))
        assert np.count_nonzero(fibers) == 6

    def test_truth_layouts_agree(self):
        m = gen_var_model(3, 2, s=3, seed=19)
        t_prob = var_truth(m)  # (m, p, m) problem layout
        t_disp = coefficient_tensor(m)  # (m, m, p) display layout
        for k in range(3):
            for l in range(3):
                for j in range(2):
                    assert t_prob[l, j, k] == t_disp[k, l, j] == m.coeffs[j, k, l]


class TestVarSeries:
    def test_white_noise_when_no_dynamics(self):
        m = VarModel(coeffs=np.zeros((1, 1, 1)))
        p = gen_var_series(m, 2000, seed=20)
        x = p.responses[:, 0]
        ac = np.corrcoef(x[:-1], x[1:])[0, 1]
        assert abs(ac) < 0.1

    def test_ar1_autocorrelation(self):
        m = VarModel(coeffs=np.full((1, 1, 1), 0.5))
        p = gen_var_series(m, 5000, seed=21)
        x = p.responses[:, 0]
        ac = np.corrcoef(x[:-1], x[1:])[0, 1]
        assert ac == pytest.approx(0.5, abs=0.05)

    def test_bookkeeping_identity(self):
        # the stored series satisfies y_t = <X_t, T> + eps_t with the exact
        # innovations regenerated from the same stream
        m = gen_var_model(3, 2, s=4, seed=22)
        n = 50
        p = gen_var_series(m, n, seed=23)
        total = m.burn_in + m.p + n
        eps = np.random.default_rng(23).standard_normal((total, 3))
        start = m.burn_in + m.p
        for t in range(n):
            pred = inner(p.covariates[t], p.truth)
            np.testing.assert_allclose(
                p.responses[t], pred + eps[start + t], atol=1e-12
            )

    def test_stationarity_after_burn_in(self):
        m = gen_var_model(4, 2, s=5, seed=24, target_rho=0.6)
        p = gen_var_series(m, 4000, seed=25)
        x = p.responses
        c1 = np.cov(x[:2000].T)
        c2 = np.cov(x[2000:].T)
        rel = np.linalg.norm(c1 - c2) / np.linalg.norm(c1)
        assert rel < 0.10


class TestVarExtrema:
    def test_closed_form_half_identity(self):
        m = VarModel(coeffs=0.5 * np.eye(3)[None, :, :])
        res = var_spectral_extrema(m)
        assert res["mu_min"] == pytest.approx(0.25, abs=1e-6)
        assert res["mu_max"] == pytest.approx(2.25, abs=1e-6)

    def test_no_dynamics_gives_unit_extrema(self):
        m = VarModel(coeffs=np.zeros((2, 3, 3)))
        res = var_spectral_extrema(m)
        assert res["mu_min"] == pytest.approx(1.0, abs=1e-12)
        assert res["mu_max"] == pytest.approx(1.0, abs=1e-12)

    def test_grid_validation(self):
        m = VarModel(coeffs=np.zeros((1, 2, 2)))
        with pytest.raises(ValueError):
            var_spectral_extrema(m, grid=32)

    def test_empirical_norm_sandwich(self):
        # quick version of the conditioning sandwich at moderate n
        m = gen_var_model(3, 2, s=4, seed=26, target_rho=0.6)
        res = var_spectral_extrema(m)
        p = gen_var_series(m, 2000, seed=27)
        delta = np.random.default_rng(28).standard_normal((3, 2, 3))
        from tenreg.solver import empirical_norm

        emp2 = empirical_norm(p, delta) ** 2
        f2 = float((delta * delta).sum())
        assert emp2 >= f2 / res["mu_max"] * 0.85
        assert emp2 <= f2 / res["mu_min"] * 1.15
