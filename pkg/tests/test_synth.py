import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from spatialcp.core import RngSpec
from spatialcp.errors import DomainError
from spatialcp.synth import (MaternParams, ScenarioSpec, bessel_k, bessel_k_integral, gen_scenario,
                             matern_cholesky, matern_cov, matern_matrix, sample_gp)

from .oracles import bessel_k_quadrature, k_half_integer


class TestBesselK:
    def test_order_half_at_one(self):
        assert bessel_k(0.5, 1.0) == pytest.approx(math.sqrt(math.pi / 2) * math.exp(-1), rel=1e-12)
        assert bessel_k(0.5, 1.0) == pytest.approx(0.4610685, abs=5e-8)

    def test_order_three_halves_at_two(self):
        want = math.sqrt(math.pi / 4) * math.exp(-2) * 1.5
        assert bessel_k(1.5, 2.0) == pytest.approx(want, rel=1e-12)
        assert bessel_k(1.5, 2.0) == pytest.approx(0.1799066, abs=1e-7)  # quoted value is truncated to 7 decimals

    @pytest.mark.parametrize("nu", [0.5, 1.5, 2.5])
    @pytest.mark.parametrize("x", [0.1, 1.0, 5.0, 20.0])
    def test_half_integer_closed_forms_both_paths(self, nu, x):
        want = k_half_integer(nu, x)
        assert abs(bessel_k(nu, x) / want - 1) < 1e-9
        assert abs(bessel_k_integral(nu, x) / want - 1) < 1e-9

    def test_non_half_integer_vs_simpson(self):
        want = bessel_k_quadrature(0.7, 0.5)
        assert bessel_k(0.7, 0.5) == pytest.approx(want, rel=1e-9)
        assert bessel_k_integral(0.7, 0.5) == pytest.approx(want, rel=1e-9)

    @given(nu=st.floats(0.05, 10.0), x=st.floats(1e-3, 100.0))
    @settings(max_examples=60, deadline=None)
    def test_fast_path_matches_quadrature(self, nu, x):
        assert bessel_k(nu, x) == pytest.approx(bessel_k_integral(nu, x), rel=1e-9)

    def test_vectorised(self):
        out = bessel_k(0.5, np.array([0.1, 1.0]))
        assert out.shape == (2,)

    @pytest.mark.parametrize("nu, x", [(0.0, 1.0), (11.0, 1.0), (1.0, 0.0), (1.0, 101.0), (1.0, -1.0)])
    def test_domain(self, nu, x):
        with pytest.raises(DomainError):
            bessel_k(nu, x)


class TestMaternCov:
    def test_zero_lag_is_variance(self):
        assert matern_cov(0.0, MaternParams(2.5, 0.3, 1.2)) == 2.5

    def test_exponential_case(self):
        p = MaternParams(1.7, 0.2, 0.5)
        assert matern_cov(0.2, p) == pytest.approx(1.7 * math.exp(-1), rel=1e-12)

    @pytest.mark.parametrize("kappa", [0.5, 1.5, 2.5])
    def test_matches_bessel_formula(self, kappa):
        p = MaternParams(1.0, 0.1, kappa)
        for d in (0.01, 0.1, 0.5):
            u = d / p.range
            want = 2 ** (1 - kappa) / math.gamma(kappa) * u**kappa * k_half_integer(kappa, u)
            assert matern_cov(d, p) == pytest.approx(want, rel=1e-10)

    def test_continuous_at_zero(self):
        p = MaternParams()
        assert matern_cov(1e-9, p) == pytest.approx(1.0, abs=1e-5)

    def test_far_lag_underflows_to_zero_not_nan(self):
        assert matern_cov(1e4, MaternParams()) == 0.0

    @given(st.lists(st.floats(0, 3), min_size=2, max_size=30))
    @settings(max_examples=40, deadline=None)
    def test_monotone_decreasing(self, ds):
        d = np.sort(np.array(ds))
        c = matern_cov(d, MaternParams())
        assert np.all(np.diff(c) <= 1e-15)


class TestSampleGP:
    def test_zero_variance(self):
        z = sample_gp(np.random.default_rng(0).uniform(size=(7, 2)), MaternParams(0.0), RngSpec(1))
        assert np.array_equal(z, np.zeros(7))

    def test_single_site_variance(self):
        p = MaternParams(2.0)
        draws = np.array([sample_gp([[0.5, 0.5]], p, RngSpec(3).child(r))[0] for r in range(10000)])
        se = 2.0 * math.sqrt(2 / 9999)
        assert abs(draws.var(ddof=1) - 2.0) < 3 * se

    def test_two_point_covariance(self):
        p = MaternParams(1.0, 0.1, 0.7)
        sites = np.array([[0.2, 0.2], [0.27, 0.2]])
        L = matern_cholesky(sites, p)
        draws = np.array([sample_gp(sites, p, RngSpec(4).child(r), chol=L) for r in range(20000)])
        c = matern_cov(0.07, p)
        emp = np.mean(draws[:, 0] * draws[:, 1])
        se = math.sqrt((1.0 + c * c) / 20000)
        assert abs(emp - c) < 3 * se

    def test_deterministic(self):
        s = np.random.default_rng(0).uniform(size=(30, 2))
        a = sample_gp(s, MaternParams(), RngSpec(8))
        b = sample_gp(s, MaternParams(), RngSpec(8))
        assert np.array_equal(a, b)

    def test_covariance_matrix_positive_definite(self):
        s = np.random.default_rng(1).uniform(size=(300, 2))
        assert np.linalg.eigvalsh(matern_matrix(s, MaternParams())).min() > -1e-10
        L = matern_cholesky(s, MaternParams())
        np.testing.assert_allclose(L @ L.T, matern_matrix(s, MaternParams()), atol=1e-8)

    def test_duplicate_sites_jittered(self):
        s = np.array([[0.1, 0.1], [0.1, 0.1], [0.5, 0.5]])
        assert np.isfinite(sample_gp(s, MaternParams(), RngSpec(0))).all()


class TestScenarios:
    def test_scenario1_noise_free_is_x(self):
        data, x, eps = gen_scenario(ScenarioSpec(1, 60, eps_params=MaternParams(0.0), rng=RngSpec(2)), True)
        assert np.array_equal(data.responses, x)
        assert np.array_equal(data.features[:, 0], x)

    def test_scenario2_sign(self):
        data, x, eps = gen_scenario(ScenarioSpec(2, 80, rng=RngSpec(2)), True)
        nz = eps != 0
        assert np.all(np.sign(data.responses[nz]) == np.sign(x[nz]))

    def test_scenario3_origin(self):
        data, x, eps = gen_scenario(ScenarioSpec(3, 50, rng=RngSpec(5)), True)
        y = x + np.sin(np.linalg.norm(data.sites, axis=1)) * eps
        np.testing.assert_array_equal(data.responses, y)
        # at the origin the sine factor vanishes
        from spatialcp.synth import scenario_response
        assert scenario_response(3, np.array([1.5]), np.array([9.0]), np.array([[0.0, 0.0]]))[0] == 1.5

    def test_features_layout(self):
        data = gen_scenario(ScenarioSpec(1, 40, rng=RngSpec(1)))
        assert data.features.shape == (40, 3)
        np.testing.assert_array_equal(data.features[:, 1:], data.sites)
        assert data.sites.min() >= 0 and data.sites.max() <= 1

    def test_deterministic(self):
        a = gen_scenario(ScenarioSpec(2, 50, rng=RngSpec(9)))
        b = gen_scenario(ScenarioSpec(2, 50, rng=RngSpec(9)))
        assert np.array_equal(a.responses, b.responses)

    def test_x_and_eps_independent_streams(self):
        _, x, eps = gen_scenario(ScenarioSpec(1, 50, rng=RngSpec(9)), True)
        assert not np.allclose(x, eps)

    @pytest.mark.parametrize("kw", [{"id": 4, "n": 50}, {"id": 1, "n": 10}])
    def test_bad_spec(self, kw):
        with pytest.raises(ValueError):
            ScenarioSpec(**kw)
