import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import simpson

from gmclab.errors import ConfigurationError, DomainError
from gmclab.kernel import (GROWING, SHRINKING, autoconvolution_residual, bump_profile,
                           build_seed_kernel, dft_min, eval_a_b, eval_h_b, eval_K,
                           layer_covariance, recentering_m_b, validity_report)


@pytest.fixture(scope="module")
def k1():
    return build_seed_kernel(1)


@pytest.fixture(scope="module")
def k2():
    return build_seed_kernel(2)


def brute_autoconvolution_1d(r, n=40001):
    """Riemann sum of ``Kbar*Kbar`` on a grid 10x finer than the table."""
    y = np.linspace(-0.5, 0.5, n)
    h = y[1] - y[0]
    at = lambda q: np.sum(bump_profile(y) * bump_profile(q - y)) * h  # noqa: E731
    return at(r) / at(0.0)


def brute_autoconvolution_2d(r, n=1601):
    g = np.linspace(-0.5, 0.5, n)
    X, Y = np.meshgrid(g, g, indexing="ij")
    kb = bump_profile(np.hypot(X, Y))
    at = lambda q: np.sum(kb * bump_profile(np.hypot(q - X, Y)))  # noqa: E731
    return at(r) / at(0.0)


def simpson_integral(f, lo, hi, n=40001):
    s = np.linspace(lo, hi, n)
    return float(simpson(f(s), x=s))


class TestSeedKernel:
    def test_unit_at_origin_and_zero_outside(self, k1, k2):
        for k in (k1, k2):
            assert abs(eval_K(k, 0.0) - 1.0) <= 1e-9
            assert eval_K(k, 1.2) == 0.0
            assert eval_K(k, 2.0) == 0.0
            assert np.all(k.K(np.linspace(1.0, 5.0, 50)) == 0.0)

    def test_matches_brute_force_autoconvolution_1d(self, k1):
        assert abs(eval_K(k1, 0.5) - brute_autoconvolution_1d(0.5)) <= 1e-6

    def test_matches_brute_force_autoconvolution_2d(self, k2):
        assert abs(eval_K(k2, 0.5) - brute_autoconvolution_2d(0.5)) <= 1e-6

    def test_monotone_profile_matches_oracle_table(self, k1):
        r = np.linspace(0.0, 0.95, 20)
        vals = k1.K(r)
        assert np.all(np.diff(vals) < 0)
        oracle = np.array([brute_autoconvolution_1d(x) for x in r[::4]])
        np.testing.assert_allclose(vals[::4], oracle, atol=1e-6)

    def test_validity_invariants(self, k1, k2):
        for k in (k1, k2):
            rep = validity_report(k)
            assert rep["autoconvolution_residual"] <= 1e-6
            assert rep["dft_min"] >= -1e-6
            assert rep["second_derivative_at_zero"] < 0
            assert autoconvolution_residual(k) == rep["autoconvolution_residual"]
            assert dft_min(k) >= -1e-6

    def test_rejects_low_resolution_and_bad_dimension(self):
        with pytest.raises(ConfigurationError):
            build_seed_kernel(1, table_resolution=512)
        with pytest.raises(ConfigurationError):
            build_seed_kernel(3)

    def test_export_columns(self, k1, tmp_path):
        p = tmp_path / "k.csv"
        k1.export_csv(p, n=11)
        rows = p.read_text().splitlines()
        assert rows[0] == "r,K,Kbar"
        assert len(rows) == 12
        r0, K0, _ = map(float, rows[1].split(","))
        assert r0 == 0.0 and abs(K0 - 1.0) < 1e-9


class TestScaleFunctions:
    def test_a_b_trivial_values(self, k1):
        sf = k1.scales
        assert eval_a_b(sf, 0.0, 5.0) == 0.0
        assert eval_a_b(sf, 0.0, math.inf) == 0.0
        assert abs(eval_a_b(sf, math.e ** 3, 3.0) - 3.0) <= 1e-10
        assert abs(eval_a_b(sf, 50.0, 2.0) - 2.0) <= 1e-10

    def test_a_b_simpson_oracle(self, k1):
        oracle = simpson_integral(lambda s: 1.0 - k1.K(np.exp(-s) * 0.5), 0.0, 3.0)
        assert abs(eval_a_b(k1.scales, 0.5, 3.0) - oracle) <= 1e-8
        assert abs(k1.scales.a_b_array(np.array([0.5]), 3.0)[0] - oracle) <= 1e-8

    def test_a_b_at_infinity_converges(self, k1):
        sf = k1.scales
        big = eval_a_b(sf, 2.0, 60.0)
        assert abs(eval_a_b(sf, 2.0, math.inf) - big) <= 1e-8

    def test_h_b_values(self, k1):
        sf = k1.scales
        assert abs(eval_h_b(sf, 0.0, 3.0) - 1.0) <= 1e-12
        assert abs(eval_h_b(sf, 1.5, 0.3)) <= 1e-12
        oracle = simpson_integral(lambda s: k1.K(np.exp(-s) * 0.3), 0.0, 2.0) / 2.0
        assert abs(eval_h_b(sf, 0.3, 2.0) - oracle) <= 1e-8

    @settings(max_examples=40, deadline=None)
    @given(x=st.floats(0.0, 30.0), b=st.floats(0.05, 9.0))
    def test_h_and_a_identity(self, k1, x, b):
        sf = k1.scales
        assert abs(b * eval_h_b(sf, x, b) + eval_a_b(sf, x, b) - b) <= 1e-8

    @settings(max_examples=30, deadline=None)
    @given(x=st.floats(0.0, 30.0), b1=st.floats(0.1, 8.0), db=st.floats(0.0, 3.0))
    def test_a_b_nondecreasing_in_b(self, k1, x, b1, db):
        sf = k1.scales
        assert eval_a_b(sf, x, b1 + db) >= eval_a_b(sf, x, b1) - 1e-12

    @settings(max_examples=15, deadline=None)
    @given(seed=st.integers(0, 2**31), b=st.floats(0.5, 6.0))
    def test_a_b_gram_matrix_psd(self, k1, seed, b):
        rng = np.random.default_rng(seed)
        pts = rng.uniform(-np.exp(b), np.exp(b), 8)
        a = lambda r: k1.scales.a_b_array(r, b)  # noqa: E731
        G = a(pts)[:, None] + a(pts)[None, :] - a(pts[:, None] - pts[None, :])
        assert np.linalg.eigvalsh(G).min() >= -1e-6

    def test_recentering_values(self):
        assert abs(recentering_m_b(1, 1.0) - math.sqrt(2)) < 1e-12
        assert abs(recentering_m_b(1, 10.0) - 11.6999) < 1e-4
        assert abs(recentering_m_b(2, math.e) - (2 * math.e - 0.75)) < 1e-12
        assert abs(recentering_m_b(2, math.e) - 4.68656) < 1e-5
        with pytest.raises(DomainError):
            recentering_m_b(1, 0.0)

    def test_layer_covariance_trivial(self, k1):
        assert abs(layer_covariance(k1, 0.5, 2.0, 0.0) - 1.5) < 1e-12
        assert layer_covariance(k1, 0.0, 2.0, 1.0) == 0.0
        assert layer_covariance(k1, 0.0, 2.0, 3.0, SHRINKING) == 0.0
        with pytest.raises(DomainError):
            layer_covariance(k1, 2.0, 2.0, 0.1)

    def test_layer_covariance_simpson_oracle(self, k1):
        oracle = simpson_integral(lambda r: k1.K(np.exp(r) * 0.1), 0.0, 2.0)
        assert abs(layer_covariance(k1, 0.0, 2.0, 0.1) - oracle) <= 1e-8
        arr = k1.scales.layer_covariance_array(0.0, 2.0, np.array([0.1]))[0]
        assert abs(arr - oracle) <= 1e-8

    @settings(max_examples=30, deadline=None)
    @given(t=st.floats(0.1, 8.0), h=st.floats(0.0, 1.5))
    def test_shrinking_growing_change_of_variables(self, k1, t, h):
        lhs = layer_covariance(k1, 0.0, t, h, SHRINKING)
        rhs = layer_covariance(k1, 0.0, t, h * math.exp(t), GROWING)
        assert abs(lhs - rhs) <= 1e-8
