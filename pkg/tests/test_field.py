import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from gmclab.errors import ConfigurationError, DomainError, StatisticsError
from gmclab.field import (FieldSample, GridSpec, assemble_X, build_plan, covariance_from_arrays,
                          empirical_covariance, origin_path, pinning_profile, refine_midpoint,
                          sample_field_batch, sample_layers, sample_Z)
from gmclab.kernel import GROWING, SHRINKING, build_seed_kernel, layer_covariance
from gmclab.rng import RandomStream

BAND = 4.0


@pytest.fixture(scope="module")
def k1():
    return build_seed_kernel(1)


@pytest.fixture(scope="module")
def grid3():
    return GridSpec.for_depth(1, 2.0, 3.0)


@pytest.fixture(scope="module")
def batch3(k1, grid3):
    X, origin = sample_field_batch(k1, grid3, 3.0, 0.1, 2000, RandomStream(11))
    return X[0], origin


def within(est, target, band=BAND):
    return abs(est.value - target) <= band * est.stderr


class TestGridSpec:
    def test_spacing_and_power_of_two(self):
        g = GridSpec(1, (0.0,), 2.0, 16)
        assert g.spacing == 0.125
        with pytest.raises(ConfigurationError):
            GridSpec(1, (0.0,), 2.0, 12)
        with pytest.raises(ConfigurationError):
            GridSpec(1, (0.01,), 2.0, 16)
        with pytest.raises(ConfigurationError):
            GridSpec(3, (0.0,), 1.0, 8)

    def test_centred_covers_interval_and_contains_zero(self):
        g = GridSpec.centred(1, math.e ** 2, 1 / 8)
        x = g.coords()
        assert x[0] <= -math.e ** 2 and x[-1] >= math.e ** 2
        assert g.anchor_index() is not None and x[g.anchor_index()[0]] == 0.0

    def test_nearest_index_outside_raises(self):
        g = GridSpec(1, (0.0,), 1.0, 8)
        with pytest.raises(DomainError):
            g.nearest_index(2.0)


class TestRefinement:
    @settings(max_examples=30, deadline=None)
    @given(c=st.lists(st.floats(-3, 3), min_size=4, max_size=4))
    def test_midpoint_exact_on_cubics_and_keeps_nodes(self, c):
        x = np.arange(12, dtype=float)
        v = np.polyval(c, x)
        r = refine_midpoint(v, 0)
        xf = np.arange(len(r)) / 2.0 + x[0]
        np.testing.assert_array_equal(r[::2], v[:len(r[::2])])
        # interior midpoints are exact for cubic polynomials
        interior = slice(3, len(r) - 3)
        scale = 1 + np.abs(np.polyval(c, xf[interior])).max()
        np.testing.assert_allclose(r[interior], np.polyval(c, xf[interior]), atol=1e-9 * scale)

    def test_coarse_to_fine_sum_equals_per_level_refinement(self, k1, grid3):
        plan = build_plan(k1, grid3, 3.0, 0.1, SHRINKING)
        rng = np.random.default_rng(0)
        parts = {m: rng.standard_normal((3,) + lev.shape) for m, lev in enumerate(plan.levels)}
        separate = sum(plan._to_finest(m, a) for m, a in parts.items())
        np.testing.assert_allclose(plan._sum_to_finest(parts), separate, atol=1e-12)


class TestLayerSampler:
    def test_variance_is_depth(self, batch3, grid3):
        X, _ = batch3
        i = grid3.nearest_index(0.7)
        v = X[(slice(None),) + i]
        est = covariance_from_arrays(v, v)
        assert within(est, 3.0)

    def test_covariance_matches_quadrature(self, k1, batch3, grid3):
        X, _ = batch3
        a = X[(slice(None),) + grid3.nearest_index(0.5)]
        for h in (0.05, 0.2, 1.0, 1.25):
            b = X[(slice(None),) + grid3.nearest_index(0.5 + h)]
            est = covariance_from_arrays(a, b)
            assert within(est, layer_covariance(k1, 0.0, 3.0, h)), (h, est)

    def test_translation_invariance(self, batch3, grid3):
        X, _ = batch3
        grid_means = X.mean(axis=1)
        est = covariance_from_arrays(grid_means, grid_means)
        assert abs(grid_means.mean()) <= BAND * math.sqrt(est.value / len(grid_means))
        col = lambda p: X[(slice(None),) + grid3.nearest_index(p)]  # noqa: E731
        c1 = covariance_from_arrays(col(0.25), col(0.35))
        c2 = covariance_from_arrays(col(1.25), col(1.35))
        assert abs(c1.value - c2.value) <= BAND * math.hypot(c1.stderr, c2.stderr)

    def test_origin_path_increments_have_step_variance(self, batch3):
        _, origin = batch3
        inc = origin.ravel()
        se = inc.var(ddof=1) * math.sqrt(2.0 / (len(inc) - 1))
        assert abs(inc.var(ddof=1) - 0.1) <= BAND * se
        # independence across layers
        r = np.corrcoef(origin[:, 3], origin[:, 17])[0, 1]
        assert abs(r) <= BAND / math.sqrt(len(origin))

    def test_origin_path_matches_assembled_field(self, k1, grid3):
        st_ = sample_layers(k1, grid3, 3.0, 0.1, stream=RandomStream(3))
        path = origin_path(st_)
        assert path[0] == 0.0
        X = assemble_X(st_, 0.0, 3.0)
        assert abs(path[-1] - X.values[grid3.anchor_index()]) <= 1e-12

    def test_assemble_additivity_and_empty_window(self, k1, grid3):
        st_ = sample_layers(k1, grid3, 3.0, 0.1, stream=RandomStream(4))
        full = assemble_X(st_, 0.0, 3.0).values
        parts = assemble_X(st_, 0.0, 1.2).values + assemble_X(st_, 1.2, 3.0).values
        np.testing.assert_allclose(full, parts, atol=1e-12)
        assert np.all(assemble_X(st_, 1.0, 1.0).values == 0.0)
        with pytest.raises(DomainError):
            assemble_X(st_, 0.05, 1.0)

    def test_reproducible_bit_identical(self, k1, grid3):
        a = sample_layers(k1, grid3, 3.0, 0.1, stream=RandomStream(5, 2))
        b = sample_layers(k1, grid3, 3.0, 0.1, stream=RandomStream(5, 2))
        assert all(np.array_equal(x, y) for x, y in zip(a.layers, b.layers))
        assert np.array_equal(a.origin_values, b.origin_values)
        c = sample_layers(k1, grid3, 3.0, 0.1, stream=RandomStream(5, 3))
        assert not np.array_equal(a.layers[0], c.layers[0])

    def test_increment_is_normal_and_independent_of_past(self, k1, grid3):
        X, _ = sample_field_batch(k1, grid3, 3.0, 0.1, 1000, RandomStream(12), cuts=(1.0,))
        i = (slice(None),) + grid3.nearest_index(0.3)
        early, late = X[0][i], X[1][i]
        _, p = stats.kstest(late, stats.norm(scale=math.sqrt(2.0)).cdf)
        assert p > 0.01
        r = np.corrcoef(early, late)[0, 1]
        assert abs(r) <= BAND / math.sqrt(len(early))

    def test_per_layer_sampler_has_same_law(self, k1, grid3):
        vals = np.array([assemble_X(sample_layers(k1, grid3, 3.0, 0.1, stream=RandomStream(7, i)),
                                    0.0, 3.0).values for i in range(400)])
        a = vals[:, grid3.nearest_index(0.5)[0]]
        b = vals[:, grid3.nearest_index(0.6)[0]]
        assert within(covariance_from_arrays(a, b), layer_covariance(k1, 0.0, 3.0, 0.1))
        assert within(covariance_from_arrays(a, a), 3.0)

    def test_cost_bound_geometric_hierarchy(self, k1, grid3):
        plan = build_plan(k1, grid3, 3.0, 0.1, SHRINKING)
        n = grid3.n
        per_level_margin = 16  # cubic stencil plus rounding, both sides
        for m, lev in enumerate(plan.levels):
            assert lev.shape[0] <= math.ceil(n / 2 ** m) + per_level_margin
        assert plan.total_nodes <= 2 * n + per_level_margin * len(plan.levels)

    def test_configuration_errors(self, k1, grid3):
        with pytest.raises(ConfigurationError):
            sample_layers(k1, grid3, 3.0, 0.3)
        with pytest.raises(ConfigurationError):
            sample_layers(k1, grid3, 3.05, 0.1)
        with pytest.raises(ConfigurationError):
            sample_layers(k1, GridSpec(1, (0.0,), 2.0, 64), 3.0, 0.1)


PIN_DEPTH = 3.0


@pytest.fixture(scope="module")
def zbatch(k1):
    g = GridSpec.centred(1, 4.0, 1 / 8)
    X, origin = sample_field_batch(k1, g, PIN_DEPTH, 0.1, 2000, RandomStream(21), direction=GROWING)
    mids = 0.5 * (np.arange(30) + np.arange(1, 31)) * 0.1
    prof = pinning_profile(k1, g, mids)
    Z = X[0] - np.tensordot(origin, prof, axes=1)
    return g, Z, origin


class TestPinnedField:
    B = PIN_DEPTH

    def test_pinned_at_origin(self, zbatch):
        g, Z, _ = zbatch
        assert np.max(np.abs(Z[:, g.anchor_index()[0]])) <= 1e-10

    def test_variance_matches_quadrature(self, k1, zbatch):
        g, Z, _ = zbatch
        r = np.linspace(0.0, self.B, 20001)
        for x in (0.5, 2.0):
            oracle = np.trapezoid(1.0 - k1.K(np.exp(-r) * x) ** 2, r)
            v = Z[:, g.nearest_index(x)[0]]
            assert within(covariance_from_arrays(v, v), oracle), x

    def test_cross_covariance_and_independence_from_origin(self, k1, zbatch):
        g, Z, origin = zbatch
        r = np.linspace(0.0, self.B, 20001)
        x, y = 1.0, -1.5
        oracle = np.trapezoid(k1.K(np.exp(-r) * abs(x - y)) - k1.K(np.exp(-r) * x) * k1.K(np.exp(-r) * y), r)
        zx, zy = Z[:, g.nearest_index(x)[0]], Z[:, g.nearest_index(y)[0]]
        assert within(covariance_from_arrays(zx, zy), oracle)
        assert within(covariance_from_arrays(zx, origin.sum(axis=1)), 0.0)

    def test_stack_version_agrees_with_batch_formula(self, k1):
        g = GridSpec.centred(1, 4.0, 1 / 8)
        st_ = sample_layers(k1, g, self.B, 0.1, GROWING, RandomStream(8))
        Z = sample_Z(st_, self.B)
        mids = 0.5 * (st_.edges[:-1] + st_.edges[1:])
        manual = sum(L - p * o for L, p, o in zip(st_.layers, pinning_profile(k1, g, mids), st_.origin_values))
        np.testing.assert_allclose(Z.values, manual, atol=1e-12)
        assert abs(Z.values[g.anchor_index()]) <= 1e-10
        with pytest.raises(DomainError):
            sample_Z(st_, 4.0)
        shrink = sample_layers(k1, GridSpec.for_depth(1, 1.0, 1.0), 1.0, 0.1, SHRINKING, 0)
        with pytest.raises(ConfigurationError):
            sample_Z(shrink, 1.0)


class TestEmpiricalCovariance:
    def test_needs_hundred_samples(self, grid3):
        s = [FieldSample(grid3, np.zeros(grid3.shape))] * 99
        with pytest.raises(StatisticsError):
            empirical_covariance(s, [(0.1, 0.2)])

    def test_identical_points_and_symmetry(self, grid3):
        rng = np.random.default_rng(1)
        s = [FieldSample(grid3, rng.standard_normal(grid3.shape)) for _ in range(150)]
        same, ab, ba = empirical_covariance(s, [(0.5, 0.5), (0.25, 1.0), (1.0, 0.25)])
        col = np.array([x.values[grid3.nearest_index(0.5)] for x in s])
        assert abs(same.value - col.var(ddof=1)) < 1e-12
        assert ab.value == ba.value and ab.stderr == ba.stderr

    def test_field_export(self, grid3, tmp_path):
        g = GridSpec(1, (0.0,), 1.0, 4)
        fs = FieldSample(g, np.arange(4.0), (0.0, 1.0), seed=(1, 2))
        fs.export(tmp_path / "f.csv", tmp_path / "f.json", {"replicate": 0})
        lines = (tmp_path / "f.csv").read_text().splitlines()
        assert lines[0] == "index,x0,value" and lines[2] == "1,0.25,1"
        meta = json.loads((tmp_path / "f.json").read_text())
        assert meta["seed"] == [1, 2] and meta["grid"]["n"] == 4 and meta["replicate"] == 0
