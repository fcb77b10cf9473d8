import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gmclab.errors import ConfigurationError, DomainError
from gmclab.field import FieldSample, GridSpec, sample_field_batch
from gmclab.gmc import (GmcPhase, check_phase, critical_gamma, density, gmc_measure,
                        laplace_sample, lebesgue_measure, max_statistics, measure_integral,
                        supercritical_prefactor)
from gmclab.harness import McEstimate
from gmclab.kernel import build_seed_kernel, recentering_m_b
from gmclab.rng import RandomStream

GC = math.sqrt(2.0)


@pytest.fixture(scope="module")
def k1():
    return build_seed_kernel(1)


def fields(k, t, n, seed):
    g = GridSpec.for_depth(1, 1.0, t)
    X, _ = sample_field_batch(k, g, t, 0.1, n, RandomStream(seed))
    return g, X[0]


class TestPhases:
    def test_parse_labels(self):
        assert GmcPhase.parse("Subcritical") is GmcPhase.SUBCRITICAL
        assert GmcPhase.parse("critical-seneta-heyde") is GmcPhase.CRITICAL_SENETA_HEYDE
        with pytest.raises(ConfigurationError):
            GmcPhase.parse("hot")

    def test_compatibility(self):
        check_phase(1.0, GmcPhase.SUBCRITICAL, 1)
        check_phase(GC, GmcPhase.CRITICAL_DERIVATIVE, 1)
        check_phase(2.0 * GC, GmcPhase.SUPERCRITICAL, 1)
        check_phase(1.9, GmcPhase.SUBCRITICAL, 2)
        for g, p in ((GC, GmcPhase.SUBCRITICAL), (1.0, GmcPhase.CRITICAL_SENETA_HEYDE),
                     (1.2, GmcPhase.SUPERCRITICAL)):
            with pytest.raises(ConfigurationError):
                check_phase(g, p, 1)
        assert critical_gamma(2) == 2.0

    def test_gmc_measure_rejects_mismatch(self):
        g = GridSpec(1, (0.0,), 1.0, 8)
        X = FieldSample(g, np.zeros(8), (0.0, 2.0))
        with pytest.raises(ConfigurationError):
            gmc_measure(X, 2.0, "Subcritical")
        with pytest.raises(ConfigurationError):
            gmc_measure(FieldSample(g, np.zeros(8), (1.0, 2.0)), 1.0, "Subcritical")


class TestDensities:
    def test_supercritical_prefactor(self):
        assert abs(supercritical_prefactor(2 * GC, 4.0, 1) - 64 * math.e ** 4) < 1e-9
        assert abs(supercritical_prefactor(2 * GC, 4.0, 1) - 3494.3) < 0.05

    def test_seneta_heyde_weight_where_exponent_cancels(self):
        t = 3.0
        g = GridSpec(1, (0.0,), 1.0, 8)
        X = FieldSample(g, np.full(8, GC * t), (0.0, t))
        mu = gmc_measure(X, GC, GmcPhase.CRITICAL_SENETA_HEYDE)
        np.testing.assert_allclose(mu.cell_weights, math.sqrt(t) * g.cell_volume * math.exp(0.5 * GC ** 2 * t))
        X0 = FieldSample(g, np.full(8, 0.5 * GC * t), (0.0, t))
        mu0 = gmc_measure(X0, GC, GmcPhase.CRITICAL_SENETA_HEYDE)
        np.testing.assert_allclose(mu0.cell_weights, math.sqrt(t) * g.cell_volume)

    @settings(max_examples=40, deadline=None)
    @given(v=st.floats(-20, 20), t=st.floats(0.5, 8))
    def test_derivative_density_clipped_nonnegative(self, v, t):
        dens, neg = density(np.array([v]), GC, t, GmcPhase.CRITICAL_DERIVATIVE, 1)
        assert dens[0] >= 0 and neg[0] >= 0
        assert dens[0] * neg[0] == 0
        signed = (GC * t - v) * math.exp(GC * v - t)
        assert math.isclose(dens[0] - neg[0], signed, rel_tol=1e-12, abs_tol=1e-300)

    def test_clipped_fraction_reported(self, k1):
        g, X = fields(k1, 3.0, 20, 5)
        for v in X:
            mu = gmc_measure(FieldSample(g, v, (0.0, 3.0)), GC, "CriticalDerivative")
            assert 0.0 <= mu.clipped_fraction <= 1.0
            assert np.all(mu.cell_weights >= 0)


class TestFunctionals:
    def test_integral_trivial_cases(self):
        g = GridSpec(1, (0.0,), 1.0, 16)
        mu = lebesgue_measure(g)
        assert abs(measure_integral(mu) - 1.0) < 1e-15
        assert measure_integral(mu, 0.0) == 0.0
        assert abs(measure_integral(mu, lambda x: x) - np.mean(g.coords())) < 1e-15
        assert laplace_sample(mu, 0.0) == 1.0
        big = type(mu)(g, np.full(16, 1e6))
        assert laplace_sample(big) < 1e-300
        assert abs(laplace_sample(mu, 2.0) - math.exp(-2.0)) < 1e-15

    def test_subcritical_mean_mass_and_martingale(self, k1):
        gamma = 0.7
        means = []
        for t, seed in ((2.0, 1), (4.0, 2)):
            g, X = fields(k1, t, 1000, seed)
            masses = [gmc_measure(FieldSample(g, v, (0.0, t)), gamma, "Subcritical").total_mass for v in X]
            means.append(McEstimate.from_samples(masses))
            assert means[-1].agrees(1.0)
        a, b = means
        assert abs(a.mean - b.mean) <= 4 * math.hypot(a.stderr, b.stderr)

    def test_half_box_gets_half_mass(self, k1):
        g, X = fields(k1, 3.0, 1000, 3)
        full, half = [], []
        for v in X:
            mu = gmc_measure(FieldSample(g, v, (0.0, 3.0)), 0.7, "Subcritical")
            full.append(mu.total_mass)
            half.append(measure_integral(mu, lambda x: (x < 0.5).astype(float)))
        diff = McEstimate.from_samples(np.array(half) - 0.5 * np.array(full))
        assert diff.agrees(0.0)

    def test_export(self, tmp_path):
        g = GridSpec(1, (0.0,), 1.0, 4)
        mu = gmc_measure(FieldSample(g, np.zeros(4), (0.0, 1.0), seed=(1, 0)), 1.0, "Subcritical")
        mu.export(tmp_path / "m.csv", tmp_path / "m.json")
        assert (tmp_path / "m.csv").read_text().splitlines()[0] == "index,x0,weight"
        meta = json.loads((tmp_path / "m.json").read_text())
        assert meta["phase"] == "Subcritical" and meta["gamma"] == 1.0 and meta["t"] == 1.0
        assert abs(meta["total_mass"] - math.exp(-0.5)) < 1e-15


class TestMaxStatistics:
    def test_zero_field_and_shift(self):
        g = GridSpec(1, (0.0,), 1.0, 8)
        zero = FieldSample(g, np.zeros(8), (0.0, 3.0))
        top, rec = max_statistics(zero)
        assert top == 0.0 and rec == -recentering_m_b(1, 3.0)
        vals = np.random.default_rng(0).standard_normal(8)
        a = max_statistics(FieldSample(g, vals, (0.0, 3.0)))
        b = max_statistics(FieldSample(g, vals + 2.5, (0.0, 3.0)))
        assert abs(b[0] - a[0] - 2.5) < 1e-12 and abs(b[1] - a[1] - 2.5) < 1e-12

    def test_region_and_empty_region(self):
        g = GridSpec(1, (0.0,), 1.0, 8)
        vals = np.arange(8.0)
        X = FieldSample(g, vals, (0.0, 2.0))
        assert max_statistics(X, lambda x: x < 0.5)[0] == 3.0
        with pytest.raises(DomainError):
            max_statistics(X, np.zeros(8, bool))

    def test_recentred_max_is_tight(self, k1):
        medians = []
        for t, seed in ((3.0, 31), (5.0, 32), (7.0, 33)):
            g, X = fields(k1, t, 150, seed)
            rec = [max_statistics(FieldSample(g, v, (0.0, t)))[1] for v in X]
            medians.append(np.median(rec))
        assert max(medians) - min(medians) <= 1.5, medians
        assert all(abs(m - np.mean(medians)) <= 0.75 for m in medians), medians
