import math
from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats
from scipy.special import gamma as gamma_fn
from scipy.special import logsumexp

from gmclab.atoms import (AtomicMeasure, beta_constant, closed_form_laplace, expected_count,
                          export_weight_paths, integrate_P, laplace_mc_samples, reweighted_measure,
                          sample_eta, small_mass_correction, tail_index, truncation_bias_bound,
                          weight_process)
from gmclab.errors import ConfigurationError, CoverageError, DomainError, ResourceError
from gmclab.field import GridSpec
from gmclab.gmc import DiscreteMeasure, lebesgue_measure
from gmclab.harness import McEstimate, chi_square_gof, hill_tail_estimator
from gmclab.kernel import build_seed_kernel
from gmclab.rng import RandomStream

G_SUPER = 2.0 * math.sqrt(2.0)


@pytest.fixture(scope="module")
def unit():
    return lebesgue_measure(GridSpec(1, (0.0,), 1.0, 64))


def peaked_field(slope=2.0, half_width=8.0):
    g = GridSpec.centred(1, half_width, 1 / 8)
    return SimpleNamespace(grid=g, upsilon=-slope * np.abs(g.coords()), member_id=7)


class TestConstants:
    def test_tail_index_and_beta(self):
        assert tail_index(G_SUPER, 1) == pytest.approx(0.5)
        assert beta_constant(G_SUPER, 1) == pytest.approx(2 * math.sqrt(math.pi))
        assert beta_constant(G_SUPER, 1) == pytest.approx(3.5449, abs=1e-4)
        a = tail_index(3.0, 2)
        assert beta_constant(3.0, 2) == pytest.approx(gamma_fn(1 - a) / a)
        with pytest.raises(DomainError):
            tail_index(math.sqrt(2.0), 1)

    def test_expected_count(self, unit):
        assert expected_count(unit, G_SUPER, 0.01) == pytest.approx(20.0)

    def test_closed_form_values(self, unit):
        assert closed_form_laplace(unit, 0.0, G_SUPER) == 1.0
        assert closed_form_laplace(unit, None, G_SUPER) == pytest.approx(0.02887, abs=1e-5)
        assert closed_form_laplace(unit, None, G_SUPER) == pytest.approx(math.exp(-2 * math.sqrt(math.pi)))
        with pytest.raises(DomainError):
            closed_form_laplace(unit, None, 1.0)

    def test_truncation_bias_bound(self, unit):
        assert truncation_bias_bound(unit, None, G_SUPER, 0.0) == 0.0
        assert truncation_bias_bound(unit, None, G_SUPER, 1e-4) == pytest.approx(0.02)
        assert truncation_bias_bound(unit, 2.0, G_SUPER, 1e-4) == pytest.approx(0.04)

    def test_small_mass_correction_oracle(self, unit):
        # ∫_0^ε (1-e^{-z}) z^{-3/2} dz for α = 1/2, by direct quadrature
        from scipy.integrate import quad

        eps = 1e-2
        inner = quad(lambda z: -np.expm1(-z) * z ** -1.5, 0, eps)[0]
        assert small_mass_correction(unit, None, G_SUPER, eps) == pytest.approx(math.exp(-inner), rel=1e-10)
        assert small_mass_correction(unit, None, G_SUPER, 0.0) == 1.0


class TestSampleEta:
    def test_invariants(self, unit):
        a = sample_eta(unit, G_SUPER, 0.01, RandomStream(1))
        assert np.all(a.masses >= 0.01)
        # cells are centred on the nodes, so the support of ν is the union of cells
        h = unit.grid.spacing
        assert np.all((a.locations >= -h / 2) & (a.locations <= 1.0 - h / 2))
        assert 0 < a.alpha < 1

    def test_mean_count(self, unit):
        counts = [sample_eta(unit, G_SUPER, 0.01, RandomStream(2, i)).n_atoms for i in range(1000)]
        assert McEstimate.from_samples(counts).agrees(20.0)

    def test_large_cutoff_gives_empty_measure(self, unit):
        a = sample_eta(unit, G_SUPER, 1e14, RandomStream(3))
        assert a.n_atoms == 0 and integrate_P(a) == 0.0

    def test_resource_and_configuration_errors(self, unit):
        with pytest.raises(ResourceError):
            sample_eta(unit, G_SUPER, 1e-16)
        with pytest.raises(ConfigurationError):
            sample_eta(unit, G_SUPER, 0.0)
        with pytest.raises(ConfigurationError):
            sample_eta(DiscreteMeasure(unit.grid, np.zeros(64)), G_SUPER, 0.1)

    def test_hill_tail_index_within_five_percent(self, unit):
        eps = (20.0 * 0.5 / 1e5) ** 2  # expected count 1e5
        a = sample_eta(unit, G_SUPER, eps, RandomStream(4))
        assert abs(hill_tail_estimator(a.masses, 1000) - 0.5) <= 0.05 * 0.5

    def test_poisson_thinning(self, unit):
        p = 0.3
        counts = np.array([np.sum(sample_eta(unit, G_SUPER, 0.01, RandomStream(5, i)).locations[:, 0] < p)
                           for i in range(2000)])
        lam = p * 20.0
        edges = np.arange(0, 15)
        obs = np.array([np.sum(counts == k) for k in edges[:-1]] + [np.sum(counts >= edges[-1])])
        probs = np.append(stats.poisson.pmf(edges[:-1], lam), stats.poisson.sf(edges[-1] - 1, lam))
        _, pval = chi_square_gof(obs, probs)
        assert pval > 0.01

    def test_superposition(self):
        g = GridSpec(1, (0.0,), 1.0, 64)
        nu1 = lebesgue_measure(g)
        nu2 = DiscreteMeasure(g, np.where(g.coords() < 0.5, 2.0, 0.0) * g.cell_volume)
        nu12 = DiscreteMeasure(g, nu1.cell_weights + nu2.cell_weights)
        union_n, single_n, union_m, single_m = [], [], [], []
        for i in range(800):
            a = sample_eta(nu1, G_SUPER, 0.05, RandomStream(6, 2 * i))
            b = sample_eta(nu2, G_SUPER, 0.05, RandomStream(6, 2 * i + 1))
            c = sample_eta(nu12, G_SUPER, 0.05, RandomStream(7, i))
            union_n.append(a.n_atoms + b.n_atoms)
            single_n.append(c.n_atoms)
            union_m.extend(np.concatenate([a.masses, b.masses]))
            single_m.extend(c.masses)
        u, s = McEstimate.from_samples(union_n), McEstimate.from_samples(single_n)
        assert abs(u.mean - s.mean) <= 4 * math.hypot(u.stderr, s.stderr)
        assert stats.ks_2samp(union_m, single_m).pvalue > 0.01


class TestFunctionals:
    def test_integrate_P(self):
        a = AtomicMeasure(np.array([[0.1], [0.7]]), np.array([2.0, 3.0]), G_SUPER, 0.5, 1.0)
        assert integrate_P(a) == 5.0
        assert integrate_P(a, 0.0) == 0.0
        assert integrate_P(a, lambda x: x) == pytest.approx(2.0 * 0.1 + 3.0 * 0.7)

    @pytest.mark.parametrize("gamma", [2.0, G_SUPER])
    def test_monte_carlo_laplace_matches_closed_form(self, unit, gamma):
        eps = 1e-4
        samples = laplace_mc_samples(unit, None, gamma, eps, 10_000, RandomStream(8))
        est = McEstimate.from_samples(samples).scaled(small_mass_correction(unit, None, gamma, eps))
        exact = closed_form_laplace(unit, None, gamma)
        assert est.agrees(exact, extra=truncation_bias_bound(unit, None, gamma, eps))

    def test_negative_test_function_rejected(self, unit):
        with pytest.raises(DomainError):
            laplace_mc_samples(unit, lambda x: x - 0.5, G_SUPER, 0.01, 100)
        with pytest.raises(DomainError):
            laplace_mc_samples(unit, -1.0, G_SUPER, 0.01, 100)

    def test_export(self, tmp_path):
        a = AtomicMeasure(np.array([[0.25]]), np.array([1.5]), G_SUPER, 0.5, 1.0)
        a.export(tmp_path / "a.csv")
        assert (tmp_path / "a.csv").read_text().splitlines() == ["x0,mass", "0.25,1.5"]


@pytest.fixture(scope="module")
def k1():
    return build_seed_kernel(1)


class TestWeightProcess:
    def test_start_value_is_log_integral(self, k1):
        psi = peaked_field()
        gamma = 2.0
        w = weight_process(psi, [0.0, 0.5], k1, gamma, RandomStream(1))
        oracle = logsumexp(gamma * psi.upsilon) + math.log(psi.grid.spacing)
        assert w.at(0.0) == pytest.approx(oracle, abs=1e-12)
        assert w.provenance["psi_id"] == 7 and w.provenance["seed"] == [1, 0]

    def test_large_gamma_tracks_the_maximum(self, k1):
        psi = peaked_field()
        for gamma in (50.0, 200.0):
            w = weight_process(psi, [0.0], k1, gamma)
            assert w.at(0.0) / gamma == pytest.approx(psi.upsilon.max(), abs=math.log(2) / gamma + 0.05)

    @settings(max_examples=10, deadline=None)
    @given(c=st.floats(-3, 3))
    def test_constant_shift(self, k1, c):
        psi = peaked_field()
        shifted = SimpleNamespace(grid=psi.grid, upsilon=psi.upsilon + c)
        a = weight_process(psi, [0.0, 0.7], k1, 1.5, RandomStream(9))
        b = weight_process(shifted, [0.0, 0.7], k1, 1.5, RandomStream(9))
        np.testing.assert_allclose(b.values - a.values, 1.5 * c, atol=1e-9)

    def test_marginal_mean_at_positive_scale(self, k1):
        # E exp(W) = e^{(d - γ√(2d)) s} ∫ E e^{γ(Ψ + W_s)} = e^{(d - γ√(2d) + γ²/2) s} ∫ e^{γΨ}
        psi = peaked_field()
        gamma, s = 0.5, 0.6
        vals = np.array([weight_process(psi, [0.0, s], k1, gamma, RandomStream(10, i)).values
                         for i in range(400)])
        ratio = np.exp(vals[:, 1] - vals[:, 0])
        target = math.exp((1 - gamma * math.sqrt(2) + gamma ** 2 / 2) * s)
        assert McEstimate.from_samples(ratio).agrees(target)

    def test_errors(self, k1):
        psi = peaked_field()
        with pytest.raises(ConfigurationError):
            weight_process(psi, [0.1, 0.2], k1, 1.0)
        with pytest.raises(ConfigurationError):
            weight_process(psi, [0.0, 0.2, 0.2], k1, 1.0)
        flat = SimpleNamespace(grid=psi.grid, upsilon=np.zeros(psi.grid.n))
        with pytest.raises(CoverageError):
            weight_process(flat, [0.0], k1, 1.0)

    def test_export(self, k1, tmp_path):
        p = weight_process(peaked_field(), [0.0, 0.3], k1, 1.0, RandomStream(2, 5))
        export_weight_paths(tmp_path / "w.csv", [p])
        lines = (tmp_path / "w.csv").read_text().splitlines()
        assert lines[0] == "replicate,seed,s,W_gamma_s" and len(lines) == 3
        assert lines[1].startswith("0,")


class TestReweightedMeasure:
    def _paths(self, n, value):
        from gmclab.atoms import WeightPath

        return [WeightPath(np.array([0.0, 1.0]), np.array([value, value])) for _ in range(n)]

    def test_identity_and_scaling(self, unit):
        a = sample_eta(unit, G_SUPER, 0.01, RandomStream(11))
        same = reweighted_measure(a, 1.0, self._paths(a.n_atoms, 0.0), 1.0)
        np.testing.assert_array_equal(same.masses, a.masses)
        assert same.locations is a.locations
        double = reweighted_measure(a, 1.0, self._paths(a.n_atoms, 0.0), 2.0)
        np.testing.assert_allclose(double.masses, a.masses * 2.0 ** (G_SUPER / math.sqrt(2.0)))
        tilted = reweighted_measure(a, 0.0, self._paths(a.n_atoms, 0.3), 1.0)
        np.testing.assert_allclose(tilted.masses, a.masses * math.exp(0.3))

    def test_length_mismatch(self, unit):
        a = sample_eta(unit, G_SUPER, 0.01, RandomStream(12))
        with pytest.raises(DomainError):
            reweighted_measure(a, 0.0, self._paths(a.n_atoms + 1, 0.0), 1.0)
