"""Supercritical limit objects: Poisson atoms with power-law masses.

``η_γ[ν]`` is a Poisson point measure on space × mass with intensity
``ν(dx) ⊗ z^{-1-α} dz`` where ``α = √(2d)/γ ∈ (0, 1)``. The intensity is
not integrable at ``z = 0``, so samples keep only masses ``z ≥ ε``; the mass
discarded by the cutoff has mean ``ν(f) ε^{1-α}/(1-α)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, special

from .errors import ConfigurationError, CoverageError, DomainError, ResourceError
from .field import GridSpec, build_plan, refine_midpoint
from .gmc import DiscreteMeasure, critical_gamma
from .io import write_csv
from .kernel import SHRINKING, SeedKernel
from .rng import RandomStream, as_generator

MAX_EXPECTED_ATOMS = 1e7


def tail_index(gamma: float, d: int) -> float:
    """``α = √(2d)/γ``; must lie in (0, 1) for the supercritical phase."""
    if gamma <= critical_gamma(d):
        raise DomainError(f"gamma={gamma} is not supercritical in d={d}")
    return critical_gamma(d) / gamma


def beta_constant(gamma: float, d: int) -> float:
    """``Γ(1-α)/α``."""
    a = tail_index(gamma, d)
    return special.gamma(1.0 - a) / a


@dataclass(frozen=True, eq=False)
class AtomicMeasure:
    locations: np.ndarray = field(repr=False)  # (n_atoms, d)
    masses: np.ndarray = field(repr=False)
    gamma: float = float("nan")
    alpha: float = float("nan")
    epsilon: float = 0.0
    intensity_ref: DiscreteMeasure = field(default=None, repr=False)

    @property
    def n_atoms(self) -> int:
        return len(self.masses)

    def export(self, path):
        d = self.locations.shape[1] if self.locations.ndim == 2 else 1
        header = [f"x{a}" for a in range(d)] + ["mass"]
        write_csv(path, header, ([*loc, m] for loc, m in zip(self.locations, self.masses)))


def expected_count(nu: DiscreteMeasure, gamma: float, epsilon: float) -> float:
    a = tail_index(gamma, nu.grid.d)
    return nu.total_mass * epsilon ** (-a) / a


def _atom_locations(nu: DiscreteMeasure, count: int, rng) -> np.ndarray:
    """``count`` i.i.d. points with law ∝ ν: a cell by weight, then uniform in the cell."""
    grid = nu.grid
    w = nu.cell_weights.ravel()
    cells = rng.choice(w.size, size=count, p=w / w.sum())
    centres = grid.points()[cells]
    jitter = (rng.random((count, grid.d)) - 0.5) * grid.spacing
    return centres + jitter


def pareto_masses(count: int, alpha: float, epsilon: float, rng) -> np.ndarray:
    """Masses with ``P(M > z) = (z/ε)^{-α}``, ``z ≥ ε`` (inverse transform)."""
    return epsilon * rng.random(count) ** (-1.0 / alpha)


def sample_eta(nu: DiscreteMeasure, gamma: float, epsilon: float, stream=0) -> AtomicMeasure:
    """Atoms of ``η_γ[ν]`` with mass at least ``epsilon``."""
    if epsilon <= 0:
        raise ConfigurationError("epsilon must be positive")
    if nu.total_mass <= 0:
        raise ConfigurationError("intensity measure has zero mass")
    d = nu.grid.d
    a = tail_index(gamma, d)
    mean = expected_count(nu, gamma, epsilon)
    if mean > MAX_EXPECTED_ATOMS:
        raise ResourceError(f"expected atom count {mean:.3g} exceeds {MAX_EXPECTED_ATOMS:.0g}")
    rng = as_generator(stream)
    count = int(rng.poisson(mean))
    locs = _atom_locations(nu, count, rng)
    masses = pareto_masses(count, a, epsilon, rng)
    return AtomicMeasure(locs, masses, float(gamma), a, float(epsilon), nu)


def _eval_on_points(f, pts: np.ndarray):
    if f is None:
        return 1.0
    if callable(f):
        arg = pts[:, 0] if pts.shape[1] == 1 else pts
        return np.asarray(f(arg), dtype=float)
    return float(f)


def integrate_P(a: AtomicMeasure, f=None) -> float:
    """``Σ mass · f(location)``."""
    if a.n_atoms == 0:
        return 0.0
    return float(np.sum(a.masses * _eval_on_points(f, a.locations)))


def _power_integral(nu: DiscreteMeasure, f, power: float) -> float:
    from .gmc import measure_integral

    if f is None:
        return nu.total_mass
    if callable(f):
        return measure_integral(nu, lambda x: np.asarray(f(x), float) ** power)
    return nu.total_mass * float(f) ** power


def closed_form_laplace(nu: DiscreteMeasure, f, gamma: float) -> float:
    """``exp(-β(d,γ) ∫ f^α dν)``, the Laplace functional of the untruncated measure."""
    d = nu.grid.d
    a = tail_index(gamma, d)
    return math.exp(-beta_constant(gamma, d) * _power_integral(nu, f, a))


def truncation_bias_bound(nu: DiscreteMeasure, f, gamma: float, epsilon: float) -> float:
    """``ν(f) ε^{1-α}/(1-α)``: mean mass discarded by the cutoff."""
    a = tail_index(gamma, nu.grid.d)
    if epsilon <= 0:
        return 0.0
    from .gmc import measure_integral

    return measure_integral(nu, f) * epsilon ** (1.0 - a) / (1.0 - a)


def small_mass_correction(nu: DiscreteMeasure, f, gamma: float, epsilon: float) -> float:
    """``exp(-∫ ∫_0^ε (1 - e^{-z f}) z^{-1-α} dz dν)``.

    Multiplying a Monte Carlo estimate of ``E exp(-P_ε(f))`` by this factor
    removes the cutoff bias exactly (the discarded atoms are independent).
    """
    a = tail_index(gamma, nu.grid.d)
    if epsilon <= 0:
        return 1.0
    vals = np.asarray(np.broadcast_to(_grid_values(nu, f), nu.grid.shape), float)
    uniq, inv = np.unique(np.round(vals, 14), return_inverse=True)

    def inner(c):
        if c <= 0:
            return 0.0
        g = lambda z: -np.expm1(-z * c) * z ** (-1.0 - a)
        return integrate.quad(g, 0.0, epsilon, epsabs=1e-14, epsrel=1e-10, limit=200)[0]

    if len(uniq) > 2000:
        # tabulate on a fine grid of f values and interpolate
        grid = np.linspace(uniq.min(), uniq.max(), 2001)
        table = np.array([inner(c) for c in grid])
        per = np.interp(uniq, grid, table)
    else:
        per = np.array([inner(c) for c in uniq])
    total = float(np.sum(per[inv.reshape(vals.shape)] * nu.cell_weights))
    return math.exp(-total)


def _grid_values(nu: DiscreteMeasure, f):
    from .gmc import _evaluate

    return _evaluate(f, nu.grid)


def laplace_mc_samples(nu: DiscreteMeasure, f, gamma: float, epsilon: float,
                       n: int, stream=0) -> np.ndarray:
    """``exp(-P_ε(f))`` for ``n`` independent truncated samples, vectorised."""
    d = nu.grid.d
    a = tail_index(gamma, d)
    mean = expected_count(nu, gamma, epsilon)
    if mean > MAX_EXPECTED_ATOMS:
        raise ResourceError(f"expected atom count {mean:.3g} exceeds {MAX_EXPECTED_ATOMS:.0g}")
    rng = as_generator(stream)
    out = np.empty(n)
    chunk = max(1, int(2e6 // max(mean, 1.0)))
    for lo in range(0, n, chunk):
        m = min(chunk, n - lo)
        counts = rng.poisson(mean, size=m)
        total = int(counts.sum())
        masses = pareto_masses(total, a, epsilon, rng)
        if f is not None and callable(f):
            locs = _atom_locations(nu, total, rng)
            fv = _eval_on_points(f, locs)
            if np.any(fv < 0):
                raise DomainError("the test function must be nonnegative on the support of ν")
            masses = masses * fv
        elif f is not None:
            if float(f) < 0:
                raise DomainError("the test function must be nonnegative")
            masses = masses * float(f)
        owner = np.repeat(np.arange(m), counts)
        sums = np.bincount(owner, weights=masses, minlength=m)
        out[lo:lo + m] = np.exp(-sums)
    return out


# --- weight process -------------------------------------------------------

@dataclass(frozen=True, eq=False)
class WeightPath:
    s_grid: np.ndarray
    values: np.ndarray
    provenance: dict = field(default_factory=dict)

    def at(self, s: float) -> float:
        idx = np.nonzero(np.abs(self.s_grid - s) <= 1e-12)[0]
        if len(idx) == 0:
            raise DomainError(f"s={s} is not on the weight path grid")
        return float(self.values[idx[0]])


def _log_integral_exp(values, gamma, cell):
    top = float(values.max())
    return gamma * top + math.log(np.exp(gamma * (values - top)).sum() * cell)


def weight_process(psi, s_grid, kernel: SeedKernel, gamma: float, stream=0,
                   boundary_tolerance: float = 0.01, step_max: float = 0.1) -> WeightPath:
    """``W_{γ,s} = log ∫ exp(γ Ψ_s(x)) dx`` on ``s_grid``.

    ``Ψ_s(x) = Ψ(e^{-s}x) + W_s(e^{-s}x) - √(2d) s`` where ``W_s`` is a fresh
    field with covariance ``∫_0^s K(e^u (x-y)) du`` for every ``s`` (so the
    path has the right one-time marginals but no pathwise consistency).
    After the change of variables ``y = e^{-s}x``,

        W_{γ,s} = d·s − γ√(2d)·s + log ∫ exp(γ(Ψ(y) + W_s(y))) dy,

    which is evaluated on the Ψ grid refined until it resolves ``W_s``.

    Parameters
    ----------
    psi : object with ``grid`` (1-D :class:`GridSpec`) and ``upsilon`` values.
    s_grid : increasing scales starting at 0.
    """
    grid = psi.grid
    values = np.asarray(psi.upsilon, dtype=float)
    d = grid.d
    if d != 1:
        raise ConfigurationError("weight_process supports d=1 shape fields")
    s_grid = np.asarray(s_grid, dtype=float)
    if s_grid[0] != 0.0 or np.any(np.diff(s_grid) <= 0):
        raise ConfigurationError("s_grid must start at 0 and increase strictly")

    # boundary check on e^{γΨ}
    mass = np.exp(gamma * (values - values.max()))
    edge = max(1, int(round(1.0 / grid.spacing)))
    frac = (mass[:edge].sum() + mass[-edge:].sum()) / mass.sum()
    if frac > boundary_tolerance:
        raise CoverageError(f"boundary carries {frac:.2%} of the exponential mass")

    # restrict to the region carrying all but e^{-40} of the mass
    keep = np.nonzero(gamma * (values - values.max()) > -40.0)[0]
    lo = max(keep[0] - 4, 0)
    hi = min(keep[-1] + 4, grid.n - 1)
    sub = values[lo:hi + 1]
    x0 = grid.origin[0] + lo * grid.spacing
    rng = as_generator(stream)
    gc = critical_gamma(d)
    out = np.empty(len(s_grid))
    for i, s in enumerate(s_grid):
        base = d * s - gamma * gc * s
        if s == 0.0:
            out[i] = base + _log_integral_exp(sub, gamma, grid.spacing)
            continue
        levels = max(0, int(math.ceil(math.log2(8.0 * grid.spacing * math.exp(s)))))
        fine = sub
        for _ in range(levels):
            fine = refine_midpoint(fine, 0)
        sp = grid.spacing / 2 ** levels
        n_fine = 1 << max(1, int(fine.size - 1).bit_length())
        fg = GridSpec(1, (round(x0 / sp) * sp,), n_fine * sp, n_fine)
        n_steps = max(1, int(math.ceil(s / step_max - 1e-9)))
        if s / n_steps < 0.01:
            n_steps = max(1, int(s / 0.01))
        plan = build_plan(kernel, fg, s, s / n_steps, SHRINKING)
        w, _ = plan.sample_merged(rng, 1)
        wf = w[0, 0, :fine.size]
        out[i] = base + _log_integral_exp(fine + wf, gamma, sp)
    prov = {"psi_id": getattr(psi, "member_id", None)}
    if isinstance(stream, RandomStream):
        prov["seed"] = [stream.base_seed, stream.stream_id]
    return WeightPath(s_grid, out, prov)


def reweighted_measure(a: AtomicMeasure, s: float, weights, a_star: float) -> AtomicMeasure:
    """Atom masses ``w_j ↦ a_⋆^{γ/√(2d)} e^{W_{γ,s,j}} w_j``; locations untouched."""
    if len(weights) != a.n_atoms:
        raise DomainError(f"{len(weights)} weight paths for {a.n_atoms} atoms")
    d = a.locations.shape[1] if a.locations.ndim == 2 else 1
    factor = a_star ** (a.gamma / critical_gamma(d))
    w = np.array([p.at(s) for p in weights]) if len(weights) else np.zeros(0)
    return AtomicMeasure(a.locations, factor * np.exp(w) * a.masses, a.gamma, a.alpha,
                         a.epsilon, a.intensity_ref)


def export_weight_paths(path, paths, seeds=None):
    """CSV rows ``replicate, seed, s, W_gamma_s``."""
    rows = []
    for r, p in enumerate(paths):
        seed = (seeds[r] if seeds is not None else p.provenance.get("seed"))
        for s, v in zip(p.s_grid, p.values):
            rows.append([r, str(seed), s, v])
    write_csv(path, ["replicate", "seed", "s", "W_gamma_s"], rows)
