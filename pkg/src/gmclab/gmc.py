"""Discrete approximations of Gaussian multiplicative chaos.

A :class:`DiscreteMeasure` holds one weight per grid cell, computed as the
cell volume times a normalised exponential of the field at the cell centre.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, DomainError
from .field import FieldSample, GridSpec
from .io import write_csv, write_json
from .kernel import recentering_m_b

_PHASE_TOL = 1e-9


class GmcPhase(enum.Enum):
    SUBCRITICAL = "Subcritical"
    CRITICAL_DERIVATIVE = "CriticalDerivative"
    CRITICAL_SENETA_HEYDE = "CriticalSenetaHeyde"
    SUPERCRITICAL = "Supercritical"

    @classmethod
    def parse(cls, label) -> "GmcPhase":
        if isinstance(label, cls):
            return label
        key = str(label).replace("-", "").replace("_", "").lower()
        for p in cls:
            if p.value.lower() == key or p.name.replace("_", "").lower() == key:
                return p
        raise ConfigurationError(f"unknown phase {label!r}")


def critical_gamma(d: int) -> float:
    return math.sqrt(2 * d)


def check_phase(gamma: float, phase: GmcPhase, d: int) -> None:
    gc = critical_gamma(d)
    ok = {
        GmcPhase.SUBCRITICAL: 0 < gamma < gc - _PHASE_TOL,
        GmcPhase.CRITICAL_DERIVATIVE: abs(gamma - gc) <= 1e-6,
        GmcPhase.CRITICAL_SENETA_HEYDE: abs(gamma - gc) <= 1e-6,
        GmcPhase.SUPERCRITICAL: gamma > gc + _PHASE_TOL,
    }[phase]
    if not ok:
        raise ConfigurationError(f"gamma={gamma} is incompatible with phase {phase.value} in d={d}")


def supercritical_prefactor(gamma: float, t: float, d: int) -> float:
    """``t^{3γ/(2√(2d))} · exp(t (γ/√2 - √d)^2)``."""
    gc = critical_gamma(d)
    return t ** (1.5 * gamma / gc) * math.exp(t * (gamma / math.sqrt(2) - math.sqrt(d)) ** 2)


def density(values, gamma: float, t: float, phase: GmcPhase, d: int):
    """Normalised density at field values ``values`` (any shape).

    Returns ``(density, negative_part)``; the second array is nonzero only in
    the derivative normalisation, where the signed density is clipped at 0.
    """
    phase = GmcPhase.parse(phase)
    expo = np.exp(gamma * values - 0.5 * gamma * gamma * t)
    neg = None
    if phase is GmcPhase.SUBCRITICAL:
        dens = expo
    elif phase is GmcPhase.CRITICAL_DERIVATIVE:
        signed = (gamma * t - values) * expo
        dens = np.maximum(signed, 0.0)
        neg = np.maximum(-signed, 0.0)
    elif phase is GmcPhase.CRITICAL_SENETA_HEYDE:
        dens = math.sqrt(t) * expo
    else:
        dens = supercritical_prefactor(gamma, t, d) * expo
    return dens, neg


@dataclass(frozen=True, eq=False)
class DiscreteMeasure:
    """Nonnegative cell weights on a grid.

    ``clipped_fraction`` is the share of the absolute signed mass removed by
    clipping the derivative density at zero (0 for the other phases).
    """

    grid: GridSpec
    cell_weights: np.ndarray = field(repr=False)
    phase: GmcPhase = None
    gamma: float = float("nan")
    t: float = float("nan")
    clipped_fraction: float = 0.0
    seed: tuple = None

    @property
    def total_mass(self) -> float:
        return float(self.cell_weights.sum())

    def export(self, csv_path, json_path=None):
        pts = self.grid.points()
        header = ["index"] + [f"x{a}" for a in range(self.grid.d)] + ["weight"]
        rows = ([i, *p, w] for i, (p, w) in enumerate(zip(pts, self.cell_weights.ravel())))
        write_csv(csv_path, header, rows)
        if json_path is not None:
            write_json(json_path, {
                "phase": self.phase.value if self.phase else None,
                "gamma": self.gamma, "t": self.t, "total_mass": self.total_mass,
                "clipped_fraction": self.clipped_fraction, "seed": self.seed,
                "grid": self.grid.to_dict(),
            })


def lebesgue_measure(grid: GridSpec) -> DiscreteMeasure:
    """Reference measure with every cell weighted by its volume."""
    return DiscreteMeasure(grid, np.full(grid.shape, grid.cell_volume))


def gmc_measure(X: FieldSample, gamma: float, phase) -> DiscreteMeasure:
    """Cell weights of the GMC approximation built from ``X = X_t``."""
    phase = GmcPhase.parse(phase)
    d = X.grid.d
    check_phase(gamma, phase, d)
    s, t = X.window
    if s != 0.0 or t <= 0:
        raise ConfigurationError("gmc_measure needs a field X_t with scale window (0, t), t > 0")
    dens, neg = density(X.values, gamma, t, phase, d)
    vol = X.grid.cell_volume
    clipped = 0.0
    if neg is not None:
        pos_mass, neg_mass = dens.sum(), neg.sum()
        clipped = float(neg_mass / (pos_mass + neg_mass)) if pos_mass + neg_mass > 0 else 0.0
    return DiscreteMeasure(X.grid, dens * vol, phase, float(gamma), float(t), clipped, X.seed)


def _evaluate(f, grid: GridSpec):
    if f is None:
        return 1.0
    if callable(f):
        pts = grid.points()
        arg = pts[:, 0] if grid.d == 1 else pts
        return np.asarray(f(arg), dtype=float).reshape(grid.shape)
    arr = np.asarray(f, dtype=float)
    if arr.ndim == 0:
        return float(arr)
    return arr.reshape(grid.shape)


def measure_integral(mu: DiscreteMeasure, f=None) -> float:
    """``Σ f(centre) · weight``; ``f`` is a callable on coordinates, an array, or a constant."""
    vals = _evaluate(f, mu.grid)
    return float(np.sum(vals * mu.cell_weights))


def laplace_sample(mu: DiscreteMeasure, f=None) -> float:
    return math.exp(-measure_integral(mu, f))


def max_statistics(X: FieldSample, region=None):
    """Grid supremum of ``X`` over ``region`` and the same minus ``m_t``.

    ``region`` is ``None`` (whole grid), a boolean mask, or a callable taking
    coordinates and returning a mask.
    """
    vals = X.values
    if region is not None:
        mask = _evaluate(region, X.grid).astype(bool) if callable(region) else np.asarray(region, bool)
        if not mask.any():
            raise DomainError("empty region")
        vals = vals[mask]
    elif vals.size == 0:
        raise DomainError("empty region")
    top = float(vals.max())
    return top, top - recentering_m_b(X.grid.d, X.window[1])
