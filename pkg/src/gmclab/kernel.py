"""Seed covariance, its convolution square root, and derived scale integrals.

The seed covariance ``K`` is the autoconvolution of the smooth bump

    Kbar(x) ∝ exp(-1 / (1 - (2|x|)^2)),   |x| < 1/2,

so ``K`` is radial, positive definite, smooth, supported in the unit ball and
normalised to ``K(0) = 1``. Both radial profiles are tabulated and evaluated
by cubic splines.

All the scale integrals used elsewhere (``a_b``, ``h_b``, layer covariances)
reduce to the single primitive

    L(v) = ∫_v^0 K(e^w) dw      (L(v) = 0 for v >= 0),

which is tabulated once on a fine grid of ``v = log r`` and interpolated with
a Hermite spline whose slopes ``-K(e^v)`` are known exactly.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import integrate
from scipy.interpolate import CubicHermiteSpline, CubicSpline

from .errors import ConfigurationError, DomainError

MIN_RESOLUTION = 1024
SHRINKING = "shrinking"
GROWING = "growing"

# log-radius below which K(e^w) = 1 to double precision
_LOG_FLOOR = -40.0
_LOG_STEP = 2.0 ** -10


def bump_profile(r):
    """Unnormalised ``exp(-1/(1-4r^2))`` on ``[0, 1/2)``, zero beyond."""
    r = np.abs(np.asarray(r, dtype=float))
    out = np.zeros_like(r)
    inside = r < 0.5
    out[inside] = np.exp(-1.0 / (1.0 - 4.0 * r[inside] ** 2))
    return out


def _autoconvolve_1d(resolution):
    """Trapezoid autoconvolution of the bump at spacing 1/resolution.

    Returns raw (unnormalised) values of ``Kbar*Kbar`` at r = m/resolution,
    m = 0..resolution. The bump is flat to all orders at its edge, so the
    trapezoid rule converges faster than any power of the spacing.
    """
    h = 1.0 / resolution
    half = resolution // 2
    y = np.arange(-half, half + 1) * h
    kb = bump_profile(y)
    conv = np.convolve(kb, kb) * h
    centre = len(conv) // 2
    return conv[centre:centre + resolution + 1]


def _autoconvolve_2d(radii, n_radial=160, n_angle=160):
    """Polar-coordinate autoconvolution of the radial bump in the plane.

    Gauss-Legendre in the radius of the first factor, midpoint rule (spectral
    for periodic integrands) in the angle.
    """
    x, w = np.polynomial.legendre.leggauss(n_radial)
    rho = 0.25 * (x + 1.0)
    w = 0.25 * w
    theta = (np.arange(n_angle) + 0.5) * np.pi / n_angle
    cos_t = np.cos(theta)
    outer = w * bump_profile(rho) * rho
    out = np.empty(len(radii))
    for i, r in enumerate(radii):
        dist = np.sqrt(np.maximum(r * r + rho[:, None] ** 2 - 2.0 * r * rho[:, None] * cos_t, 0.0))
        inner = bump_profile(dist).sum(axis=1) * (2.0 * np.pi / n_angle)
        out[i] = outer @ inner
    return out


@dataclass(frozen=True, eq=False)
class SeedKernel:
    """Tabulated radial profiles of ``K`` (on [0,1]) and ``Kbar`` (on [0,1/2])."""

    d: int
    table_resolution: int
    radii: np.ndarray = field(repr=False)
    profile_K: np.ndarray = field(repr=False)
    kbar_radii: np.ndarray = field(repr=False)
    profile_Kbar: np.ndarray = field(repr=False)
    kbar_scale: float = field(repr=False)

    @cached_property
    def _spline_K(self):
        return CubicSpline(self.radii, self.profile_K, bc_type=((1, 0.0), (1, 0.0)))

    @cached_property
    def _spline_Kbar(self):
        return CubicSpline(self.kbar_radii, self.profile_Kbar, bc_type=((1, 0.0), (1, 0.0)))

    def K(self, r):
        """Vectorised evaluation of the seed covariance at radius ``r``."""
        r = np.abs(np.asarray(r, dtype=float))
        out = np.zeros_like(r)
        inside = r < 1.0
        if np.any(inside):
            out[inside] = self._spline_K(r[inside])
        return out

    def Kbar(self, r):
        r = np.abs(np.asarray(r, dtype=float))
        out = np.zeros_like(r)
        inside = r < 0.5
        if np.any(inside):
            out[inside] = self._spline_Kbar(r[inside])
        return out

    def Kbar_exact(self, r):
        """The normalised bump evaluated from its closed form (no table)."""
        return self.kbar_scale * bump_profile(r)

    @cached_property
    def second_derivative_at_zero(self) -> float:
        return float(self._spline_K(0.0, 2))

    @cached_property
    def scales(self) -> "ScaleFunctions":
        return ScaleFunctions(self)

    def export_csv(self, path, n=1001):
        """Write columns ``r, K(r), Kbar(r)`` for plotting or diffing."""
        from .io import atomic_writer

        r = np.linspace(0.0, 1.2, n)
        with atomic_writer(path) as fh:
            writer = csv.writer(fh)
            writer.writerow(["r", "K", "Kbar"])
            for ri, ki, kbi in zip(r, self.K(r), self.Kbar(r)):
                writer.writerow([f"{ri:.17g}", f"{ki:.17g}", f"{kbi:.17g}"])


_KERNEL_CACHE: dict = {}


def build_seed_kernel(d: int = 1, table_resolution: int = MIN_RESOLUTION) -> SeedKernel:
    """Tabulate the bump autoconvolution in dimension ``d``.

    Kernels are cached per ``(d, table_resolution)``; they are immutable.
    """
    if d not in (1, 2):
        raise ConfigurationError(f"dimension must be 1 or 2, got {d}")
    table_resolution = int(table_resolution)
    if table_resolution < MIN_RESOLUTION:
        raise ConfigurationError(
            f"table_resolution must be >= {MIN_RESOLUTION}, got {table_resolution}")
    if table_resolution % 2:
        table_resolution += 1
    key = (d, table_resolution)
    if key in _KERNEL_CACHE:
        return _KERNEL_CACHE[key]

    radii = np.arange(table_resolution + 1) / table_resolution
    if d == 1:
        raw = _autoconvolve_1d(table_resolution)
    else:
        raw = _autoconvolve_2d(radii)
    raw[-1] = 0.0
    norm = raw[0]
    kbar_radii = radii[: table_resolution // 2 + 1]
    scale = 1.0 / math.sqrt(norm)
    kernel = SeedKernel(
        d=d,
        table_resolution=table_resolution,
        radii=radii,
        profile_K=raw / norm,
        kbar_radii=kbar_radii,
        profile_Kbar=scale * bump_profile(kbar_radii),
        kbar_scale=scale,
    )
    _KERNEL_CACHE[key] = kernel
    return kernel


def eval_K(k: SeedKernel, r) -> float:
    return float(k.K(r)) if np.ndim(r) == 0 else k.K(r)


# --- validity diagnostics -------------------------------------------------

def autoconvolution_residual(k: SeedKernel, refine: int = 2) -> float:
    """Max |K_table - Kbar*Kbar| over all table nodes.

    The convolution is recomputed from the closed-form bump with a different
    rule than the one used to build the table (Gauss-Legendre over the overlap
    interval in 1-D, a finer polar rule in 2-D).
    """
    if k.d == 1:
        x, w = np.polynomial.legendre.leggauss(96 * refine)
        res = 0.0
        for r, kr in zip(k.radii, k.profile_K):
            lo, hi = r - 0.5, 0.5
            if hi <= lo:
                continue
            y = 0.5 * (hi - lo) * (x + 1.0) + lo
            val = 0.5 * (hi - lo) * np.sum(w * k.Kbar_exact(y) * k.Kbar_exact(r - y))
            res = max(res, abs(val - kr))
        return res
    vals = _autoconvolve_2d(k.radii, n_radial=96 * refine, n_angle=96 * refine) * k.kbar_scale ** 2
    return float(np.max(np.abs(vals - k.profile_K)))


def dft_min(k: SeedKernel, window: float = 8.0, spacing: float = 1.0 / 64) -> float:
    """Smallest value of the (spacing-scaled) DFT of K sampled on a periodic window."""
    n = int(round(window / spacing))
    idx = np.arange(n)
    lag = np.minimum(idx, n - idx) * spacing
    if k.d == 1:
        spec = np.fft.rfft(k.K(lag)).real * spacing
    else:
        rr = np.hypot(lag[:, None], lag[None, :])
        spec = np.fft.rfft2(k.K(rr)).real * spacing ** 2
    return float(spec.min())


def validity_report(k: SeedKernel) -> dict:
    return {
        "K0": float(k.K(0.0)),
        "outside_max": float(np.max(np.abs(k.K(np.linspace(1.0, 3.0, 101))))),
        "autoconvolution_residual": autoconvolution_residual(k),
        "dft_min": dft_min(k),
        "second_derivative_at_zero": k.second_derivative_at_zero,
    }


# --- scale functions ------------------------------------------------------

class ScaleFunctions:
    """Deterministic scale integrals of a :class:`SeedKernel`.

    Scalar entry points (:meth:`a_b`, :meth:`h_b`, :meth:`layer_covariance`)
    use adaptive quadrature; the ``*_array`` variants use the tabulated
    primitive ``L`` and are meant for whole grids.
    """

    def __init__(self, kernel: SeedKernel, quadrature_step: float = _LOG_STEP):
        self.kernel = kernel
        self.quadrature_step = quadrature_step
        v = np.arange(_LOG_FLOOR, quadrature_step / 2, quadrature_step)
        v[-1] = 0.0
        # 5-point Gauss-Legendre per cell, accumulated from the top
        gx, gw = np.polynomial.legendre.leggauss(5)
        left, right = v[:-1], v[1:]
        half = 0.5 * (right - left)
        nodes = (left + right)[:, None] / 2 + half[:, None] * gx[None, :]
        cell = half * (kernel.K(np.exp(nodes)) @ gw)
        L = np.zeros_like(v)
        L[:-1] = np.cumsum(cell[::-1])[::-1]
        self._v = v
        self._L = L
        self._spline = CubicHermiteSpline(v, L, -kernel.K(np.exp(v)))
        # ∫_{-inf}^0 (1 - K(e^w)) dw
        self._a_inf_at_unit = -(L[0] + _LOG_FLOOR)

    def L(self, v):
        """``∫_v^0 K(e^w) dw`` for arbitrary real ``v`` (vectorised)."""
        v = np.asarray(v, dtype=float)
        out = np.zeros_like(v)
        mid = (v < 0.0) & (v >= _LOG_FLOOR)
        out[mid] = self._spline(v[mid])
        low = v < _LOG_FLOOR
        out[low] = self._L[0] + (_LOG_FLOOR - v[low])
        return out

    # vectorised, table based --------------------------------------------
    def a_b_array(self, radius, b):
        r = np.abs(np.asarray(radius, dtype=float))
        out = np.zeros_like(r)
        pos = r > 0
        lr = np.log(r[pos])
        if math.isinf(b):
            out[pos] = np.where(lr >= 0, lr + self._a_inf_at_unit,
                                self.L(lr) + lr + self._a_inf_at_unit)
        else:
            out[pos] = b - (self.L(lr - b) - self.L(lr))
        return out

    def h_b_array(self, radius, b):
        return 1.0 - self.a_b_array(radius, b) / b

    def layer_covariance_array(self, s, t, radius, direction=SHRINKING):
        if s >= t:
            raise DomainError(f"layer window needs s < t, got s={s}, t={t}")
        r = np.abs(np.asarray(radius, dtype=float))
        out = np.full_like(r, t - s)
        pos = r > 0
        lr = np.log(r[pos])
        if direction == SHRINKING:
            out[pos] = self.L(s + lr) - self.L(t + lr)
        elif direction == GROWING:
            out[pos] = self.L(lr - t) - self.L(lr - s)
        else:
            raise ConfigurationError(f"unknown direction {direction!r}")
        return out

    # scalar, adaptive quadrature ------------------------------------------
    def _quad(self, f, lo, hi, breaks=()):
        pts = sorted({lo, hi, *[p for p in breaks if lo < p < hi]})
        total = 0.0
        for a, b in zip(pts[:-1], pts[1:]):
            val, _ = integrate.quad(f, a, b, epsabs=1e-12, epsrel=1e-12, limit=200)
            total += val
        return total

    def a_b(self, x, b) -> float:
        """``∫_0^b (1 - K(e^{-s} x)) ds``; ``b`` may be ``math.inf``.

        For ``b = inf`` and ``x = 0`` the integrand vanishes identically and
        the result is 0.
        """
        r = _radius(x)
        if r == 0.0:
            return 0.0
        if b != math.inf and b <= 0:
            raise DomainError(f"b must be positive, got {b}")
        K = self.kernel.K
        lr = math.log(r)
        f = lambda s: 1.0 - float(K(math.exp(-s) * r))
        if math.isinf(b):
            # integrand equals 1 up to log r, then decays like e^{-2s}
            flat = max(lr, 0.0)
            end = max(lr, 0.0) + 20.0
            return flat + self._quad(f, flat, end)
        flat = min(max(lr, 0.0), b)
        return flat + (self._quad(f, flat, b) if flat < b else 0.0)

    def h_b(self, x, b) -> float:
        """``(1/b) ∫_0^b K(e^{-s} x) ds``."""
        if b <= 0:
            raise DomainError(f"b must be positive, got {b}")
        r = _radius(x)
        if r == 0.0:
            return 1.0
        lr = math.log(r)
        start = min(max(lr, 0.0), b)
        if start >= b:
            return 0.0
        K = self.kernel.K
        return self._quad(lambda s: float(K(math.exp(-s) * r)), start, b) / b

    def layer_covariance(self, s, t, h, direction=SHRINKING) -> float:
        """Covariance of one scale window of the field at separation ``h``.

        shrinking: ``∫_s^t K(e^r h) dr`` (the fine-scale increments of X);
        growing:   ``∫_s^t K(e^{-r} h) dr`` (the field behind Z_b).
        """
        if s < 0 or s >= t:
            raise DomainError(f"layer window needs 0 <= s < t, got s={s}, t={t}")
        r = _radius(h)
        if r == 0.0:
            return float(t - s)
        K = self.kernel.K
        lr = math.log(r)
        if direction == SHRINKING:
            hi = min(t, -lr)  # K(e^u r) = 0 once e^u r >= 1
            if hi <= s:
                return 0.0
            return self._quad(lambda u: float(K(math.exp(u) * r)), s, hi)
        if direction == GROWING:
            lo = max(s, lr)
            if lo >= t:
                return 0.0
            return self._quad(lambda u: float(K(math.exp(-u) * r)), lo, t)
        raise ConfigurationError(f"unknown direction {direction!r}")


def _radius(x) -> float:
    return float(np.linalg.norm(np.atleast_1d(np.asarray(x, dtype=float))))


def eval_a_b(sf: ScaleFunctions, x, b) -> float:
    return sf.a_b(x, b)


def eval_h_b(sf: ScaleFunctions, x, b) -> float:
    return sf.h_b(x, b)


def recentering_m_b(d: int, b: float) -> float:
    """Recentering constant ``sqrt(2d) b - 3/(2 sqrt(2d)) log b`` of the maximum."""
    if b <= 0:
        raise DomainError(f"b must be positive, got {b}")
    c = math.sqrt(2 * d)
    return c * b - 1.5 / c * math.log(b)


def layer_covariance(k: SeedKernel, s, t, h, direction=SHRINKING) -> float:
    return k.scales.layer_covariance(s, t, h, direction)
