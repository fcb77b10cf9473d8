"""Multi-scale Gaussian field sampler.

The field is built from independent stationary *layers*. A layer covers a
scale window ``[s, s + Δ]`` and has covariance ``layer_covariance(s, s+Δ, h)``
either in the shrinking direction (the martingale approximation ``X_t``) or
the growing direction (the field behind ``Z_b``).

Layers whose correlation lengths are comparable share a *level*: a regular
lattice ``k · δ_m`` with ``δ_m = δ · 2^m`` anchored at spatial zero, chosen so
that ``δ_m`` is at most one eighth of the smallest correlation length in the
level. Each layer is sampled exactly on its level lattice by circulant
embedding; coarse levels are carried to the finest lattice by repeated
four-point cubic midpoint refinement, which keeps lattice values unchanged.
Because every lattice contains the point 0, the value of each layer at the
origin is exact, which is what makes the origin path a discretised Brownian
motion.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import ConfigurationError, DomainError, SamplerError, StatisticsError
from .io import atomic_writer, fmt, write_json
from .kernel import GROWING, SHRINKING, SeedKernel
from .rng import RandomStream, as_generator

POINTS_PER_CORRELATION = 8
MARGIN = 3
_NEG_TOL = 1e-8  # relative size of clipped negative eigenvalues that is tolerated


# --- grids ---------------------------------------------------------------

@dataclass(frozen=True)
class GridSpec:
    """Regular grid of ``n**d`` nodes ``origin + i * spacing``, ``i = 0..n-1``.

    Each node is the centre of a cell of side ``spacing``. The origin must be
    an integer multiple of the spacing so that spatial zero lies on the
    lattice generated by the grid.
    """

    d: int
    origin: tuple
    side: float
    n: int

    def __post_init__(self):
        if self.d not in (1, 2):
            raise ConfigurationError(f"dimension must be 1 or 2, got {self.d}")
        n = int(self.n)
        if n < 2 or n & (n - 1):
            raise ConfigurationError(f"n must be a power of two, got {self.n}")
        origin = tuple(float(o) for o in np.atleast_1d(self.origin))
        if len(origin) == 1 and self.d == 2:
            origin = origin * 2
        if len(origin) != self.d:
            raise ConfigurationError("origin has wrong dimension")
        if self.side <= 0:
            raise ConfigurationError("side must be positive")
        object.__setattr__(self, "origin", origin)
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "side", float(self.side))
        for o in origin:
            q = o / self.spacing
            if abs(q - round(q)) > 1e-9 * max(1.0, abs(q)):
                raise ConfigurationError("origin must be an integer multiple of the spacing")

    @property
    def spacing(self) -> float:
        return self.side / self.n

    @property
    def cell_volume(self) -> float:
        return self.spacing ** self.d

    @property
    def shape(self) -> tuple:
        return (self.n,) * self.d

    @property
    def first_index(self) -> tuple:
        """Lattice index ``origin / spacing`` of node 0 along each axis."""
        return tuple(int(round(o / self.spacing)) for o in self.origin)

    def coords(self, axis: int = 0) -> np.ndarray:
        return self.origin[axis] + np.arange(self.n) * self.spacing

    def points(self) -> np.ndarray:
        """All node coordinates, shape ``(n**d, d)`` in C order."""
        axes = np.meshgrid(*[self.coords(a) for a in range(self.d)], indexing="ij")
        return np.stack([a.ravel() for a in axes], axis=1)

    def radii(self) -> np.ndarray:
        """Distance of every node to spatial zero, shaped like the grid."""
        if self.d == 1:
            return np.abs(self.coords(0))
        x, y = np.meshgrid(self.coords(0), self.coords(1), indexing="ij")
        return np.hypot(x, y)

    def anchor_index(self):
        """Grid index of the node at spatial zero, or ``None`` if outside."""
        idx = tuple(-f for f in self.first_index)
        if all(0 <= i < self.n for i in idx):
            return idx
        return None

    def nearest_index(self, point) -> tuple:
        p = np.atleast_1d(np.asarray(point, dtype=float))
        idx = np.rint((p - np.asarray(self.origin)) / self.spacing).astype(int)
        if np.any(idx < 0) or np.any(idx >= self.n):
            raise DomainError(f"point {point} lies outside the grid")
        return tuple(int(i) for i in idx)

    @classmethod
    def centred(cls, d: int, half_width: float, spacing: float) -> "GridSpec":
        """Smallest power-of-two grid at ``spacing`` covering ``[-half_width, half_width]^d``."""
        need = 2 * int(math.ceil(half_width / spacing)) + 1
        n = 1 << max(1, (need - 1).bit_length())
        return cls(d, (-(n // 2) * spacing,) * d, n * spacing, n)

    @classmethod
    def for_depth(cls, d: int, side: float, t_max: float, origin=0.0, direction=SHRINKING) -> "GridSpec":
        """Coarsest power-of-two grid on ``[origin, origin+side]^d`` fine enough for depth ``t_max``."""
        corr = math.exp(-t_max) if direction == SHRINKING else 1.0
        need = side * POINTS_PER_CORRELATION / corr
        n = 1 << max(1, int(math.ceil(math.log2(need))))
        sp = side / n
        o = round(float(origin) / sp) * sp
        return cls(d, (o,) * d, side, n)

    def to_dict(self) -> dict:
        return {"d": self.d, "origin": list(self.origin), "side": self.side, "n": self.n}


# --- refinement and embedding helpers --------------------------------------

def refine_midpoint(values: np.ndarray, axis: int) -> np.ndarray:
    """Insert cubic midpoints along ``axis``; lattice values are kept exactly.

    An input of length ``m`` along ``axis`` gives ``2m - 1`` outputs; the
    first and last midpoints use one-sided cubic stencils.
    """
    v = np.moveaxis(values, axis, 0)
    m = v.shape[0]
    out = np.empty((2 * m - 1,) + v.shape[1:], dtype=v.dtype)
    out[0::2] = v
    if m >= 4:
        mid = out[1::2]
        mid[1:-1] = (9.0 * (v[1:-2] + v[2:-1]) - (v[:-3] + v[3:])) / 16.0
        mid[0] = (5.0 * v[0] + 15.0 * v[1] - 5.0 * v[2] + v[3]) / 16.0
        mid[-1] = (5.0 * v[-1] + 15.0 * v[-2] - 5.0 * v[-3] + v[-4]) / 16.0
    else:
        out[1::2] = 0.5 * (v[:-1] + v[1:])
    return np.moveaxis(out, 0, axis)


def _next_pow2(x: int) -> int:
    return 1 << max(0, int(x - 1).bit_length())


@dataclass
class _Level:
    """One dyadic lattice level and the layers that live on it."""

    m: int
    spacing: float
    lo: tuple  # lattice index range (inclusive) per axis
    hi: tuple
    layers: list  # layer indices
    embed: int = 0
    spectra: np.ndarray = None  # (n_layers, *embed_shape) clipped eigenvalues

    @property
    def shape(self):
        return tuple(h - l + 1 for l, h in zip(self.lo, self.hi))


class _Plan:
    """Lattice hierarchy and circulant spectra for a layer decomposition.

    Independent of the random stream; build once and reuse across replicates.
    """

    def __init__(self, kernel: SeedKernel, domain: GridSpec, t_max: float, step: float,
                 direction: str, t_min: float = 0.0):
        if not 0.01 - 1e-12 <= step <= 0.25 + 1e-12:
            raise ConfigurationError(f"layer step must lie in [0.01, 0.25], got {step}")
        if direction not in (SHRINKING, GROWING):
            raise ConfigurationError(f"unknown direction {direction!r}")
        if kernel.d != domain.d:
            raise ConfigurationError("kernel and grid dimensions differ")
        n_layers = int(round((t_max - t_min) / step))
        if n_layers < 1 or abs(n_layers * step - (t_max - t_min)) > 1e-9:
            raise ConfigurationError("t_max must be a positive multiple of the layer step")
        self.kernel = kernel
        self.domain = domain
        self.direction = direction
        self.step = step
        self.t_max = t_max
        self.edges = t_min + step * np.arange(n_layers + 1)
        self.edges[-1] = t_max
        d = domain.d
        delta = domain.spacing

        # level of each layer
        if direction == SHRINKING:
            corr = np.exp(-self.edges[1:])
            support = np.exp(-self.edges[:-1])
        else:
            corr = np.exp(self.edges[:-1])
            support = np.exp(self.edges[1:])
        ratio = corr / (POINTS_PER_CORRELATION * delta)
        if np.any(ratio < 1.0 - 1e-9):
            raise ConfigurationError(
                f"grid spacing {delta:g} too coarse: need <= {corr.min() / POINTS_PER_CORRELATION:g}")
        level_of = np.floor(np.log2(ratio + 1e-12)).astype(int)
        self.level_of = level_of
        self.support = support

        # lattice index ranges, finest first, each covering the next finer level
        first = domain.first_index
        lo = [min(0, f - MARGIN) for f in first]
        hi = [max(0, f + domain.n - 1 + MARGIN) for f in first]
        levels = []
        for m in range(int(level_of.max()) + 1):
            if m > 0:
                lo = [min(0, (l - 2) // 2 - 1) for l in lo]
                hi = [max(0, -((-(h + 3)) // 2) + 1) for h in hi]
            members = [i for i in range(n_layers) if level_of[i] == m]
            levels.append(_Level(m, delta * 2 ** m, tuple(lo), tuple(hi), members))
        self.levels = levels
        for lev in levels:
            if lev.layers:
                self._embed(lev)

    # covariance of one layer at lags (array of distances)
    def layer_cov(self, i: int, dist: np.ndarray) -> np.ndarray:
        s, t = self.edges[i], self.edges[i + 1]
        return self.kernel.scales.layer_covariance_array(s, t, dist, self.direction)

    def _embed(self, lev: _Level, factor: int = 1):
        d = self.domain.d
        reach = max(self.support[i] for i in lev.layers) / lev.spacing
        size = max(lev.shape)
        base = _next_pow2(max(size + int(math.ceil(reach)) + 1,
                              int(math.ceil(4 * reach))))
        for attempt in range(2):
            M = base * factor * (2 ** attempt)
            idx = np.arange(M)
            lag = np.minimum(idx, M - idx) * lev.spacing
            if d == 1:
                dist = lag
            else:
                dist = np.hypot(lag[:, None], lag[None, :])
            spectra = []
            worst = 0.0
            for i in lev.layers:
                c = self.layer_cov(i, dist)
                lam = np.fft.fftn(c).real
                neg = -lam.min() / max(lam.max(), 1e-300)
                worst = max(worst, neg)
                spectra.append(np.maximum(lam, 0.0))
            if worst <= _NEG_TOL:
                lev.embed = M
                lev.spectra = np.array(spectra)
                return
        raise SamplerError(
            f"circulant embedding of level {lev.m} has negative eigenvalues "
            f"(relative {worst:.3g}) even after doubling the padding to {M}")

    @cached_property
    def total_nodes(self) -> int:
        return int(sum(np.prod(l.shape) for l in self.levels if l.layers))

    def midpoints(self) -> np.ndarray:
        return 0.5 * (self.edges[:-1] + self.edges[1:])

    # --- sampling ---------------------------------------------------------
    def _window(self, lev: _Level, arr: np.ndarray) -> np.ndarray:
        """Extract the lattice window ``lo..hi`` from a periodic embedding array.

        ``arr`` may have extra leading batch axes.
        """
        M = lev.embed
        out = arr
        nb = arr.ndim - self.domain.d
        for a, (l, h) in enumerate(zip(lev.lo, lev.hi)):
            idx = np.arange(l, h + 1) % M
            out = np.take(out, idx, axis=nb + a)
        return out

    def _to_finest(self, lev_index: int, values: np.ndarray) -> np.ndarray:
        """Refine a level array down to the domain grid (extra leading axes allowed)."""
        d = self.domain.d
        nb = values.ndim - d
        cur = values
        for m in range(lev_index, 0, -1):
            src, dst = self.levels[m], self.levels[m - 1]
            for a in range(d):
                cur = refine_midpoint(cur, nb + a)
            # refined array starts at lattice index 2*src.lo in dst units
            sl = [slice(None)] * nb
            for a in range(d):
                start = dst.lo[a] - 2 * src.lo[a]
                sl.append(slice(start, start + dst.shape[a]))
            cur = cur[tuple(sl)]
        lev0 = self.levels[0]
        sl = [slice(None)] * nb
        for a, f in enumerate(self.domain.first_index):
            start = f - lev0.lo[a]
            sl.append(slice(start, start + self.domain.n))
        return cur[tuple(sl)]

    def _sum_to_finest(self, per_level: dict) -> np.ndarray:
        """Sum level arrays on the domain grid, refining coarse-to-fine.

        Refinement is linear, so refining the running sum once per level
        equals refining every level separately at a fraction of the cost.
        """
        d = self.domain.d
        cur = None
        for m in range(len(self.levels) - 1, -1, -1):
            if cur is not None:
                src, dst = self.levels[m + 1], self.levels[m]
                nb = cur.ndim - d
                for a in range(d):
                    cur = refine_midpoint(cur, nb + a)
                sl = [slice(None)] * nb
                for a in range(d):
                    start = dst.lo[a] - 2 * src.lo[a]
                    sl.append(slice(start, start + dst.shape[a]))
                cur = cur[tuple(sl)]
            if m in per_level:
                cur = per_level[m] if cur is None else cur + per_level[m]
        lev0 = self.levels[0]
        nb = cur.ndim - d
        sl = [slice(None)] * nb
        for a, f in enumerate(self.domain.first_index):
            start = f - lev0.lo[a]
            sl.append(slice(start, start + self.domain.n))
        return cur[tuple(sl)]

    def _complex_noise(self, rng, shape):
        z = np.empty(shape, dtype=np.complex128)
        z.real = rng.standard_normal(shape)
        z.imag = rng.standard_normal(shape)
        return z

    def sample_layer_arrays(self, rng):
        """Per-layer exact draw. Returns (list of finest-grid arrays, origin values)."""
        d = self.domain.d
        values = [None] * len(self.level_of)
        origin = np.zeros(len(self.level_of))
        for li, lev in enumerate(self.levels):
            if not lev.layers:
                continue
            M = lev.embed
            for j, i in enumerate(lev.layers):
                noise = self._complex_noise(rng, (M,) * d)
                y = np.fft.fftn(np.sqrt(lev.spectra[j] / M ** d) * noise).real
                origin[i] = y[(0,) * d]
                values[i] = self._to_finest(li, self._window(lev, y))
        return values, origin

    def sample_merged(self, rng, n_samples: int, cuts=()):
        """Batch draw of the summed field with exact per-layer origin values.

        Layers of one level are summed in the spectral domain, so each level
        costs one FFT per pair of samples (real and imaginary parts are
        independent). Per-layer origin values are drawn from their exact
        conditional law given the level sample.

        Parameters
        ----------
        cuts : scales at which partial sums are also returned; levels are
            split into blocks at these scales.

        Returns
        -------
        fields : array ``(len(cuts)+1, n_samples, *grid.shape)`` of block sums
            (block ``b`` holds the layers between consecutive cuts).
        origin : array ``(n_samples, n_layers)``
        """
        d = self.domain.d
        cuts = sorted(float(c) for c in cuts)
        bounds = [self.edges[0]] + cuts + [self.edges[-1] + 1.0]
        n_layers = len(self.level_of)
        block_of = np.searchsorted(np.asarray(cuts), self.edges[:-1] + 1e-9, side="right")
        n_blocks = len(cuts) + 1
        n_pairs = (n_samples + 1) // 2
        per_block = [dict() for _ in range(n_blocks)]
        origin = np.zeros((2 * n_pairs, n_layers))
        for li, lev in enumerate(self.levels):
            if not lev.layers:
                continue
            M = lev.embed
            members = np.asarray(lev.layers)
            for blk in range(n_blocks):
                sel = np.nonzero(block_of[members] == blk)[0]
                if len(sel) == 0:
                    continue
                lam = lev.spectra[sel]
                lam_v = lam.sum(axis=0)
                coef = self._complex_noise(rng, (n_pairs,) + (M,) * d) * np.sqrt(lam_v / M ** d)
                y = np.fft.fftn(coef, axes=tuple(range(1, d + 1)))
                both = np.concatenate([y.real, y.imag], axis=0)
                per_block[blk][li] = self._window(lev, both)
                # conditional origin values of each layer in the block
                with np.errstate(invalid="ignore", divide="ignore"):
                    share = np.where(lam_v > 0, lam / lam_v, 0.0)
                share = share.reshape(len(sel), -1)
                cflat = coef.reshape(n_pairs, -1)
                proj = cflat @ share.T  # (n_pairs, n_sel) complex
                proj = np.concatenate([proj.real, proj.imag], axis=0)
                lam_flat = lam.reshape(len(sel), -1)
                lv = lam_v.ravel()
                with np.errstate(invalid="ignore", divide="ignore"):
                    inv = np.where(lv > 0, 1.0 / lv, 0.0)
                resid_cov = (np.diag(lam_flat.sum(axis=1))
                             - (lam_flat * inv) @ lam_flat.T) / M ** d
                w, v = np.linalg.eigh(resid_cov)
                root = v * np.sqrt(np.clip(w, 0.0, None))
                resid = rng.standard_normal((2 * n_pairs, len(sel))) @ root.T
                # the residual sums to zero across layers; remove rounding drift
                resid -= resid.mean(axis=1, keepdims=True)
                origin[:, members[sel]] = proj + resid
        fields = np.zeros((n_blocks, 2 * n_pairs) + self.domain.shape)
        for blk, parts in enumerate(per_block):
            if parts:
                fields[blk] = self._sum_to_finest(parts)
        return fields[:, :n_samples], origin[:n_samples]


_PLAN_CACHE: dict = {}


def build_plan(kernel, domain, t_max, step, direction, t_min=0.0) -> _Plan:
    key = (id(kernel), domain, float(t_max), float(step), direction, float(t_min))
    plan = _PLAN_CACHE.get(key)
    if plan is None:
        if len(_PLAN_CACHE) > 16:
            _PLAN_CACHE.clear()
        plan = _Plan(kernel, domain, t_max, step, direction, t_min)
        _PLAN_CACHE[key] = plan
    return plan


# --- public types ----------------------------------------------------------

@dataclass(frozen=True, eq=False)
class FieldSample:
    grid: GridSpec
    values: np.ndarray = field(repr=False)
    window: tuple = (0.0, 0.0)
    direction: str = SHRINKING
    seed: tuple = None

    def value_at(self, point) -> float:
        return float(self.values[self.grid.nearest_index(point)])

    def export(self, csv_path, json_path=None, extra=None):
        """Write ``index, x..., value`` rows and a JSON sidecar with provenance."""
        from .io import write_csv

        pts = self.grid.points()
        header = ["index"] + [f"x{a}" for a in range(self.grid.d)] + ["value"]
        rows = ([i, *p, v] for i, (p, v) in enumerate(zip(pts, self.values.ravel())))
        write_csv(csv_path, header, rows)
        if json_path is not None:
            meta = {"grid": self.grid.to_dict(), "s": self.window[0], "t": self.window[1],
                    "direction": self.direction, "seed": self.seed}
            meta.update(extra or {})
            write_json(json_path, meta)


@dataclass(frozen=True, eq=False)
class LayerStack:
    """Independent stationary layers of one multi-scale field.

    ``layers[i]`` is the value of layer ``i`` (scale window
    ``edges[i]..edges[i+1]``) on the domain grid and ``origin_values[i]`` is
    its exact value at spatial zero.
    """

    kernel: SeedKernel
    direction: str
    grid: GridSpec
    step: float
    t_max: float
    edges: np.ndarray = field(repr=False)
    layers: tuple = field(repr=False)
    origin_values: np.ndarray = field(repr=False)
    seed: tuple = None

    @property
    def n_layers(self) -> int:
        return len(self.layers)

    def _layer_index(self, s: float) -> int:
        q = s / self.step
        i = int(round(q))
        if abs(q - i) > 1e-9 or i < 0 or i > self.n_layers:
            raise DomainError(f"scale {s} is not a multiple of the layer step within [0, t_max]")
        return i

    def origin_path(self) -> np.ndarray:
        """Values of the field at the origin after each layer, starting with 0."""
        return np.concatenate([[0.0], np.cumsum(self.origin_values)])


def sample_layers(kernel: SeedKernel, domain: GridSpec, t_max: float, step: float,
                  direction: str = SHRINKING, stream=0) -> LayerStack:
    """Draw every layer of the decomposition on ``domain``.

    Parameters
    ----------
    kernel : seed covariance.
    domain : grid on which layers are evaluated; its spacing must resolve the
        finest layer with eight points per correlation length.
    t_max : total scale depth, a multiple of ``step``.
    step : layer width Δ in ``[0.01, 0.25]``.
    direction : ``"shrinking"`` for X_t, ``"growing"`` for the field behind Z_b.
    stream : RandomStream, Generator or integer seed.
    """
    plan = build_plan(kernel, domain, t_max, step, direction)
    rng = as_generator(stream)
    values, origin = plan.sample_layer_arrays(rng)
    seed = (stream.base_seed, stream.stream_id) if isinstance(stream, RandomStream) else None
    return LayerStack(kernel, direction, domain, step, t_max, plan.edges.copy(),
                      tuple(values), origin, seed)


def assemble_X(stack: LayerStack, s: float, t: float) -> FieldSample:
    """Sum of the layers between scales ``s`` and ``t`` (``X_{s,t}``)."""
    if s > t:
        raise DomainError(f"need s <= t, got s={s}, t={t}")
    i, j = stack._layer_index(s), stack._layer_index(t)
    total = np.zeros(stack.grid.shape)
    for k in range(i, j):
        total += stack.layers[k]
    return FieldSample(stack.grid, total, (s, t), stack.direction, stack.seed)


def origin_path(stack: LayerStack) -> np.ndarray:
    return stack.origin_path()


def pinning_profile(kernel: SeedKernel, grid: GridSpec, scales) -> np.ndarray:
    """``K(e^{-r} x)`` for each scale ``r`` and node ``x``; shape ``(len(scales), *grid.shape)``."""
    r = grid.radii()
    return np.stack([kernel.K(math.exp(-sc) * r) for sc in scales])


def sample_Z(stack: LayerStack, b: float) -> FieldSample:
    """Pinned field ``Z_b = X̂_b - Σ K(e^{-r̄}·) (origin increment)`` from a growing stack."""
    if stack.direction != GROWING:
        raise ConfigurationError("sample_Z needs a growing-direction stack")
    if b > stack.t_max + 1e-12:
        raise DomainError(f"b={b} exceeds the stack depth {stack.t_max}")
    j = stack._layer_index(b)
    mids = 0.5 * (stack.edges[:j] + stack.edges[1:j + 1])
    prof = pinning_profile(stack.kernel, stack.grid, mids)
    total = np.zeros(stack.grid.shape)
    for k in range(j):
        total += stack.layers[k] - prof[k] * stack.origin_values[k]
    return FieldSample(stack.grid, total, (0.0, b), GROWING, stack.seed)


def sample_field_batch(kernel: SeedKernel, domain: GridSpec, t_max: float, step: float,
                       n_samples: int, stream=0, direction: str = SHRINKING, cuts=()):
    """Fast batch sampler: summed field (per block) and per-layer origin values.

    Faster than :func:`sample_layers` because layers sharing a level are
    merged before the FFT. See :meth:`_Plan.sample_merged`.
    """
    plan = build_plan(kernel, domain, t_max, step, direction)
    rng = as_generator(stream)
    return plan.sample_merged(rng, n_samples, cuts)


# --- statistics ---------------------------------------------------------------

@dataclass(frozen=True)
class CovarianceEstimate:
    pair: tuple
    value: float
    stderr: float
    n: int


def empirical_covariance(samples, pairs):
    """Unbiased sample covariance (with standard error) for each pair of points.

    ``samples`` is a list of :class:`FieldSample` or an array of shape
    ``(n_samples, *grid.shape)`` together with a grid via FieldSample inputs.
    The standard error is the delta-method one, from the sample variance of
    the centred products.
    """
    if len(samples) < 100:
        raise StatisticsError(f"need at least 100 samples, got {len(samples)}")
    grid = samples[0].grid
    vals = np.stack([s.values for s in samples])
    out = []
    for p, q in pairs:
        a = vals[(slice(None),) + grid.nearest_index(p)]
        b = vals[(slice(None),) + grid.nearest_index(q)]
        out.append(_cov_with_se(a, b, (p, q)))
    return out


def _cov_with_se(a, b, pair=None) -> CovarianceEstimate:
    n = len(a)
    ac, bc = a - a.mean(), b - b.mean()
    prod = ac * bc
    cov = prod.sum() / (n - 1)
    se = prod.std(ddof=1) / math.sqrt(n)
    return CovarianceEstimate(pair, float(cov), float(se), n)


def covariance_from_arrays(a, b) -> CovarianceEstimate:
    """Same estimator as :func:`empirical_covariance` on two value arrays."""
    if len(a) < 100:
        raise StatisticsError(f"need at least 100 samples, got {len(a)}")
    return _cov_with_se(np.asarray(a, float), np.asarray(b, float))
