"""Shape fields around a maximum (d=1).

The shape field on ``B(0, e^b)`` is

    Υ_b(x) = -Σ_ℓ (1 - K(e^{-s_ℓ} x)) ΔB_ℓ + Z_b(x) - √2 a_b(x),

with ``B`` a Brownian path sampled at step Δ (left-point rule), ``Z_b`` the
growing-direction field pinned at the origin and ``a_b`` the variance
profile. Conditioning on ``max Υ_b ≤ λ`` is done by rejection; the
recentred field Ψ is obtained by shifting each accepted member to its
argmax and attaching an exponential importance weight.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import maximum_filter1d

from .errors import ConfigurationError, DomainError, ResourceError
from .field import GridSpec, build_plan
from .io import write_csv, write_json
from .kernel import GROWING, SeedKernel, build_seed_kernel, recentering_m_b
from .rng import RandomStream, as_generator

SPACING = 1.0 / 8
MAX_SCALE = 9.0
MAX_STEP = 0.1
MIN_ACCEPTANCE = 1e-5
SQRT2 = math.sqrt(2.0)  # √(2d) for d=1
ALPHA = math.sqrt(2.0 / math.pi)
_CHUNK_FLOATS = 4_000_000


def theta(k, j):
    """``log(1 + max(k, j))^2``."""
    return np.log1p(np.maximum(k, np.asarray(j, dtype=float))) ** 2


def envelope(k, j, constant: float = 1.0):
    """``constant · (1 + Θ_k(j))``."""
    return constant * (1.0 + theta(k, j))


# --- model -------------------------------------------------------------------------

class _ShapeModel:
    """Deterministic ingredients of Υ_b on the nodes of ``B(0, e^b)``."""

    def __init__(self, kernel: SeedKernel, b: float, step: float, spacing: float = SPACING):
        if kernel.d != 1:
            raise ConfigurationError("shape fields are implemented for d=1 only")
        if not b > 0:
            raise DomainError(f"b must be positive, got {b}")
        if b > MAX_SCALE + 1e-12:
            raise ResourceError(f"b={b} exceeds the supported envelope b <= {MAX_SCALE:g}")
        if not 0 < step <= MAX_STEP + 1e-12:
            raise ConfigurationError(f"step must lie in (0, {MAX_STEP}], got {step}")
        n_steps = int(round(b / step))
        if abs(n_steps * step - b) > 1e-9:
            raise ConfigurationError("b must be a multiple of the step")
        self.kernel, self.b, self.step = kernel, float(b), float(step)
        self.n_steps = n_steps
        radius = math.exp(b)
        self.domain = GridSpec.centred(1, radius, spacing)
        xs = self.domain.coords()
        self.inner = np.nonzero(np.abs(xs) <= radius + 1e-12)[0]
        self.x = xs[self.inner]
        self.origin_index = int(np.argmin(np.abs(self.x)))
        self.plan = build_plan(kernel, self.domain, self.b, self.step, GROWING)
        edges = self.plan.edges
        r = np.abs(self.x)
        self.left_weight = np.stack([1.0 - kernel.K(math.exp(-s) * r) for s in edges[:-1]])
        mids = 0.5 * (edges[:-1] + edges[1:])
        self.pin = np.stack([kernel.K(math.exp(-s) * r) for s in mids])
        drift = SQRT2 * kernel.scales.a_b_array(np.where(r > 0, r, 1.0), self.b)
        drift[r == 0] = 0.0
        self.drift = drift
        self.n_annuli = max(1, int(math.ceil(self.b - 1e-9)))
        self.cuts = list(range(1, self.n_annuli))
        self.block_of_layer = np.searchsorted(np.asarray(self.cuts, float), edges[:-1] + 1e-9,
                                              side="right")
        with np.errstate(divide="ignore"):
            j = np.floor(np.log(np.maximum(r, 1e-300)))
        self.annulus = np.clip(j, 0, self.n_annuli - 1).astype(int)
        self.times = self.step * np.arange(n_steps + 1)

    @property
    def chunk(self) -> int:
        return max(2, 2 * (_CHUNK_FLOATS // (2 * self.domain.n)))

    def paths(self, rng, n: int, endpoint):
        """Driving paths ``(n, n_steps+1)``; a bridge to ``u`` if requested."""
        incr = rng.standard_normal((n, self.n_steps)) * math.sqrt(self.step)
        B = np.zeros((n, self.n_steps + 1))
        np.cumsum(incr, axis=1, out=B[:, 1:])
        kind, u = _endpoint(endpoint)
        if kind == "bridge":
            frac = self.times / self.b
            B = B - frac * (B[:, -1:] - u)
            B[:, -1] = u
        return B

    def draw(self, rng_field, rng_path, n: int, endpoint=None, partials: bool = False):
        """Batch of shape fields; returns a dict of arrays with leading axis ``n``."""
        cuts = self.cuts if partials else ()
        fields, origin = self.plan.sample_merged(rng_field, n, cuts)
        fields = fields[:, :, self.inner]
        B = self.paths(rng_path, n, endpoint)
        dB = np.diff(B, axis=1)
        stoch = -(dB @ self.left_weight)
        out = {"B": B, "stochastic": stoch}
        if partials:
            blocks = []
            for blk in range(fields.shape[0]):
                sel = self.block_of_layer == blk
                blocks.append(fields[blk] - origin[:, sel] @ self.pin[sel])
            # block j covers scales [j, j+1); Z_j sums the blocks below j
            zp = np.zeros((n, self.n_annuli, len(self.x)))
            acc = np.zeros((n, len(self.x)))
            for blk in range(len(blocks) - 1):
                acc = acc + blocks[blk]
                zp[:, blk + 1] = acc
            z = acc + blocks[-1]
            out["z_partials"] = zp
        else:
            z = fields[0] - origin @ self.pin
        phi = stoch + z
        out["z"] = z
        out["phi"] = phi
        out["upsilon"] = phi - self.drift
        return out


_MODEL_CACHE: dict = {}


def shape_model(kernel=None, b: float = 6.0, step: float = MAX_STEP) -> _ShapeModel:
    kernel = kernel or build_seed_kernel(1)
    key = (id(kernel), float(b), float(step))
    m = _MODEL_CACHE.get(key)
    if m is None:
        if len(_MODEL_CACHE) > 4:
            _MODEL_CACHE.clear()
        m = _ShapeModel(kernel, b, step)
        _MODEL_CACHE[key] = m
    return m


def _endpoint(endpoint):
    if endpoint is None or endpoint == "none" or endpoint == ("none",):
        return "none", None
    if isinstance(endpoint, (tuple, list)) and len(endpoint) == 2 and endpoint[0] == "bridge":
        return "bridge", float(endpoint[1])
    raise ConfigurationError(f"endpoint must be None or ('bridge', u), got {endpoint!r}")


def _generators(stream):
    if isinstance(stream, RandomStream):
        return stream.child(1).generator(), stream.child(2).generator()
    g = as_generator(stream)
    a, b = g.spawn(2)
    return a, b


def _seed_of(stream):
    return (stream.base_seed, stream.stream_id) if isinstance(stream, RandomStream) else None


# --- samples -----------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ShapeSample:
    """One shape field on the nodes of ``B(0, e^b)``.

    ``grid`` holds node coordinates (uniform spacing 1/8); ``driving_path``
    holds ``B`` at times ``0, Δ, ..., b``. ``z_partials[j]`` is ``Z_j``
    (layers below scale ``j``) for ``j = 0..⌈b⌉-1`` when available.
    """

    b: float
    grid: np.ndarray = field(repr=False)
    upsilon: np.ndarray = field(repr=False)
    phi: np.ndarray = field(repr=False)
    drift: np.ndarray = field(repr=False)
    driving_path: np.ndarray = field(repr=False)
    z_component: np.ndarray = field(repr=False)
    stochastic_term: np.ndarray = field(repr=False)
    step: float = MAX_STEP
    endpoint_condition: tuple = ("none",)
    attached_g: np.ndarray = field(default=None, repr=False)
    z_partials: np.ndarray = field(default=None, repr=False)
    seed: tuple = None

    @property
    def spacing(self) -> float:
        return float(self.grid[1] - self.grid[0])

    @property
    def origin_index(self) -> int:
        return int(np.argmin(np.abs(self.grid)))

    @property
    def n_annuli(self) -> int:
        return max(1, int(math.ceil(self.b - 1e-9)))

    def annulus_index(self) -> np.ndarray:
        r = np.abs(self.grid)
        with np.errstate(divide="ignore"):
            j = np.floor(np.log(np.maximum(r, 1e-300)))
        return np.clip(j, 0, self.n_annuli - 1).astype(int)

    def path_at(self, s: float) -> float:
        i = int(round(s / self.step))
        return float(self.driving_path[i])


def _sample_from(model: _ShapeModel, arrays: dict, i: int, endpoint, seed, attached_g=None):
    kind, u = _endpoint(endpoint)
    up = arrays["upsilon"][i]
    if attached_g is not None:
        g = np.asarray(attached_g, float)
        if g.shape != up.shape:
            raise ConfigurationError("attached_g must have one value per node")
        up = up + g
    zp = arrays.get("z_partials")
    return ShapeSample(model.b, model.x, up, arrays["phi"][i], model.drift, arrays["B"][i],
                       arrays["z"][i], arrays["stochastic"][i], model.step,
                       ("none",) if kind == "none" else ("bridge", u), attached_g,
                       None if zp is None else zp[i], seed)


def sample_upsilon(kernel=None, b: float = 6.0, step: float = MAX_STEP, endpoint=None, stream=0,
                   attached_g=None) -> ShapeSample:
    """Draw one shape field Υ_b with all components.

    Parameters
    ----------
    endpoint : ``None`` for a free driving path or ``("bridge", u)`` for a
        Brownian bridge from 0 to ``u`` in time ``b``.
    attached_g : optional auxiliary field added to Υ_b (default: none).
    """
    model = shape_model(kernel, b, step)
    rf, rp = _generators(stream)
    arrays = model.draw(rf, rp, 1, endpoint, partials=True)
    return _sample_from(model, arrays, 0, endpoint, _seed_of(stream), attached_g)


def iter_shape_batches(kernel=None, b: float = 6.0, n: int = 1000, stream=0, step: float = MAX_STEP,
                       endpoint=None, partials: bool = False, chunk=None):
    """Yield ``(model, arrays)`` for consecutive batches totalling ``n`` fields."""
    model = shape_model(kernel, b, step)
    rf, rp = _generators(stream)
    chunk = chunk or model.chunk
    done = 0
    while done < n:
        m = min(chunk, n - done)
        yield model, model.draw(rf, rp, m, endpoint, partials)
        done += m


def upsilon_maxima(kernel=None, b: float = 6.0, n: int = 1000, stream=0, step: float = MAX_STEP,
                   endpoint=None, chunk=None):
    """Grid maxima of Υ_b over ``B(0, e^b)`` and the endpoint ``B_b`` for ``n`` draws."""
    maxima, ends = [], []
    for model, arr in iter_shape_batches(kernel, b, n, stream, step, endpoint, False, chunk):
        maxima.append(arr["upsilon"].max(axis=1))
        ends.append(arr["B"][:, -1])
    return np.concatenate(maxima), np.concatenate(ends)


# --- annuli and control variable ------------------------------------------------------

@dataclass(frozen=True)
class AnnuliSuprema:
    """Per-annulus grid suprema, indexed by ``j = 0..n_annuli-1``.

    ``remainder[j, l]`` is ``sup_{A_l} Z_{j,b}`` for ``l <= j`` (nan above the
    diagonal); ``deviation[j] = |sup_{A_j} Υ + B_j|``.
    """

    j: np.ndarray
    sup_upsilon: np.ndarray
    brownian_proxy: np.ndarray
    deviation: np.ndarray
    sup_z_partial: np.ndarray
    remainder: np.ndarray
    oscillation: np.ndarray
    sup_abs_g: np.ndarray


def _sup_by_annulus(values, ann, n):
    out = np.full(n, -np.inf)
    np.maximum.at(out, ann, values)
    return out


def annuli_suprema(s: ShapeSample) -> AnnuliSuprema:
    """Grid suprema over ``A_0 = B(0,e)`` and ``A_j = B(0,e^{j+1}) ∖ B(0,e^j)``."""
    n = s.n_annuli
    ann = s.annulus_index()
    js = np.arange(n)
    sup_up = _sup_by_annulus(s.upsilon, ann, n)
    Bj = np.array([s.path_at(j) for j in js])
    per_unit = int(round(1.0 / s.step))
    osc = np.array([np.ptp(s.driving_path[j * per_unit:min((j + 1) * per_unit, len(s.driving_path) - 1) + 1])
                    for j in js])
    zsup = np.full(n, np.nan)
    rem = np.full((n, n), np.nan)
    if s.z_partials is not None:
        for j in js:
            zsup[j] = _sup_by_annulus(s.z_partials[j], ann, n)[j]
            rem[j, :j + 1] = _sup_by_annulus(s.z_component - s.z_partials[j], ann, n)[:j + 1]
    if s.attached_g is not None:
        gsup = _sup_by_annulus(np.abs(s.attached_g), ann, n)
    else:
        gsup = np.zeros(n)
    return AnnuliSuprema(js, sup_up, -Bj, np.abs(sup_up + Bj), zsup, rem, osc, gsup)


def control_variable(s: ShapeSample, table: AnnuliSuprema = None) -> int:
    """Smallest ``k ∈ [1, b-1]`` meeting the four envelope conditions, else ``b``."""
    if s.z_partials is None:
        raise ConfigurationError("control_variable needs a sample with partial Z fields")
    t = table or annuli_suprema(s)
    b = s.n_annuli
    js = t.j
    m = np.array([recentering_m_b(1, j) if j >= 1 else 0.0 for j in js])
    decay_g = np.exp(-(b - js) / 2.0)
    for k in range(1, b):
        th = theta(k, js)
        if np.any(t.oscillation > th):
            continue
        if np.any(np.abs(t.sup_z_partial[1:] - m[1:]) > th[1:]):
            continue
        ok = True
        for j in js:
            ls = np.arange(j + 1)
            if np.any(t.remainder[j, :j + 1] > np.exp(-(j - ls) / 2.0) * th[j]):
                ok = False
                break
        if not ok:
            continue
        if np.any(t.sup_abs_g > decay_g * th):
            continue
        return k
    return b


@dataclass(frozen=True)
class MaxDiagnostics:
    M: float
    D_lambda_volume: float
    argmax: float


def near_max_diagnostics(s, lam: float, region=None) -> MaxDiagnostics:
    """Grid maximum, its location and the volume of ``{x : f(x) >= M - λ}``.

    ``s`` is a :class:`ShapeSample` or a pair ``(coords, values)``.
    """
    coords, values = (s.grid, s.upsilon) if isinstance(s, ShapeSample) else s
    coords, values = np.asarray(coords, float), np.asarray(values, float)
    if region is not None:
        mask = np.asarray(region, bool)
        if not mask.any():
            raise DomainError("empty region")
        coords, values = coords[mask], values[mask]
    if lam < 0:
        raise DomainError("λ must be nonnegative")
    i = int(np.argmax(values))
    M = float(values[i])
    h = float(coords[1] - coords[0]) if len(coords) > 1 else 1.0
    vol = h * int(np.count_nonzero(values >= M - lam))
    return MaxDiagnostics(M, vol, float(coords[i]))


# --- conditioned ensembles --------------------------------------------------------------

@dataclass(frozen=True)
class GridField:
    """A 1-D field on a power-of-two :class:`GridSpec` (padded by edge values)."""

    grid: GridSpec
    upsilon: np.ndarray
    member_id: int = None


@dataclass(frozen=True, eq=False)
class ClusterEnsemble:
    """Accepted shape fields with importance weights.

    For ``kind="tildeUpsilon"`` the weights are all 1. For ``kind="Psi"``
    member ``i`` is ``samples[i]`` shifted so that its argmax (node
    ``argmax[i]``) sits at the origin with value 0.
    """

    kind: str
    lam: float
    b: float
    samples: tuple = field(repr=False)
    weights: np.ndarray = field(repr=False)
    acceptance_rate: float = float("nan")
    trials: int = 0
    accepted: int = 0
    argmax: np.ndarray = field(default=None, repr=False)
    raw_weights: np.ndarray = field(default=None, repr=False)
    seed: tuple = None

    def __len__(self):
        return len(self.samples)

    def field_values(self, i: int):
        """``(coords, values)`` of member ``i`` as a Υ̃ or Ψ field."""
        s = self.samples[i]
        if self.kind == "Psi":
            k = int(self.argmax[i])
            return s.grid - s.grid[k], s.upsilon - s.upsilon[k]
        return s.grid, s.upsilon

    def member(self, i: int) -> ShapeSample:
        s = self.samples[i]
        if self.kind != "Psi":
            return s
        k = int(self.argmax[i])
        top = s.upsilon[k]
        up = s.upsilon - top
        return ShapeSample(s.b, s.grid - s.grid[k], up, up + s.drift, s.drift, s.driving_path,
                           s.z_component - top, s.stochastic_term, s.step, s.endpoint_condition,
                           s.attached_g, None, s.seed)

    @property
    def members(self):
        return [(self.member(i), float(w)) for i, w in enumerate(self.weights)]

    def grid_field(self, i: int) -> GridField:
        coords, values = self.field_values(i)
        h = coords[1] - coords[0]
        n = 1 << max(1, int(len(values) - 1).bit_length())
        padded = np.concatenate([values, np.full(n - len(values), values[-1])])
        return GridField(GridSpec(1, (float(coords[0]),), n * h, n), padded, i)

    def export(self, directory, stem: str = "member"):
        """One CSV per member (coordinate, value, weight) plus ``manifest.json``."""
        import os

        os.makedirs(directory, exist_ok=True)
        files = []
        for i in range(len(self)):
            coords, values = self.field_values(i)
            w = float(self.weights[i])
            name = f"{stem}_{i:05d}.csv"
            write_csv(os.path.join(directory, name), ["x", "value", "weight"],
                      ([x, v, w] for x, v in zip(coords, values)))
            files.append(name)
        write_json(os.path.join(directory, "manifest.json"), {
            "kind": self.kind, "lambda": self.lam, "b": self.b, "members": len(self),
            "acceptance_rate": self.acceptance_rate, "trials": self.trials,
            "accepted": self.accepted, "seed": self.seed, "files": files,
        })


def sample_tilde_upsilon(lam: float, b: float, n_accepted: int, stream=0, kernel=None,
                         step: float = MAX_STEP, endpoint=None, partials: bool = False,
                         max_trials: int = None) -> ClusterEnsemble:
    """Rejection sampling of Υ_b on ``{max over B(0,e^b) <= λ}``.

    The acceptance rate counts every trial of every batch drawn, so it is
    unbiased for ``P(M_{0,b}(Υ_b) <= λ)``; members beyond ``n_accepted`` in
    the last batch are dropped.
    """
    if not lam > 0:
        raise DomainError(f"λ must be positive, got {lam}")
    if n_accepted < 1:
        raise ConfigurationError("n_accepted must be at least 1")
    max_trials = max_trials or int(math.ceil(n_accepted / MIN_ACCEPTANCE))
    model = shape_model(kernel, b, step)
    rf, rp = _generators(stream)
    seed = _seed_of(stream)
    kept, trials, hits = [], 0, 0
    while len(kept) < n_accepted:
        m = model.chunk
        arr = model.draw(rf, rp, m, endpoint, partials)
        ok = np.nonzero(arr["upsilon"].max(axis=1) <= lam)[0]
        trials += m
        hits += len(ok)
        for i in ok[: n_accepted - len(kept)]:
            kept.append(_sample_from(model, arr, int(i), endpoint, seed))
        if (hits + 3) / trials < MIN_ACCEPTANCE or (trials >= max_trials and len(kept) < n_accepted):
            raise ResourceError(f"acceptance rate {hits / trials:.2e} after {trials} trials "
                                f"is below {MIN_ACCEPTANCE:g}")
    return ClusterEnsemble("tildeUpsilon", float(lam), float(b), tuple(kept), np.ones(len(kept)),
                           hits / trials, trials, hits, None, None, seed)


def _tilt_denominators(samples, lam: float):
    """``∫ e^{√2(f - M)} 1{f >= M - λ}`` and ``M`` per member."""
    den, top = np.empty(len(samples)), np.empty(len(samples))
    for i, s in enumerate(samples):
        M = s.upsilon.max()
        v = s.upsilon - M
        sel = v >= -lam
        den[i] = s.spacing * np.exp(SQRT2 * v[sel]).sum()
        top[i] = M
    return den, top


def recentre(tilde: ClusterEnsemble) -> ClusterEnsemble:
    """Ψ ensemble from a Υ̃ ensemble: shift to the argmax and tilt."""
    if tilde.kind != "tildeUpsilon":
        raise ConfigurationError("recentre needs a tildeUpsilon ensemble")
    argmax = np.array([int(np.argmax(s.upsilon)) for s in tilde.samples])
    den, top = _tilt_denominators(tilde.samples, tilde.lam)
    # e^{√2 M} / ∫ e^{√2 f} 1{...} = 1 / ∫ e^{√2 (f - M)} 1{...}
    raw = 1.0 / den
    w = raw / raw.mean()
    return ClusterEnsemble("Psi", tilde.lam, tilde.b, tilde.samples, w, tilde.acceptance_rate,
                           tilde.trials, tilde.accepted, argmax, raw, tilde.seed)


def sample_psi(lam: float, b: float, n: int, stream=0, kernel=None, step: float = MAX_STEP,
               endpoint=None) -> ClusterEnsemble:
    """Recentred, tilted shape field Ψ built from ``n`` accepted Υ̃ members."""
    return recentre(sample_tilde_upsilon(lam, b, n, stream, kernel, step, endpoint))


# --- local functionals and the resampling identity -----------------------------------------

class LocalFunctional:
    """Bounded functional of a field through its values in a ball.

    ``evaluate_all(values, spacing)`` returns ``F(τ_x f)`` for every node
    ``x`` of a 1-D grid, where ``τ_x f = f(· + x) - f(x)``.
    """

    radius = 0.0

    def evaluate_all(self, values, spacing):
        raise NotImplementedError

    def __call__(self, values, index, spacing):
        return float(self.evaluate_all(values, spacing)[index])


class ConstantFunctional(LocalFunctional):
    def __init__(self, value: float = 1.0):
        self.value = float(value)

    def evaluate_all(self, values, spacing):
        return np.full(len(values), self.value)


class BallSupIndicator(LocalFunctional):
    """``1{sup over B(0, radius) of f <= 0}``; windows are truncated at the grid edge."""

    def __init__(self, radius: float = 1.0):
        self.radius = float(radius)

    def evaluate_all(self, values, spacing):
        w = int(math.floor(self.radius / spacing + 1e-9))
        top = maximum_filter1d(values, size=2 * w + 1, mode="constant", cval=-np.inf)
        return (top <= values).astype(float)


class ClippedIncrement(LocalFunctional):
    """``clip(f(offset), -bound, bound)``; 0 where ``x + offset`` leaves the grid."""

    def __init__(self, offset: float = 0.5, bound: float = 1.0):
        self.offset, self.bound, self.radius = float(offset), float(bound), abs(float(offset))

    def evaluate_all(self, values, spacing):
        k = int(round(self.offset / spacing))
        out = np.zeros(len(values))
        n = len(values)
        idx = np.arange(n)
        ok = (idx + k >= 0) & (idx + k < n)
        out[ok] = np.clip(values[idx[ok] + k] - values[ok], -self.bound, self.bound)
        return out


@dataclass(frozen=True)
class ResamplingResult:
    lhs: object
    rhs: object
    joint_se: float

    @property
    def agrees(self) -> bool:
        return abs(self.lhs.mean - self.rhs.mean) <= 4.0 * self.joint_se + 1e-12


def resampling_check(lam: float, F: LocalFunctional, n: int = 500, b: float = 6.0, stream=0,
                     kernel=None, step: float = MAX_STEP, ensemble: ClusterEnsemble = None):
    """Both sides of the resampling identity on one Υ̃ ensemble.

    lhs averages ``F(Υ̃)``; rhs averages the tilted spatial mean
    ``∫ F(τ_x Υ̃) e^{√2 Υ̃(x)} 1{Υ̃(x) >= M - λ} dx / ∫ e^{√2 Υ̃} 1{...}``.
    The joint SE comes from the paired per-member differences.
    """
    from .harness import McEstimate, joint_stderr

    ens = ensemble or sample_tilde_upsilon(lam, b, n, stream, kernel, step)
    lhs_v, rhs_v = np.empty(len(ens)), np.empty(len(ens))
    for i, s in enumerate(ens.samples):
        vals = F.evaluate_all(s.upsilon, s.spacing)
        lhs_v[i] = vals[s.origin_index]
        v = s.upsilon - s.upsilon.max()
        wts = np.where(v >= -lam, np.exp(SQRT2 * v), 0.0)
        rhs_v[i] = np.dot(vals, wts) / wts.sum()
    lhs, rhs = McEstimate.from_samples(lhs_v), McEstimate.from_samples(rhs_v)
    return ResamplingResult(lhs, rhs, joint_stderr(lhs, rhs, lhs_v - rhs_v))


# --- constants -------------------------------------------------------------------------

def c_star_window(k: float):
    return k ** (1.0 / 6.0), k ** (5.0 / 6.0)


def c_star_oracle_without_max(k: float) -> float:
    """``E[B_k 1{B_k ∈ [k^{1/6}, k^{5/6}]}]`` for ``B_k ~ N(0, k)``."""
    lo, hi = c_star_window(k)
    sd = math.sqrt(k)
    phi = lambda z: math.exp(-0.5 * z * z) / math.sqrt(2 * math.pi)
    return sd * (phi(lo / sd) - phi(hi / sd))


def estimate_c_star(lam: float, k: float, n: int, stream=0, kernel=None, step: float = MAX_STEP,
                    chunk=None):
    """Monte Carlo mean of ``B_k 1{B_k ∈ [k^{1/6},k^{5/6}]} 1{M_{0,k}(Υ_k) <= λ}``.

    ``lam = inf`` drops the maximum indicator.
    """
    from .harness import McEstimate

    if not lam > 0:
        raise DomainError(f"λ must be positive, got {lam}")
    maxima, ends = upsilon_maxima(kernel, k, n, stream, step, None, chunk)
    lo, hi = c_star_window(k)
    vals = ends * ((ends >= lo) & (ends <= hi)) * (maxima <= lam)
    return McEstimate.from_samples(vals, _seed_of(stream))


def _weighted_mean(values, weights):
    """Self-normalised weighted mean and its delta-method SE."""
    w = np.asarray(weights, float)
    v = np.asarray(values, float)
    mean = float(np.dot(w, v) / w.sum())
    se = float(math.sqrt(np.sum(w ** 2 * (v - mean) ** 2)) / w.sum())
    return mean, se


def psi_mass(ens: ClusterEnsemble, lam: float, level: float = None) -> np.ndarray:
    """``∫ e^{√2 Ψ} 1{Ψ >= -level}`` per member (``level`` defaults to ``lam``)."""
    level = lam if level is None else level
    out = np.empty(len(ens))
    for i in range(len(ens)):
        _, v = ens.field_values(i)
        sel = v >= -level
        out[i] = ens.samples[i].spacing * np.exp(SQRT2 * v[sel]).sum()
    return out


def estimate_a_star(lam: float, gamma: float, psi_ensemble: ClusterEnsemble, c_star):
    """``α c_⋆ / (γ E_w[∫ e^{√2 Ψ} 1{Ψ >= -λ}])`` with a delta-method SE."""
    from .harness import McEstimate

    if psi_ensemble.kind != "Psi":
        raise ConfigurationError("estimate_a_star needs a Psi ensemble")
    D, se_D = _weighted_mean(psi_mass(psi_ensemble, lam), psi_ensemble.weights)
    value = ALPHA * c_star.mean / (gamma * D)
    rel_c = c_star.stderr / c_star.mean if c_star.mean != 0 else math.inf
    se = abs(value) * math.hypot(rel_c, se_D / D)
    return McEstimate(value, se, len(psi_ensemble), psi_ensemble.seed)


def estimate_T_gamma(gamma: float, theta_values, psi_ensemble: ClusterEnsemble, w_fields=None):
    """Weighted mean of ``(Σ_i θ_i ∫ e^{γ(W_i + Ψ)})^{√2/γ}``.

    ``w_fields`` is ``None`` (all ``W_i = 0``) or an array
    ``(len(θ), n_members, n_nodes)`` of values on each member's nodes.
    """
    from .harness import McEstimate

    if psi_ensemble.kind != "Psi":
        raise ConfigurationError("estimate_T_gamma needs a Psi ensemble")
    th = np.atleast_1d(np.asarray(theta_values, float))
    if np.any(th < 0):
        raise DomainError("θ must be nonnegative")
    expo = SQRT2 / gamma
    vals = np.empty(len(psi_ensemble))
    for m in range(len(psi_ensemble)):
        _, v = psi_ensemble.field_values(m)
        h = psi_ensemble.samples[m].spacing
        if w_fields is None:
            total = th.sum() * h * np.exp(gamma * v).sum()
        else:
            total = sum(th[i] * h * np.exp(gamma * (w_fields[i][m] + v)).sum() for i in range(len(th)))
        vals[m] = total ** expo
    mean, se = _weighted_mean(vals, psi_ensemble.weights)
    return McEstimate(mean, se, len(psi_ensemble), psi_ensemble.seed)
