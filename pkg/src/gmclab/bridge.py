"""Brownian bridges: closed-form laws and Monte Carlo barrier estimates.

Barrier events are evaluated in two ways:

* *discrete*: the path must respect the barrier at the sampling times only;
* *continuous*: additionally, between consecutive sampling times the bridge
  must not cross the straight line joining the barrier values. Given the
  endpoint gaps ``y_i, y_{i+1} > 0`` over a step ``Δ`` the crossing
  probability of that line is exactly ``exp(-2 y_i y_{i+1} / Δ)``, so the
  survival probability of a sampled path is the product of the complements.
  This is exact for constant and piecewise-linear barriers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from .errors import ConfigurationError, DomainError
from .io import write_csv
from .rng import as_generator


# --- curves -------------------------------------------------------------------

def zeta_curve(s, a: float, k: float):
    """``a (1 + log(1+k+s)^2)``."""
    return a * (1.0 + np.log1p(k + np.asarray(s, dtype=float)) ** 2)


def theta_envelope(j, k: float):
    """``log(1 + max(k, j))^2``."""
    return np.log1p(np.maximum(k, np.asarray(j, dtype=float))) ** 2


@dataclass(frozen=True)
class Curve:
    """A barrier ``s ↦ value``.

    kind is ``"constant"`` (``value``), ``"zeta"`` (``a``, ``k``), ``"theta"``
    (``k``) or ``"custom"`` (``table`` of ``(times, values)``, linear
    interpolation).
    """

    kind: str = "constant"
    a: float = 1.0
    k: float = 0.0
    value: float = 0.0
    table: tuple = None

    def __post_init__(self):
        if self.kind not in ("constant", "zeta", "theta", "custom"):
            raise ConfigurationError(f"unknown curve kind {self.kind!r}")
        if self.kind == "custom" and self.table is None:
            raise ConfigurationError("custom curve needs a table")

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        if self.kind == "constant":
            return np.full_like(s, self.value)
        if self.kind == "zeta":
            return zeta_curve(s, self.a, self.k)
        if self.kind == "theta":
            return theta_envelope(s, self.k)
        times, vals = self.table
        return np.interp(s, times, vals)


# --- exact formulas -----------------------------------------------------------

def p_stay_positive(x: float, u: float, b: float) -> float:
    """Probability that a bridge from ``x`` to ``u`` in time ``b`` stays positive."""
    if b <= 0 or x <= 0 or u <= 0:
        raise DomainError("need b > 0 and x, u > 0")
    return -math.expm1(-2.0 * x * u / b)


def first_passage_density(x: float, u: float, b: float, s):
    """Density in ``s`` of the first hitting time of 0 (defective: mass ``e^{-2xu/b}``)."""
    s_arr = np.asarray(s, dtype=float)
    if b <= 0 or x <= 0:
        raise DomainError("need b > 0 and x > 0")
    if np.any((s_arr <= 0) | (s_arr >= b)):
        raise DomainError("s must lie in (0, b)")
    r = b - s_arr
    out = b * x * np.exp(-((r * x + s_arr * u) ** 2) / (2 * b * s_arr * r)) / (
        s_arr ** 1.5 * np.sqrt(2 * np.pi * b * r))
    return float(out) if np.ndim(s) == 0 else out


def min_argmin_density(u: float, b: float, s, z):
    """Joint density of (time of the minimum, minimum) for a bridge from 0 to ``u > 0``."""
    s_arr = np.asarray(s, dtype=float)
    z_arr = np.asarray(z, dtype=float)
    if b <= 0 or u <= 0:
        raise DomainError("need b > 0 and u > 0")
    if np.any((s_arr <= 0) | (s_arr >= b)) or np.any(z_arr >= 0):
        raise DomainError("need s in (0, b) and z < 0")
    r = s_arr * (b - s_arr)
    out = (math.sqrt(2 / math.pi) * math.sqrt(b) * (-z_arr) * (u - z_arr)
           * np.exp(-((b * z_arr - u * s_arr) ** 2) / (2 * b * r)) / r ** 1.5)
    return float(out) if np.ndim(out) == 0 else out


def first_passage_cdf(x: float, u: float, b: float, points) -> np.ndarray:
    """CDF of the hitting time conditioned on hitting before ``b``, by quadrature."""
    hit = math.exp(-2.0 * x * u / b)
    pts = np.sort(np.clip(np.asarray(points, float), 0.0, b))
    f = lambda s: first_passage_density(x, u, b, s) if 0 < s < b else 0.0
    acc, prev, out = 0.0, 0.0, []
    for p in pts:
        if p > prev:
            acc += integrate.quad(f, prev, p, epsabs=1e-13, epsrel=1e-11, limit=200)[0]
            prev = p
        out.append(acc / hit)
    return np.array(out)


# --- sampling ---------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class BridgePath:
    x: float
    u: float
    b: float
    step: float
    times: np.ndarray = field(repr=False)
    values: np.ndarray = field(repr=False)


def _n_steps(b: float, step: float) -> int:
    if step > 0.01 * b + 1e-12:
        raise ConfigurationError(f"step {step} exceeds 0.01*b = {0.01 * b}")
    n = int(round(b / step))
    if abs(n * step - b) > 1e-9 * b:
        raise ConfigurationError("b must be a multiple of the step")
    return n


def bridge_batch(x: float, u: float, b: float, n_steps: int, n_paths: int, rng) -> np.ndarray:
    """``n_paths`` exact bridges at ``n_steps + 1`` equally spaced times.

    Free Brownian motion with the linear correction ``W_t - (t/b) W_b``.
    """
    dt = b / n_steps
    incr = rng.standard_normal((n_paths, n_steps)) * math.sqrt(dt)
    w = np.zeros((n_paths, n_steps + 1))
    np.cumsum(incr, axis=1, out=w[:, 1:])
    frac = np.linspace(0.0, 1.0, n_steps + 1)
    return x + w - frac * w[:, -1:] + frac * (u - x)


def sample_bridge(x: float, u: float, b: float, step: float, stream=0) -> BridgePath:
    n = _n_steps(b, step)
    rng = as_generator(stream)
    vals = bridge_batch(x, u, b, n, 1, rng)[0]
    vals[0], vals[-1] = x, u
    return BridgePath(x, u, b, step, np.linspace(0.0, b, n + 1), vals)


def survival_weights(gaps: np.ndarray, dt: float, continuous: bool = True) -> np.ndarray:
    """Per-path probability of staying above a barrier given gaps at grid times.

    ``gaps`` has shape ``(n_paths, n_times)``; columns outside the monitored
    window should be ``+inf``.
    """
    ok = np.all(gaps > 0, axis=1).astype(float)
    if not continuous:
        return ok
    g0, g1 = gaps[:, :-1], gaps[:, 1:]
    finite = np.isfinite(g0) & np.isfinite(g1)
    with np.errstate(invalid="ignore", over="ignore", divide="ignore"):
        expo = np.where(finite, -2.0 * np.maximum(g0, 0) * np.maximum(g1, 0) / dt, -np.inf)
        log_surv = np.log1p(-np.exp(expo)).sum(axis=1)
    return ok * np.exp(log_surv)


def _barrier_gaps(paths, times, curve: Curve, sign: str, t_start: float, t_end=None):
    barrier = curve(times)
    if sign in ("above_negative", "-", "neg", "above -zeta"):
        barrier = -barrier
    elif sign not in ("above_positive", "+", "pos", "above +zeta"):
        raise ConfigurationError(f"unknown sign {sign!r}")
    gaps = paths - barrier
    mask = times < t_start - 1e-12
    if t_end is not None:
        mask |= times > t_end + 1e-12
    gaps[:, mask] = np.inf
    return gaps


def mc_stay_above_curve(x: float, u: float, b: float, curve: Curve, sign: str = "above_negative",
                        n: int = 10000, stream=0, step=None, continuous: bool = True,
                        t_start: float = 0.0, chunk: int = 2000):
    """Monte Carlo probability that the bridge stays above ``±curve`` on ``[t_start, b]``.

    Returns a :class:`~gmclab.harness.McEstimate`.
    """
    from .harness import McEstimate

    step = 0.01 * b if step is None else step
    n_steps = _n_steps(b, step)
    rng = as_generator(stream)
    times = np.linspace(0.0, b, n_steps + 1)
    vals = []
    for lo in range(0, n, chunk):
        m = min(chunk, n - lo)
        paths = bridge_batch(x, u, b, n_steps, m, rng)
        gaps = _barrier_gaps(paths, times, curve, sign, t_start)
        vals.append(survival_weights(gaps, step, continuous))
    return McEstimate.from_samples(np.concatenate(vals))


def simulate_first_passage(x: float, u: float, b: float, n_paths: int, rng, n_steps: int = 2000,
                           chunk: int = 1000) -> np.ndarray:
    """Hitting times of 0 (``nan`` when not hit) for bridges from ``x`` to ``u``.

    The crossing interval is drawn from the exact per-step crossing
    probabilities; the time is placed uniformly inside that interval.
    """
    dt = b / n_steps
    out = np.full(n_paths, np.nan)
    for lo in range(0, n_paths, chunk):
        m = min(chunk, n_paths - lo)
        p = bridge_batch(x, u, b, n_steps, m, rng)
        g0, g1 = p[:, :-1], p[:, 1:]
        cross = np.where((g0 > 0) & (g1 > 0), np.exp(-2.0 * g0 * g1 / dt), 1.0)
        hit = rng.random(cross.shape) < cross
        any_hit = hit.any(axis=1)
        first = np.argmax(hit, axis=1)
        t = (first + rng.random(m)) * dt
        out[lo:lo + m] = np.where(any_hit, t, np.nan)
    return out


def simulate_min_argmin(u: float, b: float, n_paths: int, rng, n_steps: int = 1000,
                        chunk: int = 1000):
    """Minimum and step index of the minimum of bridges from 0 to ``u``.

    The minimum inside each step is drawn exactly given the endpoints
    ``m = (a + c - sqrt((a-c)^2 - 2Δ log U)) / 2``; the step holding the
    global minimum is therefore exact in law.
    """
    dt = b / n_steps
    mins = np.empty(n_paths)
    idx = np.empty(n_paths, dtype=int)
    for lo in range(0, n_paths, chunk):
        m = min(chunk, n_paths - lo)
        p = bridge_batch(0.0, u, b, n_steps, m, rng)
        a, c = p[:, :-1], p[:, 1:]
        e = rng.random(a.shape)
        local = 0.5 * (a + c - np.sqrt((a - c) ** 2 - 2.0 * dt * np.log(e)))
        j = np.argmin(local, axis=1)
        idx[lo:lo + m] = j
        mins[lo:lo + m] = local[np.arange(m), j]
    return mins, idx


def entropic_repulsion_check(a: float, k_list, b: int, u: float, n: int, stream=0,
                             continuous: bool = False):
    """Scaled probability ``(b/u) P(stay above -ζ_{a,k} on [1,b], dip below ζ_{a,k} after k)``.

    The bridge runs from 0 to ``u`` and is observed at integer times
    ``1..b-1`` (the random-walk form of the event). All ``k`` share the same
    paths, so differences across ``k`` are not blurred by independent noise.

    Returns
    -------
    list of dict with keys ``k``, ``probability``, ``stderr``, ``scaled``,
    ``scaled_stderr`` and a boolean ``decreasing`` for the whole table.
    """
    k_list = list(k_list)
    if any(k2 <= k1 for k1, k2 in zip(k_list, k_list[1:])):
        raise ConfigurationError("k_list must be increasing")
    b = int(b)
    rng = as_generator(stream)
    times = np.arange(b + 1, dtype=float)
    inner = (times >= 1) & (times <= b - 1)
    hits = {k: [] for k in k_list}
    chunk = 4000
    for lo in range(0, n, chunk):
        m = min(chunk, n - lo)
        paths = bridge_batch(0.0, u, float(b), b, m, rng)
        for k in k_list:
            z = zeta_curve(times, a, k)
            above = np.all((paths > -z)[:, inner], axis=1)
            late = inner & (times >= k)
            dip = np.any((paths < z)[:, late], axis=1)
            hits[k].append(above & dip)
    rows = []
    for k in k_list:
        h = np.concatenate(hits[k]).astype(float)
        p = h.mean()
        se = h.std(ddof=1) / math.sqrt(len(h))
        rows.append({"k": k, "probability": p, "stderr": se,
                     "scaled": p * b / u, "scaled_stderr": se * b / u})
    dec = all(r2["scaled"] < r1["scaled"] for r1, r2 in zip(rows, rows[1:]))
    for r in rows:
        r["decreasing"] = dec
    return rows


def export_table(path, rows):
    """CSV with columns ``parameters, estimate, stderr, exact``."""
    write_csv(path, ["parameters", "estimate", "stderr", "exact"],
              ([r["parameters"], r["estimate"], r["stderr"], r.get("exact", "")] for r in rows))
