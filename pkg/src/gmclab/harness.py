"""Monte Carlo orchestration and statistics."""

from __future__ import annotations

import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import stats

from .errors import ConfigurationError, DomainError, PartialResultError, StatisticsError
from .rng import RandomStream

BAND = 4.0  # default comparison width in standard errors


@dataclass(frozen=True)
class McEstimate:
    mean: float
    stderr: float
    n: int
    seed: object = None

    @classmethod
    def from_samples(cls, values, seed=None) -> "McEstimate":
        v = np.asarray(values, dtype=float)
        n = v.size
        if n == 0:
            raise StatisticsError("no samples")
        se = float(v.std(ddof=1) / math.sqrt(n)) if n >= 2 else float("inf")
        return cls(float(v.mean()), se, int(n), seed)

    def z_score(self, target: float, extra: float = 0.0) -> float:
        """Distance to ``target`` in units of ``stderr`` (after removing ``extra`` slack)."""
        gap = max(abs(self.mean - target) - extra, 0.0)
        if self.stderr == 0:
            return 0.0 if gap == 0 else math.inf
        return gap / self.stderr

    def agrees(self, target: float, band: float = BAND, extra: float = 0.0) -> bool:
        return abs(self.mean - target) <= band * self.stderr + extra

    def scaled(self, c: float) -> "McEstimate":
        return McEstimate(self.mean * c, self.stderr * abs(c), self.n, self.seed)

    def __str__(self):
        return f"{self.mean:.6g} ± {self.stderr:.2g} (n={self.n})"


def joint_stderr(a: McEstimate, b: McEstimate, paired_diff=None) -> float:
    """SE of ``a - b``: from paired differences if given, else independent combination."""
    if paired_diff is not None:
        return McEstimate.from_samples(paired_diff).stderr
    return math.hypot(a.stderr, b.stderr)


# --- replicate runner ----------------------------------------------------------

def worker_count(requested=None) -> int:
    cap = os.environ.get("GMCLAB_THREADS")
    n = requested or os.cpu_count() or 1
    if cap:
        try:
            n = min(n, max(1, int(cap)))
        except ValueError:
            raise ConfigurationError(f"GMCLAB_THREADS must be an integer, got {cap!r}")
    return max(1, int(n))


def _call(task, base_seed, i):
    return task(RandomStream(base_seed, i))


def run_replicates(task, n: int, base_seed: int, workers=None):
    """Run ``task(RandomStream(base_seed, i))`` for ``i = 0..n-1``.

    Results are returned in replicate order regardless of scheduling, so
    they do not depend on the worker count.

    Returns
    -------
    values : list of task outputs
    estimate : McEstimate of the (scalar) outputs, or ``None`` if not scalar
    """
    w = worker_count(workers)
    results = [None] * n
    done = 0
    try:
        if w == 1 or n < 2:
            for i in range(n):
                results[i] = task(RandomStream(base_seed, i))
                done += 1
        else:
            with ProcessPoolExecutor(max_workers=w) as pool:
                futures = [pool.submit(_call, task, base_seed, i) for i in range(n)]
                for i, f in enumerate(futures):
                    results[i] = f.result()
                    done += 1
    except Exception as exc:  # noqa: BLE001 - any worker failure is reported uniformly
        raise PartialResultError(f"replicate {done} failed: {exc!r}", done) from exc
    try:
        arr = np.asarray(results, dtype=float)
        est = McEstimate.from_samples(arr, seed=base_seed) if arr.shape == (n,) else None
    except (TypeError, ValueError):
        est = None
    return results, est


# --- statistics ---------------------------------------------------------------

def hill_tail_estimator(samples, top_k: int) -> float:
    """Hill estimate of the tail index from the ``top_k`` largest samples."""
    x = np.asarray(samples, dtype=float)
    if x.size == 0:
        raise StatisticsError("no samples")
    if np.any(x <= 0):
        raise DomainError("Hill estimator needs positive samples")
    if not 1 <= top_k < x.size / 2:
        raise StatisticsError(f"top_k must lie in [1, n/2), got {top_k} for n={x.size}")
    top = np.sort(x)[-(top_k + 1):]
    return float(1.0 / np.mean(np.log(top[1:]) - np.log(top[0])))


def ks_statistic(samples, cdf):
    """One-sample Kolmogorov-Smirnov statistic and p-value."""
    x = np.asarray(samples, dtype=float)
    if x.size == 0:
        raise StatisticsError("no samples")
    res = stats.kstest(x, cdf)
    return float(res.statistic), float(res.pvalue)


def weighted_ks_2samp(x1, w1, x2, w2):
    """Two-sample KS with importance weights.

    The statistic is the sup distance between weighted empirical CDFs; the
    p-value uses the asymptotic Kolmogorov law with Kish effective sample
    sizes ``(Σw)^2 / Σw^2``.
    """
    x1, x2 = np.asarray(x1, float), np.asarray(x2, float)
    w1 = np.ones_like(x1) if w1 is None else np.asarray(w1, float)
    w2 = np.ones_like(x2) if w2 is None else np.asarray(w2, float)
    if x1.size == 0 or x2.size == 0:
        raise StatisticsError("empty sample")
    grid = np.sort(np.concatenate([x1, x2]))

    def ecdf(x, w):
        o = np.argsort(x)
        cw = np.concatenate([[0.0], np.cumsum(w[o])]) / w.sum()
        return cw[np.searchsorted(x[o], grid, side="right")]

    d = float(np.max(np.abs(ecdf(x1, w1) - ecdf(x2, w2))))
    n1 = w1.sum() ** 2 / np.sum(w1 ** 2)
    n2 = w2.sum() ** 2 / np.sum(w2 ** 2)
    en = math.sqrt(n1 * n2 / (n1 + n2))
    p = float(stats.kstwobign.sf(d * en))
    return d, p, (float(n1), float(n2))


def chi_square_gof(observed, expected_prob):
    """Pearson chi-square of counts against cell probabilities (renormalised)."""
    obs = np.asarray(observed, float).ravel()
    p = np.asarray(expected_prob, float).ravel()
    p = p / p.sum()
    exp = p * obs.sum()
    res = stats.chisquare(obs, exp)
    return float(res.statistic), float(res.pvalue)


# --- Cameron-Martin ------------------------------------------------------------

@dataclass
class CameronMartinResult:
    name: str
    lhs: McEstimate
    rhs: McEstimate
    joint_se: float
    shift_at_point: float = float("nan")
    shift_quadrature: float = float("nan")

    @property
    def agrees(self) -> bool:
        return abs(self.lhs.mean - self.rhs.mean) <= BAND * self.joint_se + 1e-15


def cameron_martin_check(t: float, functionals: dict, n: int, stream=0, kernel=None,
                         point: float = 0.3, step: float = 0.1):
    """Compare ``E[e^{Z - t/2} F(X)]`` with ``E[F(X + E[X(·)Z])]`` for ``Z = X_t(0)``.

    Both sides are computed from the same ``n`` samples of ``X_t`` on a grid
    containing 0 and ``point``; the joint SE uses paired differences.

    ``functionals`` maps a name to ``F(values, grid) -> array of length n``.
    """
    from .field import GridSpec, sample_field_batch
    from .kernel import SHRINKING, build_seed_kernel

    kernel = kernel or build_seed_kernel(1)
    grid = GridSpec.for_depth(1, 1.0, t)
    X, origin = sample_field_batch(kernel, grid, t, step, n, stream)
    X = X[0]
    ia = grid.anchor_index()
    Z = X[(slice(None),) + ia]
    shift = kernel.scales.layer_covariance_array(0.0, t, np.abs(grid.coords()), SHRINKING)
    tilt = np.exp(Z - 0.5 * t)
    shift_pt = float(shift[grid.nearest_index(point)])
    quad_pt = kernel.scales.layer_covariance(0.0, t, grid.coords()[grid.nearest_index(point)[0]])
    out = {}
    for name, F in functionals.items():
        lhs_s = tilt * F(X, grid)
        rhs_s = F(X + shift, grid)
        lhs, rhs = McEstimate.from_samples(lhs_s), McEstimate.from_samples(rhs_s)
        out[name] = CameronMartinResult(name, lhs, rhs, joint_stderr(lhs, rhs, lhs_s - rhs_s),
                                        shift_pt, quad_pt)
    return out


# --- reports ------------------------------------------------------------------------

@dataclass
class CriterionResult:
    test_id: str
    status: str  # pass | fail | skip
    observed: object
    expected: object
    tolerance: str
    runtime: float
    details: dict = field(default_factory=dict)

    def line(self) -> str:
        return (f"[{self.status.upper():4s}] {self.test_id}: observed={_short(self.observed)} "
                f"expected={_short(self.expected)} tol={self.tolerance} ({self.runtime:.1f}s)")


def _short(v):
    if isinstance(v, float):
        return f"{v:.6g}"
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_short(x) for x in v) + "]"
    if isinstance(v, dict):
        return "{" + ", ".join(f"{k}: {_short(x)}" for k, x in v.items()) + "}"
    return str(v)


@dataclass
class TestReport:
    __test__ = False  # not a pytest class

    entries: list = field(default_factory=list)
    config: dict = field(default_factory=dict)

    def add(self, result: CriterionResult):
        if any(e.test_id == result.test_id for e in self.entries):
            raise ConfigurationError(f"duplicate criterion {result.test_id}")
        self.entries.append(result)

    @property
    def all_passed(self) -> bool:
        return all(e.status != "fail" for e in self.entries)

    @property
    def exit_code(self) -> int:
        return 0 if self.all_passed else 1

    def to_text(self) -> str:
        lines = [e.line() for e in self.entries]
        n_pass = sum(e.status == "pass" for e in self.entries)
        lines.append(f"{n_pass}/{len(self.entries)} criteria passed")
        return "\n".join(lines)

    def to_json(self) -> str:
        return json.dumps({"config": self.config,
                           "entries": [_jsonable(asdict(e)) for e in self.entries]},
                          indent=2, sort_keys=True)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)
    return obj


def acceptance_suite(config=None) -> TestReport:
    """Run every acceptance criterion; see :mod:`gmclab.acceptance`."""
    from .acceptance import run_suite

    if config is not None and not isinstance(config, dict):
        raise ConfigurationError("config must be a mapping")
    if config == {}:
        raise ConfigurationError("empty config; pass None for the defaults")
    return run_suite(config)
