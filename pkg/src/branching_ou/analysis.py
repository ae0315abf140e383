"""Statistical confrontation of simulation output with the theory layer.

Experiments simulate replicated particle systems with the exact
per-generation sampler (Euler for the bounded-drift variant), reduce each
replicate to a small summary, and compare pooled statistics against closed
forms at fixed thresholds. All replicate randomness is keyed by
(replicate, generation, substep), so results are independent of chunking
and of the number of worker processes.

Statistical thresholds live in :data:`DEFAULT_THRESHOLDS`; they are chosen
so the full suite has family-wise false-failure probability well under 1%
at the documented replicate counts.
"""

from __future__ import annotations

import itertools
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import partial
from typing import Callable, Optional, Sequence, Union

import numpy as np
from scipy import stats

from . import theory
from .errors import ArgumentError
from .model import Bounded, Generation, Linear, ModelParams
from .simulate import RngStream, _drift_array, _exact_coefficients, _exact_update

__all__ = [
    "Box",
    "RectangleFamily",
    "StatLine",
    "ExperimentReport",
    "Thresholds",
    "DEFAULT_THRESHOLDS",
    "center_of_mass",
    "relative_positions",
    "empirical_measure",
    "support_radius",
    "slln_deviation",
    "covariance_by_class",
    "com_convergence_test",
    "escape_test",
    "relative_variance_test",
    "covariance_mrca_test",
    "slln_test",
    "delta_equivalence_test",
    "extinction_diagnostic",
    "extinction_test",
    "watanabe_scaling_test",
    "bounded_drift_test",
    "coordinate_cov_check",
    "independence_proxy_test",
    "occupation_stats",
    "spearman_trend_pvalue",
]


# ---------------------------------------------------------------------------
# Boxes and rectangle families
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Box:
    """Axis-aligned box with half-open faces [lo, hi) per axis."""

    lo: tuple[float, ...]
    hi: tuple[float, ...]

    def __post_init__(self):
        if len(self.lo) != len(self.hi):
            raise ArgumentError("box lo/hi dimensions differ")
        if not all(a < b for a, b in zip(self.lo, self.hi)):
            raise ArgumentError(f"box must satisfy lo < hi per axis: {self}")

    @property
    def d(self) -> int:
        return len(self.lo)

    def contains(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        inside = np.ones(pts.shape[0], dtype=bool)
        for k in range(self.d):
            inside &= (pts[:, k] >= self.lo[k]) & (pts[:, k] < self.hi[k])
        return inside


@dataclass(frozen=True)
class RectangleFamily:
    """Finite deterministic family of rational rectangles.

    The d=1 default is the unit-width windows [k/2, (k+2)/2) for
    k = -8..6 plus [-1, 1) and [-2, 2); d=2 takes the product grid of the
    windows plus the two centered squares.
    """

    d: int
    boxes: tuple[Box, ...]

    @classmethod
    def default(cls, d: int) -> "RectangleFamily":
        if d not in (1, 2):
            raise ArgumentError(f"default family defined for d in {{1, 2}}, got {d}")
        windows = [(k / 2.0, (k + 2) / 2.0) for k in range(-8, 7)]
        if d == 1:
            boxes = [Box((lo,), (hi,)) for lo, hi in windows]
            boxes += [Box((-1.0,), (1.0,)), Box((-2.0,), (2.0,))]
        else:
            boxes = [Box((a[0], b[0]), (a[1], b[1]))
                     for a in windows for b in windows]
            boxes += [Box((-1.0, -1.0), (1.0, 1.0)), Box((-2.0, -2.0), (2.0, 2.0))]
        return cls(d, tuple(boxes))


_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(64)
_MASS_CACHE: dict[tuple[float, float, float], float] = {}


def _marginal_mass(lo: float, hi: float, lam: float) -> float:
    """integral of sqrt(lam/pi) e^{-lam x^2} over [lo, hi], Gauss-Legendre."""
    key = (lo, hi, lam)
    if key not in _MASS_CACHE:
        mid, half = 0.5 * (hi + lo), 0.5 * (hi - lo)
        x = mid + half * _GL_NODES
        val = half * float(np.sum(_GL_WEIGHTS * np.exp(-lam * x * x)))
        _MASS_CACHE[key] = math.sqrt(lam / math.pi) * val
    return _MASS_CACHE[key]


def box_mass(box: Box, gamma_plus_b: float) -> float:
    """Limit-density mass of a box (product of marginal quadratures)."""
    out = 1.0
    for k in range(box.d):
        out *= _marginal_mass(box.lo[k], box.hi[k], gamma_plus_b)
    return out


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Thresholds:
    """Pass/fail thresholds for the verification suite, in one place."""

    z_max: float = 4.0
    ks_p_min: float = 1e-3
    chi2_confidence: float = 0.999
    slln_tol: float = 0.02
    slln_seed_fraction: float = 0.95
    escape_var_rel_tol: float = 0.05
    extinction_fraction: float = 0.95
    extinction_ratio_median: float = 0.01
    spearman_p_max: float = 0.01
    bounded_window: tuple[float, float] = (1.0, 2.0)


DEFAULT_THRESHOLDS = Thresholds()


@dataclass(frozen=True)
class StatLine:
    name: str
    observed: float
    theoretical: Optional[float]
    se: Optional[float]
    z: Optional[float]
    passed: bool


@dataclass
class ExperimentReport:
    experiment: str
    params: dict
    replicates: int
    statistics: list[StatLine] = field(default_factory=list)
    runtime_seconds: float = 0.0

    @property
    def passed(self) -> bool:
        return all(s.passed for s in self.statistics)


def _params_dict(params: ModelParams) -> dict:
    mode = "linear" if isinstance(params.drift_mode, Linear) else {
        "bounded": {"lower": params.drift_mode.lower,
                    "upper": params.drift_mode.upper,
                    "fn_id": params.drift_mode.fn_id}}
    out = {"d": params.d, "b": params.b, "gamma": params.gamma,
           "horizon_m": params.horizon_m, "drift_mode": mode, "seed": params.seed}
    if params.start is not None:
        out["start"] = list(params.start)
    return out


def _zline(name, observed, theoretical, se, z_max) -> StatLine:
    z = (observed - theoretical) / se if se > 0 else math.inf
    return StatLine(name, observed, theoretical, se, z, abs(z) <= z_max)


# ---------------------------------------------------------------------------
# Point estimators on single generations
# ---------------------------------------------------------------------------

def center_of_mass(g: Generation) -> np.ndarray:
    return g.positions.mean(axis=0)


def relative_positions(g: Generation) -> np.ndarray:
    """Positions as seen from the center of mass; columns sum to ~0."""
    return g.positions - g.positions.mean(axis=0, keepdims=True)


def empirical_measure(points: np.ndarray, box: Box) -> float:
    """Fraction of points inside a half-open box."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    return float(box.contains(pts).mean())


def support_radius(g: Generation) -> float:
    """Radius of the smallest origin-centered ball containing the relative
    system (max Euclidean norm of relative positions)."""
    rel = relative_positions(g)
    return float(np.sqrt((rel * rel).sum(axis=1)).max())


def slln_deviation(g: Generation, family: RectangleFamily,
                   gamma_plus_b: float) -> float:
    """Max over the family of |empirical mass - limit mass| for the
    relative system."""
    if gamma_plus_b <= 0:
        raise ArgumentError("slln deviation needs gamma + b > 0")
    rel = relative_positions(g)
    worst = 0.0
    for box in family.boxes:
        worst = max(worst, abs(empirical_measure(rel, box) - box_mass(box, gamma_plus_b)))
    return worst


# ---------------------------------------------------------------------------
# MRCA covariance classes
# ---------------------------------------------------------------------------

def _class_pair_stats(y: np.ndarray, a: int) -> tuple[np.ndarray, int]:
    """Per-replicate mean of Y_i * Y_j over the class-a pairs.

    y has shape (R, 2^m): first relative coordinate per particle. Class a
    groups the pairs whose positions last coincided at integer time a,
    i.e. split_time == a-1 in ancestry labels; class 0 is the root class
    (split_time == 0, same pairs as class 1). Pair sums are accumulated
    through subtree sums, one level at a time, in O(2^m) per replicate.
    """
    R, n = y.shape
    m = n.bit_length() - 1
    if n != 1 << m or m < 1:
        raise ArgumentError(f"need 2^m >= 2 particles, got {n}")
    s_target = max(a - 1, 0)
    if not (0 <= s_target <= m - 1):
        raise ArgumentError(f"class {a} is empty at generation {m}")
    sums = y
    for s in range(m - 1, -1, -1):  # split level of the pairs formed here
        left, right = sums[:, 0::2], sums[:, 1::2]
        if s == s_target:
            pair_means = (left * right).sum(axis=1) / (1 << (2 * m - s - 2))
            return pair_means, (1 << (2 * m - s - 2))
        sums = left + right
    raise AssertionError("unreachable")


def covariance_by_class(replicates: Union[Sequence[Generation], np.ndarray],
                        a: int, n_boot: int = 200,
                        boot_seed: int = 0xB007) -> tuple[float, float]:
    """Pooled sample covariance of class-a particle pairs and its
    replicate-level bootstrap standard error.

    Classes index the last integer time at which a pair's positions
    coincided; for a snapshot taken at integer time t the class-a estimate
    is comparable to ``theory.pair_covariance(t, a, gamma_eff)``. Class 0
    aliases the root class (all pairs from opposite halves of the tree),
    whose theory value differs from pair_covariance(t, 0) only by the
    vanishing e^{-2*g*t} * noise_covariance(0) term. Uses first
    coordinates; relative positions have exactly zero mean per replicate,
    so the pooled covariance is the pooled mean pair product.
    """
    if isinstance(replicates, np.ndarray):
        y = np.asarray(replicates, dtype=float)
        if y.ndim != 2:
            raise ArgumentError("replicate array must be (n_replicates, n_particles)")
    else:
        reps = list(replicates)
        if len(reps) < 2:
            raise ArgumentError("need at least 2 replicates")
        y = np.stack([relative_positions(g)[:, 0] for g in reps])
    if y.shape[0] < 2:
        raise ArgumentError("need at least 2 replicates")
    pair_means, _ = _class_pair_stats(y, a)
    estimate = float(pair_means.mean())
    rng = RngStream(boot_seed).generator()
    R = pair_means.shape[0]
    idx = rng.integers(0, R, size=(n_boot, R))
    boot = pair_means[idx].mean(axis=1)
    return estimate, float(boot.std(ddof=1))


# ---------------------------------------------------------------------------
# Batched replicate engines
# ---------------------------------------------------------------------------

def _stacked_normals(seed: int, rep_lo: int, rep_hi: int, generation: int,
                     substep: int, n: int, d: int) -> np.ndarray:
    """Per-replicate keyed noise block, stacked along the replicate axis."""
    return np.stack([
        RngStream(seed, replicate=r, generation=generation, substep=substep)
        .normals((n, d))
        for r in range(rep_lo, rep_hi)
    ])


def _exact_birth_states(params: ModelParams, horizon: int, rep_lo: int,
                        rep_hi: int, final_evolve: bool = False):
    """Yield (t, x) with x the (R, 2^t, d) birth positions at integer t.

    t = 0 is the initial state; t = 1..horizon follow each branching. With
    ``final_evolve`` the last generation is also evolved over its interval
    and yielded at t = horizon + 1 (without branching), matching the final
    snapshot of :func:`branching_ou.simulate.run`.
    """
    R, d = rep_hi - rep_lo, params.d
    coef = _exact_coefficients(params)
    start = params.start if params.start is not None else (0.0,) * d
    x = np.tile(np.asarray(start, dtype=float), (R, 1, 1))
    yield 0, x
    for m in range(horizon):
        xi = _stacked_normals(params.seed, rep_lo, rep_hi, m, 0, x.shape[1], d)
        x = np.repeat(_exact_update(x, xi, *coef), 2, axis=1)
        yield m + 1, x
    if final_evolve:
        xi = _stacked_normals(params.seed, rep_lo, rep_hi, horizon, 0, x.shape[1], d)
        yield horizon + 1, _exact_update(x, xi, *coef)


def _chunk_ranges(n_reps: int, horizon: int, d: int) -> list[tuple[int, int]]:
    # keep each chunk's largest state array near 32 MB
    per_rep = (1 << horizon) * d
    chunk = max(1, min(4096, (1 << 22) // max(per_rep, 1)))
    return [(lo, min(lo + chunk, n_reps)) for lo in range(0, n_reps, chunk)]


def _map_chunks(worker: Callable, n_reps: int, horizon: int, d: int,
                jobs: int = 1) -> list:
    """Run a picklable chunk worker over fixed replicate ranges.

    Chunk boundaries depend only on (n_reps, horizon, d), never on
    ``jobs``, and results are reduced in range order, so the output is
    identical for any worker count.
    """
    ranges = _chunk_ranges(n_reps, horizon, d)
    if jobs <= 1 or len(ranges) == 1:
        return [worker(lo, hi) for lo, hi in ranges]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(worker, *zip(*ranges)))


def _com_chunk(params: ModelParams, m: int, lo: int, hi: int) -> np.ndarray:
    for t, x in _exact_birth_states(params, m, lo, hi):
        if t == m:
            return x.mean(axis=1)  # (R, d)
    raise AssertionError


def _y1_chunk(params: ModelParams, m: int, lo: int, hi: int) -> np.ndarray:
    """First relative coordinate of particle 1 at integer time m."""
    for t, x in _exact_birth_states(params, m, lo, hi):
        if t == m:
            return x[:, 0, 0] - x[:, :, 0].mean(axis=1)
    raise AssertionError


def _pair_chunk(params: ModelParams, m: int, classes: tuple[int, ...],
                lo: int, hi: int) -> np.ndarray:
    for t, x in _exact_birth_states(params, m, lo, hi):
        if t == m:
            y = x[:, :, 0] - x[:, :, 0].mean(axis=1, keepdims=True)
            return np.stack([_class_pair_stats(y, a)[0] for a in classes], axis=1)
    raise AssertionError


def _final_state_chunk(params: ModelParams, m: int, radius: float,
                       lo: int, hi: int) -> np.ndarray:
    """(R, 3): unit-ball count, support radius, |COM| at the evolved final
    state of a horizon-m run."""
    for t, x in _exact_birth_states(params, m, lo, hi, final_evolve=True):
        if t == m + 1:
            com = x.mean(axis=1, keepdims=True)
            rel = x - com
            dist2 = (x * x).sum(axis=2)
            count = (dist2 < radius * radius).sum(axis=1)
            rad = np.sqrt((rel * rel).sum(axis=2)).max(axis=1)
            com_norm = np.sqrt((com[:, 0, :] ** 2).sum(axis=1))
            return np.stack([count.astype(float), rad, com_norm], axis=1)
    raise AssertionError


def _mass_trajectory_chunk(params: ModelParams, n_values: tuple[int, ...],
                           box: Box, lo: int, hi: int) -> np.ndarray:
    """(R, len(n_values)) global-system counts in the box at births."""
    out = np.zeros((hi - lo, len(n_values)))
    lookup = {n: k for k, n in enumerate(n_values)}
    for t, x in _exact_birth_states(params, max(n_values), lo, hi):
        if t in lookup:
            inside = np.ones(x.shape[:2], dtype=bool)
            for axis in range(box.d):
                inside &= (x[:, :, axis] >= box.lo[axis]) & (x[:, :, axis] < box.hi[axis])
            out[:, lookup[t]] = inside.sum(axis=1)
    return out


def _euler_com_chunk(params: ModelParams, m: int, h: float,
                     lo: int, hi: int) -> np.ndarray:
    """Final-time center of mass (R, d) under Euler stepping, horizon m
    branchings measured at integer time m (births)."""
    R, d = hi - lo, params.d
    substeps = int(round(1.0 / h))
    start = params.start if params.start is not None else (0.0,) * d
    x = np.tile(np.asarray(start, dtype=float), (R, 1, 1))
    sqrt_h = math.sqrt(h)
    for gen in range(m):
        for k in range(substeps):
            xi = _stacked_normals(params.seed, lo, hi, gen, k, x.shape[1], d)
            x = x + _drift_array(x, params) * h + sqrt_h * xi
        x = np.repeat(x, 2, axis=1)
    return x.mean(axis=1)


# ---------------------------------------------------------------------------
# Experiments
# ---------------------------------------------------------------------------

def _finish(report: ExperimentReport, t0: float) -> ExperimentReport:
    report.runtime_seconds = round(time.perf_counter() - t0, 3)
    return report


def com_convergence_test(params: ModelParams, n_reps: int, m: int, jobs: int = 1,
                         thresholds: Thresholds = DEFAULT_THRESHOLDS) -> ExperimentReport:
    """Inward drift: Var(Zbar_m) against e^{-2bm} s(m), mean against 0."""
    if params.b <= 0:
        raise ArgumentError("com_convergence_test requires b > 0")
    t0 = time.perf_counter()
    com = np.concatenate(_map_chunks(partial(_com_chunk, params, m),
                                     n_reps, m, params.d, jobs))[:, 0]
    var_theory = math.exp(-2 * params.b * m) * theory.com_time_change(m, params.b)
    rep = ExperimentReport("com_inward", _params_dict(params), n_reps)
    rep.statistics.append(_chi2_var_line("var(com)", com, var_theory, thresholds))
    se_mean = com.std(ddof=1) / math.sqrt(n_reps)
    rep.statistics.append(_zline("mean(com)", float(com.mean()), 0.0, se_mean,
                                 thresholds.z_max))
    return _finish(rep, t0)


def _chi2_var_line(name: str, samples: np.ndarray, var_theory: float,
                   thresholds: Thresholds) -> StatLine:
    n = samples.size
    s2 = float(samples.var(ddof=1))
    alpha = 1.0 - thresholds.chi2_confidence
    lo = stats.chi2.ppf(alpha / 2, n - 1) / (n - 1)
    hi = stats.chi2.ppf(1 - alpha / 2, n - 1) / (n - 1)
    se = var_theory * math.sqrt(2.0 / (n - 1))
    z = (s2 - var_theory) / se if se > 0 else math.inf
    return StatLine(name, s2, var_theory, se, z,
                    var_theory * lo <= s2 <= var_theory * hi)


def escape_test(params: ModelParams, n_reps: int, m: int, jobs: int = 1,
                thresholds: Thresholds = DEFAULT_THRESHOLDS) -> ExperimentReport:
    """Outward drift: variance of e^{bm} Zbar_m against the terminal
    variance, plus a moment test of Gaussianity."""
    if params.b >= 0:
        raise ArgumentError("escape_test requires b < 0")
    t0 = time.perf_counter()
    com = np.concatenate(_map_chunks(partial(_com_chunk, params, m),
                                     n_reps, m, params.d, jobs))[:, 0]
    scaled = math.exp(params.b * m) * com
    tvar = theory.terminal_variance(params.b)
    s2 = float(scaled.var(ddof=1))
    rel_err = abs(s2 - tvar) / tvar
    rep = ExperimentReport("com_escape", _params_dict(params), n_reps)
    rep.statistics.append(StatLine("var(scaled com)", s2, tvar,
                                   tvar * math.sqrt(2.0 / (n_reps - 1)),
                                   (s2 - tvar) / (tvar * math.sqrt(2.0 / (n_reps - 1))),
                                   rel_err <= thresholds.escape_var_rel_tol))
    centered = scaled - scaled.mean()
    m2 = float(np.mean(centered**2))
    kurt = float(np.mean(centered**4) / m2**2 - 3.0)
    se_k = math.sqrt(24.0 / n_reps)
    rep.statistics.append(_zline("excess kurtosis", kurt, 0.0, se_k, thresholds.z_max))
    return _finish(rep, t0)


def relative_variance_test(params: ModelParams, n_reps: int, m_values: Sequence[int],
                           jobs: int = 1,
                           thresholds: Thresholds = DEFAULT_THRESHOLDS) -> ExperimentReport:
    """Var of a tagged relative particle at integer times against the
    recursion values, chi-square band."""
    t0 = time.perf_counter()
    rep = ExperimentReport("relative_variance", _params_dict(params), n_reps)
    lam = params.gamma_eff
    for m in sorted(m_values):
        y1 = np.concatenate(_map_chunks(partial(_y1_chunk, params, m),
                                        n_reps, m, params.d, jobs))
        rep.statistics.append(_chi2_var_line(
            f"var(Y1) at m={m}", y1, theory.relative_variance(m, lam), thresholds))
    return _finish(rep, t0)


def covariance_mrca_test(params: ModelParams, n_reps: int, m: int,
                         classes: Sequence[int] = (0, 3, 5), jobs: int = 1,
                         bound_constant: float = 10.0,
                         thresholds: Thresholds = DEFAULT_THRESHOLDS) -> ExperimentReport:
    """Class covariances at integer time m against pair_covariance, plus
    the theory-side envelope check with the frozen constant."""
    t0 = time.perf_counter()
    classes = tuple(classes)
    pm = np.concatenate(_map_chunks(partial(_pair_chunk, params, m, classes),
                                    n_reps, m, params.d, jobs))
    lam = params.gamma_eff
    rep = ExperimentReport("covariance_mrca", _params_dict(params), n_reps)
    boot_rng = RngStream(0xB007).generator()
    boot_means = np.zeros((200, len(classes)))
    for i in range(200):
        idx = boot_rng.integers(0, n_reps, size=n_reps)
        boot_means[i] = pm[idx].mean(axis=0)
    for k, a in enumerate(classes):
        est = float(pm[:, k].mean())
        se = float(boot_means[:, k].std(ddof=1))
        rep.statistics.append(_zline(f"cov class a={a}", est,
                                     theory.pair_covariance(m, a, lam), se,
                                     thresholds.z_max))
    ok = all(
        abs(theory.pair_covariance(mm, a, lam))
        <= theory.covariance_bound(mm, a, lam, bound_constant)
        for mm in range(1, 21) for a in range(mm))
    rep.statistics.append(StatLine(f"bound C*={bound_constant} (m<=20)",
                                   float(ok), 1.0, None, None, ok))
    return _finish(rep, t0)


def slln_test(params: ModelParams, n_seeds: int = 100, m: int = 13, jobs: int = 1,
              family: Optional[RectangleFamily] = None,
              thresholds: Thresholds = DEFAULT_THRESHOLDS) -> ExperimentReport:
    """Empirical-measure deviation over the rectangle family across seeds.

    Each seed is one run to generation m, measured at the end of its unit
    interval; the criterion is the fraction of seeds whose max deviation
    stays within the pilot-calibrated tolerance.
    """
    if params.gamma_eff <= 0:
        raise ArgumentError("slln_test requires gamma + b > 0")
    t0 = time.perf_counter()
    fam = family or RectangleFamily.default(params.d)
    worker = _SLLNChunk(params, m, fam)
    # seeds are independent runs; chunk on seed index
    ranges = [(lo, min(lo + 10, n_seeds)) for lo in range(0, n_seeds, 10)]
    if jobs <= 1:
        chunks = [worker(lo, hi) for lo, hi in ranges]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            chunks = list(pool.map(worker, *zip(*ranges)))
    devs = np.concatenate(chunks)
    frac = float(np.mean(devs <= thresholds.slln_tol))
    rep = ExperimentReport("slln", _params_dict(params), n_seeds)
    rep.statistics.append(StatLine(
        f"fraction of seeds with deviation <= {thresholds.slln_tol}", frac,
        thresholds.slln_seed_fraction, None, None,
        frac >= thresholds.slln_seed_fraction))
    rep.statistics.append(StatLine("max deviation", float(devs.max()), None,
                                   None, None, True))
    return _finish(rep, t0)


class _SLLNChunk:
    """Picklable stand-in for the slln chunk closure."""

    def __init__(self, params: ModelParams, m: int, family: RectangleFamily):
        self.params, self.m, self.family = params, m, family

    def __call__(self, lo: int, hi: int) -> np.ndarray:
        devs = np.zeros(hi - lo)
        for r in range(lo, hi):
            p = ModelParams(d=self.params.d, b=self.params.b, gamma=self.params.gamma,
                            horizon_m=self.m, seed=self.params.seed + r)
            for t, x in _exact_birth_states(p, self.m, 0, 1, final_evolve=True):
                if t == self.m + 1:
                    g = Generation(self.m, self.m + 1, x[0])
                    devs[r - lo] = slln_deviation(g, self.family, self.params.gamma_eff)
        return devs


def delta_equivalence_test(p1: ModelParams, p2: ModelParams, m: int, n_reps: int,
                           jobs: int = 1,
                           thresholds: Thresholds = DEFAULT_THRESHOLDS) -> ExperimentReport:
    """Two systems with equal gamma + b: compare the relative marginal of
    particle 1 at time m by a two-sample KS test and first two moments."""
    if p1.gamma + p1.b != p2.gamma + p2.b:
        raise ArgumentError(
            "delta equivalence requires gamma1 + b1 == gamma2 + b2; "
            f"got {p1.gamma + p1.b} and {p2.gamma + p2.b}")
    t0 = time.perf_counter()
    # system 2 draws from a disjoint replicate range for independent samples
    p2_shifted = ModelParams(d=p2.d, b=p2.b, gamma=p2.gamma, horizon_m=p2.horizon_m,
                             seed=p2.seed + 0x5EED, start=p2.start)
    y1 = np.concatenate(_map_chunks(partial(_y1_chunk, p1, m), n_reps, m, p1.d, jobs))
    y2 = np.concatenate(_map_chunks(partial(_y1_chunk, p2_shifted, m),
                                    n_reps, m, p2.d, jobs))
    ks = stats.ks_2samp(y1, y2)
    rep = ExperimentReport("delta_equiv", {"system1": _params_dict(p1),
                                           "system2": _params_dict(p2)}, n_reps)
    rep.statistics.append(StatLine("KS p-value", float(ks.pvalue), None, None, None,
                                   ks.pvalue > thresholds.ks_p_min))
    se_mean = math.sqrt(y1.var(ddof=1) / n_reps + y2.var(ddof=1) / n_reps)
    rep.statistics.append(_zline("mean difference", float(y1.mean() - y2.mean()),
                                 0.0, se_mean, thresholds.z_max))
    v1, v2 = y1.var(ddof=1), y2.var(ddof=1)
    se_var = math.sqrt(2.0 / (n_reps - 1)) * math.sqrt((v1**2 + v2**2) / 2.0)
    rep.statistics.append(_zline("variance difference", float(v1 - v2), 0.0,
                                 se_var, thresholds.z_max))
    return _finish(rep, t0)


def extinction_diagnostic(replicates: Sequence[Generation],
                          ball_radius: float) -> tuple[float, np.ndarray]:
    """Fraction of replicates with an empty centered ball, and the
    per-replicate ratio support_radius / |center of mass|."""
    reps = list(replicates)
    if not reps:
        raise ArgumentError("need at least one replicate")
    empty = 0
    ratios = np.zeros(len(reps))
    for k, g in enumerate(reps):
        dist = np.sqrt((g.positions**2).sum(axis=1))
        if not np.any(dist < ball_radius):
            empty += 1
        com_norm = float(np.sqrt((center_of_mass(g)**2).sum()))
        ratios[k] = support_radius(g) / com_norm if com_norm > 0 else math.inf
    return empty / len(reps), ratios


def extinction_test(params: ModelParams, n_reps: int, m: int,
                    ball_radius: float = 1.0, jobs: int = 1,
                    thresholds: Thresholds = DEFAULT_THRESHOLDS) -> ExperimentReport:
    """Case-4 check: the centered unit ball empties while the relative
    support stays negligible next to the escaping center of mass."""
    t0 = time.perf_counter()
    summ = np.concatenate(_map_chunks(partial(_final_state_chunk, params, m, ball_radius),
                                      n_reps, m, params.d, jobs))
    frac_empty = float(np.mean(summ[:, 0] == 0))
    ratio_median = float(np.median(summ[:, 1] / summ[:, 2]))
    rep = ExperimentReport("case4_extinction", _params_dict(params), n_reps)
    rep.statistics.append(StatLine("fraction with empty unit ball", frac_empty,
                                   thresholds.extinction_fraction, None, None,
                                   frac_empty >= thresholds.extinction_fraction))
    rep.statistics.append(StatLine("median support/|com| ratio", ratio_median,
                                   thresholds.extinction_ratio_median, None, None,
                                   ratio_median < thresholds.extinction_ratio_median))
    return _finish(rep, t0)


def spearman_trend_pvalue(values: Sequence[float]) -> tuple[float, float]:
    """Exact one-sided Spearman test for a decreasing trend.

    Returns (rho, p) where p is the exact permutation probability of a
    rank correlation at most as negative as observed. Intended for short
    sequences (n <= 8; the permutation count is n!).
    """
    v = np.asarray(values, dtype=float)
    n = v.size
    if n < 3 or n > 8:
        raise ArgumentError(f"exact trend test supports 3..8 points, got {n}")
    ranks = stats.rankdata(v)
    pos = np.arange(1, n + 1)

    def rho_of(r):
        return float(np.corrcoef(pos, r)[0, 1])

    observed = rho_of(ranks)
    count = sum(1 for perm in itertools.permutations(ranks)
                if rho_of(np.array(perm)) <= observed + 1e-12)
    return observed, count / math.factorial(n)


def watanabe_scaling_test(params: ModelParams, n_reps: int,
                          m_range: Sequence[int] = tuple(range(8, 15)),
                          box: Optional[Box] = None, jobs: int = 1,
                          thresholds: Thresholds = DEFAULT_THRESHOLDS) -> ExperimentReport:
    """Critical-regime trend check: the scaled box occupation drifts
    toward the Lebesgue volume. Soft criterion by design; convergence is
    far too slow for a tight desk-scale reproduction."""
    if params.gamma_eff != 0 or params.b <= 0:
        raise ArgumentError("watanabe scaling requires gamma + b == 0 with b > 0")
    t0 = time.perf_counter()
    box = box or Box((-1.0,) * params.d, (1.0,) * params.d)
    n_values = tuple(sorted(m_range))
    masses = np.concatenate(_map_chunks(
        partial(_mass_trajectory_chunk, params, n_values, box),
        n_reps, max(n_values), params.d, jobs))
    target = float(np.prod(np.asarray(box.hi) - np.asarray(box.lo)))
    rep = ExperimentReport("case2_watanabe", _params_dict(params), n_reps)
    dists = []
    for k, n in enumerate(n_values):
        scaled = theory.watanabe_scale(n, params.d) * float(masses[:, k].mean())
        dists.append(abs(scaled - target))
        rep.statistics.append(StatLine(f"scaled mass at n={n}", scaled, target,
                                       None, None, True))
    rho, p = spearman_trend_pvalue(dists)
    rep.statistics.append(StatLine("trend p-value (decreasing distance)", p,
                                   thresholds.spearman_p_max, None, None,
                                   p < thresholds.spearman_p_max))
    return _finish(rep, t0)


def bounded_drift_test(params: ModelParams, n_reps: int, m: int = 20,
                       h: float = 2.0**-3, jobs: int = 1,
                       thresholds: Thresholds = DEFAULT_THRESHOLDS) -> ExperimentReport:
    """Sandwich check for drift bounded in (lower, upper): asserts every
    replicate's Zbar_m / m falls inside the acceptance window."""
    if not isinstance(params.drift_mode, Bounded):
        raise ArgumentError("bounded_drift_test requires Bounded drift mode")
    t0 = time.perf_counter()
    com = np.concatenate(_map_chunks(partial(_euler_com_chunk, params, m, h),
                                     n_reps, m, params.d, jobs))
    ratio = com / m
    lo, hi = thresholds.bounded_window
    inside = np.all((ratio > lo) & (ratio < hi), axis=1)
    frac = float(inside.mean())
    rep = ExperimentReport("bounded_drift", _params_dict(params), n_reps)
    rep.statistics.append(StatLine(
        f"fraction of replicates with com/m in ({lo}, {hi})", frac, 1.0,
        None, None, frac == 1.0))
    rep.statistics.append(StatLine("min com/m", float(ratio.min()), lo, None, None,
                                   bool(ratio.min() > lo)))
    rep.statistics.append(StatLine("max com/m", float(ratio.max()), hi, None, None,
                                   bool(ratio.max() < hi)))
    return _finish(rep, t0)


def coordinate_cov_check(x: np.ndarray, y: np.ndarray, box: Box,
                         thresholds: Thresholds = DEFAULT_THRESHOLDS) -> ExperimentReport:
    """Check |Cov(1_B(X), 1_B(Y))| <= sum_i |Cov(1_Bi(Xi), 1_Bi(Yi))| on
    samples whose coordinate pairs are independent by construction."""
    t0 = time.perf_counter()
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 2 or x.shape[1] != box.d:
        raise ArgumentError("need matching (n, d) sample arrays for the box dimension")
    n = x.shape[0]
    in_x = box.contains(x).astype(float)
    in_y = box.contains(y).astype(float)
    lhs = float(np.cov(in_x, in_y)[0, 1])
    rhs = 0.0
    for k in range(box.d):
        xk = ((x[:, k] >= box.lo[k]) & (x[:, k] < box.hi[k])).astype(float)
        yk = ((y[:, k] >= box.lo[k]) & (y[:, k] < box.hi[k])).astype(float)
        rhs += abs(float(np.cov(xk, yk)[0, 1]))
    # indicator covariances have SE of order 1/sqrt(n); combine crudely
    se = (1.0 + box.d) / math.sqrt(n)
    passed = abs(lhs) <= rhs + thresholds.z_max * se
    rep = ExperimentReport("coordinate_cov", {"box": [list(box.lo), list(box.hi)],
                                              "n": n}, n)
    rep.statistics.append(StatLine("|lhs| - rhs", abs(lhs) - rhs, 0.0, se,
                                   (abs(lhs) - rhs) / se, passed))
    return _finish(rep, t0)


def independence_proxy_test(params: ModelParams, n_reps: int, m: int,
                            box: Optional[Box] = None, jobs: int = 1,
                            thresholds: Thresholds = DEFAULT_THRESHOLDS) -> ExperimentReport:
    """Correlation-zero proxy for the independence of the center of mass
    and the relative system: sample correlation between the (scaled)
    center of mass and the relative occupation of a fixed box."""
    t0 = time.perf_counter()
    box = box or Box((-1.0,) * params.d, (1.0,) * params.d)

    worker = partial(_indep_chunk, params, m, box)
    pairs = np.concatenate(_map_chunks(worker, n_reps, m, params.d, jobs))
    corr = float(np.corrcoef(pairs[:, 0], pairs[:, 1])[0, 1])
    se = 1.0 / math.sqrt(n_reps)
    rep = ExperimentReport("independence_proxy", _params_dict(params), n_reps)
    rep.statistics.append(_zline("corr(com functional, relative occupation)",
                                 corr, 0.0, se, thresholds.z_max))
    return _finish(rep, t0)


def _indep_chunk(params: ModelParams, m: int, box: Box,
                 lo: int, hi: int) -> np.ndarray:
    for t, x in _exact_birth_states(params, m, lo, hi):
        if t == m:
            com = x.mean(axis=1)
            rel = x - x.mean(axis=1, keepdims=True)
            inside = np.ones(x.shape[:2], dtype=bool)
            for axis in range(box.d):
                inside &= (rel[:, :, axis] >= box.lo[axis]) & (rel[:, :, axis] < box.hi[axis])
            scale = math.exp(params.b * m) if params.b < 0 else 1.0
            return np.stack([scale * com[:, 0], inside.mean(axis=1)], axis=1)
    raise AssertionError


def occupation_stats(params: ModelParams, n_reps: int, m: int,
                     box: Optional[Box] = None, jobs: int = 1) -> dict:
    """Per-cell occupation summary for exploratory sweeps.

    Reports the mean box count at the final generation, the fraction of
    replicates with a non-empty box, and the fitted exponential rate of
    the mean count over the last generations, next to the conjectured rate
    log 2 - d |gamma + b| for the critical competition.
    """
    box = box or Box((-1.0,) * params.d, (1.0,) * params.d)
    n_values = tuple(range(max(1, m - 5), m + 1))
    masses = np.concatenate(_map_chunks(
        partial(_mass_trajectory_chunk, params, n_values, box),
        n_reps, m, params.d, jobs))
    means = masses.mean(axis=0)
    with np.errstate(divide="ignore"):
        logs = np.log(means)
    valid = np.isfinite(logs)
    if valid.sum() >= 2:
        slope = float(np.polyfit(np.array(n_values)[valid], logs[valid], 1)[0])
    else:
        slope = -math.inf
    return {
        "b": params.b, "gamma": params.gamma, "d": params.d,
        "replicates": n_reps, "horizon_m": m,
        "box_count_mean_final": float(means[-1]),
        "box_occupied_fraction_final": float(np.mean(masses[:, -1] > 0)),
        "log_occupation_slope": slope,
        "conjectured_slope": math.log(2.0) - params.d * abs(params.gamma_eff),
    }
