"""Closed-form quantities for the branching O-U system.

Every simulation experiment in :mod:`branching_ou.analysis` is tested
against the values computed here. Removable singularities (b = 0,
gamma_eff = 0, e^{2*gamma} = 2) are evaluated by their limits; a series
switch below |lambda| = 1e-6 avoids catastrophic cancellation.

Generation indexing: ``relative_variance(m, g)`` is the variance of a
particle's position relative to the center of mass at integer time m,
starting from variance 0 at time 0. The geometric closed form
(``relative_variance_closed``) is stated for index m+1; the two paths are
cross-checked to 1e-12 relative in the test suite.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
import numpy as np
from scipy import integrate

from .errors import ArgumentError, DomainError, NumericalError
from .model import ModelParams

__all__ = [
    "TheoryValue",
    "unit_ou_variance",
    "com_time_change",
    "terminal_variance",
    "relative_variance",
    "relative_variance_closed",
    "noise_covariance",
    "pair_covariance",
    "covariance_bound",
    "limit_density",
    "watanabe_scale",
    "indicator_cov_gaussian",
    "delta_transform",
]


@dataclass(frozen=True)
class TheoryValue:
    """A closed-form scalar plus provenance of how it was evaluated."""

    value: float
    formula_id: str
    singular_handled: bool = False


_SERIES_SWITCH = 1e-6


def unit_ou_variance(lam: float) -> float:
    """(1 - e^{-2*lam}) / (2*lam), the unit-time O-U transition variance.

    Defined by its limit (= 1) at lam = 0; valid for either sign of lam.
    """
    if abs(lam) < _SERIES_SWITCH:
        # 1 - lam + (2/3) lam^2 - (1/3) lam^3, relative error O(lam^4)
        return 1.0 + lam * (-1.0 + lam * (2.0 / 3.0 - lam / 3.0))
    return -math.expm1(-2.0 * lam) / (2.0 * lam)


def _exp_gain_variance(lam: float) -> tuple[float, float]:
    """One-interval decay factor and noise variance for drift parameter lam."""
    return math.exp(-lam), unit_ou_variance(lam)


def com_time_change(t: float, b: float) -> float:
    """Accumulated quadratic variation s(t) of the rescaled center of mass.

    s(t) = integral of 2^{-floor(s)} e^{2bs} ds over [0, t]; equals the
    variance of e^{bt} Zbar_t. The b = 0 case is the limit
    sum of 2^{-m} * interval lengths.
    """
    if t < 0:
        raise DomainError(f"time must be >= 0, got {t}")
    M = int(math.floor(t))
    if abs(b) < _SERIES_SWITCH and b != 0.0:
        # below the switch the exact expression loses relative accuracy;
        # the limit form is correct to O(b * t)
        return com_time_change(t, 0.0)
    if b == 0.0:
        full = 2.0 * (1.0 - 2.0**-M)
        return full + 2.0**-M * (t - M)
    total = 0.0
    for m in range(M):
        total += 2.0**-m * math.exp(2 * b * m) * math.expm1(2 * b) / (2 * b)
    if t > M:
        total += 2.0**-M * math.exp(2 * b * M) * math.expm1(2 * b * (t - M)) / (2 * b)
    return total


def terminal_variance(b: float) -> float:
    """T(b) = (1 - e^{2b}) / (|b| (2 - e^{2b})), the variance of the almost
    sure limit of e^{bt} Zbar_t for outward drift b < 0.

    Tends to 2 as b -> 0-, matching the driftless system.
    """
    if b >= 0:
        raise DomainError(f"terminal variance requires b < 0, got {b}")
    return -math.expm1(2 * b) / (abs(b) * (2.0 - math.exp(2 * b)))


def relative_variance(m: int, gamma_eff: float) -> float:
    """Variance a_m of a relative particle coordinate at integer time m.

    Canonical evaluation path: the recursion
    a_{k+1} = e^{-2g} (a_k + b_k), b_k = (1 - 2^{-k}) (e^{2g}-1)/(2g),
    with a_0 = 0; it has no singular parameters (b_k -> 1 - 2^{-k} as
    g -> 0). Converges to 1/(2g) for g > 0.
    """
    if m < 0:
        raise ArgumentError(f"generation must be >= 0, got {m}")
    g = gamma_eff
    decay = math.exp(-2.0 * g)
    v1 = unit_ou_variance(g)  # e^{-2g} (e^{2g}-1)/(2g) == (1-e^{-2g})/(2g)
    a = 0.0
    for k in range(m):
        a = decay * a + (1.0 - 2.0**-k) * v1
    return a


def relative_variance_closed(m: int, gamma_eff: float) -> TheoryValue:
    """Geometric-sum closed form for a_{m+1} (this function indexes by m).

    Requires gamma_eff > 0. Two removable singularities are handled: the
    ratio e^{2g}/2 = 1 (g = ln2 / 2), where the second geometric sum
    degenerates to m terms of equal size, and overflow for large m*g,
    avoided by keeping every term in decayed form.
    """
    if m < 1:
        raise ArgumentError(f"closed form needs m >= 1, got {m}")
    g = float(gamma_eff)
    if g <= 0:
        raise DomainError(f"closed form requires gamma_eff > 0, got {g}")
    e2g = math.exp(2 * g)
    # sum_{n=1}^{m} e^{-2g(m-n)} = (1 - e^{-2gm})/(1 - e^{-2g})
    term1 = -math.expm1(-2 * g * m) / -math.expm1(-2 * g)
    r = e2g / 2.0
    singular = abs(r - 1.0) < 1e-9
    if singular:
        # e^{-2gm} sum r^n -> m e^{-2gm} at r = 1; keep exact-sum form near it
        term2 = sum(math.exp(-2 * g * (m - n)) * 2.0**-n for n in range(1, m + 1))
    else:
        # e^{-2gm} * r (r^m - 1)/(r - 1) = (r/(r-1)) (2^{-m} - e^{-2gm})
        term2 = (r / (r - 1.0)) * (2.0**-m - math.exp(-2 * g * m))
    pref = -math.expm1(-2 * g) / (2 * g)  # (1 - e^{-2g})/(2g)
    return TheoryValue(pref * (term1 - term2), "relative_variance_closed",
                       singular_handled=singular)


def noise_covariance(n: int, gamma_eff: float) -> float:
    """Cross-covariance -2^{-n} (e^{2g}-1)/(2g) of the per-interval noises
    of two distinct particles in generation n (limit -2^{-n} at g = 0)."""
    if n < 0:
        raise ArgumentError(f"generation must be >= 0, got {n}")
    g = gamma_eff
    if abs(g) < _SERIES_SWITCH:
        growth = 1.0 + g * (1.0 + (2.0 / 3.0) * g)  # (e^{2g}-1)/(2g) series
    else:
        growth = math.expm1(2 * g) / (2 * g)
    return -(2.0**-n) * growth


def pair_covariance(m: int, a: int, gamma_eff: float) -> float:
    """Covariance of two relative-particle coordinates at integer time m
    whose positions last coincided at time a.

    e^{-2g(m-a)} a_a + sum_{k=a}^{m-1} e^{-2g(m-k)} noise_covariance(k).
    Under the ancestry labels of :func:`branching_ou.model.split_time`,
    such a pair has split_time a-1 (the pair separates, as distinct
    particles, at the start of interval [a, a+1)).
    """
    if m < 1 or not (0 <= a <= m - 1):
        raise ArgumentError(f"need m >= 1 and 0 <= a <= m-1, got m={m}, a={a}")
    g = gamma_eff
    total = math.exp(-2 * g * (m - a)) * relative_variance(a, g)
    for k in range(a, m):
        total += math.exp(-2 * g * (m - k)) * noise_covariance(k, g)
    return total


def covariance_bound(m: int, a: int, gamma_eff: float, C: float) -> float:
    """Envelope C * m * (e^{-2g(m-a)} + 2^{-m}) dominating |pair_covariance|."""
    if m < 1 or not (0 <= a <= m - 1):
        raise ArgumentError(f"need m >= 1 and 0 <= a <= m-1, got m={m}, a={a}")
    if C <= 0:
        raise ArgumentError(f"constant must be positive, got {C}")
    return C * m * (math.exp(-2 * gamma_eff * (m - a)) + 2.0**-m)


def limit_density(y, gamma_plus_b: float, d: int) -> float:
    """Limit density ((g+b)/pi)^{d/2} exp(-(g+b) |y|^2) of the normalized
    empirical measure, i.e. the N(0, 1/(2(g+b)) I_d) density."""
    lam = gamma_plus_b
    if lam <= 0:
        raise DomainError(f"limit density requires gamma + b > 0, got {lam}")
    y = np.asarray(y, dtype=float).reshape(-1)
    if y.size != d:
        raise ArgumentError(f"point has {y.size} coordinates for dimension {d}")
    return (lam / math.pi) ** (d / 2.0) * math.exp(-lam * float(y @ y))


def watanabe_scale(n: int, d: int) -> float:
    """Critical-regime normalization (2*pi)^{d/2} n^{d/2} 2^{-n}."""
    if n < 1:
        raise ArgumentError(f"need n >= 1, got {n}")
    if d < 1:
        raise ArgumentError(f"need d >= 1, got {d}")
    return (2.0 * math.pi) ** (d / 2.0) * float(n) ** (d / 2.0) * 2.0**-n


def _bivariate_density_diff(x: float, y: float, rho: float, sig2: float) -> float:
    """Joint minus product-of-marginals density, marginal variance sig2,
    covariance rho (standard sign convention: positive rho, positive
    association)."""
    det = sig2 * sig2 - rho * rho
    quad = (sig2 * (x * x + y * y) - 2.0 * rho * x * y) / (2.0 * det)
    joint = math.exp(-quad) / (2.0 * math.pi * math.sqrt(det))
    marg = math.exp(-(x * x + y * y) / (2.0 * sig2)) / (2.0 * math.pi * sig2)
    return joint - marg


def indicator_cov_gaussian(rho: float, sigma_sq: float, B: tuple[float, float]) -> float:
    """Cov(1_B(X), 1_B(Y)) for (X, Y) bivariate normal with marginal
    variance sigma_sq and covariance rho, by adaptive 2-D quadrature of the
    density difference over B x B (absolute tolerance 1e-8).

    |rho| = sigma_sq (perfect correlation) is handled exactly via the 1-D
    marginal; |rho| > sigma_sq is not a valid covariance.
    """
    if sigma_sq <= 0:
        raise DomainError(f"marginal variance must be positive, got {sigma_sq}")
    if abs(rho) > sigma_sq:
        raise DomainError(f"|rho| = {abs(rho)} exceeds marginal variance {sigma_sq}")
    lo, hi = float(B[0]), float(B[1])
    if hi <= lo:
        raise ArgumentError(f"interval must satisfy lo < hi, got {B}")
    sig = math.sqrt(sigma_sq)

    def marg_prob(a, b):
        val, _ = integrate.quad(
            lambda u: math.exp(-u * u / (2 * sigma_sq)) / math.sqrt(2 * math.pi * sigma_sq),
            a, b, epsabs=1e-12)
        return val

    if abs(rho) == sigma_sq:
        p = marg_prob(lo, hi)
        if rho > 0:
            return p * (1.0 - p)
        # Y = -X: joint event is X in B and -X in B, i.e. X in B ∩ (-B)
        both = marg_prob(max(lo, -hi), min(hi, -lo)) if max(lo, -hi) < min(hi, -lo) else 0.0
        return both - p * p
    if rho == 0.0:
        return 0.0
    val, err = integrate.dblquad(
        lambda y, x: _bivariate_density_diff(x, y, rho, sigma_sq),
        lo, hi, lo, hi, epsabs=1e-8, epsrel=1e-10)
    if not math.isfinite(val) or err > 1e-6:
        raise NumericalError(
            f"indicator covariance quadrature did not converge (err={err})")
    return val


def delta_transform(params: ModelParams, delta: float) -> ModelParams:
    """Shift interaction into drift: gamma -> gamma - delta, b -> b + delta.

    The sum gamma + b is unchanged, so the law of the relative system is
    preserved; delta = gamma removes the interaction, delta = -b removes
    the restoring drift.
    """
    return replace(params, gamma=params.gamma - delta, b=params.b + delta)
