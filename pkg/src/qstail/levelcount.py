"""One-level second-moment lower bound on P(S > t).

At depth j, a vertex whose exponential path sum S_j(v) is at most
``a_j(t) = ln((j+1)/t)`` already forces S >= t.  The number Z_j(t) of such
vertices has mean ``2^j P(Gamma(j,1) <= a)``; Cauchy-Schwarz plus the
LCA-decomposed pair bound turns that into a lower bound on P(Z_j >= 1), and
maximising over j gives the tail lower bound.

All bounds here are finite-t inequalities, assembled from the small-ball
sandwich rather than from asymptotic equivalents.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .analytic import log_binomial, log_factorial, log_gamma_cdf
from .chernoff import LOG2


class NoFeasibleLevel(ValueError):
    pass


@dataclass(frozen=True)
class LevelParams:
    t: float
    j: int
    a: float
    log_mu_lower: float
    log_mu_point: float
    log_mu_upper: float


@dataclass(frozen=True)
class LevelBound:
    t: float
    j_star: int
    log_hitting_lower: float
    rate_upper_numeric: float
    rate_upper_asymptote: float
    corr_ratio: float


def a_threshold(j: int, t: float) -> float:
    if j < 1 or t <= 0:
        raise ValueError(f"need j >= 1 and t > 0, got j={j}, t={t}")
    return math.log((j + 1) / t)


def mu_sandwich(j: int, t: float) -> LevelParams:
    """ln of the mean level count and its small-ball lower/upper bounds."""
    a = a_threshold(j, t)
    if not 0.0 <= a <= 1.0:
        raise ValueError(f"threshold a={a:.6g} outside [0, 1] for j={j}, t={t}")
    if a == 0.0:
        return LevelParams(t, j, a, -math.inf, -math.inf, -math.inf)
    base = j * LOG2 + j * math.log(a) - log_factorial(j)
    point = j * LOG2 + log_gamma_cdf(j, a)
    return LevelParams(t, j, a, base - a, point, base)


def pair_count(j: int, ell: int) -> int:
    """Ordered pairs of depth-j vertices whose LCA sits at depth ell."""
    if not 0 <= ell <= j - 1:
        raise ValueError(f"need 0 <= ell <= j-1, got j={j}, ell={ell}")
    return 2 ** (2 * j - ell - 1)


def pjl_upper(j: int, ell: int, a: float) -> float:
    """ln of C(2r, r) a^{j+r}/(j+r)!, r = j - ell, bounding the pair probability."""
    if j < 1 or not 0 <= ell <= j - 1:
        raise ValueError(f"need j >= 1 and 0 <= ell <= j-1, got j={j}, ell={ell}")
    if a <= 0.0:
        raise ValueError(f"a must be positive, got {a}")
    r = j - ell
    return log_binomial(2 * r, r) + (j + r) * math.log(a) - log_factorial(j + r)


def _q(j: int, t: float) -> float:
    a = a_threshold(j, t)
    if not 0.0 < a <= 1.0:
        raise ValueError(f"threshold a={a:.6g} outside (0, 1] for j={j}, t={t}")
    return 8.0 * a / (j + 1)


def corr_ratio_upper(j: int, t: float) -> float:
    """q/(1 - q) with q = 8a/(j+1).

    Summing the pair bounds over the LCA depth gives
    ``sum_l N_{j,l} p_{j,l} <= (mu_upper / 2) * sum_{r=1..j} q^r``, so
    ``mu_upper * ratio`` over-covers the correlation sum by at least a factor 2.
    """
    q = _q(j, t)
    if q >= 1.0:
        raise ValueError(f"q={q:.6g} >= 1 for j={j}, t={t}; geometric bound diverges")
    return q / (1.0 - q)


def corr_geometric_sum(j: int, t: float) -> float:
    """sum_{r=1..j} q^r, finite for every q."""
    q = _q(j, t)
    if q == 1.0:
        return float(j)
    return q * (1.0 - q**j) / (1.0 - q)


def hitting_lower(j: int, t: float) -> float:
    """Rigorous lower bound on ln P(S > t) from level j.

    ``P(Z >= 1) >= mu^2/E[Z^2] >= mu_lower^2 / (mu_upper (1 + ratio))``.
    When q >= 1 the closed-form ratio is unavailable and the finite geometric
    sum is used instead.
    """
    params = mu_sandwich(j, t)
    if params.a == 0.0:
        raise ValueError(f"threshold a=0 for j={j}, t={t}; level count is empty")
    q = _q(j, t)
    ratio = q / (1.0 - q) if q < 1.0 else corr_geometric_sum(j, t)
    value = 2.0 * params.log_mu_lower - params.log_mu_upper - math.log1p(ratio)
    return min(0.0, value)


def rate_upper_asymptote(t: float) -> float:
    """t ln t + t ln ln t - t ln 2 (leading terms of the upper rate bound)."""
    if t <= math.e:
        raise ValueError(f"need t > e for ln ln t > 0, got {t}")
    return t * math.log(t) + t * math.log(math.log(t)) - t * LOG2


def level_window(t: float) -> range:
    """Candidate depths ceil(t)..ceil(e t)."""
    return range(max(1, math.ceil(t)), math.ceil(math.e * t) + 1)


def optimize_level(t: float) -> LevelBound:
    """Best single level: grid search of hitting_lower over j, ties to the smaller j."""
    if t < 8.0:
        raise ValueError(f"optimize_level needs t >= 8, got {t}")
    best_j = None
    best = -math.inf
    for j in level_window(t):
        a = math.log((j + 1) / t)
        if not 0.0 < a <= 1.0:
            continue
        value = hitting_lower(j, t)
        if value > best:
            best, best_j = value, j
    if best_j is None:
        raise NoFeasibleLevel(f"no level j with a_j(t) in (0, 1] for t={t}")
    q = _q(best_j, t)
    ratio = q / (1.0 - q) if q < 1.0 else corr_geometric_sum(best_j, t)
    return LevelBound(t, best_j, best, -best, rate_upper_asymptote(t), ratio)


def saddle_level(t: float) -> float:
    """Leading-order optimal depth t (1 + 1/ln t)."""
    return t * (1.0 + 1.0 / math.log(t))
