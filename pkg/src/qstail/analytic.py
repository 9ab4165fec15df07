"""Special-function primitives: Erlang CDF, log-factorials, Gamma small-ball
sandwich and the closed-form tail integral bound.

Everything that can underflow is also available in log space.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "SmallBallSandwich",
    "gamma_cdf",
    "log_factorial",
    "log_gamma_cdf",
    "log_binomial",
    "small_ball",
    "stirling_approx",
    "stirling_remainder",
    "tail_integral_bound",
    "log_tail_integral_bound",
]

# prefix sums of log k, kept as (hi, lo) compensated pairs
_LOGFACT_HI = [0.0]
_LOGFACT_LO = [0.0]

_SERIES_MAX_TERMS = 100_000


def _extend_log_factorials(n: int) -> None:
    hi = _LOGFACT_HI[-1]
    lo = _LOGFACT_LO[-1]
    first = len(_LOGFACT_HI)
    # ln k to extended precision, split into a double plus a correction
    logs = np.log(np.arange(first, n + 1, dtype=np.longdouble))
    log_hi = logs.astype(np.float64)
    log_lo = (logs - log_hi).astype(np.float64)
    for term, term_lo in zip(log_hi.tolist(), log_lo.tolist()):
        s = hi + term
        # two-sum: exact rounding error of hi + term
        bb = s - hi
        lo += ((hi - (s - bb)) + (term - bb)) + term_lo
        hi = s
        _LOGFACT_HI.append(hi)
        _LOGFACT_LO.append(lo)


def log_factorial(n: int) -> float:
    """ln(n!) by compensated summation of ln k, k = 1..n."""
    if n < 0:
        raise ValueError(f"log_factorial needs n >= 0, got {n}")
    n = int(n)
    if n >= len(_LOGFACT_HI):
        _extend_log_factorials(n)
    return _LOGFACT_HI[n] + _LOGFACT_LO[n]


_PI_LD = np.longdouble("3.14159265358979323846264338327950288")


def stirling_approx(n: int) -> float:
    """n ln n - n + (1/2) ln(2 pi n), for n >= 1, in extended precision."""
    if n < 1:
        raise ValueError(f"stirling_approx needs n >= 1, got {n}")
    return float(_stirling_ld(n))


def _stirling_ld(n: int) -> np.longdouble:
    x = np.longdouble(n)
    return x * np.log(x) - x + np.log(2 * _PI_LD * x) / 2


def stirling_remainder(n: int) -> float:
    """ln(n!) - stirling_approx(n) without cancellation.

    Near n = 10**6 both terms are about 1.3e7, whose double spacing (~2e-9)
    swamps a remainder of order 1/(12n); the subtraction is done on the
    extended-precision pieces instead.
    """
    if n < 1:
        raise ValueError(f"stirling_remainder needs n >= 1, got {n}")
    log_factorial(n)
    hi = np.longdouble(_LOGFACT_HI[n])
    lo = np.longdouble(_LOGFACT_LO[n])
    return float((hi - _stirling_ld(n)) + lo)


def log_binomial(n: int, k: int) -> float:
    if not 0 <= k <= n:
        raise ValueError(f"binomial({n}, {k}) undefined")
    return log_factorial(n) - log_factorial(k) - log_factorial(n - k)


def _log_series_tail(m: int, x: float) -> float:
    """ln sum_{i>=0} x^i m!/(m+i)!  (the regularised lower-gamma series)."""
    total = 1.0
    term = 1.0
    for i in range(1, _SERIES_MAX_TERMS):
        term *= x / (m + i)
        total += term
        if term < 1e-17 * total:
            break
    return math.log(total)


def log_gamma_cdf(m: int, x: float) -> float:
    """ln P(Gamma(m, 1) <= x) for integer shape m >= 1.

    For x < m the lower series e^{-x} x^m/m! sum_i x^i m!/(m+i)! is used; it has
    only positive terms, so there is no cancellation even for tiny x.  For
    x >= m the probability is at least about 1/2 and the complement
    e^{-x} sum_{k<m} x^k/k! is subtracted from 1.
    """
    if m < 1:
        raise ValueError(f"shape must be a positive integer, got {m}")
    if x < 0:
        raise ValueError(f"x must be nonnegative, got {x}")
    if x == 0.0:
        return -math.inf
    if math.isinf(x):
        return 0.0
    if x < m:
        return m * math.log(x) - x - log_factorial(m) + _log_series_tail(m, x)
    # upper tail Q = e^{-x} sum_{k<m} x^k/k!, accumulated from the largest term down
    log_terms = [k * math.log(x) - x - log_factorial(k) for k in range(m)]
    top = max(log_terms)
    q = math.exp(top) * math.fsum(math.exp(t - top) for t in log_terms)
    return math.log1p(-q) if q < 1.0 else -math.inf


def gamma_cdf(m: int, x: float) -> float:
    """P(Gamma(m, 1) <= x), the Erlang CDF."""
    if x == 0.0:
        if m < 1:
            raise ValueError(f"shape must be a positive integer, got {m}")
        return 0.0
    return math.exp(log_gamma_cdf(m, x))


@dataclass(frozen=True)
class SmallBallSandwich:
    m: int
    x: float
    lower: float
    point: float
    upper: float


def small_ball(m: int, x: float) -> SmallBallSandwich:
    """e^{-x} x^m/m! <= P(Gamma(m,1) <= x) <= x^m/m! on 0 <= x <= 1."""
    if m < 1:
        raise ValueError(f"shape must be a positive integer, got {m}")
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"small-ball sandwich needs x in [0, 1], got {x}")
    if x == 0.0:
        return SmallBallSandwich(m, x, 0.0, 0.0, 0.0)
    log_upper = m * math.log(x) - log_factorial(m)
    upper = min(1.0, math.exp(log_upper))
    lower = math.exp(log_upper - x)
    point = gamma_cdf(m, x)
    if not lower * (1 - 1e-12) <= point <= upper * (1 + 1e-12):
        raise ArithmeticError(f"Erlang CDF {point!r} escaped [{lower!r}, {upper!r}] at m={m}, x={x}")
    # ulp-level excursions only; the inequalities are strict in exact arithmetic
    point = min(max(point, lower), upper)
    return SmallBallSandwich(m, x, lower, point, upper)


def log_tail_integral_bound(A: float) -> float:
    if A <= 2.0:
        raise ValueError(f"A must exceed 2, got {A}")
    slope = math.log(A / 2.0)
    return -A * slope + A - math.log(slope)


def tail_integral_bound(A: float) -> float:
    """exp(-A ln(A/2) + A) / ln(A/2), bounding the integral of the Chernoff
    majorant over [A, infinity)."""
    return math.exp(log_tail_integral_bound(A))
