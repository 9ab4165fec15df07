"""Moment-generating-function barrier and the pointwise Chernoff tail majorant.

For theta > 0 the scalar map ``G_theta(x) = 2 e^theta (x - 1)/ln x`` bounds one
step of the MGF recursion of the truncated sums, and ``x_theta = exp(2 e^theta)``
is a barrier it never crosses.  Optimising the resulting Chernoff bound over
theta gives ``P(S > t) <= exp(-t ln(t/2) + t)`` for t > 2.

MGF-scale quantities overflow quickly, so they are carried in log space.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

LOG2 = math.log(2.0)
# exp() overflows past this; beyond it only log-scale values are meaningful
LOG_LINEAR_LIMIT = 700.0


def _log_mean_exp_ratio(y: float) -> float:
    """ln((e^y - 1)/y) for y >= 0, i.e. ln of (x - 1)/ln x at x = e^y."""
    if y == 0.0:
        return 0.0
    if y < 1e-8:
        return math.log1p(y / 2.0)
    if y > 30.0:
        return y + math.log1p(-math.exp(-y)) - math.log(y)
    return math.log(math.expm1(y)) - math.log(y)


def g_theta(theta: float, x: float) -> float:
    """G_theta(x) = 2 e^theta (x - 1)/ln x, with the continuous value 2 e^theta at x = 1."""
    if x < 1.0:
        raise ValueError(f"G_theta is defined for x >= 1, got {x}")
    d = x - 1.0
    if d == 0.0:
        ratio = 1.0
    elif d < 1e-8:
        ratio = 1.0 + d / 2.0
    else:
        ratio = d / math.log(x)
    return 2.0 * math.exp(theta) * ratio


def log_g_theta(theta: float, log_x: float) -> float:
    """ln G_theta(x) given ln x; valid far beyond the linear overflow range."""
    if log_x < 0.0:
        raise ValueError(f"G_theta is defined for x >= 1, got ln x = {log_x}")
    return LOG2 + theta + _log_mean_exp_ratio(log_x)


@dataclass(frozen=True)
class BarrierCheck:
    theta: float
    log_x_theta: float
    log_g_at_barrier: float
    satisfied: bool

    @property
    def x_theta(self) -> float:
        """Linear barrier; ``inf`` once it leaves the double range."""
        return math.exp(self.log_x_theta) if self.log_x_theta <= LOG_LINEAR_LIMIT else math.inf

    @property
    def g_at_barrier(self) -> float:
        if self.log_g_at_barrier > LOG_LINEAR_LIMIT:
            return math.inf
        return math.exp(self.log_g_at_barrier)


def barrier_check(theta: float) -> BarrierCheck:
    """Evaluate G_theta at x_theta = exp(2 e^theta) via G_theta(x_theta) = x_theta - 1."""
    if theta <= 0.0:
        raise ValueError(f"theta must be positive, got {theta}")
    log_x = 2.0 * math.exp(theta)
    # ln(x - 1) = ln x + ln(1 - 1/x)
    log_g = log_x + math.log1p(-math.exp(-log_x))
    return BarrierCheck(theta, log_x, log_g, log_g <= log_x)


class BarrierOverflow(OverflowError):
    pass


def scalar_iteration(theta: float, n_steps: int) -> np.ndarray:
    """Log-scale iterates ln a_k of a_{k+1} = G_theta(a_k) from a_0 = e^theta.

    Entry 0 is ln a_0 = theta; the array has ``n_steps + 1`` entries.
    """
    if theta <= 0.0:
        raise ValueError(f"theta must be positive, got {theta}")
    if n_steps < 1:
        raise ValueError(f"n_steps must be positive, got {n_steps}")
    out = np.empty(n_steps + 1)
    out[0] = theta
    log_a = theta
    for k in range(1, n_steps + 1):
        log_a = log_g_theta(theta, log_a)
        if not math.isfinite(log_a):
            raise BarrierOverflow(f"iterate {k} left the log-scale range at theta={theta}")
        out[k] = log_a
    return out


@dataclass(frozen=True)
class ChernoffRow:
    t: float
    theta_star: float
    log_majorant: float
    rate_lower: float

    @property
    def majorant(self) -> float:
        return math.exp(self.log_majorant)


def log_majorant(t: float) -> float:
    """min(0, -t ln(t/2) + t), the log of the clamped tail majorant."""
    if t <= 2.0:
        raise ValueError(f"the Chernoff majorant needs t > 2, got {t}")
    return min(0.0, -t * math.log(t / 2.0) + t)


def rate_lower(t: float) -> float:
    """t ln t - (1 + ln 2) t, a lower bound on -ln P(S > t)."""
    if t <= 2.0:
        raise ValueError(f"the rate bound needs t > 2, got {t}")
    return t * math.log(t) - (1.0 + LOG2) * t


def chernoff_majorant(t: float) -> ChernoffRow:
    return ChernoffRow(t, math.log(t / 2.0) if t > 2.0 else math.nan, log_majorant(t), rate_lower(t))


def chernoff_inf_grid(t: float, thetas: np.ndarray) -> float:
    """min over the given theta grid of exp(-theta t + 2 e^theta)."""
    thetas = np.asarray(thetas, dtype=float)
    return float(np.exp(np.min(-thetas * t + 2.0 * np.exp(thetas))))
