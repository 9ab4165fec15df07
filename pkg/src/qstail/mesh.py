"""Monotone mesh scheme for a certified lower CDF and an upper bound on E S.

F(x) = P(S <= x) is the fixed point of
``(K G)(x) = int_0^1 G((x-1)/u) G((x-1)/(1-u)) du``.  K is order preserving,
so iterating a conservative discretisation ``K_bar`` from the Chernoff lower
CDF ``L0`` keeps every iterate below F.  Each iterate yields
``E S <= 2 + int_2^A (1 - L) + tail(A)``.

Lower-bound sums are rounded down and upper-bound sums rounded up by one ulp.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from ._backend import default_threads, kernels
from ._fallback import l0_value
from .analytic import tail_integral_bound

log = logging.getLogger(__name__)

TAIL_RULE = "max(v_last,L0)"
# 1 - exp(e) rounds to 1.0 for every e below this
_SATURATION_EXPONENT = -40.0


class InternalInconsistency(ArithmeticError):
    """A computed lower CDF failed a monotonicity check it must satisfy."""


def eval_l0(x: float) -> float:
    """Chernoff lower CDF max(0, 1 - exp(-x ln(x/2) + x)) on x >= 2, else 0."""
    if x < 2.0:
        return 0.0
    if math.isinf(x):
        return 1.0
    return l0_value(float(x))


def _l0_exponent(x: float) -> float:
    return -x * math.log(x / 2.0) + x


def _bisect(pred: Callable[[float], bool], lo: float, hi: float) -> float:
    """Smallest double in (lo, hi] where pred holds, given pred(lo) false, pred(hi) true."""
    while True:
        mid = lo + (hi - lo) / 2.0
        if mid <= lo or mid >= hi:
            return hi
        if pred(mid):
            hi = mid
        else:
            lo = mid


def tail_thresholds(A: float, vlast: float) -> tuple[float, float]:
    """Breakpoints of the tail rule max(vlast, L0(a)) on a >= A.

    Returns ``(a_star, a_one)``: below a_star the rule gives vlast, from
    a_one on it gives 1.0.  Both only ever lower the evaluated value.
    """
    hi = 2.0 * math.e
    while _l0_exponent(hi) > _SATURATION_EXPONENT:
        hi *= 2.0
    a_one = _bisect(lambda a: _l0_exponent(a) <= _SATURATION_EXPONENT, 2.0 * math.e, hi)
    a_one = max(a_one, A)
    if eval_l0(A) > vlast:
        return A, a_one
    if vlast >= 1.0:
        return a_one, a_one
    a_star = _bisect(lambda a: eval_l0(a) > vlast, A, a_one)
    return a_star, a_one


def _round_up(x: float) -> float:
    return math.nextafter(x, math.inf)


# ---------------------------------------------------------------- step functions


@dataclass(frozen=True)
class StepCDF:
    """Nondecreasing step function on [2, A) with the Chernoff tail beyond A.

    ``x_grid`` holds x_0 = 2 < ... < x_N = A and ``values`` holds v_0..v_{N-1};
    L(x) = v_k on [x_k, x_{k+1}), 0 below 2 and max(v_{N-1}, L0(x)) from A on.
    """

    x_grid: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        xs = np.ascontiguousarray(self.x_grid, dtype=np.float64)
        vs = np.ascontiguousarray(self.values, dtype=np.float64)
        if xs.ndim != 1 or vs.ndim != 1 or xs.size != vs.size + 1 or vs.size < 1:
            raise ValueError("need len(x_grid) == len(values) + 1 >= 2")
        if xs[0] != 2.0:
            raise ValueError(f"grid must start at 2, got {xs[0]}")
        if not np.all(np.diff(xs) > 0):
            raise ValueError("x_grid must be strictly increasing")
        if np.any(vs < 0.0) or np.any(vs > 1.0) or np.any(np.diff(vs) < 0.0):
            raise ValueError("values must be nondecreasing and lie in [0, 1]")
        xs.setflags(write=False)
        vs.setflags(write=False)
        object.__setattr__(self, "x_grid", xs)
        object.__setattr__(self, "values", vs)

    @property
    def A(self) -> float:
        return float(self.x_grid[-1])

    @property
    def N(self) -> int:
        return int(self.values.size)

    def __call__(self, x: float) -> float:
        x = float(x)
        if x < 2.0:
            return 0.0
        if x >= self.A:
            return max(float(self.values[-1]), eval_l0(x))
        k = int(np.searchsorted(self.x_grid, x, side="right")) - 1
        return float(self.values[k])

    def evaluate(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.vectorize(self.__call__, otypes=[float])(x)

    def sup(self) -> float:
        return 1.0

    def to_csv(self, path: str | Path, comments: tuple[str, ...] = ()) -> None:
        with open(path, "w", newline="\n") as fh:
            fh.write("x,value\n")
            for x, v in zip(self.x_grid[:-1].tolist(), self.values.tolist()):
                fh.write(f"{x!r},{v!r}\n")
            fh.write(f"# A={self.A!r} tail_rule={TAIL_RULE} below_rule=0\n")
            for line in comments:
                fh.write(f"# {line}\n")

    @classmethod
    def from_csv(cls, path: str | Path) -> "StepCDF":
        xs, vs, A = [], [], None
        with open(path) as fh:
            header = fh.readline().strip()
            if header != "x,value":
                raise ValueError(f"expected header 'x,value', got {header!r}")
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                if line.startswith("#"):
                    for token in line[1:].split():
                        if token.startswith("A="):
                            A = float(token[2:])
                    continue
                x, v = line.split(",")
                xs.append(float(x))
                vs.append(float(v))
        if A is None:
            raise ValueError("footer with A= missing")
        return cls(np.array(xs + [A]), np.array(vs))


# ---------------------------------------------------------------- configuration


@dataclass(frozen=True)
class MeshConfig:
    A: float = 10.0
    N: int = 100
    M: int = 100
    iterations: int = 50
    grid_rule: str = "uniform"

    def __post_init__(self):
        if not self.A > 2.0:
            raise ValueError(f"A must exceed 2, got {self.A}")
        if self.N < 2 or self.M < 2:
            raise ValueError(f"N and M must be >= 2, got N={self.N}, M={self.M}")
        if self.iterations < 0:
            raise ValueError(f"iterations must be >= 0, got {self.iterations}")
        if self.grid_rule != "uniform":
            raise ValueError(f"unknown grid rule {self.grid_rule!r}")

    def x_grid(self) -> np.ndarray:
        return np.linspace(2.0, self.A, self.N + 1)

    def u_grid(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.M + 1)


@dataclass(frozen=True)
class IterationTrace:
    config: MeshConfig
    u_bounds: np.ndarray
    final: StepCDF
    u_initial: float
    l1_dominates_l0: bool | None = None
    snapshots: dict = field(default_factory=dict)

    def to_csv(self, path: str | Path, comments: tuple[str, ...] = ()) -> None:
        with open(path, "w", newline="\n") as fh:
            fh.write("m,U_m\n")
            for m, u in enumerate(self.u_bounds.tolist(), start=1):
                fh.write(f"{m},{u!r}\n")
            for line in comments:
                fh.write(f"# {line}\n")


# ---------------------------------------------------------------- operators


def _check_u_grid(u_grid) -> np.ndarray:
    us = np.asarray(u_grid, dtype=np.float64)
    if us.ndim != 1 or us.size < 2 or us[0] != 0.0 or us[-1] != 1.0 or not np.all(np.diff(us) > 0):
        raise ValueError("u_grid must increase strictly from 0 to 1")
    return us


def apply_q(L: Callable[[float], float], u_grid, x: float) -> float:
    """Lower Riemann sum sum_r (u_{r+1}-u_r) L((x-1)/u_{r+1}) L((x-1)/(1-u_r)).

    Accumulated in extended precision, then rounded down one ulp.
    """
    if not x >= 2.0:
        raise ValueError(f"apply_q needs x >= 2, got {x}")
    us = _check_u_grid(u_grid)
    c = x - 1.0
    acc = np.longdouble(0.0)
    for r in range(us.size - 1):
        du = us[r + 1] - us[r]
        acc += (du * L(c / us[r + 1])) * L(c / (1.0 - us[r]))
    q = float(acc)
    if q > 0.0:
        q = math.nextafter(q, -math.inf)
    return min(max(q, 0.0), 1.0)


def apply_k_lower(L: StepCDF, u_grid, threads: int | None = None) -> StepCDF:
    """One application of K_bar: grid values (Q L)(x_k) with the same tail rule.

    Raises InternalInconsistency if the output decreases anywhere, which a
    correct quadrature of a monotone input cannot produce.
    """
    us = _check_u_grid(u_grid)
    du = np.diff(us)
    threads = default_threads() if threads is None else max(1, threads)
    a_star, a_one = tail_thresholds(L.A, float(L.values[-1]))
    out = kernels.mesh_q(L.x_grid, us, du, np.ascontiguousarray(L.values), a_star, a_one, threads)
    bad = np.flatnonzero(np.diff(out) < 0.0)
    if bad.size:
        k = int(bad[0])
        raise InternalInconsistency(
            f"Q output decreases at k={k}: {out[k]!r} > {out[k + 1]!r}"
        )
    return StepCDF(L.x_grid, out)


def mean_upper(L: StepCDF, A: float | None = None) -> float:
    """2 + sum_k (x_{k+1} - x_k)(1 - v_k) + tail(A), every term rounded up."""
    A = L.A if A is None else float(A)
    if not A > 2.0:
        raise ValueError(f"A must exceed 2, got {A}")
    if A != L.A:
        raise ValueError(f"A={A} does not match the grid endpoint {L.A}")
    dx = np.diff(L.x_grid)
    terms = np.nextafter(dx * (1.0 - L.values), np.inf)
    total = math.fsum([2.0, _round_up(tail_integral_bound(A))] + terms.tolist())
    return _round_up(total)


def apply_k_quadrature(L: Callable[[float], float], x: float, subdivisions: int,
                       sup_value: float | None = None) -> tuple[float, float]:
    """Two-sided uniform Riemann bracket of (K L)(x) for nondecreasing L.

    The upper corners at u = 0 and u = 1 use ``sup_value`` (default L(inf)).
    """
    if not x >= 2.0:
        raise ValueError(f"apply_k_quadrature needs x >= 2, got {x}")
    if subdivisions < 2:
        raise ValueError(f"subdivisions must be >= 2, got {subdivisions}")
    top = L(math.inf) if sup_value is None else sup_value
    us = np.linspace(0.0, 1.0, subdivisions + 1)
    c = x - 1.0
    lower, upper = [], []
    for r in range(subdivisions):
        u0, u1 = float(us[r]), float(us[r + 1])
        du = u1 - u0
        lower.append((du * L(c / u1)) * L(c / (1.0 - u0)))
        big = top if u0 == 0.0 else L(c / u0)
        small_side = top if u1 == 1.0 else L(c / (1.0 - u1))
        upper.append((du * big) * small_side)
    return math.fsum(lower), math.fsum(upper)


# ---------------------------------------------------------------- driver


def initial_cdf(config: MeshConfig) -> StepCDF:
    xs = config.x_grid()
    return StepCDF(xs, np.array([eval_l0(float(x)) for x in xs[:-1]]))


def iterate(config: MeshConfig, threads: int | None = None,
            snapshot_at: tuple[int, ...] = ()) -> IterationTrace:
    """Run L_{m+1} = K_bar L_m from L0 and record U_1..U_m."""
    us = config.u_grid()
    current = initial_cdf(config)
    u_initial = mean_upper(current)
    snapshots = {0: current.values} if 0 in snapshot_at else {}
    bounds = []
    l1_ok = None
    for m in range(1, config.iterations + 1):
        nxt = apply_k_lower(current, us, threads)
        if m == 1:
            gap = nxt.values - current.values
            l1_ok = bool(np.all(gap >= 0.0))
            log.info("L1 >= L0 on grid: %s (min gap %.3g)", l1_ok, float(gap.min()))
        current = nxt
        bounds.append(mean_upper(current))
        if m in snapshot_at:
            snapshots[m] = current.values
        log.debug("m=%d U=%.10g", m, bounds[-1])
    return IterationTrace(config, np.array(bounds), current, u_initial, l1_ok, snapshots)
