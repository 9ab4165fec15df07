"""Cross-module invariant suites behind ``qstail verify``.

Each group returns a :class:`GroupResult`; the CLI prints one line per group
and fails if any group fails.  ``quick`` shrinks replicate counts and grids,
``full`` runs them at the documented sizes.
"""

from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import analytic, chernoff, levelcount, mesh, simulator


@dataclass(frozen=True)
class GroupResult:
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status} {self.name:<24} {self.detail} [{self.seconds:.1f}s]"


@dataclass(frozen=True)
class Scale:
    full: bool
    seed: int

    def pick(self, quick, full):
        return full if self.full else quick


# relative slack for comparisons that hold exactly in real arithmetic but
# whose two sides are rounded along different summation paths
ROUNDING_SLACK = 1e-14


def small_ball_sandwich(scale: Scale) -> tuple[bool, str]:
    worst = 0
    count = 0
    for m in range(1, 51):
        for i in range(101):
            x = i / 100.0
            sb = analytic.small_ball(m, x)
            point = analytic.gamma_cdf(m, x)
            margin = 1e-12 * max(sb.upper, 1e-300)
            if not (sb.lower - margin <= point <= sb.upper + margin):
                worst += 1
            count += 1
    return worst == 0, f"{count} (m, x) points, {worst} outside"


def barrier_identity(scale: Scale) -> tuple[bool, str]:
    thetas = np.geomspace(1e-6, 5.0, scale.pick(60, 400))
    worst = 0.0
    for theta in thetas:
        check = chernoff.barrier_check(float(theta))
        if not check.satisfied:
            return False, f"barrier unsatisfied at theta={theta:.6g}"
        x = check.x_theta
        if math.isfinite(x):
            rel = abs(chernoff.g_theta(float(theta), x) - (x - 1.0)) / (x - 1.0)
        else:
            rel = abs(chernoff.log_g_theta(float(theta), check.log_x_theta) - check.log_g_at_barrier)
        worst = max(worst, rel)
    return worst <= 1e-10, f"max rel err {worst:.2e} over {thetas.size} thetas"


def iterate_domination(scale: Scale) -> tuple[bool, str]:
    thetas = np.geomspace(1e-6, 5.0, scale.pick(30, 120))
    steps = scale.pick(100, 400)
    for theta in thetas:
        logs = chernoff.scalar_iteration(float(theta), steps)
        barrier = chernoff.barrier_check(float(theta)).log_x_theta
        # iterates settle on a fixed point and may jitter there by one ulp
        if np.any(logs > barrier) or np.any(np.diff(logs) < -ROUNDING_SLACK * logs[1:]):
            return False, f"iterate crossed barrier or decreased at theta={theta:.6g}"
    return True, f"{thetas.size} thetas x {steps} steps below exp(2e^theta)"


def _level_sums(rng: np.random.Generator, j: int, reps: int) -> np.ndarray:
    sums = np.zeros((reps, 1))
    for _ in range(j):
        xi = rng.random(sums.shape)
        sums = np.stack([sums - np.log(xi), sums - np.log1p(-xi)], axis=2).reshape(reps, -1)
    return sums


def _binomial_se(p_hat: float, p_ref: float, reps: int) -> float:
    """Standard error of a proportion, evaluated at the larger of the estimate
    and the reference value being tested, so empty counts do not give se = 0."""
    p = min(max(p_hat, p_ref), 1.0)
    return math.sqrt(p * (1 - p) / reps)


def level_count_mc(scale: Scale) -> tuple[bool, str]:
    rng = np.random.default_rng(scale.seed)
    reps = scale.pick(20_000, 100_000)
    failures = []
    for j in range(2, 7):
        sums = _level_sums(rng, j, reps)
        for a in (0.3, 0.6):
            t = (j + 1) * math.exp(-a)
            params = levelcount.mu_sandwich(j, t)
            z = np.count_nonzero(sums <= params.a, axis=1)
            mu_lo = math.exp(params.log_mu_lower)
            # Z is integer valued, so Var Z >= mu (1 - mu) >= mu_lower (1 - mu_lower)
            se = math.sqrt(max(z.var(ddof=1), mu_lo * (1 - mu_lo)) / reps)
            if not mu_lo - 3 * se <= z.mean() <= math.exp(params.log_mu_upper) + 3 * se:
                failures.append(f"mean j={j} a={a}")
            hit = np.count_nonzero(z >= 1) / reps
            ref = math.exp(levelcount.hitting_lower(j, t))
            if hit + 3 * _binomial_se(hit, ref, reps) < ref:
                failures.append(f"hit j={j} a={a}")
            for ell in range(j):
                r = j - ell
                s = rng.gamma(ell, size=reps) if ell else np.zeros(reps)
                both = (s + rng.gamma(r, size=reps) <= params.a) & (s + rng.gamma(r, size=reps) <= params.a)
                p = both.mean()
                ref = math.exp(levelcount.pjl_upper(j, ell, params.a))
                if p > ref + 3 * _binomial_se(p, min(ref, 1.0), reps):
                    failures.append(f"pjl j={j} l={ell} a={a}")
    return not failures, f"{reps} reps, j=2..6" + (f"; failed: {', '.join(failures)}" if failures else "")


def pair_count(scale: Scale) -> tuple[bool, str]:
    for j in range(1, 7):
        leaves = list(itertools.product((0, 1), repeat=j))
        counts = [0] * j
        for v, w in itertools.permutations(leaves, 2):
            lca = next(i for i in range(j) if v[i] != w[i])
            counts[lca] += 1
        for ell in range(j):
            if counts[ell] != levelcount.pair_count(j, ell):
                return False, f"j={j} l={ell}: {counts[ell]} != {levelcount.pair_count(j, ell)}"
    return True, "ordered pairs by LCA depth match 2^(2j-l-1) for j<=6"


def _random_step(rng: np.random.Generator, xs: np.ndarray) -> np.ndarray:
    n = xs.size - 1
    if rng.random() < 0.3:
        return np.sort(rng.integers(0, 5, n) / 4.0)
    return np.sort(rng.random(n) ** rng.uniform(0.2, 5.0))


def _nested(coarse: np.ndarray) -> np.ndarray:
    mids = (coarse[:-1] + coarse[1:]) / 2.0
    return np.sort(np.concatenate([coarse, mids]))


def mesh_conservative(scale: Scale) -> tuple[bool, str]:
    rng = np.random.default_rng(scale.seed + 1)
    config = mesh.MeshConfig(A=10.0, N=scale.pick(16, 40), M=scale.pick(8, 20), iterations=1)
    xs, us = config.x_grid(), config.u_grid()
    trials = scale.pick(3, 12)
    for _ in range(trials):
        L = mesh.StepCDF(xs, _random_step(rng, xs))
        for x in xs[:-1]:
            q = mesh.apply_q(L, us, float(x))
            lower, upper = mesh.apply_k_quadrature(L, float(x), 64 * config.M)
            if q > upper or q > lower * (1 + ROUNDING_SLACK):
                return False, f"Q={q!r} exceeds bracket ({lower!r}, {upper!r}) at x={x}"
    return True, f"{trials} random L, Q <= refined lower <= upper at every grid point"


def order_preservation(scale: Scale) -> tuple[bool, str]:
    rng = np.random.default_rng(scale.seed + 2)
    xs = np.linspace(2.0, 10.0, scale.pick(41, 101))
    us = np.linspace(0.0, 1.0, scale.pick(21, 51))
    trials = scale.pick(20, 200)
    for _ in range(trials):
        g = _random_step(rng, xs)
        h = np.maximum(g, _random_step(rng, xs))
        kg = mesh.apply_k_lower(mesh.StepCDF(xs, g), us).values
        kh = mesh.apply_k_lower(mesh.StepCDF(xs, h), us).values
        if np.any(kg > kh):
            return False, "K_bar G > K_bar H somewhere although G <= H"
        if np.any(np.diff(kg) < 0):
            return False, "K_bar output not monotone"
    return True, f"{trials} random pairs G <= H"


def u_refinement(scale: Scale) -> tuple[bool, str]:
    rng = np.random.default_rng(scale.seed + 3)
    xs = np.linspace(2.0, 10.0, scale.pick(41, 101))
    trials = scale.pick(20, 200)
    for _ in range(trials):
        coarse = np.linspace(0.0, 1.0, int(rng.integers(2, 40)) + 1)
        L = mesh.StepCDF(xs, _random_step(rng, xs))
        qc = mesh.apply_k_lower(L, coarse).values
        qf = mesh.apply_k_lower(L, _nested(coarse)).values
        if np.any(qf < qc * (1 - ROUNDING_SLACK)):
            return False, "refined u-grid lowered Q"
    return True, f"{trials} nested grid pairs"


def floor_sandwich(scale: Scale) -> tuple[bool, str]:
    n = 100_000
    trees = scale.pick(20, 100)
    keys = simulator.rng.replicate_keys(scale.seed, trees)
    for key in keys:
        sizes, weights = simulator.greedy_path_sizes(n, int(key))
        r = np.arange(sizes.size)
        nw = n * weights
        slack = 1e-9 * n
        if np.any(sizes > nw + slack) or np.any(sizes < nw - r - slack):
            return False, "n W_r - r <= N_r <= n W_r violated on the greedy path"
    return True, f"{trees} trees, n={n}"


def ecdf_domination(scale: Scale) -> tuple[bool, str]:
    trace = mesh.iterate(mesh.MeshConfig(A=10.0, N=100, M=100, iterations=50))
    L = trace.final
    n = scale.pick(100_000, 1_000_000)
    reps = scale.pick(2_000, 10_000)
    batch = simulator.run_batch(simulator.SimConfig("tn", reps, seed=scale.seed, n=n))
    xs = L.x_grid[:-1]
    emp = batch.cdf(xs)
    se = np.sqrt(np.maximum(emp * (1 - emp), 1.0 / reps) / reps)
    excess = L.values - (emp + 3 * se)
    worst = float(excess.max())
    return worst <= 0.0, f"n={n}, {reps} reps, max L_50 - (ECDF + 3se) = {worst:.3g}"


def ks_recursion(scale: Scale) -> tuple[bool, str]:
    reps = scale.pick(5_000, 20_000)
    ref_factor = 10
    rng = np.random.default_rng(scale.seed + 4)
    worst = []
    ok = True
    for i, m in enumerate((3, 6, 9)):
        base = scale.seed * 16 + i * 4
        x1 = simulator.run_batch(simulator.SimConfig("truncs", reps, seed=base + 1, m=m)).samples
        x2 = simulator.run_batch(simulator.SimConfig("truncs", reps, seed=base + 2, m=m)).samples
        ref = simulator.run_batch(simulator.SimConfig("truncs", ref_factor * reps, seed=base + 3, m=m + 1)).samples
        u = rng.random(reps)
        y = 1.0 + np.maximum(u * x1, (1.0 - u) * x2)
        d = simulator.ks_distance(y, ref)
        # two-sample 99% critical value
        crit = 1.63 * math.sqrt((reps + ref.size) / (reps * ref.size))
        worst.append(f"m={m}: D={d:.4f}/{crit:.4f}")
        ok &= d <= crit
    return ok, "; ".join(worst)


GROUPS: list[tuple[str, Callable[[Scale], tuple[bool, str]]]] = [
    ("small_ball_sandwich", small_ball_sandwich),
    ("barrier_identity", barrier_identity),
    ("iterate_domination", iterate_domination),
    ("level_count_mc", level_count_mc),
    ("pair_count", pair_count),
    ("mesh_conservative", mesh_conservative),
    ("order_preservation", order_preservation),
    ("u_refinement", u_refinement),
    ("floor_sandwich", floor_sandwich),
    ("ecdf_domination", ecdf_domination),
    ("ks_recursion", ks_recursion),
]


def run(level: str = "quick", seed: int = 0, emit: Callable[[str], None] | None = None) -> list[GroupResult]:
    if level not in ("quick", "full"):
        raise ValueError(f"level must be 'quick' or 'full', got {level!r}")
    scale = Scale(full=level == "full", seed=seed)
    results = []
    for name, fn in GROUPS:
        start = time.perf_counter()
        try:
            passed, detail = fn(scale)
        except Exception as exc:  # a crash is a failed invariant, not a usage error
            passed, detail = False, f"{type(exc).__name__}: {exc}"
        result = GroupResult(name, bool(passed), detail, time.perf_counter() - start)
        results.append(result)
        if emit is not None:
            emit(result.line())
    return results
