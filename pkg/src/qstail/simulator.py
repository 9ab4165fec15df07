"""Monte Carlo oracle: worst-case Quickselect cost T_n and truncated sums S^(m).

Both samplers walk the labelled infinite binary tree of :mod:`qstail.rng`.
A vertex of subproblem size s picks pivot rank J = 1 + floor(s xi_v); its
children get sizes J - 1 and s - J.  Along a rooted path the cumulative weight
W_r is the product of the factors xi (left) or 1 - xi (right).

T_n = max over root-to-leaf paths of sum (size - 1), and
S^(m) = max over depth-m paths of sum_{r<=m} W_r.
"""

from __future__ import annotations

import enum
import functools
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import rng
from ._backend import default_threads, kernels

# subtrees up to this size are drawn from their exact cost law
DEFAULT_TABLE_CUTOFF = 256
DEFAULT_MEMORY_CAP = 2 << 30
MAX_TN_SIZE = 1 << 31


class ResourceLimitError(RuntimeError):
    pass


class SimKind(str, enum.Enum):
    TN_OVER_N = "tn"
    TRUNCATED_S = "truncs"


@dataclass(frozen=True)
class SimConfig:
    kind: SimKind
    replicates: int
    seed: int = 0
    n: int | None = None
    m: int | None = None
    prune_epsilon: float = 0.0
    table_cutoff: int = DEFAULT_TABLE_CUTOFF

    def __post_init__(self):
        object.__setattr__(self, "kind", SimKind(self.kind))
        if self.replicates < 1:
            raise ValueError(f"replicates must be >= 1, got {self.replicates}")
        if not 0 <= self.seed < 1 << 64:
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {self.seed}")
        if self.kind is SimKind.TN_OVER_N:
            if self.n is None or not 1 <= self.n <= MAX_TN_SIZE:
                raise ValueError(f"tn needs 1 <= n <= {MAX_TN_SIZE}, got {self.n}")
            if self.table_cutoff < 0:
                raise ValueError("table_cutoff must be >= 0")
        else:
            if self.m is None or self.m < 0:
                raise ValueError(f"truncs needs m >= 0, got {self.m}")
            if self.prune_epsilon < 0:
                raise ValueError(f"prune_epsilon must be >= 0, got {self.prune_epsilon}")

    def as_dict(self) -> dict:
        out = {"kind": self.kind.value, "replicates": self.replicates, "seed": self.seed}
        if self.kind is SimKind.TN_OVER_N:
            out.update(n=self.n, table_cutoff=self.table_cutoff)
        else:
            out.update(m=self.m, prune_epsilon=self.prune_epsilon)
        return out


# ---------------------------------------------------------------- exact small-subtree law


@functools.lru_cache(maxsize=8)
def subtree_cost_law(cutoff: int) -> tuple[np.ndarray, np.ndarray]:
    """CDFs of T_s for s = 0..cutoff, flattened.

    Returns ``(cdf, offsets)`` with ``cdf[offsets[s] + t] = P(T_s <= t)`` for
    ``0 <= t <= s(s-1)/2``.  Computed from
    ``T_s = s - 1 + max(T'_{J-1}, T''_{s-J})``, J uniform on 1..s.
    """
    if cutoff < 0:
        raise ValueError("cutoff must be >= 0")
    cdfs: list[np.ndarray] = [np.ones(1), np.ones(1)]

    def at(c: np.ndarray, y: np.ndarray) -> np.ndarray:
        return c[np.minimum(y, len(c) - 1)]

    for s in range(2, cutoff + 1):
        top = s * (s - 1) // 2
        y = np.arange(0, top - (s - 1) + 1)
        acc = np.zeros(len(y))
        for j in range(1, s + 1):
            acc += at(cdfs[j - 1], y) * at(cdfs[s - j], y)
        c = np.concatenate([np.zeros(s - 1), np.minimum(acc / s, 1.0)])
        c = np.maximum.accumulate(c)
        c[-1] = 1.0
        cdfs.append(c)
    cdfs = cdfs[: cutoff + 1] if cutoff >= 1 else cdfs[:1]
    offsets = np.zeros(len(cdfs) + 1, dtype=np.int64)
    offsets[1:] = np.cumsum([len(c) for c in cdfs])
    return np.concatenate(cdfs), offsets


def _tables(cutoff: int) -> tuple[np.ndarray, np.ndarray]:
    if cutoff <= 0:
        return np.ones(1), np.array([0, 1], dtype=np.int64)
    return subtree_cost_law(cutoff)


# ---------------------------------------------------------------- single draws


def sample_tn(n: int, key: int, table_cutoff: int = DEFAULT_TABLE_CUTOFF) -> int:
    """Worst-case comparison count on the label tree rooted at ``key``.

    ``table_cutoff=0`` walks every subproblem; larger values draw small
    subtrees from their exact law (same distribution, far fewer vertices).
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    cdf, offsets = _tables(min(table_cutoff, n))
    keys = np.array([key], dtype=np.uint64)
    return int(kernels.sample_tn_batch(n, keys, cdf, offsets)[0])


@dataclass(frozen=True)
class TruncSample:
    value: float
    exact: bool
    deficit_bound: float = 0.0


def sample_trunc_s(m: int, key: int, prune_epsilon: float = 0.0) -> TruncSample:
    """S^(m) on the label tree rooted at ``key`` by branch-and-bound.

    With ``prune_epsilon > 0`` vertices of weight below it are not expanded;
    the value is then a lower bound short by at most ``prune_epsilon * m``.
    """
    if m < 0:
        raise ValueError(f"m must be >= 0, got {m}")
    if prune_epsilon < 0:
        raise ValueError(f"prune_epsilon must be >= 0, got {prune_epsilon}")
    values, flags = kernels.sample_truncs_batch(m, prune_epsilon, np.array([key], dtype=np.uint64))
    exact = bool(flags[0])
    return TruncSample(float(values[0]), exact, 0.0 if exact else prune_epsilon * m)


def exhaustive_trunc_s(m: int, key: int) -> float:
    """S^(m) by enumerating all 2^m paths level by level (reference oracle)."""
    keys = np.array([key], dtype=np.uint64)
    weights = np.ones(1)
    sums = np.ones(1)
    for _ in range(m):
        xi = rng.labels_np(keys)
        w_left, w_right = weights * xi, weights * (1.0 - xi)
        keys = np.stack([rng.child_keys_np(keys, 0), rng.child_keys_np(keys, 1)], axis=1).ravel()
        weights = np.stack([w_left, w_right], axis=1).ravel()
        sums = np.repeat(sums, 2) + weights
    return float(sums.max())


def greedy_path_sizes(n: int, key: int) -> tuple[np.ndarray, np.ndarray]:
    """Subproblem sizes N_r and weights W_r along the max-weight greedy path.

    Uses the same labels and pivot rule as :func:`sample_tn` with
    ``table_cutoff=0``, so the sizes are those of the coupled T_n tree.
    """
    sizes = [n]
    weights = [1.0]
    size, w = n, 1.0
    while size >= 1:
        xi = rng.label(key)
        left = rng.pivot_floor(size, key)
        if xi >= 0.5:
            size, w, key = left, w * xi, rng.child_key(key, 0)
        else:
            size, w, key = size - 1 - left, w * (1.0 - xi), rng.child_key(key, 1)
        sizes.append(size)
        weights.append(w)
    return np.array(sizes, dtype=np.int64), np.array(weights)


# ---------------------------------------------------------------- batches


@dataclass(frozen=True)
class SimBatch:
    """Samples in replicate order, plus summary statistics and a sorted ECDF."""

    config: SimConfig
    samples: np.ndarray
    raw: np.ndarray | None = None
    exact: np.ndarray | None = None
    ecdf: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.samples.setflags(write=False)
        object.__setattr__(self, "ecdf", np.sort(self.samples))
        self.ecdf.setflags(write=False)

    @property
    def count(self) -> int:
        return int(self.samples.size)

    @property
    def mean(self) -> float:
        return float(self.samples.mean())

    @property
    def variance(self) -> float:
        return float(self.samples.var(ddof=1)) if self.samples.size > 1 else 0.0

    def cdf(self, x) -> np.ndarray:
        """Empirical P(sample <= x)."""
        return np.searchsorted(self.ecdf, np.asarray(x, dtype=float), side="right") / self.count

    def summary(self) -> dict:
        return {
            "mean": self.mean,
            "variance": self.variance,
            "count": self.count,
            "seed": self.config.seed,
        }


def memory_estimate(config: SimConfig) -> int:
    per = 8 * 3 if config.kind is SimKind.TN_OVER_N else 8 * 2 + 1
    return config.replicates * per


def run_batch(config: SimConfig, threads: int | None = None,
              memory_cap: int = DEFAULT_MEMORY_CAP) -> SimBatch:
    """Draw ``config.replicates`` independent samples.

    Replicate i uses the tree keyed by (seed, i), so the result does not
    depend on thread count or scheduling.
    """
    if memory_estimate(config) > memory_cap:
        raise ResourceLimitError(
            f"batch needs ~{memory_estimate(config)} bytes, cap is {memory_cap}"
        )
    threads = default_threads() if threads is None else max(1, threads)
    keys = rng.replicate_keys(config.seed, config.replicates)
    if config.kind is SimKind.TN_OVER_N:
        # the table for size s does not depend on the cutoff, so trimming is exact
        cdf, offsets = _tables(min(config.table_cutoff, config.n))
        raw = kernels.sample_tn_batch(config.n, keys, cdf, offsets, threads)
        return SimBatch(config, raw / float(config.n), raw=raw)
    values, flags = kernels.sample_truncs_batch(config.m, config.prune_epsilon, keys, threads)
    return SimBatch(config, values, exact=flags)


def ecdf_tail(batch: SimBatch, t: float) -> tuple[float, float]:
    """Empirical P(sample > t) and its 95% normal-approximation half-width."""
    if batch.count == 0:
        raise ValueError("empty batch")
    p = float(np.count_nonzero(batch.samples > t)) / batch.count
    return p, 1.96 * math.sqrt(p * (1.0 - p) / batch.count)


def ks_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Two-sample Kolmogorov-Smirnov statistic sup |F_a - F_b|."""
    a = np.sort(np.asarray(a, dtype=float))
    b = np.sort(np.asarray(b, dtype=float))
    grid = np.concatenate([a, b])
    fa = np.searchsorted(a, grid, side="right") / a.size
    fb = np.searchsorted(b, grid, side="right") / b.size
    return float(np.max(np.abs(fa - fb)))


# ---------------------------------------------------------------- export


def write_samples_csv(path: str | Path, samples: np.ndarray, comments: tuple[str, ...] = ()) -> None:
    """One ``sample`` column; optional trailing ``#`` comment lines."""
    with open(path, "w", newline="\n") as fh:
        fh.write("sample\n")
        for x in np.asarray(samples, dtype=float).tolist():
            fh.write(f"{x!r}\n")
        for line in comments:
            fh.write(f"# {line}\n")


def read_samples_csv(path: str | Path) -> np.ndarray:
    with open(path) as fh:
        header = fh.readline().strip()
        if header != "sample":
            raise ValueError(f"expected header 'sample', got {header!r}")
        return np.array(
            [float(line) for line in fh if line.strip() and not line.startswith("#")], dtype=float
        )


def write_samples_binary(path: str | Path, samples: np.ndarray) -> None:
    """Little-endian uint64 count followed by little-endian float64 values."""
    data = np.asarray(samples, dtype="<f8")
    with open(path, "wb") as fh:
        fh.write(struct.pack("<Q", data.size))
        fh.write(data.tobytes())


def read_samples_binary(path: str | Path) -> np.ndarray:
    raw = Path(path).read_bytes()
    (count,) = struct.unpack_from("<Q", raw, 0)
    if len(raw) != 8 + 8 * count:
        raise ValueError(f"binary sample file truncated: header says {count} values")
    return np.frombuffer(raw, dtype="<f8", offset=8, count=count).astype(np.float64)
