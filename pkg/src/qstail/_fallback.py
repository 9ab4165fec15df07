"""Pure-Python / numpy implementations of the compiled kernels.

Same signatures and the same floating-point operation order as
``qstail._kernels``; selected automatically when the extension is missing.
The mesh path precomputes index and ``L0`` tables per row block, the tree
samplers are plain Python loops and are only practical for small inputs.
"""

from __future__ import annotations

import bisect
import math

import numpy as np

from .rng import TABLE_SALT, TWO_M53, child_key, label_bits, mix64

_ROW_BLOCK = 256


def l0_value(x: float) -> float:
    if x < 2.0:
        return 0.0
    e = 1.0 - math.exp(-x * math.log(x / 2.0) + x)
    return e if e > 0.0 else 0.0


def _l0_table(a: np.ndarray) -> np.ndarray:
    # libm through math, not numpy's SIMD exp/log, so values match the kernel
    flat = a.ravel()
    out = np.fromiter((l0_value(float(x)) for x in flat), dtype=np.float64, count=flat.size)
    return out.reshape(a.shape)


def _lookup(a: np.ndarray, xs: np.ndarray, v: np.ndarray, tail: np.ndarray) -> np.ndarray:
    n = v.shape[0]
    idx = np.searchsorted(xs, a, side="right") - 1
    inside = (a >= 2.0) & (a < xs[n])
    out = np.where(inside, v[np.clip(idx, 0, n - 1)], 0.0)
    return np.where(a >= xs[n], tail, out)


def mesh_q(xs, us, du, v, a_star, a_one, num_threads=1):
    xs = np.asarray(xs, dtype=np.float64)
    us = np.asarray(us, dtype=np.float64)
    du = np.asarray(du, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    n = v.shape[0]
    vlast = v[n - 1]
    A = xs[n]
    out = np.empty(n, dtype=np.float64)
    for start in range(0, n, _ROW_BLOCK):
        stop = min(n, start + _ROW_BLOCK)
        c = xs[start:stop, None] - 1.0
        a1 = c / us[None, 1:]
        a2 = c / (1.0 - us[None, :-1])
        t1 = np.zeros_like(a1)
        t2 = np.zeros_like(a2)
        big1 = a1 >= A
        big2 = a2 >= A
        t1[big1] = np.maximum(vlast, _l0_table(a1[big1]))
        t2[big2] = np.maximum(vlast, _l0_table(a2[big2]))
        l1 = _lookup(a1, xs, v, t1)
        l2 = _lookup(a2, xs, v, t2)
        terms = (du[None, :] * l1) * l2
        acc = np.cumsum(terms.astype(np.longdouble), axis=1)[:, -1]
        q = acc.astype(np.float64)
        q = np.where(q > 0.0, np.nextafter(q, -np.inf), q)
        out[start:stop] = np.clip(q, 0.0, 1.0)
    return out


def _table_draw(cdf, key: int) -> int:
    u = (mix64(key ^ TABLE_SALT) >> 11) * TWO_M53
    return min(bisect.bisect_right(cdf, u), len(cdf) - 1)


def tn_one(n: int, root: int, tables=()) -> int:
    if n <= 1:
        return 0
    cutoff = len(tables) - 1
    best = 0
    stack = [(n, 0, root)]
    while stack:
        s, prefix, key = stack.pop()
        if s <= cutoff:
            total = prefix + _table_draw(tables[s], key)
            if total > best:
                best = total
            continue
        total = prefix + s - 1
        if total > best:
            best = total
        if s <= 2:
            continue
        left = (s * label_bits(key)) >> 53
        right = s - 1 - left
        if right >= 2:
            stack.append((right, total, child_key(key, 1)))
        if left >= 2:
            stack.append((left, total, child_key(key, 0)))
    return best


def sample_tn_batch(n, keys, cdf, offsets, num_threads=1):
    cdf = np.asarray(cdf, dtype=np.float64)
    offsets = np.asarray(offsets, dtype=np.int64)
    cutoff = len(offsets) - 2
    tables = [cdf[offsets[s]:offsets[s + 1]].tolist() for s in range(cutoff + 1)] if cutoff > 0 else ()
    return np.array([tn_one(int(n), int(k), tables) for k in keys], dtype=np.int64)


def truncs_one(m: int, eps: float, root: int) -> tuple[float, bool]:
    best = -math.inf
    exact = True
    stack = [(0, 1.0, 1.0, root)]
    while stack:
        depth, prefix, weight, key = stack.pop()
        if depth == m:
            if prefix > best:
                best = prefix
            continue
        bound = prefix + weight * float(m - depth)
        if bound * (1.0 + 1e-12) <= best:
            continue
        if eps > 0.0 and weight < eps:
            exact = False
            if prefix > best:
                best = prefix
            continue
        xi = label_bits(key) * TWO_M53
        wl = weight * xi
        wr = weight * (1.0 - xi)
        left = (depth + 1, prefix + wl, wl, child_key(key, 0))
        right = (depth + 1, prefix + wr, wr, child_key(key, 1))
        if wl >= wr:
            stack.append(right)
            stack.append(left)
        else:
            stack.append(left)
            stack.append(right)
    return best, exact


def sample_truncs_batch(m, eps, keys, num_threads=1):
    pairs = [truncs_one(int(m), float(eps), int(k)) for k in keys]
    values = np.array([p[0] for p in pairs], dtype=np.float64)
    flags = np.array([p[1] for p in pairs], dtype=bool)
    return values, flags
