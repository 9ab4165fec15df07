# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot loops: the mesh quadrature and the two tree samplers.

Arithmetic mirrors :mod:`qstail._fallback` operation for operation so both
backends return identical bits.
"""

import numpy as np
cimport numpy as cnp
from cython.parallel cimport prange
from libc.math cimport exp, log, nextafter, INFINITY
from libc.stdlib cimport malloc, realloc, free
from libc.stdint cimport uint64_t, int64_t

cnp.import_array()

cdef extern from *:
    """
    typedef unsigned __int128 qst_u128;
    """
    ctypedef unsigned long long qst_u128

cdef uint64_t GOLDEN = 0x9E3779B97F4A7C15ULL
cdef uint64_t LABEL_SALT = 0xD1B54A32D192ED03ULL
cdef uint64_t TABLE_SALT = 0x8CB92BA72F3D8DD7ULL
cdef double TWO_M53 = 1.1102230246251565e-16


cdef inline uint64_t mix64(uint64_t z) noexcept nogil:
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL
    return z ^ (z >> 31)


cdef inline uint64_t child_key(uint64_t key, int side) noexcept nogil:
    return mix64(key + <uint64_t>(side + 1) * GOLDEN)


cdef inline uint64_t label_bits(uint64_t key) noexcept nogil:
    return mix64(key ^ LABEL_SALT) >> 11


cdef inline double l0_value(double x) noexcept nogil:
    cdef double e
    if x < 2.0:
        return 0.0
    e = -x * log(x / 2.0) + x
    e = 1.0 - exp(e)
    return e if e > 0.0 else 0.0


# ---------------------------------------------------------------- mesh

cdef inline double tail_value(double a, double vlast, double a_star,
                              double a_one) noexcept nogil:
    cdef double w
    if a < a_star:
        return vlast
    if a >= a_one:
        return 1.0
    w = l0_value(a)
    return w if w > vlast else vlast


cdef void q_row(const double* xs, const double* us, const double* du,
                const double* v, Py_ssize_t n, Py_ssize_t m, Py_ssize_t k,
                double a_star, double a_one, double* out) noexcept nogil:
    cdef double c = xs[k] - 1.0
    cdef double A = xs[n]
    cdef double vlast = v[n - 1]
    cdef double a1, a2, l1, l2, q
    cdef long double acc = 0.0
    cdef Py_ssize_t r
    cdef Py_ssize_t i1 = n - 1   # walks down as a1 = c/u[r+1] decreases
    cdef Py_ssize_t i2 = 0       # walks up as a2 = c/(1-u[r]) increases
    for r in range(m):
        a1 = c / us[r + 1]
        a2 = c / (1.0 - us[r])
        if a1 >= A:
            l1 = tail_value(a1, vlast, a_star, a_one)
        elif a1 < 2.0:
            l1 = 0.0
        else:
            while xs[i1] > a1:
                i1 -= 1
            l1 = v[i1]
        if a2 >= A:
            l2 = tail_value(a2, vlast, a_star, a_one)
        elif a2 < 2.0:
            l2 = 0.0
        else:
            while xs[i2 + 1] <= a2:
                i2 += 1
            l2 = v[i2]
        acc += (du[r] * l1) * l2
    q = <double>acc
    if q > 0.0:
        q = nextafter(q, -INFINITY)
    if q < 0.0:
        q = 0.0
    if q > 1.0:
        q = 1.0
    out[0] = q


def mesh_q(const double[::1] xs, const double[::1] us, const double[::1] du, const double[::1] v,
           double a_star, double a_one, int num_threads=1):
    """Grid values of the lower quadrature operator applied to ``v``."""
    cdef Py_ssize_t n = v.shape[0]
    cdef Py_ssize_t m = du.shape[0]
    cdef Py_ssize_t k
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] o = out
    if num_threads <= 1:
        with nogil:
            for k in range(n):
                q_row(&xs[0], &us[0], &du[0], &v[0], n, m, k, a_star, a_one, &o[k])
    else:
        for k in prange(n, nogil=True, schedule="dynamic", chunksize=16,
                        num_threads=num_threads):
            q_row(&xs[0], &us[0], &du[0], &v[0], n, m, k, a_star, a_one, &o[k])
    return out


# ---------------------------------------------------------------- T_n

cdef struct TnFrame:
    int64_t size
    int64_t prefix
    uint64_t key


cdef inline int64_t table_draw(const double* cdf, Py_ssize_t length,
                               uint64_t key) noexcept nogil:
    """Inverse-CDF draw: the first t with cdf[t] > u."""
    cdef double u = <double>(mix64(key ^ TABLE_SALT) >> 11) * TWO_M53
    cdef Py_ssize_t lo = 0, hi = length - 1, mid
    while lo < hi:
        mid = (lo + hi) // 2
        if cdf[mid] > u:
            hi = mid
        else:
            lo = mid + 1
    return lo


cdef int64_t tn_one(int64_t n, uint64_t root, int64_t cutoff, const double* cdf,
                    const int64_t* offsets) noexcept nogil:
    """Worst-case comparisons max_p sum_r (N_r(p) - 1)_+ on one label tree.

    Subtrees of size <= cutoff are replaced by a draw from their exact law.
    Returns -1 if the stack could not be grown.
    """
    cdef Py_ssize_t cap = 256
    cdef Py_ssize_t top = 0
    cdef TnFrame* stack
    cdef TnFrame* grown
    cdef TnFrame f
    cdef int64_t best = 0, total, left, right, s
    cdef uint64_t bits
    if n <= 1:
        return 0
    stack = <TnFrame*> malloc(cap * sizeof(TnFrame))
    if stack == NULL:
        return -1
    stack[0].size = n
    stack[0].prefix = 0
    stack[0].key = root
    top = 1
    while top > 0:
        top -= 1
        f = stack[top]
        s = f.size
        if s <= cutoff:
            total = f.prefix + table_draw(cdf + offsets[s], offsets[s + 1] - offsets[s], f.key)
            if total > best:
                best = total
            continue
        total = f.prefix + s - 1
        if total > best:
            best = total
        if s <= 2:
            # children have size <= 1 and add nothing
            continue
        bits = label_bits(f.key)
        left = <int64_t>((<qst_u128>s * <qst_u128>bits) >> 53)
        right = s - 1 - left
        if top + 2 > cap:
            cap *= 2
            grown = <TnFrame*> realloc(stack, cap * sizeof(TnFrame))
            if grown == NULL:
                free(stack)
                return -1
            stack = grown
        if right >= 2:
            stack[top].size = right
            stack[top].prefix = total
            stack[top].key = child_key(f.key, 1)
            top += 1
        if left >= 2:
            stack[top].size = left
            stack[top].prefix = total
            stack[top].key = child_key(f.key, 0)
            top += 1
    free(stack)
    return best


def sample_tn_batch(int64_t n, const cnp.uint64_t[::1] keys, const double[::1] cdf,
                    const cnp.int64_t[::1] offsets, int num_threads=1):
    """``cdf``/``offsets`` hold the small-subtree laws; ``offsets`` has
    ``cutoff + 2`` entries and the table for size s is
    ``cdf[offsets[s]:offsets[s+1]]`` indexed by cost."""
    cdef Py_ssize_t count = keys.shape[0]
    cdef Py_ssize_t i
    cdef int64_t cutoff = offsets.shape[0] - 2
    out = np.empty(count, dtype=np.int64)
    cdef cnp.int64_t[::1] o = out
    cdef const double* cp = &cdf[0]
    cdef const int64_t* op = <const int64_t*>&offsets[0]
    if num_threads <= 1:
        with nogil:
            for i in range(count):
                o[i] = tn_one(n, keys[i], cutoff, cp, op)
    else:
        for i in prange(count, nogil=True, schedule="dynamic",
                        num_threads=num_threads):
            o[i] = tn_one(n, keys[i], cutoff, cp, op)
    if (out < 0).any():
        raise MemoryError("T_n sampler could not grow its stack")
    return out


# ---------------------------------------------------------------- S^(m)

cdef struct SFrame:
    int depth
    double prefix
    double weight
    uint64_t key


cdef double truncs_one(int m, double eps, uint64_t root, int* exact) noexcept nogil:
    """sup over depth-m paths of sum_{r<=m} W_r, by depth-first branch-and-bound."""
    cdef Py_ssize_t cap = 2 * (m + 2)
    cdef Py_ssize_t top = 0
    cdef SFrame* stack = <SFrame*> malloc(cap * sizeof(SFrame))
    cdef SFrame f
    cdef double best = -INFINITY, bound, xi, wl, wr
    if stack == NULL:
        exact[0] = -1
        return 0.0
    exact[0] = 1
    stack[0].depth = 0
    stack[0].prefix = 1.0
    stack[0].weight = 1.0
    stack[0].key = root
    top = 1
    while top > 0:
        top -= 1
        f = stack[top]
        if f.depth == m:
            if f.prefix > best:
                best = f.prefix
            continue
        bound = f.prefix + f.weight * <double>(m - f.depth)
        if bound * (1.0 + 1e-12) <= best:
            continue
        if eps > 0.0 and f.weight < eps:
            exact[0] = 0
            if f.prefix > best:
                best = f.prefix
            continue
        xi = <double>label_bits(f.key) * TWO_M53
        wl = f.weight * xi
        wr = f.weight * (1.0 - xi)
        # larger child on top of the stack
        if wl >= wr:
            stack[top].depth = f.depth + 1
            stack[top].weight = wr
            stack[top].prefix = f.prefix + wr
            stack[top].key = child_key(f.key, 1)
            stack[top + 1].depth = f.depth + 1
            stack[top + 1].weight = wl
            stack[top + 1].prefix = f.prefix + wl
            stack[top + 1].key = child_key(f.key, 0)
        else:
            stack[top].depth = f.depth + 1
            stack[top].weight = wl
            stack[top].prefix = f.prefix + wl
            stack[top].key = child_key(f.key, 0)
            stack[top + 1].depth = f.depth + 1
            stack[top + 1].weight = wr
            stack[top + 1].prefix = f.prefix + wr
            stack[top + 1].key = child_key(f.key, 1)
        top += 2
    free(stack)
    return best


def sample_truncs_batch(int m, double eps, const cnp.uint64_t[::1] keys, int num_threads=1):
    cdef Py_ssize_t count = keys.shape[0]
    cdef Py_ssize_t i
    cdef int flag
    values = np.empty(count, dtype=np.float64)
    flags = np.empty(count, dtype=np.int32)
    cdef double[::1] vo = values
    cdef int[::1] fo = flags
    if num_threads <= 1:
        with nogil:
            for i in range(count):
                vo[i] = truncs_one(m, eps, keys[i], &fo[i])
    else:
        for i in prange(count, nogil=True, schedule="dynamic",
                        num_threads=num_threads):
            vo[i] = truncs_one(m, eps, keys[i], &fo[i])
    if (flags < 0).any():
        raise MemoryError("S^(m) sampler could not allocate its stack")
    return values, flags.astype(bool)
