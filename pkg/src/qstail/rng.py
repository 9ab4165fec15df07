"""Counter-based labelling of the infinite binary tree.

Every vertex owns a 64-bit key.  The root key of replicate ``i`` is a hash of
``(seed, i)`` and a child key is a hash of its parent key and the side taken,
so a vertex label depends only on the vertex and never on traversal order.
This is what lets branch-and-bound and exhaustive enumeration see the same
tree, and lets independent replicates run in any order.

The compiled kernels implement the identical arithmetic; the functions here
are the reference definition.
"""

from __future__ import annotations

import numpy as np

MASK64 = 0xFFFFFFFFFFFFFFFF
GOLDEN = 0x9E3779B97F4A7C15
SEED_SALT = 0x5851F42D4C957F2D
LABEL_SALT = 0xD1B54A32D192ED03
TABLE_SALT = 0x8CB92BA72F3D8DD7
TWO_M53 = 2.0**-53


def mix64(z: int) -> int:
    """SplitMix64 finalizer; a bijection on 64-bit integers."""
    z &= MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def replicate_key(seed: int, index: int) -> int:
    return mix64(mix64(seed ^ SEED_SALT) + (index + 1) * GOLDEN)


def child_key(key: int, side: int) -> int:
    """Key of the left (``side=0``) or right (``side=1``) child."""
    return mix64(key + (side + 1) * GOLDEN)


def label_bits(key: int) -> int:
    """53 random bits of the vertex label."""
    return mix64(key ^ LABEL_SALT) >> 11


def label(key: int) -> float:
    """Vertex label xi_v in [0, 1), an exact multiple of 2**-53."""
    return label_bits(key) * TWO_M53


def pivot_floor(size: int, key: int) -> int:
    """floor(size * xi_v), computed exactly in integer arithmetic."""
    return (size * label_bits(key)) >> 53


def replicate_keys(seed: int, count: int) -> np.ndarray:
    return np.array([replicate_key(seed, i) for i in range(count)], dtype=np.uint64)


# numpy versions, used by vectorised oracles

_U = np.uint64


def mix64_np(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = (z ^ (z >> _U(30))) * _U(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> _U(27))) * _U(0x94D049BB133111EB)
    return z ^ (z >> _U(31))


def child_keys_np(keys: np.ndarray, side: int) -> np.ndarray:
    with np.errstate(over="ignore"):
        return mix64_np(np.asarray(keys, dtype=np.uint64) + _U((side + 1) * GOLDEN & MASK64))


def labels_np(keys: np.ndarray) -> np.ndarray:
    bits = mix64_np(np.asarray(keys, dtype=np.uint64) ^ _U(LABEL_SALT)) >> _U(11)
    return bits.astype(np.float64) * TWO_M53
