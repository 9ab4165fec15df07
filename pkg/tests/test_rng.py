import numpy as np
from hypothesis import given, strategies as st

from qstail import rng

u64 = st.integers(min_value=0, max_value=2**64 - 1)


def _reference_mix64(z):
    # splitmix64 finaliser written with Python big ints
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) % 2**64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) % 2**64
    return z ^ (z >> 31)


@given(u64)
def test_mix64_matches_reference(z):
    assert rng.mix64(z) == _reference_mix64(z)


@given(u64, st.integers(min_value=1, max_value=2**40))
def test_pivot_floor_is_exact_floor(key, size):
    bits = rng.label_bits(key)
    assert rng.pivot_floor(size, key) == (size * bits) // 2**53
    assert 0 <= rng.pivot_floor(size, key) <= size - 1


@given(u64)
def test_label_in_unit_interval(key):
    assert 0.0 <= rng.label(key) < 1.0


def test_numpy_versions_match_scalar():
    keys = rng.replicate_keys(123, 500)
    assert keys.tolist() == [rng.replicate_key(123, i) for i in range(500)]
    assert rng.labels_np(keys).tolist() == [rng.label(int(k)) for k in keys]
    for side in (0, 1):
        assert rng.child_keys_np(keys, side).tolist() == [rng.child_key(int(k), side) for k in keys]


def test_streams_differ_by_seed_and_side():
    a = rng.replicate_keys(1, 1000)
    b = rng.replicate_keys(2, 1000)
    assert len(set(a.tolist()) | set(b.tolist())) == 2000
    k = int(a[0])
    assert rng.child_key(k, 0) != rng.child_key(k, 1)


def test_labels_look_uniform():
    x = rng.labels_np(rng.replicate_keys(9, 100_000))
    assert abs(x.mean() - 0.5) < 4 * np.sqrt(1 / 12 / x.size)
    counts = np.histogram(x, bins=10, range=(0, 1))[0]
    chi2 = ((counts - 10_000) ** 2 / 10_000).sum()
    assert chi2 < 27.9  # 99.9% point of chi-square with 9 dof
