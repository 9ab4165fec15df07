import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from qstail import chernoff, levelcount


def test_g_theta_examples():
    assert chernoff.g_theta(1.0, 1.0) == pytest.approx(2 * math.e)
    x = math.e**2
    assert chernoff.g_theta(math.log(2), x) == pytest.approx(4 * (x - 1) / 2)
    with pytest.raises(ValueError):
        chernoff.g_theta(1.0, 0.5)


def test_g_theta_continuous_at_one():
    assert chernoff.g_theta(0.3, 1.0 + 1e-12) == pytest.approx(chernoff.g_theta(0.3, 1.0), rel=1e-11)


@given(st.floats(min_value=1e-6, max_value=5.0), st.floats(min_value=1.0, max_value=1e6),
       st.floats(min_value=1.0, max_value=1e6))
def test_g_theta_nondecreasing(theta, x1, x2):
    lo, hi = sorted((x1, x2))
    assert chernoff.g_theta(theta, lo) <= chernoff.g_theta(theta, hi) * (1 + 1e-15)


def test_log_g_theta_matches_linear():
    for theta in (0.1, 1.0, 3.0):
        for x in (1.5, 10.0, 1e5):
            assert chernoff.log_g_theta(theta, math.log(x)) == pytest.approx(
                math.log(chernoff.g_theta(theta, x)), rel=1e-13
            )


def test_barrier_examples():
    b = chernoff.barrier_check(math.log(5))
    assert b.log_x_theta == pytest.approx(10.0, rel=1e-15)
    assert b.x_theta == pytest.approx(math.exp(10))
    assert b.g_at_barrier == pytest.approx(math.exp(10) - 1, rel=1e-13)
    assert b.satisfied
    big = chernoff.barrier_check(6.0)
    assert math.isinf(big.x_theta) and big.satisfied
    with pytest.raises(ValueError):
        chernoff.barrier_check(0.0)


@pytest.mark.parametrize("theta", np.geomspace(1e-6, 5.0, 50).tolist())
def test_barrier_identity(theta):
    b = chernoff.barrier_check(theta)
    assert b.satisfied
    x = b.x_theta
    assert chernoff.g_theta(theta, x) == pytest.approx(x - 1.0, rel=1e-10)


def test_scalar_iteration_example():
    logs = chernoff.scalar_iteration(0.5, 200)
    a = np.exp(logs)
    assert a[0] == pytest.approx(math.exp(0.5))
    assert a[1] == pytest.approx(chernoff.g_theta(0.5, math.exp(0.5)), rel=1e-14)
    assert np.all(np.diff(a) >= -1e-12 * a[1:])
    assert a[-1] <= math.exp(2 * math.exp(0.5)) and a[-1] == pytest.approx(a[-2], rel=1e-12)


@pytest.mark.parametrize("theta", [1e-9, 1e-3, 0.5, 1.0, 2.0, 4.0])
def test_scalar_iteration_below_barrier(theta):
    logs = chernoff.scalar_iteration(theta, 300)
    assert logs[0] == theta
    assert np.all(logs <= chernoff.barrier_check(theta).log_x_theta)


def test_scalar_iteration_small_theta_stays_below_e_squared():
    assert np.all(chernoff.scalar_iteration(1e-9, 100) <= 2.0 + 1e-8)


@pytest.mark.parametrize(
    "t, log_major, rate",
    [(10.0, -6.094379124341003, 6.094379124341003), (2 * math.e, 0.0, 0.0), (4.0, 0.0, None)],
)
def test_chernoff_examples(t, log_major, rate):
    row = chernoff.chernoff_majorant(t)
    assert row.log_majorant == pytest.approx(log_major, abs=1e-12)
    if rate is not None:
        assert row.rate_lower == pytest.approx(rate, abs=1e-12)
    assert row.theta_star == pytest.approx(math.log(t / 2))
    assert chernoff.chernoff_majorant(10.0).majorant == pytest.approx(2.2556e-3, rel=1e-4)


def test_chernoff_domain():
    with pytest.raises(ValueError):
        chernoff.chernoff_majorant(2.0)


@pytest.mark.parametrize("t", [6.0, 8.0, 10.0, 20.0, 50.0])
def test_inf_grid_matches_closed_form(t):
    thetas = np.linspace(0.01, 6.0, 600_001)
    assert chernoff.chernoff_inf_grid(t, thetas) == pytest.approx(
        math.exp(-t * math.log(t / 2) + t), rel=1e-6
    )


@pytest.mark.parametrize("t", [8.0, 10.0, 30.0, 100.0, 1000.0])
def test_rate_lower_below_upper_asymptote(t):
    assert chernoff.rate_lower(t) <= levelcount.rate_upper_asymptote(t)
