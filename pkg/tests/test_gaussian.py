import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pspin_replica.errors import NotPSD
from pspin_replica.gaussian import (
    enumerate_signs, expect_1d, expect_nd, gaussian_nodes, hermite_rule, log_expect_cosh_power,
    log_expect_nd, mc_expect_nd, psd_factor,
)


def ch2_closed(var, h):
    return (1 + math.exp(2 * var) * math.cosh(2 * h)) / 2


def test_rule_examples():
    r1 = hermite_rule(1)
    assert r1.nodes.tolist() == [0.0] and r1.weights.tolist() == [1.0]
    r32, r64 = hermite_rule(32), hermite_rule(64)
    assert abs(np.dot(r32.weights, r32.nodes ** 2) - 1) <= 1e-12
    assert abs(np.dot(r64.weights, r64.nodes ** 4) - 3) <= 1e-12


@pytest.mark.parametrize("order", [2, 8, 20, 64, 128, 512])
def test_rule_normalized_and_exact(order):
    r = hermite_rule(order)
    assert abs(r.weights.sum() - 1) <= 1e-13
    for k in range(0, min(2 * order, 24), 2):
        exact = math.prod(range(1, k, 2)) if k else 1
        assert np.dot(r.weights, r.nodes ** k) == pytest.approx(exact, rel=1e-10)


@pytest.mark.parametrize("order", [0, 513])
def test_rule_order_range(order):
    with pytest.raises(ValueError):
        hermite_rule(order)


def test_expect_1d_examples():
    f = lambda x: np.cosh(x + 0.3) ** 2.5  # noqa: E731
    assert expect_1d(f, 0.0) == f(0.0)
    assert abs(expect_1d(lambda x: x, 0.7)) <= 1e-14
    v = expect_1d(lambda x: np.cosh(x + 0.2) ** 2, 0.8)
    assert v == pytest.approx(ch2_closed(0.8, 0.2), rel=1e-12)


@settings(max_examples=50, deadline=None)
@given(var=st.floats(0.0, 9.0), h=st.floats(-2, 2))
def test_cosh_square_closed_form(var, h):
    val = math.exp(log_expect_cosh_power(2.0, var, h))
    assert val == pytest.approx(ch2_closed(var, h), rel=1e-10)


@settings(max_examples=60, deadline=None)
@given(a=st.floats(1.0, 6.0), h=st.floats(-2, 2), var=st.floats(0.0, 4.0))
def test_order_doubling_invariant(a, h, var):
    lo = log_expect_cosh_power(a, var, h, order=64)
    hi = log_expect_cosh_power(a, var, h, order=128)
    assert abs(math.expm1(hi - lo)) <= 1e-11


def test_integer_power_against_binomial_sum():
    # E ch^4(sx + h) = 2^-4 sum_j C(4,j) exp((4-2j) h + s^2 (4-2j)^2 / 2)
    s2, h = 2.3, 0.4
    exact = sum(math.comb(4, j) * math.exp((4 - 2 * j) * h + s2 * (4 - 2 * j) ** 2 / 2) for j in range(5)) / 16
    assert math.exp(log_expect_cosh_power(4.0, s2, h)) == pytest.approx(exact, rel=1e-13)


def test_psd_factor_examples():
    F, r = psd_factor(np.eye(3))
    assert r == 3 and np.allclose(F @ F.T, np.eye(3), atol=1e-12)
    u = np.array([0.6, -0.6])
    F, r = psd_factor(np.outer(u, u))
    assert r == 1 and np.allclose(F @ F.T, np.outer(u, u), atol=1e-12)
    A = np.random.default_rng(3).normal(size=(4, 6))
    C = A @ A.T
    F, r = psd_factor(C)
    assert r == 4 and np.max(np.abs(F @ F.T - C)) <= 1e-10


def test_psd_factor_rejects():
    with pytest.raises(NotPSD):
        psd_factor(np.diag([1.0, -0.5]))
    with pytest.raises(NotPSD):
        psd_factor(np.array([[1.0, 0.2], [0.3, 1.0]]))


def test_expect_nd_consistency():
    h, var = 0.25, 0.7
    one = expect_nd(lambda z: np.cosh(z[:, 0] + h), np.array([[var]]))
    assert one == pytest.approx(expect_1d(lambda x: np.cosh(x + h), var), rel=1e-13)
    C = np.array([[1.0, 0.3, 0.1], [0.3, 0.8, 0.2], [0.1, 0.2, 0.5]])
    assert expect_nd(lambda z: np.ones(z.shape[0]), C) == pytest.approx(1.0, abs=1e-13)


def test_expect_nd_rank_one_collapse():
    a = np.array([0.4, -0.9, 1.3])
    C = 0.8 * np.outer(a, a)
    f = lambda z: np.cosh(z.sum(axis=1) + 0.1) ** 1.5  # noqa: E731
    nd = expect_nd(f, C)
    oned = expect_1d(lambda x: np.cosh(a.sum() * x + 0.1) ** 1.5, 0.8)
    assert nd == pytest.approx(oned, rel=1e-12)


def test_expect_nd_factorizes_on_diagonal():
    d = np.array([0.5, 1.2, 0.3])
    f = lambda z: np.cosh(z[:, 0]) * np.exp(0.3 * z[:, 1]) * (1 + z[:, 2] ** 2)  # noqa: E731
    expected = math.exp(0.5 / 2) * math.exp(0.09 * 1.2 / 2) * 1.3
    assert expect_nd(f, np.diag(d)) == pytest.approx(expected, rel=1e-10)


def test_log_expect_nd_matches_expect_nd():
    C = np.array([[1.0, 0.4], [0.4, 0.6]])
    logf = lambda z: 2.0 * np.logaddexp(z[:, 0], -z[:, 1])  # noqa: E731
    assert math.exp(log_expect_nd(logf, C)) == pytest.approx(expect_nd(lambda z: np.exp(logf(z)), C), rel=1e-12)


def test_monte_carlo_fallback_agrees():
    C = np.array([[1.0, 0.3], [0.3, 0.5]])
    f = lambda z: np.cosh(z[:, 0] + 0.2) * np.cosh(z[:, 1])  # noqa: E731
    mean, se = mc_expect_nd(f, C, 1_000_000, seed=11)
    assert abs(mean - expect_nd(f, C)) <= 4 * se
    again, _ = mc_expect_nd(f, C, 1_000_000, seed=11)
    assert again == mean


def test_gaussian_nodes_covariance():
    C = np.array([[0.9, 0.2, 0.0], [0.2, 0.4, 0.1], [0.0, 0.1, 0.3]])
    z, log_w = gaussian_nodes(C)
    w = np.exp(log_w)
    assert np.allclose((z * w[:, None]).T @ z, C, atol=1e-12)


def test_enumerate_signs():
    s = enumerate_signs(3)
    assert s.shape == (8, 3)
    assert len({tuple(r) for r in s}) == 8
