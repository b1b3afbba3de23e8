import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pspin_replica import MixtureSpec, ModelParams, delta, theta, xi, xi_prime


def test_scalar_examples():
    assert xi(0.5, MixtureSpec(2, 1.0)) == 0.25
    assert theta(1.0, MixtureSpec(3, 1.0)) == 2.0
    assert xi_prime(0.0, MixtureSpec(3, 2.0)) == 0.0


def test_closed_forms_odd_p():
    m = MixtureSpec(3, 0.7)
    x = -0.4
    assert m.xi(x) == pytest.approx(0.49 * 0.064, rel=1e-15)
    assert m.xi_prime(x) == pytest.approx(-3 * 0.49 * 0.16, rel=1e-15)
    assert m.theta(x) == pytest.approx(2 * 0.49 * 0.064, rel=1e-15)


@pytest.mark.parametrize("p", [2, 3, 4, 5, 6])
def test_theta_identity(p):
    m = MixtureSpec(p, 1.3)
    x = np.linspace(-1, 1, 2001)
    x = x[x != 0]
    lhs = m.theta(x)
    rhs = x * m.xi_prime(x) - m.xi(x)
    assert np.all(np.abs(lhs - rhs) <= 1e-14 * np.abs(lhs))


@pytest.mark.parametrize("p", [2, 3, 4, 5])
def test_evenness_bitwise(p):
    m = MixtureSpec(p, 0.9)
    x = np.random.default_rng(1).uniform(-1, 1, 500)
    assert np.array_equal(m.xi(x), m.xi(-x))


@pytest.mark.parametrize("p", [2, 3, 4])
def test_xi_convex_positive_side(p):
    m = MixtureSpec(p, 1.0)
    x = np.linspace(0.05, 0.95, 50)
    h = 1e-4
    second = (m.xi(x + h) - 2 * m.xi(x) + m.xi(x - h)) / h ** 2
    assert np.all(second > 0)
    assert m.xi(0.0) == 0.0


@pytest.mark.parametrize("p", [2, 3, 4])
def test_delta_grid(p):
    m = MixtureSpec(p, 1.0)
    g = np.linspace(-1, 1, 101)
    U, Q = np.meshgrid(g, g)
    assert m.delta(U, Q).min() >= -1e-12
    assert np.allclose(m.delta(g, g), 0.0, atol=1e-15)
    assert delta(0.0, 0.0, m) == 0.0


@settings(max_examples=200, deadline=None)
@given(p=st.integers(2, 8), beta=st.floats(0.01, 3.0),
       u=st.floats(-1, 1), q=st.floats(-1, 1))
def test_delta_nonnegative_property(p, beta, u, q):
    assert MixtureSpec(p, beta).delta(u, q) >= -1e-12


def test_replica_count():
    assert ModelParams.create(a=2.0).n == 2
    assert ModelParams.create(a=2.7).n == 2
    assert ModelParams.create(a=1.0).n == 1
    assert ModelParams.create(a=3.0).a_is_integer


@pytest.mark.parametrize("kwargs", [dict(a=0.5), dict(p=1), dict(beta=0.0), dict(beta=-1.0)])
def test_validation(kwargs):
    with pytest.raises(ValueError):
        ModelParams.create(**kwargs)


def test_replace_keeps_mixture():
    p = ModelParams.create(p=3, beta=0.4, h=0.2, a=2.5)
    q = p.replace(a=3.5)
    assert q.n == 3 and q.mixture == p.mixture and math.isclose(q.h, 0.2)
