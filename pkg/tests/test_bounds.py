import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pspin_replica import ModelParams
from pspin_replica.bounds import (
    ConstraintBlock, CouplingVector, DualObjective, OverlapMatrix, III_closed_form, Psi_inf_gamma, Psi_value,
    chain_verify, construct_P, decompose_I_II_III, glue_coordinates, holder_gap, holder_terms, p_norm,
    phi_n, psi_first_line, psi_inf_lambda, psi_value, strictness_check,
)
from pspin_replica.errors import GluingRequired, InconsistentGluing, NotPSD, ZeroVector
from pspin_replica.gaussian import gaussian_nodes
from pspin_replica.rs import rs_value

# psi at n=2, u12=0.5, Q = 2 u u^T for u=(0.5, 0.5), p=2, beta=0.5, a=2.5, h=0.1;
# evaluated with mpmath quad at 30 digits
GOLDEN_PSI_LAM03 = 1.5800948081701053466
GOLDEN_PSI_INF = 1.579368112478845965
GOLDEN_LAM0 = 0.2559427399167359123

GOLDEN_PARAMS = ModelParams.create(p=2, beta=0.5, h=0.1, a=2.5)
GOLDEN_U = np.array([[1.0, 0.5], [0.5, 1.0]])
GOLDEN_Q = np.full((2, 2), 0.5)


def test_phi_examples():
    assert phi_n(np.zeros(3), np.zeros(3), 0.0) == pytest.approx(math.log(8), abs=1e-15)
    assert phi_n(np.array([0.7]), np.zeros(0), 0.2) == pytest.approx(math.log(2 * math.cosh(0.9)), abs=1e-15)
    z1, z2, lam, h = 0.3, -1.1, 0.6, 0.25
    expected = math.log(2 * math.exp(lam) * math.cosh(z1 + z2 + 2 * h) + 2 * math.exp(-lam) * math.cosh(z1 - z2))
    assert phi_n(np.array([z1, z2]), np.array([lam]), h) == pytest.approx(expected, abs=1e-14)
    with pytest.raises(ValueError):
        phi_n(np.zeros(17), np.zeros(136), 0.0)


def test_psi_golden_against_mpmath():
    assert psi_value(GOLDEN_U, GOLDEN_Q, [0.3], GOLDEN_PARAMS) == pytest.approx(GOLDEN_PSI_LAM03, abs=1e-12)
    assert psi_value(GOLDEN_U, GOLDEN_Q, [0.3], GOLDEN_PARAMS, order=128) == pytest.approx(GOLDEN_PSI_LAM03, abs=1e-12)
    res = psi_inf_lambda(GOLDEN_U, GOLDEN_Q, GOLDEN_PARAMS)
    assert res.value == pytest.approx(GOLDEN_PSI_INF, abs=1e-12)
    assert res.lam[0] == pytest.approx(GOLDEN_LAM0, abs=1e-8)
    assert res.grad_norm <= 1e-9 and res.hessian_min_eig >= -1e-9


@pytest.mark.parametrize("q,a,h", [(0.3, 1.5, 0.2), (0.8, 1.0, -0.4), (0.0, 1.9, 0.1)])
def test_psi_one_replica_is_rs(q, a, h):
    params = ModelParams.create(p=3, beta=0.8, h=h, a=a)
    val = psi_value(np.eye(1), np.array([[q]]), np.zeros(0), params, order=128)
    assert val == pytest.approx(rs_value(q, params), abs=1e-11)


def test_psi_zero_Q():
    params = ModelParams.create(p=2, beta=0.6, h=0.0, a=3.0)
    U = OverlapMatrix.from_off_diagonal(3, [0.2, -0.1, 0.4])
    expected = 0.5 * float(np.sum(params.mixture.xi(U.entries))) + 3 * math.log(2)
    assert psi_value(U, np.zeros((3, 3)), np.zeros(3), params) == pytest.approx(expected, abs=1e-13)


def test_psi_regime_and_psd():
    params = ModelParams.create(a=1.5)
    with pytest.raises(ValueError):
        psi_value(GOLDEN_U, GOLDEN_Q, [0.0], params)
    with pytest.raises(NotPSD):
        psi_value(GOLDEN_U, np.array([[0.2, 0.5], [0.5, 0.2]]), [0.0], GOLDEN_PARAMS)


def test_symmetric_instance_has_zero_coupling():
    params = ModelParams.create(p=2, beta=0.7, h=0.0, a=2.3)
    U = np.eye(2)
    res = psi_inf_lambda(U, np.diag([0.4, 0.7]), params)
    assert abs(res.lam[0]) <= 1e-10


def test_gluing_required_and_glued_minimum():
    params = ModelParams.create(p=2, beta=0.5, h=0.2, a=2.0)
    U = np.array([[1.0, 1.0], [1.0, 1.0]])
    Q = np.full((2, 2), 0.5)
    with pytest.raises(GluingRequired):
        psi_inf_lambda(U, Q, params)
    res = psi_inf_lambda(U, Q, params, glue=True)
    # eps_1 = eps_2: (n/a) log E (2 ch(2z + 2h))^{a/n} with z ~ N(0, xi'(0.5))
    var = params.mixture.xi_prime(0.5)
    z, log_w = gaussian_nodes(np.array([[var]]), 256)
    tail = float(np.log(np.sum(np.exp(log_w) * (2 * np.cosh(2 * z[:, 0] + 0.4)))))
    assert res.value == pytest.approx(psi_first_line(U, Q, params) + tail, abs=1e-12)


def test_glue_examples():
    gs = glue_coordinates(np.array([[1.0, 1.0], [1.0, 1.0]]))
    assert gs.n_reduced == 1 and gs.field_weights.tolist() == [2.0]
    gs = glue_coordinates(np.array([[1.0, -1.0], [-1.0, 1.0]]))
    assert gs.n_reduced == 1 and gs.field_weights.tolist() == [0.0]
    bad = np.array([[1.0, 1.0, 1.0], [1.0, 1.0, -1.0], [1.0, -1.0, 1.0]])
    with pytest.raises(InconsistentGluing):
        glue_coordinates(bad)


def test_construct_P_examples():
    params = ModelParams.create(p=2, beta=0.5)
    pc = construct_P([0.5, 0.5], params)
    assert pc.norm_p == pytest.approx(0.5) and pc.s == pytest.approx(math.sqrt(2)) and pc.q == pytest.approx(0.5)
    assert np.allclose(pc.Q, [[0.5, 0.5], [0.5, 0.5]], atol=1e-15)
    pc = construct_P([0.6, -0.6], params)
    assert pc.q == pytest.approx(0.6)
    assert np.allclose(pc.Q, [[0.6, -0.6], [-0.6, 0.6]], atol=1e-15)
    with pytest.raises(ZeroVector):
        construct_P([0.0, 0.0], params)
    assert construct_P([0.0, 0.0], params, allow_degenerate=True).degenerate


def test_a_coefficients_reproduce_covariance():
    params = ModelParams.create(p=3, beta=0.9)
    u = np.array([0.4, -0.7, 0.2])
    pc = construct_P(u, params)
    mix = params.mixture
    expected = mix.xi_prime(u) / mix.xi_prime(1.0 / pc.s ** 2)
    assert np.allclose(pc.a_coeffs, expected, rtol=1e-10)
    # the literal product form differs by the factor (p beta^2)^2
    assert np.allclose(pc.a_coeffs_literal, (3 * 0.81) ** 2 * expected, rtol=1e-10)


@settings(max_examples=100, deadline=None)
@given(p=st.integers(2, 4), u=st.lists(st.floats(-1, 1), min_size=1, max_size=4), a_frac=st.floats(0, 1))
def test_p_matrix_identity_property(p, u, a_frac):
    u = np.array(u)
    if p_norm(u, p) < 1e-6:
        return
    n = u.size
    params = ModelParams.create(p=p, beta=0.8, h=0.1, a=n + a_frac)
    pc = construct_P(u, params)
    ev = np.linalg.eigvalsh(pc.P)
    assert ev[0] >= -1e-12 * ev[-1]
    I, II, III, first = decompose_I_II_III(ConstraintBlock.product(u), pc.P, params)
    assert abs(III) <= 1e-10
    assert abs(I + II + III - first) <= 1e-12 * max(1.0, abs(first))


def test_regrouping_identity_generic_P():
    rng = np.random.default_rng(5)
    params = ModelParams.create(p=3, beta=0.7, h=0.0, a=2.4)
    for _ in range(20):
        A = rng.normal(size=(3, 3))
        P = A @ A.T / 3
        block = ConstraintBlock.product(rng.uniform(-0.9, 0.9, 2))
        I, II, III, first = decompose_I_II_III(block, P, params)
        assert abs(I + II + III - first) <= 1e-12 * max(1.0, abs(first))


@pytest.mark.parametrize("factor", [0.7, 1.3, 2.0])
def test_III_off_optimal_scale(factor):
    params = ModelParams.create(p=3, beta=0.6, a=2.5)
    u = np.array([0.5, -0.3])
    s = construct_P(u, params).s * factor
    pc = construct_P(u, params, s=s)
    _, _, III, _ = decompose_I_II_III(ConstraintBlock.product(u), pc.P, params)
    assert III > 0
    assert III == pytest.approx(III_closed_form(u, s, params), rel=1e-10)


def test_factorization_pointwise():
    rng = np.random.default_rng(2)
    z = rng.normal(size=(50, 3))
    lam = rng.normal(size=3)
    h = 0.35
    gam = CouplingVector(3, lam).zero_extend().values
    y = np.hstack([z, rng.normal(size=(50, 1))])
    lhs = phi_n(y, gam, h)
    rhs = phi_n(z, lam, h) + np.logaddexp(y[:, 3] + h, -(y[:, 3] + h))
    assert np.max(np.abs(lhs - rhs)) <= 1e-12


def test_embedding_identity():
    u = np.array([0.4, -0.3, 0.2])
    block = ConstraintBlock.product(u)
    lam = np.array([0.7, -1.2, 0.3])
    gam = CouplingVector(3, lam).zero_extend().values
    assert np.dot(gam, block.W.off_diagonal()) == np.dot(lam, block.U.off_diagonal())


def test_Psi_n1_brute_force():
    params = ModelParams.create(p=2, beta=0.6, h=0.2, a=1.7)
    u = np.array([0.4])
    pc = construct_P(u, params)
    block = ConstraintBlock.product(u)
    gam = np.array([0.45])
    val = Psi_value(block, pc.P, gam, params, order=256)
    # direct 4-term enumeration over (eps1, eps2) on the 1-D rank-one nodes
    y, log_w = gaussian_nodes(params.mixture.xi_prime(pc.P), 256)
    w = np.exp(log_w)
    phi = sum(np.exp(e1 * (y[:, 0] + 0.2) + e2 * (y[:, 1] + 0.2) + 0.45 * e1 * e2) for e1 in (1, -1) for e2 in (1, -1))
    tail = (1 / 1.7) * math.log(np.sum(w * phi ** (1.7 / 2)))
    first = 0.5 * 0.5 * float(np.sum(params.mixture.xi(block.W.entries) - block.W.entries * params.mixture.xi_prime(pc.P)
                                     + (1 - 1.7 / 2) * params.mixture.theta(pc.P)))
    assert val == pytest.approx(first - 0.5 * 0.45 * 0.4 + tail, abs=1e-12)


def test_holder_gap_examples():
    params = ModelParams.create(p=2, beta=0.7, h=0.0, a=1.5)
    assert abs(holder_gap([0.6], np.zeros(0), params)) <= 1e-10
    params = ModelParams.create(p=3, beta=0.8, h=0.0, a=3.4)
    lam0 = chain_verify(0.5, 3, params, u_vec=[0.5, -0.5, 0.3]).lambda0
    assert holder_gap([0.5, -0.5, 0.3], lam0, params) > 1e-4
    params = ModelParams.create(p=2, beta=0.7, h=0.3, a=2.5)
    lam0 = chain_verify(0.5, 2, params).lambda0
    assert holder_gap([0.5, 0.5], lam0, params) >= -1e-9


@settings(max_examples=40, deadline=None)
@given(u=st.lists(st.floats(-0.95, 0.95), min_size=1, max_size=3), h=st.floats(-0.5, 0.5),
       lam=st.lists(st.floats(-3, 3), min_size=3, max_size=3))
def test_holder_gap_sign_property(u, h, lam):
    u = np.array(u)
    if p_norm(u, 3) < 1e-3:
        return
    n = u.size
    params = ModelParams.create(p=3, beta=0.9, h=h, a=n + 0.5)
    assert holder_gap(u, np.array(lam[: n * (n - 1) // 2]), params) >= -1e-9


def test_strictness_examples():
    p0 = ModelParams.create(h=0.0)
    assert strictness_check([0.5, 0.5, 0.5], p0)[0] is False
    assert strictness_check([0.5, -0.2], p0)[0] is True
    assert strictness_check([0.5, -0.2], ModelParams.create(h=0.4))[0] is True
    ok, reason = strictness_check([-0.5, -0.5], ModelParams.create(h=0.3), target=-0.5)
    assert ok and "u < 0" in reason


def test_chain_negative_overlap_with_field():
    params = ModelParams.create(p=2, beta=0.6, h=0.4, a=2.5)
    rep = chain_verify(-0.5, 2, params)
    assert rep.strict and rep.holder_gap > 0 and rep.chain_ok
    assert rep.rs_q == pytest.approx(rs_value(0.5, params), abs=1e-14)


def test_chain_beta_to_zero():
    params = ModelParams.create(p=2, beta=1e-8, h=0.3, a=2.5)
    rep = chain_verify(0.4, 2, params, u_vec=[0.4, -0.2])
    assert rep.rs_q == pytest.approx(math.log(2) + math.log(math.cosh(0.3)), abs=1e-12)
    # z is degenerate at beta -> 0, so Phi_{n+1} = Phi_n 2 ch(h) and the Hoelder step is an equality
    assert abs(rep.holder_gap) <= 1e-12
    assert rep.margins["holder"] >= -1e-8 and abs(rep.margins["III"]) <= 1e-10
    # z = 0: inf_lam -lam u12 + log(2 e^lam ch 2h + 2 e^-lam), with u12 = u1 u2
    u12, c = -0.08, math.cosh(0.6)
    lam = 0.5 * math.log((1 + u12) / ((1 - u12) * c))
    closed = -lam * u12 + math.log(2 * math.exp(lam) * c + 2 * math.exp(-lam))
    assert rep.psi_inf == pytest.approx(closed, abs=1e-10)


def test_chain_precondition():
    with pytest.raises(ValueError):
        chain_verify(0.5, 2, ModelParams.create(a=3.5))


def test_psi_convex_along_segments():
    rng = np.random.default_rng(9)
    params = ModelParams.create(p=2, beta=0.7, h=0.2, a=3.2)
    u = np.array([0.5, -0.3, 0.4])
    block = ConstraintBlock.product(u)
    Q = construct_P(u, params).Q
    for _ in range(100):
        la, lb = rng.uniform(-2, 2, 3), rng.uniform(-2, 2, 3)
        t = rng.uniform()
        mid = psi_value(block.U, Q, (1 - t) * la + t * lb, params)
        assert mid <= (1 - t) * psi_value(block.U, Q, la, params) + t * psi_value(block.U, Q, lb, params) + 1e-9


def test_gradient_matches_finite_differences():
    params = ModelParams.create(p=3, beta=0.9, h=-0.2, a=3.6)
    U = OverlapMatrix.from_off_diagonal(3, [0.3, -0.2, 0.1])
    z, log_w = gaussian_nodes(params.mixture.xi_prime(np.diag([0.5, 0.7, 0.4])))
    obj = DualObjective(U.off_diagonal(), z, log_w, params.a / 3, params.h)
    lam = np.array([0.4, -0.6, 0.9])
    _, g, H = obj.evaluate(lam)
    for i in range(3):
        e = np.zeros(3)
        e[i] = 1e-5
        fd = (obj.value(lam + e) - obj.value(lam - e)) / 2e-5
        assert g[i] == pytest.approx(fd, abs=1e-6)
        _, gp, _ = obj.evaluate(lam + e)
        _, gm, _ = obj.evaluate(lam - e)
        assert np.allclose(H[:, i], (gp - gm) / 2e-5, atol=1e-6)


def test_Psi_inf_below_embedding():
    params = ModelParams.create(p=2, beta=0.8, h=0.1, a=2.6)
    u = np.array([0.3, 0.6])
    pc = construct_P(u, params)
    block = ConstraintBlock.product(u)
    res = Psi_inf_gamma(block, pc.P, params)
    lam0 = psi_inf_lambda(block.U, pc.Q, params).lam
    emb = Psi_value(block, pc.P, CouplingVector(2, lam0).zero_extend(), params)
    assert res.value <= emb + 1e-12
    assert res.grad_norm <= 1e-8


def test_holder_terms_components():
    params = ModelParams.create(p=2, beta=0.5, h=0.2, a=1.4)
    t = holder_terms([0.5], np.zeros(0), params)
    # n = 1: first and middle terms coincide in law when a_1 z has the variance of z
    assert t.gap >= -1e-12
    assert math.isfinite(t.log_phi_n1)


def test_overlap_matrix_validation():
    with pytest.raises(ValueError):
        OverlapMatrix(np.array([[1.0, 0.2], [0.3, 1.0]]))
    with pytest.raises(ValueError):
        OverlapMatrix(np.array([[0.9, 0.2], [0.2, 1.0]]))
    with pytest.raises(NotPSD):
        OverlapMatrix.from_off_diagonal(3, [0.9, 0.9, -0.9])
    with pytest.raises(ValueError):
        CouplingVector(2, [31.0])
