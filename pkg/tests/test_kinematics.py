import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from igboltz import kinematics as kin
from igboltz.quadrature import SeededSampler, make_sphere_rule

FINE = make_sphere_rule(128, 16)
KAPPA = kin.vers(np.array([0.2, -0.4, 0.9]))


def test_sigma_collision_examples():
    v, w = np.array([1.0, 0.0, 0.0]), np.array([-1.0, 0.0, 0.0])
    q = kin.collide_sigma(v, w, np.array([0.0, 1.0, 0.0]))
    assert np.allclose(q.v_bar, [0, 1, 0], atol=1e-15) and np.allclose(q.w_bar, [0, -1, 0], atol=1e-15)
    assert max(q.invariant_errors().values()) < 1e-14
    v, w = np.array([0.3, 1.2, -0.5]), np.array([-0.7, 0.1, 2.0])
    same = kin.collide_sigma(v, w, kin.vers(v - w))
    assert np.allclose(same.v_bar, v, atol=1e-14) and np.allclose(same.w_bar, w, atol=1e-14)
    collapsed = kin.collide_sigma(v, v, np.array([0.0, 0.0, 1.0]))
    assert np.array_equal(collapsed.v_bar, v) and np.array_equal(collapsed.w_bar, v)
    with pytest.raises(ValueError):
        kin.collide_sigma(v, w, np.array([1.0, 1.0, 0.0]))


def test_projector_canonical_and_idempotent():
    P = kin.RankOneProjector(np.array([-1.0, 2.0, 0.5]))
    assert P.omega[0] > 0
    assert np.array_equal(P.omega, kin.RankOneProjector(-P.omega).omega)
    M = P.matrix
    assert np.max(np.abs(M @ M - M)) < 1e-13 and np.max(np.abs(M - M.T)) < 1e-15
    assert abs(np.trace(M) - 1.0) < 1e-13


def test_pi_collision_examples():
    v, w = np.array([0.3, 1.2, -0.5]), np.array([-0.7, 0.1, 2.0])
    perp = np.cross(v - w, [1.0, 0.0, 0.0])
    q = kin.collide_pi(v, w, kin.RankOneProjector(perp))
    assert np.allclose(q.v_bar, v, atol=1e-14) and np.allclose(q.w_bar, w, atol=1e-14)
    q = kin.collide_pi(v, w, kin.RankOneProjector(v - w))
    assert np.allclose(q.v_bar, w, atol=1e-14) and np.allclose(q.w_bar, v, atol=1e-14)
    P = kin.RankOneProjector(np.array([0.3, 0.3, 0.9]))
    q = kin.collide_pi(v, w, P)
    assert np.allclose(P.matrix @ q.v_bar, P.matrix @ w, atol=1e-14)
    assert np.allclose(P.matrix @ q.w_bar, P.matrix @ v, atol=1e-14)


def test_collision_matrix_symmetric_orthogonal():
    rng = SeededSampler(0).generator
    worst = 0.0
    for om in rng.standard_normal((100, 3)):
        A = kin.collision_matrix(kin.RankOneProjector(om))
        worst = max(worst, np.max(np.abs(A @ A.T - np.eye(6))), np.max(np.abs(A - A.T)))
    assert worst < 1e-13


def test_transition_maps():
    v, w = np.array([0.3, 1.2, -0.5]), np.array([-0.7, 0.1, 2.0])
    kappa = kin.vers(v - w)
    P = kin.pi_from_sigma(v, w, -kappa)
    assert np.allclose(P.omega, kin.RankOneProjector(kappa).omega, atol=1e-15)
    assert isinstance(kin.pi_from_sigma(v, w, kappa), kin.IdentityCollision)
    with pytest.raises(kin.DegenerateCollisionError):
        kin.sigma_from_pi(v, v, P)


def test_round_trips_and_consistency():
    rng = SeededSampler(1).generator
    worst = 0.0
    for _ in range(100):
        v, w = rng.standard_normal(3), rng.standard_normal(3)
        sigma = kin.vers(rng.standard_normal(3))
        P = kin.pi_from_sigma(v, w, sigma)
        worst = max(worst, np.max(np.abs(kin.sigma_from_pi(v, w, P) - sigma)))
        P2 = kin.RankOneProjector(rng.standard_normal(3))
        back = kin.pi_from_sigma(v, w, kin.sigma_from_pi(v, w, P2))
        worst = max(worst, np.max(np.abs(back.matrix - P2.matrix)))
        qs, qp = kin.collide_sigma(v, w, sigma), kin.collide_pi(v, w, P)
        worst = max(worst, np.max(np.abs(qs.v_bar - qp.v_bar)), np.max(np.abs(qs.w_bar - qp.w_bar)))
    assert worst < 1e-12


def test_jacobian_rank():
    zero = np.zeros(3)
    assert kin.jacobian_rank(kin.CollisionQuadruple(zero, zero, zero, zero)) == 3
    p = np.array([1.0, 2.0, 3.0])
    assert kin.jacobian_rank(kin.CollisionQuadruple(p, p, p, p)) == 3
    rng = SeededSampler(2).generator
    for _ in range(20):
        q = kin.collide_sigma(rng.standard_normal(3), rng.standard_normal(3), kin.vers(rng.standard_normal(3)))
        assert kin.jacobian_rank(q) == 4


def test_sigma_to_omega_pushforward():
    one = kin.pushforward_check_sigma_to_omega(lambda o: np.ones(o.shape[0]), KAPPA, FINE)
    assert abs(one.lhs - 1.0) < 1e-12 and abs(one.rhs - 1.0) < 1e-12
    sq = kin.pushforward_check_sigma_to_omega(lambda o: (o @ KAPPA) ** 2, KAPPA, FINE)
    assert sq.error < 1e-8
    rng = SeededSampler(3).generator
    a, b = rng.standard_normal(3), rng.standard_normal(3)
    poly = lambda o: (o @ a) ** 3 * (o @ b) ** 3 + (o @ a) ** 2 + o @ b
    assert kin.pushforward_check_sigma_to_omega(poly, KAPPA, FINE).error < 1e-8
    even = lambda o: (o @ a) ** 2 * (o @ b) ** 2 + (o @ b) ** 4
    assert kin.pushforward_check_symmetric(even, KAPPA, FINE).error < 1e-8


def test_sigma_to_pi_pushforward():
    rng = SeededSampler(4).generator
    M = rng.standard_normal((3, 3))
    M = M + M.T
    # degree-3 polynomial in Pi = omega omega^T, written through omega
    g = lambda o: np.einsum("ni,ij,nj->n", o, M, o) ** 3 + np.einsum("ni,ij,nj->n", o, M, o)
    assert kin.pushforward_check_sigma_to_pi(g, KAPPA, FINE).error < 1e-7


def test_kappa_integrated_pushforward():
    outer = make_sphere_rule(12, 24)
    for f, exact in [
        (lambda o: np.ones(o.shape[0]), 1.0),
        (lambda o: o[:, 2] ** 2, 1.0 / 3.0),
        (lambda o: o[:, 2], 0.0),
    ]:
        r = kin.pushforward_check_kappa_integrated(f, FINE, outer)
        assert abs(r.lhs - exact) < 1e-7 and abs(r.rhs - exact) < 1e-9


def test_half_sphere_cosine():
    assert abs(kin.half_sphere_cosine(KAPPA, make_sphere_rule(8, 8)) - 0.25) < 1e-10


def test_nu_expectation():
    rule = make_sphere_rule(8, 8)
    assert abs(kin.nu_expectation(lambda o: np.ones(o.shape[0]), rule) - 1.0) < 1e-14
    assert abs(kin.nu_expectation(lambda o: np.sum(o * o, axis=1), rule) - 1.0) < 1e-14
    g = lambda o: (o @ KAPPA) ** 2
    assert abs(kin.nu_expectation(g, rule) - 1.0 / 3.0) < 1e-9
    rng = SeededSampler(5).generator
    assert abs(kin.rotated_nu_expectation(g, rule, rng) - kin.nu_expectation(g, rule)) < 1e-9
    with pytest.raises(ValueError):
        kin.nu_expectation(lambda o: o[:, 0], rule)


vectors = arrays(np.float64, 3, elements=st.floats(-5, 5, allow_nan=False))


@settings(max_examples=200, deadline=None)
@given(vectors, vectors, vectors)
def test_conservation_laws(v, w, s):
    if np.linalg.norm(s) < 1e-3:
        return
    q = kin.collide_sigma(v, w, s / np.linalg.norm(s))
    scale = 1.0 + np.sum(v * v) + np.sum(w * w)
    assert np.max(np.abs(q.v + q.w - q.v_bar - q.w_bar)) < 1e-12 * scale
    assert abs(v @ v + w @ w - q.v_bar @ q.v_bar - q.w_bar @ q.w_bar) < 1e-11 * scale
    assert abs(np.linalg.norm(v - w) - np.linalg.norm(q.v_bar - q.w_bar)) < 1e-11 * scale
    assert abs(v @ w - q.v_bar @ q.w_bar) < 1e-11 * scale
