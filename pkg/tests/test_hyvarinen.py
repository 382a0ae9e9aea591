import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays
from scipy.integrate import quad

from igboltz import manifold as mf
from igboltz.hyvarinen import (
    DiffFunction,
    as_diff,
    gradient_fd_error,
    hyvarinen,
    hyvarinen_chart_form,
    hyvarinen_grad_first,
    hyvarinen_grad_second,
    hyvarinen_gradient_fd_check,
    tilted_laplacian_pairing_check,
    product_rule_error,
    score_identities,
    stein,
    stein_adjoint_check,
    stein_square_expansion_error,
    strong_laplacian_pairing,
    tilted_sobolev_norms,
    weak_laplacian_pairing,
)
from igboltz.quadrature import SeededSampler, make_hermite_rule

R1 = make_hermite_rule(1, 60)
R2 = make_hermite_rule(2, 40)
MIXED = (mf.hermite(1, 0), mf.hermite(0, 1), mf.hermite(1, 1), mf.hermite(2, 0),
         mf.cosine(1.0, 0.5), mf.sine(0.3, -0.7))


def gauss(fn):
    """E_M[fn(x)] in one dimension by adaptive quadrature."""
    return quad(lambda x: fn(x) * np.exp(-0.5 * x * x) / np.sqrt(2 * np.pi), -np.inf, np.inf, epsabs=1e-13)[0]


def mixed_chart(seed, scale=0.1):
    rng = SeededSampler(seed).generator
    coef = scale * rng.standard_normal(len(MIXED))
    coef[3] = -abs(coef[3])  # keeps the quadratic part integrable
    return mf.ChartVector.centered(MIXED, coef)


def x1(power=1, coef=1.0):
    return DiffFunction.monomial([power], coef)


# ---------------------------------------------------------------- Stein operator


def test_stein_of_constant_and_linear():
    pts = np.linspace(-2, 2, 7)[:, None]
    assert np.allclose(stein(DiffFunction.constant(1.0, 1), 0)(pts), pts[:, 0])
    assert np.allclose(stein(x1(), 0)(pts), pts[:, 0] ** 2 - 1)


def test_stein_adjoint_examples():
    rep = stein_adjoint_check(DiffFunction.constant(1.0, 1), DiffFunction.constant(1.0, 1), R1)
    assert rep.ok and np.all(rep.lhs == 0)
    # <x^2, d g> with g = x is E[x^2] = 1; <delta x^2, x> = E[(x^3 - 2x) x] = 1
    rep = stein_adjoint_check(x1(2), x1(), R1)
    assert rep.lhs[0] == pytest.approx(1.0, abs=1e-12) and rep.rhs[0] == pytest.approx(1.0, abs=1e-12)
    sin = DiffFunction.trig("sin", [1.0])
    rep = stein_adjoint_check(sin, x1(2), R1)
    assert rep.ok
    assert rep.lhs[0] == pytest.approx(gauss(lambda x: 2 * x * np.sin(x)), abs=1e-12)
    assert rep.rhs[0] == pytest.approx(gauss(lambda x: (x * np.sin(x) - np.cos(x)) * x * x), abs=1e-12)


def test_stein_adjoint_seeded_pairs():
    rng = SeededSampler(20).generator
    funcs = [as_diff(b) for b in MIXED]
    for _ in range(100):
        i, j, k = rng.integers(0, len(funcs), 3)
        f = funcs[i] * funcs[j]
        rep = stein_adjoint_check(f, funcs[k], R2)
        assert rep.ok, rep.max_error


@settings(max_examples=30, deadline=None)
@given(arrays(float, 4, elements=st.floats(-2.0, 2.0)))
def test_stein_adjoint_polynomials(c):
    f = x1(3, c[0]) + x1(1, c[1])
    g = x1(2, c[2]) + DiffFunction.trig("cos", [c[3] + 2.5])
    assert stein_adjoint_check(f, g, R1).max_error < 1e-9 * (1 + np.sum(np.abs(c)) ** 2)


def test_stein_square_expansion():
    pts = SeededSampler(21).generator.standard_normal((20, 2))
    for u in (mixed_chart(1), as_diff(mf.cosine(0.5, 1.5)) * as_diff(mf.hermite(1, 0))):
        for j in range(2):
            assert stein_square_expansion_error(u, j, pts) < 1e-10


# ---------------------------------------------------------------- weak Laplacian


def test_weak_laplacian_examples():
    one = DiffFunction.constant(1.0, 1)
    assert weak_laplacian_pairing(x1(2), one, R1) == pytest.approx(2.0, abs=1e-12)
    assert abs(weak_laplacian_pairing(x1(1, 3.0), one, R1)) < 1e-13
    assert weak_laplacian_pairing(x1(4), x1(2), R1) == pytest.approx(strong_laplacian_pairing(x1(4), x1(2), R1), abs=1e-8)
    # E[x^4 . 12 x^2... ] oracle: <12 x^2, x^2>_M = 36
    assert strong_laplacian_pairing(x1(4), x1(2), R1) == pytest.approx(36.0, abs=1e-10)


def test_weak_laplacian_against_one_across_basis():
    one = DiffFunction.constant(1.0, 2)
    x = R2.nodes
    for b in MIXED:
        f = as_diff(b)
        oracle = R2.weights @ ((np.sum(x * x, axis=1) - 2) * f(x))
        assert abs(weak_laplacian_pairing(f, one, R2) - oracle) < 1e-8
        assert abs(strong_laplacian_pairing(f, one, R2) - oracle) < 1e-8


# ---------------------------------------------------------------- gradients and score identities


def test_gradients_match_finite_differences():
    pts = SeededSampler(22).generator.standard_normal((20, 2))
    for seed in range(5):
        assert gradient_fd_error(mixed_chart(seed, 0.5), pts) < 1e-7
    assert gradient_fd_error(as_diff(mf.sine(1.0, 2.0)) * as_diff(mf.hermite(1, 1)), pts) < 1e-7


def test_score_identities_trivial_and_bounded_feature():
    zero = mf.ChartVector.zero((mf.hermite(1),))
    rep = score_identities(zero, zero, R1)
    assert rep.ok and max(rep.errors.values()) < 1e-15
    sin = DiffFunction.trig("sin", [1.0])
    x = R1.nodes
    assert R1.weights @ sin.grad(x)[:, 0] == pytest.approx(np.exp(-0.5), abs=1e-12)
    assert R1.weights @ (sin(x) * x[:, 0]) == pytest.approx(gauss(lambda t: np.sin(t) * t), abs=1e-12)
    assert score_identities(sin, zero, R1).errors["maxwell_gradient"] < 1e-9


def test_score_identities_seeded():
    for seed in range(10):
        rep = score_identities(mixed_chart(seed + 10), mixed_chart(seed + 30), R2)
        assert rep.ok, rep.errors


# ---------------------------------------------------------------- Hyvarinen divergence


def test_hyvarinen_examples():
    basis = (mf.hermite(1), mf.hermite(2))
    M = mf.ExpDensity(mf.ChartVector.zero(basis), R1)
    assert hyvarinen(M, M) == 0.0
    for m in (1.0, 0.4, -1.3):
        f = mf.ExpDensity(mf.ChartVector.centered(basis, [m, 0.0]), R1)
        assert hyvarinen(M, f) == pytest.approx(m * m, abs=1e-9)
        assert hyvarinen_chart_form(M, f) == pytest.approx(m * m, abs=1e-9)
    # variance 1/(1 - 2a): scores differ by 2a x
    a = 0.2
    f = mf.ExpDensity(mf.ChartVector.centered(basis, [0.0, a]), R1)
    assert hyvarinen(M, f) == pytest.approx(4 * a * a, abs=1e-10)
    assert hyvarinen(f, M) == pytest.approx(4 * a * a / (1 - 2 * a), abs=1e-10)
    assert abs(hyvarinen(M, f) - hyvarinen(f, M)) > 1e-2


def test_hyvarinen_value_and_chart_form_agree():
    for seed in range(5):
        g = mf.ExpDensity(mixed_chart(seed), R2)
        f = mf.ExpDensity(mixed_chart(seed + 50), R2)
        assert hyvarinen(g, f) >= 0
        assert abs(hyvarinen(g, f) - hyvarinen_chart_form(g, f)) < 1e-9


def test_hyvarinen_first_gradient_examples():
    basis = (mf.hermite(1), mf.hermite(2))
    M = mf.ExpDensity(mf.ChartVector.zero(basis), R1)
    a = 0.7
    f = mf.ExpDensity(mf.ChartVector.centered(basis, [a, 0.0]), R1)
    w = mf.ChartVector.centered(basis, [1.0, 0.0])
    assert hyvarinen_grad_first(M, f)(w) == pytest.approx(2 * a, abs=1e-12)
    rep = hyvarinen_gradient_fd_check(M, f, [w])
    assert rep.ok and rep.finite_difference[0] == pytest.approx(2 * a, rel=1e-8)
    g = mf.ExpDensity(mixed_chart(3), R2)
    same = hyvarinen_grad_first(g, g)
    assert all(abs(same(mixed_chart(s))) < 1e-15 for s in range(3))


@pytest.mark.parametrize("argument", ["first", "second"])
def test_hyvarinen_gradients_fd_sweep(argument):
    g = mf.ExpDensity(mixed_chart(60), R2)
    f = mf.ExpDensity(mixed_chart(61, 0.2), R2)
    directions = [mixed_chart(100 + k, 1.0) for k in range(20)]
    rep = hyvarinen_gradient_fd_check(g, f, directions, argument)
    assert rep.ok, rep.max_rel_error
    with pytest.raises(ValueError):
        hyvarinen_gradient_fd_check(g, f, directions[:1], "third")


def test_second_gradient_has_covariance_term():
    g = mf.ExpDensity(mixed_chart(62), R2)
    f = mf.ExpDensity(mixed_chart(63, 0.3), R2)
    w = mixed_chart(64, 1.0)
    x = R2.nodes
    d = f.u.grad(x) - g.u.grad(x)
    cov = g.cov(w(x), np.sum(d * d, axis=1))
    assert hyvarinen_grad_second(f, g)(w) == pytest.approx(-hyvarinen_grad_first(g, f)(w) + cov, abs=1e-14)


def test_tilted_laplacian_pairing():
    for seed in range(10):
        g = mf.ExpDensity(mixed_chart(seed + 70), R2)
        lhs, rhs = tilted_laplacian_pairing_check(mixed_chart(seed + 80, 1.0), mixed_chart(seed + 90, 1.0), g)
        assert abs(lhs - rhs) < 1e-8


# ---------------------------------------------------------------- tilted Sobolev membership


def test_product_rule_and_tilted_norms():
    pts = SeededSampler(23).generator.standard_normal((20, 2))
    for seed in range(5):
        u = mixed_chart(seed + 110)
        assert product_rule_error(u, R2, pts) < 1e-10
        norms = tilted_sobolev_norms(mixed_chart(seed + 120, 1.0), u, R2)
        assert set(norms) == {"value", "grad_0", "grad_1"}
        assert all(np.isfinite(v) and v > 0 for v in norms.values())


def test_missing_second_derivatives_are_reported():
    f = DiffFunction(lambda x: x[:, 0], lambda x: np.ones_like(x))
    with pytest.raises(ValueError):
        f.laplacian(np.zeros((1, 1)))
    with pytest.raises(ValueError):
        stein(f, 0).grad(np.zeros((1, 1)))
    with pytest.raises(TypeError):
        as_diff(3.0)
