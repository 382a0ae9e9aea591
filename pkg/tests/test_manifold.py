import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad

from igboltz import manifold as mf
from igboltz.orlicz import DensityHandle
from igboltz.quadrature import SeededSampler, make_hermite_rule

R1 = make_hermite_rule(1, 40)
R2 = make_hermite_rule(2, 30)
X1 = (mf.hermite(1),)
Q1 = (mf.hermite(1), mf.hermite(2))
B2 = mf.hermite_basis(2) + (mf.cosine(1.0, 0.5), mf.sine(0.3, 1.0))


def quad_cumulant(u):
    """log E_M[e^u] by adaptive quadrature, an oracle independent of the rule."""
    val = quad(lambda t: np.exp(u(np.array([[t]]))[0] - t * t / 2) / np.sqrt(2 * np.pi), -30, 30, limit=400)[0]
    return np.log(val)


def random_chart(rng, basis, scale=0.15):
    return mf.ChartVector.centered(basis, scale * rng.standard_normal(len(basis)))


def test_basis_validation():
    with pytest.raises(ValueError):
        mf.hermite(2, 1)
    with pytest.raises(ValueError):
        mf.hermite(0, 0)
    with pytest.raises(ValueError):
        mf.cosine(0.0, 0.0)


def test_basis_gradients_match_differences():
    rng = SeededSampler(0).generator
    x = rng.standard_normal((10, 2))
    h = 1e-6
    for b in B2:
        fd = np.column_stack([
            (b.value(x + h * e) - b.value(x - h * e)) / (2 * h) for e in np.eye(2)
        ])
        assert np.max(np.abs(fd - b.grad(x))) < 1e-8


def test_cumulant_examples():
    assert mf.cumulant(mf.ChartVector.zero(X1), R1) == 0.0
    u = mf.ChartVector.centered(X1, [1.0])
    assert abs(mf.cumulant(u, R1) - 0.5) < 1e-10
    b = 0.2
    u = mf.ChartVector.centered(Q1, [0.0, b])
    assert abs(mf.cumulant(u, R1) - (-b - 0.5 * np.log(1 - 2 * b))) < 1e-8
    assert mf.cumulant(u, R1) == pytest.approx(quad_cumulant(u), abs=1e-10)


def test_cumulant_positive_off_zero():
    rng = SeededSampler(1).generator
    for _ in range(20):
        assert mf.cumulant(random_chart(rng, B2), R2) > 0.0


def test_guard_rejects_unbounded_quadratic():
    u = mf.ChartVector.centered(Q1, [0.0, 0.5])
    with pytest.raises(mf.DomainGuardError):
        u.check_guard()


def test_cumulant_derivative_examples():
    zero = mf.ChartVector.zero(X1)
    x = lambda n: n[:, 0]
    assert abs(mf.cumulant_d1(zero, x, R1)) < 1e-14
    tilted = mf.ChartVector.centered(X1, [0.7])
    assert abs(mf.cumulant_d1(tilted, x, R1) - 0.7) < 1e-9
    assert abs(mf.cumulant_d2(zero, x, x, R1) - 1.0) < 1e-12
    assert abs(mf.cumulant_d3(zero, x, x, x, R1)) < 1e-12


def test_first_derivative_finite_difference():
    rng = SeededSampler(2).generator
    eps = 1e-5
    for _ in range(10):
        u, v = random_chart(rng, B2), random_chart(rng, B2)
        fd = (mf.cumulant(u + eps * v, R2) - mf.cumulant(u - eps * v, R2)) / (2 * eps)
        d1 = mf.cumulant_d1(u, v, R2)
        assert abs(fd - d1) < 1e-6 * max(abs(d1), 1e-3)


def test_second_and_third_derivative_finite_difference():
    rng = SeededSampler(3).generator
    u, v = random_chart(rng, B2), random_chart(rng, B2)
    eps = 1e-3
    d1 = lambda s: mf.cumulant_d1(u + s * v, v, R2)
    fd2 = (d1(eps) - d1(-eps)) / (2 * eps)
    assert fd2 == pytest.approx(mf.cumulant_d2(u, v, v, R2), rel=1e-5)
    d2 = lambda s: mf.cumulant_d2(u + s * v, v, v, R2)
    fd3 = (d2(eps) - d2(-eps)) / (2 * eps)
    assert fd3 == pytest.approx(mf.cumulant_d3(u, v, v, v, R2), rel=1e-4)


def test_chart_maps():
    assert np.allclose(mf.chart_to_density(mf.ChartVector.zero(X1), R1).node_ratio, 1.0)
    a = 0.8
    q = mf.chart_to_density(mf.ChartVector.centered(X1, [a]), R1)
    x = np.linspace(-3, 3, 7)[:, None]
    gaussian = np.exp(-((x[:, 0] - a) ** 2) / 2) / np.exp(-x[:, 0] ** 2 / 2)
    assert np.allclose(q.ratio(x), gaussian, rtol=1e-12)


def test_chart_round_trip():
    rng = SeededSampler(4).generator
    worst = 0.0
    for _ in range(50):
        u = random_chart(rng, B2)
        back = mf.density_to_chart(mf.chart_to_density(u, R2))
        worst = max(worst, np.max(np.abs(back.coef - u.coef)), abs(back.const - u.const))
    assert worst < 1e-9


def test_not_representable():
    q = mf.chart_to_density(mf.ChartVector.centered(B2, [0.1, 0, 0, 0, 0, 0.3, 0]), R2)
    with pytest.raises(mf.NotRepresentableError):
        mf.density_to_chart(q, basis=mf.hermite_basis(2))


def test_transports():
    p = mf.chart_to_density(mf.ChartVector.zero(X1), R1)
    u = mf.ChartVector.centered(X1, [1.0])
    same = mf.e_transport(u, p, p)
    assert np.allclose(same(R1.nodes), u(R1.nodes), atol=1e-14)
    a = 0.6
    q = mf.chart_to_density(mf.ChartVector.centered(X1, [a]), R1)
    moved = mf.e_transport(u, p, q)
    assert np.allclose(moved(R1.nodes), R1.nodes[:, 0] - a, atol=1e-10)


def test_transport_duality():
    rng = SeededSampler(5).generator
    for _ in range(50):
        p = mf.chart_to_density(random_chart(rng, B2), R2)
        q = mf.chart_to_density(random_chart(rng, B2), R2)
        u = random_chart(rng, B2, 1.0).recentered()
        u = u - p.expect(u)
        w = random_chart(rng, B2, 1.0)
        v = lambda x, w=w: w(x) - q.expect(w)
        # <e-transport of u from p to q, v>_q equals <u, m-transport of v from q to p>_p
        lhs = q.expect(lambda x: mf.e_transport(u, p, q)(x) * v(x))
        rhs = p.expect(lambda x: u(x) * mf.m_transport(v, q, p)(x))
        assert abs(lhs - rhs) < 1e-8


def test_arc_connectivity():
    p = mf.chart_to_density(mf.ChartVector.zero(X1), R1)
    assert mf.connected_by_arc(p, p).status == "connected"
    q = mf.chart_to_density(mf.ChartVector.centered(X1, [1.0]), R1)
    assert mf.connected_by_arc(p, q).status == "connected"
    base = mf.chart_to_density(mf.ChartVector.zero(Q1), R1)
    edge = mf.chart_to_density(mf.ChartVector.centered(Q1, [0.0, 0.4999]), R1)
    assert mf.connected_by_arc(base, edge).status == "undetermined"


def test_duality_product_rule():
    curve = mf.DensityCurve.line(mf.ChartVector.zero(X1), mf.ChartVector.centered(X1, [1.0]), R1)
    F = mf.FunctionCurve.constant(lambda x: x[:, 0])
    G = mf.FunctionCurve.constant(lambda x: x[:, 0] ** 2 - 1)
    report = mf.duality_product_rule_check(F, G, curve, 0.3)
    assert report.ok
    still = mf.DensityCurve.line(mf.ChartVector.zero(X1), mf.ChartVector.zero(X1), R1)
    flat = mf.duality_product_rule_check(F, G, still, 0.0)
    assert abs(flat.finite_difference) < 1e-10 and abs(flat.product_rule) < 1e-12


def test_duality_product_rule_sweep():
    rng = SeededSampler(6).generator
    for _ in range(20):
        start, direction = random_chart(rng, B2), random_chart(rng, B2)
        curve = mf.DensityCurve.line(start, direction, R2)
        c1, c2 = rng.standard_normal(2)
        # both fields are centered under p(t), as the mixture and exponential fibers require
        F = mf.centered_field(
            mf.FunctionCurve(lambda t, c=c1: (lambda x: np.cos(t) * x[:, 0] + c * x[:, 1] ** 2),
                             lambda t: (lambda x: -np.sin(t) * x[:, 0])), curve)
        G = mf.centered_field(
            mf.FunctionCurve(lambda t, c=c2: (lambda x: t * x[:, 1] + c * x[:, 0] * x[:, 1]),
                             lambda t: (lambda x: x[:, 1])), curve)
        assert mf.duality_product_rule_check(F, G, curve, 0.2).ok


def test_gradient_identity_and_velocity():
    rng = SeededSampler(7).generator
    M = DensityHandle.maxwell(R2)
    for _ in range(5):
        u, v = random_chart(rng, B2), random_chart(rng, B2)
        q = mf.chart_to_density(u, R2)
        lhs = M.expect(lambda x: (q.ratio(x) - 1.0) * v(x))
        assert abs(lhs - mf.cumulant_d1(u, v, R2)) < 1e-8
        curve = mf.DensityCurve.line(mf.ChartVector.zero(B2), u, R2)
        t, h = 0.7, 1e-5
        fd = (curve.density(t + h).log_ratio(R2.nodes) - curve.density(t - h).log_ratio(R2.nodes)) / (2 * h)
        assert np.max(np.abs(fd - mf.curve_score(curve, t)(R2.nodes))) < 1e-8


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from([0.25, 0.5, 0.75]))
def test_cumulant_convex_along_segments(seed, lam):
    rng = np.random.default_rng(seed)
    u1, u2 = random_chart(rng, B2), random_chart(rng, B2)
    mix = mf.cumulant(lam * u1 + (1 - lam) * u2, R2)
    assert mix <= lam * mf.cumulant(u1, R2) + (1 - lam) * mf.cumulant(u2, R2) + 1e-10
