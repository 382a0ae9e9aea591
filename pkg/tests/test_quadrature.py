import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.polynomial.hermite_e import hermegauss

from igboltz.quadrature import (
    EvaluationDomainError,
    ResourceLimitError,
    SeededSampler,
    expect,
    hermite_nodes_1d,
    make_hermite_rule,
    make_radial_rule,
    make_sphere_rule,
    monte_carlo_mean,
)


def test_second_moment_1d():
    assert abs(expect(make_hermite_rule(1, 8), lambda x: x[:, 0] ** 2) - 1.0) < 1e-12


def test_fourth_moment_1d():
    # double factorial (2k-1)!! at k = 2
    assert abs(expect(make_hermite_rule(1, 8), lambda x: x[:, 0] ** 4) - 3.0) < 1e-12


def test_squared_norm_3d():
    rule = make_hermite_rule(3, 8)
    assert abs(expect(rule, lambda x: np.sum(x**2, axis=1)) - 3.0) < 1e-12


def test_nodes_match_numpy_golub_welsch_oracle():
    x, w = hermite_nodes_1d(12)
    xo, wo = hermegauss(12)
    order = np.argsort(xo)
    assert np.allclose(np.sort(x), xo[order], atol=1e-12)
    assert np.allclose(w[np.argsort(x)], wo[order] / wo.sum(), atol=1e-14)


def test_rule_invariants():
    rule = make_hermite_rule(2, 9)
    assert abs(rule.weights.sum() - 1.0) < 1e-13
    assert np.all(rule.weights >= 0)
    for j in range(2):
        assert abs(expect(rule, lambda x: x[:, j])) < 1e-10
        assert abs(expect(rule, lambda x: x[:, j] ** 2) - 1.0) < 1e-10
        assert abs(expect(rule, lambda x: x[:, j] ** 4) - 3.0) < 1e-10


def test_constant_and_independence():
    rule = make_hermite_rule(2, 8)
    assert expect(rule, lambda x: np.ones(x.shape[0])) == pytest.approx(1.0, abs=1e-14)
    assert abs(expect(rule, lambda x: x[:, 0] * x[:, 1])) < 1e-13


def test_cosh_expectation():
    rule = make_hermite_rule(1, 30)
    value = expect(rule, lambda x: np.cosh(x[:, 0]) - 1.0)
    assert abs(value - (np.exp(0.5) - 1.0)) < 1e-10


def test_budget_and_validation():
    with pytest.raises(ResourceLimitError):
        make_hermite_rule(4, 40, budget=10**6)
    with pytest.raises(ValueError):
        make_hermite_rule(0, 8)
    with pytest.raises(ValueError):
        make_hermite_rule(1, 1)


def test_nonfinite_integrand_names_node():
    rule = make_hermite_rule(1, 4)
    with pytest.raises(EvaluationDomainError) as err:
        expect(rule, lambda x: np.where(x[:, 0] > 1.0, np.inf, 0.0))
    assert "node" in str(err.value)


def test_sphere_rule_examples():
    rule = make_sphere_rule(8, 8)
    kappa = np.array([0.3, -0.5, 0.8])
    kappa /= np.linalg.norm(kappa)
    assert rule.integrate(lambda s: np.ones(s.shape[0])) == pytest.approx(1.0, abs=1e-15)
    assert abs(rule.integrate(lambda s: (s @ kappa) ** 2) - 1.0 / 3.0) < 1e-12
    # the hemisphere integrand is only piecewise smooth; the aligned rule resolves it
    half = rule.aligned(kappa).integrate(lambda s: np.maximum(s @ kappa, 0.0))
    assert abs(half - 0.25) < 1e-10


def test_sphere_rule_invariants():
    rule = make_sphere_rule(6, 8)
    assert abs(rule.weights.sum() - 1.0) < 1e-13
    assert np.max(np.abs(np.linalg.norm(rule.nodes, axis=1) - 1.0)) < 1e-14
    mean = rule.weights @ rule.nodes
    second = (rule.nodes * rule.weights[:, None]).T @ rule.nodes
    assert np.max(np.abs(mean)) < 1e-12
    assert np.max(np.abs(second - np.eye(3) / 3.0)) < 1e-12
    with pytest.raises(ValueError):
        make_sphere_rule(1, 8)
    with pytest.raises(ValueError):
        make_sphere_rule(4, 3)


def test_radial_rule_matches_chi3_moments():
    rule = make_radial_rule(6)
    # chi with three degrees of freedom: E[r^2] = 3, E[r^4] = 15
    assert abs(rule.weights @ rule.nodes**2 - 3.0) < 1e-12
    assert abs(rule.weights @ rule.nodes**4 - 15.0) < 1e-11


def test_sampler_reproducible_and_substreams_differ():
    a = SeededSampler(42).normal(10)
    b = SeededSampler(42).normal(10)
    c = SeededSampler(42).substream(1).normal(10)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_monte_carlo_agrees_with_quadrature():
    rule = make_hermite_rule(2, 6)
    g = lambda x: x[:, 0] ** 4 * x[:, 1] ** 2 + x[:, 0] * x[:, 1] ** 3 + x[:, 1] ** 2
    exact = expect(rule, g)
    mean, se = monte_carlo_mean(g(SeededSampler(3).normal((1_000_000, 2))))
    assert abs(mean - exact) < 5 * se


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 12), st.integers(0, 23), st.integers(0, 23))
def test_exact_up_to_degree_2m_minus_1(m, a, b):
    a, b = a % (2 * m), b % (2 * m)
    rule = make_hermite_rule(2, m)
    value = expect(rule, lambda x: x[:, 0] ** a * x[:, 1] ** b)

    def gaussian_moment(k):
        return 0.0 if k % 2 else float(np.prod(np.arange(k - 1, 0, -2))) if k else 1.0

    exact = gaussian_moment(a) * gaussian_moment(b)
    # odd moments cancel between mirrored nodes, so rounding scales with E|g|
    scale = expect(rule, lambda x: np.abs(x[:, 0] ** a * x[:, 1] ** b))
    assert abs(value - exact) < 1e-11 * (abs(exact) + 1.0) + 1e-15 * scale
