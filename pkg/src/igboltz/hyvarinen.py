"""Gaussian-weighted Sobolev layer: Stein operators, weak Laplacian pairings,
score identities and the Hyvarinen divergence with its two partial gradients.

All derivatives are analytic; finite differences appear only in the
`*_fd_*` verification helpers.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .manifold import BasisFunction, ChartVector, ExpDensity
from .orlicz import DensityHandle, MembershipError, luxemburg_norm
from .quadrature import HermiteRule

__all__ = [
    "DiffFunction",
    "as_diff",
    "gradient_fd_error",
    "stein",
    "AdjointReport",
    "stein_adjoint_check",
    "weak_laplacian_pairing",
    "strong_laplacian_pairing",
    "stein_square_expansion_error",
    "ScoreReport",
    "score_identities",
    "hyvarinen",
    "hyvarinen_chart_form",
    "hyvarinen_grad_first",
    "hyvarinen_grad_second",
    "GradientReport",
    "hyvarinen_gradient_fd_check",
    "tilted_laplacian_pairing_check",
    "product_rule_error",
    "tilted_sobolev_norms",
]


# ---------------------------------------------------------------- differentiable functions


@dataclass(frozen=True)
class DiffFunction:
    """A scalar function on R^n with analytic gradient and (optional) Hessian.

    value(x) -> (N,), grad(x) -> (N, n), hessian(x) -> (N, n, n) for x of shape (N, n).
    """

    value: Callable
    grad: Callable
    hessian: Callable | None = None
    label: str = field(default="f", compare=False)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(self.value(np.atleast_2d(x)), dtype=float)

    def laplacian(self, x: np.ndarray) -> np.ndarray:
        if self.hessian is None:
            raise ValueError(f"{self.label} has no second derivatives")
        return np.trace(self.hessian(np.atleast_2d(x)), axis1=1, axis2=2)

    # -- constructors

    @classmethod
    def constant(cls, c: float, n: int) -> "DiffFunction":
        return cls(
            lambda x: np.full(x.shape[0], float(c)),
            lambda x: np.zeros((x.shape[0], n)),
            lambda x: np.zeros((x.shape[0], n, n)),
            label=f"{c}",
        )

    @classmethod
    def monomial(cls, alpha: Sequence[int], coef: float = 1.0) -> "DiffFunction":
        """coef * x^alpha."""
        alpha = np.asarray(alpha, dtype=int)
        n = alpha.shape[0]

        def power(x, a):
            return np.where(a >= 0, x ** np.maximum(a, 0), 0.0)

        def value(x):
            return coef * np.prod(power(x, alpha[None, :]), axis=1)

        def grad(x):
            out = np.empty((x.shape[0], n))
            for i in range(n):
                a = alpha.copy()
                a[i] -= 1
                out[:, i] = alpha[i] * np.prod(power(x, a[None, :]), axis=1) if alpha[i] else 0.0
            return coef * out

        def hessian(x):
            out = np.zeros((x.shape[0], n, n))
            for i in range(n):
                for j in range(n):
                    a = alpha.copy()
                    a[i] -= 1
                    fac = alpha[i]
                    fac = fac * a[j]
                    a[j] -= 1
                    if fac:
                        out[:, i, j] = fac * np.prod(power(x, a[None, :]), axis=1)
            return coef * out

        return cls(value, grad, hessian, label=f"x^{tuple(alpha)}")

    @classmethod
    def trig(cls, kind: str, k: Sequence[float]) -> "DiffFunction":
        return from_basis(BasisFunction(kind, tuple(float(a) for a in k)))

    # -- algebra

    def __add__(self, other: "DiffFunction") -> "DiffFunction":
        other = as_diff(other)
        hess = None
        if self.hessian is not None and other.hessian is not None:
            hess = lambda x: self.hessian(x) + other.hessian(x)
        return DiffFunction(
            lambda x: self(x) + other(x), lambda x: self.grad(x) + other.grad(x), hess,
            label=f"({self.label} + {other.label})",
        )

    def __sub__(self, other: "DiffFunction") -> "DiffFunction":
        return self + as_diff(other).scaled(-1.0)

    def scaled(self, c: float) -> "DiffFunction":
        hess = None if self.hessian is None else (lambda x: c * self.hessian(x))
        return DiffFunction(lambda x: c * self(x), lambda x: c * self.grad(x), hess, label=f"{c}*{self.label}")

    def __mul__(self, other) -> "DiffFunction":
        if np.isscalar(other):
            return self.scaled(float(other))
        other = as_diff(other)

        def grad(x):
            return self.grad(x) * other(x)[:, None] + other.grad(x) * self(x)[:, None]

        hess = None
        if self.hessian is not None and other.hessian is not None:

            def hess(x):
                a, b = self(x), other(x)
                ga, gb = self.grad(x), other.grad(x)
                cross = ga[:, :, None] * gb[:, None, :]
                return (
                    self.hessian(x) * b[:, None, None] + other.hessian(x) * a[:, None, None]
                    + cross + np.transpose(cross, (0, 2, 1))
                )

        return DiffFunction(lambda x: self(x) * other(x), grad, hess, label=f"{self.label}*{other.label}")

    __rmul__ = __mul__


def from_basis(b: BasisFunction) -> DiffFunction:
    return DiffFunction(b.value, b.grad, b.hessian, label=str(b.to_record()))


def from_chart(u: ChartVector) -> DiffFunction:
    return DiffFunction(u.__call__, u.grad, u.hessian, label="chart")


def as_diff(f) -> DiffFunction:
    if isinstance(f, DiffFunction):
        return f
    if isinstance(f, ChartVector):
        return from_chart(f)
    if isinstance(f, BasisFunction):
        return from_basis(f)
    raise TypeError(f"cannot differentiate an object of type {type(f).__name__}")


def gradient_fd_error(f, points: np.ndarray, h: float = 1e-5) -> float:
    """Largest relative gap between the analytic gradient and centered differences."""
    f = as_diff(f)
    x = np.atleast_2d(np.asarray(points, float))
    g = f.grad(x)
    fd = np.empty_like(g)
    for j in range(x.shape[1]):
        e = np.zeros(x.shape[1])
        e[j] = h
        fd[:, j] = (f(x + e) - f(x - e)) / (2.0 * h)
    scale = np.maximum(np.abs(g), 1.0)
    return float(np.max(np.abs(fd - g) / scale))


# ---------------------------------------------------------------- Stein operator


def stein(f, j: int) -> DiffFunction:
    """delta_j f = x_j f - d_j f, with gradient e_j f + x_j grad f - grad d_j f."""
    f = as_diff(f)

    def value(x):
        return x[:, j] * f(x) - f.grad(x)[:, j]

    grad = None
    if f.hessian is not None:

        def grad(x):
            out = x[:, j][:, None] * f.grad(x) - f.hessian(x)[:, j, :]
            out[:, j] += f(x)
            return out

    else:

        def grad(x):
            raise ValueError("the gradient of delta_j f needs second derivatives of f")

    return DiffFunction(value, grad, None, label=f"delta_{j}({f.label})")


@dataclass(frozen=True)
class AdjointReport:
    lhs: np.ndarray
    rhs: np.ndarray
    max_error: float
    ok: bool


def stein_adjoint_check(f, g, rule: HermiteRule, tol: float = 1e-8) -> AdjointReport:
    """<f, d_j g>_M against <delta_j f, g>_M for every axis j."""
    f, g = as_diff(f), as_diff(g)
    x, w = rule.nodes, rule.weights
    fx, gx = f(x), g(x)
    dg, df = g.grad(x), f.grad(x)
    lhs = np.array([w @ (fx * dg[:, j]) for j in range(x.shape[1])])
    rhs = np.array([w @ ((x[:, j] * fx - df[:, j]) * gx) for j in range(x.shape[1])])
    err = float(np.max(np.abs(lhs - rhs)))
    return AdjointReport(lhs, rhs, err, err <= tol)


def weak_laplacian_pairing(f, u, rule: HermiteRule) -> float:
    """<Delta f, u> := <grad f, delta u>_M = sum_j <d_j f, x_j u - d_j u>_M."""
    f, u = as_diff(f), as_diff(u)
    x, w = rule.nodes, rule.weights
    gf, gu, ux = f.grad(x), u.grad(x), u(x)
    return float(sum(w @ (gf[:, j] * (x[:, j] * ux - gu[:, j])) for j in range(x.shape[1])))


def strong_laplacian_pairing(f, u, rule: HermiteRule) -> float:
    """<sum_j d_jj f, u>_M for twice differentiable f."""
    f, u = as_diff(f), as_diff(u)
    return float(rule.weights @ (f.laplacian(rule.nodes) * u(rule.nodes)))


def stein_square_expansion_error(u, j: int, points: np.ndarray) -> float:
    """delta_j(delta_j u) by composition against (x_j^2-1)u - 2 x_j d_j u + d_jj u."""
    u = as_diff(u)
    x = np.atleast_2d(np.asarray(points, float))
    composed = stein(stein(u, j), j)(x)
    expanded = (x[:, j] ** 2 - 1.0) * u(x) - 2.0 * x[:, j] * u.grad(x)[:, j] + u.hessian(x)[:, j, j]
    return float(np.max(np.abs(composed - expanded)))


# ---------------------------------------------------------------- score identities


@dataclass(frozen=True)
class ScoreReport:
    errors: dict
    ok: bool


def _grad_v(g: ExpDensity, x: np.ndarray) -> np.ndarray:
    return g.u.grad(x)


def score_identities(u, v: ExpDensity | ChartVector, rule: HermiteRule, tol: float = 1e-8) -> ScoreReport:
    """The four Gaussian integration-by-parts identities at g = e_M(v).

    1. E_M[grad u] = Cov_M(u, X)
    2. E_g[X - grad v] = 0
    3. E_g[grad u] = Cov_g(u, X - grad v)
    4. E_g[grad u - grad v] = Cov_g(u - v, X - grad v)
    """
    g = v if isinstance(v, ExpDensity) else ExpDensity(v, rule)
    if g.rule is not rule:
        g = g.on(rule)
    u = as_diff(u)
    x, w = rule.nodes, rule.weights
    n = x.shape[1]
    ux, gu = u(x), u.grad(x)
    vx, gv = g.u(x), g.u.grad(x)
    gw = g.node_weights
    score_dual = x - gv

    def cov(weights, a, b):
        return weights @ ((a - weights @ a) * (b - weights @ b))

    e1 = max(abs(w @ gu[:, j] - cov(w, ux, x[:, j])) for j in range(n))
    e2 = max(abs(gw @ score_dual[:, j]) for j in range(n))
    e3 = max(abs(gw @ gu[:, j] - cov(gw, ux, score_dual[:, j])) for j in range(n))
    e4 = max(abs(gw @ (gu[:, j] - gv[:, j]) - cov(gw, ux - vx, score_dual[:, j])) for j in range(n))
    errors = {"maxwell_gradient": e1, "dual_score_mean": e2, "tilted_gradient": e3, "score_difference": e4}
    errors = {k: float(v) for k, v in errors.items()}
    return ScoreReport(errors, all(e <= tol for e in errors.values()))


# ---------------------------------------------------------------- Hyvarinen divergence


def _same_rule(g: ExpDensity, f: ExpDensity) -> HermiteRule:
    if g.rule.nodes_per_axis != f.rule.nodes_per_axis or g.rule.dimension != f.rule.dimension:
        raise ValueError("both densities must use the same rule")
    return g.rule


def hyvarinen(g: ExpDensity, f: ExpDensity) -> float:
    """DH(g||f) = E_g[|grad log f - grad log g|^2] from the two score functions."""
    rule = _same_rule(g, f)
    diff = f.score(rule.nodes) - g.score(rule.nodes)
    return float(g.node_weights @ np.sum(diff * diff, axis=1))


def hyvarinen_chart_form(g: ExpDensity, f: ExpDensity) -> float:
    """E_M[|grad u - grad v|^2 e^{v - K(v)}] with f = e_M(u), g = e_M(v)."""
    rule = _same_rule(g, f)
    x = rule.nodes
    d = f.u.grad(x) - g.u.grad(x)
    tilt = np.exp(g.u(x) - g.K)
    return float(rule.weights @ (np.sum(d * d, axis=1) * tilt))


def hyvarinen_grad_first(g: ExpDensity, f: ExpDensity) -> Callable:
    """w -> d/ds DH(g || e_M(u + s w)) at s = 0, i.e. 2 E_g[grad w . (grad u - grad v)]."""
    rule = _same_rule(g, f)
    x = rule.nodes
    d = f.u.grad(x) - g.u.grad(x)

    def derivative(w) -> float:
        gw = as_diff(w).grad(x)
        return float(2.0 * g.node_weights @ np.sum(gw * d, axis=1))

    return derivative


def hyvarinen_grad_second(f: ExpDensity, g: ExpDensity) -> Callable:
    """w -> d/ds DH(e_M(v + s w) || f) at s = 0.

    Equals -2 E_g[grad w . (grad u - grad v)] + Cov_g(w, |grad u - grad v|^2).
    """
    rule = _same_rule(g, f)
    x = rule.nodes
    d = f.u.grad(x) - g.u.grad(x)
    sq = np.sum(d * d, axis=1)

    def derivative(w) -> float:
        w = as_diff(w)
        gw = w.grad(x)
        return float(-2.0 * g.node_weights @ np.sum(gw * d, axis=1) + g.cov(w(x), sq))

    return derivative


@dataclass(frozen=True)
class GradientReport:
    analytic: np.ndarray
    finite_difference: np.ndarray
    max_rel_error: float
    ok: bool


def hyvarinen_gradient_fd_check(
    g: ExpDensity, f: ExpDensity, directions: Sequence[ChartVector], argument: str = "first",
    h: float = 1e-5, rtol: float = 1e-5,
) -> GradientReport:
    """Analytic partial derivatives of DH against centered finite differences.

    argument="first" moves f = e_M(u + s w); argument="second" moves g = e_M(v + s w).
    Relative error is measured against max(|fd|, 1e-3 * scale) where scale is the
    largest |fd| over the sweep, so directions with a vanishing derivative do not
    divide by zero.
    """
    rule = _same_rule(g, f)
    if argument == "first":
        grad = hyvarinen_grad_first(g, f)

        def value(w, s):
            return hyvarinen(g, ExpDensity(f.u + w * s, rule))

    elif argument == "second":
        grad = hyvarinen_grad_second(f, g)

        def value(w, s):
            return hyvarinen(ExpDensity(g.u + w * s, rule), f)

    else:
        raise ValueError("argument must be 'first' or 'second'")
    an = np.array([grad(w) for w in directions])
    fd = np.array([(value(w, h) - value(w, -h)) / (2 * h) for w in directions])
    scale = max(float(np.max(np.abs(fd))), 1e-300)
    rel = np.abs(an - fd) / np.maximum(np.abs(fd), 1e-3 * scale)
    err = float(np.max(rel))
    return GradientReport(an, fd, err, err <= rtol)


def tilted_laplacian_pairing_check(w1, w2, g: ExpDensity) -> tuple[float, float]:
    """<Delta w2, w1 e^{v-K}>_M against -E_g[grad w1 . grad w2] + E_g[w1 (X - grad v) . grad w2]."""
    w1, w2 = as_diff(w1), as_diff(w2)
    x = g.rule.nodes
    lhs = float(g.rule.weights @ (w2.laplacian(x) * w1(x) * g.node_ratio))
    g1, g2 = w1.grad(x), w2.grad(x)
    dual = x - g.u.grad(x)
    rhs = float(
        -g.node_weights @ np.sum(g1 * g2, axis=1)
        + g.node_weights @ (w1(x) * np.sum(dual * g2, axis=1))
    )
    return lhs, rhs


def product_rule_error(u: ChartVector, rule: HermiteRule, points: np.ndarray, h: float = 1e-3) -> float:
    """grad e^{u-K} = grad u e^{u-K}, against a five-point difference stencil.

    The fourth-order stencil keeps truncation near h^4 so the check resolves
    agreement at the 1e-10 level.
    """
    q = ExpDensity(u, rule)
    x = np.atleast_2d(np.asarray(points, float))
    analytic = u.grad(x) * q.ratio(x)[:, None]
    fd = np.empty_like(analytic)
    for j in range(x.shape[1]):
        e = np.zeros(x.shape[1])
        e[j] = h
        fd[:, j] = (
            -q.ratio(x + 2 * e) + 8 * q.ratio(x + e) - 8 * q.ratio(x - e) + q.ratio(x - 2 * e)
        ) / (12 * h)
    scale = np.maximum(np.abs(analytic), 1.0)
    return float(np.max(np.abs(fd - analytic) / scale))


def tilted_sobolev_norms(f, u: ChartVector, rule: HermiteRule) -> dict:
    """Phi*-Luxemburg norms under M of F = f e^{u-K} and of each component of grad F.

    A finite value at rule resolution is the membership certificate; a
    failed bracket is reported as inf.
    """
    f = as_diff(f)
    q = ExpDensity(u, rule)
    x = rule.nodes
    tilt = q.node_ratio
    values = f(x) * tilt
    grads = (f.grad(x) + f(x)[:, None] * u.grad(x)) * tilt[:, None]
    m = DensityHandle.maxwell(rule)
    out = {}

    def norm(vals):
        try:
            return luxemburg_norm(vals, m, "phi_star")
        except MembershipError:
            return float("inf")

    out["value"] = norm(values)
    for j in range(x.shape[1]):
        out[f"grad_{j}"] = norm(grads[:, j])
    return out
