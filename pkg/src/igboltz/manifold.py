"""Exponential manifold at the Gaussian density M.

A point of the chart at M is a centered function u in the span of a finite
basis (Hermite polynomials of degree <= 2 and trigonometric features), and
the density it represents is q = exp(u - K(u)) M with K(u) = log E_M[e^u].
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import factorial
from typing import Callable, Sequence

import numpy as np

from .orlicz import DensityHandle
from .quadrature import HermiteRule, expect

__all__ = [
    "BasisFunction",
    "hermite",
    "cosine",
    "sine",
    "hermite_basis",
    "ChartVector",
    "DomainGuardError",
    "NotRepresentableError",
    "ExpDensity",
    "cumulant",
    "cumulant_d1",
    "cumulant_d2",
    "cumulant_d3",
    "directional_cumulants",
    "chart_to_density",
    "density_to_chart",
    "e_transport",
    "m_transport",
    "ArcReport",
    "connected_by_arc",
    "DensityCurve",
    "FunctionCurve",
    "centered_field",
    "curve_score",
    "DualityReport",
    "duality_product_rule_check",
]


class DomainGuardError(ValueError):
    """The quadratic part of a chart vector leaves the guarded domain."""


class NotRepresentableError(ValueError):
    """A density's log-ratio is not in the span of the active basis."""


# 1-D probabilist Hermite polynomials of degree <= 2 and their derivatives
def _he(k: int, x: np.ndarray) -> np.ndarray:
    if k == 0:
        return np.ones_like(x)
    if k == 1:
        return x
    if k == 2:
        return x * x - 1.0
    raise ValueError("chart Hermite degree is limited to 2")


def _he_d(k: int, order: int, x: np.ndarray) -> np.ndarray:
    """order-th derivative of He_k (He_k' = k He_{k-1})."""
    if order > k:
        return np.zeros_like(x)
    coef = factorial(k) // factorial(k - order)
    return coef * _he(k - order, x)


@dataclass(frozen=True)
class BasisFunction:
    """A Hermite monomial He_alpha(x) or a feature cos(k.x) / sin(k.x)."""

    kind: str
    index: tuple

    def __post_init__(self):
        if self.kind == "hermite":
            if any(int(a) != a or a < 0 for a in self.index):
                raise ValueError(f"bad multi-index {self.index}")
            if sum(self.index) > 2:
                raise ValueError(
                    f"hermite basis functions have total degree <= 2, got {self.index}"
                )
            if sum(self.index) == 0:
                raise ValueError("the constant is not a chart direction")
        elif self.kind in ("cos", "sin"):
            if not any(k != 0 for k in self.index):
                raise ValueError("trigonometric feature needs a nonzero frequency")
        else:
            raise ValueError(f"unknown basis kind {self.kind!r}")

    @property
    def dimension(self) -> int:
        return len(self.index)

    @property
    def degree(self) -> int:
        return int(sum(self.index)) if self.kind == "hermite" else 0

    def mean_under_maxwell(self) -> float:
        if self.kind == "hermite":
            return 0.0
        if self.kind == "cos":
            k = np.asarray(self.index, float)
            return float(np.exp(-0.5 * k @ k))
        return 0.0

    def value(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(x)
        if self.kind == "hermite":
            out = np.ones(x.shape[0])
            for j, a in enumerate(self.index):
                if a:
                    out = out * _he(a, x[:, j])
            return out
        phase = x @ np.asarray(self.index, float)
        return np.cos(phase) if self.kind == "cos" else np.sin(phase)

    def grad(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(x)
        n = x.shape[1]
        if self.kind == "hermite":
            out = np.empty_like(x, dtype=float)
            for i in range(n):
                col = np.ones(x.shape[0])
                for j, a in enumerate(self.index):
                    order = 1 if j == i else 0
                    if a or order:
                        col = col * _he_d(a, order, x[:, j])
                out[:, i] = col
            return out
        k = np.asarray(self.index, float)
        phase = x @ k
        d = -np.sin(phase) if self.kind == "cos" else np.cos(phase)
        return d[:, None] * k[None, :]

    def hessian(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(x)
        n = x.shape[1]
        if self.kind == "hermite":
            out = np.zeros((x.shape[0], n, n))
            for i in range(n):
                for l in range(n):
                    col = np.ones(x.shape[0])
                    for j, a in enumerate(self.index):
                        order = (j == i) + (j == l)
                        if a or order:
                            col = col * _he_d(a, order, x[:, j])
                    out[:, i, l] = col
            return out
        k = np.asarray(self.index, float)
        phase = x @ k
        d2 = -np.cos(phase) if self.kind == "cos" else -np.sin(phase)
        return d2[:, None, None] * np.outer(k, k)[None, :, :]

    def to_record(self) -> dict:
        if self.kind == "hermite":
            return {"kind": "hermite", "multi_index": list(self.index)}
        return {"kind": self.kind, "frequency": list(self.index)}


def hermite(*alpha: int) -> BasisFunction:
    return BasisFunction("hermite", tuple(int(a) for a in alpha))


def cosine(*k: float) -> BasisFunction:
    return BasisFunction("cos", tuple(float(a) for a in k))


def sine(*k: float) -> BasisFunction:
    return BasisFunction("sin", tuple(float(a) for a in k))


def hermite_basis(n: int, max_degree: int = 2) -> tuple[BasisFunction, ...]:
    """All Hermite chart directions on R^n up to the given degree (<= 2)."""
    out = []
    for j in range(n):
        e = [0] * n
        e[j] = 1
        out.append(hermite(*e))
    if max_degree >= 2:
        for i in range(n):
            for j in range(i, n):
                e = [0] * n
                e[i] += 1
                e[j] += 1
                out.append(hermite(*e))
    return tuple(out)


@dataclass(frozen=True)
class ChartVector:
    """u(x) = sum_i coef_i b_i(x) + const.

    With const = -sum_i coef_i E_M[b_i] the vector is centered under M, which
    is what `ChartVector.centered` builds.  Other constants arise when a
    vector is re-centered at another density (exponential transport).
    """

    basis: tuple
    coef: np.ndarray
    const: float = 0.0

    def __post_init__(self):
        coef = np.asarray(self.coef, dtype=float).reshape(-1)
        if coef.shape[0] != len(self.basis):
            raise ValueError("coefficient vector does not match the basis")
        object.__setattr__(self, "coef", coef)
        object.__setattr__(self, "basis", tuple(self.basis))
        dims = {b.dimension for b in self.basis}
        if len(dims) > 1:
            raise ValueError("basis functions of mixed dimension")

    @classmethod
    def centered(cls, basis: Sequence[BasisFunction], coef) -> "ChartVector":
        coef = np.asarray(coef, dtype=float)
        means = np.array([b.mean_under_maxwell() for b in basis])
        return cls(tuple(basis), coef, float(-coef @ means))

    @classmethod
    def zero(cls, basis: Sequence[BasisFunction]) -> "ChartVector":
        return cls(tuple(basis), np.zeros(len(basis)), 0.0)

    @property
    def dimension(self) -> int:
        return self.basis[0].dimension

    def design(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(x)
        return np.column_stack([b.value(x) for b in self.basis])

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(x)
        out = np.full(x.shape[0], self.const)
        for a, b in zip(self.coef, self.basis):
            if a != 0.0:
                out = out + a * b.value(x)
        return out

    def grad(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(x)
        out = np.zeros_like(x, dtype=float)
        for a, b in zip(self.coef, self.basis):
            if a != 0.0:
                out = out + a * b.grad(x)
        return out

    def hessian(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(x)
        out = np.zeros((x.shape[0], x.shape[1], x.shape[1]))
        for a, b in zip(self.coef, self.basis):
            if a != 0.0:
                out = out + a * b.hessian(x)
        return out

    def laplacian(self, x: np.ndarray) -> np.ndarray:
        return np.trace(self.hessian(x), axis1=1, axis2=2)

    def _check_basis(self, other: "ChartVector"):
        if other.basis != self.basis:
            raise ValueError("chart vectors live on different bases")

    def __add__(self, other):
        if isinstance(other, ChartVector):
            self._check_basis(other)
            return ChartVector(self.basis, self.coef + other.coef, self.const + other.const)
        return ChartVector(self.basis, self.coef, self.const + float(other))

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, ChartVector):
            self._check_basis(other)
            return ChartVector(self.basis, self.coef - other.coef, self.const - other.const)
        return ChartVector(self.basis, self.coef, self.const - float(other))

    def __mul__(self, c: float):
        return ChartVector(self.basis, float(c) * self.coef, float(c) * self.const)

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0

    def mean_under_maxwell(self) -> float:
        means = np.array([b.mean_under_maxwell() for b in self.basis])
        return float(self.coef @ means + self.const)

    def recentered(self) -> "ChartVector":
        """The same function minus its M-mean."""
        return self - self.mean_under_maxwell()

    def quadratic_form(self) -> np.ndarray:
        """Symmetric Q with u(x) = x^T Q x + (lower degree) + bounded terms."""
        n = self.dimension
        Q = np.zeros((n, n))
        for a, b in zip(self.coef, self.basis):
            if b.kind != "hermite" or b.degree != 2:
                continue
            idx = [j for j, p in enumerate(b.index) for _ in range(p)]
            i, j = idx
            if i == j:
                Q[i, i] += a
            else:
                Q[i, j] += 0.5 * a
                Q[j, i] += 0.5 * a
        return Q

    def guard_pivot(self) -> float:
        """Smallest Cholesky pivot of I - 2Q (negative if not positive definite)."""
        n = self.dimension
        A = np.eye(n) - 2.0 * self.quadratic_form()
        try:
            L = np.linalg.cholesky(A)
        except np.linalg.LinAlgError:
            return -1.0
        return float(np.min(np.diag(L)) ** 2)

    def check_guard(self, threshold: float = 1e-8) -> None:
        pivot = self.guard_pivot()
        if not pivot > threshold:
            raise DomainGuardError(
                f"I - 2Q is not safely positive definite (smallest pivot {pivot:.3g})"
            )


def cumulant(u: ChartVector, rule: HermiteRule) -> float:
    """K_M(u) = log E_M[exp u] with a log-sum-exp reduction."""
    u.check_guard()
    values = u(rule.nodes)
    if not np.all(np.isfinite(values)):
        raise DomainGuardError("chart vector is not finite at every node")
    top = float(np.max(values))
    s = float(np.dot(rule.weights, np.exp(values - top)))
    # dividing by the same reduction of the weights makes K(0) = 0 exactly
    out = top + np.log(s / float(np.dot(rule.weights, np.ones_like(values))))
    if not np.isfinite(out):
        raise DomainGuardError("cumulant overflow: the quadratic guard was bypassed")
    return out


class ExpDensity(DensityHandle):
    """q = exp(u - K_M(u)) M with the cumulant cached on a given rule."""

    def __init__(self, u: ChartVector, rule: HermiteRule):
        self.u = u
        self.K = cumulant(u, rule)
        super().__init__(self.ratio, rule)
        if not np.all(self.node_ratio > 0.0):
            raise DomainGuardError("density underflows to zero at a node")

    def ratio(self, x: np.ndarray) -> np.ndarray:
        return np.exp(self.u(x) - self.K)

    def log_ratio(self, x: np.ndarray) -> np.ndarray:
        return self.u(x) - self.K

    def log_density(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(x)
        n = x.shape[1]
        return self.log_ratio(x) - 0.5 * np.sum(x * x, axis=1) - 0.5 * n * np.log(2 * np.pi)

    def score(self, x: np.ndarray) -> np.ndarray:
        """Gradient of log q: grad u - x."""
        return self.u.grad(x) - np.atleast_2d(x)

    def on(self, rule: HermiteRule) -> "ExpDensity":
        return ExpDensity(self.u, rule)

    @property
    def dimension(self) -> int:
        return self.rule.dimension

    def cov(self, a, b) -> float:
        av = a if isinstance(a, np.ndarray) else a(self.rule.nodes)
        bv = b if isinstance(b, np.ndarray) else b(self.rule.nodes)
        return self.expect((av - self.expect(av)) * (bv - self.expect(bv)))


def _as_density(u, rule: HermiteRule) -> ExpDensity:
    return u if isinstance(u, ExpDensity) else ExpDensity(u, rule)


def cumulant_d1(u: ChartVector, v, rule: HermiteRule) -> float:
    """dK(u)[v] = E_q[v] with q = e_M(u)."""
    q = _as_density(u, rule)
    return q.expect(v)


def cumulant_d2(u: ChartVector, v1, v2, rule: HermiteRule) -> float:
    q = _as_density(u, rule)
    return q.cov(v1, v2)


def cumulant_d3(u: ChartVector, v1, v2, v3, rule: HermiteRule) -> float:
    q = _as_density(u, rule)
    nodes = rule.nodes
    centered = []
    for v in (v1, v2, v3):
        vals = v if isinstance(v, np.ndarray) else v(nodes)
        centered.append(vals - q.expect(vals))
    return q.expect(centered[0] * centered[1] * centered[2])


def directional_cumulants(u: ChartVector, h, rule: HermiteRule, order: int) -> np.ndarray:
    """d^k K(u)[h,...,h] for k = 1..order: the cumulants of h under e_M(u)."""
    q = _as_density(u, rule)
    hv = h if isinstance(h, np.ndarray) else h(rule.nodes)
    raw = np.array([q.expect(hv**k) for k in range(order + 1)])
    kappa = np.zeros(order + 1)
    for n in range(1, order + 1):
        acc = raw[n]
        for k in range(1, n):
            acc -= _binom(n - 1, k - 1) * kappa[k] * raw[n - k]
        kappa[n] = acc
    return kappa[1:]


def _binom(n: int, k: int) -> float:
    return factorial(n) / (factorial(k) * factorial(n - k))


def chart_to_density(u: ChartVector, rule: HermiteRule) -> ExpDensity:
    return ExpDensity(u, rule)


def density_to_chart(
    f: ExpDensity, base: ExpDensity | None = None, basis: Sequence[BasisFunction] | None = None,
    tol: float = 1e-6,
) -> ChartVector:
    """s_p(f) = log(f/p) - E_p[log(f/p)], projected on the basis.

    The projection is a weighted least-squares fit of the node values of
    log(f/p) by the basis plus a constant; a relative residual above `tol`
    means the log-ratio is not in the span of the basis.
    """
    rule = f.rule
    basis = tuple(basis) if basis is not None else f.u.basis
    nodes = rule.nodes
    target = f.log_ratio(nodes)
    if base is not None:
        target = target - base.log_ratio(nodes)
    design = np.column_stack([np.ones(rule.size)] + [b.value(nodes) for b in basis])
    sw = np.sqrt(rule.weights)
    sol, *_ = np.linalg.lstsq(design * sw[:, None], target * sw, rcond=None)
    resid = target - design @ sol
    scale = max(1.0, float(np.sqrt(np.dot(rule.weights, target**2))))
    rel = float(np.sqrt(np.dot(rule.weights, resid**2))) / scale
    if rel > tol:
        raise NotRepresentableError(
            f"log-ratio is not representable in the basis (relative residual {rel:.3g})"
        )
    out = ChartVector(basis, sol[1:], 0.0)
    centering = base if base is not None else DensityHandle.maxwell(rule)
    return out - centering.expect(out)


def e_transport(u: ChartVector, source: DensityHandle, target: DensityHandle) -> ChartVector:
    """Exponential transport from the fiber at `source` to the one at `target`.

    Only the target matters: the result is u - E_target[u].
    """
    return u - target.expect(u)


def m_transport(v: Callable, source: ExpDensity, target: ExpDensity) -> Callable:
    """Mixture transport from the fiber at `source` to the one at `target`.

    Multiplies by source/target, so E_target of the result equals E_source[v].
    """

    def moved(x: np.ndarray) -> np.ndarray:
        return np.exp(source.log_ratio(x) - target.log_ratio(x)) * v(x)

    return moved


@dataclass(frozen=True)
class ArcReport:
    status: str  # "connected", "not_connected" or "undetermined"
    epsilon: float
    forward: tuple  # E_p[(q/p)^{1+eps}] on the base and refined rules
    backward: tuple  # E_q[(p/q)^{1+eps}] on the base and refined rules

    @property
    def connected(self) -> bool | None:
        if self.status == "undetermined":
            return None
        return self.status == "connected"

    def __bool__(self) -> bool:
        return self.status == "connected"


def _tilted_moment(p: ExpDensity, q: ExpDensity, eps: float) -> float:
    nodes = p.rule.nodes
    log_ratio = q.log_ratio(nodes) - p.log_ratio(nodes)
    with np.errstate(over="ignore"):
        terms = np.exp((1.0 + eps) * log_ratio)
    return float(np.dot(p.node_weights, terms))


def connected_by_arc(
    p: ExpDensity, q: ExpDensity, eps_grid: Sequence[float] = (0.01, 0.05, 0.1),
    extra_nodes: int = 4, stability: float = 0.1,
) -> ArcReport:
    """Numerical test for an open exponential arc between p and q.

    Both E_p[(q/p)^{1+eps}] and E_q[(p/q)^{1+eps}] are evaluated at the
    smallest eps on the shared rule and on a rule with `extra_nodes` more
    nodes per axis.  Non-finite values give "not_connected"; a relative
    change above `stability`, or a tilted exponent whose quadratic part is
    not integrable against M, gives "undetermined".
    """
    eps = float(min(eps_grid))
    # the quadratic part of the tilted exponent decides integrability exactly;
    # when it diverges, finite node sums are an artifact of the rule
    tilted = (p.u + (1.0 + eps) * (q.u - p.u), q.u + (1.0 + eps) * (p.u - q.u))
    analytic_ok = all(w.guard_pivot() > 1e-8 for w in tilted)
    rule2 = p.rule.refined(extra_nodes)
    p2, q2 = p.on(rule2), q.on(rule2)
    fwd = (_tilted_moment(p, q, eps), _tilted_moment(p2, q2, eps))
    bwd = (_tilted_moment(q, p, eps), _tilted_moment(q2, p2, eps))
    values = np.array(fwd + bwd)
    if not np.all(np.isfinite(values)):
        return ArcReport("not_connected", eps, fwd, bwd)
    change = max(abs(fwd[1] - fwd[0]) / abs(fwd[0]), abs(bwd[1] - bwd[0]) / abs(bwd[0]))
    status = "connected" if change < stability and analytic_ok else "undetermined"
    return ArcReport(status, eps, fwd, bwd)


@dataclass(frozen=True)
class DensityCurve:
    """t -> e_M(U(t)) from chart coordinates and their time derivative."""

    chart: Callable[[float], ChartVector]
    chart_velocity: Callable[[float], ChartVector]
    rule: HermiteRule

    @classmethod
    def line(cls, start: ChartVector, direction: ChartVector, rule: HermiteRule) -> "DensityCurve":
        return cls(lambda t: start + t * direction, lambda t: direction, rule)

    def density(self, t: float) -> ExpDensity:
        return ExpDensity(self.chart(t), self.rule)


def curve_score(curve: DensityCurve, t: float) -> ChartVector:
    """Velocity of the curve in the fiber at p(t): U'(t) - E_{p(t)}[U'(t)]."""
    p = curve.density(t)
    return e_transport(curve.chart_velocity(t), DensityHandle.maxwell(curve.rule), p)


@dataclass(frozen=True)
class FunctionCurve:
    """A time-dependent function with its time derivative."""

    value: Callable[[float], Callable]
    velocity: Callable[[float], Callable]

    @classmethod
    def constant(cls, f: Callable) -> "FunctionCurve":
        return cls(lambda t: f, lambda t: (lambda x: np.zeros(np.atleast_2d(x).shape[0])))


def centered_field(raw: FunctionCurve, curve: DensityCurve) -> FunctionCurve:
    """t -> A(t) - E_{p(t)}[A(t)], with its exact time derivative.

    d/dt E_p[A] = E_p[A'] + E_p[A * score], so the derivative of the
    centered field is A' - E_p[A'] - E_p[A * score].
    """

    def value(t):
        p = curve.density(t)
        A = raw.value(t)
        mean = p.expect(A)
        return lambda x: A(x) - mean

    def velocity(t):
        p = curve.density(t)
        A, Ad = raw.value(t), raw.velocity(t)
        score = curve_score(curve, t)
        shift = p.expect(Ad) + p.expect(lambda x: A(x) * score(x))
        return lambda x: Ad(x) - shift

    return FunctionCurve(value, velocity)


@dataclass(frozen=True)
class DualityReport:
    finite_difference: float
    mixture_term: float
    exponential_term: float
    rel_error: float
    ok: bool

    @property
    def product_rule(self) -> float:
        return self.mixture_term + self.exponential_term


def duality_product_rule_check(
    F: FunctionCurve, G: FunctionCurve, p_curve: DensityCurve, t0: float,
    eps: float = 1e-4, rtol: float = 1e-5,
) -> DualityReport:
    """Compare d/dt E_{p(t)}[F G] with <DF, G> + <F, DG> at t0.

    F is a section of the mixture bundle, G of the exponential bundle:
        DF = F' + F * score,    DG = G' - E_p[G'].
    """
    def coupling(t):
        p = p_curve.density(t)
        f, g = F.value(t), G.value(t)
        return p.expect(lambda x: f(x) * g(x))

    fd = (coupling(t0 + eps) - coupling(t0 - eps)) / (2 * eps)
    p = p_curve.density(t0)
    nodes = p.rule.nodes
    score = curve_score(p_curve, t0)(nodes)
    f, g = F.value(t0)(nodes), G.value(t0)(nodes)
    fdot, gdot = F.velocity(t0)(nodes), G.velocity(t0)(nodes)
    mixture = p.expect((fdot + f * score) * g)
    exponential = p.expect(f * (gdot - p.expect(gdot)))
    total = mixture + exponential
    scale = max(abs(fd), abs(total))
    rel = abs(fd - total) / scale if scale > 1e-12 else abs(fd - total)
    return DualityReport(fd, mixture, exponential, rel, bool(rel < rtol))
