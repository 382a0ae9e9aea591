"""KL divergence, Boltzmann-Gibbs entropy and their gradient flows on the chart at M."""

from __future__ import annotations

from dataclasses import dataclass, field
from math import factorial
from typing import Callable, Sequence

import numpy as np

from .manifold import (
    ChartVector,
    DomainGuardError,
    ExpDensity,
    cumulant,
    cumulant_d1,
    directional_cumulants,
)
from .orlicz import DensityHandle
from .quadrature import HermiteRule, expect

__all__ = [
    "FlowTrace",
    "FlowError",
    "kl",
    "bregman_kl",
    "kl_series",
    "kl_grad_first",
    "kl_grad_second",
    "kl_flow_first",
    "kl_flow_second",
    "closed_form_first",
    "closed_form_second",
    "log_density_nodes",
    "bg_entropy",
    "bg_entropy_gradient",
    "entropy_derivative",
    "HessianReport",
    "entropy_hessian_check",
    "rk4_step",
]

TINY = 1e-300


class FlowError(RuntimeError):
    """Integration left the admissible region; carries the failure time."""

    def __init__(self, message: str, time: float):
        super().__init__(message)
        self.time = time


@dataclass
class FlowTrace:
    """Times, node-value states and named scalar series of a flow."""

    times: np.ndarray
    states: list
    series: dict = field(default_factory=dict)
    flags: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        if self.times.ndim != 1 or np.any(np.diff(self.times) <= 0):
            raise ValueError("trace times must be strictly increasing")
        if len(self.states) != self.times.shape[0]:
            raise ValueError("one state per time is required")

    def column(self, name: str) -> np.ndarray:
        return np.asarray(self.series[name], dtype=float)


def rk4_step(rhs: Callable, y: np.ndarray, t: float, dt: float) -> np.ndarray:
    k1 = rhs(t, y)
    k2 = rhs(t + 0.5 * dt, y + 0.5 * dt * k1)
    k3 = rhs(t + 0.5 * dt, y + 0.5 * dt * k2)
    k4 = rhs(t + dt, y + dt * k3)
    return y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def kl(q1: DensityHandle, q2: DensityHandle) -> float:
    """E_{q1}[log(q1/q2)] on the shared rule."""
    r1, r2 = q1.node_ratio, q2.node_ratio
    log_ratio = np.log(np.maximum(r1, TINY)) - np.log(np.maximum(r2, TINY))
    return q1.expect(log_ratio)


def bregman_kl(u1: ChartVector, u2: ChartVector, rule: HermiteRule) -> float:
    """K(u2) - K(u1) - dK(u1)[u2 - u1]."""
    return cumulant(u2, rule) - cumulant(u1, rule) - cumulant_d1(u1, u2 - u1, rule)


def kl_series(u1: ChartVector, u2: ChartVector, rule: HermiteRule, order: int = 6) -> float:
    """Truncated Taylor series sum_{n=2}^{order} d^n K(u1)[h^n] / n! with h = u2 - u1."""
    kappa = directional_cumulants(u1, u2 - u1, rule, order)
    return float(sum(kappa[n - 1] / factorial(n) for n in range(2, order + 1)))


def kl_grad_first(q: ExpDensity, q2: ExpDensity) -> Callable:
    """Gradient of q -> KL(q||q2): log(q/q2) - KL(q||q2)."""
    value = kl(q, q2)

    def grad(x: np.ndarray) -> np.ndarray:
        return q.log_ratio(x) - q2.log_ratio(x) - value

    return grad


def kl_grad_second(q1: ExpDensity, q: ExpDensity) -> Callable:
    """Gradient of q -> KL(q1||q): 1 - q1/q."""

    def grad(x: np.ndarray) -> np.ndarray:
        return 1.0 - np.exp(q1.log_ratio(x) - q.log_ratio(x))

    return grad


def log_density_nodes(q: DensityHandle) -> np.ndarray:
    """log q at the rule nodes (log of q/M plus log M), floored at 1e-300."""
    x = q.rule.nodes
    n = x.shape[1]
    log_m = -0.5 * np.sum(x * x, axis=1) - 0.5 * n * np.log(2.0 * np.pi)
    return np.log(np.maximum(q.node_ratio, TINY)) + log_m


def _entropy_from_nodes(rule: HermiteRule, ratio: np.ndarray) -> float:
    x = rule.nodes
    n = x.shape[1]
    r = np.maximum(ratio, 0.0)
    log_q = np.log(np.maximum(r, TINY)) - 0.5 * np.sum(x * x, axis=1) - 0.5 * n * np.log(2 * np.pi)
    return -float(np.dot(rule.weights, r * log_q))


def bg_entropy(q: DensityHandle) -> float:
    """H(q) = -E_q[log q], with 0 log 0 = 0."""
    return _entropy_from_nodes(q.rule, q.node_ratio)


def bg_entropy_gradient(q: ExpDensity) -> Callable:
    """-(log q + H(q)); centered under q."""
    h = bg_entropy(q)
    n = q.rule.dimension

    def grad(x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(x)
        log_q = q.log_ratio(x) - 0.5 * np.sum(x * x, axis=1) - 0.5 * n * np.log(2 * np.pi)
        return -(log_q + h)

    return grad


def entropy_derivative(q: ExpDensity, v) -> float:
    """dH along the chart direction v at q = e_M(u): -Cov_q(u + log M, v)."""
    return -q.cov(log_density_nodes(q), v)


def _node_coefficients(rule: HermiteRule, basis) -> tuple[np.ndarray, np.ndarray]:
    """Least-squares projector from node values onto (constant, basis)."""
    design = np.column_stack([np.ones(rule.size)] + [b.value(rule.nodes) for b in basis])
    sw = np.sqrt(rule.weights)
    pinv = np.linalg.pinv(design * sw[:, None])
    return design, pinv * sw[None, :]


def closed_form_first(q0: ExpDensity, q2: ExpDensity, t: float) -> np.ndarray:
    """Node values of q(t)/M for q(t) proportional to q0^{e^-t} q2^{1-e^-t}."""
    a = np.exp(-t)
    nodes = q0.rule.nodes
    log_r = a * q0.log_ratio(nodes) + (1.0 - a) * q2.log_ratio(nodes)
    r = np.exp(log_r - log_r.max())
    return r / expect(q0.rule, r)


def closed_form_second(q0: DensityHandle, q1: DensityHandle, t: float) -> np.ndarray:
    """Node values of q1 + (q0 - q1) e^{-t}, as ratios to M."""
    return q1.node_ratio + (q0.node_ratio - q1.node_ratio) * np.exp(-t)


def kl_flow_first(q0: ExpDensity, q2: ExpDensity, t_grid: Sequence[float]) -> FlowTrace:
    """Negative gradient flow of q -> KL(q||q2), integrated in chart coordinates.

    The gradient log(q/q2) - KL is evaluated at the nodes and projected on
    the basis; its basis coefficients are the chart velocity (with a minus
    sign).  One RK4 step is taken between consecutive grid times.
    """
    rule = q0.rule
    basis = q0.u.basis
    if q2.u.basis != basis:
        raise ValueError("q0 and q2 must share a basis")
    _, projector = _node_coefficients(rule, basis)

    def chart(coef: np.ndarray) -> ChartVector:
        return ChartVector.centered(basis, coef)

    def rhs(t: float, coef: np.ndarray) -> np.ndarray:
        q = ExpDensity(chart(coef), rule)
        g = kl_grad_first(q, q2)(rule.nodes)
        return -(projector @ g)[1:]

    times = np.asarray(t_grid, dtype=float)
    coef = q0.u.coef.copy()
    states, kls, ents, norms = [], [], [], []

    def record(c):
        try:
            q = ExpDensity(chart(c), rule)
        except DomainGuardError as exc:
            raise FlowError(f"flow left the chart domain: {exc}", t) from exc
        states.append(q.node_ratio.copy())
        kls.append(kl(q, q2))
        ents.append(bg_entropy(q))
        norms.append(expect(rule, q.node_ratio) - 1.0)

    t = float(times[0])
    record(coef)
    for k in range(1, times.shape[0]):
        dt = times[k] - times[k - 1]
        coef = rk4_step(rhs, coef, t, dt)
        t = float(times[k])
        if not np.all(np.isfinite(coef)):
            raise FlowError("chart coordinates blew up", t)
        record(coef)
        if kls[-1] > kls[-2] + 1e-12:
            raise FlowError("KL increased along the flow; step size too large", t)
    return FlowTrace(times, states, {"kl": kls, "entropy": ents, "norm_check": norms})


def kl_flow_second(q0: DensityHandle, q1: ExpDensity, t_grid: Sequence[float]) -> FlowTrace:
    """Negative gradient flow of q -> KL(q1||q) in node-value space.

    The velocity of q is -(1 - q1/q), so the ratio r = q/M moves by
    r * (q1/q - 1) = r1 - r; each step is renormalized to unit mass.
    """
    rule = q0.rule
    r1 = q1.node_ratio

    def rhs(t: float, r: np.ndarray) -> np.ndarray:
        grad = 1.0 - r1 / r
        return -r * grad

    times = np.asarray(t_grid, dtype=float)
    r = np.asarray(q0.node_ratio, dtype=float).copy()
    states, kls, ents, norms = [], [], [], []

    def record(r):
        states.append(r.copy())
        kls.append(kl(q1, DensityHandle.from_nodes(rule, r)))
        ents.append(_entropy_from_nodes(rule, r))
        norms.append(expect(rule, r) - 1.0)

    t = float(times[0])
    record(r)
    for k in range(1, times.shape[0]):
        dt = times[k] - times[k - 1]
        r = rk4_step(rhs, r, t, dt)
        t = float(times[k])
        if not np.all(r > 0.0):
            raise FlowError("density lost positivity at a node", t)
        r = r / expect(rule, r)
        record(r)
    return FlowTrace(times, states, {"kl": kls, "entropy": ents, "norm_check": norms})


@dataclass(frozen=True)
class HessianReport:
    rel_error: float
    ok: bool
    derivative: np.ndarray = field(repr=False)
    expected: np.ndarray = field(repr=False)


def entropy_hessian_check(
    q: ExpDensity, direction: ChartVector, eps: float = 1e-4, rtol: float = 1e-5
) -> HessianReport:
    """Finite-difference covariant derivative of grad H along X against -X.

    The gradient at e_q(sX) is brought back to the fiber at q by the
    exponential transport (subtracting its q-mean), then differenced in s.
    """
    rule = q.rule
    nodes = rule.nodes

    def transported(s: float) -> np.ndarray:
        qs = ExpDensity(q.u + s * direction, rule)
        g = bg_entropy_gradient(qs)(nodes)
        return g - q.expect(g)

    fd = (transported(eps) - transported(-eps)) / (2 * eps)
    x_vals = direction(nodes)
    expected = -(x_vals - q.expect(x_vals))
    scale = np.sqrt(q.expect(expected**2))
    err = np.sqrt(q.expect((fd - expected) ** 2))
    rel = err / scale if scale > 0 else err
    return HessianReport(float(rel), bool(rel < rtol), fd, expected)
