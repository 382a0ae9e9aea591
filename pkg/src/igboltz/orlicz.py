"""Young pair cosh-1 / (cosh-1)*, Luxemburg norms and related numerical checks.

Every norm here is taken relative to a quadrature rule: E_p[.] means the
weighted node sum with weights w_i * (p/M)(x_i).
"""

from __future__ import annotations

from dataclasses import dataclass
from math import factorial
from typing import Callable, Literal

import numpy as np

from .quadrature import HermiteRule, expect

__all__ = [
    "phi",
    "phi_star",
    "phi_prime",
    "phi_star_prime",
    "YoungPair",
    "DensityHandle",
    "MembershipError",
    "luxemburg_norm",
    "HolderReport",
    "holder_pairing_check",
    "exp_series_convergence",
    "delta2_check",
    "young_inequality_check",
    "midpoint_convexity_check",
    "lr_norm",
]

Which = Literal["phi", "phi_star"]


class MembershipError(ValueError):
    """The Luxemburg bracket failed: no probed scale makes E[Phi(U/lambda)] <= 1."""


def phi(x):
    """cosh(x) - 1 evaluated without cancellation near zero."""
    x = np.asarray(x, dtype=float)
    # cosh x - 1 = 2 sinh^2(x/2)
    with np.errstate(over="ignore"):
        return 2.0 * np.sinh(0.5 * x) ** 2


def phi_prime(x):
    return np.sinh(x)


def phi_star(y):
    """Convex conjugate of cosh-1: y*arsinh(y) + 1 - sqrt(1+y^2)."""
    y = np.abs(np.asarray(y, dtype=float))
    out = np.empty_like(y)
    small = y < 1e-3
    ys = y[small]
    y2 = ys * ys
    # Taylor series of the conjugate: y^2/2 - y^4/24 + y^6/80 - 5 y^8/896
    out[small] = y2 * (0.5 + y2 * (-1.0 / 24.0 + y2 * (1.0 / 80.0 - y2 * 5.0 / 896.0)))
    yl = y[~small]
    out[~small] = yl * np.arcsinh(yl) - yl * yl / (1.0 + np.sqrt(1.0 + yl * yl))
    return out if out.ndim else float(out)


def phi_star_prime(y):
    return np.arcsinh(y)


@dataclass(frozen=True)
class YoungPair:
    """The pair (cosh-1, its conjugate) with first derivatives."""

    phi: Callable = staticmethod(phi)
    phi_star: Callable = staticmethod(phi_star)
    phi_prime: Callable = staticmethod(phi_prime)
    phi_star_prime: Callable = staticmethod(phi_star_prime)

    def of(self, which: Which) -> Callable:
        if which == "phi":
            return self.phi
        if which == "phi_star":
            return self.phi_star
        raise ValueError(f"unknown Young function {which!r}")


YOUNG = YoungPair()


class DensityHandle:
    """A positive density q given through its ratio q/M and a Hermite rule."""

    def __init__(self, ratio: Callable[[np.ndarray], np.ndarray], rule: HermiteRule):
        self._ratio = ratio
        self.rule = rule
        r = np.asarray(ratio(rule.nodes), dtype=float)
        self._node_ratio = r
        self._node_weights = rule.weights * r

    @classmethod
    def maxwell(cls, rule: HermiteRule) -> "DensityHandle":
        return cls(lambda x: np.ones(x.shape[0]), rule)

    @classmethod
    def from_nodes(cls, rule: HermiteRule, ratio_values: np.ndarray) -> "DensityHandle":
        """A density known only through its ratio q/M at the rule nodes."""
        values = np.asarray(ratio_values, dtype=float)
        obj = cls.__new__(cls)
        obj.rule = rule
        obj._node_ratio = values
        obj._node_weights = rule.weights * values

        def ratio(x):
            raise TypeError("this density is only known at the rule nodes")

        obj._ratio = ratio
        return obj

    def ratio(self, x: np.ndarray) -> np.ndarray:
        return self._ratio(x)

    @property
    def node_ratio(self) -> np.ndarray:
        return self._node_ratio

    @property
    def node_weights(self) -> np.ndarray:
        """Weights w_i (q/M)(x_i) so that E_q[g] = sum of node_weights * g(x_i)."""
        return self._node_weights

    def expect(self, g) -> float:
        values = g if isinstance(g, np.ndarray) else g(self.rule.nodes)
        values = np.broadcast_to(np.asarray(values, dtype=float), self._node_weights.shape)
        return float(np.dot(self._node_weights, values))

    def mass(self) -> float:
        return expect(self.rule, self._node_ratio)


def _node_values(U, p: DensityHandle) -> np.ndarray:
    if isinstance(U, np.ndarray):
        return np.broadcast_to(U.astype(float), p.rule.weights.shape)
    if callable(U):
        return np.broadcast_to(np.asarray(U(p.rule.nodes), dtype=float), p.rule.weights.shape)
    return np.full(p.rule.weights.shape, float(U))


def _modular(values: np.ndarray, lam: float, p: DensityHandle, young: Callable) -> float:
    with np.errstate(over="ignore", invalid="ignore"):
        terms = young(values / lam)
    if not np.all(np.isfinite(terms)):
        return np.inf
    return float(np.dot(p.node_weights, terms))


def luxemburg_norm(
    U,
    p: DensityHandle,
    which: Which = "phi",
    rtol: float = 1e-12,
    lower: float = 1e-8,
    upper: float = 1e8,
    cap: float = 1e12,
) -> float:
    """inf{lambda > 0 : E_p[Phi(U/lambda)] <= 1} by bisection in log(lambda).

    U is a callable on nodes, an array of node values, or a constant.
    The bracket starts at [lower, upper] and is widened by factors of ten
    (down toward 0 and up to `cap`) until it straddles the level set.
    """
    young = YOUNG.of(which)
    values = _node_values(U, p)
    if not np.all(np.isfinite(values)):
        raise MembershipError("U is not finite at every node")
    if np.all(values == 0.0):
        return 0.0

    def excess(lam: float) -> float:
        return _modular(values, lam, p, young) - 1.0

    hi = upper
    while excess(hi) > 0.0:
        hi *= 10.0
        if hi > cap:
            raise MembershipError(
                f"E_p[{which}(U/lambda)] > 1 for every lambda up to {cap:g}"
            )
    lo = min(lower, hi / 10.0)
    while excess(lo) <= 0.0:
        lo /= 10.0
        if lo < 1e-300:
            return 0.0

    log_lo, log_hi = np.log(lo), np.log(hi)
    while log_hi - log_lo > rtol:
        mid = 0.5 * (log_lo + log_hi)
        if excess(np.exp(mid)) > 0.0:
            log_lo = mid
        else:
            log_hi = mid
    return float(np.exp(log_hi))


def lr_norm(U, p: DensityHandle, r: float) -> float:
    values = _node_values(U, p)
    return float(p.expect(np.abs(values) ** r) ** (1.0 / r))


@dataclass(frozen=True)
class HolderReport:
    lhs: float
    rhs: float
    norm_phi: float
    norm_phi_star: float
    ok: bool


def holder_pairing_check(U, V, p: DensityHandle, slack: float = 1e-9) -> HolderReport:
    """|E_p[UV]| <= 2 ||U||_Phi ||V||_Phi* with an additive slack."""
    u = _node_values(U, p)
    v = _node_values(V, p)
    lhs = abs(p.expect(u * v))
    nu = luxemburg_norm(u, p, "phi")
    nv = luxemburg_norm(v, p, "phi_star")
    rhs = 2.0 * nu * nv
    return HolderReport(lhs, rhs, nu, nv, bool(lhs <= rhs + slack))


def _exp_tail(y: np.ndarray, k: int) -> np.ndarray:
    """sum_{j>k} y^j / j!, summed directly so no cancellation occurs."""
    term = y ** (k + 1) / factorial(k + 1)
    total = term.copy()
    j = k + 1
    while True:
        j += 1
        term = term * y / j
        total += term
        if np.all(np.abs(term) <= 1e-17 * np.abs(total)) or j > k + 400:
            break
    return total


def exp_series_convergence(u, a: float, p: DensityHandle, kmax: int) -> np.ndarray:
    """L^a(p) norms of the remainder of the exponential series of u/a.

    errors[k] = (E_p |e^{u/a} - sum_{j<=k} (u/a)^j/j!|^a)^{1/a} for k = 0..kmax.
    Requires ||u||_{Phi,p} < 1, which is checked rather than assumed.
    """
    if a < 1:
        raise ValueError("a must be >= 1")
    values = _node_values(u, p)
    if np.all(values == 0.0):
        return np.zeros(kmax + 1)
    norm = luxemburg_norm(values, p, "phi")
    if not norm < 1.0:
        raise ValueError(f"precondition ||u||_Phi < 1 violated (norm {norm:.6g})")
    y = values / a
    errors = np.empty(kmax + 1)
    for k in range(kmax + 1):
        rem = np.abs(_exp_tail(y, k)) ** a
        errors[k] = p.expect(rem) ** (1.0 / a)
    return errors


def delta2_check(ys: np.ndarray, alphas: np.ndarray, rtol: float = 1e-12) -> bool:
    """phi_star(alpha y) <= max(1, alpha^2) phi_star(y) on the grid ys x alphas."""
    y, al = np.meshgrid(np.asarray(ys, float), np.asarray(alphas, float), indexing="ij")
    lhs = phi_star(al * y)
    rhs = np.maximum(1.0, al**2) * phi_star(y)
    return bool(np.all(lhs <= rhs * (1.0 + rtol)))


def young_inequality_check(xs: np.ndarray, ys: np.ndarray, atol: float = 1e-12) -> bool:
    x, y = np.meshgrid(np.asarray(xs, float), np.asarray(ys, float), indexing="ij")
    return bool(np.all(x * y <= phi(x) + phi_star(y) + atol * (1.0 + np.abs(x * y))))


def midpoint_convexity_check(f: Callable, xs: np.ndarray, atol: float = 1e-12) -> bool:
    a, b = np.meshgrid(np.asarray(xs, float), np.asarray(xs, float), indexing="ij")
    mid = f(0.5 * (a + b))
    avg = 0.5 * (f(a) + f(b))
    return bool(np.all(mid <= avg + atol * (1.0 + np.abs(avg))))
