"""Elastic binary collisions in R^3: sigma and projector parametrizations.

All collision maps are vectorized: v, w may be (3,) or (N, 3) arrays.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .quadrature import SphereRule, random_rotation

__all__ = [
    "DegenerateCollisionError",
    "vers",
    "VelocityPair",
    "CollisionQuadruple",
    "RankOneProjector",
    "collide_sigma",
    "collide_pi",
    "collision_matrix",
    "sigma_from_pi",
    "pi_from_sigma",
    "IdentityCollision",
    "jacobian",
    "jacobian_rank",
    "MeasureReport",
    "pushforward_check_sigma_to_omega",
    "pushforward_check_symmetric",
    "pushforward_check_kappa_integrated",
    "pushforward_check_sigma_to_pi",
    "half_sphere_cosine",
    "nu_expectation",
]


class DegenerateCollisionError(ValueError):
    """A direction is undefined (v = w, or sigma = kappa)."""


def vers(x: np.ndarray, tol: float = 0.0) -> np.ndarray:
    """x / |x| row-wise; zero rows raise."""
    x = np.asarray(x, dtype=float)
    norm = np.linalg.norm(x, axis=-1, keepdims=True)
    if np.any(norm <= tol):
        raise DegenerateCollisionError("cannot normalize a zero vector")
    return x / norm


@dataclass(frozen=True)
class VelocityPair:
    v: np.ndarray
    w: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.v, dtype=float)
        w = np.asarray(self.w, dtype=float)
        if not (np.all(np.isfinite(v)) and np.all(np.isfinite(w))):
            raise ValueError("velocities must be finite")
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "w", w)

    @property
    def kappa(self) -> np.ndarray:
        return vers(self.v - self.w)

    @property
    def momentum(self) -> np.ndarray:
        return self.v + self.w

    @property
    def energy(self) -> np.ndarray:
        return np.sum(self.v**2, axis=-1) + np.sum(self.w**2, axis=-1)


@dataclass(frozen=True)
class CollisionQuadruple:
    v: np.ndarray
    w: np.ndarray
    v_bar: np.ndarray
    w_bar: np.ndarray

    def invariant_errors(self) -> dict:
        """Largest violations of the conservation laws over all rows."""
        mom = np.abs((self.v + self.w) - (self.v_bar + self.w_bar))
        e_before = np.sum(self.v**2, -1) + np.sum(self.w**2, -1)
        e_after = np.sum(self.v_bar**2, -1) + np.sum(self.w_bar**2, -1)
        rel_before = np.linalg.norm(self.v - self.w, axis=-1)
        rel_after = np.linalg.norm(self.v_bar - self.w_bar, axis=-1)
        dot_before = np.sum(self.v * self.w, -1)
        dot_after = np.sum(self.v_bar * self.w_bar, -1)
        return {
            "momentum": float(np.max(mom)),
            "energy": float(np.max(np.abs(e_before - e_after))),
            "relative_speed": float(np.max(np.abs(rel_before - rel_after))),
            "scalar_product": float(np.max(np.abs(dot_before - dot_after))),
        }


@dataclass(frozen=True)
class RankOneProjector:
    """Pi = omega omega^T stored as omega with its first nonzero entry positive."""

    omega: np.ndarray

    def __post_init__(self):
        om = np.asarray(self.omega, dtype=float)
        n = np.linalg.norm(om)
        if not n > 0:
            raise ValueError("projector direction must be nonzero")
        om = om / n
        lead = om[np.flatnonzero(np.abs(om) > 1e-15)[0]]
        if lead < 0:
            om = -om
        object.__setattr__(self, "omega", om)

    @property
    def matrix(self) -> np.ndarray:
        return np.outer(self.omega, self.omega)


def collide_sigma(v, w, sigma) -> CollisionQuadruple:
    """v' = (v+w)/2 + |v-w|/2 sigma, w' = (v+w)/2 - |v-w|/2 sigma."""
    v = np.asarray(v, dtype=float)
    w = np.asarray(w, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    if np.any(np.abs(np.linalg.norm(sigma, axis=-1) - 1.0) > 1e-12):
        raise ValueError("sigma must be a unit vector")
    center = 0.5 * (v + w)
    half = 0.5 * np.linalg.norm(v - w, axis=-1, keepdims=True)
    return CollisionQuadruple(v, w, center + half * sigma, center - half * sigma)


def collide_pi(v, w, projector) -> CollisionQuadruple:
    """Exchange the components of v and w along omega: v' = (I-Pi)v + Pi w."""
    v = np.asarray(v, dtype=float)
    w = np.asarray(w, dtype=float)
    om = projector.omega if isinstance(projector, RankOneProjector) else np.asarray(projector, float)
    exchange = np.sum((w - v) * om, axis=-1, keepdims=True) * om
    return CollisionQuadruple(v, w, v + exchange, w - exchange)


def collision_matrix(projector: RankOneProjector) -> np.ndarray:
    """The 6x6 matrix A_Pi acting on (v, w)."""
    P = projector.matrix
    Id = np.eye(3)
    return np.block([[Id - P, P], [P, Id - P]])


@dataclass(frozen=True)
class IdentityCollision:
    """sigma = kappa: the collision is the identity and Pi is undefined."""

    kappa: np.ndarray


def sigma_from_pi(v, w, projector: RankOneProjector) -> np.ndarray:
    """sigma = (I - 2 Pi) kappa."""
    kappa = vers(np.asarray(v, float) - np.asarray(w, float))
    om = projector.omega
    return kappa - 2.0 * np.dot(om, kappa) * om


def pi_from_sigma(v, w, sigma, tol: float = 1e-14):
    """Pi = vers(kappa - sigma) (x) vers(kappa - sigma); IdentityCollision if sigma = kappa."""
    kappa = vers(np.asarray(v, float) - np.asarray(w, float))
    diff = kappa - np.asarray(sigma, dtype=float)
    if np.linalg.norm(diff) <= tol:
        return IdentityCollision(kappa)
    return RankOneProjector(diff)


def jacobian(q: CollisionQuadruple) -> np.ndarray:
    """Jacobian of (momentum, energy) constraints in (v, w, v', w')."""
    Id = np.eye(3)
    top = np.hstack([Id, Id, -Id, -Id])
    bottom = np.concatenate([2 * q.v, 2 * q.w, -2 * q.v_bar, -2 * q.w_bar])[None, :]
    return np.vstack([top, bottom])


def jacobian_rank(q: CollisionQuadruple, tol: float = 1e-10) -> int:
    s = np.linalg.svd(jacobian(q), compute_uv=False)
    return int(np.sum(s > tol * s[0]))


@dataclass(frozen=True)
class MeasureReport:
    lhs: float
    rhs: float

    @property
    def error(self) -> float:
        return abs(self.lhs - self.rhs)


def _pushed_directions(kappa: np.ndarray, sigma_nodes: np.ndarray) -> np.ndarray:
    """vers(kappa - sigma) for sphere nodes, skipping the node sigma = kappa."""
    diff = kappa[None, :] - sigma_nodes
    norm = np.linalg.norm(diff, axis=1, keepdims=True)
    return diff / np.where(norm > 0, norm, 1.0), norm[:, 0] > 0


def pushforward_check_sigma_to_omega(
    f: Callable, kappa, rule: SphereRule, rhs_rule: SphereRule | None = None
) -> MeasureReport:
    """lhs = int f(vers(kappa - sigma)) dmu(sigma); rhs = int_{kappa.omega>=0} 4 (kappa.omega) f dmu.

    Both integrals use a copy of the rule with its pole along kappa, so the
    half-space cut of the right side falls on the hemisphere boundary.
    """
    kappa = vers(np.asarray(kappa, float))
    aligned = rule.aligned(kappa)
    om, keep = _pushed_directions(kappa, aligned.nodes)
    lhs = float(np.dot(aligned.weights[keep], f(om[keep])))
    rr = (rhs_rule or rule).aligned(kappa)
    c = rr.nodes @ kappa
    rhs = float(np.dot(rr.weights, np.where(c >= 0, 4.0 * c, 0.0) * f(rr.nodes)))
    return MeasureReport(lhs, rhs)


def pushforward_check_symmetric(
    f: Callable, kappa, rule: SphereRule, rhs_rule: SphereRule | None = None
) -> MeasureReport:
    """For f(omega) = f(-omega): lhs as above, rhs = int f(omega) 2|kappa.omega| dmu."""
    kappa = vers(np.asarray(kappa, float))
    aligned = rule.aligned(kappa)
    om, keep = _pushed_directions(kappa, aligned.nodes)
    lhs = float(np.dot(aligned.weights[keep], f(om[keep])))
    rr = (rhs_rule or rule).aligned(kappa)
    rhs = float(np.dot(rr.weights, 2.0 * np.abs(rr.nodes @ kappa) * f(rr.nodes)))
    return MeasureReport(lhs, rhs)


def pushforward_check_kappa_integrated(
    f: Callable, rule: SphereRule, outer: SphereRule | None = None
) -> MeasureReport:
    """Double integral of f(vers(kappa - sigma)) over kappa and sigma against int f dmu.

    The inner sigma-integral for each outer node kappa uses `rule` aligned with
    kappa; `outer` (default: `rule`) integrates over kappa.
    """
    outer = outer or rule
    total = 0.0
    for kappa, wk in zip(outer.nodes, outer.weights):
        aligned = rule.aligned(kappa)
        om, keep = _pushed_directions(kappa, aligned.nodes)
        total += wk * float(np.dot(aligned.weights[keep], f(om[keep])))
    rhs = float(np.dot(outer.weights, f(outer.nodes)))
    return MeasureReport(total, rhs)


def pushforward_check_sigma_to_pi(
    g: Callable, kappa, rule: SphereRule, rhs_rule: SphereRule | None = None
) -> MeasureReport:
    """int g(Pi(vers(kappa - sigma))) dmu(sigma) against int g(omega omega^T) 2|kappa.omega| dmu.

    g receives unit vectors omega representing Pi = omega omega^T and must be
    even in omega.
    """
    return pushforward_check_symmetric(g, kappa, rule, rhs_rule)


def half_sphere_cosine(kappa, rule: SphereRule) -> float:
    """int_{kappa.sigma>=0} kappa.sigma dmu(sigma) (exactly 1/4)."""
    kappa = vers(np.asarray(kappa, float))
    aligned = rule.aligned(kappa)
    c = aligned.nodes @ kappa
    return float(np.dot(aligned.weights, np.where(c >= 0, c, 0.0)))


def nu_expectation(
    g: Callable, rule: SphereRule, rng: np.random.Generator | None = None,
    sign_tol: float = 1e-12, probes: int = 64,
) -> float:
    """int g(omega omega^T) dmu(omega), after checking that g(omega) = g(-omega).

    g is called on an (N, 3) array of unit vectors.
    """
    rng = rng or np.random.default_rng(0)
    probe = rng.standard_normal((probes, 3))
    probe /= np.linalg.norm(probe, axis=1, keepdims=True)
    a, b = np.asarray(g(probe), float), np.asarray(g(-probe), float)
    if np.max(np.abs(a - b)) > sign_tol * (1.0 + np.max(np.abs(a))):
        raise ValueError("g depends on the sign of omega, so it is not a function of Pi")
    return float(np.dot(rule.weights, g(rule.nodes)))


def rotated_nu_expectation(g: Callable, rule: SphereRule, rng: np.random.Generator) -> float:
    """nu_expectation on a randomly rotated copy of the rule."""
    return nu_expectation(g, rule.rotated(random_rotation(rng)), rng)


__all__ += ["rotated_nu_expectation"]
