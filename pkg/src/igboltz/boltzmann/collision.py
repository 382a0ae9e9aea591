"""Conditioning on collision invariants, the A operator, the weak and strong
Boltzmann operators and entropy production.

Pair integrals under M(v)M(w) are taken in collision coordinates
z = (v+w)/sqrt2 ~ N(0, I), rho = |v-w|/sqrt2 (chi with 3 degrees of freedom)
and kappa = vers(v-w) uniform on the sphere.  A post-collision pair for
direction sigma is (z + rho sigma, z - rho sigma)/sqrt2, so the same sphere
nodes serve both as pre-collision directions kappa and outgoing sigma.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from math import ceil, sqrt
from typing import Callable

import numpy as np

from ..kinematics import VelocityPair
from ..manifold import BasisFunction, ChartVector, ExpDensity
from ..quadrature import (
    HermiteRule,
    RadialRule,
    SphereRule,
    make_hermite_rule,
    make_radial_rule,
    make_sphere_rule,
    random_rotation,
)
from .hermite import PolyDensity, PositivityError, hermite_design
from .interaction import Interaction

__all__ = [
    "QuadratureOrderError",
    "ConditioningError",
    "CollisionRule",
    "make_collision_rule",
    "tensorize",
    "condition_on_invariants",
    "condition_pi_weighted",
    "tilted_conditional",
    "a_operator",
    "maxwell_weak_form",
    "weak_moments",
    "galerkin_tensor",
    "q_galerkin",
    "q_ratio",
    "q_operator",
    "strong_moments",
    "EntropyProductionForms",
    "entropy_production_forms",
    "entropy_production",
]

ROOT2 = sqrt(2.0)


class QuadratureOrderError(ValueError):
    """The requested rule cannot integrate the integrand degree exactly."""


class ConditioningError(ValueError):
    """The tilted conditional has a vanishing normalizer."""


# ---------------------------------------------------------------- pair rule


@dataclass(frozen=True)
class CollisionRule:
    centers: HermiteRule
    radial: RadialRule
    sphere: SphereRule

    @property
    def exact_degree(self) -> int:
        """Largest total degree in (v, w) integrated exactly."""
        return min(
            2 * self.centers.nodes_per_axis - 1,
            4 * self.radial.order - 2,
            2 * self.sphere.polar_order - 1,
            self.sphere.azimuthal_order - 1,
        )

    def check_degree(self, degree: int) -> None:
        if degree > self.exact_degree:
            raise QuadratureOrderError(
                f"integrand degree {degree} exceeds the exact degree {self.exact_degree} of the pair rule"
            )

    @property
    def group_weights(self) -> np.ndarray:
        """Weights of the invariant groups (z, rho), shape (G,)."""
        return np.outer(self.centers.weights, self.radial.weights).ravel()

    @property
    def group_rho(self) -> np.ndarray:
        return np.tile(self.radial.nodes, self.centers.size)

    @property
    def groups(self) -> int:
        return self.centers.size * self.radial.order

    def pairs(
        self, directions: np.ndarray | None = None, groups: slice = slice(None)
    ) -> tuple[np.ndarray, np.ndarray]:
        """(v, w) of shape (G, S, 3) for the selected groups and sphere directions."""
        dirs = self.sphere.nodes if directions is None else directions
        z = np.repeat(self.centers.nodes, self.radial.order, axis=0)[groups]
        rho = self.group_rho[groups]
        shift = rho[:, None, None] * dirs[None, :, :]
        return (z[:, None, :] + shift) / ROOT2, (z[:, None, :] - shift) / ROOT2

    def chunks(self, points: int = 200_000):
        """Group slices holding about `points` pairs each."""
        step = max(1, points // self.sphere.size)
        for s in range(0, self.groups, step):
            yield slice(s, min(s + step, self.groups))

    def speeds(self) -> np.ndarray:
        """|v - w| per group."""
        return ROOT2 * self.group_rho


def make_collision_rule(
    degree: int,
    centers: int | None = None,
    radial: int | None = None,
    polar: int | None = None,
    azimuthal: int | None = None,
) -> CollisionRule:
    """Smallest pair rule exact for total degree `degree`, unless orders are given."""
    mz = centers or max(2, ceil((degree + 1) / 2))
    mr = radial or max(2, ceil((degree + 2) / 4))
    p = polar or max(2, ceil((degree + 1) / 2))
    a = azimuthal or max(4, degree + 1)
    return CollisionRule(make_hermite_rule(3, mz), make_radial_rule(mr), make_sphere_rule(p, a))


# ---------------------------------------------------------------- tensor product


def _pad(b: BasisFunction, n: int, first: bool) -> BasisFunction:
    zeros = (0,) * n if b.kind == "hermite" else (0.0,) * n
    index = tuple(b.index) + zeros if first else zeros + tuple(b.index)
    return BasisFunction(b.kind, index)


def tensorize(f: ExpDensity, g: ExpDensity, rule: HermiteRule | None = None) -> ExpDensity:
    """f (x) g as the exponential density with chart u (+) v on the product space."""
    n = f.u.dimension
    if g.u.dimension != n:
        raise ValueError("factors must live on spaces of equal dimension")
    if f.rule.nodes_per_axis != g.rule.nodes_per_axis:
        raise ValueError("factors must use the same rule family")
    basis = tuple(_pad(b, n, True) for b in f.u.basis) + tuple(_pad(b, n, False) for b in g.u.basis)
    coef = np.concatenate([f.u.coef, g.u.coef])
    u = ChartVector(basis, coef, f.u.const + g.u.const)
    rule = rule or make_hermite_rule(2 * n, f.rule.nodes_per_axis)
    return ExpDensity(u, rule)


# ---------------------------------------------------------------- conditioning


def _as_rows(pair: VelocityPair) -> tuple[np.ndarray, np.ndarray, bool]:
    v, w = np.asarray(pair.v, float), np.asarray(pair.w, float)
    single = v.ndim == 1
    return np.atleast_2d(v), np.atleast_2d(w), single


def _sigma_images(v: np.ndarray, w: np.ndarray, sigma: np.ndarray):
    center = 0.5 * (v + w)[:, None, :]
    half = 0.5 * np.linalg.norm(v - w, axis=1)[:, None, None]
    return center + half * sigma[None], center - half * sigma[None]


def _apply(g: Callable, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    shape = a.shape[:-1]
    return np.asarray(g(a.reshape(-1, 3), b.reshape(-1, 3)), float).reshape(shape)


def condition_on_invariants(g: Callable, pair: VelocityPair, sphere: SphereRule):
    """int g(v_sigma, w_sigma) dmu(sigma); g maps arrays (N,3),(N,3) to (N,)."""
    v, w, single = _as_rows(pair)
    vs, ws = _sigma_images(v, w, sphere.nodes)
    out = _apply(g, vs, ws) @ sphere.weights
    return float(out[0]) if single else out


def condition_pi_weighted(g: Callable, pair: VelocityPair, sphere: SphereRule):
    """2 int g(A_Pi(v, w)) |kappa . omega| dnu, with the rule's pole along kappa."""
    v, w, single = _as_rows(pair)
    out = np.empty(v.shape[0])
    for n in range(v.shape[0]):
        diff = v[n] - w[n]
        if not np.any(diff):
            out[n] = float(g(v[n][None], w[n][None])[0])
            continue
        kappa = diff / np.linalg.norm(diff)
        aligned = sphere.aligned(kappa)
        om = aligned.nodes
        exchange = ((w[n] - v[n]) @ om.T)[:, None] * om
        vals = np.asarray(g(v[n] + exchange, w[n] - exchange), float)
        out[n] = 2.0 * float(np.dot(aligned.weights, np.abs(om @ kappa) * vals))
    return float(out[0]) if single else out


def tilted_conditional(
    f_tensor: Callable, g: Callable, pair: VelocityPair, sphere: SphereRule, floor: float = 1e-12
):
    """int g f(A_sigma) dmu / int f(A_sigma) dmu for a positive weight f on pairs."""
    v, w, single = _as_rows(pair)
    vs, ws = _sigma_images(v, w, sphere.nodes)
    weight = _apply(f_tensor, vs, ws)
    if np.any(weight <= 0.0):
        raise ConditioningError("tilting weight is not positive at a transformed node")
    den = weight @ sphere.weights
    if np.any(np.abs(den) < floor):
        raise ConditioningError(f"conditional normalizer below {floor:g}")
    out = (weight * _apply(g, vs, ws)) @ sphere.weights / den
    return float(out[0]) if single else out


def _symmetrized(g: Callable) -> Callable:
    return lambda a, b: 0.5 * (np.asarray(g(a), float) + np.asarray(g(b), float))


def a_operator(g: Callable, pair: VelocityPair, sphere: SphereRule):
    """Ag(v, w) = int gbar(A_sigma(v, w)) dmu - gbar(v, w), gbar = (g(v) + g(w))/2."""
    v, w, single = _as_rows(pair)
    gbar = _symmetrized(g)
    out = condition_on_invariants(gbar, VelocityPair(v, w), sphere) - gbar(v, w)
    return float(out[0]) if single else out


# ---------------------------------------------------------------- weak form


def _ratio_of(f) -> Callable:
    return f.ratio if hasattr(f, "ratio") else f


def _weak_parts(f, g: Callable, b: Interaction, rule: CollisionRule):
    ratio = _ratio_of(f)
    gsym = _symmetrized(g)
    ws = rule.sphere.weights
    weight = rule.group_weights * b.of_speed(rule.speeds())
    value = norm = 0.0
    for sl in rule.chunks():
        v, w = rule.pairs(groups=sl)
        F = _apply(lambda a, c: ratio(a) * ratio(c), v, w)
        gbar = _apply(gsym, v, w)
        Fmean = F @ ws
        value += float(weight[sl] @ ((gbar @ ws) * Fmean - (F * gbar) @ ws))
        norm += float(weight[sl] @ Fmean)
    return value, norm


def maxwell_weak_form(
    f, g: Callable, b: Interaction, rule: CollisionRule | None = None,
    normalized: bool = True, g_degree: int | None = None,
) -> float:
    """E_{b f(x)f}[Ag] on the pair rule, divided by E_{f(x)f}[b] when normalized.

    For a PolyDensity with a constant kernel the degree of the integrand is
    checked against the rule; supply g_degree for polynomial test functions.
    """
    if rule is None:
        d = f.degree if isinstance(f, PolyDensity) else 4
        rule = make_collision_rule(2 * d + (g_degree if g_degree is not None else d) + 2)
    elif isinstance(f, PolyDensity) and b.polynomial and g_degree is not None:
        rule.check_degree(2 * f.degree + g_degree)
    value, norm = _weak_parts(f, g, b, rule)
    return value / norm if normalized else value


def weak_moments(
    f, b: Interaction, degree: int | None = None, rule: CollisionRule | None = None
) -> np.ndarray:
    """E_{b f(x)f}[A psi_k] (unnormalized) for every basis function with |k| <= degree.

    For a PolyDensity of degree d and a constant kernel, Q(f)/M is a polynomial
    of degree at most 2d, so degree = 2d gives its full Hermite expansion.
    """
    fd = f.degree if isinstance(f, PolyDensity) else 4
    degree = fd if degree is None else int(degree)
    if rule is None:
        rule = make_collision_rule(2 * fd + degree)
    elif isinstance(f, PolyDensity) and b.polynomial:
        rule.check_degree(2 * fd + degree)
    ratio = _ratio_of(f)
    ws = rule.sphere.weights
    weight = rule.group_weights * b.of_speed(rule.speeds())
    out = 0.0
    for sl in rule.chunks(50_000):
        v, w = rule.pairs(groups=sl)
        G, S = v.shape[:2]
        F = _apply(lambda a, c: ratio(a) * ratio(c), v, w)
        Z = 0.5 * (hermite_design(v, degree) + hermite_design(w, degree))
        conditioned = np.einsum("s,gsk->gk", ws, Z)
        Fw = F * ws[None, :]
        term = conditioned * Fw.sum(axis=1)[:, None] - np.einsum("gs,gsk->gk", Fw, Z)
        out = out + weight[sl] @ term
    return np.asarray(out)


@lru_cache(maxsize=8)
def _tensor_cached(degree: int, strength: float) -> np.ndarray:
    rule = make_collision_rule(3 * degree)
    v, w = rule.pairs()
    G, S = v.shape[:2]
    n = hermite_design(np.zeros((1, 3)), degree).shape[1]
    X = hermite_design(v, degree).reshape(G, S, n)
    Y = hermite_design(w, degree).reshape(G, S, n)
    ws = rule.sphere.weights
    Z = 0.5 * (X + Y)
    conditioned = np.einsum("s,gsk->gk", ws, Z)
    weight = rule.group_weights * strength
    # gain part: sum_g W_g Abar_k(g) sum_s w_s X_i Y_j
    pair_mean = np.matmul(np.transpose(X * ws[None, :, None], (0, 2, 1)), Y)  # (G, i, j)
    gain = np.einsum("gij,gk->ijk", pair_mean, weight[:, None] * conditioned)
    # loss part: sum_{g,s} W_g w_s X_i Y_j Zbar_k, accumulated in chunks
    omega = (weight[:, None] * ws[None, :]).ravel()
    Xf, Yf, Zf = X.reshape(-1, n), Y.reshape(-1, n), Z.reshape(-1, n)
    loss = np.zeros((n, n * n))
    chunk = 8192
    for s in range(0, Xf.shape[0], chunk):
        sl = slice(s, s + chunk)
        xz = (Xf[sl, :, None] * Zf[sl, None, :]).reshape(-1, n * n)
        loss += (omega[sl, None] * Yf[sl]).T @ xz
    loss = loss.reshape(n, n, n).transpose(1, 0, 2)  # (j, i, k) -> (i, j, k)
    T = gain - loss
    # symmetrize in (i, j): only the quadratic form c_i c_j T_ijk matters
    T = 0.5 * (T + T.transpose(1, 0, 2))
    T.setflags(write=False)
    return T


def galerkin_tensor(degree: int = 4, b: Interaction | None = None) -> np.ndarray:
    """T with dc_k/dt = sum_ij c_i c_j T_ijk for the orthonormal Hermite basis."""
    b = b or Interaction.maxwell()
    if not b.polynomial:
        raise ValueError("the Galerkin flow is exact only for the constant kernel")
    return _tensor_cached(int(degree), float(b.strength))


def q_galerkin(f: PolyDensity, b: Interaction | None = None) -> np.ndarray:
    """Coefficients of the projection of Q(f)/M onto the basis of f."""
    T = galerkin_tensor(f.degree, b)
    return np.einsum("i,j,ijk->k", f.coef, f.coef, T)


# ---------------------------------------------------------------- strong form


def _strong_rules(f, w_nodes: int | None, polar: int | None):
    d = f.degree if isinstance(f, PolyDensity) else 4
    w_rule = make_hermite_rule(3, w_nodes or d + 3)
    p = polar or d + 1
    sphere = make_sphere_rule(p, max(2 * d + 1, 2 * p - 1))
    if isinstance(f, PolyDensity):
        if 2 * w_rule.nodes_per_axis - 1 < 2 * d or 2 * sphere.polar_order - 1 < 2 * d:
            raise QuadratureOrderError(
                f"strong operator needs exactness for degree {2 * d} in w and sigma"
            )
    return w_rule, sphere


def q_ratio(
    f, b: Interaction, v: np.ndarray, w_nodes: int | None = None, polar: int | None = None,
    chunk: int = 16,
) -> np.ndarray:
    """Q(f)(v)/M(v) = E_{w~M}[b (int P(v')P(w') dmu - P(v)P(w))] at points v (N, 3)."""
    v = np.atleast_2d(np.asarray(v, float))
    ratio = _ratio_of(f)
    w_rule, sphere = _strong_rules(f, w_nodes, polar)
    W, ww = w_rule.nodes, w_rule.weights
    Pw = ratio(W)
    out = np.empty(v.shape[0])
    for s in range(0, v.shape[0], chunk):
        vb = v[s : s + chunk]
        nb = vb.shape[0]
        vv = np.repeat(vb, W.shape[0], axis=0)
        wv = np.tile(W, (nb, 1))
        vs, wsig = _sigma_images(vv, wv, sphere.nodes)
        gain = (ratio(vs.reshape(-1, 3)) * ratio(wsig.reshape(-1, 3))).reshape(vs.shape[:2]) @ sphere.weights
        loss = np.repeat(ratio(vb), W.shape[0]) * np.tile(Pw, nb)
        kern = b(vv, wv)
        out[s : s + chunk] = ((kern * (gain - loss)).reshape(nb, -1)) @ ww
    return out


def q_operator(f, b: Interaction, v: np.ndarray, **kw) -> np.ndarray:
    """Q(f)(v) itself: the ratio times the standard normal density."""
    v = np.atleast_2d(np.asarray(v, float))
    m = np.exp(-0.5 * np.sum(v * v, axis=1)) / (2 * np.pi) ** 1.5
    return q_ratio(f, b, v, **kw) * m


def strong_moments(
    f, b: Interaction, degree: int | None = None, v_nodes: int | None = None, **kw
) -> np.ndarray:
    """<Q(f)/f, psi_k>_f = int Q(f) psi_k for the orthonormal basis up to `degree`."""
    d = degree if degree is not None else (f.degree if isinstance(f, PolyDensity) else 4)
    fd = f.degree if isinstance(f, PolyDensity) else d
    m = v_nodes or ceil((2 * fd + d + 1) / 2)
    rule = make_hermite_rule(3, max(m, fd + 3))
    q = q_ratio(f, b, rule.nodes, **kw)
    return hermite_design(rule.nodes, d).T @ (rule.weights * q)


# ---------------------------------------------------------------- entropy production


@dataclass(frozen=True)
class EntropyProductionForms:
    """Sigma by the A-operator route and by the symmetric covariance route."""

    a_form: float
    symmetric_form: float
    normalizer: float

    @property
    def discrepancy(self) -> float:
        scale = max(abs(self.a_form), abs(self.symmetric_form), 1e-300)
        return abs(self.a_form - self.symmetric_form) / scale


def _log_f(ratio: Callable) -> Callable:
    def log_f(x):
        r = ratio(x)
        if np.any(r <= 0.0):
            raise PositivityError("f is not positive at a pair-rule node")
        return np.log(r) - 0.5 * np.sum(x * x, axis=1) - 1.5 * np.log(2 * np.pi)

    return log_f


def _entropy_rule() -> CollisionRule:
    return make_collision_rule(0, centers=10, radial=8, polar=8, azimuthal=16)


def entropy_production_forms(
    f, b: Interaction, rule: CollisionRule | None = None, seed: int = 7
) -> EntropyProductionForms:
    """Both expressions of Sigma(f), normalized by E_{f(x)f}[b].

    a_form:        -E_{b f(x)f}[A log f] on the pair rule.
    symmetric_form: 1/2 E over the invariants of b Cov_sigma(F, log F), where
                    F = f(x)f / M(x)M, computed on a rotated copy of the sphere
                    so the two forms share no sphere nodes.
    """
    rule = rule or _entropy_rule()
    ratio = _ratio_of(f)
    a_value, norm = _weak_parts(f, _log_f(ratio), b, rule)
    a_form = -a_value / norm

    rotated = rule.sphere.rotated(random_rotation(np.random.default_rng(seed)))
    ws = rotated.weights
    weight = rule.group_weights * b.of_speed(rule.speeds())
    cov_sum = sym_norm = 0.0
    for sl in rule.chunks():
        v, w = rule.pairs(rotated.nodes, groups=sl)
        F = _apply(lambda a, c: ratio(a) * ratio(c), v, w)
        if np.any(F <= 0.0):
            raise PositivityError("f is not positive at a pair-rule node")
        L = np.log(F)
        cov = (F * L) @ ws - (F @ ws) * (L @ ws)
        cov_sum += float(weight[sl] @ cov)
        sym_norm += float(weight[sl] @ (F @ ws))
    symmetric = 0.5 * cov_sum / sym_norm
    return EntropyProductionForms(float(a_form), float(symmetric), float(norm))


def entropy_production(f, b: Interaction, rule: CollisionRule | None = None) -> float:
    """Sigma(f) = -E_{b f(x)f}[A log f] (normalized), cross-checked by the symmetric form."""
    forms = entropy_production_forms(f, b, rule)
    return forms.a_form
