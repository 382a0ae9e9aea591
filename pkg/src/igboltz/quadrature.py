"""Quadrature against the standard Gaussian on R^n and the uniform measure on S^2.

Expectations under the Maxwell density M are computed with tensor-product
Gauss-Hermite rules in the probabilist convention, so that the weights are
exactly the probabilities of the nodes.  Integrals over the unit sphere use
a product of Gauss-Legendre in cos(phi) and a periodic trapezoid in theta.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import product
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "NODE_BUDGET",
    "EvaluationDomainError",
    "ResourceLimitError",
    "HermiteRule",
    "SphereRule",
    "RadialRule",
    "SeededSampler",
    "hermite_nodes_1d",
    "make_hermite_rule",
    "make_sphere_rule",
    "make_radial_rule",
    "expect",
    "frame_from_axis",
    "random_rotation",
]

NODE_BUDGET = 1_000_000


class EvaluationDomainError(ValueError):
    """An integrand returned a non-finite value at a quadrature node."""

    def __init__(self, message: str, node: np.ndarray | None = None):
        super().__init__(message)
        self.node = node


class ResourceLimitError(RuntimeError):
    """A tensor grid would exceed the node budget."""


def hermite_nodes_1d(m: int) -> tuple[np.ndarray, np.ndarray]:
    """Probabilist Gauss-Hermite nodes and weights summing to one.

    The nodes come from the eigenvalues of the Jacobi matrix of the monic
    probabilist Hermite recurrence (off-diagonal sqrt(k)).  Each node is then
    polished by Newton steps on He_m and the weight recomputed as
    1 / sum_k p_k(x)^2 over the orthonormal polynomials, which keeps tiny
    tail weights accurate to full relative precision.
    """
    if m < 1:
        raise ValueError("need at least one node")
    if m == 1:
        return np.zeros(1), np.ones(1)
    offdiag = np.sqrt(np.arange(1, m, dtype=float))
    jacobi = np.diag(offdiag, 1) + np.diag(offdiag, -1)
    x = np.linalg.eigvalsh(jacobi)

    for _ in range(3):
        # orthonormal recurrence: p_{k+1} = (x p_k - sqrt(k) p_{k-1}) / sqrt(k+1)
        p_prev = np.zeros_like(x)
        p = np.ones_like(x)
        dp_prev = np.zeros_like(x)
        dp = np.zeros_like(x)
        for k in range(m):
            p_next = (x * p - np.sqrt(k) * p_prev) / np.sqrt(k + 1)
            dp_next = (p + x * dp - np.sqrt(k) * dp_prev) / np.sqrt(k + 1)
            p_prev, p = p, p_next
            dp_prev, dp = dp, dp_next
        x = x - p / dp

    # weights from the Christoffel function of the orthonormal family
    total = np.zeros_like(x)
    p_prev = np.zeros_like(x)
    p = np.ones_like(x)
    for k in range(m):
        total += p * p
        p_prev, p = p, (x * p - np.sqrt(k) * p_prev) / np.sqrt(k + 1)
    w = 1.0 / total

    # exact reflection symmetry
    x = 0.5 * (x - x[::-1])
    w = 0.5 * (w + w[::-1])
    return x, w / w.sum()


@dataclass(frozen=True)
class HermiteRule:
    """Tensor-product Gauss-Hermite rule for E_M on R^n."""

    dimension: int
    nodes_per_axis: int
    nodes: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)

    @property
    def size(self) -> int:
        return self.weights.shape[0]

    def expect(self, g: Callable[[np.ndarray], np.ndarray]) -> float:
        return expect(self, g)

    def refined(self, extra: int) -> "HermiteRule":
        return make_hermite_rule(self.dimension, self.nodes_per_axis + extra)


def make_hermite_rule(n: int, m: int, budget: int = NODE_BUDGET) -> HermiteRule:
    """Build the m^n tensor rule; rejects grids larger than `budget` nodes."""
    if n < 1:
        raise ValueError(f"dimension must be >= 1, got {n}")
    if m < 2:
        raise ValueError(f"nodes per axis must be >= 2, got {m}")
    if n * np.log(m) > np.log(budget) + 1e-12:
        raise ResourceLimitError(
            f"tensor grid {m}^{n} exceeds the node budget of {budget}"
        )
    x, w = hermite_nodes_1d(m)
    grids = np.meshgrid(*([x] * n), indexing="ij")
    nodes = np.stack([g.ravel() for g in grids], axis=1)
    wgrids = np.meshgrid(*([w] * n), indexing="ij")
    weights = np.prod(np.stack([g.ravel() for g in wgrids], axis=1), axis=1)
    weights = weights / weights.sum()
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return HermiteRule(n, m, nodes, weights)


def expect(rule, g: Callable[[np.ndarray], np.ndarray] | np.ndarray) -> float:
    """Weighted sum of g over the rule nodes in a fixed order.

    `g` is either a callable applied to the (N, n) node array or an array of
    precomputed node values.
    """
    values = g if isinstance(g, np.ndarray) else g(rule.nodes)
    values = np.broadcast_to(np.asarray(values, dtype=float), rule.weights.shape)
    bad = ~np.isfinite(values)
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        raise EvaluationDomainError(
            f"integrand is not finite at node {rule.nodes[i]}", rule.nodes[i]
        )
    return float(np.dot(rule.weights, values))


def frame_from_axis(axis: Sequence[float]) -> np.ndarray:
    """Rotation matrix whose third column is vers(axis).

    Columns (e1, e2, axis) form a right-handed orthonormal frame.
    """
    k = np.asarray(axis, dtype=float)
    k = k / np.linalg.norm(k)
    helper = np.eye(3)[int(np.argmin(np.abs(k)))]
    e1 = helper - np.dot(helper, k) * k
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(k, e1)
    return np.column_stack([e1, e2, k])


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    """Haar-random rotation in SO(3) via QR of a Gaussian matrix."""
    q, r = np.linalg.qr(rng.standard_normal((3, 3)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


@dataclass(frozen=True)
class SphereRule:
    """Product rule for the uniform probability on S^2.

    Gauss-Legendre in t = cos(phi) is applied separately on each hemisphere
    t in [-1, 0] and [0, 1], `polar_order` nodes each, so that integrands
    with a kink along the equator of the rule's pole are integrated exactly
    when they are polynomial on each side.
    """

    polar_order: int
    azimuthal_order: int
    nodes: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)
    frame: np.ndarray = field(repr=False, default_factory=lambda: np.eye(3))

    @property
    def size(self) -> int:
        return self.weights.shape[0]

    @property
    def pole(self) -> np.ndarray:
        return self.frame[:, 2]

    def integrate(self, f: Callable[[np.ndarray], np.ndarray]) -> float:
        return expect(self, f)

    def rotated(self, rotation: np.ndarray) -> "SphereRule":
        rot = np.asarray(rotation, dtype=float)
        nodes = self.nodes @ rot.T
        nodes.setflags(write=False)
        return SphereRule(
            self.polar_order, self.azimuthal_order, nodes, self.weights, rot @ self.frame
        )

    def aligned(self, axis: Sequence[float]) -> "SphereRule":
        """Same rule rotated so that its pole points along `axis`."""
        target = frame_from_axis(axis)
        return self.rotated(target @ self.frame.T)


def make_sphere_rule(polar_order: int, azimuthal_order: int) -> SphereRule:
    if polar_order < 2:
        raise ValueError(f"polar_order must be >= 2, got {polar_order}")
    if azimuthal_order < 4:
        raise ValueError(f"azimuthal_order must be >= 4, got {azimuthal_order}")
    s, ws = np.polynomial.legendre.leggauss(polar_order)
    # map [-1, 1] onto each hemisphere of t = cos(phi)
    t = np.concatenate([(s - 1.0) / 2.0, (s + 1.0) / 2.0])
    wt = np.concatenate([ws, ws]) / 4.0  # dt/2 over [-1,1], halved per piece
    theta = 2.0 * np.pi * np.arange(azimuthal_order) / azimuthal_order
    tt, th = np.meshgrid(t, theta, indexing="ij")
    sin_phi = np.sqrt(np.clip(1.0 - tt**2, 0.0, None))
    nodes = np.stack(
        [sin_phi * np.cos(th), sin_phi * np.sin(th), tt], axis=-1
    ).reshape(-1, 3)
    nodes /= np.linalg.norm(nodes, axis=1, keepdims=True)
    weights = np.repeat(wt, azimuthal_order) / azimuthal_order
    weights = weights / weights.sum()
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return SphereRule(polar_order, azimuthal_order, nodes, weights)


@dataclass(frozen=True)
class RadialRule:
    """Gauss rule for the chi distribution with three degrees of freedom.

    If r ~ N(0, I_3) then |r| has density proportional to rho^2 exp(-rho^2/2).
    With s = rho^2/2 this is generalized Gauss-Laguerre with alpha = 1/2;
    the rule is exact for even polynomials in rho up to degree 4m-2.
    """

    order: int
    nodes: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)


def make_radial_rule(m: int) -> RadialRule:
    from scipy.special import roots_genlaguerre

    s, w = roots_genlaguerre(m, 0.5)
    rho = np.sqrt(2.0 * s)
    w = w / w.sum()
    return RadialRule(m, rho, w)


class SeededSampler:
    """Reproducible random draws backed by numpy's PCG64 generator.

    Substreams for parallel workers are derived from (seed, worker index)
    through numpy's SeedSequence, so they never overlap the parent stream.
    """

    def __init__(self, seed: int, worker: int | None = None):
        self.seed = int(seed)
        self.worker = worker
        entropy = [self.seed] if worker is None else [self.seed, int(worker)]
        self._rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))
        self.draws = 0

    @property
    def generator(self) -> np.random.Generator:
        return self._rng

    def substream(self, worker: int) -> "SeededSampler":
        return SeededSampler(self.seed, worker)

    def normal(self, size) -> np.ndarray:
        out = self._rng.standard_normal(size)
        self.draws += out.size
        return out

    def uniform(self, size) -> np.ndarray:
        out = self._rng.random(size)
        self.draws += out.size
        return out

    def sphere(self, count: int) -> np.ndarray:
        """Uniform points on S^2."""
        z = self.normal((count, 3))
        return z / np.linalg.norm(z, axis=1, keepdims=True)

    def integers(self, high: int, size) -> np.ndarray:
        out = self._rng.integers(0, high, size)
        self.draws += np.size(out)
        return out


def monte_carlo_mean(values: np.ndarray) -> tuple[float, float]:
    """Sample mean and its standard error."""
    values = np.asarray(values, dtype=float)
    n = values.shape[0]
    return float(values.mean()), float(values.std(ddof=1) / np.sqrt(n))


def multi_indices(n: int, max_degree: int) -> list[tuple[int, ...]]:
    """All multi-indices in n variables of total degree <= max_degree, graded."""
    out = []
    for degree in range(max_degree + 1):
        for alpha in product(range(degree + 1), repeat=n):
            if sum(alpha) == degree:
                out.append(tuple(alpha))
    # graded, then reverse-lexicographic inside a degree (x1 powers first)
    return sorted(out, key=lambda a: (sum(a), tuple(-ai for ai in a)))


__all__ += ["monte_carlo_mean", "multi_indices"]
