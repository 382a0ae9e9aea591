"""Orthonormal Hermite polynomials on R^3 and the spectral density f = P M."""

from __future__ import annotations

from functools import lru_cache
from math import factorial, sqrt

import numpy as np

from ..quadrature import HermiteRule, make_hermite_rule, multi_indices

__all__ = [
    "basis_indices",
    "hermite_design",
    "PolyDensity",
    "PositivityError",
    "isotropic_quartic",
    "moment_polynomial",
]


class PositivityError(ValueError):
    """The spectral density is negative at a quadrature node."""


@lru_cache(maxsize=None)
def basis_indices(degree: int, dim: int = 3) -> tuple:
    return tuple(multi_indices(dim, degree))


def _he_table(x: np.ndarray, degree: int) -> np.ndarray:
    """Normalized He_k(x)/sqrt(k!) for k = 0..degree; shape x.shape + (degree+1,)."""
    out = np.empty(x.shape + (degree + 1,))
    out[..., 0] = 1.0
    if degree >= 1:
        out[..., 1] = x
    for k in range(1, degree):
        # He_{k+1} = x He_k - k He_{k-1}, rescaled to the orthonormal family
        out[..., k + 1] = (x * out[..., k] - sqrt(k) * out[..., k - 1]) / sqrt(k + 1)
    return out


def hermite_design(x: np.ndarray, degree: int) -> np.ndarray:
    """Values of all orthonormal psi_alpha, |alpha| <= degree, at points x (..., dim)."""
    x = np.asarray(x, dtype=float)
    dim = x.shape[-1]
    tables = [_he_table(x[..., j], degree) for j in range(dim)]
    idx = np.array(basis_indices(degree, dim))
    out = tables[0][..., idx[:, 0]]
    for j in range(1, dim):
        out = out * tables[j][..., idx[:, j]]
    return out


def isotropic_quartic(degree: int = 4) -> np.ndarray:
    """Coefficients of (|v|^4 - 10|v|^2 + 15)/sqrt(120), the unit-norm radial quartic.

    In the orthonormal basis it equals
    (sqrt(24) sum_j psi_{4e_j} + 4 sum_{i<j} psi_{2e_i+2e_j}) / sqrt(120).
    """
    if degree < 4:
        raise ValueError("the radial quartic needs degree >= 4")
    idx = basis_indices(degree)
    c = np.zeros(len(idx))
    for n, a in enumerate(idx):
        if sum(a) != 4:
            continue
        if sorted(a) == [0, 0, 4]:
            c[n] = sqrt(24.0)
        elif sorted(a) == [0, 2, 2]:
            c[n] = 4.0
    return c / sqrt(120.0)


def moment_polynomial(alpha: tuple, degree: int) -> np.ndarray:
    """Coefficients of the monomial v^alpha in the orthonormal basis.

    Uses x^n = sum_k n!/(k! ((n-k)/2)! 2^((n-k)/2)) He_k(x) per axis.
    """
    idx = basis_indices(degree)
    lookup = {a: i for i, a in enumerate(idx)}
    per_axis = []
    for n in alpha:
        terms = {}
        for k in range(n % 2, n + 1, 2):
            m = (n - k) // 2
            terms[k] = factorial(n) / (factorial(k) * factorial(m) * 2**m) * sqrt(factorial(k))
        per_axis.append(terms)
    c = np.zeros(len(idx))
    for k0, a0 in per_axis[0].items():
        for k1, a1 in per_axis[1].items():
            for k2, a2 in per_axis[2].items():
                key = (k0, k1, k2)
                if key not in lookup:
                    raise ValueError("monomial degree exceeds the basis degree")
                c[lookup[key]] += a0 * a1 * a2
    return c


class PolyDensity:
    """f = P M with P = sum_alpha c_alpha psi_alpha of total degree <= d on R^3."""

    def __init__(self, coef, degree: int = 4, check_mass: bool = True):
        self.degree = int(degree)
        self.indices = basis_indices(self.degree)
        coef = np.asarray(coef, dtype=float).reshape(-1)
        if coef.shape[0] != len(self.indices):
            raise ValueError(
                f"degree {degree} needs {len(self.indices)} coefficients, got {coef.shape[0]}"
            )
        if check_mass and abs(coef[0] - 1.0) > 1e-10:
            raise ValueError(f"unit mass requires c_0 = 1, got {coef[0]!r}")
        self.coef = coef

    @classmethod
    def maxwell(cls, degree: int = 4) -> "PolyDensity":
        c = np.zeros(len(basis_indices(degree)))
        c[0] = 1.0
        return cls(c, degree)

    @classmethod
    def perturbed(cls, perturbation: np.ndarray, degree: int = 4) -> "PolyDensity":
        c = np.asarray(perturbation, dtype=float).copy()
        c[0] = 1.0
        return cls(c, degree)

    @property
    def size(self) -> int:
        return len(self.indices)

    def index_of(self, alpha: tuple) -> int:
        return self.indices.index(tuple(alpha))

    def ratio(self, x: np.ndarray) -> np.ndarray:
        return hermite_design(x, self.degree) @ self.coef

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(x)
        m = np.exp(-0.5 * np.sum(x * x, axis=-1)) / (2 * np.pi) ** 1.5
        return self.ratio(x) * m

    def moment(self, alpha: tuple) -> float:
        """E_f[v^alpha] exactly from the coefficients (requires |alpha| <= d)."""
        return float(moment_polynomial(alpha, self.degree) @ self.coef)

    @property
    def mass(self) -> float:
        return float(self.coef[0])

    @property
    def momentum(self) -> np.ndarray:
        return np.array([self.coef[self.index_of(e)] for e in ((1, 0, 0), (0, 1, 0), (0, 0, 1))])

    @property
    def energy(self) -> float:
        """E_f[|v|^2] = mass + sqrt(2) sum_j c_{2e_j}."""
        total = 3.0 * self.coef[0]
        for e in ((2, 0, 0), (0, 2, 0), (0, 0, 2)):
            total += sqrt(2.0) * self.coef[self.index_of(e)]
        return float(total)

    def temperature(self) -> float:
        m = self.momentum / self.mass
        return float((self.energy / self.mass - m @ m) / 3.0)

    def node_ratio(self, rule: HermiteRule) -> np.ndarray:
        return self.ratio(rule.nodes)

    def check_positive(self, rule: HermiteRule, tol: float = 1e-8) -> float:
        """Smallest P at the nodes; raises if below -tol."""
        low = float(np.min(self.node_ratio(rule)))
        if low < -tol:
            raise PositivityError(f"P = {low:.3g} < 0 at a quadrature node")
        return low

    def with_coef(self, coef: np.ndarray) -> "PolyDensity":
        return PolyDensity(coef, self.degree, check_mass=False)

    @classmethod
    def project(cls, ratio, degree: int = 4, rule: HermiteRule | None = None) -> "PolyDensity":
        """Hermite projection of an arbitrary ratio f/M (truncated at degree d)."""
        rule = rule or make_hermite_rule(3, degree + 8)
        design = hermite_design(rule.nodes, degree)
        c = design.T @ (rule.weights * ratio(rule.nodes))
        return cls(c, degree, check_mass=False)
