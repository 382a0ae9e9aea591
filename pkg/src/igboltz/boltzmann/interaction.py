"""Collision kernels b(v, w) that depend only on the relative speed |v - w|."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["Interaction", "InteractionBounds"]

KINDS = ("maxwell_constant", "power_law")


@dataclass(frozen=True)
class InteractionBounds:
    """C |v-w|^lam <= b(v, w) <= A + B |v-w|^2."""

    A: float
    B: float
    C: float
    lam: float


@dataclass(frozen=True)
class Interaction:
    kind: str = "maxwell_constant"
    strength: float = 1.0
    exponent: float = 0.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"interaction kind must be one of {KINDS}, got {self.kind!r}")
        if not (np.isfinite(self.strength) and self.strength > 0):
            raise ValueError(f"interaction strength must be positive, got {self.strength!r}")
        if self.kind == "maxwell_constant" and self.exponent != 0.0:
            raise ValueError("the constant kernel has exponent 0")
        if self.kind == "power_law" and not (0.0 < self.exponent <= 2.0):
            raise ValueError(f"power-law exponent must lie in (0, 2], got {self.exponent!r}")

    @classmethod
    def maxwell(cls, strength: float = 1.0) -> "Interaction":
        return cls("maxwell_constant", float(strength), 0.0)

    @classmethod
    def power_law(cls, exponent: float, strength: float = 1.0) -> "Interaction":
        return cls("power_law", float(strength), float(exponent))

    @property
    def polynomial(self) -> bool:
        """True when b is constant, so polynomial integrands stay polynomial."""
        return self.kind == "maxwell_constant"

    def of_speed(self, r) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        if self.kind == "maxwell_constant":
            return np.full(r.shape, self.strength)
        return self.strength * r**self.exponent

    def of_invariants(self, momentum, energy) -> np.ndarray:
        """b from (v+w, |v|^2+|w|^2) using |v-w|^2 = 2 energy - |v+w|^2."""
        momentum = np.asarray(momentum, dtype=float)
        r2 = 2.0 * np.asarray(energy, dtype=float) - np.sum(momentum**2, axis=-1)
        return self.of_speed(np.sqrt(np.maximum(r2, 0.0)))

    def __call__(self, v, w) -> np.ndarray:
        return self.of_speed(np.linalg.norm(np.asarray(v, float) - np.asarray(w, float), axis=-1))

    @property
    def bounds(self) -> InteractionBounds:
        # the constant kernel satisfies the lower bound with exponent 0
        if self.kind == "maxwell_constant":
            return InteractionBounds(self.strength, 0.0, self.strength, 0.0)
        # r^lam <= 1 + r^2 for 0 < lam <= 2
        return InteractionBounds(self.strength, self.strength, self.strength, self.exponent)

    def check_bounds(self, seed: int = 0, count: int = 2000, scale: float = 10.0) -> bool:
        """Both growth bounds on seeded pairs (v, w) with entries in [-scale, scale]."""
        rng = np.random.default_rng(seed)
        v = rng.uniform(-scale, scale, (count, 3))
        w = rng.uniform(-scale, scale, (count, 3))
        r = np.linalg.norm(v - w, axis=1)
        b = self(v, w)
        bd = self.bounds
        lower = bd.C * r**bd.lam
        upper = bd.A + bd.B * r**2
        tol = 1e-12 * (1.0 + np.abs(b))
        return bool(np.all(lower <= b + tol) and np.all(b <= upper + tol))

    def to_record(self) -> dict:
        return {"kind": self.kind, "strength": self.strength, "exponent": self.exponent}
