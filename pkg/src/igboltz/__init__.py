"""Exponential-manifold tools for densities relative to the standard normal,
with a spectral solver for the spatially homogeneous Boltzmann equation."""

from . import boltzmann, divergence, hyvarinen, kinematics, manifold, orlicz, quadrature

__version__ = "0.1.0"

__all__ = ["boltzmann", "divergence", "hyvarinen", "kinematics", "manifold", "orlicz", "quadrature"]
