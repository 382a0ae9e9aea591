"""Spatially homogeneous Boltzmann operator on the Hermite-Maxwell chart."""

from .collision import (
    CollisionRule,
    ConditioningError,
    EntropyProductionForms,
    QuadratureOrderError,
    a_operator,
    condition_on_invariants,
    condition_pi_weighted,
    entropy_production,
    entropy_production_forms,
    galerkin_tensor,
    make_collision_rule,
    maxwell_weak_form,
    q_galerkin,
    q_operator,
    q_ratio,
    strong_moments,
    tensorize,
    tilted_conditional,
    weak_moments,
)
from .hermite import (
    PolyDensity,
    PositivityError,
    basis_indices,
    hermite_design,
    isotropic_quartic,
    moment_polynomial,
)
from .interaction import Interaction, InteractionBounds
from .relax import (
    DEFAULT_MOMENTS,
    TRACE_COLUMNS,
    ParticleEnsemble,
    bimodal_density,
    bimodal_sampler,
    galerkin_moments,
    particle_relax,
    relax,
)
