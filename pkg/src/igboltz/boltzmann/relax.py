"""Relaxation toward equilibrium: Hermite-Galerkin flow and a particle oracle."""

from __future__ import annotations

from dataclasses import dataclass
from math import log, pi, sqrt
from typing import Callable, Sequence

import numpy as np

from ..divergence import FlowError, FlowTrace, rk4_step
from ..kinematics import collide_sigma
from ..quadrature import SeededSampler, make_hermite_rule
from .collision import galerkin_tensor
from .hermite import PolyDensity, hermite_design, moment_polynomial
from .interaction import Interaction

__all__ = [
    "TRACE_COLUMNS",
    "PositivityPolicy",
    "relax",
    "ParticleEnsemble",
    "particle_relax",
    "DEFAULT_MOMENTS",
    "galerkin_moments",
    "bimodal_sampler",
    "bimodal_density",
]

TRACE_COLUMNS = (
    "t", "H", "entropy_production", "mass", "mom_x", "mom_y", "mom_z",
    "energy", "kl_to_equilibrium", "clipped_mass",
)

PositivityPolicy = str  # "abort" | "clip-and-flag"

DEFAULT_MOMENTS = (
    (2, 0, 0), (0, 2, 0), (0, 0, 2), (1, 1, 0),
    (4, 0, 0), (0, 4, 0), (2, 2, 0), (0, 2, 2), (3, 1, 0),
)


class _Diagnostics:
    """Entropy-type functionals of P M evaluated on a fixed 3D Hermite rule."""

    def __init__(self, degree: int, nodes_per_axis: int):
        self.rule = make_hermite_rule(3, nodes_per_axis)
        self.design = hermite_design(self.rule.nodes, degree)
        self.sq = np.sum(self.rule.nodes**2, axis=1)
        self.energy_coef = sum(moment_polynomial(e, degree) for e in ((2, 0, 0), (0, 2, 0), (0, 0, 2)))
        self.mom_coef = [moment_polynomial(e, degree) for e in ((1, 0, 0), (0, 1, 0), (0, 0, 1))]

    def evaluate(self, c: np.ndarray, velocity: np.ndarray, tol: float) -> dict:
        w = self.rule.weights
        P = self.design @ c
        negative = P < -tol
        clipped = float(w @ np.where(P < 0.0, -P, 0.0))
        Pc = np.maximum(P, 0.0)
        logP = np.log(np.where(Pc > 0.0, Pc, 1.0))
        plogp = float(w @ (Pc * logP))
        mass = float(c[0])
        energy = float(self.energy_coef @ c)
        mom = np.array([m @ c for m in self.mom_coef])
        H = -plogp + 0.5 * energy + 1.5 * log(2.0 * pi) * mass
        # dH/dt = -int (d/dt f) log f for the velocity actually integrated
        R = self.design @ velocity
        log_f = logP - 0.5 * self.sq - 1.5 * log(2.0 * pi)
        sigma = -float(w @ np.where(Pc > 0.0, R * log_f, 0.0))
        # KL to the Maxwellian with the same mass, mean and temperature
        u = mom / mass
        temp = (energy / mass - u @ u) / 3.0
        shifted = np.sum((self.rule.nodes - u) ** 2, axis=1)
        log_ratio = logP - 0.5 * self.sq + shifted / (2.0 * temp) + 1.5 * log(temp) - log(mass)
        kl = float(w @ np.where(Pc > 0.0, Pc * log_ratio, 0.0))
        return {
            "H": H, "entropy_production": sigma, "mass": mass,
            "mom_x": float(mom[0]), "mom_y": float(mom[1]), "mom_z": float(mom[2]),
            "energy": energy, "kl_to_equilibrium": kl, "clipped_mass": clipped,
            "negative": bool(np.any(negative)),
        }


def relax(
    f0: PolyDensity,
    b: Interaction | None = None,
    t_grid: Sequence[float] | None = None,
    integrator: str = "rk4",
    positivity: PositivityPolicy = "clip-and-flag",
    diagnostic_nodes: int = 16,
    tol: float = 1e-8,
) -> FlowTrace:
    """Integrate dc/dt = T(c, c) on the grid and record the H-theorem instrumentation.

    Flags: conservation drift maxima, the largest per-step decrease of H,
    and whether positivity was ever clipped.
    """
    b = b or Interaction.maxwell()
    if integrator not in ("rk4", "euler"):
        raise ValueError(f"integrator must be rk4 or euler, got {integrator!r}")
    if positivity not in ("abort", "clip-and-flag"):
        raise ValueError(f"positivity policy must be abort or clip-and-flag, got {positivity!r}")
    times = np.asarray(t_grid if t_grid is not None else np.linspace(0.0, 8.0, 8001), float)
    T = galerkin_tensor(f0.degree, b)
    diag = _Diagnostics(f0.degree, diagnostic_nodes)

    def rhs(t: float, c: np.ndarray) -> np.ndarray:
        return np.einsum("i,j,ijk->k", c, c, T)

    c = f0.coef.copy()
    series = {k: [] for k in TRACE_COLUMNS if k != "t"}
    states = []
    clipped_any = False

    def record(c: np.ndarray, t: float):
        nonlocal clipped_any
        d = diag.evaluate(c, rhs(t, c), tol)
        if d.pop("negative"):
            if positivity == "abort":
                raise FlowError("spectral density is negative at a diagnostic node", t)
            clipped_any = True
        for k, v in d.items():
            series[k].append(v)
        states.append(c.copy())

    record(c, float(times[0]))
    for k in range(1, times.shape[0]):
        t0, dt = float(times[k - 1]), float(times[k] - times[k - 1])
        if integrator == "rk4":
            c = rk4_step(rhs, c, t0, dt)
        else:
            c = c + dt * rhs(t0, c)
        if not np.all(np.isfinite(c)):
            raise FlowError("coefficients blew up", float(times[k]))
        record(c, float(times[k]))

    trace = FlowTrace(times, states, {k: np.asarray(v) for k, v in series.items()})
    m0 = series["mass"][0]
    e0 = series["energy"][0]
    mom0 = np.array([series[k][0] for k in ("mom_x", "mom_y", "mom_z")])
    mom = np.column_stack([series[k] for k in ("mom_x", "mom_y", "mom_z")])
    H = np.asarray(series["H"])
    trace.flags.update(
        mass_drift=float(np.max(np.abs(np.asarray(series["mass"]) - m0))),
        momentum_drift=float(np.max(np.abs(mom - mom0))),
        energy_drift=float(np.max(np.abs(np.asarray(series["energy"]) - e0))),
        max_entropy_decrease=float(max(0.0, np.max(H[:-1] - H[1:]))) if H.size > 1 else 0.0,
        clipped=clipped_any,
    )
    return trace


def galerkin_moments(trace: FlowTrace, degree: int, moments=DEFAULT_MOMENTS) -> np.ndarray:
    """E_f[v^alpha] along a Galerkin trace, shape (times, moments)."""
    A = np.column_stack([moment_polynomial(a, degree) for a in moments])
    return np.asarray(trace.states) @ A


# ---------------------------------------------------------------- particles


@dataclass
class ParticleEnsemble:
    """N equally weighted velocities."""

    velocities: np.ndarray
    seed: int

    def __post_init__(self):
        self.velocities = np.asarray(self.velocities, dtype=float)
        if self.velocities.ndim != 2 or self.velocities.shape[1] != 3:
            raise ValueError("velocities must have shape (N, 3)")
        if not np.all(np.isfinite(self.velocities)):
            raise ValueError("velocities must be finite")

    @property
    def size(self) -> int:
        return self.velocities.shape[0]

    def moments(self, moments=DEFAULT_MOMENTS) -> tuple[np.ndarray, np.ndarray]:
        """Sample means and standard errors of v^alpha."""
        v = self.velocities
        vals = np.column_stack([np.prod(v ** np.asarray(a), axis=1) for a in moments])
        return vals.mean(axis=0), vals.std(axis=0, ddof=1) / sqrt(v.shape[0])


def bimodal_density(amplitude: float = 0.5, degree: int = 4) -> PolyDensity:
    """P = 1 + a (v_x^2 - 1), i.e. c_(2,0,0) = a sqrt 2."""
    f = PolyDensity.maxwell(degree)
    c = f.coef.copy()
    c[f.index_of((2, 0, 0))] = amplitude * sqrt(2.0)
    return PolyDensity(c, degree)


def bimodal_sampler(amplitude: float = 0.5) -> Callable:
    """Exact sampler for (1 + a (v_x^2 - 1)) M with 0 <= a <= 1.

    v_x is standard normal with probability 1 - a and otherwise has density
    x^2 M(x), sampled as a random sign times the root of a chi-square(3).
    """
    if not 0.0 <= amplitude <= 1.0:
        raise ValueError("amplitude must lie in [0, 1] for a nonnegative density")

    def sample(rng: np.random.Generator, n: int) -> np.ndarray:
        v = rng.standard_normal((n, 3))
        tilted = rng.random(n) < amplitude
        k = int(tilted.sum())
        v[tilted, 0] = np.sqrt(rng.chisquare(3, k)) * rng.choice([-1.0, 1.0], k)
        return v

    return sample


def particle_relax(
    sampler: Callable,
    b: Interaction | None = None,
    t_grid: Sequence[float] = (0.0, 1.0),
    N: int = 100_000,
    seed: int = 0,
    dt: float = 0.01,
    moments=DEFAULT_MOMENTS,
) -> FlowTrace:
    """Nanbu-Babovsky binary-collision Monte Carlo for df/dt = Q(f).

    Each step of length dt draws K ~ Poisson(N b_max dt / 2) disjoint random
    pairs, accepts each with probability b/b_max and collides accepted pairs
    with sigma uniform on the sphere.  Moments and their standard errors are
    recorded at the grid times (which must be multiples of dt).
    """
    if N < 10_000:
        raise ValueError(f"particle_relax needs N >= 1e4, got {N}")
    b = b or Interaction.maxwell()
    root = SeededSampler(seed)
    rng_init = root.substream(0).generator
    rng = root.substream(1).generator
    ens = ParticleEnsemble(sampler(rng_init, N), seed)
    v = ens.velocities
    times = np.asarray(t_grid, float)
    steps = np.rint(times / dt).astype(int)
    if np.any(np.abs(steps * dt - times) > 1e-9):
        raise ValueError("grid times must be multiples of dt")
    means, errors, states = [], [], []
    worst = 0.0

    def record():
        m, e = ParticleEnsemble(v, seed).moments(moments)
        means.append(m)
        errors.append(e)
        states.append(m)

    step = 0
    for target in steps:
        while step < target:
            if b.polynomial:
                b_max = b.strength
            else:
                b_max = float(b.of_speed(2.0 * np.sqrt(np.max(np.sum(v * v, axis=1)))))
            K = min(int(rng.poisson(N * b_max * dt / 2.0)), N // 2)
            if K:
                idx = rng.choice(N, 2 * K, replace=False)
                i, j = idx[:K], idx[K:]
                accept = rng.random(K) * b_max < b(v[i], v[j])
                i, j = i[accept], j[accept]
                sigma = rng.standard_normal((i.shape[0], 3))
                sigma /= np.linalg.norm(sigma, axis=1, keepdims=True)
                q = collide_sigma(v[i], v[j], sigma)
                errs = q.invariant_errors() if i.shape[0] else {}
                worst = max([worst] + list(errs.values()))
                v[i], v[j] = q.v_bar, q.w_bar
            step += 1
        record()
    trace = FlowTrace(times, states, {"mean": np.asarray(means), "stderr": np.asarray(errors)})
    trace.flags.update(max_invariant_error=worst, moments=[list(a) for a in moments])
    return trace
