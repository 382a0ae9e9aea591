"""The ten acceptance criteria as runnable checks.

Each check returns a CriterionResult with the measured quantities, the
tolerances they are held to, and the wall time against its budget.  The same
functions back tests/test_acceptance.py and the `acceptance` CLI subcommand.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from math import acosh, factorial, log, sqrt
from typing import Callable

import numpy as np

from . import divergence, hyvarinen as hy, kinematics as kin, manifold as mf, orlicz
from .boltzmann import (
    Interaction,
    PolyDensity,
    basis_indices,
    bimodal_density,
    bimodal_sampler,
    condition_on_invariants,
    condition_pi_weighted,
    entropy_production,
    galerkin_moments,
    isotropic_quartic,
    particle_relax,
    q_galerkin,
    q_operator,
    relax,
    strong_moments,
    tilted_conditional,
    weak_moments,
)
from .quadrature import SeededSampler, make_hermite_rule, make_sphere_rule, random_rotation

__all__ = [
    "CriterionResult",
    "CRITERIA",
    "run_criterion",
    "run_all",
    "central_difference",
    "perturbed_initial_condition",
    "maxwellian_chart",
]


@dataclass
class CriterionResult:
    number: int
    name: str
    passed: bool
    runtime: float
    budget: float
    details: dict = field(default_factory=dict)

    @property
    def within_budget(self) -> bool:
        return self.runtime <= self.budget

    def line(self) -> str:
        status = "PASS" if self.passed and self.within_budget else "FAIL"
        worst = ", ".join(f"{k}={_fmt(v)}" for k, v in self.details.items() if not isinstance(v, (list, dict)))
        return (
            f"[{status}] criterion {self.number:2d} {self.name}: {worst} "
            f"(runtime {self.runtime:.1f}s of {self.budget:.0f}s)"
        )


def _fmt(v) -> str:
    if isinstance(v, bool):
        return str(v)
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.3g}"
    return str(v)


def central_difference(fn: Callable[[float], float], order: int, step: float, half_width: int = 4) -> float:
    """d^order fn / dt^order at 0 from a symmetric stencil of 2*half_width+1 points.

    Stencil weights solve the moment conditions sum_k w_k k^p / p! = [p == order].
    """
    k = np.arange(-half_width, half_width + 1, dtype=float)
    powers = np.arange(k.shape[0])
    A = k[None, :] ** powers[:, None] / np.array([factorial(p) for p in powers], float)[:, None]
    rhs = np.zeros(k.shape[0])
    rhs[order] = 1.0
    w = np.linalg.solve(A, rhs)
    vals = np.array([fn(float(s * step)) for s in k])
    return float(w @ vals / step**order)


def perturbed_initial_condition(amplitude: float = 0.005, degree: int = 4) -> PolyDensity:
    """P = 1 + a (radial quartic) + a (psi_(2,0,0) - psi_(0,2,0)): zero momentum, energy 3."""
    c = amplitude * isotropic_quartic(degree)
    idx = basis_indices(degree)
    c[0] = 1.0
    c[idx.index((2, 0, 0))] += amplitude
    c[idx.index((0, 2, 0))] -= amplitude
    return PolyDensity(c, degree)


def maxwellian_chart(mean, temperature: float, rule) -> mf.ExpDensity:
    """N(mean, temperature I) on R^3 as e_M(u) with u in the degree-2 Hermite chart."""
    basis = (
        mf.hermite(1, 0, 0), mf.hermite(0, 1, 0), mf.hermite(0, 0, 1),
        mf.hermite(2, 0, 0), mf.hermite(0, 2, 0), mf.hermite(0, 0, 2),
    )
    mean = np.asarray(mean, float)
    quad = 0.5 * (1.0 - 1.0 / temperature)
    coef = np.concatenate([mean / temperature, [quad] * 3])
    return mf.ExpDensity(mf.ChartVector.centered(basis, coef), rule)


# ---------------------------------------------------------------- 1 kinematics


def criterion_kinematics(seed: int = 0) -> dict:
    rng = SeededSampler(seed).generator
    n = 10_000
    v = rng.standard_normal((n, 3))
    w = rng.standard_normal((n, 3))
    sigma = rng.standard_normal((n, 3))
    sigma /= np.linalg.norm(sigma, axis=1, keepdims=True)
    inv = kin.collide_sigma(v, w, sigma).invariant_errors()
    omega = rng.standard_normal((n, 3))
    inv_pi = kin.collide_pi(v, w, (omega / np.linalg.norm(omega, axis=1, keepdims=True))).invariant_errors()
    conservation = max(max(inv.values()), max(inv_pi.values()))

    ortho = 0.0
    round_trip = 0.0
    for k in range(200):
        P = kin.RankOneProjector(omega[k])
        A = kin.collision_matrix(P)
        ortho = max(ortho, float(np.max(np.abs(A.T @ A - np.eye(6)))))
        s = kin.sigma_from_pi(v[k], w[k], P)
        back = kin.pi_from_sigma(v[k], w[k], s)
        round_trip = max(round_trip, float(np.max(np.abs(back.matrix - P.matrix))))
        P2 = kin.pi_from_sigma(v[k], w[k], sigma[k])
        round_trip = max(round_trip, float(np.max(np.abs(kin.sigma_from_pi(v[k], w[k], P2) - sigma[k]))))

    generic = {kin.jacobian_rank(kin.collide_sigma(v[k], w[k], sigma[k])) for k in range(50)}
    same = kin.collide_sigma(v[0], v[0], sigma[0])
    degenerate = kin.jacobian_rank(same)
    passed = conservation <= 1e-11 and ortho <= 1e-13 and round_trip <= 1e-12 and generic == {4} and degenerate == 3
    return dict(passed=passed, conservation=conservation, orthogonality=ortho, round_trip=round_trip,
                generic_rank=min(generic), degenerate_rank=degenerate)


# ---------------------------------------------------------------- 2 measure identities


def _poly_on_sphere(rng, degree: int) -> Callable:
    dirs = rng.standard_normal((4, 3))
    amps = rng.uniform(0.5, 1.5, 4)

    def f(om):
        om = np.atleast_2d(om)
        return sum(a * (om @ d) ** (degree - (i % 2)) for i, (a, d) in enumerate(zip(amps, dirs))) + 1.0

    return f


def _even_on_sphere(rng) -> Callable:
    a, b = rng.standard_normal(3), rng.standard_normal(3)

    def g(om):
        om = np.atleast_2d(om)
        return (om @ a) ** 2 * (om @ b) ** 2 + (om @ a) ** 4 + 0.5

    return g


def criterion_measure(
    seed: int = 1, mc_samples: int = 1_000_000, sphere_polar: int = 128, sphere_azimuthal: int = 16
) -> dict:
    sampler = SeededSampler(seed)
    rng = sampler.generator
    kappa = rng.standard_normal(3)
    kappa /= np.linalg.norm(kappa)
    fine = make_sphere_rule(sphere_polar, sphere_azimuthal)
    f = _poly_on_sphere(rng, 6)
    g = _even_on_sphere(rng)
    quad = {
        "sigma_to_omega": kin.pushforward_check_sigma_to_omega(f, kappa, fine),
        "sigma_to_pi": kin.pushforward_check_sigma_to_pi(g, kappa, fine),
        "kappa_integrated": kin.pushforward_check_kappa_integrated(f, fine, make_sphere_rule(12, 24)),
    }
    half = kin.half_sphere_cosine(kappa, make_sphere_rule(8, 8))
    quad_err = max(max(r.error for r in quad.values()), abs(half - 0.25))

    # Monte Carlo confirmation of both sides of every identity
    s = sampler.sphere(mc_samples)
    o = sampler.sphere(mc_samples)
    kap = sampler.sphere(mc_samples)
    pushed = kin.vers(kappa[None, :] - s)
    c = o @ kappa
    samples = {
        "sigma_to_omega": (f(pushed), np.where(c >= 0, 4 * c, 0.0) * f(o), quad["sigma_to_omega"].lhs),
        "sigma_to_pi": (g(pushed), 2 * np.abs(c) * g(o), quad["sigma_to_pi"].lhs),
        "kappa_integrated": (f(kin.vers(kap - s)), f(o), quad["kappa_integrated"].rhs),
        "half_sphere": (np.maximum(s @ kappa, 0.0), None, 0.25),
    }
    worst_z = 0.0
    for lhs_vals, rhs_vals, exact in samples.values():
        for vals in (lhs_vals, rhs_vals):
            if vals is None:
                continue
            mean, se = vals.mean(), vals.std(ddof=1) / sqrt(vals.shape[0])
            worst_z = max(worst_z, abs(mean - exact) / se)
    passed = quad_err <= 1e-7 and worst_z <= 5.0
    return dict(passed=passed, quadrature_error=quad_err, monte_carlo_max_z=worst_z)


# ---------------------------------------------------------------- 3 cumulants


def criterion_cumulants() -> dict:
    rule = make_hermite_rule(1, 80)
    x_dir = mf.ChartVector.centered((mf.hermite(1),), [1.0])
    q_dir = mf.ChartVector.centered((mf.hermite(2),), [1.0])
    closed = 0.0
    for a in (-1.5, -0.3, 0.7, 2.0):
        closed = max(closed, abs(mf.cumulant(x_dir * a, rule) - a * a / 2))
    for b in (-0.8, -0.2, 0.1, 0.3):
        closed = max(closed, abs(mf.cumulant(q_dir * b, rule) - (-b - 0.5 * log(1 - 2 * b))))

    # relative to max(|value|, 1): the Gaussian shift has vanishing higher cumulants
    deriv_rel = 0.0
    mixed = (mf.hermite(1), mf.hermite(2))
    cases = [
        (x_dir * 0.4, x_dir),
        (q_dir * 0.1, q_dir),
        (mf.ChartVector.centered(mixed, [0.2, 0.05]), mf.ChartVector.centered(mixed, [0.5, 1.0])),
    ]
    for u, h in cases:
        analytic = mf.directional_cumulants(u, h, rule, 4)
        for n in range(1, 5):
            fd = central_difference(lambda t: mf.cumulant(u + h * t, rule), n, 0.02, half_width=6)
            deriv_rel = max(deriv_rel, abs(fd - analytic[n - 1]) / max(abs(analytic[n - 1]), 1.0))
    return dict(passed=closed <= 1e-8 and deriv_rel <= 1e-6, closed_form_error=closed, derivative_rel_error=deriv_rel)


# ---------------------------------------------------------------- 4 KL geodesics


def criterion_geodesics() -> dict:
    rule = make_hermite_rule(2, 24)
    basis = mf.hermite_basis(2)
    q0 = mf.ExpDensity(mf.ChartVector.centered(basis, [0.3, -0.2, 0.1, 0.05, -0.1]), rule)
    q2 = mf.ExpDensity(mf.ChartVector.centered(basis, [-0.2, 0.4, -0.05, 0.1, 0.08]), rule)
    t_grid = np.linspace(0.0, 5.0, 501)
    first = divergence.kl_flow_first(q0, q2, t_grid)
    second = divergence.kl_flow_second(q0, q2, t_grid)
    e1 = e2 = 0.0
    for k in range(0, t_grid.shape[0], 10):
        t = float(t_grid[k])
        ref1 = divergence.closed_form_first(q0, q2, t)
        ref2 = divergence.closed_form_second(q0, q2, t)
        e1 = max(e1, float(np.max(np.abs(first.states[k] - ref1) / np.maximum(1.0, np.abs(ref1)))))
        e2 = max(e2, float(np.max(np.abs(second.states[k] - ref2) / np.maximum(1.0, np.abs(ref2)))))
    return dict(passed=max(e1, e2) <= 1e-6, exponential_arc_error=e1, mixture_arc_error=e2)


# ---------------------------------------------------------------- 5 conditioning


def _poly6(rng, degree: int) -> Callable:
    """Seeded polynomial on R^6 of total degree <= degree (products of linear forms)."""
    terms = [(rng.standard_normal(), rng.standard_normal((d, 6))) for d in range(degree + 1) for _ in range(2)]

    def g(v, w):
        z = np.concatenate([np.atleast_2d(v), np.atleast_2d(w)], axis=1)
        out = np.zeros(z.shape[0])
        for c, forms in terms:
            out = out + c * np.prod(z @ forms.T, axis=1) if forms.size else out + c
        return out

    return g


def criterion_conditioning(seed: int = 2) -> dict:
    rng = SeededSampler(seed).generator
    sphere = make_sphere_rule(6, 12)
    pair = kin.VelocityPair(rng.standard_normal((20, 3)), rng.standard_normal((20, 3)))
    path_err = 0.0
    for _ in range(5):
        g = _poly6(rng, 2)
        a = condition_on_invariants(g, pair, sphere)
        b = condition_pi_weighted(g, pair, sphere)
        path_err = max(path_err, float(np.max(np.abs(a - b))))

    # tower property under M (x) M on a 6D Hermite rule
    rule6 = make_hermite_rule(6, 4)
    v6, w6 = rule6.nodes[:, :3], rule6.nodes[:, 3:]
    tower = 0.0
    for _ in range(3):
        g = _poly6(rng, 3)
        direct = float(rule6.weights @ g(v6, w6))
        cond = float(rule6.weights @ condition_on_invariants(g, kin.VelocityPair(v6, w6), make_sphere_rule(3, 6)))
        tower = max(tower, abs(direct - cond))

    # tilting by a function of the invariants does not change the conditional
    kernel = Interaction.power_law(1.0)
    tilt = lambda a, c: 1.0 + kernel(a, c)
    suff = 0.0
    for _ in range(3):
        g = _poly6(rng, 2)
        base = condition_on_invariants(g, pair, sphere)
        tilted = tilted_conditional(tilt, g, pair, sphere)
        suff = max(suff, float(np.max(np.abs(base - tilted))))
    passed = path_err <= 1e-7 and tower <= 1e-8 and suff <= 1e-8
    return dict(passed=passed, path_agreement=path_err, tower_error=tower, sufficiency_error=suff)


# ---------------------------------------------------------------- 6 equilibrium and H-theorem


def criterion_h_theorem(seed: int = 3, amplitude: float = 0.005, dt: float = 1e-3) -> dict:
    rng = SeededSampler(seed).generator
    b = Interaction.maxwell()
    rule3 = make_hermite_rule(3, 10)
    eq = 0.0
    for _ in range(10):
        f = maxwellian_chart(rng.uniform(-0.5, 0.5, 3), float(rng.uniform(0.7, 1.5)), rule3)
        v = rng.standard_normal((4, 3))
        eq = max(eq, float(np.max(np.abs(q_operator(f, b, v)))))

    f0 = perturbed_initial_condition(amplitude)
    times = np.linspace(0.0, 8.0, int(round(8.0 / dt)) + 1)
    trace = relax(f0, b, times)
    H = trace.column("H")
    sigma = trace.column("entropy_production")
    dH = (H[2:] - H[:-2]) / (times[2:] - times[:-2])
    mask = sigma[1:-1] > 1e-6
    rate_err = float(np.max(np.abs(dH[mask] - sigma[1:-1][mask]) / sigma[1:-1][mask])) if mask.any() else 0.0
    # the full-operator entropy production at checkpoints against the flow's dH/dt
    full_err = 0.0
    for t in (0.5, 1.0, 2.0, 4.0):
        k = int(round(t / dt))
        if sigma[k] > 1e-6:
            full = entropy_production(PolyDensity(trace.states[k]), b)
            full_err = max(full_err, abs(full - dH[k - 1]) / full)
    kl = trace.column("kl_to_equilibrium")
    fl = trace.flags
    passed = (
        eq <= 1e-8 and fl["mass_drift"] < 1e-9 and fl["momentum_drift"] < 1e-8
        and fl["energy_drift"] < 1e-8 and fl["max_entropy_decrease"] <= 1e-9
        and rate_err <= 1e-5 and full_err <= 1e-5 and kl[-1] < 1e-6
        and bool(np.all(np.diff(kl) <= 1e-15))
    )
    return dict(
        passed=passed, maxwellian_residual=eq, mass_drift=fl["mass_drift"],
        momentum_drift=fl["momentum_drift"], energy_drift=fl["energy_drift"],
        max_entropy_decrease=fl["max_entropy_decrease"], rate_rel_error=rate_err,
        full_operator_rel_error=full_err, final_kl=float(kl[-1]),
    )


# ---------------------------------------------------------------- 7 weak/strong


def criterion_weak_strong(seed: int = 4) -> dict:
    rng = SeededSampler(seed).generator
    b = Interaction.maxwell()
    c = np.zeros(35)
    c[1:] = 0.03 * rng.standard_normal(34)
    c[0] = 1.0
    f = PolyDensity(c)
    strong = strong_moments(f, b)
    weak = weak_moments(f, b, 4)
    gal = q_galerkin(f, b)
    err = float(np.max(np.abs(strong - weak)))
    err_gal = float(np.max(np.abs(strong - gal)))
    return dict(passed=max(err, err_gal) <= 1e-7, strong_vs_weak=err, strong_vs_galerkin=err_gal)


# ---------------------------------------------------------------- 8 cross-solver


def criterion_cross_solver(seed: int = 5, N: int = 100_000) -> dict:
    b = Interaction.maxwell()
    checkpoints = np.round(np.arange(0.5, 5.01, 0.5), 10)
    times = np.concatenate([[0.0], checkpoints])
    part = particle_relax(bimodal_sampler(0.5), b, times, N=N, seed=seed)
    gal = relax(bimodal_density(0.5), b, np.linspace(0.0, 5.0, 5001))
    gm = galerkin_moments(gal, 4)[np.rint(times * 1000).astype(int)]
    z = np.abs(part.series["mean"] - gm) / part.series["stderr"]
    worst = float(np.max(z[1:]))
    return dict(passed=worst <= 5.0, max_z=worst, checkpoints=int(checkpoints.size),
                invariant_error=part.flags["max_invariant_error"])


# ---------------------------------------------------------------- 9 Sobolev layer


def _sobolev_basis():
    return (mf.hermite(1, 0), mf.hermite(0, 1), mf.hermite(2, 0), mf.hermite(1, 1), mf.hermite(0, 2),
            mf.cosine(1.0, 0.5), mf.sine(0.3, 1.0))


def criterion_sobolev(seed: int = 6) -> dict:
    rng = SeededSampler(seed).generator
    rule = make_hermite_rule(2, 60)
    pieces = [hy.DiffFunction.monomial(a) for a in ((0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 3))]
    pieces += [hy.as_diff(b) for b in _sobolev_basis()[5:]]
    adjoint = 0.0
    for _ in range(100):
        i, j, k, l = rng.integers(0, len(pieces), 4)
        f = pieces[i] * pieces[j]
        g = pieces[k] * pieces[l]
        adjoint = max(adjoint, hy.stein_adjoint_check(f, g, rule).max_error)

    basis = _sobolev_basis()
    score = 0.0
    for _ in range(5):
        u = mf.ChartVector.centered(basis, 0.2 * rng.standard_normal(7))
        v = mf.ChartVector.centered(basis, 0.2 * rng.standard_normal(7))
        score = max(score, max(hy.score_identities(u, v, rule).errors.values()))

    rule1 = make_hermite_rule(1, 40)
    m_err = 0.0
    g0 = mf.ExpDensity(mf.ChartVector.zero((mf.hermite(1),)), rule1)
    for m in (-1.3, 0.5, 1.0, 2.0):
        fm = mf.ExpDensity(mf.ChartVector.centered((mf.hermite(1),), [m]), rule1)
        m_err = max(m_err, abs(hy.hyvarinen(g0, fm) - m * m), abs(hy.hyvarinen_chart_form(g0, fm) - m * m))

    u = mf.ChartVector.centered(basis, 0.15 * rng.standard_normal(7))
    v = mf.ChartVector.centered(basis, 0.15 * rng.standard_normal(7))
    F, G = mf.ExpDensity(u, rule), mf.ExpDensity(v, rule)
    dirs = [mf.ChartVector.centered(basis, rng.standard_normal(7)) for _ in range(20)]
    g1 = hy.hyvarinen_gradient_fd_check(G, F, dirs, "first").max_rel_error
    g2 = hy.hyvarinen_gradient_fd_check(G, F, dirs, "second").max_rel_error
    pairing = 0.0
    for k in range(10):
        lhs, rhs = hy.tilted_laplacian_pairing_check(dirs[k], dirs[k + 10], G)
        pairing = max(pairing, abs(lhs - rhs))
    passed = adjoint <= 1e-8 and score <= 1e-8 and m_err <= 1e-9 and max(g1, g2) <= 1e-5 and pairing <= 1e-8
    return dict(passed=passed, stein_adjoint=adjoint, score_identities=score, mean_shift_error=m_err,
                grad_first_rel=g1, grad_second_rel=g2, laplacian_pairing_error=pairing)


# ---------------------------------------------------------------- 10 Orlicz layer


def criterion_orlicz(seed: int = 7) -> dict:
    rng = SeededSampler(seed).generator
    rule = make_hermite_rule(1, 80)
    M = orlicz.DensityHandle.maxwell(rule)
    oracle = 0.0
    for c in (-2.0, 0.3, 1.0, 5.0):
        oracle = max(oracle, abs(orlicz.luxemburg_norm(c, M) - abs(c) / acosh(2.0)))
    oracle = max(oracle, abs(orlicz.luxemburg_norm(lambda x: x[:, 0], M) - 1.0 / sqrt(2.0 * log(2.0))))

    holder_ok = True
    for _ in range(20):
        a, b2 = rng.standard_normal(2)
        U = lambda x, a=a: a * x[:, 0] + np.sin(x[:, 0])
        V = lambda x, b2=b2: b2 * (x[:, 0] ** 2 - 1.0) + 0.5
        holder_ok &= orlicz.holder_pairing_check(U, V, M).ok
    ys = np.linspace(-20, 20, 401)
    delta2_ok = orlicz.delta2_check(ys, np.linspace(0.0, 5.0, 51))
    young_ok = orlicz.young_inequality_check(np.linspace(-5, 5, 101), ys)

    series = 0.0
    for raw in (lambda x: x[:, 0], lambda x: np.cos(x[:, 0]) - np.exp(-0.5)):
        vals = raw(rule.nodes)
        vals = 0.5 * vals / orlicz.luxemburg_norm(vals, M)
        for a in (1.0, 2.0):
            series = max(series, float(orlicz.exp_series_convergence(vals, a, M, 30)[30]))
    passed = oracle <= 1e-9 and holder_ok and delta2_ok and young_ok and series < 1e-8
    return dict(passed=passed, norm_oracle_error=oracle, holder=holder_ok, delta2=delta2_ok,
                young=young_ok, series_remainder_k30=series)


CRITERIA = {
    1: ("kinematics battery", criterion_kinematics, 5.0),
    2: ("measure identities", criterion_measure, 30.0),
    3: ("cumulant calculus", criterion_cumulants, 10.0),
    4: ("KL geodesics", criterion_geodesics, 20.0),
    5: ("conditioning", criterion_conditioning, 30.0),
    6: ("equilibrium and H-theorem", criterion_h_theorem, 300.0),
    7: ("weak/strong consistency", criterion_weak_strong, 60.0),
    8: ("cross-solver moments", criterion_cross_solver, 180.0),
    9: ("Sobolev layer", criterion_sobolev, 60.0),
    10: ("Orlicz layer", criterion_orlicz, 30.0),
}


def run_criterion(number: int) -> CriterionResult:
    name, fn, budget = CRITERIA[number]
    start = time.perf_counter()
    details = fn()
    runtime = time.perf_counter() - start
    passed = bool(details.pop("passed"))
    return CriterionResult(number, name, passed, runtime, budget, details)


def run_all(numbers=None, echo: Callable[[str], None] | None = print) -> list[CriterionResult]:
    out = []
    for n in numbers or sorted(CRITERIA):
        res = run_criterion(n)
        if echo is not None:
            echo(res.line())
        out.append(res)
    return out
