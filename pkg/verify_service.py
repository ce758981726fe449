"""Acceptance battery.

Checks run in groups, in dependency order (constants, profiles, energy,
ansatz, evolver, virial, modulation, reduced ODE, PDE run). Every group
declares its check names up front, so a report always lists the same
names whether a group passed, failed or raised.
"""
from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from ansatz_service import (
    ModParams,
    bracket_gaps,
    bracket_scaling,
    cross_term_scaling,
    equation_residual,
    modulation_terms,
    phi,
    remainder_constants,
    static_residual,
    two_bubble,
)
from config import ScenarioConfig, load_scenario
from evolution_service import scattering_check
from lab_errors import LabError, require_k
from modulation_service import (
    b_functional,
    beta_gap_ratio,
    concentration_run,
    extract,
    first_integral_deviation,
    formal_trajectory,
    monitor_b,
    pde_ode_agreement,
    rate_diagnostics,
    reduced_ode,
    reference_state,
)
from profile_service import (
    ProfileSet,
    build_profiles,
    coercivity_constant,
    lam_bubble,
    lamq_norm_sq_exact,
    profile_grid,
    rho_squared,
)
from radial_core import (
    OperatorSample,
    RadialField,
    StatePair,
    apply_operator,
    energy,
    fit_power,
    loglog_slope,
    norm_energy,
    norm_H,
    norm_L2,
)
from virial_service import (
    VirialProfile,
    a0_matrix,
    battery_fields,
    bullet_margins,
    lam0_pairing,
    lamq_localization_error,
    make_virial_profile,
    operator_ratio,
    pohozaev_check,
    virial_transfer_gap,
)

MODULE = "cli_harness"

logger = logging.getLogger(__name__)


@dataclass
class CheckRecord:
    name: str
    target: Optional[float]
    measured: Optional[float]
    tolerance: Optional[float]
    passed: bool
    detail: str = ""
    skipped: bool = False

    def to_dict(self) -> Dict[str, Any]:
        out = {
            "name": self.name,
            "target": self.target,
            "measured": self.measured,
            "tolerance": self.tolerance,
            "pass": self.passed,
        }
        if self.detail:
            out["detail"] = self.detail
        if self.skipped:
            out["skipped"] = True
        return out


@dataclass
class VerifyReport:
    scenario: str
    k: int
    checks: List[CheckRecord] = field(default_factory=list)
    results: Dict[str, Any] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return bool(self.checks) and all(check.passed for check in self.checks)

    def check(self, name: str) -> CheckRecord:
        for record in self.checks:
            if record.name == name:
                return record
        raise KeyError(name)

    def extend(self, records: Sequence[CheckRecord]) -> None:
        self.checks.extend(records)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "scenario": self.scenario,
            "k": self.k,
            "pass": self.passed,
            "checks": [check.to_dict() for check in self.checks],
            "results": self.results,
        }


# ---------- record helpers ----------


def rel_check(name: str, measured: float, target: float, tol: float, detail: str = "") -> CheckRecord:
    ok = math.isfinite(measured) and abs(measured - target) <= tol * abs(target)
    return CheckRecord(name, target, measured, tol, bool(ok), detail)


def abs_check(name: str, measured: float, target: float, tol: float, detail: str = "") -> CheckRecord:
    ok = math.isfinite(measured) and abs(measured - target) <= tol
    return CheckRecord(name, target, measured, tol, bool(ok), detail)


def upper_check(name: str, measured: float, bound: float, detail: str = "") -> CheckRecord:
    ok = math.isfinite(measured) and measured <= bound
    return CheckRecord(name, bound, measured, None, bool(ok), detail)


def lower_check(name: str, measured: float, bound: float, detail: str = "") -> CheckRecord:
    ok = math.isfinite(measured) and measured >= bound
    return CheckRecord(name, bound, measured, None, bool(ok), detail)


def failed_records(names: Sequence[str], exc: Exception) -> List[CheckRecord]:
    detail = f"{getattr(exc, 'kind', type(exc).__name__)}: {exc}"
    return [CheckRecord(name, None, None, None, False, detail) for name in names]


def skipped_records(names: Sequence[str], reason: str) -> List[CheckRecord]:
    return [CheckRecord(name, None, None, None, True, reason, skipped=True) for name in names]


# ---------- context ----------


@dataclass(eq=False)
class VerifyContext:
    k: int
    settings: ScenarioConfig
    results: Dict[str, Any] = field(default_factory=dict)
    # in-memory outputs (trajectories, tracks) for artifact writers; never serialized
    artifacts: Dict[str, Any] = field(default_factory=dict)

    @property
    def seed(self) -> int:
        return self.settings.seed

    @cached_property
    def ps(self) -> ProfileSet:
        grid = profile_grid(self.settings.get("profile_grid", "n"), self.settings.get("profile_grid", "r_max"))
        return build_profiles(self.k, grid)

    @cached_property
    def vp(self) -> VirialProfile:
        return make_virial_profile(self.settings.get("virial", "c"), self.settings.get("virial", "R"))


# ---------- groups ----------


CONSTANTS_CHECKS = (
    "constants.rho_k",
    "constants.gamma_k",
    "constants.q_k",
    "constants.lamq_norm",
    "constants.rho_identity",
    "constants.tilde_gamma",
)


def _constants(ctx: VerifyContext) -> List[CheckRecord]:
    k = ctx.k
    c = ctx.ps.constants
    rho_sq = rho_squared(k)
    rho = math.sqrt(rho_sq)
    rho_measured = math.sqrt(16.0 * k / c.lamQ_norm_sq)
    q_measured = ((k - 2) * rho_measured / 2.0) ** (-2.0 / (k - 2))
    return [
        rel_check("constants.rho_k", rho_measured, rho, 1e-4),
        rel_check("constants.gamma_k", c.gamma_solvability, 0.5 * k * rho_sq, 1e-4),
        rel_check("constants.q_k", q_measured, c.q_k, 1e-4),
        rel_check("constants.lamq_norm", c.lamQ_norm_sq, lamq_norm_sq_exact(k), 1e-5),
        rel_check("constants.rho_identity", 16.0 * k / c.lamQ_norm_sq, rho_sq, 1e-5),
        rel_check("constants.tilde_gamma", c.tilde_gamma_k, c.gamma_solvability, 1e-4),
    ]


PROFILE_CHECKS = (
    "profiles.residual_A",
    "profiles.residual_B",
    "profiles.residual_Btilde",
    "profiles.A_origin_slope",
    "profiles.A_tail_slope",
    "profiles.B_origin_slope",
    "profiles.B_tail_slope",
    "profiles.Btilde_origin_slope",
    "profiles.Btilde_tail_slope",
    "profiles.kernel",
    "profiles.coercivity_positive",
    "profiles.coercivity_refinement",
)


def _profiles(ctx: VerifyContext) -> List[CheckRecord]:
    ps = ctx.ps
    k = ctx.k
    records = [
        upper_check(
            f"profiles.residual_{name}",
            ps.residuals[name],
            1e-4,
            "" if ps.residuals[name] <= 1e-4 else "grid-too-coarse",
        )
        for name in ("A", "B", "Btilde")
    ]
    for name in ("A", "B", "Btilde"):
        profile = getattr(ps, name)
        records.append(abs_check(f"profiles.{name}_origin_slope", loglog_slope(profile, "origin"), float(k), 0.2))
        records.append(abs_check(f"profiles.{name}_tail_slope", loglog_slope(profile, "tail"), float(2 - k), 0.2))

    l_lamq = apply_operator(OperatorSample("L_about_U", k=k, U=ps.Q), ps.LamQ)
    kernel = norm_H(l_lamq, k) / norm_H(ps.LamQ, k)
    records.append(upper_check("profiles.kernel", kernel, 1e-3))

    c1 = ps.constants.c1_coercivity
    records.append(lower_check("profiles.coercivity_positive", c1, 0.0))
    coarse = coercivity_constant(k, profile_grid(ps.grid.n // 2, ps.grid.r_max))
    change = abs(c1 - coarse) / abs(c1) if c1 else math.inf
    records.append(upper_check("profiles.coercivity_refinement", change, 0.1))
    ctx.results["constants"] = ps.constants.to_dict()
    ctx.results["profile_residuals"] = dict(ps.residuals)
    return records


ENERGY_CHECKS = ("energy.bubble", "energy.two_bubble")


def _energy(ctx: VerifyContext) -> List[CheckRecord]:
    ps = ctx.ps
    k = ctx.k
    grid = ps.grid
    bubble_energy = energy(StatePair(ps.Q, RadialField(grid, np.zeros(grid.n))), k)
    pair = two_bubble(0.01, 1.0, grid, k)
    pair_energy = energy(StatePair(pair, RadialField(grid, np.zeros(grid.n))), k)
    return [
        rel_check("energy.bubble", bubble_energy, 4.0 * math.pi * k, 1e-5),
        rel_check("energy.two_bubble", pair_energy, 8.0 * math.pi * k, 1e-2),
    ]


ANSATZ_CHECKS = (
    "ansatz.bracket1_slope",
    "ansatz.bracket3_slope",
    "ansatz.cross_first_group",
    "ansatz.cross_third_group",
    "ansatz.bracket_forms",
    "ansatz.residual_identity",
    "ansatz.taylor_remainder",
)
# wide pair: at nu = 0.5 the plain first bracket is still far above round-off
FORMS_PARAMS = ModParams(mu=1.0, lam=0.5, a=0.05, b=0.08)
BRACKET_FORM_TOL = 1e-8
REMAINDER_FIELDS = 10


def _ansatz(ctx: VerifyContext) -> List[CheckRecord]:
    ps = ctx.ps
    k = ctx.k
    rows1, slope1 = bracket_scaling(ps, 1)
    rows3, slope3 = bracket_scaling(ps, 3, a=0.05, b=0.08)
    cross = cross_term_scaling(ps)
    params = ModParams(mu=1.0, lam=0.05, a=0.05, b=0.08)
    gaps = bracket_gaps(FORMS_PARAMS, ps)
    mod = modulation_terms(params, ps)
    gap = equation_residual(params, ps).values - static_residual(params, ps).values
    weights = ps.grid.weights
    identity = math.sqrt(float(np.dot(weights, gap * gap))) / math.sqrt(float(np.dot(weights, mod * mod)))

    rng = np.random.default_rng(ctx.seed)
    scales = 10.0 ** rng.uniform(-2.0, 0.5, REMAINDER_FIELDS)
    fields = battery_fields(ps.grid, k, scales, ctx.seed)
    constants = remainder_constants(phi(params, ps).u, fields, k)

    ctx.results["bracket1_scaling"] = rows1
    ctx.results["bracket3_scaling"] = rows3
    ctx.results["cross_term_slopes"] = cross
    ctx.results["bracket_gaps"] = list(gaps)
    ctx.results["remainder_constants"] = constants
    return [
        abs_check("ansatz.bracket1_slope", slope1, 2.0 * k, 0.5),
        abs_check("ansatz.bracket3_slope", slope3, k - 2.0, 0.5),
        abs_check("ansatz.cross_first_group", cross["LamQl2_LamQm"], float(k), 0.5),
        abs_check("ansatz.cross_third_group", cross["LamQm2_Al"], k - 2.0, 0.5),
        upper_check("ansatz.bracket_forms", max(gaps), BRACKET_FORM_TOL),
        upper_check("ansatz.residual_identity", identity, 1e-6),
        upper_check("ansatz.taylor_remainder", max(constants), math.sqrt(k)),
    ]


EVOLVER_CHECKS = ("evolver.energy_drift", "evolver.scattering_decay")


def _evolver(ctx: VerifyContext) -> List[CheckRecord]:
    result = scattering_check(ctx.k)
    ctx.results["scattering"] = result
    return [
        upper_check("evolver.energy_drift", result["energy_drift"], 1e-4),
        CheckRecord("evolver.scattering_decay", 1.0, float(result["monotone_decay"]), None, bool(result["monotone_decay"])),
    ]


VIRIAL_CHECKS = (
    "virial.bullets",
    "virial.antisymmetry",
    "virial.inner_identity",
    "virial.pohozaev",
    "virial.pohozaev_inner",
    "virial.localization_decreasing",
    "virial.transfer_gap",
    "virial.operator_bound",
)
OPERATOR_SCALES = (1e-2, 1e-1, 1.0, 10.0)


def _virial(ctx: VerifyContext) -> List[CheckRecord]:
    k = ctx.k
    vp = ctx.vp
    grid = ctx.ps.grid
    fields = battery_fields(grid, k, np.geomspace(0.1, 10.0, 10), ctx.seed)
    margins = bullet_margins(vp)
    lam = 1.0

    antisym = 0.0
    for w in fields:
        a0w = a0_matrix(lam, vp, grid) @ w.values
        pairing = abs(float(np.dot(grid.weights, a0w * w.values)))
        antisym = max(antisym, pairing / (norm_L2(RadialField(grid, a0w)) * norm_L2(w)))

    inside = grid.nodes <= 0.5 * vp.R * lam
    sample = fields[0].values
    l0 = (grid.lambda0_matrix @ sample) / lam
    a0 = a0_matrix(lam, vp, grid) @ sample
    inner_gap = float(np.max(np.abs(a0[inside] - l0[inside])) / np.max(np.abs(l0[inside])))

    truncated_lamq = RadialField(grid, np.where(grid.nodes < 50.0, lam_bubble(k, grid.nodes), 0.0))
    checks = [pohozaev_check(lam, vp, w, k) for w in fields + [truncated_lamq]]
    holds = sum(check.holds for check in checks) / len(checks)

    local = RadialField(grid, fields[0].values * (grid.nodes <= 0.25 * vp.R * lam))
    poh_inner = pohozaev_check(lam, vp, local, k)
    reference = lam0_pairing(lam, local, k)
    inner_rel = abs(poh_inner.lhs - reference) / max(abs(reference), 1e-300)

    errors = [lamq_localization_error(lam, make_virial_profile(vp.c, R), grid, k) for R in (5.0, 10.0, 20.0)]
    decreasing = max(errors[1] / errors[0], errors[2] / errors[1])

    transfer = max(virial_transfer_gap(lam, vp, w, k) for w in fields)
    ratio = max(operator_ratio(scale, vp, w, k) for scale in OPERATOR_SCALES for w in fields)
    sup_p1 = float(np.max(np.abs(vp.p1.values)))

    ctx.results["virial"] = {
        **vp.to_dict(),
        "bullet_margins": margins,
        "implied_c0": max(check.implied_c0 for check in checks),
        "localization_errors": errors,
    }
    return [
        lower_check("virial.bullets", min(margins.values()), 0.0),
        upper_check("virial.antisymmetry", antisym, 1e-8),
        upper_check("virial.inner_identity", inner_gap, 1e-10),
        abs_check("virial.pohozaev", holds, 1.0, 0.0),
        upper_check("virial.pohozaev_inner", inner_rel, 1e-8),
        upper_check("virial.localization_decreasing", decreasing, 1.0 - 1e-12),
        upper_check("virial.transfer_gap", transfer, 2.0 * vp.c),
        upper_check("virial.operator_bound", ratio, sup_p1),
    ]


MODULATION_CHECKS = (
    "modulation.exact_member_params",
    "modulation.exact_member_g",
    "modulation.b_on_family",
    "modulation.quadratic_ratio",
    "modulation.M11",
    "modulation.M22",
    "modulation.beta_gap_decreasing",
)
SIGMA_STAR = 0.02
BETA_SIGMAS = (0.05, 0.02, 0.01)


def orthogonal_perturbation(ps: ProfileSet, grid, mu: float, lam: float, scale: float) -> np.ndarray:
    """``x^k exp(-x^2)`` at ``scale`` with the two LamQ directions projected out, unit H norm."""
    k = ps.k
    r = grid.nodes
    x = r / scale
    with np.errstate(under="ignore"):
        p = x ** k * np.exp(-x * x)
    basis = np.stack([ps.sample("LamQ", r, mu, "L2"), ps.sample("LamQ", r, lam, "L2")])
    gram = (basis * grid.weights) @ basis.T
    coeffs = np.linalg.solve(gram, (basis * grid.weights) @ p)
    p = p - coeffs @ basis
    return p / norm_H(RadialField(grid, p), k)


def _modulation(ctx: VerifyContext) -> List[CheckRecord]:
    ps = ctx.ps
    vp = ctx.vp
    k = ctx.k
    grid = ps.grid
    norm_sq = ps.constants.lamQ_norm_sq
    sigma_star = SIGMA_STAR

    exact = reference_state(1.0, sigma_star, ps, grid)
    ext = extract(exact, ps, (1.3, 0.015))
    param_err = max(abs(ext.mu - 1.0), abs(ext.sigma - sigma_star) / sigma_star)
    g_size = norm_energy(ext.g, k)
    b_family = abs(b_functional(exact, ext.mu, ext.sigma, ext.g, ps, vp))

    p = orthogonal_perturbation(ps, grid, 1.0, sigma_star, 0.5)
    q = ps.sample("LamQ", grid.nodes, 1.0, "L2") + ps.sample("LamQ", grid.nodes, sigma_star, "L2")
    errors = []
    matrices = []
    for eps in (1e-3, 5e-4):
        u = exact.u.values + eps * p + eps * eps * q
        perturbed = StatePair.from_arrays(grid, u, exact.udot.values)
        pert = extract(perturbed, ps, (1.0, sigma_star))
        errors.append(max(abs(pert.mu - 1.0), abs(pert.sigma - sigma_star) / sigma_star))
        matrices.append(pert.M)
    ratio = errors[0] / errors[1] if errors[1] > 0 else math.inf
    M = matrices[0]

    gaps = []
    for sigma in BETA_SIGMAS:
        base = reference_state(1.0, sigma, ps, grid)
        x = grid.nodes / sigma
        with np.errstate(under="ignore"):
            shape = x ** k * np.exp(-x * x) * (1.0 + 0.3 * np.sin(np.log(x)))
        eps = 1e-6
        state = StatePair.from_arrays(grid, base.u.values + eps * shape, base.udot.values + eps * shape / sigma)
        gaps.append(beta_gap_ratio(extract(state, ps, (1.0, sigma)), state, ps, vp))
    worst = max(gaps[1] / gaps[0], gaps[2] / gaps[1])

    ctx.results["modulation"] = {
        "quadratic_errors": errors,
        "M": M.tolist(),
        "beta_gap_ratios": dict(zip((str(s) for s in BETA_SIGMAS), gaps)),
    }
    return [
        upper_check("modulation.exact_member_params", param_err, 1e-10),
        upper_check("modulation.exact_member_g", g_size, 1e-10),
        upper_check("modulation.b_on_family", b_family, 1e-6),
        abs_check("modulation.quadratic_ratio", ratio, 4.0, 1.0),
        abs_check("modulation.M11", M[0, 0] / norm_sq, 1.0, 0.1),
        abs_check("modulation.M22", M[1, 1] / norm_sq, -1.0, 0.1),
        upper_check("modulation.beta_gap_decreasing", worst, 1.0 - 1e-12),
    ]


REDUCED_ODE_CHECKS = (
    "reduced_ode.halving",
    "reduced_ode.b_asymptotic",
    "reduced_ode.a_asymptotic",
    "reduced_ode.mu_deficit_exponent",
    "reduced_ode.mu_consistency",
    "reduced_ode.first_integral",
)


def reduced_ode_study(constants, t0: float = 50.0, t1: float = 200.0, dt: float = 0.01) -> Tuple[Dict[str, float], Any]:
    """Reduced ODE started on the formal trajectory, with its asymptotic read-outs."""
    k = constants.k
    q = constants.q_k
    start = formal_trajectory(constants, t0)
    params0 = ModParams(mu=start["mu"], lam=start["lam"], a=start["a"], b=start["b"])
    traj = reduced_ode(params0, t0, t1, dt, constants)
    times = np.asarray(traj.times)
    at_t0 = traj.at(t0)
    at_2t0 = traj.at(2.0 * t0)
    at_t1 = traj.at(t1)
    b_exp = k / (k - 2.0)
    a_exp = (k + 2.0) / (k - 2.0)
    late = times >= 2.0 * t0
    mu = np.asarray(traj.mu)
    a = np.asarray(traj.a)
    mu_prime = np.gradient(mu, times)
    interior = slice(1, -1)
    consistency = float(np.max(np.abs(mu_prime[interior] - a[interior]) / np.abs(a[interior])))
    measures = {
        "halving": at_2t0["lam"] / at_t0["lam"],
        "halving_target": 0.5 ** (2.0 / (k - 2)),
        "b_scaled": at_t1["b"] * t1 ** b_exp,
        "b_target": 2.0 * q / (k - 2),
        "a_scaled": at_t1["a"] * t1 ** a_exp,
        "a_target": 2.0 * k * q * q / ((k - 2.0) * (k + 2)),
        "mu_deficit_exponent": fit_power(times[late], 1.0 - mu[late]),
        "mu_deficit_target": -4.0 / (k - 2),
        "mu_consistency": consistency,
        "first_integral": first_integral_deviation(traj, constants),
        "status": traj.status,
    }
    return measures, traj


def _reduced_ode(ctx: VerifyContext) -> List[CheckRecord]:
    section = ctx.settings.section("reduced_ode")
    m, traj = reduced_ode_study(ctx.ps.constants, section["t0"], section["t1"], section["dt"])
    ctx.results["reduced_ode"] = m
    ctx.artifacts["reduced_ode"] = traj
    return [
        rel_check("reduced_ode.halving", m["halving"], m["halving_target"], 1e-2),
        rel_check("reduced_ode.b_asymptotic", m["b_scaled"], m["b_target"], 1e-2),
        rel_check("reduced_ode.a_asymptotic", m["a_scaled"], m["a_target"], 2e-2),
        rel_check("reduced_ode.mu_deficit_exponent", m["mu_deficit_exponent"], m["mu_deficit_target"], 5e-2),
        upper_check("reduced_ode.mu_consistency", m["mu_consistency"], 1e-6),
        upper_check("reduced_ode.first_integral", m["first_integral"], 2e-2),
    ]


PDE_CHECKS = (
    "pde.lambda_agreement",
    "pde.lambda_exponent",
    "pde.energy_drift",
    "pde.orthogonality",
    "bmonitor.fraction",
    "bmonitor.c0",
)
ORTHO_MIN_G = 1e-5


def concentration_from_settings(ctx: VerifyContext, keep_states: bool = False, track: bool = True):
    ev = ctx.settings.section("evolve")
    params0 = None
    if not ev["formal"]:
        params0 = ModParams(mu=ev["mu0"], lam=ev["lam0"], a=ev["a0"], b=ev["b0"])
    return concentration_run(
        ctx.ps,
        ctx.vp,
        lam0=ev["lam0"],
        decades=ev["decades"],
        n=ev["n"] or None,
        r_max=ev["r_max"],
        cfl=ev["cfl"],
        record_dt=ev["record_dt"],
        keep_states=keep_states,
        params0=params0,
        t_end=ev["tend"] or None,
        dt=ev["dt"] or None,
        track=track,
    )


def pde_records(
    ctx: VerifyContext,
    track,
    params0: ModParams,
    t0: float,
    energy_drift: float,
    status: str,
) -> List[CheckRecord]:
    ps = ctx.ps
    c0 = ctx.settings.get("modulate", "c0")
    agreement = pde_ode_agreement(track, params0, t0, ps.constants)
    report = monitor_b(track, ps, c0)
    norm_lamq = math.sqrt(ps.constants.lamQ_norm_sq)
    # below |g| ~ 1e-5 the relative bound sits under the quadrature round-off
    ortho = max(
        (
            max(abs(o1), abs(o2)) / (norm_lamq * g)
            for (o1, o2), g in zip(track.ortho_residuals, track.g_energy_norm)
            if g >= ORTHO_MIN_G
        ),
        default=0.0,
    )
    ctx.results["pde"] = {
        **agreement,
        "status": status,
        "samples": len(track),
        "rates": rate_diagnostics(track, ps),
        "bmonitor": report.to_dict(),
    }
    return [
        upper_check("pde.lambda_agreement", agreement["max_rel_deviation"], 0.1),
        abs_check("pde.lambda_exponent", agreement["fitted_exponent"], agreement["expected_exponent"], 0.05),
        upper_check("pde.energy_drift", energy_drift, 1e-4),
        upper_check("pde.orthogonality", ortho, 1e-8),
        lower_check("bmonitor.fraction", report.fraction_satisfied, 0.9),
        upper_check("bmonitor.c0", report.measured_c0, c0),
    ]


def _pde(ctx: VerifyContext) -> List[CheckRecord]:
    run = concentration_from_settings(ctx)
    traj = run.trajectory
    return pde_records(ctx, run.track, run.params0, run.t0, traj.energy_drift, traj.status)


GROUPS: Tuple[Tuple[str, Sequence[str], Callable[[VerifyContext], List[CheckRecord]]], ...] = (
    ("constants", CONSTANTS_CHECKS, _constants),
    ("profiles", PROFILE_CHECKS, _profiles),
    ("energy", ENERGY_CHECKS, _energy),
    ("ansatz", ANSATZ_CHECKS, _ansatz),
    ("evolver", EVOLVER_CHECKS, _evolver),
    ("virial", VIRIAL_CHECKS, _virial),
    ("modulation", MODULATION_CHECKS, _modulation),
    ("reduced_ode", REDUCED_ODE_CHECKS, _reduced_ode),
    ("pde", PDE_CHECKS, _pde),
)
CHECK_NAMES = tuple(name for _, names, _ in GROUPS for name in names)


def _run_group(ctx: VerifyContext, group: str, names: Sequence[str], fn) -> List[CheckRecord]:
    started = time.perf_counter()
    try:
        records = fn(ctx)
    except LabError as exc:
        logger.warning("Grupo %s falhou (%s): %s", group, exc.kind, exc)
        return failed_records(names, exc)
    except Exception as exc:
        logger.exception("Erro inesperado no grupo %s: %s", group, exc)
        return failed_records(names, exc)
    produced = [record.name for record in records]
    if produced != list(names):
        raise RuntimeError(f"group {group} produced {produced}, expected {list(names)}")
    failed = [record.name for record in records if not record.passed]
    logger.info(
        "Grupo %s: %s/%s verificações ok (%.1fs)",
        group,
        len(records) - len(failed),
        len(records),
        time.perf_counter() - started,
    )
    for name in failed:
        logger.warning("Verificação falhou: %s", name)
    return records


def run_groups(ctx: VerifyContext, group_names: Sequence[str], scenario: str) -> VerifyReport:
    """Run the named groups against ``ctx``; unknown names raise ``KeyError``."""
    by_name = {group[0]: group for group in GROUPS}
    groups = [by_name[name] for name in group_names]
    report = VerifyReport(scenario=scenario, k=ctx.k)
    workers = max(1, int(ctx.settings.get("verify", "workers")))
    try:
        ctx.ps
    except LabError as exc:
        logger.warning("Perfis não construídos (%s): %s", exc.kind, exc)
        for _, names, _ in groups:
            report.extend(failed_records(names, exc))
        report.results = ctx.results
        return report

    # built once before any fan-out; a failure here is reported per group
    try:
        ctx.vp
    except LabError:
        pass
    if workers > 1 and len(groups) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_run_group, ctx, *group) for group in groups]
            outputs = [future.result() for future in futures]
    else:
        outputs = [_run_group(ctx, *group) for group in groups]
    for records in outputs:
        report.extend(records)
    report.results = ctx.results
    return report


def verify_all(k: int, settings: Optional[ScenarioConfig] = None) -> VerifyReport:
    k = require_k(k, module=MODULE)
    settings = settings or load_scenario(overrides={"run": {"k": k}})
    ctx = VerifyContext(k=k, settings=settings)
    include_pde = settings.get("verify", "include_pde")
    names = [group[0] for group in GROUPS if include_pde or group[0] != "pde"]
    report = run_groups(ctx, names, "verify_all")
    if not include_pde:
        report.extend(skipped_records(PDE_CHECKS, "skipped (include_pde=false)"))
    logger.info("Verificação k=%s: %s", k, "ok" if report.passed else "FALHOU")
    return report
