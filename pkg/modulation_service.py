"""Modulation about the slaved two-bubble family, the b functional and the
reduced modulation ODE.

The reference family is ``Phi_ref(mu, sigma) = phi(mu * mu_hat(sigma), mu * sigma,
a_hat(sigma), b_hat(sigma))`` with the leading refined asymptotics as
slaving laws. ``g = u - Phi_ref(mu, sigma)`` is fixed by the two
orthogonality conditions against ``LamQ_mu_`` and ``LamQ_(mu sigma)_``.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from ansatz_service import ModParams, modulation_terms, phi, static_residual
from evolution_service import (
    DEFAULT_ANSATZ_RMAX,
    DEFAULT_CFL,
    POINTS_PER_SCALE,
    EvolveConfig,
    Trajectory,
    ansatz_grid,
    evolve_ansatz,
)
from lab_errors import (
    ExtractionFailed,
    InsufficientData,
    InvalidArgument,
    InvalidRegime,
    NumericalFailure,
)
from profile_service import Constants, ProfileSet
from radial_core import (
    RadialField,
    RadialGrid,
    StatePair,
    fit_power,
    norm_energy,
    norm_H,
    norm_L2,
)
from virial_service import VirialProfile, a0_matrix

MODULE = "modulation"
NEWTON_TOL = 1e-10
NEWTON_MAX_ITER = 50
FD_STEP = 1e-6
SLAVING_FLAG = 0.1
MIN_MONITOR_SAMPLES = 10

logger = logging.getLogger(__name__)


# ---------- formal trajectory and slaving laws ----------


def formal_trajectory(constants: Constants, t: float) -> Dict[str, float]:
    """Leading terms of lam_c, mu_c, b_c, a_c at time t."""
    k = constants.k
    q = constants.q_k
    if not t > 0:
        raise InvalidArgument("t must be positive", module=MODULE)
    lam = q * t ** (-2.0 / (k - 2))
    return {
        "t": t,
        "lam": lam,
        "mu": 1.0 - k / (2.0 * (k + 2)) * q * q * t ** (-4.0 / (k - 2)),
        "b": 2.0 / (k - 2) * q * t ** (-k / (k - 2.0)),
        "a": 2.0 * k / ((k - 2.0) * (k + 2)) * q * q * t ** (-(k + 2.0) / (k - 2)),
    }


def formal_time(constants: Constants, lam: float) -> float:
    """Inverse of ``lam_c(t) = q_k t^(-2/(k-2))``."""
    return (lam / constants.q_k) ** (-(constants.k - 2) / 2.0)


def slaved(constants: Constants, sigma: float) -> Tuple[float, float, float]:
    """``(mu_hat, a_hat, b_hat)`` as functions of the scale ratio."""
    k = constants.k
    rho = constants.rho_k
    mu_hat = 1.0 - k / (2.0 * (k + 2)) * sigma * sigma
    a_hat = k * rho / (k + 2.0) * sigma ** ((k + 2) / 2.0)
    b_hat = rho * sigma ** (k / 2.0)
    if (sigma / constants.q_k) ** 2 > SLAVING_FLAG:
        logger.warning(
            "Correções sub-dominantes acima de 10%% (sigma=%.4g, (sigma/q)^2=%.3f)",
            sigma,
            (sigma / constants.q_k) ** 2,
        )
    return mu_hat, a_hat, b_hat


def formal_params(constants: Constants, lam: float) -> ModParams:
    t = formal_time(constants, lam)
    values = formal_trajectory(constants, t)
    return ModParams(mu=values["mu"], lam=lam, a=values["a"], b=values["b"])


def reference_params(mu: float, sigma: float, constants: Constants) -> ModParams:
    if not (mu > 0 and sigma > 0):
        raise InvalidRegime("mu and sigma must be positive", module=MODULE)
    mu_hat, a_hat, b_hat = slaved(constants, sigma)
    return ModParams(mu=mu * mu_hat, lam=mu * sigma, a=a_hat, b=b_hat)


def reference_state(mu: float, sigma: float, ps: ProfileSet, grid: Optional[RadialGrid] = None) -> StatePair:
    return phi(reference_params(mu, sigma, ps.constants), ps, grid)


# ---------- extraction ----------


def _lamq_l2(ps: ProfileSet, r: np.ndarray, scale: float) -> np.ndarray:
    return ps.sample("LamQ", r, scale, "L2")


def _orthogonality(u: np.ndarray, mu: float, sigma: float, ps: ProfileSet, grid: RadialGrid) -> np.ndarray:
    diff = u - reference_state(mu, sigma, ps, grid).u.values
    w = grid.weights
    r = grid.nodes
    return np.array(
        [
            float(np.dot(w, _lamq_l2(ps, r, mu) * diff)),
            float(np.dot(w, _lamq_l2(ps, r, mu * sigma) * diff)),
        ]
    )


@dataclass(frozen=True, eq=False)
class Extraction:
    mu: float
    sigma: float
    g: StatePair
    M: np.ndarray
    ortho: Tuple[float, float]
    iterations: int

    @property
    def lam(self) -> float:
        return self.mu * self.sigma


def _fd_jacobian(u, mu, sigma, ps, grid) -> np.ndarray:
    jac = np.empty((2, 2))
    hm = FD_STEP * mu
    hs = FD_STEP * sigma
    jac[:, 0] = (_orthogonality(u, mu + hm, sigma, ps, grid) - _orthogonality(u, mu - hm, sigma, ps, grid)) / (2 * hm)
    jac[:, 1] = (_orthogonality(u, mu, sigma + hs, ps, grid) - _orthogonality(u, mu, sigma - hs, ps, grid)) / (2 * hs)
    return jac


def modulation_matrix(mu: float, sigma: float, g: StatePair, ps: ProfileSet) -> np.ndarray:
    grid = g.grid
    r = grid.nodes
    w = grid.weights
    lam = mu * sigma
    hm = 1e-5 * mu
    hs = 1e-5 * sigma
    d_mu = (reference_state(mu + hm, sigma, ps, grid).u.values - reference_state(mu - hm, sigma, ps, grid).u.values) / (2 * hm)
    d_sigma = (reference_state(mu, sigma + hs, ps, grid).u.values - reference_state(mu, sigma - hs, ps, grid).u.values) / (2 * hs)
    q_mu = _lamq_l2(ps, r, mu)
    q_lam = _lamq_l2(ps, r, lam)
    l0_mu = ps.sample("Lam0LamQ", r, mu, "L2")
    l0_lam = ps.sample("Lam0LamQ", r, lam, "L2")
    gv = g.u.values

    def pair(x, y):
        return float(np.dot(w, x * y))

    return np.array(
        [
            [pair(q_mu, d_mu) + pair(l0_mu, gv) / mu, pair(q_mu, d_sigma) / mu],
            [pair(q_lam, d_mu) + pair(l0_lam, gv) / mu, pair(q_lam, d_sigma) / mu + pair(l0_lam, gv) / lam],
        ]
    )


def extract(s: StatePair, ps: ProfileSet, guess: Tuple[float, float]) -> Extraction:
    """Newton iteration on the two orthogonality conditions."""
    grid = s.grid
    mu, sigma = float(guess[0]), float(guess[1])
    if not (mu > 0 and 0 < sigma < 0.1):
        raise InvalidRegime(f"palpite fora do regime: mu={mu:.4g} sigma={sigma:.4g}", module=MODULE)
    u = s.u.values
    norm_lamq = math.sqrt(ps.constants.lamQ_norm_sq)

    f = _orthogonality(u, mu, sigma, ps, grid)
    for iteration in range(1, NEWTON_MAX_ITER + 1):
        jac = _fd_jacobian(u, mu, sigma, ps, grid)
        try:
            step = np.linalg.solve(jac, -f)
        except np.linalg.LinAlgError as exc:
            raise ExtractionFailed(f"singular modulation Jacobian: {exc}", module=MODULE) from exc
        damping = 1.0
        while mu + damping * step[0] <= 0 or sigma + damping * step[1] <= 0:
            damping *= 0.5
            if damping < 1e-6:
                raise ExtractionFailed("Newton step leaves the positive quadrant", module=MODULE)
        mu += damping * step[0]
        sigma += damping * step[1]
        f = _orthogonality(u, mu, sigma, ps, grid)
        ref = reference_state(mu, sigma, ps, grid)
        g = s - ref
        g_size = norm_energy(g, ps.k)
        tol = max(1e-14, min(NEWTON_TOL, 1e-8 * norm_lamq * g_size))
        if float(np.max(np.abs(f))) < tol:
            break
        # round-off floor of the quadrature
        if abs(damping * step[0]) <= 1e-13 * mu and abs(damping * step[1]) <= 1e-13 * sigma:
            break
    else:
        raise ExtractionFailed(
            f"Newton sem convergência em {NEWTON_MAX_ITER} iterações (|F|={np.max(np.abs(f)):.3e})",
            module=MODULE,
        )
    M = modulation_matrix(mu, sigma, g, ps)
    logger.debug("Extração: mu=%.10f sigma=%.10f |g|=%.3e (%s iterações)", mu, sigma, g_size, iteration)
    return Extraction(mu=mu, sigma=sigma, g=g, M=M, ortho=(float(f[0]), float(f[1])), iterations=iteration)


def slaved_readoff(s: StatePair, mu: float, sigma: float, ps: ProfileSet) -> Tuple[float, float]:
    """``(a, b)`` read off the velocity: ``<LamQ_mu_|udot>`` and ``<LamQ_(mu sigma)_|udot>`` over ``||LamQ||^2``."""
    grid = s.grid
    r = grid.nodes
    w = grid.weights
    v = s.udot.values
    norm_sq = ps.constants.lamQ_norm_sq
    a = float(np.dot(w, _lamq_l2(ps, r, mu) * v)) / norm_sq
    b = float(np.dot(w, _lamq_l2(ps, r, mu * sigma) * v)) / norm_sq
    return a, b


# ---------- energy functionals along g ----------


def energy_gradient_pairing(mu: float, sigma: float, g: StatePair, ps: ProfileSet) -> float:
    """``<DE(Phi_ref)|g> = <-Lap U + f(U)/r^2 | g> + <Udot|gdot>``.

    The position part comes from the residual identity (modulation terms plus
    ``r^-2`` times the brackets), free of the Laplacian's discretization error.
    """
    grid = g.grid
    params = reference_params(mu, sigma, ps.constants)
    force = modulation_terms(params, ps, grid) + static_residual(params, ps, grid).values
    U = phi(params, ps, grid)
    position = float(np.dot(grid.weights, force * g.u.values))
    kinetic = float(np.dot(grid.weights, U.udot.values * g.udot.values))
    return position + kinetic


def second_variation(U: RadialField, g: StatePair, k: int) -> float:
    """``int (gdot^2 + g_r^2 + k^2 cos(2U) g^2/r^2) r dr``."""
    grid = g.grid
    gv = g.u.values
    gradient = float(gv @ (grid.gradient_form(k) @ gv))
    angular = k * k * float(np.dot(grid.weights * grid.inv_r2, np.cos(2.0 * U.values) * gv * gv))
    kinetic = float(np.dot(grid.weights, g.udot.values ** 2))
    return gradient + angular + kinetic


def b_functional(
    s: StatePair,
    mu: float,
    sigma: float,
    g: StatePair,
    ps: ProfileSet,
    vp: VirialProfile,
) -> float:
    """``(rho sigma^(k/2))^-1 <DE(Phi_ref)|g> + <A0(mu sigma) g | gdot>``."""
    if not sigma > 0:
        raise InvalidArgument("sigma must be positive", module=MODULE)
    return _b_from_pairing(energy_gradient_pairing(mu, sigma, g, ps), mu, sigma, g, ps, vp)


def virial_correction(lam: float, g: StatePair, vp: VirialProfile) -> float:
    """``<A0(lam) g | gdot>``."""
    grid = g.grid
    a0g = a0_matrix(lam, vp, grid) @ g.u.values
    return float(np.dot(grid.weights, a0g * g.udot.values))


def _b_from_pairing(pairing: float, mu: float, sigma: float, g: StatePair, ps: ProfileSet, vp: VirialProfile) -> float:
    scale = ps.constants.rho_k * sigma ** (ps.k / 2.0)
    return pairing / scale + virial_correction(mu * sigma, g, vp)


# ---------- tracking ----------


@dataclass
class ModTrack:
    k: int
    times: List[float] = field(default_factory=list)
    mu: List[float] = field(default_factory=list)
    sigma: List[float] = field(default_factory=list)
    a: List[float] = field(default_factory=list)
    b_slaved: List[float] = field(default_factory=list)
    g_Hnorm: List[float] = field(default_factory=list)
    gdot_L2norm: List[float] = field(default_factory=list)
    b_func: List[float] = field(default_factory=list)
    ortho_residuals: List[Tuple[float, float]] = field(default_factory=list)
    lamq_gdot: List[float] = field(default_factory=list)
    de_pairing: List[float] = field(default_factory=list)
    second_var: List[float] = field(default_factory=list)
    M: List[np.ndarray] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.times)

    @property
    def g_energy_norm(self) -> np.ndarray:
        return np.hypot(self.g_Hnorm, self.gdot_L2norm)

    def rows(self) -> List[dict]:
        return [
            {
                "t": self.times[i],
                "mu": self.mu[i],
                "sigma": self.sigma[i],
                "a": self.a[i],
                "b_slaved": self.b_slaved[i],
                "gH": self.g_Hnorm[i],
                "gdotL2": self.gdot_L2norm[i],
                "b_func": self.b_func[i],
                "ortho1": self.ortho_residuals[i][0],
                "ortho2": self.ortho_residuals[i][1],
            }
            for i in range(len(self.times))
        ]


class ModulationTracker:
    """Warm-started extraction along a trajectory; usable as an evolver observer."""

    def __init__(self, ps: ProfileSet, vp: VirialProfile, guess: Tuple[float, float], t_offset: float = 0.0):
        self.ps = ps
        self.vp = vp
        self.guess = guess
        self.t_offset = t_offset
        self.track = ModTrack(k=ps.k)

    def __call__(self, t: float, state: StatePair) -> None:
        self.observe(t, state)

    def observe(self, t: float, state: StatePair) -> Extraction:
        ps = self.ps
        k = ps.k
        ext = extract(state, ps, self.guess)
        self.guess = (ext.mu, ext.sigma)
        a_read, b_read = slaved_readoff(state, ext.mu, ext.sigma, ps)
        U = reference_state(ext.mu, ext.sigma, ps, state.grid)
        r = state.grid.nodes
        lamq_gdot = float(np.dot(state.grid.weights, _lamq_l2(ps, r, ext.lam) * ext.g.udot.values))
        pairing = energy_gradient_pairing(ext.mu, ext.sigma, ext.g, ps)

        tr = self.track
        tr.times.append(self.t_offset + t)
        tr.mu.append(ext.mu)
        tr.sigma.append(ext.sigma)
        tr.a.append(a_read)
        tr.b_slaved.append(b_read)
        tr.g_Hnorm.append(norm_H(ext.g.u, k))
        tr.gdot_L2norm.append(norm_L2(ext.g.udot))
        tr.b_func.append(_b_from_pairing(pairing, ext.mu, ext.sigma, ext.g, ps, self.vp))
        tr.ortho_residuals.append(ext.ortho)
        tr.lamq_gdot.append(lamq_gdot)
        tr.de_pairing.append(pairing)
        tr.second_var.append(second_variation(U.u, ext.g, k))
        tr.M.append(ext.M)
        logger.info(
            "t=%.4f mu=%.6f sigma=%.6e |g|=%.3e b=%.4e",
            tr.times[-1],
            ext.mu,
            ext.sigma,
            math.hypot(tr.g_Hnorm[-1], tr.gdot_L2norm[-1]),
            tr.b_func[-1],
        )
        return ext


def track_states(
    samples: Sequence[Tuple[float, StatePair]],
    ps: ProfileSet,
    vp: VirialProfile,
    guess: Tuple[float, float],
    t_offset: float = 0.0,
) -> ModTrack:
    tracker = ModulationTracker(ps, vp, guess, t_offset)
    for t, state in samples:
        tracker.observe(t, state)
    return tracker.track


# ---------- reduced ODE ----------


@dataclass
class ParameterTrajectory:
    times: List[float] = field(default_factory=list)
    lam: List[float] = field(default_factory=list)
    mu: List[float] = field(default_factory=list)
    a: List[float] = field(default_factory=list)
    b: List[float] = field(default_factory=list)
    status: str = "completed"

    def at(self, t: float) -> Dict[str, float]:
        times = np.asarray(self.times)
        return {
            name: float(np.interp(t, times, getattr(self, name)))
            for name in ("lam", "mu", "a", "b")
        }

    def rows(self) -> List[dict]:
        return [
            {"t": t, "lam": l, "mu": m, "a": a, "b": b}
            for t, l, m, a, b in zip(self.times, self.lam, self.mu, self.a, self.b)
        ]


def _reduced_field(y: np.ndarray, gamma: float, k: int) -> np.ndarray:
    lam, mu, b, a = y
    return np.array(
        [
            -b,
            a,
            -gamma * lam ** (k - 1) / mu ** k,
            -gamma * lam ** k / mu ** (k + 1),
        ]
    )


def reduced_ode(params0: ModParams, t0: float, t1: float, dt: float, constants: Constants, record_every: int = 1) -> ParameterTrajectory:
    """RK4 for ``lam' = -b, mu' = a, b' = -gamma lam^(k-1)/mu^k, a' = -gamma lam^k/mu^(k+1)``."""
    if not t0 > 0:
        raise InvalidArgument("t0 must be positive", module=MODULE)
    if not (t1 > t0 and dt > 0):
        raise InvalidArgument("need t1 > t0 and dt > 0", module=MODULE)
    k = constants.k
    gamma = constants.gamma_k
    y = np.array([params0.lam, params0.mu, params0.b, params0.a], dtype=float)
    n_steps = int(math.ceil((t1 - t0) / dt - 1e-9))
    h = (t1 - t0) / n_steps
    out = ParameterTrajectory()

    def push(t, state):
        out.times.append(t)
        out.lam.append(float(state[0]))
        out.mu.append(float(state[1]))
        out.b.append(float(state[2]))
        out.a.append(float(state[3]))

    push(t0, y)
    for step in range(1, n_steps + 1):
        k1 = _reduced_field(y, gamma, k)
        k2 = _reduced_field(y + 0.5 * h * k1, gamma, k)
        k3 = _reduced_field(y + 0.5 * h * k2, gamma, k)
        k4 = _reduced_field(y + h * k3, gamma, k)
        y = y + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(y)):
            raise NumericalFailure("reduced ODE produced non-finite values", module=MODULE)
        t = t0 + step * h
        if y[0] <= 0.0:
            push(t, y)
            out.status = "concentration-complete"
            logger.info("EDO reduzida: lambda <= 0 em t=%.6f", t)
            break
        if y[1] <= 0.0:
            raise NumericalFailure("outer scale reached zero", module=MODULE)
        if step % record_every == 0 or step == n_steps:
            push(t, y)
    return out


def first_integral_deviation(traj: ParameterTrajectory, constants: Constants) -> float:
    """``max |b - rho lam^(k/2) mu^(-k/2)| / b`` along the run."""
    k = constants.k
    lam = np.asarray(traj.lam)
    mu = np.asarray(traj.mu)
    b = np.asarray(traj.b)
    surrogate = constants.rho_k * lam ** (k / 2.0) * mu ** (-k / 2.0)
    return float(np.max(np.abs(b - surrogate) / np.abs(b)))


# ---------- monitoring ----------


@dataclass(frozen=True)
class BMonitorReport:
    fraction_satisfied: float
    measured_c0: float
    measured_c1: float
    samples: int
    energy_expansion_violations: int

    def to_dict(self) -> Dict[str, float]:
        return {
            "fraction_satisfied": self.fraction_satisfied,
            "measured_c0": self.measured_c0,
            "measured_c1": self.measured_c1,
            "samples": self.samples,
            "energy_expansion_violations": self.energy_expansion_violations,
        }


def energy_expansion(track: ModTrack, c1: float) -> np.ndarray:
    """``<DE(U_ref)|g> + c1 ||g||^2 / 2`` per step; the expansion asks for <= 0."""
    return np.asarray(track.de_pairing) + 0.5 * c1 * track.g_energy_norm ** 2


def monitor_b(track: ModTrack, ps: ProfileSet, c0: float = 0.5) -> BMonitorReport:
    n = len(track)
    if n < MIN_MONITOR_SAMPLES:
        raise InsufficientData(f"trajetória com {n} amostras (mínimo {MIN_MONITOR_SAMPLES})", module=MODULE)
    k = ps.k
    rho = ps.constants.rho_k
    t = np.asarray(track.times)
    b = np.asarray(track.b_func)
    mu = np.asarray(track.mu)
    sigma = np.asarray(track.sigma)
    g_sq = track.g_energy_norm ** 2
    b_prime = np.gradient(b, t)
    leading = k * rho / (2.0 * mu * sigma) * sigma ** (k / 2.0) * b
    slack = (np.abs(b) * sigma ** (k / 2.0) + g_sq) / (mu * sigma)
    excess = b_prime - leading
    required = np.where(slack > 0, np.maximum(excess, 0.0) / np.where(slack > 0, slack, 1.0), 0.0)
    satisfied = excess <= c0 * slack + 1e-14 * np.maximum(1.0, np.abs(leading))
    fraction = float(np.mean(satisfied))
    measured_c0 = float(np.percentile(required, 90))

    g_sq_safe = np.where(g_sq > 0, g_sq, np.nan)
    ratios = np.asarray(track.second_var) / g_sq_safe
    measured_c1 = float(np.nanmin(ratios)) if np.any(np.isfinite(ratios)) else 0.0
    c1_ref = ps.constants.c1_coercivity if ps.constants.c1_coercivity is not None else max(measured_c1, 0.0)
    violations = int(np.count_nonzero(energy_expansion(track, c1_ref) > 1e-12))
    if violations:
        logger.warning("Expansão de energia violada em %s de %s passos", violations, n)
    logger.info(
        "Monitor b': fração=%.3f c0 medido=%.4f c1 medido=%.4f",
        fraction,
        measured_c0,
        measured_c1,
    )
    return BMonitorReport(
        fraction_satisfied=fraction,
        measured_c0=measured_c0,
        measured_c1=measured_c1,
        samples=n,
        energy_expansion_violations=violations,
    )


def rate_diagnostics(track: ModTrack, ps: ProfileSet) -> Dict[str, float]:
    """Finite-difference modulation rates against their surrogate bounds."""
    if len(track) < 3:
        raise InsufficientData("rate diagnostics need at least 3 samples", module=MODULE)
    k = ps.k
    t = np.asarray(track.times)
    mu = np.asarray(track.mu)
    sigma = np.asarray(track.sigma)
    g_total = track.g_energy_norm
    gh = np.asarray(track.g_Hnorm)
    gdot = np.asarray(track.gdot_L2norm)
    mu_prime = np.gradient(mu, t)
    sigma_prime = np.gradient(sigma, t)
    sig_rate = np.abs(
        mu * sigma_prime
        + ps.constants.rho_k * sigma ** (k / 2.0)
        + np.asarray(track.lamq_gdot) / ps.constants.lamQ_norm_sq
    )
    with np.errstate(divide="ignore", invalid="ignore"):
        mu_ratio = np.where(g_total > 0, np.abs(mu_prime) / g_total, 0.0)
        sig_ratio = np.where(gdot + gh > 0, sig_rate / (gdot + sigma ** (k / 2.0) * gh), 0.0)
    return {
        "max_mu_rate_ratio": float(np.nanmax(mu_ratio)),
        "max_sigma_rate_ratio": float(np.nanmax(sig_ratio)),
        "max_mu_prime": float(np.max(np.abs(mu_prime))),
        "max_sigma_rate": float(np.max(sig_rate)),
    }


def pde_ode_agreement(track: ModTrack, params0: ModParams, t0: float, constants: Constants, dt: float = 1e-2) -> Dict[str, float]:
    """Extracted ``lam = mu sigma`` against the reduced ODE started from ``params0`` at modelled time ``t0``."""
    times = np.asarray(track.times)
    if times.size < 3:
        raise InsufficientData("agreement needs at least 3 samples", module=MODULE)
    t_model = t0 + times - times[0]
    ode = reduced_ode(params0, t0, float(t_model[-1]) + dt, dt, constants)
    lam_pde = np.asarray(track.mu) * np.asarray(track.sigma)
    lam_ode = np.interp(t_model, ode.times, ode.lam)
    deviation = float(np.max(np.abs(lam_pde - lam_ode) / lam_ode))
    exponent = fit_power(t_model, lam_pde)
    expected = -2.0 / (constants.k - 2)
    logger.info("EDP vs EDO: desvio máximo %.3f, expoente %.4f (esperado %.4f)", deviation, exponent, expected)
    return {"max_rel_deviation": deviation, "fitted_exponent": exponent, "expected_exponent": expected}


def beta_gap_ratio(ext: Extraction, s: StatePair, ps: ProfileSet, vp: VirialProfile) -> float:
    """``|b - <LamQ_(sigma mu)_|gdot>| / ||g||_H-energy``."""
    b = b_functional(s, ext.mu, ext.sigma, ext.g, ps, vp)
    r = s.grid.nodes
    pairing = float(np.dot(s.grid.weights, _lamq_l2(ps, r, ext.lam) * ext.g.udot.values))
    size = norm_energy(ext.g, ps.k)
    return abs(b - pairing) / size if size > 0 else 0.0


# ---------- concentration runs ----------


@dataclass(eq=False)
class ConcentrationRun:
    params0: ModParams
    t0: float
    trajectory: Trajectory
    track: Optional[ModTrack]

    @property
    def grid(self) -> RadialGrid:
        return self.trajectory.states[0].grid


def matched_grid_size(constants: Constants, lam0: float, decades: float, r_max: float = DEFAULT_ANSATZ_RMAX) -> int:
    """Smallest power of two with ``POINTS_PER_SCALE`` nodes across the final formal ``lam``."""
    t0 = formal_time(constants, lam0)
    lam_end = formal_trajectory(constants, t0 * 10.0 ** decades)["lam"]
    needed = POINTS_PER_SCALE * r_max / lam_end
    return int(2 ** math.ceil(math.log2(needed)))


def concentration_run(
    ps: ProfileSet,
    vp: VirialProfile,
    lam0: float = 0.05,
    decades: float = 0.1,
    n: Optional[int] = None,
    r_max: float = DEFAULT_ANSATZ_RMAX,
    cfl: float = DEFAULT_CFL,
    record_dt: float = 0.1,
    keep_states: bool = False,
    params0: Optional[ModParams] = None,
    t_end: Optional[float] = None,
    dt: Optional[float] = None,
    track: bool = True,
) -> ConcentrationRun:
    """Evolve the ansatz from the formal trajectory at ``lam0`` over ``decades`` of modelled time, tracking modulation.

    ``params0`` replaces the formal start (its ``lam`` must equal ``lam0``); ``t_end`` and ``dt``
    override the duration derived from ``decades`` and the CFL step. With ``track=False`` no
    extraction runs along the way.
    """
    constants = ps.constants
    if not 0 < lam0 < 0.1:
        raise InvalidArgument("lam0 must lie in (0, 0.1)", module=MODULE)
    if not decades > 0:
        raise InvalidArgument("decades must be positive", module=MODULE)
    if params0 is not None and params0.lam != lam0:
        raise InvalidArgument("params0.lam must equal lam0", module=MODULE)
    t0 = formal_time(constants, lam0)
    if params0 is None:
        params0 = formal_params(constants, lam0)
        guess = (1.0, lam0)
    else:
        guess = (params0.mu, lam0 / params0.mu)
    n = n or matched_grid_size(constants, lam0, decades, r_max)
    grid = ansatz_grid(n, r_max)
    cfg = EvolveConfig(
        t_end=t_end or t0 * (10.0 ** decades - 1.0),
        dt=dt or None,
        cfl=cfl,
        outer_bc="dirichlet_frozen",
        keep_states=keep_states,
    )
    step = cfg.step_for(grid, ps.k)
    cfg = replace(cfg, record_every=max(1, int(round(record_dt / step))))
    tracker = ModulationTracker(ps, vp, guess, t_offset=t0)
    logger.info("Corrida de concentração k=%s: lam0=%.4g t0=%.4f t_end=%.4f n=%s", ps.k, lam0, t0, t0 + cfg.t_end, n)
    traj = evolve_ansatz(params0, ps, cfg, grid, observer=tracker if track else None)
    return ConcentrationRun(params0=params0, t0=t0, trajectory=traj, track=tracker.track if track else None)
