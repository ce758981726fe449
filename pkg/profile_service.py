"""Harmonic-map profiles, the constants rho_k / gamma_k / q_k and the
correction profiles A, B, Btilde.

The corrections solve ``L h = rhs`` with ``<h|LamQ> = 0``, where
``L = -Laplacian + k^2 cos(2Q)/r^2``. The homogeneous solutions are
``LamQ = k/cosh(k s)`` and, by reduction of order from s = 0,
``Gamma = (sinh(k s)/k + s/cosh(k s)) / (2k)`` with ``s = ln r``.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Dict, Optional

import numpy as np
from scipy import sparse
from scipy.integrate import cumulative_trapezoid
from scipy.sparse.linalg import spsolve, splu

from lab_errors import GridTooCoarse, NumericalFailure, SolvabilityViolation, require_k
from radial_core import (
    RadialField,
    RadialGrid,
    evaluate,
    h_quadratic,
    loglog_slope,
    make_grid,
)

MODULE = "profiles"
PROFILE_R_MIN = 1e-4
PROFILE_R_MAX = 1e4
DEFAULT_PROFILE_N = 2 ** 17
SOLVABILITY_TOL = 1e-6
RESIDUAL_TOL = 1e-4

logger = logging.getLogger(__name__)


# ---------- closed forms ----------


def bubble(k: int, r: np.ndarray, lam: float = 1.0) -> np.ndarray:
    """``Q(r/lam) = 2 arctan((r/lam)^k)`` without loss of precision at either end."""
    x = np.asarray(r, dtype=float) / lam
    out = np.empty_like(x)
    small = x <= 1.0
    out[small] = 2.0 * np.arctan(x[small] ** k)
    out[~small] = math.pi - 2.0 * np.arctan(x[~small] ** (-k))
    return out


def lam_bubble(k: int, r: np.ndarray, lam: float = 1.0) -> np.ndarray:
    """``LamQ(r/lam) = 2k x^k/(1+x^2k) = k/cosh(k ln x)``."""
    s = np.log(np.asarray(r, dtype=float) / lam)
    with np.errstate(over="ignore"):
        return k / np.cosh(k * s)


def lam0_lam_bubble(k: int, r: np.ndarray, lam: float = 1.0) -> np.ndarray:
    """``(1 + r d_r) LamQ`` at ``r/lam``."""
    s = np.log(np.asarray(r, dtype=float) / lam)
    with np.errstate(over="ignore"):
        return k / np.cosh(k * s) * (1.0 - k * np.tanh(k * s))


def bubble_trig(k: int, r: np.ndarray, lam: float = 1.0):
    """``(sin Q, cos Q)`` at ``r/lam`` from the closed forms."""
    s = np.log(np.asarray(r, dtype=float) / lam)
    with np.errstate(over="ignore"):
        return 1.0 / np.cosh(k * s), -np.tanh(k * s)


def second_solution(k: int, r: np.ndarray) -> np.ndarray:
    s = np.log(np.asarray(r, dtype=float))
    with np.errstate(over="ignore"):
        return (np.sinh(k * s) / k + s / np.cosh(k * s)) / (2.0 * k)


def closed_form_Q(k: int, grid: RadialGrid) -> RadialField:
    return RadialField(grid, bubble(k, grid.nodes), origin_exponent=k, tail_exponent=0)


def closed_form_LamQ(k: int, grid: RadialGrid) -> RadialField:
    return RadialField(grid, lam_bubble(k, grid.nodes), origin_exponent=k, tail_exponent=-k)


def rho_squared(k: int) -> float:
    return 8.0 * k * math.sin(math.pi / k) / math.pi


def lamq_norm_sq_exact(k: int) -> float:
    return 2.0 * math.pi / math.sin(math.pi / k)


# ---------- constants ----------


@dataclass(frozen=True)
class Constants:
    k: int
    rho_k: float
    gamma_k: float
    tilde_gamma_k: float
    q_k: float
    lamQ_norm_sq: float
    gamma_solvability: float
    c1_coercivity: Optional[float] = None

    def to_dict(self) -> Dict[str, float]:
        return {
            "k": self.k,
            "rho_k": self.rho_k,
            "gamma_k": self.gamma_k,
            "tilde_gamma_k": self.tilde_gamma_k,
            "q_k": self.q_k,
            "lamQ_norm_sq": self.lamQ_norm_sq,
            "c1_coercivity": self.c1_coercivity,
        }


def _cubic_moment(k: int, grid: RadialGrid, power: int) -> float:
    r = grid.nodes
    lam_q = lam_bubble(k, r)
    return float(np.dot(grid.weights, r ** power * lam_q ** 3))


def compute_constants(k: int, grid: RadialGrid) -> Constants:
    k = require_k(k, module=MODULE)
    rho_sq = rho_squared(k)
    rho = math.sqrt(rho_sq)
    gamma = 0.5 * k * rho_sq
    q = ((k - 2) * rho / 2.0) ** (-2.0 / (k - 2))

    lam_q = lam_bubble(k, grid.nodes)
    norm_sq = float(np.dot(grid.weights, lam_q * lam_q))
    exact = lamq_norm_sq_exact(k)
    mismatch = abs(norm_sq - exact) / exact
    if mismatch > 1e-3:
        raise GridTooCoarse(
            f"||LamQ||^2 quadratura {norm_sq:.6g} vs forma fechada {exact:.6g}",
            module=MODULE,
            mismatch=mismatch,
        )

    gamma_solv = 4.0 * _cubic_moment(k, grid, k - 2) / norm_sq
    tilde_gamma = 4.0 * _cubic_moment(k, grid, -k - 2) / norm_sq
    logger.info(
        "Constantes k=%s: rho=%.9f gamma=%.9f (solv %.9f, til %.9f) q=%.9f |LamQ|^2=%.9f",
        k,
        rho,
        gamma,
        gamma_solv,
        tilde_gamma,
        q,
        norm_sq,
    )
    return Constants(
        k=k,
        rho_k=rho,
        gamma_k=gamma,
        tilde_gamma_k=tilde_gamma,
        q_k=q,
        lamQ_norm_sq=norm_sq,
        gamma_solvability=gamma_solv,
    )


# ---------- linear solves about Q ----------


def _linearized_form(k: int, grid: RadialGrid, potential: np.ndarray) -> sparse.csr_matrix:
    """Weighted form of ``-Laplacian + k^2/r^2 + potential``."""
    return (grid.h_form(k) + sparse.diags(grid.weights * potential)).tocsr()


def _exact_potential(k: int, grid: RadialGrid) -> np.ndarray:
    lam_q = lam_bubble(k, grid.nodes)
    return -2.0 * lam_q * lam_q * grid.inv_r2


def _kernel_potential(k: int, grid: RadialGrid) -> np.ndarray:
    """Potential for which the discrete operator annihilates LamQ exactly."""
    lam_q = lam_bubble(k, grid.nodes)
    l0_lam_q = (grid.h_form(k) @ lam_q) / grid.weights
    return -l0_lam_q / lam_q


def _bordered(form: sparse.csr_matrix, column: np.ndarray) -> sparse.csc_matrix:
    col = sparse.csr_matrix(column.reshape(-1, 1))
    return sparse.bmat([[form, col], [col.T, None]], format="csc")


@dataclass(frozen=True)
class CorrectionSolve:
    field: RadialField
    residual_rel: float
    vop_gap: float


def solve_correction_detailed(rhs: RadialField, k: int) -> CorrectionSolve:
    grid = rhs.grid
    r = grid.nodes
    w = grid.weights
    lam_q = lam_bubble(k, r)
    rhs_v = rhs.values
    norm_rhs = math.sqrt(float(np.dot(w, rhs_v * rhs_v)))
    if norm_rhs == 0.0:
        return CorrectionSolve(RadialField(grid, np.zeros(grid.n), k, 2 - k), 0.0, 0.0)

    norm_lam_q = math.sqrt(float(np.dot(w, lam_q * lam_q)))
    overlap = float(np.dot(w, rhs_v * lam_q))
    if abs(overlap) > SOLVABILITY_TOL * norm_rhs * norm_lam_q:
        raise SolvabilityViolation(
            f"rhs não é ortogonal a LamQ (relativo {abs(overlap) / (norm_rhs * norm_lam_q):.3e})",
            module=MODULE,
        )

    # variation of parameters with the fundamental system {LamQ, Gamma}
    gam = second_solution(k, r)
    c1 = cumulative_trapezoid(gam * rhs_v * r, r, initial=0.0)
    inner_part = cumulative_trapezoid(lam_q * rhs_v * r, r, initial=0.0)
    outer_part = inner_part[-1] - inner_part
    c2 = np.where(r < 1.0, -inner_part, outer_part)
    with np.errstate(over="raise", invalid="raise"):
        try:
            h_vop = lam_q * c1 + gam * c2
        except FloatingPointError as exc:
            raise NumericalFailure(f"variation of parameters overflow: {exc}", module=MODULE) from exc
    h_vop = h_vop - (np.dot(w, h_vop * lam_q) / norm_lam_q ** 2) * lam_q

    # discrete polish: bordered solve with the kernel-consistent potential
    form = _linearized_form(k, grid, _kernel_potential(k, grid))
    defect = w * rhs_v - form @ h_vop
    system = _bordered(form, w * lam_q)
    sol = spsolve(system, np.append(defect, 0.0))
    if not np.all(np.isfinite(sol)):
        raise NumericalFailure("bordered solve produced non-finite values", module=MODULE)
    delta = sol[:-1]
    h = h_vop + delta
    h = h - (np.dot(w, h * lam_q) / norm_lam_q ** 2) * lam_q

    exact_form = _linearized_form(k, grid, _exact_potential(k, grid))
    residual = (exact_form @ h) / w - rhs_v
    residual_rel = math.sqrt(float(np.dot(w, residual * residual))) / norm_rhs
    h_norm = math.sqrt(max(h_quadratic(h, grid, k), 0.0))
    vop_gap = math.sqrt(max(h_quadratic(delta, grid, k), 0.0)) / h_norm if h_norm > 0 else 0.0
    if residual_rel > RESIDUAL_TOL:
        logger.warning("Resíduo relativo %.3e acima de %.0e (n=%s)", residual_rel, RESIDUAL_TOL, grid.n)
    logger.debug("solve_correction: residual=%.3e vop_gap=%.3e", residual_rel, vop_gap)
    return CorrectionSolve(RadialField(grid, h, origin_exponent=k, tail_exponent=2 - k), residual_rel, vop_gap)


def solve_correction(rhs: RadialField, k: int) -> RadialField:
    """Solve ``L h = rhs`` with ``<h|LamQ> = 0`` on the grid of ``rhs``."""
    return solve_correction_detailed(rhs, k).field


# ---------- coercivity ----------


def coercivity_constant(k: int, grid: RadialGrid, max_iter: int = 600, tol: float = 1e-10) -> float:
    """Bottom of ``<L w|w> / ||w||_H^2`` on ``<w|LamQ> = 0`` by inverse iteration."""
    r = grid.nodes
    w = grid.weights
    lam_q = lam_bubble(k, r)
    form = _linearized_form(k, grid, _exact_potential(k, grid))
    gram = grid.h_form(k)
    solver = splu(_bordered(form, w * lam_q))

    v = r ** k * np.exp(-r) * (1.0 + np.sin(np.log(r)))
    v = v - (np.dot(w, v * lam_q) / np.dot(w, lam_q * lam_q)) * lam_q
    v = v / math.sqrt(float(v @ (gram @ v)))
    value = float(v @ (form @ v))
    for iteration in range(1, max_iter + 1):
        y = solver.solve(np.append(gram @ v, 0.0))[:-1]
        norm = math.sqrt(float(y @ (gram @ y)))
        if not math.isfinite(norm) or norm == 0.0:
            raise NumericalFailure("inverse iteration broke down", module=MODULE)
        v = y / norm
        new_value = float(v @ (form @ v))
        if abs(new_value - value) <= tol * abs(new_value):
            value = new_value
            break
        value = new_value
    else:
        logger.warning("Iteração inversa sem convergência em %s passos (c1=%.6f)", max_iter, value)
    logger.info("Coercividade k=%s n=%s: c1=%.6f (%s iterações)", k, grid.n, value, iteration)
    return value


# ---------- profile set ----------


def profile_grid(n: int = DEFAULT_PROFILE_N, r_max: float = PROFILE_R_MAX) -> RadialGrid:
    return make_grid(r_max, n, "geometric", r_min=PROFILE_R_MIN)


@dataclass(frozen=True, eq=False)
class ProfileSet:
    constants: Constants
    grid: RadialGrid
    Q: RadialField
    LamQ: RadialField
    Lam0LamQ: RadialField
    A: RadialField
    B: RadialField
    Btilde: RadialField
    LamA: RadialField
    LamB: RadialField
    LamBtilde: RadialField
    residuals: Dict[str, float] = field(default_factory=dict)

    @property
    def k(self) -> int:
        return self.constants.k

    def sample(self, name: str, r: np.ndarray, lam: float = 1.0, convention: str = "H") -> np.ndarray:
        """Profile ``name`` at scale ``lam`` on arbitrary radii."""
        if name == "Q":
            values = bubble(self.k, r, lam)
        elif name == "LamQ":
            values = lam_bubble(self.k, r, lam)
        elif name == "Lam0LamQ":
            values = lam0_lam_bubble(self.k, r, lam)
        else:
            values = evaluate(getattr(self, name), np.asarray(r, dtype=float) / lam)
        if convention == "L2":
            values = values / lam
        return values


def correction_rhs(k: int, grid: RadialGrid, constants: Constants) -> Dict[str, RadialField]:
    r = grid.nodes
    lam_q = lam_bubble(k, r)
    lam0_lam_q = grid.lambda0_matrix @ lam_q
    sq = lam_q * lam_q
    # gamma_solvability is gamma_k by quadrature on this grid; it keeps the B source orthogonal to LamQ
    return {
        "A": RadialField(grid, -lam0_lam_q),
        "B": RadialField(grid, constants.gamma_solvability * lam_q - 4.0 * r ** (k - 2) * sq),
        "Btilde": RadialField(grid, -constants.tilde_gamma_k * lam_q + 4.0 * r ** (-k - 2) * sq),
    }


def build_profiles(k: int, grid: Optional[RadialGrid] = None, with_coercivity: bool = True) -> ProfileSet:
    k = require_k(k, module=MODULE)
    grid = grid or profile_grid()
    constants = compute_constants(k, grid)
    if with_coercivity:
        constants = replace(constants, c1_coercivity=coercivity_constant(k, grid))

    rhs = correction_rhs(k, grid, constants)
    solved = {name: solve_correction_detailed(field_rhs, k) for name, field_rhs in rhs.items()}
    residuals = {name: result.residual_rel for name, result in solved.items()}

    def lam_of(f: RadialField) -> RadialField:
        return f.with_values(grid.nodes * (grid.d1 @ f.values))

    lam_q = closed_form_LamQ(k, grid)
    A = solved["A"].field
    B = solved["B"].field
    Btilde = solved["Btilde"].field
    profiles = ProfileSet(
        constants=constants,
        grid=grid,
        Q=closed_form_Q(k, grid),
        LamQ=lam_q,
        Lam0LamQ=RadialField(grid, grid.lambda0_matrix @ lam_q.values, k, -k),
        A=A,
        B=B,
        Btilde=Btilde,
        LamA=lam_of(A),
        LamB=lam_of(B),
        LamBtilde=lam_of(Btilde),
        residuals=residuals,
    )
    logger.info(
        "Perfis k=%s (n=%s): resíduos A=%.2e B=%.2e Btil=%.2e; expoentes A=(%.3f, %.3f) B=(%.3f, %.3f)",
        k,
        grid.n,
        residuals["A"],
        residuals["B"],
        residuals["Btilde"],
        loglog_slope(A, "origin"),
        loglog_slope(A, "tail"),
        loglog_slope(B, "origin"),
        loglog_slope(B, "tail"),
    )
    return profiles
