"""Two-bubble ansatz, its static residual and the cross-term scaling laws.

Scaled profiles follow two conventions: ``X_lam = X(r/lam)`` for the
position component and ``X_lam_ = X(r/lam)/lam`` for the velocity
component. The brackets of the residual are evaluated through trigonometric
identities so that no small quantity is formed as a difference of O(1)
numbers.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from lab_errors import InvalidArgument, InvalidRegime, ResolutionError
from profile_service import ProfileSet, bubble, bubble_trig, lam_bubble
from radial_core import (
    RadialField,
    RadialGrid,
    StatePair,
    fit_power,
    nonlinearity,
    nonlinearity_prime,
    norm_H,
)

MODULE = "ansatz"
REGIME_BOUND = 0.1

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ModParams:
    mu: float
    lam: float
    a: float = 0.0
    b: float = 0.0

    def __post_init__(self):
        for name in ("mu", "lam", "a", "b"):
            value = float(getattr(self, name))
            if not math.isfinite(value):
                raise InvalidArgument(f"{name} must be finite", module=MODULE)
            object.__setattr__(self, name, value)
        if self.mu <= 0 or self.lam <= 0:
            raise InvalidArgument("scales mu and lam must be positive", module=MODULE)

    @property
    def nu(self) -> float:
        return self.lam / self.mu

    def check_regime(self) -> "ModParams":
        if self.nu >= REGIME_BOUND or abs(self.a) >= REGIME_BOUND or abs(self.b) >= REGIME_BOUND:
            raise InvalidRegime(
                f"fora do regime: nu={self.nu:.4g} a={self.a:.4g} b={self.b:.4g}",
                module=MODULE,
                nu=self.nu,
            )
        return self

    def to_dict(self) -> Dict[str, float]:
        return {"mu": self.mu, "lam": self.lam, "a": self.a, "b": self.b, "nu": self.nu}


@dataclass(frozen=True, eq=False)
class AnsatzState:
    params: ModParams
    state: StatePair
    profile_set: ProfileSet


def _scaled(ps: ProfileSet, name: str, r: np.ndarray, lam: float, convention: str = "H") -> np.ndarray:
    return ps.sample(name, r, lam, convention)


def _check_resolved(lam: float, grid: RadialGrid) -> None:
    if lam < grid.nodes[1]:
        raise ResolutionError(
            f"escala {lam:g} abaixo da resolução da malha",
            module=MODULE,
            scale=lam,
        )


def two_bubble(lam: float, mu: float, grid: RadialGrid, k: int) -> RadialField:
    if not (lam > 0 and mu > 0):
        raise InvalidArgument("scales must be positive", module=MODULE)
    if lam > mu:
        raise InvalidRegime("two_bubble requires lam <= mu", module=MODULE)
    if lam == mu:
        return RadialField(grid, np.zeros(grid.n), k, -k)
    r = grid.nodes
    # Q_lam - Q_mu = 2 arctan of the tangent difference formula, exact in both tails
    x = (r / lam) ** k
    y = (r / mu) ** k
    with np.errstate(over="ignore", invalid="ignore"):
        values = 2.0 * np.arctan((x - y) / (1.0 + x * y))
    big = ~np.isfinite(values)
    values[big] = bubble(k, r[big], lam) - bubble(k, r[big], mu)
    return RadialField(grid, values, origin_exponent=k, tail_exponent=-k)


def phi(params: ModParams, ps: ProfileSet, grid: Optional[RadialGrid] = None) -> StatePair:
    """Position and velocity of the two-bubble ansatz on ``grid`` (default: the profile grid)."""
    params.check_regime()
    grid = grid or ps.grid
    _check_resolved(params.lam, grid)
    r = grid.nodes
    k = ps.k
    lam, mu, a, b = params.lam, params.mu, params.a, params.b
    nu_k = params.nu ** k
    gamma = ps.constants.gamma_k
    tilde_gamma = ps.constants.tilde_gamma_k

    def at_lam(name, conv="H"):
        return _scaled(ps, name, r, lam, conv)

    def at_mu(name, conv="H"):
        return _scaled(ps, name, r, mu, conv)

    position = two_bubble(lam, mu, grid, k).values
    position = position + b * b * at_lam("A") + nu_k * at_lam("B")
    position = position - a * a * at_mu("A") - nu_k * at_mu("Btilde")

    velocity = (
        b * at_lam("LamQ", "L2")
        + b ** 3 * at_lam("LamA", "L2")
        - 2.0 * gamma * b * nu_k * at_lam("A", "L2")
        + b * nu_k * at_lam("LamB", "L2")
        - k * b * nu_k * at_lam("B", "L2")
        # nu^(k+1) on the inner B term
        - k * a * nu_k * params.nu * at_lam("B", "L2")
        + a * at_mu("LamQ", "L2")
        + a ** 3 * at_mu("LamA", "L2")
        + 2.0 * tilde_gamma * a * nu_k * at_mu("A", "L2")
        + a * nu_k * at_mu("LamBtilde", "L2")
        + k * b * nu_k / params.nu * at_mu("Btilde", "L2")
        + k * a * nu_k * at_mu("Btilde", "L2")
    )
    return StatePair(
        RadialField(grid, position, origin_exponent=k, tail_exponent=2 - k),
        RadialField(grid, velocity, origin_exponent=k, tail_exponent=2 - k),
    )


def build_ansatz(params: ModParams, ps: ProfileSet, grid: Optional[RadialGrid] = None) -> AnsatzState:
    return AnsatzState(params=params, state=phi(params, ps, grid), profile_set=ps)


# ---------- residual brackets ----------


def _corrections(params: ModParams, ps: ProfileSet, r: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    nu_k = params.nu ** ps.k
    inner = params.b ** 2 * _scaled(ps, "A", r, params.lam) + nu_k * _scaled(ps, "B", r, params.lam)
    outer = params.a ** 2 * _scaled(ps, "A", r, params.mu) + nu_k * _scaled(ps, "Btilde", r, params.mu)
    return inner, outer


def _interaction_bracket(k: int, r: np.ndarray, lam: float, mu: float) -> np.ndarray:
    """``f(Q_lam - Q_mu) - f(Q_lam) + f(Q_mu) - 4 (r/mu)^k (LamQ_lam)^2 - 4 (r/lam)^-k (LamQ_mu)^2``."""
    sin_x, _ = bubble_trig(k, r, lam)
    sin_y, _ = bubble_trig(k, r, mu)
    with np.errstate(over="ignore", under="ignore"):
        p = (r / mu) ** k
        s = (r / lam) ** (-k)
        first = np.where(np.isfinite(p * p), p ** 3 * (3.0 + p * p) / (1.0 + p * p) ** 2, p)
        second = np.where(np.isfinite(s * s), s ** 3 * (3.0 + s * s) / (1.0 + s * s) ** 2, s)
    return -4.0 * k * k * (sin_x ** 2 * first + sin_y ** 2 * second)


def _sin2_minus_linear(delta: np.ndarray) -> np.ndarray:
    """``sin(2d) - 2d`` with a series near zero."""
    z = 2.0 * delta
    small = np.abs(z) < 1e-2
    out = np.sin(z) - z
    zs = z[small]
    out[small] = -zs ** 3 / 6.0 + zs ** 5 / 120.0 - zs ** 7 / 5040.0
    return out


def taylor_remainder(u: np.ndarray, w: np.ndarray, k: int) -> np.ndarray:
    """``f(u + w) - f(u) - f'(u) w`` without cancellation."""
    return 0.5 * k * k * (-2.0 * np.sin(2.0 * u) * np.sin(w) ** 2 + np.cos(2.0 * u) * _sin2_minus_linear(w))


def _linear_bracket(k: int, r: np.ndarray, params: ModParams, inner: np.ndarray, outer: np.ndarray) -> np.ndarray:
    """``f'(Q_lam - Q_mu)(inner - outer) - f'(Q_lam) inner + f'(Q_mu) outer``."""
    x = bubble(k, r, params.lam)
    y = bubble(k, r, params.mu)
    return k * k * (
        2.0 * np.sin(2.0 * x - y) * np.sin(y) * inner + 2.0 * np.sin(x) * np.sin(x - 2.0 * y) * outer
    )


def _brackets(params: ModParams, ps: ProfileSet, grid: RadialGrid) -> Tuple[np.ndarray, ...]:
    r = grid.nodes
    k = ps.k
    inner, outer = _corrections(params, ps, r)
    base = two_bubble(params.lam, params.mu, grid, k).values
    first = _interaction_bracket(k, r, params.lam, params.mu)
    second = taylor_remainder(base, inner - outer, k)
    third = _linear_bracket(k, r, params, inner, outer)
    return first, second, third


def residual_brackets(params: ModParams, ps: ProfileSet, grid: Optional[RadialGrid] = None) -> Tuple[np.ndarray, ...]:
    params.check_regime()
    return _brackets(params, ps, grid or ps.grid)


def bracket_norms(params: ModParams, ps: ProfileSet, alpha: int = 1, grid: Optional[RadialGrid] = None) -> Tuple[float, float, float]:
    """``||r^-alpha bracket_i||_L2`` for the three residual brackets."""
    grid = grid or ps.grid
    weight = grid.weights * grid.nodes ** (-2.0 * alpha)
    return tuple(math.sqrt(float(np.dot(weight, br * br))) for br in residual_brackets(params, ps, grid))


def modulation_terms(params: ModParams, ps: ProfileSet, grid: Optional[RadialGrid] = None) -> np.ndarray:
    grid = grid or ps.grid
    r = grid.nodes
    k = ps.k
    lam, mu = params.lam, params.mu
    nu_k = params.nu ** k
    gamma = ps.constants.gamma_k
    lam_q_lam = lam_bubble(k, r, lam) / lam
    lam_q_mu = lam_bubble(k, r, mu) / mu
    l0_lam = _scaled(ps, "Lam0LamQ", r, lam, "L2")
    l0_mu = _scaled(ps, "Lam0LamQ", r, mu, "L2")
    return (
        gamma * nu_k / lam * lam_q_lam
        - params.b ** 2 / lam * l0_lam
        + gamma * nu_k / mu * lam_q_mu
        + params.a ** 2 / mu * l0_mu
    )


def static_residual(params: ModParams, ps: ProfileSet, grid: Optional[RadialGrid] = None) -> RadialField:
    """``-Lap Phi + f(Phi)/r^2`` minus the four modulation terms, i.e. ``r^-2`` times the bracket sum."""
    grid = grid or ps.grid
    total = sum(residual_brackets(params, ps, grid))
    return RadialField(grid, total * grid.inv_r2)


def equation_residual(params: ModParams, ps: ProfileSet, grid: Optional[RadialGrid] = None) -> RadialField:
    """Same quantity with the Laplacian of every profile taken from its defining equation.

    ``Q`` is static, ``L A = -Lam0 LamQ`` and the ``B``, ``Btilde`` equations use the
    constants their right-hand sides were built with, so nothing is differentiated
    numerically and ``f`` is evaluated directly.
    """
    params.check_regime()
    grid = grid or ps.grid
    r = grid.nodes
    k = ps.k
    c = ps.constants
    lam, mu, a, b = params.lam, params.mu, params.a, params.b
    nu_k = params.nu ** k
    x = bubble(k, r, lam)
    y = bubble(k, r, mu)
    inner, outer = _corrections(params, ps, r)
    position = x - y + inner - outer

    s = r / lam
    t = r / mu
    lq_s = lam_bubble(k, r, lam)
    lq_t = lam_bubble(k, r, mu)
    pointwise = (
        nonlinearity(position, k)
        - nonlinearity(x, k)
        + nonlinearity(y, k)
        - nonlinearity_prime(x, k) * inner
        + nonlinearity_prime(y, k) * outer
    ) * grid.inv_r2
    profiles = (
        -b * b / lam * _scaled(ps, "Lam0LamQ", r, lam, "L2")
        + nu_k / lam ** 2 * (c.gamma_solvability * lq_s - 4.0 * s ** (k - 2) * lq_s ** 2)
        + a * a / mu * _scaled(ps, "Lam0LamQ", r, mu, "L2")
        + nu_k / mu ** 2 * (c.tilde_gamma_k * lq_t - 4.0 * t ** (-k - 2) * lq_t ** 2)
    )
    return RadialField(grid, pointwise + profiles - modulation_terms(params, ps, grid))


def bracket_gaps(params: ModParams, ps: ProfileSet, grid: Optional[RadialGrid] = None) -> Tuple[float, float, float]:
    """Relative L2 gap between each bracket and its plain evaluation from ``f`` and ``f'``.

    The bracket forms are identities for any ``lam < mu``, so no regime is required; at
    small ``nu`` the plain evaluation of the first bracket is swamped by cancellation.
    """
    if not 0 < params.lam < params.mu:
        raise InvalidRegime("bracket forms need lam < mu", module=MODULE)
    grid = grid or ps.grid
    r = grid.nodes
    k = ps.k
    x = bubble(k, r, params.lam)
    y = bubble(k, r, params.mu)
    inner, outer = _corrections(params, ps, r)
    base = x - y
    w = inner - outer
    sq_s = lam_bubble(k, r, params.lam) ** 2
    sq_t = lam_bubble(k, r, params.mu) ** 2
    with np.errstate(over="ignore", under="ignore"):
        plain = (
            nonlinearity(base, k)
            - nonlinearity(x, k)
            + nonlinearity(y, k)
            - 4.0 * (r / params.mu) ** k * sq_s
            - 4.0 * (r / params.lam) ** (-k) * sq_t,
            nonlinearity(base + w, k) - nonlinearity(base, k) - nonlinearity_prime(base, k) * w,
            nonlinearity_prime(base, k) * w - nonlinearity_prime(x, k) * inner + nonlinearity_prime(y, k) * outer,
        )
    weight = grid.weights * grid.inv_r2
    gaps = []
    for bracket, direct in zip(_brackets(params, ps, grid), plain):
        size = math.sqrt(float(np.dot(weight, bracket * bracket)))
        gap = math.sqrt(float(np.dot(weight, (bracket - direct) ** 2)))
        gaps.append(gap / size if size > 0 else gap)
    return tuple(gaps)


def taylor_remainder_norm(base: RadialField, w: RadialField, k: int) -> float:
    """``||r^-1 (f(base + w) - f(base) - f'(base) w)||_L2``."""
    grid = base.grid
    rem = taylor_remainder(base.values, w.values, k)
    return math.sqrt(float(np.dot(grid.weights * grid.inv_r2, rem * rem)))


def remainder_constants(base: RadialField, fields: Sequence[RadialField], k: int, size: float = 1e-2) -> List[float]:
    """``taylor_remainder_norm / ||w||_H^2`` for each field rescaled to ``||w||_H = size``.

    ``|f''| <= 2 k^2`` and ``||w||_inf^2 <= ||w||_H^2 / k`` bound every value by ``sqrt(k)``.
    """
    out = []
    for w in fields:
        scaled = RadialField(base.grid, w.values * (size / norm_H(w, k)))
        out.append(taylor_remainder_norm(base, scaled, k) / size ** 2)
    return out


# ---------- cross terms ----------

CROSS_TERMS = (
    "LamQl2_LamQm",
    "LamQl_LamQm2",
    "LamQl2_Am",
    "LamQl2_Btm",
    "LamQm2_Al",
    "LamQm2_Bl",
    "LamQl_Am2",
    "LamQl_Btm2",
    "LamQm_Al2",
    "LamQm_Bl2",
)
CROSS_GROUPS = {
    "LamQl2_LamQm": "k",
    "LamQl_LamQm2": "k",
    "LamQl2_Am": "k",
    "LamQl2_Btm": "k-o(1)",
    "LamQm2_Al": "k-2",
    "LamQm2_Bl": "k-2",
    "LamQl_Am2": "k",
    "LamQl_Btm2": "k",
    "LamQm_Al2": "k",
    "LamQm_Bl2": "k",
}


def cross_term_norms(lam: float, mu: float, ps: ProfileSet, grid: Optional[RadialGrid] = None) -> Dict[str, float]:
    if not 0 < lam <= REGIME_BOUND * mu:
        raise InvalidRegime("cross terms need lam/mu <= 0.1", module=MODULE)
    grid = grid or ps.grid
    r = grid.nodes
    ql = _scaled(ps, "LamQ", r, lam)
    qm = _scaled(ps, "LamQ", r, mu)
    al = _scaled(ps, "A", r, lam)
    am = _scaled(ps, "A", r, mu)
    bl = _scaled(ps, "B", r, lam)
    btm = _scaled(ps, "Btilde", r, mu)
    products = {
        "LamQl2_LamQm": ql ** 2 * qm,
        "LamQl_LamQm2": ql * qm ** 2,
        "LamQl2_Am": ql ** 2 * am,
        "LamQl2_Btm": ql ** 2 * btm,
        "LamQm2_Al": qm ** 2 * al,
        "LamQm2_Bl": qm ** 2 * bl,
        "LamQl_Am2": ql * am ** 2,
        "LamQl_Btm2": ql * btm ** 2,
        "LamQm_Al2": qm * al ** 2,
        "LamQm_Bl2": qm * bl ** 2,
    }
    weight = grid.weights * grid.inv_r2
    return {name: math.sqrt(float(np.dot(weight, products[name] ** 2))) for name in CROSS_TERMS}


# ---------- scaling studies ----------

DEFAULT_NUS = (0.02, 0.04, 0.08)


def scaling_table(nus: Sequence[float], values: Sequence[float]) -> Tuple[List[Dict[str, float]], float]:
    slope = fit_power(nus, values)
    rows = [{"nu": float(nu), "norm": float(v), "fitted_slope": slope} for nu, v in zip(nus, values)]
    return rows, slope


def bracket_scaling(
    ps: ProfileSet,
    which: int,
    nus: Sequence[float] = DEFAULT_NUS,
    a: float = 0.0,
    b: float = 0.0,
    alpha: int = 1,
) -> Tuple[List[Dict[str, float]], float]:
    """Norm of bracket ``which`` (1, 2 or 3) at ``lam = nu, mu = 1`` against nu."""
    if which not in (1, 2, 3):
        raise InvalidArgument("bracket index must be 1, 2 or 3", module=MODULE)
    values = [bracket_norms(ModParams(mu=1.0, lam=nu, a=a, b=b), ps, alpha)[which - 1] for nu in nus]
    rows, slope = scaling_table(nus, values)
    logger.info("Escala do termo %s (alpha=%s, b=%s): expoente %.3f", which, alpha, b, slope)
    return rows, slope


def cross_term_scaling(ps: ProfileSet, nus: Sequence[float] = (0.025, 0.05, 0.1)) -> Dict[str, float]:
    table = [cross_term_norms(nu, 1.0, ps) for nu in nus]
    return {name: fit_power(nus, [row[name] for row in table]) for name in CROSS_TERMS}
