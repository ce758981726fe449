"""Virial weight p(r) and the localized dilation operators A(lam), A0(lam).

``p'(r) = r g(ln r)`` where ``g`` drops from 1 to 0 through a C^5
smoothstep over ``[ln R, ln R + L]``. Every radial quantity the bounds need
is a combination of the s-derivatives of g:

    p'' = g + g',  Lap p = 2g + g',  r d_r Lap p = 2g' + g'',
    Lap^2 p = r^-2 (2g'' + g'''),  Lap^3 p = r^-4 (h'' - 4h' + 4h) with h = 2g'' + g''',
    r (p'/r)' = g',  r (r (p'/r)')' = g''.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence

import numpy as np
from numpy.polynomial import Polynomial
from scipy.integrate import cumulative_trapezoid

from lab_errors import ConstructionFailed, InvalidArgument
from profile_service import lam_bubble
from radial_core import RadialField, RadialGrid, inner, make_grid, norm_H, potential_P

MODULE = "modulation"
DENSE_N = 10_000
# L = TAPER_KAPPA * max|S'| / c keeps |2g' + g''| below 0.8 c
TAPER_KAPPA = 2.5
BULLETS = (
    "half_r2_inside_R",
    "constant_beyond_R_tilde",
    "p1_p2_bounded",
    "p2_p1r_lower",
    "r_dr_lap_p",
    "bilap_p_upper",
    "trilap_p_lower",
    "r_dr_p1_over_r",
    "r_dr_r_dr_p1_over_r",
)
P_BOUND = 3.0

logger = logging.getLogger(__name__)

# S'(x) = 2772 x^5 (1-x)^5, S(0) = 0, S(1) = 1
_S1 = 2772.0 * Polynomial([0, 0, 0, 0, 0, 1]) * Polynomial([1, -1]) ** 5
_S = _S1.integ()
_S_DERIVS = [_S, _S1] + [_S1.deriv(m) for m in range(1, 5)]
S_PRIME_MAX = float(_S1(0.5))


def _taper(s: np.ndarray, log_r: float, length: float) -> List[np.ndarray]:
    """``[g, g', g'', g''', g'''', g''''']`` in the variable s = ln r."""
    x = (np.asarray(s, dtype=float) - log_r) / length
    inside = (x > 0.0) & (x < 1.0)
    xc = np.clip(x, 0.0, 1.0)
    out = [np.where(x <= 0.0, 1.0, np.where(x >= 1.0, 0.0, 1.0 - _S(xc)))]
    for m in range(1, 6):
        out.append(np.where(inside, -_S_DERIVS[m](xc) / length ** m, 0.0))
    return out


@dataclass(frozen=True, eq=False)
class VirialProfile:
    c: float
    R: float
    R_tilde: float
    length: float
    p: RadialField
    p1: RadialField
    p2: RadialField

    @property
    def grid(self) -> RadialGrid:
        return self.p.grid

    def g_terms(self, rho: np.ndarray) -> List[np.ndarray]:
        with np.errstate(divide="ignore"):
            s = np.log(np.asarray(rho, dtype=float))
        return _taper(s, math.log(self.R), self.length)

    def p1_at(self, rho: np.ndarray) -> np.ndarray:
        rho = np.asarray(rho, dtype=float)
        return rho * self.g_terms(rho)[0]

    def p2_at(self, rho: np.ndarray) -> np.ndarray:
        g = self.g_terms(rho)
        return g[0] + g[1]

    def to_dict(self) -> Dict[str, float]:
        return {"c": self.c, "R": self.R, "R_tilde": self.R_tilde, "L": self.length}


def _bullet_checks(c: float, R: float, r: np.ndarray, p: np.ndarray, g: List[np.ndarray], R_tilde: float) -> Dict[str, float]:
    """Worst margin per bullet; a bullet holds when its margin is >= 0."""
    g0, g1, g2, g3, g4, g5 = g
    p1 = r * g0
    p2 = g0 + g1
    h0 = 2.0 * g2 + g3
    h1 = 2.0 * g3 + g4
    h2 = 2.0 * g4 + g5
    inside = r <= R
    outside = r >= R_tilde
    margins = {
        "half_r2_inside_R": -float(np.max(np.abs(p[inside] - 0.5 * r[inside] ** 2), initial=0.0)),
        "constant_beyond_R_tilde": -float(np.ptp(p[outside])) if np.any(outside) else -math.inf,
        "p1_p2_bounded": min(float(np.min(P_BOUND - np.abs(p1) / r)), float(np.min(P_BOUND - np.abs(p2)))),
        "p2_p1r_lower": min(float(np.min(p2 + c)), float(np.min(g0 + c))),
        "r_dr_lap_p": float(np.min(c - np.abs(2.0 * g1 + g2))),
        "bilap_p_upper": float(np.min(c - h0)),
        "trilap_p_lower": float(np.min(h2 - 4.0 * h1 + 4.0 * h0 + c)),
        "r_dr_p1_over_r": float(np.min(c - np.abs(g1))),
        "r_dr_r_dr_p1_over_r": float(np.min(c - np.abs(g2))),
    }
    return margins


def make_virial_profile(c: float, R: float, n_dense: int = DENSE_N, kappa: float = TAPER_KAPPA) -> VirialProfile:
    if not 0 < c <= 0.1:
        raise InvalidArgument("c must lie in (0, 0.1]", module=MODULE)
    if not R >= 1:
        raise InvalidArgument("R must be >= 1", module=MODULE)
    if not kappa > 0:
        raise InvalidArgument("kappa must be positive", module=MODULE)
    length = kappa * S_PRIME_MAX / c
    log_r = math.log(R)
    if 2.0 * (log_r + length + 2.0) > 700.0:
        raise InvalidArgument(
            f"c={c:g} gives a taper beyond double range (ln R~ = {log_r + length:.1f})",
            module=MODULE,
        )
    R_tilde = math.exp(log_r + length)

    grid = make_grid(R_tilde * math.e ** 2, n_dense, "geometric", r_min=R * 1e-3)
    r = grid.nodes
    g = _taper(np.log(r), log_r, length)
    p1 = r * g[0]
    p2 = g[0] + g[1]
    # p = r^2/2 up to R, then the integral of p' = e^(2s) g(s) ds
    s = np.log(r)
    start = int(np.searchsorted(r, R, side="right"))
    p = 0.5 * r * r
    if start < grid.n:
        s_tail = np.concatenate(([log_r], s[start:]))
        integrand = np.exp(2.0 * s_tail) * _taper(s_tail, log_r, length)[0]
        p[start:] = 0.5 * R * R + cumulative_trapezoid(integrand, s_tail)

    margins = _bullet_checks(c, R, r, p, g, R_tilde)
    for bullet in BULLETS:
        if margins[bullet] < -1e-9:
            raise ConstructionFailed(
                f"propriedade '{bullet}' falhou (margem {margins[bullet]:.3e})",
                bullet=bullet,
                c=c,
                R=R,
            )
    logger.info("Perfil virial c=%s R=%s: L=%.4g R~=%.4g, 9 propriedades verificadas", c, R, length, R_tilde)
    return VirialProfile(
        c=c,
        R=R,
        R_tilde=R_tilde,
        length=length,
        p=RadialField(grid, p),
        p1=RadialField(grid, p1),
        p2=RadialField(grid, p2),
    )


def bullet_margins(vp: VirialProfile) -> Dict[str, float]:
    r = vp.grid.nodes
    return _bullet_checks(vp.c, vp.R, r, vp.p.values, vp.g_terms(r), vp.R_tilde)


# ---------- operators ----------


def _check_scale(lam: float) -> float:
    lam = float(lam)
    if not lam > 0 or not math.isfinite(lam):
        raise InvalidArgument("lam must be positive", module=MODULE)
    return lam


def apply_A(lam: float, vp: VirialProfile, w: RadialField) -> RadialField:
    """``p'(r/lam) d_r w``."""
    lam = _check_scale(lam)
    grid = w.grid
    return RadialField(grid, vp.p1_at(grid.nodes / lam) * (grid.d1 @ w.values))


def a0_matrix(lam: float, vp: VirialProfile, grid: RadialGrid):
    return grid.skew_operator(vp.p1_at(grid.nodes / _check_scale(lam)))


def apply_A0(lam: float, vp: VirialProfile, w: RadialField) -> RadialField:
    """``(p''(r/lam)/(2 lam) + p'(r/lam)/(2r)) w + p'(r/lam) d_r w`` as an antisymmetric operator."""
    return RadialField(w.grid, a0_matrix(lam, vp, w.grid) @ w.values)


# ---------- Pohozaev-type bound ----------


@dataclass(frozen=True)
class PohozaevCheck:
    lhs: float
    bound: float
    implied_c0: float

    @property
    def holds(self) -> bool:
        return self.lhs >= self.bound - 1e-12 * max(1.0, abs(self.bound))

    def as_pair(self):
        return self.lhs, self.bound


def _partial_h(w: RadialField, k: int, r_cut: float) -> float:
    """``int_0^r_cut (w_r^2 + k^2 w^2/r^2) r dr`` with the grid's own form."""
    grid = w.grid
    v = w.values
    r = grid.nodes
    m = int(np.searchsorted(r, r_cut, side="right"))
    if m == 0:
        return 0.0
    dv = np.diff(v[:m])
    c_edge = 0.5 * (r[1:m] + r[: m - 1]) / np.diff(r[:m])
    mass = np.dot(grid.weights[:m] * grid.inv_r2[:m], v[:m] ** 2)
    return float(np.dot(c_edge, dv * dv) + k * v[0] ** 2 + k * k * mass)


def pohozaev_check(lam: float, vp: VirialProfile, w: RadialField, k: int, c0: Optional[float] = None) -> PohozaevCheck:
    """``<A0(lam) w | L0 w>`` against ``-(c0/lam)||w||_H^2 + (1/lam) int_0^(R lam) (w_r^2 + k^2 w^2/r^2) r dr``."""
    lam = _check_scale(lam)
    c0 = 2.0 * vp.c if c0 is None else c0
    grid = w.grid
    v = w.values
    if not np.any(v):
        return PohozaevCheck(0.0, 0.0, 0.0)
    a0w = a0_matrix(lam, vp, grid) @ v
    lhs = float(a0w @ (grid.h_form(k) @ v))
    h_sq = norm_H(w, k) ** 2
    local = _partial_h(w, k, vp.R * lam)
    bound = -c0 / lam * h_sq + local / lam
    implied = max(0.0, (local - lam * lhs) / h_sq)
    return PohozaevCheck(lhs=lhs, bound=bound, implied_c0=implied)


def lam0_pairing(lam: float, w: RadialField, k: int) -> float:
    """``<lam^-1 Lambda0 w | L0 w>``."""
    grid = w.grid
    return float((grid.lambda0_matrix @ w.values) @ (grid.h_form(k) @ w.values)) / lam


def virial_transfer_gap(lam: float, vp: VirialProfile, w: RadialField, k: int) -> float:
    """``|<A0(lam) w | P_lam w> - <lam^-1 Lambda0 w | P_lam w>|`` relative to ``||w||_H^2 / lam``."""
    grid = w.grid
    pw = potential_P(grid.nodes, k, lam) * w.values
    a0w = apply_A0(lam, vp, w).values
    l0w = (grid.lambda0_matrix @ w.values) / lam
    gap = abs(float(np.dot(grid.weights, (a0w - l0w) * pw)))
    return gap * lam / norm_H(w, k) ** 2


def lamq_localization_error(lam: float, vp: VirialProfile, grid: RadialGrid, k: int) -> float:
    """``||Lambda0 LamQ_lam_ - A0(lam) LamQ_lam||_L2``."""
    values = lam_bubble(k, grid.nodes, lam)
    diff = a0_matrix(lam, vp, grid) @ values - (grid.lambda0_matrix @ values) / lam
    return math.sqrt(float(np.dot(grid.weights, diff * diff)))


def operator_ratio(lam: float, vp: VirialProfile, w: RadialField, k: int) -> float:
    """``||A(lam) w||_L2 / ||w||_H``."""
    aw = apply_A(lam, vp, w)
    return math.sqrt(max(inner(aw, aw), 0.0)) / norm_H(w, k)


def battery_fields(grid: RadialGrid, k: int, scales: Sequence[float], seed: int = 12345) -> List[RadialField]:
    """Smooth, fast-decaying fields ``(r/s)^k exp(-(r/s)^2)(1 + eps sin(j ln r))``."""
    rng = np.random.default_rng(seed)
    r = grid.nodes
    fields = []
    for j, scale in enumerate(scales):
        eps = rng.uniform(-0.3, 0.3)
        x = r / scale
        with np.errstate(under="ignore"):
            values = x ** k * np.exp(-x * x) * (1.0 + eps * np.sin((j + 1) * np.log(r)))
        fields.append(RadialField(grid, values, k, None))
    return fields
