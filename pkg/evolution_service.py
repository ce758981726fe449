"""Leapfrog evolution of the k-equivariant wave-map equation.

The semi-discrete system is Hamiltonian for the discrete energy of
``radial_core.energy``: the acceleration is ``-(G u)/w - f(u)/r^2`` with the
gradient form ``G`` of the grid, and the last node is pinned.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, List, Optional

import numpy as np

from ansatz_service import ModParams, phi
from lab_errors import InvalidArgument, NumericalFailure, require_k
from profile_service import ProfileSet
from radial_core import (
    RadialField,
    RadialGrid,
    StatePair,
    energy,
    make_grid,
    nonlinearity,
    norm_H,
    norm_L2,
)

MODULE = "evolver"
OUTER_BCS = ("dirichlet_zero", "dirichlet_frozen")
MAX_CFL = 0.5
DEFAULT_CFL = 0.3
# fraction of the leapfrog limit 2/omega_max actually used
STABILITY_MARGIN = 0.9
BLOWUP_FACTOR = 1e3
# per-cell jump of u beyond which the profile is no longer resolved
MAX_CELL_JUMP = 0.5

DEFAULT_ANSATZ_N = 16384
DEFAULT_ANSATZ_RMAX = 4.0
# nodes across the smallest inner scale of an ansatz run
POINTS_PER_SCALE = 80

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class EvolveConfig:
    t_end: float
    dt: Optional[float] = None
    cfl: float = DEFAULT_CFL
    record_every: int = 100
    outer_bc: str = "dirichlet_zero"
    reflection_free: bool = False
    keep_states: bool = True
    support_radius: Optional[float] = None

    def __post_init__(self):
        if not (self.t_end >= 0 and math.isfinite(self.t_end)):
            raise InvalidArgument("t_end must be finite and >= 0", module=MODULE)
        if not 0 < self.cfl <= MAX_CFL:
            raise InvalidArgument(f"cfl must lie in (0, {MAX_CFL}]", module=MODULE)
        if int(self.record_every) != self.record_every or self.record_every < 1:
            raise InvalidArgument("record_every must be a positive integer", module=MODULE)
        if self.outer_bc not in OUTER_BCS:
            raise InvalidArgument(f"unknown outer_bc {self.outer_bc!r}", module=MODULE)
        if self.dt is not None and not self.dt > 0:
            raise InvalidArgument("dt must be positive", module=MODULE)

    def step_for(self, grid: RadialGrid, k: int) -> float:
        """Largest admissible step: ``cfl * h`` capped by the leapfrog limit of the grid."""
        courant = self.cfl * grid.min_spacing
        spectral = STABILITY_MARGIN * stable_step(grid, k)
        limit = min(courant, spectral)
        if self.dt is None:
            if spectral < courant:
                logger.info("Passo limitado pela estabilidade: %.3e < cfl*h=%.3e", spectral, courant)
            return limit
        if self.dt > limit * (1 + 1e-12):
            raise InvalidArgument(
                f"CFL: dt={self.dt:.3e} excede o limite {limit:.3e} (cfl*h={courant:.3e}, estabilidade={spectral:.3e})",
                module=MODULE,
                dt=self.dt,
            )
        return self.dt

    def check_reflection(self, grid: RadialGrid) -> None:
        if self.reflection_free and self.support_radius is not None:
            if self.t_end >= grid.r_max - self.support_radius:
                raise InvalidArgument(
                    "t_end must stay below r_max - support radius for reflection-free runs",
                    module=MODULE,
                )


@dataclass
class Trajectory:
    k: int
    times: List[float] = field(default_factory=list)
    states: List[StatePair] = field(default_factory=list)
    energies: List[float] = field(default_factory=list)
    h_norms: List[float] = field(default_factory=list)
    dot_norms: List[float] = field(default_factory=list)
    status: str = "completed"
    steps: int = 0
    dt: float = 0.0

    def record(self, t: float, state: StatePair, keep: bool = True) -> None:
        e = energy(state, self.k)
        if not math.isfinite(e):
            raise NumericalFailure("non-finite energy along trajectory", module=MODULE)
        self.times.append(float(t))
        # without keep only the first and the latest state are held
        if keep or len(self.states) < 2:
            self.states.append(state)
        else:
            self.states[-1] = state
        self.energies.append(e)
        self.h_norms.append(norm_H(state.u, self.k))
        self.dot_norms.append(norm_L2(state.udot))

    @property
    def final(self) -> StatePair:
        return self.states[-1]

    @property
    def energy_drift(self) -> float:
        e0 = self.energies[0]
        if e0 == 0:
            return max(abs(e) for e in self.energies)
        return max(abs(e - e0) for e in self.energies) / abs(e0)

    def series_rows(self) -> List[dict]:
        return [
            {"t": t, "energy": e, "Hnorm": h, "L2dotnorm": d}
            for t, e, h, d in zip(self.times, self.energies, self.h_norms, self.dot_norms)
        ]


def max_frequency(grid: RadialGrid, k: int) -> float:
    """Upper bound on the frequencies of the linearized leapfrog system.

    Since ``f'(u) <= k^2`` the linearization is dominated by the H form, so
    the Gershgorin bound of ``W^-1/2 H W^-1/2`` bounds ``omega_max^2``. On
    uniform grids the origin node sets it: ``omega_max h`` is about 5.3 for k=4.
    """
    scale = 1.0 / np.sqrt(grid.weights)
    rows = abs(grid.h_form(k)) @ scale
    return float(np.sqrt(np.max(rows * scale)))


def stable_step(grid: RadialGrid, k: int) -> float:
    return 2.0 / max_frequency(grid, k)


def _acceleration(u: np.ndarray, grid: RadialGrid, k: int) -> np.ndarray:
    acc = -(grid.gradient_form(k) @ u) / grid.weights - nonlinearity(u, k) * grid.inv_r2
    acc[-1] = 0.0
    return acc


def rhs(s: StatePair, k: int) -> StatePair:
    """``(udot, Lap u - f(u)/r^2)`` with the last node pinned."""
    k = require_k(k, module=MODULE)
    grid = s.grid
    with np.errstate(over="raise", invalid="raise"):
        try:
            acc = _acceleration(s.u.values, grid, k)
        except FloatingPointError as exc:
            raise NumericalFailure(f"rhs overflow: {exc}", module=MODULE) from exc
    if not np.all(np.isfinite(acc)):
        raise NumericalFailure("non-finite rhs", module=MODULE)
    velocity = s.udot.values.copy()
    velocity[-1] = 0.0
    return StatePair(RadialField(grid, velocity), RadialField(grid, acc))


Observer = Callable[[float, StatePair], None]


def evolve(s0: StatePair, cfg: EvolveConfig, k: int, observer: Optional[Observer] = None) -> Trajectory:
    """Kick-drift-kick leapfrog; ``observer(t, state)`` sees every recorded state."""
    k = require_k(k, module=MODULE)
    grid = s0.grid
    dt_max = cfg.step_for(grid, k)
    cfg.check_reflection(grid)
    e0 = energy(s0, k)
    if not math.isfinite(e0):
        raise InvalidArgument("initial energy is not finite", module=MODULE)

    n_steps = int(math.ceil(cfg.t_end / dt_max - 1e-9)) if cfg.t_end > 0 else 0
    dt = cfg.t_end / n_steps if n_steps else dt_max

    u = s0.u.values.copy()
    v = s0.udot.values.copy()
    if cfg.outer_bc == "dirichlet_zero":
        u[-1] = 0.0
    v[-1] = 0.0

    traj = Trajectory(k=k, dt=dt)
    first = StatePair.from_arrays(grid, u, v)
    traj.record(0.0, first)
    if observer is not None:
        observer(0.0, first)
    reference = max(float(np.sqrt(np.dot(grid.weights, v * v))), 1e-3 * math.sqrt(e0 / math.pi))
    logger.info(
        "Evolução k=%s: n=%s r_max=%.3g dt=%.3e passos=%s E0=%.9g",
        k,
        grid.n,
        grid.r_max,
        dt,
        n_steps,
        e0,
    )

    acc = _acceleration(u, grid, k)
    with np.errstate(over="raise", invalid="raise"):
        try:
            for step in range(1, n_steps + 1):
                v += 0.5 * dt * acc
                u += dt * v
                acc = _acceleration(u, grid, k)
                v += 0.5 * dt * acc
                traj.steps = step

                last = step == n_steps
                if step % cfg.record_every == 0 or last:
                    state = StatePair.from_arrays(grid, u, v)
                    traj.record(step * dt, state, keep=cfg.keep_states)
                    if observer is not None:
                        observer(step * dt, state)
                    logger.info(
                        "t=%.5f E=%.12g |u_t|=%.4e",
                        step * dt,
                        traj.energies[-1],
                        traj.dot_norms[-1],
                    )
                    if traj.dot_norms[-1] > BLOWUP_FACTOR * reference or _under_resolved(u):
                        traj.status = "concentration-detected"
                        logger.warning("Concentração detectada em t=%.5f", step * dt)
                        break
        except FloatingPointError as exc:
            raise NumericalFailure(f"overflow at step {traj.steps}: {exc}", module=MODULE) from exc

    logger.info(
        "Evolução terminada (%s): t=%.5f drift=%.3e",
        traj.status,
        traj.times[-1],
        traj.energy_drift,
    )
    return traj


def _under_resolved(u: np.ndarray) -> bool:
    return bool(np.max(np.abs(np.diff(u))) > MAX_CELL_JUMP)


# ---------- ansatz runs ----------


def ansatz_grid(n: int = DEFAULT_ANSATZ_N, r_max: float = DEFAULT_ANSATZ_RMAX) -> RadialGrid:
    return make_grid(r_max, n, "uniform")


def resolved_scale(grid: RadialGrid) -> float:
    """Smallest inner scale the grid follows with ``POINTS_PER_SCALE`` nodes per unit of scale."""
    return POINTS_PER_SCALE * grid.min_spacing


def evolve_ansatz(
    params0: ModParams,
    ps: ProfileSet,
    cfg: EvolveConfig,
    grid: Optional[RadialGrid] = None,
    observer: Optional[Observer] = None,
) -> Trajectory:
    """Evolve the two-bubble ansatz started from ``params0``; the outer boundary keeps its initial value."""
    grid = grid or ansatz_grid()
    s0 = phi(params0, ps, grid)
    if params0.lam < resolved_scale(grid):
        logger.warning(
            "lam0=%.3e abaixo de %s*h=%.3e; evolução sub-resolvida",
            params0.lam,
            POINTS_PER_SCALE,
            resolved_scale(grid),
        )
    if cfg.outer_bc != "dirichlet_frozen":
        cfg = replace(cfg, outer_bc="dirichlet_frozen")
    return evolve(s0, cfg, ps.k, observer)


# ---------- sub-threshold data ----------


def bump(grid: RadialGrid, amplitude: float, radius: float, k: int) -> StatePair:
    """Compactly supported ``amplitude * (r/radius)^k (1 - (r/radius)^2)^4`` on ``r < radius``."""
    x = grid.nodes / radius
    values = np.where(x < 1.0, amplitude * x ** k * (1.0 - x * x) ** 4, 0.0)
    return StatePair.from_arrays(grid, values)


def scattering_check(k: int, amplitude: float = 0.2, radius: float = 1.0, r_max: float = 12.0, n: int = 2400, t_end: Optional[float] = None) -> dict:
    """Sup-norm history of a small bump; after ``t = 2 radius`` it should decay."""
    grid = make_grid(r_max, n)
    s0 = bump(grid, amplitude, radius, k)
    t_end = t_end if t_end is not None else min(r_max - radius - 1.0, 8.0 * radius)
    traj = evolve(s0, EvolveConfig(t_end=t_end, record_every=20), k)
    times = np.array(traj.times)
    sups = np.array([float(np.max(np.abs(s.u.values))) for s in traj.states])
    late = sups[times >= 2.0 * radius]
    # 1% slack for the oscillation of the outgoing profile
    monotone = bool(late.size < 2 or np.all(late[1:] <= 1.01 * late[:-1]))
    ratio = float(late[-1] / late[0]) if late.size and late[0] > 0 else 0.0
    logger.info("Dispersão k=%s: sup|u| final/inicial tardio=%.3f monótono=%s", k, ratio, monotone)
    return {"monotone_decay": monotone, "decay_ratio": ratio, "energy_drift": traj.energy_drift}

