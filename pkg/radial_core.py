"""Radial grids, quadrature, norms and operators on (0, r_max].

Functions are sampled on the nodes of a ``RadialGrid``; integrals are taken
against ``r dr`` with trapezoid weights. Below the first node a field is
continued as ``c r^k`` when the equivariance class is known, otherwise by a
ghost zero at ``r = 0``.

Second-order operators are assembled from a symmetric stiffness form, so
``<L0 f|g> = <f|L0 g>`` and ``||f||_H^2 = <L0 f|f>`` hold to round-off.
``Lambda0`` and the virial operators use the skew part of the weighted
first-derivative form and are antisymmetric to round-off.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Optional, Sequence, Union

import numpy as np
from scipy import sparse
from scipy.interpolate import PchipInterpolator

from lab_errors import IncompatibleGrids, InvalidArgument, NumericalFailure, ResolutionError

MODULE = "radial_core"
GRADINGS = ("uniform", "geometric")
OPERATOR_KINDS = ("laplacian", "Lambda", "Lambda0", "L0", "L_about_U", "potential_P")
CONVENTIONS = ("H", "L2")

logger = logging.getLogger(__name__)

Number = Union[int, float]


# ---------- grid ----------


@dataclass(frozen=True, eq=False)
class RadialGrid:
    nodes: np.ndarray
    weights: np.ndarray
    r_max: float
    n: int
    grading: str = "uniform"
    ratio: Optional[float] = None

    @property
    def r_min(self) -> float:
        return float(self.nodes[0])

    @cached_property
    def spacing(self) -> np.ndarray:
        return np.diff(self.nodes)

    @cached_property
    def min_spacing(self) -> float:
        return float(min(self.nodes[0], self.spacing.min()))

    @cached_property
    def inv_r2(self) -> np.ndarray:
        return 1.0 / (self.nodes * self.nodes)

    @cached_property
    def stiffness(self) -> sparse.csr_matrix:
        """Symmetric form of ``int f_r g_r r dr`` over [r_min, r_max] (edge midpoint rule)."""
        r = self.nodes
        h = self.spacing
        c = 0.5 * (r[:-1] + r[1:]) / h
        main = np.zeros(self.n)
        main[:-1] += c
        main[1:] += c
        return sparse.diags([-c, main, -c], [-1, 0, 1], format="csr")

    @cached_property
    def _forms(self) -> dict:
        return {}

    def gradient_form(self, k: Optional[int] = None) -> sparse.csr_matrix:
        """Stiffness plus the origin closure.

        With ``k`` the field is continued as ``f0 (r/r0)^k`` below the first
        node, which contributes ``k f0^2`` to the H form and the flux
        ``r f_r = k f`` at r0. Without ``k`` a ghost zero sits at r=0.
        """
        key = ("gradient", k)
        if key not in self._forms:
            closure = 0.5 if k is None else float(k)
            self._forms[key] = (self.stiffness + sparse.diags(_unit(self.n, 0, closure))).tocsr()
        return self._forms[key]

    def laplacian_matrix(self, k: Optional[int] = None) -> sparse.csr_matrix:
        key = ("laplacian", k)
        if key not in self._forms:
            self._forms[key] = (sparse.diags(-1.0 / self.weights) @ self.gradient_form(k)).tocsr()
        return self._forms[key]

    @cached_property
    def d1(self) -> sparse.csr_matrix:
        """Second-order first derivative; centered inside, one-sided at r_max."""
        r = self.nodes
        n = self.n
        hm = np.empty(n)
        hm[0] = r[0]
        hm[1:] = self.spacing
        hp = np.empty(n)
        hp[:-1] = self.spacing
        hp[-1] = hm[-1]
        lower = -hp / (hm * (hm + hp))
        main = (hp - hm) / (hm * hp)
        upper = hm / (hp * (hm + hp))
        mat = sparse.diags([lower[1:], main, upper[:-1]], [-1, 0, 1], format="lil")
        h1 = r[-1] - r[-2]
        h2 = r[-2] - r[-3]
        mat[n - 1, n - 1] = (2.0 * h1 + h2) / (h1 * (h1 + h2))
        mat[n - 1, n - 2] = -(h1 + h2) / (h1 * h2)
        mat[n - 1, n - 3] = h1 / (h2 * (h1 + h2))
        return mat.tocsr()

    @cached_property
    def lambda0_matrix(self) -> sparse.csr_matrix:
        return self.skew_operator(self.nodes)

    def h_form(self, k: int) -> sparse.csr_matrix:
        """Gram matrix of the H inner product: gradient form plus ``k^2 w / r^2``."""
        key = ("h", k)
        if key not in self._forms:
            self._forms[key] = (self.gradient_form(k) + sparse.diags(self.weights * (k * k) * self.inv_r2)).tocsr()
        return self._forms[key]

    def skew_operator(self, coefficient: np.ndarray) -> sparse.csr_matrix:
        """Antisymmetric discretization of ``a d_r + (a' + a/r)/2``."""
        form = sparse.diags(self.weights * coefficient) @ self.d1
        skew = 0.5 * (form - form.T)
        return (sparse.diags(1.0 / self.weights) @ skew).tocsr()

    def same_as(self, other: "RadialGrid") -> bool:
        if self is other:
            return True
        return self.n == other.n and np.array_equal(self.nodes, other.nodes)


def _unit(n: int, index: int, value: float) -> np.ndarray:
    out = np.zeros(n)
    out[index] = value
    return out


def make_grid(
    r_max: Number,
    n: int,
    grading: str = "uniform",
    ratio: Optional[float] = None,
    r_min: Optional[float] = None,
) -> RadialGrid:
    """Build a grid on (0, r_max] with ``nodes[-1] == r_max``.

    Uniform grids use spacing ``r_max / n`` starting at the first spacing.
    Geometric grids use a constant node ratio; without ``ratio`` it follows
    from ``r_min`` (default ``r_max * min(1/(10 n), 1e-4)``).
    """
    try:
        r_max = float(r_max)
    except (TypeError, ValueError):
        raise InvalidArgument(f"r_max inválido: {r_max!r}", module=MODULE) from None
    if not math.isfinite(r_max) or r_max <= 0:
        raise InvalidArgument("r_max must be positive", module=MODULE)
    if int(n) != n or n < 16:
        raise InvalidArgument("n must be an integer >= 16", module=MODULE)
    n = int(n)
    grading = (grading or "uniform").strip().lower()
    if grading not in GRADINGS:
        raise InvalidArgument(f"unknown grading {grading!r}", module=MODULE)

    if grading == "uniform":
        if ratio is not None or r_min is not None:
            raise InvalidArgument("uniform grading takes no ratio/r_min", module=MODULE)
        h = r_max / n
        nodes = h * np.arange(1, n + 1, dtype=float)
        nodes[-1] = r_max
    else:
        if ratio is not None and r_min is not None:
            raise InvalidArgument("give ratio or r_min, not both", module=MODULE)
        if ratio is None:
            if r_min is None:
                r_min = r_max * min(1.0 / (10.0 * n), 1e-4)
            if not 0 < r_min < r_max:
                raise InvalidArgument("r_min must lie in (0, r_max)", module=MODULE)
            ratio = (r_max / r_min) ** (1.0 / (n - 1))
        ratio = float(ratio)
        if not ratio > 1.0:
            raise InvalidArgument("geometric ratio must exceed 1", module=MODULE)
        powers = np.arange(n - 1, -1, -1, dtype=float)
        nodes = r_max * np.exp(-powers * math.log(ratio))
        nodes[-1] = r_max
        if np.count_nonzero(nodes <= r_max / 100.0) < n / 4:
            raise InvalidArgument(
                "geometric grading leaves fewer than n/4 nodes in (0, r_max/100]",
                module=MODULE,
                ratio=ratio,
            )

    if nodes[0] <= 0 or np.any(np.diff(nodes) <= 0):
        raise InvalidArgument("grid nodes must be positive and increasing", module=MODULE)

    weights = np.empty(n)
    weights[1:-1] = 0.5 * (nodes[2:] - nodes[:-2]) * nodes[1:-1]
    weights[0] = 0.5 * (nodes[1] - nodes[0]) * nodes[0]
    weights[-1] = 0.5 * (nodes[-1] - nodes[-2]) * nodes[-1]
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return RadialGrid(
        nodes=nodes,
        weights=weights,
        r_max=r_max,
        n=n,
        grading=grading,
        ratio=ratio if grading == "geometric" else None,
    )


# ---------- fields ----------


@dataclass(frozen=True, eq=False)
class RadialField:
    grid: RadialGrid
    values: np.ndarray
    origin_exponent: Optional[int] = None
    tail_exponent: Optional[int] = None

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.shape != (self.grid.n,):
            raise InvalidArgument(
                f"field has {values.size} values for a grid of {self.grid.n} nodes",
                module=MODULE,
            )
        if not np.all(np.isfinite(values)):
            raise NumericalFailure("non-finite values in radial field", module=MODULE)
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def r(self) -> np.ndarray:
        return self.grid.nodes

    def with_values(self, values: np.ndarray, **meta) -> "RadialField":
        return RadialField(
            self.grid,
            values,
            meta.get("origin_exponent", self.origin_exponent),
            meta.get("tail_exponent", self.tail_exponent),
        )

    def __add__(self, other: "RadialField") -> "RadialField":
        _require_same_grid(self, other)
        return RadialField(self.grid, self.values + other.values)

    def __sub__(self, other: "RadialField") -> "RadialField":
        _require_same_grid(self, other)
        return RadialField(self.grid, self.values - other.values)

    def __mul__(self, scalar: Number) -> "RadialField":
        return self.with_values(self.values * float(scalar))

    __rmul__ = __mul__

    def __neg__(self) -> "RadialField":
        return self.with_values(-self.values)

    @cached_property
    def _pchip(self) -> PchipInterpolator:
        return PchipInterpolator(np.log(self.grid.nodes), self.values, extrapolate=False)


def zeros(grid: RadialGrid) -> RadialField:
    return RadialField(grid, np.zeros(grid.n))


@dataclass(frozen=True, eq=False)
class StatePair:
    u: RadialField
    udot: RadialField

    def __post_init__(self):
        _require_same_grid(self.u, self.udot)

    @property
    def grid(self) -> RadialGrid:
        return self.u.grid

    @classmethod
    def from_arrays(cls, grid: RadialGrid, u: np.ndarray, udot: Optional[np.ndarray] = None) -> "StatePair":
        udot = np.zeros(grid.n) if udot is None else udot
        return cls(RadialField(grid, u), RadialField(grid, udot))

    def __sub__(self, other: "StatePair") -> "StatePair":
        return StatePair(self.u - other.u, self.udot - other.udot)

    def __add__(self, other: "StatePair") -> "StatePair":
        return StatePair(self.u + other.u, self.udot + other.udot)


@dataclass(frozen=True)
class OperatorSample:
    kind: str
    k: Optional[int] = None
    lam: float = 1.0
    U: Optional[RadialField] = None

    def __post_init__(self):
        if self.kind not in OPERATOR_KINDS:
            raise InvalidArgument(f"unknown operator kind {self.kind!r}", module=MODULE)
        if self.kind in ("L0", "L_about_U", "potential_P") and self.k is None:
            raise InvalidArgument(f"operator {self.kind} requires k", module=MODULE)
        if self.kind == "L_about_U" and self.U is None:
            raise InvalidArgument("operator L_about_U requires the background U", module=MODULE)
        if not self.lam > 0:
            raise InvalidArgument("operator scale must be positive", module=MODULE)


def _require_same_grid(f: RadialField, g: RadialField) -> None:
    if not f.grid.same_as(g.grid):
        raise IncompatibleGrids("fields live on different grids", module=MODULE)


def _finite(values: np.ndarray, what: str) -> np.ndarray:
    if not np.all(np.isfinite(values)):
        raise NumericalFailure(f"non-finite values in {what}", module=MODULE)
    return values


# ---------- nonlinearity and potentials ----------


def nonlinearity(u: np.ndarray, k: int) -> np.ndarray:
    """``f(u) = (k^2/2) sin 2u``; the equation carries ``f(u)/r^2``."""
    return 0.5 * k * k * np.sin(2.0 * u)


def nonlinearity_prime(u: np.ndarray, k: int) -> np.ndarray:
    return k * k * np.cos(2.0 * u)


def potential_P(r: np.ndarray, k: int, lam: float = 1.0) -> np.ndarray:
    """``P_lam(r) = lam^-2 P(r/lam)`` with ``P = -4k^2 r^(2k-2)/(1+r^(2k))^2``."""
    x = np.asarray(r, dtype=float) / lam
    # r^(2k-2)/(1+r^2k)^2 == 1/(r^2 (x^-k + x^k)^2), finite for any x > 0
    with np.errstate(over="ignore"):
        xk = x ** k
        denom = x * x * (1.0 / xk + xk) ** 2
    return -4.0 * k * k / denom / (lam * lam)


# ---------- quadrature and norms ----------


def inner(f: RadialField, g: RadialField) -> float:
    _require_same_grid(f, g)
    return float(np.dot(f.grid.weights, f.values * g.values))


def norm_L2(f: RadialField) -> float:
    return math.sqrt(max(inner(f, f), 0.0))


def h_quadratic(values: np.ndarray, grid: RadialGrid, k: int) -> float:
    return float(values @ (grid.h_form(k) @ values))


def norm_H(f: RadialField, k: int) -> float:
    """``(int (f_r^2 + k^2 f^2/r^2) r dr)^(1/2)``."""
    value = h_quadratic(f.values, f.grid, k)
    if not math.isfinite(value):
        raise NumericalFailure("non-finite H norm", module=MODULE)
    return math.sqrt(max(value, 0.0))


def norm_H2(f: RadialField, k: int) -> float:
    return norm_L2(apply_operator(OperatorSample("L0", k=k), f))


def norm_energy(s: StatePair, k: int) -> float:
    """Norm of the energy space: ``||u||_H^2 + ||udot||_L2^2``."""
    return math.sqrt(norm_H(s.u, k) ** 2 + norm_L2(s.udot) ** 2)


def norm_LamInvH(s: StatePair, k: int) -> float:
    lam_u = apply_operator(OperatorSample("Lambda"), s.u)
    lam0_udot = apply_operator(OperatorSample("Lambda0"), s.udot)
    return math.sqrt(norm_H(lam_u, k) ** 2 + norm_L2(lam0_udot) ** 2)


def energy(s: StatePair, k: int) -> float:
    """``2 pi int (udot^2 + u_r^2 + k^2 sin^2 u / r^2) r dr / 2``."""
    grid = s.grid
    u = s.u.values
    kinetic = float(np.dot(grid.weights, s.udot.values ** 2))
    gradient = float(u @ (grid.gradient_form(k) @ u))
    angular = k * k * float(np.dot(grid.weights * grid.inv_r2, np.sin(u) ** 2))
    total = math.pi * (kinetic + gradient + angular)
    if not math.isfinite(total):
        raise NumericalFailure("non-finite energy", module=MODULE)
    return total


# ---------- operators ----------


def apply_operator(op: OperatorSample, f: RadialField) -> RadialField:
    grid = f.grid
    values = f.values
    with np.errstate(over="raise", invalid="raise"):
        try:
            if op.kind == "laplacian":
                out = grid.laplacian_matrix(op.k) @ values
            elif op.kind == "Lambda":
                out = grid.nodes * (grid.d1 @ values)
            elif op.kind == "Lambda0":
                out = grid.lambda0_matrix @ values
            elif op.kind == "potential_P":
                out = potential_P(grid.nodes, op.k, op.lam) * values
            else:
                _check_origin_resolved(f)
                out = (grid.h_form(op.k) @ values) / grid.weights
                if op.kind == "L_about_U":
                    _require_same_grid(f, op.U)
                    # cos 2U - 1 = -2 sin^2 U
                    out = out - 2.0 * op.k * op.k * np.sin(op.U.values) ** 2 * grid.inv_r2 * values
        except FloatingPointError as exc:
            raise NumericalFailure(f"{op.kind} stencil overflow: {exc}", module=MODULE) from exc
    return RadialField(grid, _finite(out, op.kind))


def _check_origin_resolved(f: RadialField) -> None:
    peak = float(np.max(np.abs(f.values))) if f.grid.n else 0.0
    if peak > 0 and abs(f.values[0]) > 1e-3 * peak:
        raise ResolutionError(
            "field does not vanish at the innermost node; grid too coarse near r=0",
            module=MODULE,
            r_min=f.grid.r_min,
        )


# ---------- interpolation and scaling ----------


def evaluate(f: RadialField, r: np.ndarray) -> np.ndarray:
    """Monotone cubic interpolation in log r; endpoint exponents outside the grid."""
    r = np.asarray(r, dtype=float)
    nodes = f.grid.nodes
    out = np.empty_like(r)
    inside = (r >= nodes[0]) & (r <= nodes[-1])
    if np.any(inside):
        out[inside] = f._pchip(np.log(r[inside]))
    below = r < nodes[0]
    if np.any(below):
        p = 1 if f.origin_exponent is None else f.origin_exponent
        out[below] = f.values[0] * (r[below] / nodes[0]) ** p
    above = r > nodes[-1]
    if np.any(above):
        q = 0 if f.tail_exponent is None else f.tail_exponent
        out[above] = f.values[-1] * (r[above] / nodes[-1]) ** q
    return out


def _half_mass_radius(f: RadialField) -> float:
    mass = np.cumsum(f.grid.weights * f.values * f.values)
    if mass[-1] <= 0:
        return float(f.grid.nodes[-1])
    return float(f.grid.nodes[np.searchsorted(mass, 0.5 * mass[-1])])


def rescale(
    f: RadialField,
    lam: Number,
    convention: str = "H",
    grid: Optional[RadialGrid] = None,
) -> RadialField:
    """``w(r/lam)`` (H) or ``w(r/lam)/lam`` (L2), optionally resampled on ``grid``."""
    if convention not in CONVENTIONS:
        raise InvalidArgument(f"unknown scaling convention {convention!r}", module=MODULE)
    lam = float(lam)
    if not lam > 0 or not math.isfinite(lam):
        raise InvalidArgument("scale must be positive", module=MODULE)
    target = grid or f.grid
    if lam == 1.0 and target.same_as(f.grid):
        return f
    if lam * _half_mass_radius(f) < target.nodes[1]:
        raise ResolutionError(
            f"rescaled field at scale {lam:g} falls below the grid resolution",
            module=MODULE,
            scale=lam,
        )
    values = evaluate(f, target.nodes / lam)
    if convention == "L2":
        values = values / lam
    return RadialField(target, values, f.origin_exponent, f.tail_exponent)


# ---------- diagnostics ----------


def loglog_slope(f: RadialField, end: str = "origin", decades: float = 1.0) -> float:
    """Least-squares slope of log|f| against log r over the first/last decade."""
    r = f.grid.nodes
    if end == "origin":
        mask = r <= r[0] * 10.0 ** decades
    elif end == "tail":
        mask = r >= r[-1] / 10.0 ** decades
    else:
        raise InvalidArgument(f"unknown end {end!r}", module=MODULE)
    vals = np.abs(f.values[mask])
    keep = vals > 0
    if np.count_nonzero(keep) < 3:
        raise NumericalFailure("not enough nonzero samples for a log-log fit", module=MODULE)
    slope, _ = np.polyfit(np.log(r[mask][keep]), np.log(vals[keep]), 1)
    return float(slope)


def fit_power(xs: Sequence[float], ys: Sequence[float]) -> float:
    """Slope of a log-log least-squares line through (xs, ys)."""
    xs = np.asarray(xs, dtype=float)
    ys = np.abs(np.asarray(ys, dtype=float))
    if xs.size < 2 or np.any(xs <= 0) or np.any(ys <= 0):
        raise NumericalFailure("power fit needs positive samples", module=MODULE)
    slope, _ = np.polyfit(np.log(xs), np.log(ys), 1)
    return float(slope)
