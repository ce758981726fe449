from __future__ import annotations

import math
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from evolution_service import Trajectory
from lab_errors import InvalidArgument
from profile_service import ProfileSet
from radial_core import RadialField, RadialGrid, StatePair, make_grid

PROFILE_HEADER = ("r", "Q", "LamQ", "A", "B", "Btilde")
SERIES_HEADER = ("t", "energy", "Hnorm", "L2dotnorm")
STATE_HEADER = ("r", "u", "udot")
ANSATZ_HEADER = ("r", "u", "udot", "residual")
MODTRACK_HEADER = ("t", "mu", "sigma", "a", "b_slaved", "gH", "gdotL2", "b_func", "ortho1", "ortho2")
SCALING_HEADER = ("nu", "norm", "fitted_slope")
ODE_HEADER = ("t", "lam", "mu", "a", "b")
CHECK_HEADER = ("name", "target", "measured", "tolerance", "pass")

STATES_FILE = "states.npz"


def to_jsonable(value: Any) -> Any:
    """numpy scalars/arrays to plain types; non-finite floats to None."""
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return [to_jsonable(v) for v in value.tolist()]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if math.isfinite(value) else None
    return value


def profile_rows(ps: ProfileSet, stride: int = 1) -> List[Dict[str, float]]:
    grid = ps.grid
    rows = []
    for i in range(0, grid.n, max(1, int(stride))):
        rows.append(
            {
                "r": grid.nodes[i],
                "Q": ps.Q.values[i],
                "LamQ": ps.LamQ.values[i],
                "A": ps.A.values[i],
                "B": ps.B.values[i],
                "Btilde": ps.Btilde.values[i],
            }
        )
    return rows


def state_rows(state: StatePair, stride: int = 1) -> List[Dict[str, float]]:
    r = state.grid.nodes
    u = state.u.values
    v = state.udot.values
    return [{"r": r[i], "u": u[i], "udot": v[i]} for i in range(0, r.size, max(1, int(stride)))]


def ansatz_rows(state: StatePair, residual: RadialField, stride: int = 1) -> List[Dict[str, float]]:
    rows = state_rows(state, stride)
    res = residual.values
    for row, i in zip(rows, range(0, res.size, max(1, int(stride)))):
        row["residual"] = res[i]
    return rows


def snapshot_indices(count: int, wanted: int) -> List[int]:
    """``wanted`` evenly spaced indices into ``count`` records, first and last included."""
    if count <= 0 or wanted <= 0:
        return []
    if wanted >= count:
        return list(range(count))
    return sorted({int(round(x)) for x in np.linspace(0, count - 1, wanted)})


def scaling_rows(rows: Iterable[Dict[str, float]]) -> List[Dict[str, float]]:
    return [{name: row[name] for name in SCALING_HEADER} for row in rows]


# ---------- evolver output directories ----------


def save_states(path: str, traj: Trajectory, meta: Optional[Dict[str, float]] = None) -> None:
    """Recorded states of an evolution with the grid that carries them."""
    if not traj.states or len(traj.states) != len(traj.times):
        raise InvalidArgument("trajectory does not hold every recorded state", module="cli_harness")
    grid = traj.states[0].grid
    meta = meta or {}
    np.savez_compressed(
        path,
        times=np.asarray(traj.times),
        u=np.stack([s.u.values for s in traj.states]),
        udot=np.stack([s.udot.values for s in traj.states]),
        r_max=grid.r_max,
        n=grid.n,
        grading=grid.grading,
        ratio=grid.ratio if grid.ratio is not None else np.nan,
        k=traj.k,
        meta_keys=np.array(sorted(meta)),
        meta_values=np.array([float(meta[key]) for key in sorted(meta)]),
    )


def load_states(path: str) -> Tuple[int, List[Tuple[float, StatePair]], Dict[str, float]]:
    with np.load(path, allow_pickle=False) as data:
        grading = str(data["grading"])
        ratio = float(data["ratio"])
        grid: RadialGrid = make_grid(
            float(data["r_max"]),
            int(data["n"]),
            grading,
            ratio=None if math.isnan(ratio) else ratio,
        )
        times = data["times"]
        u = data["u"]
        udot = data["udot"]
        samples = [
            (float(t), StatePair.from_arrays(grid, u[i].copy(), udot[i].copy()))
            for i, t in enumerate(times)
        ]
        meta = dict(zip((str(key) for key in data["meta_keys"]), (float(v) for v in data["meta_values"])))
        return int(data["k"]), samples, meta


def check_rows(checks: Sequence[Dict[str, Any]]) -> List[Dict[str, Any]]:
    return [{name: check.get(name) for name in CHECK_HEADER} for check in checks]
