"""Scenario runner: one entry point per scenario, artifacts under ``<output_dir>/<scenario>``."""
from __future__ import annotations

import logging
import os
import time
from typing import Callable, Dict, Optional

from ansatz_service import ModParams, phi, static_residual
from config import ScenarioConfig
from export_service import (
    ANSATZ_HEADER,
    CHECK_HEADER,
    MODTRACK_HEADER,
    ODE_HEADER,
    PROFILE_HEADER,
    SCALING_HEADER,
    SERIES_HEADER,
    STATE_HEADER,
    STATES_FILE,
    ansatz_rows,
    check_rows,
    load_states,
    profile_rows,
    save_states,
    scaling_rows,
    snapshot_indices,
    state_rows,
    to_jsonable,
)
from lab_errors import InvalidArgument, LabError
from modulation_service import formal_params, track_states
from profile_service import ProfileSet
from report_store import ReportStore
from verify_service import (
    VerifyContext,
    VerifyReport,
    concentration_from_settings,
    pde_records,
    run_groups,
    upper_check,
    verify_all,
)

MODULE = "cli_harness"
REPORT_FILE = "report.json"
# CSV tables of whole grids are thinned to about this many rows
CSV_ROWS = 2048

logger = logging.getLogger(__name__)


def _stride(n: int) -> int:
    return max(1, n // CSV_ROWS)


def _built_profiles(ctx: VerifyContext) -> Optional[ProfileSet]:
    # groups already report the construction failure; artifacts are skipped
    try:
        return ctx.ps
    except LabError:
        return None


def _start_params(ctx: VerifyContext) -> ModParams:
    ev = ctx.settings.section("evolve")
    if ev["formal"]:
        return formal_params(ctx.ps.constants, ev["lam0"])
    return ModParams(mu=ev["mu0"], lam=ev["lam0"], a=ev["a0"], b=ev["b0"])


def _profiles(ctx: VerifyContext, store: ReportStore, subdir: str) -> VerifyReport:
    report = run_groups(ctx, ("constants", "profiles"), "profiles")
    ps = _built_profiles(ctx)
    if ps is None:
        return report
    ctx.results["constants"] = ps.constants.to_dict()
    ctx.results["residuals"] = dict(ps.residuals)
    store.write_csv(subdir, "profiles.csv", PROFILE_HEADER, profile_rows(ps, _stride(ps.grid.n)))
    store.write_json(subdir, "constants.json", to_jsonable(ps.constants.to_dict()))
    return report


def _ansatz(ctx: VerifyContext, store: ReportStore, subdir: str) -> VerifyReport:
    report = run_groups(ctx, ("energy", "ansatz"), "ansatz")
    ps = _built_profiles(ctx)
    if ps is None:
        return report
    params = _start_params(ctx)
    state = phi(params, ps)
    residual = static_residual(params, ps)
    ctx.results["ansatz_params"] = params.to_dict()
    store.write_csv(subdir, "ansatz.csv", ANSATZ_HEADER, ansatz_rows(state, residual, _stride(ps.grid.n)))
    for key, filename in (("bracket1_scaling", "bracket1_scaling.csv"), ("bracket3_scaling", "bracket3_scaling.csv")):
        if key in ctx.results:
            store.write_csv(subdir, filename, SCALING_HEADER, scaling_rows(ctx.results[key]))
    return report


def _evolve(ctx: VerifyContext, store: ReportStore, subdir: str) -> VerifyReport:
    report = VerifyReport(scenario="evolve", k=ctx.k)
    run = concentration_from_settings(ctx, keep_states=True, track=False)
    traj = run.trajectory
    report.extend([upper_check("pde.energy_drift", traj.energy_drift, 1e-4)])
    ctx.results["evolve"] = {
        "status": traj.status,
        "steps": traj.steps,
        "dt": traj.dt,
        "n": run.grid.n,
        "t0": run.t0,
        "params0": run.params0.to_dict(),
        "energy_drift": traj.energy_drift,
    }
    store.write_csv(subdir, "series.csv", SERIES_HEADER, traj.series_rows())
    stride = _stride(run.grid.n)
    for i in snapshot_indices(len(traj.times), ctx.settings.get("evolve", "snapshots")):
        store.write_csv(subdir, f"t_{i}.csv", STATE_HEADER, state_rows(traj.states[i], stride))
    ev = ctx.settings.section("evolve")
    guess_mu, guess_sigma = (1.0, ev["lam0"]) if ev["formal"] else (run.params0.mu, run.params0.nu)
    meta = {
        "t0": run.t0,
        "lam0": run.params0.lam,
        "mu": run.params0.mu,
        "a": run.params0.a,
        "b": run.params0.b,
        "energy_drift": traj.energy_drift,
        "concentrated": float(traj.status != "completed"),
        "guess_mu": guess_mu,
        "guess_sigma": guess_sigma,
    }
    save_states(store.target(subdir, STATES_FILE), traj, meta)
    return report


def _modulate(ctx: VerifyContext, store: ReportStore, subdir: str) -> VerifyReport:
    report = VerifyReport(scenario="modulate", k=ctx.k)
    evolve_dir = ctx.settings.get("modulate", "evolve_dir")
    if evolve_dir:
        path = os.path.join(evolve_dir, STATES_FILE)
        if not os.path.exists(path):
            raise InvalidArgument(f"{path} não encontrado", module=MODULE)
        k, samples, meta = load_states(path)
        if k != ctx.k:
            raise InvalidArgument(f"estados gravados com k={k}, pedido k={ctx.k}", module=MODULE)
        params0 = ModParams(mu=meta["mu"], lam=meta["lam0"], a=meta["a"], b=meta["b"])
        t0 = meta["t0"]
        logger.info("Modulação sobre %s estados de %s", len(samples), evolve_dir)
        track = track_states(samples, ctx.ps, ctx.vp, (meta["guess_mu"], meta["guess_sigma"]), t_offset=t0)
        drift = meta["energy_drift"]
        status = "concentration-detected" if meta["concentrated"] else "completed"
    else:
        run = concentration_from_settings(ctx)
        track, params0, t0 = run.track, run.params0, run.t0
        drift, status = run.trajectory.energy_drift, run.trajectory.status
    report.extend(pde_records(ctx, track, params0, t0, drift, status))
    store.write_csv(subdir, "modtrack.csv", MODTRACK_HEADER, track.rows())
    bmonitor = ctx.results["pde"]["bmonitor"]
    store.write_json(
        subdir,
        "bprime_report.json",
        to_jsonable({name: bmonitor[name] for name in ("fraction_satisfied", "measured_c0", "measured_c1")}),
    )
    return report


def _reduced_ode(ctx: VerifyContext, store: ReportStore, subdir: str) -> VerifyReport:
    report = run_groups(ctx, ("reduced_ode",), "reduced_ode")
    traj = ctx.artifacts.get("reduced_ode")
    if traj is not None:
        store.write_csv(subdir, "reduced_ode.csv", ODE_HEADER, traj.rows())
    return report


def _verify_all(ctx: VerifyContext, store: ReportStore, subdir: str) -> VerifyReport:
    report = verify_all(ctx.k, ctx.settings)
    store.write_csv(subdir, "checks.csv", CHECK_HEADER, check_rows([check.to_dict() for check in report.checks]))
    return report


RUNNERS: Dict[str, Callable[[VerifyContext, ReportStore, str], VerifyReport]] = {
    "profiles": _profiles,
    "ansatz": _ansatz,
    "evolve": _evolve,
    "modulate": _modulate,
    "reduced_ode": _reduced_ode,
    "verify_all": _verify_all,
}


def run(config: ScenarioConfig) -> VerifyReport:
    """Execute ``config.scenario``, write its artifacts and ``report.json``."""
    scenario = config.scenario
    store = ReportStore(config.output_dir, logger=logger)
    ctx = VerifyContext(k=config.k, settings=config)
    started = time.perf_counter()
    logger.info("Cenário %s k=%s iniciado (saída: %s)", scenario, config.k, store.path(scenario, ""))
    report = RUNNERS[scenario](ctx, store, scenario)
    if not report.results:
        report.results = ctx.results
    payload = report.to_dict()
    payload["config"] = config.to_dict()
    store.write_json(scenario, REPORT_FILE, to_jsonable(payload))
    logger.info(
        "Cenário %s k=%s terminado em %.1fs: %s",
        scenario,
        config.k,
        time.perf_counter() - started,
        "ok" if report.passed else "FALHOU",
    )
    return report


def stored_report(output_dir: str, scenario: str):
    """The last ``report.json`` written for ``scenario``, or None."""
    return ReportStore(output_dir, logger=logger).read_json(scenario, REPORT_FILE)
