import json
import logging
import os
from logging.handlers import RotatingFileHandler

import click
from flask import Flask, jsonify
from flask.cli import FlaskGroup

from config import DEFAULTS, SCENARIOS, Config, load_scenario, render_defaults
from export_service import to_jsonable
from lab_errors import LabError
from scenario_service import REPORT_FILE, run, stored_report

LOG_FORMAT = "%(asctime)s %(levelname)s [%(name)s] %(message)s"


def _configure_logging(app):
    log_dir = os.path.join(app.instance_path, "logs")
    os.makedirs(log_dir, exist_ok=True)
    log_file = os.path.join(log_dir, "bolhas.log")

    formatter = logging.Formatter(LOG_FORMAT)
    root = logging.getLogger()

    file_handler_exists = any(
        isinstance(h, RotatingFileHandler) and getattr(h, "baseFilename", None) == log_file
        for h in root.handlers
    )
    if not file_handler_exists:
        file_handler = RotatingFileHandler(log_file, maxBytes=2 * 1024 * 1024, backupCount=5, encoding="utf-8")
        file_handler.setFormatter(formatter)
        root.addHandler(file_handler)

    if app.debug or app.config.get("LOG_TO_CONSOLE"):
        console_exists = any(
            isinstance(h, logging.StreamHandler) and not isinstance(h, logging.FileHandler)
            for h in root.handlers
        )
        if not console_exists:
            console = logging.StreamHandler()
            console.setFormatter(formatter)
            root.addHandler(console)

    level = logging.DEBUG if app.debug else getattr(logging, app.config.get("LOG_LEVEL") or "INFO", logging.INFO)
    root.setLevel(level)
    app.logger.setLevel(level)


SCENARIO_OPTIONS = (
    click.option("--k", "k", type=int, default=None, help="Classe de equivariância (k >= 4)."),
    click.option("--config", "config_path", type=click.Path(dir_okay=False), default=None, help="Ficheiro de cenário."),
    click.option("--out", "out", type=click.Path(file_okay=False), default=None, help="Diretório de saída."),
    click.option("--seed", "seed", type=int, default=None, help="Semente dos campos aleatórios."),
)


def _scenario_options(func):
    for option in reversed(SCENARIO_OPTIONS):
        func = option(func)
    return func


def _execute(app, scenario, k, config_path, out, seed, **sections):
    overrides = {"run": {"k": k, "scenario": scenario, "output_dir": out, "seed": seed}}
    overrides.update(sections)
    try:
        config = load_scenario(config_path, overrides)
        report = run(config)
    except LabError as exc:
        app.logger.warning("Cenário %s falhou (%s/%s): %s", scenario, exc.module, exc.kind, exc)
        raise SystemExit(json.dumps(exc.to_dict(), ensure_ascii=False))
    except Exception as exc:
        app.logger.exception("Erro inesperado no cenário %s: %s", scenario, exc)
        raise SystemExit(json.dumps({"ok": False, "error": str(exc), "kind": "unexpected"}, ensure_ascii=False))

    summary = {
        "ok": report.passed,
        "scenario": scenario,
        "k": report.k,
        "report": os.path.join(config.output_dir, scenario, REPORT_FILE),
        "failed": [check.name for check in report.checks if not check.passed],
    }
    click.echo(json.dumps(summary, ensure_ascii=False))
    if not report.passed:
        raise SystemExit(2)


def create_app():
    app = Flask(__name__, instance_relative_config=True)
    app.config.from_object(Config)

    os.makedirs(app.instance_path, exist_ok=True)
    _configure_logging(app)

    @app.get("/health")
    def healthcheck():
        return jsonify({"status": "ok", "scenarios": list(SCENARIOS)})

    @app.get("/defaults")
    def defaults():
        return jsonify(to_jsonable(DEFAULTS))

    @app.get("/reports/<scenario>")
    def report(scenario):
        if scenario not in SCENARIOS:
            return jsonify({"ok": False, "error": f"cenário desconhecido: {scenario}"}), 404
        payload = stored_report(app.config["OUTPUT_DIR"], scenario)
        if payload is None:
            return jsonify({"ok": False, "error": f"sem relatório para {scenario}"}), 404
        return jsonify(payload)

    @app.cli.command("profiles")
    @_scenario_options
    @click.option("--n", "n", type=int, default=None, help="Nós da malha dos perfis.")
    def profiles_command(k, config_path, out, seed, n):
        """Constantes e perfis de correção."""
        _execute(app, "profiles", k, config_path, out, seed, profile_grid={"n": n})

    @app.cli.command("ansatz")
    @_scenario_options
    @click.option("--lam0", type=float, default=None)
    @click.option("--mu0", type=float, default=None)
    @click.option("--a0", type=float, default=None)
    @click.option("--b0", type=float, default=None)
    def ansatz_command(k, config_path, out, seed, lam0, mu0, a0, b0):
        """Ansatz de duas bolhas, resíduo e leis de escala."""
        _execute(app, "ansatz", k, config_path, out, seed, evolve=_start_section(lam0, mu0, a0, b0))

    @app.cli.command("evolve")
    @_scenario_options
    @click.option("--lam0", type=float, default=None)
    @click.option("--mu0", type=float, default=None)
    @click.option("--a0", type=float, default=None)
    @click.option("--b0", type=float, default=None)
    @click.option("--rmax", type=float, default=None)
    @click.option("--n", "n", type=int, default=None)
    @click.option("--dt", type=float, default=None)
    @click.option("--tend", type=float, default=None)
    @click.option("--decades", type=float, default=None)
    def evolve_command(k, config_path, out, seed, lam0, mu0, a0, b0, rmax, n, dt, tend, decades):
        """Evolução do ansatz com registo de estados."""
        section = _start_section(lam0, mu0, a0, b0)
        section.update({"r_max": rmax, "n": n, "dt": dt, "tend": tend, "decades": decades})
        _execute(app, "evolve", k, config_path, out, seed, evolve=section)

    @app.cli.command("modulate")
    @_scenario_options
    @click.option("--evolve-dir", type=click.Path(file_okay=False), default=None, help="Saída de um 'evolve'.")
    @click.option("--c0", type=float, default=None)
    def modulate_command(k, config_path, out, seed, evolve_dir, c0):
        """Extração de parâmetros de modulação e monitor de b."""
        _execute(app, "modulate", k, config_path, out, seed, modulate={"evolve_dir": evolve_dir, "c0": c0})

    @app.cli.command("reduced-ode")
    @_scenario_options
    @click.option("--t0", type=float, default=None)
    @click.option("--t1", type=float, default=None)
    @click.option("--dt", type=float, default=None)
    def reduced_ode_command(k, config_path, out, seed, t0, t1, dt):
        """Sistema reduzido de modulação."""
        _execute(app, "reduced_ode", k, config_path, out, seed, reduced_ode={"t0": t0, "t1": t1, "dt": dt})

    @app.cli.command("verify")
    @_scenario_options
    @click.option("--profile-n", type=int, default=None, help="Nós da malha dos perfis.")
    @click.option("--workers", type=int, default=None)
    @click.option("--pde/--no-pde", "include_pde", default=None, help="Inclui a corrida EDP (lenta).")
    def verify_command(k, config_path, out, seed, profile_n, workers, include_pde):
        """Bateria completa de verificação."""
        _execute(
            app,
            "verify_all",
            k,
            config_path,
            out,
            seed,
            profile_grid={"n": profile_n},
            verify={"workers": workers, "include_pde": include_pde},
        )

    @app.cli.command("defaults")
    def defaults_command():
        """Mostra a configuração embutida."""
        click.echo(render_defaults())

    return app


def _start_section(lam0, mu0, a0, b0):
    section = {"lam0": lam0, "mu0": mu0, "a0": a0, "b0": b0}
    if any(value is not None for value in (mu0, a0, b0)):
        section["formal"] = False
    return section


cli = FlaskGroup(create_app=create_app)


if __name__ == "__main__":
    cli()
