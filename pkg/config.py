import configparser
import os
from dataclasses import dataclass, field
from typing import Any, Dict, Mapping, Optional

from dotenv import load_dotenv

from lab_errors import InvalidArgument, require_k

PROJECT_ROOT = os.path.abspath(os.path.dirname(__file__))
REPORTS_DIR = os.path.join(PROJECT_ROOT, "instance", "reports")


def app_env() -> str:
    return (os.environ.get("APP_ENV") or os.environ.get("FLASK_ENV") or "development").strip().lower()


def _load_env_by_app_env(root: str = PROJECT_ROOT) -> Optional[str]:
    """Load ``.env.<APP_ENV>``, else ``.env``, from ``root`` without touching variables already set."""
    for name in (f".env.{app_env()}", ".env"):
        env_path = os.path.join(root, name)
        if os.path.exists(env_path):
            load_dotenv(env_path, override=False)
            return env_path
    return None


_load_env_by_app_env()


def _get_int(value, default):
    try:
        return int(value)
    except (TypeError, ValueError):
        return default


def _get_float(value, default):
    try:
        return float(value)
    except (TypeError, ValueError):
        return default


def _get_bool(value, default):
    if value is None:
        return default
    normalized = str(value).strip().lower()
    if normalized in {"1", "true", "yes", "on", "sim"}:
        return True
    if normalized in {"0", "false", "no", "off", "nao", "não"}:
        return False
    return default


class Config:
    SECRET_KEY = os.environ.get("SECRET_KEY", "dev")
    APP_ENV = app_env()

    OUTPUT_DIR = os.environ.get("BOLHAS_OUTPUT_DIR") or REPORTS_DIR
    LOG_LEVEL = (os.environ.get("LOG_LEVEL") or "INFO").strip().upper()
    LOG_TO_CONSOLE = _get_bool(os.environ.get("LOG_TO_CONSOLE"), False)
    WORKERS = max(1, _get_int(os.environ.get("BOLHAS_WORKERS"), 1))
    PROFILE_N = _get_int(os.environ.get("BOLHAS_PROFILE_N"), 131072)
    SEED = _get_int(os.environ.get("BOLHAS_SEED"), 12345)


# ---------- scenario files ----------

SCENARIOS = ("profiles", "ansatz", "evolve", "modulate", "reduced_ode", "verify_all")

DEFAULTS: Dict[str, Dict[str, Any]] = {
    "run": {
        "k": 4,
        "scenario": "verify_all",
        "output_dir": Config.OUTPUT_DIR,
        "seed": Config.SEED,
    },
    "profile_grid": {
        "n": Config.PROFILE_N,
        "r_max": 1.0e4,
    },
    "evolve": {
        # 0 picks the smallest power of two resolving the final inner scale
        "n": 0,
        "r_max": 4.0,
        "lam0": 0.05,
        "decades": 0.1,
        "cfl": 0.3,
        "record_dt": 0.1,
        "snapshots": 4,
        # formal = true starts on the formal trajectory at lam0; mu0/a0/b0 apply otherwise
        "formal": True,
        "mu0": 1.0,
        "a0": 0.0,
        "b0": 0.0,
        # 0 derives the value from decades / cfl
        "tend": 0.0,
        "dt": 0.0,
    },
    "modulate": {
        "c0": 0.5,
        "evolve_dir": "",
    },
    "virial": {
        "c": 0.05,
        "R": 10.0,
    },
    "reduced_ode": {
        "t0": 50.0,
        "t1": 200.0,
        "dt": 0.01,
    },
    "verify": {
        "include_pde": True,
        "workers": Config.WORKERS,
    },
}


def _coerce(section: str, key: str, raw: Any) -> Any:
    default = DEFAULTS[section][key]
    if not isinstance(raw, str):
        return type(default)(raw)
    text = raw.strip()
    try:
        if isinstance(default, bool):
            value = _get_bool(text, None)
            if value is None:
                raise ValueError(text)
            return value
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
    except ValueError as exc:
        raise InvalidArgument(f"[{section}] {key}: valor inválido {text!r}", module="cli_harness") from exc
    return text


@dataclass(frozen=True)
class ScenarioConfig:
    k: int
    scenario: str
    output_dir: str
    seed: int
    sections: Dict[str, Dict[str, Any]] = field(default_factory=dict)

    def __post_init__(self):
        require_k(self.k, module="cli_harness")
        if self.scenario not in SCENARIOS:
            raise InvalidArgument(f"cenário desconhecido {self.scenario!r}", module="cli_harness")

    def get(self, section: str, key: str) -> Any:
        return self.sections[section][key]

    def section(self, name: str) -> Dict[str, Any]:
        return dict(self.sections[name])

    def to_dict(self) -> Dict[str, Dict[str, Any]]:
        out = {name: dict(values) for name, values in self.sections.items()}
        out["run"] = {"k": self.k, "scenario": self.scenario, "output_dir": self.output_dir, "seed": self.seed}
        return out


def read_scenario_file(path: str) -> Dict[str, Dict[str, Any]]:
    parser = configparser.ConfigParser()
    parser.optionxform = str
    if not parser.read(path, encoding="utf-8"):
        raise InvalidArgument(f"ficheiro de configuração não encontrado: {path}", module="cli_harness")
    values: Dict[str, Dict[str, Any]] = {}
    for section in parser.sections():
        if section not in DEFAULTS:
            raise InvalidArgument(f"secção desconhecida [{section}]", module="cli_harness")
        for key, raw in parser.items(section):
            if key not in DEFAULTS[section]:
                raise InvalidArgument(f"chave desconhecida [{section}] {key}", module="cli_harness")
            values.setdefault(section, {})[key] = _coerce(section, key, raw)
    return values


def load_scenario(
    path: Optional[str] = None,
    overrides: Optional[Mapping[str, Mapping[str, Any]]] = None,
) -> ScenarioConfig:
    """Embedded defaults, then the file at ``path``, then ``overrides`` (CLI flags)."""
    merged = {name: dict(values) for name, values in DEFAULTS.items()}
    layers = [read_scenario_file(path)] if path else []
    if overrides:
        layers.append(overrides)
    for layer in layers:
        for section, values in layer.items():
            if section not in DEFAULTS:
                raise InvalidArgument(f"secção desconhecida [{section}]", module="cli_harness")
            for key, value in values.items():
                if value is None:
                    continue
                if key not in DEFAULTS[section]:
                    raise InvalidArgument(f"chave desconhecida [{section}] {key}", module="cli_harness")
                merged[section][key] = _coerce(section, key, value)
    run = merged.pop("run")
    return ScenarioConfig(
        k=int(run["k"]),
        scenario=run["scenario"],
        output_dir=run["output_dir"],
        seed=int(run["seed"]),
        sections=merged,
    )


def render_defaults() -> str:
    """Embedded defaults as a scenario file."""
    lines = []
    for section, values in DEFAULTS.items():
        lines.append(f"[{section}]")
        for key, value in values.items():
            if isinstance(value, bool):
                value = "true" if value else "false"
            lines.append(f"{key} = {value}")
        lines.append("")
    return "\n".join(lines)
