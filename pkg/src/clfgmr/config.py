"""Flat run configuration: defaults < JSON file < CLFGMR_* environment < flags.

Keys are dotted (``learn.k``); the environment name of a key is
``CLFGMR_`` + the key upper-cased with dots turned into underscores, e.g.
``CLFGMR_CONTROL_RHO0``. List-valued keys accept JSON lists or comma
separated strings.
"""
from __future__ import annotations

import json
import os
from pathlib import Path

from .control import ControllerConfig
from .errors import ClfgmrError
from .learn import LearnConfig


class ConfigError(ClfgmrError, ValueError):
    exit_code = 2


def _floats(v):
    if isinstance(v, str):
        v = [p for p in v.split(",") if p.strip()]
    return [float(p) for p in v]


def _strs(v):
    if isinstance(v, str):
        v = v.split(",")
    return [str(p).strip() for p in v if str(p).strip()]


def _opt_float(v):
    return None if v is None or v == "" or v == "auto" else float(v)


def _opt_str(v):
    return None if v is None or v == "" else str(v)


def _bool(v):
    if isinstance(v, str):
        if v.lower() in ("1", "true", "yes", "on"):
            return True
        if v.lower() in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {v!r}")
    return bool(v)


_L = LearnConfig()
_C = ControllerConfig()

# key -> (parser, default)
SCHEMA = {
    "dataset.shape": (str, "Sine"),
    "dataset.path": (_opt_str, None),
    "dataset.m": (int, 3),
    "dataset.n": (int, 200),
    "dataset.jitter": (float, 0.02),
    "dataset.seed": (int, 0),
    "dataset.noise": (float, 0.0),
    "dataset.noise_seed": (int, 0),
    "dataset.snap_tol": (float, 1e-9),
    "learn.k": (int, _L.k),
    "learn.l": (int, _L.l),
    "learn.max_iter": (int, _L.max_iter),
    "learn.j_threshold": (float, _L.j_threshold),
    "learn.f0_weight": (float, _L.f0_weight),
    "learn.gradient": (str, _L.gradient),
    "learn.fd_step": (float, _L.fd_step),
    "learn.mu_spread": (float, _L.mu_spread),
    "learn.em_max_iter": (int, _L.em_max_iter),
    "learn.seed": (int, _L.seed),
    "control.variant": (str, _C.variant),
    "control.rho0": (float, _C.rho0),
    "control.kappa0": (float, _C.kappa0),
    "control.kappa": (float, _C.kappa),
    "sim.dt": (_opt_float, None),
    "sim.max_steps": (int, 10000),
    "sim.noise": (float, 0.0),
    "sim.hold": (float, 0.01),
    "sim.seed": (int, 0),
    "sim.x0": (_strs, []),
    "sim.svg": (_bool, False),
    "eval.shapes": (_strs, ["C", "G", "W", "Sine", "S"]),
    "eval.variants": (_strs, ["sontag", "classk", "off"]),
    "eval.noise_levels": (_floats, [0.0, 0.01, 0.05]),
    "eval.rho0s": (_floats, [1.0]),
    "eval.seeds": (int, 5),
    "eval.model_dir": (_opt_str, None),
    "output.dir": (str, "out"),
}


def env_name(key: str) -> str:
    return "CLFGMR_" + key.upper().replace(".", "_")


def _coerce(key, value):
    if key not in SCHEMA:
        raise ConfigError(f"unknown config key {key!r}")
    parser, _ = SCHEMA[key]
    try:
        return parser(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad value for {key}: {value!r} ({exc})") from None


def read_config_file(path) -> dict:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc})") from None
    if not isinstance(doc, dict) or any(isinstance(v, dict) for v in doc.values()):
        raise ConfigError(f"{path}: expected a flat object of dotted keys")
    return doc


def resolve(file_values: dict | None = None, flags: dict | None = None, environ=None) -> dict:
    """Merge the layers and validate; returns a plain dict with every key set."""
    environ = os.environ if environ is None else environ
    cfg = {key: default for key, (_, default) in SCHEMA.items()}
    for key, value in (file_values or {}).items():
        cfg[key] = _coerce(key, value)
    for key in SCHEMA:
        if env_name(key) in environ:
            cfg[key] = _coerce(key, environ[env_name(key)])
    for key, value in (flags or {}).items():
        if value is not None:
            cfg[key] = _coerce(key, value)
    # build the typed configs once so bad values fail before any stage runs
    learn_config(cfg)
    controller_config(cfg)
    if cfg["sim.dt"] is not None and not cfg["sim.dt"] > 0:
        raise ConfigError("sim.dt must be positive")
    if cfg["sim.max_steps"] < 1:
        raise ConfigError("sim.max_steps must be >= 1")
    if not 0 <= cfg["dataset.noise"] <= 1:
        raise ConfigError("dataset.noise must lie in [0, 1]")
    return cfg


def learn_config(cfg: dict) -> LearnConfig:
    try:
        return LearnConfig(k=cfg["learn.k"], l=cfg["learn.l"], max_iter=cfg["learn.max_iter"],
                           j_threshold=cfg["learn.j_threshold"], f0_weight=cfg["learn.f0_weight"],
                           fd_step=cfg["learn.fd_step"], gradient=cfg["learn.gradient"],
                           em_max_iter=cfg["learn.em_max_iter"], mu_spread=cfg["learn.mu_spread"],
                           seed=cfg["learn.seed"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def controller_config(cfg: dict, **override) -> ControllerConfig:
    values = {"variant": cfg["control.variant"], "rho0": cfg["control.rho0"],
              "kappa0": cfg["control.kappa0"], "kappa": cfg["control.kappa"]}
    values.update(override)
    try:
        return ControllerConfig(**values)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def write_snapshot(cfg: dict, path) -> None:
    Path(path).write_text(json.dumps(cfg, indent=1, sort_keys=True) + "\n")
