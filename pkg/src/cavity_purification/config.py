"""Run configuration: YAML file, ``--set`` overrides, strict schema, stable hash.

Schema (every key optional; defaults shown by ``cavity-purify --print-config``)::

    experiment: purify          # evolve | purify | bell-surface | validate-regimes | localization
    seed: 0
    output_dir: results
    units: null                 # or {kappa: <physical decay rate>}; rates are then divided
                                # by it and times multiplied by it
    n_max: null                 # Fock cutoff override
    effective:  {g_eff, omega_eff_drive, kappa, coupling_signs, delta_g}
    integrator: {dt, method, sample_stride, steady_tol, max_time, check_every, rtol, atol}
    protocol:   {rounds, mode, tau, detector: null | {efficiency, dark_count_rate,
                 observation_window}, detector_trials}
    evolve:     {mode: unitary | dissipative | decay, t_final, n_samples}
    bell_surface: {alpha_grid, N_grid, numeric: timed | steady | null}
    localization: {epsilon_grid, record: continuous | projective, fit_range}
    full_model: {Delta, DeltaP, g, g2, Omega, Omega1p, Omega2p, omega_e, omega_f, omega_c,
                 stark_compensation, horizon, n_samples, n_max}
"""
from __future__ import annotations

import copy
import hashlib
import json
from typing import Any, Mapping, Optional

import yaml

EXPERIMENTS = ("evolve", "purify", "bell-surface", "validate-regimes", "localization")

DEFAULTS: dict[str, Any] = {
    "experiment": "purify",
    "seed": 0,
    "output_dir": "results",
    "units": None,
    "n_max": None,
    "effective": {
        "g_eff": 1.0,
        "omega_eff_drive": 0.0,
        "kappa": 1.0,
        "coupling_signs": [1, 1],
        "delta_g": 0.0,
    },
    "integrator": {
        "dt": None,
        "method": "rk4",
        "sample_stride": 0,
        "steady_tol": 1e-8,
        "max_time": 50.0,
        "check_every": 1.0,
        "rtol": 1e-10,
        "atol": 1e-12,
    },
    "protocol": {
        "rounds": 3,
        "mode": "steady",
        "tau": None,
        "detector": None,
        "detector_trials": 10000,
    },
    "evolve": {"mode": "unitary", "t_final": 2.0, "n_samples": 21},
    "bell_surface": {
        "alpha_grid": [0.25, 0.5, 0.75, 1.0],
        "N_grid": [1, 2, 3, 4],
        "numeric": "timed",
    },
    "localization": {
        "epsilon_grid": [0.0, 0.02, 0.05, 0.1, 0.15, 0.2],
        "record": "continuous",
        "fit_range": [0.02, 0.2],
    },
    "full_model": {
        "Delta": 1.0,
        "DeltaP": 0.5,
        "g": 0.05,
        "g2": None,
        "Omega": 0.05,
        "Omega1p": 0.025,
        "Omega2p": 0.025,
        "omega_e": 0.0,
        "omega_f": 0.0,
        "omega_c": None,
        "stark_compensation": True,
        "horizon": 2.0,
        "n_samples": 21,
        "n_max": None,
    },
}

DETECTOR_DEFAULTS = {"efficiency": 1.0, "dark_count_rate": 0.0, "observation_window": 5.0}

# keys that do not change any computed number
_NON_SEMANTIC = ("output_dir",)

_RATE_KEYS = {
    "effective": ("g_eff", "omega_eff_drive", "kappa", "delta_g"),
}
_TIME_KEYS = {
    "integrator": ("dt", "max_time", "check_every"),
    "protocol": ("tau",),
    "evolve": ("t_final",),
}


class ConfigError(ValueError):
    """Invalid configuration file or override."""


def _merge(base: dict, update: Mapping, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, value in update.items():
        where = f"{path}{key}"
        if key not in base:
            raise ConfigError(f"unknown configuration key {where!r}")
        if key == "detector" and value is not None:
            if not isinstance(value, Mapping):
                raise ConfigError("protocol.detector must be a mapping or null")
            out[key] = _merge(DETECTOR_DEFAULTS, value, where + ".")
        elif key == "units" and value is not None:
            if not isinstance(value, Mapping) or set(value) != {"kappa"}:
                raise ConfigError("units must be null or {kappa: <rate>}")
            out[key] = dict(value)
        elif isinstance(base[key], dict):
            if not isinstance(value, Mapping):
                raise ConfigError(f"{where!r} must be a mapping")
            out[key] = _merge(base[key], value, where + ".")
        else:
            out[key] = value
    return out


def parse_override(item: str) -> dict:
    """``a.b.c=value`` to a nested mapping; the value is read as a YAML scalar or list."""
    if "=" not in item:
        raise ConfigError(f"override {item!r} is not key=value")
    key, raw = item.split("=", 1)
    try:
        value = yaml.safe_load(raw)
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse value in {item!r}: {exc}") from exc
    parts = key.strip().split(".")
    if not all(parts):
        raise ConfigError(f"bad key in {item!r}")
    out: dict = {}
    cur = out
    for p in parts[:-1]:
        cur = cur.setdefault(p, {})
    cur[parts[-1]] = value
    return out


def load_config(path: Optional[str] = None, overrides=(), **top) -> dict:
    """Defaults, then the YAML file, then ``--set`` overrides, then explicit keyword values."""
    cfg = copy.deepcopy(DEFAULTS)
    if path:
        try:
            with open(path, encoding="utf-8") as fh:
                data = yaml.safe_load(fh) or {}
        except OSError as exc:
            raise ConfigError(f"cannot read {path}: {exc}") from exc
        except yaml.YAMLError as exc:
            raise ConfigError(f"cannot parse {path}: {exc}") from exc
        if not isinstance(data, Mapping):
            raise ConfigError("configuration file must hold a mapping")
        cfg = _merge(cfg, data)
    for item in overrides:
        cfg = _merge(cfg, parse_override(item))
    cfg = _merge(cfg, {k: v for k, v in top.items() if v is not None})
    if cfg["experiment"] not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {cfg['experiment']!r}; choose from {EXPERIMENTS}")
    return cfg


def normalize_units(cfg: dict) -> dict:
    """Express every rate in units of the physical ``kappa`` given under ``units``."""
    if not cfg.get("units"):
        return cfg
    out = copy.deepcopy(cfg)
    k = float(out["units"]["kappa"])
    if not k > 0:
        raise ConfigError("units.kappa must be > 0")
    for block, keys in _RATE_KEYS.items():
        for key in keys:
            if out[block][key] is not None:
                out[block][key] = out[block][key] / k
    for block, keys in _TIME_KEYS.items():
        for key in keys:
            if out[block][key] is not None:
                out[block][key] = out[block][key] * k
    det = out["protocol"]["detector"]
    if det:
        det["dark_count_rate"] = det["dark_count_rate"] / k
        det["observation_window"] = det["observation_window"] * k
    out["units"] = None
    return out


def canonical(cfg: Mapping) -> str:
    return json.dumps(cfg, sort_keys=True, separators=(",", ":"), allow_nan=True)


def config_hash(cfg: Mapping) -> str:
    """SHA-256 over the unit-normalized semantic content (``output_dir`` excluded)."""
    sem = normalize_units(dict(cfg))
    sem = {k: v for k, v in sem.items() if k not in _NON_SEMANTIC}
    return hashlib.sha256(canonical(sem).encode("utf-8")).hexdigest()[:16]


def dump_config(cfg: Mapping) -> str:
    return yaml.safe_dump(dict(cfg), sort_keys=False, default_flow_style=None)
