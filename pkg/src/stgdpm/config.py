"""Run configuration: a single JSON document covering every module.

Unknown keys are rejected so typos fail loudly. Values may be overridden
through environment variables of the form STGDPM_<SECTION>_<KEY> (e.g.
STGDPM_GRAPH_TAU=25). A short hash of the canonical document is embedded in
every artifact a run produces; commands refuse to mix artifacts carrying
different hashes.
"""

from __future__ import annotations

import copy
import hashlib
import json
import os

DEFAULT_CONFIG = {
    "seed": 0,
    "data": {
        "dt": 10.0,
        "gap_max": 120.0,
        "v_max": 0.3,
        "t_obs": 10,
        "t_pred": 15,
        "stride": None,
        "column_map": {"mmsi": "mmsi", "timestamp": "timestamp", "lat": "lat", "lon": "lon"},
    },
    "graph": {"tau": 50.0},
    "schedule": {"k": 100, "beta_1": 1e-4, "beta_k": 0.05},
    "denoiser": {
        "c": 32,
        "levels": 4,
        "blocks_per_level": 2,
        "disable_unet": False,
        "disable_dgc": False,
        "disable_residual": False,
    },
    "training": {
        "batch_size": 256,
        "epochs": 100,
        "lr_init": 0.05,
        "lr_peak": 0.2,
        "lr_final": None,
        "warmup_frac": 0.3,
        "max_steps": None,
    },
    "evaluation": {"n_samples": 20, "joint_best": False},
    "synth": {
        "family": "crossing",
        "n_scenes": 8,
        "n_vessels": 2,
        "noise": 0.02,
        "speed": 0.1,
        "turn_rate": 0.1,
        "crossing_offset": 2.0,
    },
}


class ConfigError(Exception):
    pass


def _merge(base, override, path=""):
    out = copy.deepcopy(base)
    for key, val in override.items():
        if key not in base:
            raise ConfigError(f"unknown config key: {path}{key}")
        if isinstance(base[key], dict) and key != "column_map":
            if not isinstance(val, dict):
                raise ConfigError(f"config section {path}{key} must be an object")
            out[key] = _merge(base[key], val, path=f"{path}{key}.")
        else:
            out[key] = val
    return out


def _apply_env_overrides(cfg, environ=None):
    environ = os.environ if environ is None else environ
    for name, raw in environ.items():
        if not name.startswith("STGDPM_"):
            continue
        parts = name[len("STGDPM_") :].lower().split("_", 1)
        if len(parts) != 2:
            continue
        section, key = parts
        if section not in cfg or not isinstance(cfg[section], dict):
            raise ConfigError(f"unknown config section in {name}")
        if key not in cfg[section]:
            raise ConfigError(f"unknown config key in {name}")
        try:
            val = json.loads(raw)
        except json.JSONDecodeError:
            val = raw
        cfg[section][key] = val
    return cfg


def load_config(path=None, overrides=None, environ=None):
    """Load and validate a run config, applying file, dict, then env layers."""
    cfg = copy.deepcopy(DEFAULT_CONFIG)
    if path is not None:
        with open(path) as fh:
            try:
                doc = json.load(fh)
            except json.JSONDecodeError as e:
                raise ConfigError(f"invalid JSON in {path}: {e}") from e
        if not isinstance(doc, dict):
            raise ConfigError(f"config root must be an object in {path}")
        cfg = _merge(cfg, doc)
    if overrides:
        cfg = _merge(cfg, overrides)
    return _apply_env_overrides(cfg, environ=environ)


def config_hash(cfg) -> str:
    """Stable 12-hex-digit digest of the canonical config document."""
    canon = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()[:12]
