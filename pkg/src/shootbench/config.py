"""Configuration document: schema, defaults, YAML round-trip, hashing.

Every physical parameter, bound, tolerance and benchmark knob lives here.
``load_config`` deep-merges a user YAML document over the defaults and
validates; ``dump_config`` emits the effective document so a run can be
reproduced from its output directory alone.
"""

from __future__ import annotations

import copy
import hashlib
import json
import math
from pathlib import Path

import yaml

from .errors import ConfigError

__all__ = ["default_config", "load_config", "merge_config", "dump_config",
           "config_hash", "validate_config"]


def default_config():
    """Nested-dict defaults for the normalized landing test problem."""
    return {
        "mesh": {
            "nodes": 15,
        },
        "rocket": {
            "alpha_mdt": 0.05,      # mass per unit thrust-time
            "beta_mdt": 0.01,       # idle mass depletion rate
            "g_I": [-1.0, 0.0, 0.0],
            "J_B": [[0.168, 0.0, 0.0], [0.0, 0.168, 0.0], [0.0, 0.0, 0.168]],
            "r_TB": [-0.25, 0.0, 0.0],   # thrust application point, body frame
            "r_cpB": [0.0, 0.0, 0.0],    # centre of pressure at mass centre
            "rho": 1.0,
            "S_A": 0.5,
            "C_A": [[0.5, 0.0, 0.0], [0.0, 0.5, 0.0], [0.0, 0.0, 0.5]],
        },
        "boundary": {
            "m_wet": 2.0,
            "r_init": [4.0, 2.0, 0.0],
            "v_init": [-1.0, 0.0, 0.0],
            "r_target": [0.0, 0.0, 0.0],
            "v_final": [-0.1, 0.0, 0.0],
        },
        "constraints": {
            "m_dry": 1.0,
            "gamma_gs_deg": 60.0,    # cone half-angle from the vertical axis
            "theta_max_deg": 90.0,
            "omega_max": 2.5,
            "T_min": 0.3,
            "T_max": 5.0,
            "delta_max_deg": 20.0,   # thrust pointing half-angle
            "v_max": 3.0,
            "s_min": 1.0,
            "s_max": 12.0,
            "norm_eps": 1e-12,
            "path_at_stages": False,  # also impose path rows at lifted stage points
        },
        "solver": {
            "feas_tol": 1e-8,
            "opt_tol": 1e-6,
            "max_iter": 3000,
            "newton_tol": 1e-12,
            "newton_cap": 50,
            "penalty_init": 10.0,
            "penalty_growth": 10.0,
            "inner_max_iter": 800,
            "lbfgs_memory": 50,
        },
        "adversarial": {
            "p": 2,
            "r": 20,
        },
        "divert": {
            "distances": [0.5, 1.0, 1.5, 2.0, 2.5, 3.0],
            # away from the initial lateral offset, so each retarget strictly
            # lengthens the crossrange leg
            "axis": [0.0, -1.0, 0.0],
        },
        "validation": {
            "ref_tol": 1e-12,
            "ol_threshold": 1e-2,
        },
        "drift_fixture": {
            "s": 6.0,
            "omega_scale": 0.9,      # fraction of omega_max used by the profile
        },
    }


def merge_config(base, override):
    """Recursive dict merge; override wins, unknown keys rejected later."""
    out = copy.deepcopy(base)
    for key, val in override.items():
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = merge_config(out[key], val)
        else:
            out[key] = copy.deepcopy(val)
    return out


def _require(cond, msg):
    if not cond:
        raise ConfigError(msg)


def validate_config(cfg):
    known = default_config()
    for section, body in cfg.items():
        _require(section in known, f"unknown config section {section!r}")
        if isinstance(known[section], dict):
            for key in body:
                _require(key in known[section],
                         f"unknown key {section}.{key}; schema keys: {sorted(known[section])}")
    mesh = cfg["mesh"]
    _require(int(mesh["nodes"]) >= 3, "mesh.nodes must be >= 3")
    con = cfg["constraints"]
    bound = cfg["boundary"]
    _require(0.0 < con["m_dry"] < bound["m_wet"], "need 0 < m_dry < m_wet")
    _require(0.0 <= con["T_min"] < con["T_max"], "need 0 <= T_min < T_max")
    _require(0.0 < con["s_min"] < con["s_max"], "need 0 < s_min < s_max")
    _require(0.0 < con["gamma_gs_deg"] < 90.0, "gamma_gs_deg in (0, 90)")
    _require(0.0 < con["theta_max_deg"] <= 180.0, "theta_max_deg in (0, 180]")
    _require(0.0 < con["delta_max_deg"] < 90.0, "delta_max_deg in (0, 90)")
    _require(con["omega_max"] > 0.0 and con["v_max"] > 0.0, "rate/speed bounds positive")
    adv = cfg["adversarial"]
    _require(adv["p"] in (1, 2, 3, 4), "adversarial.p must be in {1,2,3,4}")
    _require(adv["r"] >= 1, "adversarial.r must be >= 1")
    _require(cfg["solver"]["feas_tol"] > 0 and cfg["solver"]["opt_tol"] > 0,
             "solver tolerances must be positive")
    for name in ("alpha_mdt", "beta_mdt", "rho", "S_A"):
        _require(cfg["rocket"][name] >= 0.0, f"rocket.{name} must be >= 0")
    speed0 = math.sqrt(sum(v * v for v in bound["v_init"]))
    _require(speed0 <= con["v_max"], "initial speed exceeds v_max")
    return cfg


def load_config(path=None, overrides=None):
    """Defaults, optionally merged with a YAML file and a dict of overrides."""
    cfg = default_config()
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        with open(path) as fh:
            doc = yaml.safe_load(fh) or {}
        if not isinstance(doc, dict):
            raise ConfigError(f"config root must be a mapping, got {type(doc).__name__}")
        cfg = merge_config(cfg, doc)
    if overrides:
        cfg = merge_config(cfg, overrides)
    return validate_config(cfg)


def dump_config(cfg, path):
    with open(path, "w") as fh:
        yaml.safe_dump(cfg, fh, sort_keys=True, default_flow_style=None)


def config_hash(cfg):
    """Stable short hash of the effective config (key order independent)."""
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()[:12]
