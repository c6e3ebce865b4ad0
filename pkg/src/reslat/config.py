"""Run configuration: a YAML file with nested sections, validated on load.

Example::

    system:
      name: model
      params: {mu: ["1"]}
    orbit:
      energy: 0.0
    family:
      window: [-0.6, 0.6]
      node_count: 16
    floquet:
      K: 10
    quantize:
      h: [0.01]
      eps0: 0.5
      delta: 0.5

A ``user`` system names importable callables::

    system:
      name: user
      n: 2
      module: mypkg.hamiltonian
      callbacks: {eval0: H, grad0: dH, hess0: d2H, eval1: H1}
"""

from __future__ import annotations

import copy
import importlib
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .dynamics import SYSTEMS, build_system, parse_mu
from .errors import ConfigError, SystemSpecError

SECTIONS = ("system", "orbit", "family", "floquet", "quantize", "output")

DEFAULTS = {
    "orbit": {"energy": None, "guess": None, "tol": 1e-11, "int_tol": 1e-12,
              "t_min": None, "t_max": 100.0, "segments": 8},
    "family": {"window": None, "node_count": 16},
    "floquet": {"K": 10, "tol_res": 1e-8, "tol_ell": 1e-6, "cz_grid": 64,
                "require_partial_hyperbolicity": True},
    "quantize": {"h": None, "eps0": None, "delta": None, "newton_tol": 1e-11,
                 "max_iter": 40, "rho_c": 0.5},
    "output": {"dir": "reslat-out", "plot": True},
}

# (section, key, lower, upper) for numeric range checks
RANGES = [
    ("orbit", "tol", 1e-14, 1e-4),
    ("orbit", "int_tol", 1e-14, 1e-4),
    ("orbit", "t_min", 0.0, 1e6),
    ("orbit", "t_max", 1e-6, 1e6),
    ("orbit", "segments", 1, 64),
    ("family", "node_count", 8, 64),
    ("floquet", "K", 1, 20),
    ("floquet", "tol_res", 1e-15, 1e-2),
    ("floquet", "tol_ell", 1e-12, 1e-2),
    ("floquet", "cz_grid", 8, 4096),
    ("quantize", "eps0", 0.0, 1e6),
    ("quantize", "newton_tol", 1e-15, 1e-2),
    ("quantize", "max_iter", 1, 1000),
    ("quantize", "rho_c", 1e-3, 1.0),
]


INTEGER_KEYS = ("segments", "node_count", "K", "cz_grid", "max_iter")


def _number(value, where):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        try:
            return float(value)
        except (TypeError, ValueError):
            raise ConfigError(f"{where} must be a number, got {value!r}") from None
    return value


@dataclass
class RunConfig:
    system: dict
    orbit: dict
    family: dict
    floquet: dict
    quantize: dict
    output: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, raw, need_quantize=True, need_window=None):
        """Validate and normalise a raw mapping.

        Raises
        ------
        ConfigError
            Unknown sections or keys, missing required values, values out of
            their documented ranges.
        """
        if not isinstance(raw, dict):
            raise ConfigError("configuration must be a mapping")
        unknown = set(raw) - set(SECTIONS)
        if unknown:
            raise ConfigError(f"unknown config sections: {sorted(unknown)}")
        if "system" not in raw or not isinstance(raw["system"], dict):
            raise ConfigError("missing 'system' section")
        out = {"system": _system_section(raw["system"])}
        for sec, defaults in DEFAULTS.items():
            given = raw.get(sec) or {}
            if not isinstance(given, dict):
                raise ConfigError(f"section '{sec}' must be a mapping")
            extra = set(given) - set(defaults)
            if extra:
                raise ConfigError(f"unknown keys in '{sec}': {sorted(extra)}")
            merged = copy.deepcopy(defaults)
            merged.update(copy.deepcopy(given))
            out[sec] = merged
        _validate(out, need_quantize, need_quantize if need_window is None else need_window)
        return cls(**out)

    def to_dict(self):
        return {"system": copy.deepcopy(self.system), "orbit": dict(self.orbit),
                "family": dict(self.family), "floquet": dict(self.floquet),
                "quantize": dict(self.quantize), "output": dict(self.output)}

    def to_yaml(self):
        return yaml.safe_dump(self.to_dict(), sort_keys=True, default_flow_style=None)

    def build_system(self):
        sec = self.system
        name = sec["name"]
        if name != "user":
            return build_system(name, **sec.get("params", {}))
        try:
            mod = importlib.import_module(sec["module"])
        except ImportError as exc:
            raise ConfigError(f"cannot import user module {sec['module']!r}: {exc}") from exc
        callbacks = {}
        for key, attr in sec["callbacks"].items():
            if not hasattr(mod, attr):
                raise ConfigError(f"user module has no attribute {attr!r}")
            callbacks[key] = getattr(mod, attr)
        callbacks["params"] = sec.get("params", {})
        return build_system("user", callbacks=callbacks, n=sec["n"],
                            angle_periods=tuple(sec.get("angle_periods", ())))


def _system_section(sec):
    sec = copy.deepcopy(sec)
    name = sec.get("name")
    if name not in SYSTEMS:
        raise ConfigError(f"system.name must be one of {SYSTEMS}, got {name!r}")
    allowed = {"name", "params"} | ({"module", "callbacks", "n", "angle_periods"}
                                    if name == "user" else set())
    extra = set(sec) - allowed
    if extra:
        raise ConfigError(f"unknown keys in 'system': {sorted(extra)}")
    params = sec.setdefault("params", {}) or {}
    if not isinstance(params, dict):
        raise ConfigError("system.params must be a mapping")
    sec["params"] = params
    if name == "model":
        if "mu" not in params:
            raise ConfigError("model system needs params.mu")
        try:
            # keep the canonical string form so the file round-trips
            params["mu"] = [str(m) for m in parse_mu(params["mu"])]
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad exponent vector mu: {exc}") from exc
    if name == "user":
        for key in ("module", "callbacks", "n"):
            if key not in sec:
                raise ConfigError(f"user system needs '{key}'")
        cb = sec["callbacks"]
        if not isinstance(cb, dict) or not {"eval0", "grad0", "hess0"} <= set(cb):
            raise ConfigError("user callbacks need eval0, grad0 and hess0")
    return sec


def _validate(cfg, need_quantize, need_window):
    for sec, key, lo, hi in RANGES:
        val = cfg[sec][key]
        if val is None:
            continue
        val = _number(val, f"{sec}.{key}")
        if not lo <= val <= hi:
            raise ConfigError(f"{sec}.{key} = {val} outside [{lo:g}, {hi:g}]")
        if key in INTEGER_KEYS and val != int(val):
            raise ConfigError(f"{sec}.{key} must be an integer")
        cfg[sec][key] = int(val) if key in INTEGER_KEYS else float(val)
    if cfg["orbit"]["energy"] is None:
        raise ConfigError("missing orbit.energy")
    cfg["orbit"]["energy"] = float(_number(cfg["orbit"]["energy"], "orbit.energy"))
    guess = cfg["orbit"]["guess"]
    if guess is not None:
        if not isinstance(guess, (list, tuple)):
            raise ConfigError("orbit.guess must be a list of numbers")
        cfg["orbit"]["guess"] = [float(_number(v, "orbit.guess")) for v in guess]
    win = cfg["family"]["window"]
    if win is not None:
        if not (isinstance(win, (list, tuple)) and len(win) == 2):
            raise ConfigError("family.window must be [E_min, E_max]")
        win = [float(_number(v, "family.window")) for v in win]
        if not win[0] < win[1]:
            raise ConfigError("family.window must satisfy E_min < E_max")
        if not win[0] <= cfg["orbit"]["energy"] <= win[1]:
            raise ConfigError("family.window must contain orbit.energy")
        cfg["family"]["window"] = win
    q = cfg["quantize"]
    if need_quantize:
        for key in ("h", "eps0", "delta"):
            if q[key] is None:
                raise ConfigError(f"missing quantize.{key}")
    if need_window and win is None:
        raise ConfigError("missing family.window")
    if q["h"] is not None:
        hs = q["h"] if isinstance(q["h"], list) else [q["h"]]
        if not hs:
            raise ConfigError("quantize.h must not be empty")
        hs = [float(_number(v, "quantize.h")) for v in hs]
        if not all(0 < v < 1 for v in hs):
            raise ConfigError("quantize.h values must lie in (0, 1)")
        q["h"] = hs
    if q["delta"] is not None:
        q["delta"] = float(_number(q["delta"], "quantize.delta"))
        if not 0 < q["delta"] < 1:
            raise ConfigError("quantize.delta must lie in (0, 1)")
    if not isinstance(cfg["floquet"]["require_partial_hyperbolicity"], bool):
        raise ConfigError("floquet.require_partial_hyperbolicity must be true or false")
    if not isinstance(cfg["output"]["plot"], bool):
        raise ConfigError("output.plot must be true or false")


def load_config(path, need_quantize=True, need_window=None):
    """Read and validate a YAML configuration file."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file {str(path)!r} does not exist")
    try:
        raw = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML: {exc}") from exc
    try:
        return RunConfig.from_dict(raw, need_quantize=need_quantize, need_window=need_window)
    except SystemSpecError as exc:
        raise ConfigError(str(exc)) from exc
