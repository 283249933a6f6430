"""Run configuration: defaults, loading from YAML/JSON, and field-level validation."""
from __future__ import annotations

import copy
import json
from pathlib import Path

import numpy as np
import yaml

from .errors import ConfigError

COMMANDS = (
    "phase-diagram", "op-scan", "chi-scan", "dynamics", "bias-scan",
    "qfunc", "thermal", "liouville-evolve", "selftest",
)

DEFAULTS = {
    "params": {"epsilon": 1.0, "lam": 0.0, "jx": 0.0, "jy": 0.0, "n_spins": 20, "boson_cutoff": 20},
    "workers": 1,
    "seed": 0,
    "phase_diagram": {
        "mode": "meanfield",
        "axis1": {"name": "x", "start": 0.0, "stop": 1.0, "num": 101},
        "axis2": {"name": "jy", "start": 0.0, "stop": 1.0, "num": 101},
        "split": "lambda",
    },
    "op_scan": {"axis": "lambda", "values": {"start": 0.0, "stop": 1.0, "num": 21}},
    "chi_scan": {
        "axis": "lambda",
        "values": None,
        "window": None,
        "fd_step": 1e-4,
        "n_values": None,
        "boson_cutoff": "N",
    },
    "envelope": {"shape": "sin2", "tau": 10.0, "amplitude": 0.01, "plateau": 1.0},
    "dynamics": {"t_final": 100.0, "dt": 0.02, "check_step": False, "snapshot_times": [], "rate_ceiling": None,
                 "check_cutoff": True},
    "bias_scan": {"lambda0": {"start": 0.68, "stop": 0.72, "num": 21}, "t_final": 100.0, "dt": 0.02,
                  "check_cutoff": True},
    "qfunc": {
        "convention": "normalized",
        "theta": {"start": 0.0, "stop": float(np.pi), "num": 200},
        "phi": {"start": 0.0, "stop": float(2 * np.pi), "num": 200},
        "x": {"start": -8.0, "stop": 8.0, "num": 161},
        "y": {"start": -8.0, "stop": 8.0, "num": 161},
    },
    "thermal": {"temperatures": [0.1]},
    "liouville": {"t_final": 10.0, "dt": 0.02, "convention": "row", "temperature": None},
}

# keys whose value may be a mapping with free-form content
_FREE = {("params",), ("envelope",)}


def load_config(path: str | Path | None) -> dict:
    """Read a YAML or JSON file; an absent path yields an empty mapping."""
    if path is None:
        return {}
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    try:
        data = json.loads(text) if path.suffix == ".json" else yaml.safe_load(text)
    except (yaml.YAMLError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from None
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError("config root must be a mapping")
    return data


def _merge(base: dict, override: dict, where: tuple = ()) -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        here = where + (key,)
        if key == "command":
            out[key] = value
            continue
        if key not in base:
            raise ConfigError(f"{'.'.join(here)}: unknown field")
        if isinstance(base[key], dict) and isinstance(value, dict) and here not in _FREE:
            out[key] = _merge(base[key], value, here)
        elif isinstance(base[key], dict) and isinstance(value, dict):
            unknown = set(value) - set(base[key])
            if unknown:
                raise ConfigError(f"{'.'.join(here)}: unknown field(s) {sorted(unknown)}")
            out[key] = {**base[key], **value}
        else:
            out[key] = copy.deepcopy(value)
    return out


def resolve(user: dict, overrides: dict | None = None) -> dict:
    cfg = _merge(DEFAULTS, user)
    for key, value in (overrides or {}).items():
        if value is not None:
            cfg[key] = value
    validate(cfg)
    return cfg


def _num(cfg, path, lo=None, hi=None, integer=False, strict_lo=False):
    node = cfg
    for p in path:
        node = node[p]
    name = ".".join(path)
    if isinstance(node, bool) or not isinstance(node, (int, float)):
        raise ConfigError(f"{name}: expected a number, got {node!r}")
    if integer and int(node) != node:
        raise ConfigError(f"{name}: expected an integer, got {node!r}")
    if lo is not None and (node <= lo if strict_lo else node < lo):
        raise ConfigError(f"{name}: must be {'>' if strict_lo else '>='} {lo}, got {node}")
    if hi is not None and node > hi:
        raise ConfigError(f"{name}: must be <= {hi}, got {node}")
    return node


def values_from(spec, name: str, ascending: bool = True) -> np.ndarray:
    """Expand ``{start, stop, num}`` or an explicit list into a validated array."""
    if isinstance(spec, dict):
        missing = {"start", "stop", "num"} - set(spec)
        if missing:
            raise ConfigError(f"{name}: missing field(s) {sorted(missing)}")
        num = spec["num"]
        if isinstance(num, bool) or not isinstance(num, int) or num < 1:
            raise ConfigError(f"{name}.num: expected a positive integer, got {num!r}")
        if num > 1 and not spec["stop"] > spec["start"]:
            raise ConfigError(f"{name}: empty range [{spec['start']}, {spec['stop']}]")
        vals = np.linspace(float(spec["start"]), float(spec["stop"]), num)
    elif isinstance(spec, (list, tuple)):
        if len(spec) == 0:
            raise ConfigError(f"{name}: empty value list")
        try:
            vals = np.array([float(v) for v in spec])
        except (TypeError, ValueError):
            raise ConfigError(f"{name}: values must be numbers") from None
    else:
        raise ConfigError(f"{name}: expected a list or a {{start, stop, num}} mapping")
    if ascending and np.any(np.diff(vals) <= 0):
        raise ConfigError(f"{name}: values must be strictly ascending")
    return vals


def validate(cfg: dict) -> None:
    """Check every field against module preconditions before any work starts."""
    _num(cfg, ("params", "epsilon"), lo=0, strict_lo=True)
    for k in ("lam", "jx", "jy"):
        _num(cfg, ("params", k), lo=0)
    _num(cfg, ("params", "n_spins"), lo=1, integer=True)
    _num(cfg, ("params", "boson_cutoff"), lo=2, integer=True)
    _num(cfg, ("workers",), lo=1, integer=True)
    _num(cfg, ("seed",), lo=0, integer=True)

    pd = cfg["phase_diagram"]
    if pd["mode"] not in ("meanfield", "ed"):
        raise ConfigError("phase_diagram.mode: expected 'meanfield' or 'ed'")
    if pd["split"] not in ("lambda", "jx"):
        raise ConfigError("phase_diagram.split: expected 'lambda' or 'jx'")
    names = []
    for ax in ("axis1", "axis2"):
        spec = pd[ax]
        if spec.get("name") not in ("x", "jy", "epsilon"):
            raise ConfigError(f"phase_diagram.{ax}.name: expected one of x, jy, epsilon")
        names.append(spec["name"])
        values_from({k: spec[k] for k in ("start", "stop", "num") if k in spec}, f"phase_diagram.{ax}")
        if spec["num"] < 2:
            raise ConfigError(f"phase_diagram.{ax}.num: must be >= 2")
        if spec["start"] < 0:
            raise ConfigError(f"phase_diagram.{ax}.start: must be >= 0")
    if names[0] == names[1]:
        raise ConfigError("phase_diagram: axis1 and axis2 must differ")

    if cfg["op_scan"]["axis"] not in ("lambda", "lam", "jx", "jy", "epsilon"):
        raise ConfigError("op_scan.axis: expected one of lambda, jx, jy, epsilon")
    values_from(cfg["op_scan"]["values"], "op_scan.values")

    cs = cfg["chi_scan"]
    if cs["axis"] not in ("lambda", "lam", "jx"):
        raise ConfigError("chi_scan.axis: expected 'lambda' or 'jx'")
    _num(cfg, ("chi_scan", "fd_step"), lo=0, strict_lo=True)
    if cs["values"] is not None:
        vals = values_from(cs["values"], "chi_scan.values")
        if len(vals) > 1 and cs["fd_step"] >= np.min(np.diff(vals)):
            raise ConfigError("chi_scan.fd_step: must be smaller than the value spacing")
    if cs["window"] is not None:
        w = cs["window"]
        if not (isinstance(w, (list, tuple)) and len(w) == 2 and w[1] > w[0] >= 0):
            raise ConfigError("chi_scan.window: expected [low, high] with 0 <= low < high")
    if cs["n_values"] is not None:
        nv = cs["n_values"]
        if not isinstance(nv, list) or not all(isinstance(n, int) and n >= 1 for n in nv):
            raise ConfigError("chi_scan.n_values: expected a list of positive integers")
        if len(set(nv)) < 4:
            raise ConfigError("chi_scan.n_values: a quadratic fit needs at least 4 distinct N")
    if not (cs["boson_cutoff"] in ("N", "auto") or (isinstance(cs["boson_cutoff"], int) and cs["boson_cutoff"] >= 2)):
        raise ConfigError("chi_scan.boson_cutoff: expected 'N', 'auto' or an integer >= 2")

    env = cfg["envelope"]
    if env["shape"] not in ("sin2", "linear"):
        raise ConfigError("envelope.shape: expected 'sin2' or 'linear'")
    _num(cfg, ("envelope", "tau"), lo=0, strict_lo=True)
    _num(cfg, ("envelope", "amplitude"))
    _num(cfg, ("envelope", "plateau"), lo=0, hi=1, strict_lo=True)

    for block in ("dynamics", "bias_scan", "liouville"):
        _num(cfg, (block, "t_final"), lo=0, strict_lo=True)
        _num(cfg, (block, "dt"), lo=0, strict_lo=True)
        steps = cfg[block]["t_final"] / cfg[block]["dt"]
        if abs(steps - round(steps)) > 1e-9 * max(1.0, steps):
            raise ConfigError(f"{block}.t_final: must be an integer multiple of {block}.dt")
    for t in cfg["dynamics"]["snapshot_times"]:
        if not 0 <= t <= cfg["dynamics"]["t_final"]:
            raise ConfigError("dynamics.snapshot_times: times must lie in [0, t_final]")
    values_from(cfg["bias_scan"]["lambda0"], "bias_scan.lambda0")
    for block in ("dynamics", "bias_scan"):
        if not isinstance(cfg[block]["check_cutoff"], bool):
            raise ConfigError(f"{block}.check_cutoff: expected true or false")
    if cfg["liouville"]["convention"] not in ("row", "column"):
        raise ConfigError("liouville.convention: expected 'row' or 'column'")
    if cfg["liouville"]["temperature"] is not None:
        _num(cfg, ("liouville", "temperature"), lo=0, strict_lo=True)

    q = cfg["qfunc"]
    if q["convention"] not in ("normalized", "unnormalized"):
        raise ConfigError("qfunc.convention: expected 'normalized' or 'unnormalized'")
    for ax in ("theta", "phi", "x", "y"):
        vals = values_from(q[ax], f"qfunc.{ax}")
        if len(vals) < 2:
            raise ConfigError(f"qfunc.{ax}.num: must be >= 2")
    if q["theta"]["start"] < 0 or q["theta"]["stop"] > np.pi + 1e-12:
        raise ConfigError("qfunc.theta: must lie within [0, pi]")

    temps = cfg["thermal"]["temperatures"]
    if not isinstance(temps, list) or not temps or not all(
        isinstance(t, (int, float)) and not isinstance(t, bool) and t > 0 for t in temps
    ):
        raise ConfigError("thermal.temperatures: expected a non-empty list of positive numbers")
