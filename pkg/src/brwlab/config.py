"""Strict JSON configuration for the laboratory.

One structured file drives every subcommand.  Parsing is strict: unknown
keys are rejected with their dotted path, and the seed is mandatory (never
auto-randomized).  Flag overrides (``--set a.b.c=value``) take precedence
over the file, which takes precedence over defaults.
"""

from __future__ import annotations

import copy
import hashlib
import json

from .errors import ConfigError
from .laws import make_increment, make_offspring

_NUMBER = (int, float)

# validator per key: a type tuple, a nested dict (sub-schema), list (any
# JSON array), or dict (any JSON object, for free-form parameter maps)
SCHEMA = {
    "increment": {
        "kind": (str,),
        "dimension": (int,),
        "params": dict,
    },
    "offspring": {
        "pmf": list,
    },
    "sim": {
        "seed": (int, type(None)),
        "replications": (int,),
        "horizon": (int, type(None)),
        "max_restarts": (int,),
        "prune": {
            "mode": (str,),
            "capacity": (int,),
            "window_w0": (int, float, type(None)),
        },
    },
    "target": {
        "x_grid": list,
        "radius": _NUMBER,
    },
    "experiment": {
        "simulate_max": {"n_grid": list, "z_grid": list, "tail_n": (int,)},
        "production": {"anchor_lag": (int, type(None)), "half_width": _NUMBER},
        "clusters": {"anchor_lag": (int, type(None)), "lag_k": (int,)},
        "barrier": {"n": (int,), "beta_grid": list},
        "counts": {"n": (int,), "x_grid": list},
        "clt": {"x_grid": list},
        "twodesc": {"n": (int,), "g_grid": list},
        "escape": {"n_grid": list},
        "ballot": {
            "n_grid": list,
            "y": _NUMBER,
            "a": _NUMBER,
            "box_half": _NUMBER,
        },
    },
    "output": {
        "dir": (str,),
        "formats": list,
    },
}

DEFAULTS = {
    "increment": {"kind": "gaussian", "dimension": 1, "params": {"sigma": 1.0}},
    "offspring": {"pmf": [[2, 1.0]]},
    "sim": {
        "seed": None,
        "replications": 100,
        "horizon": None,
        "max_restarts": 200,
        "prune": {"mode": "both", "capacity": 200000, "window_w0": None},
    },
    "target": {"x_grid": [20.0, 30.0, 45.0], "radius": 1.0},
    "experiment": {
        "simulate_max": {"n_grid": [30, 40, 50, 60, 70, 80], "z_grid": [1, 2, 3, 4, 5], "tail_n": 60},
        "production": {"anchor_lag": None, "half_width": 0.5},
        "clusters": {"anchor_lag": None, "lag_k": 0},
        "barrier": {"n": 40, "beta_grid": [4.0, 6.0, 8.0]},
        "counts": {"n": 60, "x_grid": [2, 3, 4, 5, 6, 7]},
        "clt": {"x_grid": [54.598, 148.413, 403.429, 1096.633, 2980.958]},
        "twodesc": {"n": 16, "g_grid": [-1, -2, -3, -4, -5, -6]},
        "escape": {"n_grid": [4, 8, 12]},
        "ballot": {"n_grid": [32, 64, 128, 256], "y": 2.0, "a": 0.0, "box_half": 3.0},
    },
    "output": {"dir": ".", "formats": ["csv", "json"]},
}


def _validate(node, schema, path: str) -> None:
    if not isinstance(node, dict):
        raise ConfigError(f"{path or '<root>'}: expected an object")
    for key, value in node.items():
        here = f"{path}.{key}" if path else key
        if key not in schema:
            raise ConfigError(f"unknown key: {here}")
        rule = schema[key]
        if rule is dict:
            if not isinstance(value, dict):
                raise ConfigError(f"{here}: expected an object")
        elif isinstance(rule, dict):
            _validate(value, rule, here)
        elif rule is list:
            if not isinstance(value, list):
                raise ConfigError(f"{here}: expected an array")
        else:
            if isinstance(value, bool) or not isinstance(value, rule):
                names = "/".join(t.__name__ for t in rule)
                raise ConfigError(f"{here}: expected {names}, got {type(value).__name__}")


def _merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def parse_override(item: str) -> tuple[list, object]:
    """Parse ``a.b.c=value`` where value is a JSON literal (or bare string)."""
    if "=" not in item:
        raise ConfigError(f"override {item!r} must look like key.path=value")
    key, raw = item.split("=", 1)
    key = key.strip()
    if not key:
        raise ConfigError(f"override {item!r} has an empty key path")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.split("."), value


def apply_overrides(cfg: dict, overrides) -> dict:
    cfg = copy.deepcopy(cfg)
    for item in overrides:
        keys, value = parse_override(item)
        node = cfg
        for k in keys[:-1]:
            node = node.setdefault(k, {})
            if not isinstance(node, dict):
                raise ConfigError(f"override {item!r}: {k} is not an object")
        node[keys[-1]] = value
    return cfg


def load_config(path: str | None = None, overrides=()) -> dict:
    """Read, override, default-fill, and validate a configuration."""
    if path is None:
        raw = {}
    else:
        try:
            with open(path, "r", encoding="utf-8") as fh:
                raw = json.load(fh)
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}")
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path} is not valid JSON: {exc}")
    raw = apply_overrides(raw, overrides)
    _validate(raw, SCHEMA, "")
    cfg = _merge(DEFAULTS, raw)
    _validate(cfg, SCHEMA, "")
    if cfg["sim"]["seed"] is None:
        raise ConfigError("sim.seed is mandatory and never auto-randomized")
    return cfg


def canonical_json(cfg: dict) -> str:
    return json.dumps(cfg, sort_keys=True, separators=(",", ":"))


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(canonical_json(cfg).encode("utf-8")).hexdigest()[:16]


# --------------------------------------------------- object construction


def increment_from(cfg: dict):
    inc = cfg["increment"]
    return make_increment(inc["kind"], inc["dimension"], inc["params"])


def offspring_from(cfg: dict):
    pmf = tuple((int(k), float(p)) for k, p in cfg["offspring"]["pmf"])
    return make_offspring(pmf)


def policy_from(cfg: dict, tilt: float | None):
    from .engine import PrunePolicy

    pr = cfg["sim"]["prune"]
    if pr["mode"] == "off":
        return PrunePolicy.off()
    return PrunePolicy(
        mode=pr["mode"],
        capacity=pr["capacity"],
        window_w0=pr["window_w0"],
        tilt=tilt,
    )
