"""JSON experiment configs, named presets and ``--set`` overrides.

Schema (all keys optional, defaults shown)::

    {
      "K": 20,
      "rates": "index",                 # "index" (r_k = k), "equal", or a list
      "beta": 0.1,
      "rate_model": {"kind": "exponential", "params": {}},
      "policy": "jps_dynamic",          # or "policies": [...]
      "static": {"kappa_mode": "analytic", "kappa": null,
                 "burn_in_slots": 2000, "mc_samples": 200000},
      "n_slots": 20000,
      "n_replications": 10,
      "seed": 1,
      "burn_in_fraction": 0.1,
      "record_interval": 100,
      "sweep": {"variable": "K", "values": [2, 5, 10]},
      "theory": {"mc_samples": 200000, "K_values": [1, 2, 3]}
    }

A discrete rate model is ``{"kind": "discrete", "params": {"pairs": [[x, p], ...]}}``.
"""

from __future__ import annotations

import copy
import hashlib
import json
from importlib import resources
from pathlib import Path

from .channel import RateModel
from .sim import ExperimentConfig, PolicySpec

DEFAULTS = {
    "K": 20,
    "rates": "index",
    "beta": 0.1,
    "rate_model": {"kind": "exponential", "params": {}},
    "policy": "jps_dynamic",
    "static": {"kappa_mode": "analytic", "kappa": None, "burn_in_slots": 2000,
               "mc_samples": 200_000},
    "n_slots": 20_000,
    "n_replications": 10,
    "seed": 1,
    "burn_in_fraction": 0.1,
    "record_interval": 100,
    "theory": {"mc_samples": 200_000, "K_values": list(range(1, 31))},
}


class ConfigError(ValueError):
    pass


def _merge(base: dict, extra: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in extra.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def preset_names() -> list[str]:
    files = resources.files("jpspf").joinpath("presets").iterdir()
    return sorted(p.name[:-5] for p in files if p.name.endswith(".json"))


def load_preset(name: str) -> dict:
    path = resources.files("jpspf").joinpath("presets", f"{name}.json")
    if not path.is_file():
        raise ConfigError(f"unknown preset {name!r}; available: {', '.join(preset_names())}")
    return json.loads(path.read_text())


def load_file(path: str | Path) -> dict:
    """Read a config, or the ``config`` block of a run manifest."""
    data = json.loads(Path(path).read_text())
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    if "config_hash" in data and "config" in data:
        return data["config"]
    return data


def apply_override(cfg: dict, assignment: str) -> dict:
    """Apply ``a.b=value``; the value is parsed as JSON when possible."""
    if "=" not in assignment:
        raise ConfigError(f"override {assignment!r} is not key=value")
    key, raw = assignment.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    out = copy.deepcopy(cfg)
    node = out
    parts = key.split(".")
    for p in parts[:-1]:
        node = node.setdefault(p, {})
        if not isinstance(node, dict):
            raise ConfigError(f"cannot set {key!r}")
    node[parts[-1]] = value
    return out


def resolve(raw: dict) -> dict:
    cfg = _merge(DEFAULTS, raw)
    if "policies" in raw:
        cfg.pop("policy", None)
    else:
        cfg["policies"] = [cfg.pop("policy")]
    return cfg


def config_hash(cfg: dict) -> str:
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def rate_model(cfg: dict) -> RateModel:
    try:
        return RateModel.from_config(cfg["rate_model"])
    except (ValueError, TypeError, KeyError) as exc:
        raise ConfigError(f"bad rate_model: {exc}") from exc


def experiment(cfg: dict, policy: str) -> ExperimentConfig:
    """Build the typed config for one policy from a resolved dict."""
    st = cfg.get("static", {})
    rates = cfg["rates"]
    try:
        spec = PolicySpec(
            name=policy,
            kappa_mode=st.get("kappa_mode", "analytic"),
            kappa=st.get("kappa"),
            burn_in_slots=int(st.get("burn_in_slots", 2000)),
            mc_samples=int(st.get("mc_samples", 200_000)),
        )
        return ExperimentConfig(
            K=int(cfg["K"]),
            rates=rates if isinstance(rates, str) else tuple(rates),
            rate_model=rate_model(cfg),
            beta=float(cfg["beta"]),
            policy=spec,
            n_slots=int(cfg["n_slots"]),
            n_replications=int(cfg["n_replications"]),
            seed=int(cfg["seed"]),
            burn_in_fraction=float(cfg["burn_in_fraction"]),
            record_interval=int(cfg["record_interval"]),
        )
    except ConfigError:
        raise
    except (ValueError, TypeError, KeyError) as exc:
        raise ConfigError(str(exc)) from exc
