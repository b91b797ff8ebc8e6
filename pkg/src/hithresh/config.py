"""Experiment configuration: YAML in, fully resolved config out.

Every key has a default, either global or specific to a scenario; the
resolved config remembers where each value came from so a report can echo
it. Unknown keys are rejected with the closest known spelling.
"""

from __future__ import annotations

import copy
import difflib
import hashlib
import json
from dataclasses import dataclass, field

import yaml

from .errors import ConfigError

SCENARIOS = ("landscape-obo", "landscape-simul", "refine", "halfspaces", "delta-scan", "corrgraph",
             "exp-ascent", "even")

POLY_KINDS = ("pairwise", "cyclic", "path", "listed", "linear", "or")

DEFAULTS = {
    "scenario": None,
    "seed": 0,
    "samples": 1_000_000,
    "threads": 1,
    "out": "out",
    "network": {
        "file": None,
        "n": 8,
        "d": 8,
        "activation": "sign-threshold",
        "t": None,              # None: choose_threshold(activation, d, eta)
        "eta": 1.0,
        "rate": 0.2,
        "cap": 25.0,
        "kappa": 1.0,
        "equiangular_cos": None,
        "polynomial": "pairwise",
        "linear": 1.0,
        "pair": 0.5,
        "pairs": None,
        "support_size": 6,
    },
    "landscape": {
        "lambda": None,         # None: lambda_multiplier * |u4| / u2^2
        "lambda_multiplier": 1.0,
        "gamma": 0.01,
        "max_iter": 400,
        "restarts": None,       # None: 5 d
        "max_norm": 10.0,
        "fresh_samples": True,
    },
    "refine": {
        "eps1": 0.005,
        "eps2_deg": 0.7,
        "max_iter": None,       # None: 200 d
        "budget": 100_000,
        "perturb": 1.0,
        "c_acc": 0.004,
        "start_angle_deg": 10.0,
    },
    "delta": {
        "eps_outer": 1e-3,
        "eps_inner": 1e-4,
        "budget": 200_000,
        "random_candidates": 50,
        "eps3": 0.3,
    },
    "structural": {
        "rho_g": None,          # None: midpoint of the planted symbolic values; "auto": widest empirical gap
        "lambda_p": None,       # None: from the planted instance
        "gamma_p": None,
        "restarts": 3,
        "cap": 1.0,
        "grid": 50,
        "recover": False,
    },
    "sweep": {
        "variable": None,       # dotted key, e.g. "network.t"
        "values": [],
        "metric": "max_angle_deg",
    },
    "acceptance": {
        "max_angle_deg": None,
        "min_abs_cos": None,
        "min_gap": None,
        "max_zscore": None,
    },
}

SCENARIO_DEFAULTS = {
    "landscape-obo": {"samples": 2_000_000,
                      "acceptance": {"max_angle_deg": 15.0, "min_abs_cos": 0.9}},
    "landscape-simul": {"samples": 1_000_000, "network": {"n": 4, "d": 4},
                        "acceptance": {"max_angle_deg": 15.0}},
    "refine": {"network": {"n": 3, "d": 2, "t": 2.5, "polynomial": "or"},
               "acceptance": {"max_angle_deg": 1.0}},
    "halfspaces": {"samples": 2_000_000,
                   "network": {"n": 5, "d": 5, "t": 2.5, "equiangular_cos": 0.3, "polynomial": "or"},
                   "acceptance": {"max_angle_deg": 2.0}},
    "delta-scan": {"network": {"n": 12, "d": 6, "t": 1.0, "polynomial": "cyclic", "linear": 0.0, "pair": 1.0},
                   "acceptance": {"max_zscore": 3.0}},
    "corrgraph": {"network": {"n": 30, "d": 5, "activation": "exp-rate", "t": 0.0, "rate": 0.2,
                              "polynomial": "listed", "pair": 0.2, "pairs": [[0, 1], [2, 3]]},
                  "acceptance": {"min_gap": 2.0}},
    "exp-ascent": {"samples": 200_000,
                   "network": {"n": 4, "d": 1, "activation": "exp-rate", "t": 0.0, "rate": 0.25,
                               "support_size": 2, "polynomial": "linear"}},
    "even": {"network": {"n": 3, "d": 3, "activation": "custom-even", "t": 0.0, "polynomial": "path"},
             "acceptance": {"max_zscore": 3.0}},
}

REQUIRED = ("scenario", "network")


@dataclass
class ExperimentConfig:
    values: dict
    provenance: dict = field(default_factory=dict)   # dotted key -> "user" | "scenario" | "default"

    @property
    def scenario(self) -> str:
        return self.values["scenario"]

    @property
    def seed(self) -> int:
        return int(self.values["seed"])

    def __getitem__(self, key):
        return self.values[key]

    def get(self, dotted: str):
        node = self.values
        for part in dotted.split("."):
            node = node[part]
        return node

    def with_value(self, dotted: str, value) -> "ExperimentConfig":
        vals = copy.deepcopy(self.values)
        node = vals
        parts = dotted.split(".")
        _check_path(parts)
        for part in parts[:-1]:
            node = node[part]
        node[parts[-1]] = value
        prov = dict(self.provenance)
        prov[dotted] = "user"
        return ExperimentConfig(vals, prov)

    def config_hash(self) -> str:
        blob = json.dumps(self.values, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def __eq__(self, other):
        return isinstance(other, ExperimentConfig) and self.values == other.values


def _check_path(parts):
    node = DEFAULTS
    for depth, part in enumerate(parts):
        if not isinstance(node, dict) or part not in node:
            where = ".".join(parts[:depth]) or "top level"
            known = list(node) if isinstance(node, dict) else []
            raise ConfigError(_unknown(part, known, where))
        node = node[part]


def _unknown(key, known, where) -> str:
    msg = f"unknown key {key!r} in {where}"
    close = difflib.get_close_matches(str(key), known, n=1, cutoff=0.6)
    if close:
        msg += f"; did you mean {close[0]!r}?"
    return msg


def _merge(defaults: dict, overrides: dict, prov: dict, tag: str, prefix: str = "") -> dict:
    out = copy.deepcopy(defaults)
    for key, val in overrides.items():
        path = f"{prefix}{key}"
        if key not in defaults:
            raise ConfigError(_unknown(key, list(defaults), prefix.rstrip(".") or "top level"))
        if isinstance(defaults[key], dict):
            if val is None:
                val = {}
            if not isinstance(val, dict):
                raise ConfigError(f"{path} must be a mapping")
            out[key] = _merge(out[key], val, prov, tag, path + ".")
        else:
            out[key] = copy.deepcopy(val)
            prov[path] = tag
    return out


def _leaves(d: dict, prefix: str = ""):
    for k, v in d.items():
        if isinstance(v, dict):
            yield from _leaves(v, f"{prefix}{k}.")
        else:
            yield f"{prefix}{k}", v


def resolve(user: dict) -> ExperimentConfig:
    if not isinstance(user, dict):
        raise ConfigError("config must be a mapping")
    missing = [k for k in REQUIRED if k not in user]
    if missing:
        raise ConfigError(f"missing required entries {missing}; every config needs {list(REQUIRED)}")
    scenario = user["scenario"]
    if scenario not in SCENARIOS:
        close = difflib.get_close_matches(str(scenario), SCENARIOS, n=1)
        hint = f"; did you mean {close[0]!r}?" if close else ""
        raise ConfigError(f"unknown scenario {scenario!r}{hint}")
    prov: dict = {}
    vals = _merge(DEFAULTS, SCENARIO_DEFAULTS[scenario], prov, "scenario")
    vals = _merge(vals, user, prov, "user")
    for key, _ in _leaves(vals):
        prov.setdefault(key, "default")
    _validate(vals)
    return ExperimentConfig(vals, prov)


def _validate(v: dict):
    net = v["network"]
    if net["polynomial"] not in POLY_KINDS:
        raise ConfigError(f"network.polynomial must be one of {POLY_KINDS}")
    if int(v["samples"]) < 1 or int(v["threads"]) < 1:
        raise ConfigError("samples and threads must be positive")
    positive = ["refine.eps1", "refine.eps2_deg", "refine.budget", "delta.eps_outer", "delta.eps_inner",
                "delta.budget", "landscape.gamma", "landscape.max_iter", "landscape.max_norm",
                "structural.cap"]
    for key in positive:
        block, name = key.split(".")
        if not v[block][name] > 0:
            raise ConfigError(f"{key} must be positive")
    for name, val in v["acceptance"].items():
        if val is not None and not val > 0:
            raise ConfigError(f"acceptance.{name} must be positive")
    if v["sweep"]["variable"] is not None:
        _check_path(v["sweep"]["variable"].split("."))


def parse_config(text: str) -> ExperimentConfig:
    try:
        user = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    return resolve(user if user is not None else {})


def default_config(scenario: str) -> ExperimentConfig:
    return resolve({"scenario": scenario, "network": {}})


def serialize(cfg: ExperimentConfig) -> str:
    return yaml.safe_dump(cfg.values, sort_keys=True, default_flow_style=False)


def describe(cfg: ExperimentConfig) -> str:
    """One 'key = value  (source)' line per resolved leaf."""
    return "\n".join(f"{k} = {v!r}  ({cfg.provenance.get(k, 'default')})" for k, v in _leaves(cfg.values))
