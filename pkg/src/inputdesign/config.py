"""Experiment configuration: JSON schema, defaults, and semantic checks."""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, fields
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from .acquisition import AcquisitionConfig
from .driver import GpoConfig
from .errors import ConfigError, InputDesignError
from .inputs import ArDomain, MarkovDomain, ar_is_stable
from .model import DEFAULT_THETA, MODELS, get_model

_num = {"type": "number"}
_pos_int = {"type": "integer", "minimum": 1}
_num_pair = {"type": "array", "items": _num, "minItems": 2, "maxItems": 2}

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "inputdesign experiment",
    "type": "object",
    "additionalProperties": False,
    "required": ["model", "domain"],
    "properties": {
        "name": {"type": "string"},
        "model": {"type": "string", "enum": sorted(MODELS)},
        "theta0": {"type": "array", "items": _num, "minItems": 1},
        "seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
        "out": {"type": "string"},
        "domain": {
            "type": "object",
            "required": ["kind"],
            "properties": {"kind": {"enum": ["markov", "ar"]}},
        },
        "design": {"type": "array", "items": _num, "minItems": 1},
        "gpo": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "K": {"type": "integer", "minimum": 0},
                "warmup": {"type": "integer", "minimum": 2},
                "T": _pos_int,
                "N": _pos_int,
                "M": _pos_int,
                "N_limit": {"type": ["integer", "null"], "minimum": 1},
                "replicates": _pos_int,
                "objective": {"enum": ["logdet"]},
                "resampling": {"enum": ["multinomial", "systematic"]},
                "final_replicates": _pos_int,
                "max_failure_fraction": {"type": "number", "minimum": 0, "maximum": 1},
            },
        },
        "acquisition": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "xi": {"type": "number", "minimum": 0},
                "restarts": _pos_int,
                "walk_halfwidth": {"type": "number", "minimum": 0},
                "jitter_scale": {"type": "number", "minimum": 0},
                "local_maxfev": _pos_int,
            },
        },
        "gp": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "matern_order": {"enum": [0.5, 1.5, 2.5]},
                "restarts": _pos_int,
            },
        },
        "normality": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"replicates": {"type": "integer", "minimum": 3}},
        },
    },
}

DOMAIN_SCHEMAS = {
    "markov": {
        "type": "object",
        "additionalProperties": False,
        "required": ["kind", "alphabet"],
        "properties": {
            "kind": {"const": "markov"},
            "alphabet": {"type": "array", "items": _num, "minItems": 2},
            "n": _pos_int,
            "projection": {"enum": ["clamp", "euclidean"]},
        },
    },
    "ar": {
        "type": "object",
        "additionalProperties": False,
        "required": ["kind"],
        "properties": {
            "kind": {"const": "ar"},
            "order": _pos_int,
            "coeff_bounds": _num_pair,
            "sigma_bounds": _num_pair,
        },
    },
}

SUMMARY_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "inputdesign design summary",
    "type": "object",
    "additionalProperties": False,
    "required": [
        "name", "seed", "model", "theta0", "domain", "best_design", "best_posterior_mean",
        "final_objective", "final_objective_replicates", "hyperparameters", "n_evaluations",
        "failures", "versions", "config",
    ],
    "properties": {
        "name": {"type": "string"},
        "seed": {"type": "integer"},
        "model": {"type": "string"},
        "theta0": {"type": "array", "items": _num},
        "domain": {"type": "object"},
        "best_design": {"type": "array", "items": _num},
        "best_pmf": {"type": "array", "items": _num},
        "best_posterior_mean": _num,
        "final_objective": {"type": ["number", "null"]},
        "final_objective_replicates": {"type": "array", "items": _num},
        "hyperparameters": {"type": ["object", "null"]},
        "n_evaluations": {"type": "integer", "minimum": 0},
        "failures": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["k", "error"],
                "properties": {"k": {"type": "integer"}, "error": {"type": "string"}},
            },
        },
        "versions": {"type": "object", "additionalProperties": {"type": "string"}},
        "config": {"type": "object"},
    },
}

DEFAULTS = {
    "name": "experiment",
    "seed": 0,
    "out": "results",
    "gpo": {f.name: f.default for f in fields(GpoConfig) if f.name in CONFIG_SCHEMA["properties"]["gpo"]["properties"]},
    "acquisition": {f.name: f.default for f in fields(AcquisitionConfig)},
    "gp": {"matern_order": 1.5, "restarts": 8},
    "normality": {"replicates": 1000},
}
DOMAIN_DEFAULTS = {
    "markov": {"n": 1, "projection": "clamp"},
    "ar": {"order": 1, "coeff_bounds": [-2.0, 2.0], "sigma_bounds": [0.1, 1.0]},
}


@dataclass
class ExperimentConfig:
    """Validated, fully populated experiment settings."""

    raw: dict
    model: object
    theta0: np.ndarray
    domain: MarkovDomain | ArDomain
    gpo: GpoConfig
    design: np.ndarray | None

    @property
    def name(self) -> str:
        return self.raw["name"]

    @property
    def seed(self) -> int:
        return self.raw["seed"]

    @property
    def out(self) -> str:
        return self.raw["out"]

    @property
    def normality_replicates(self) -> int:
        return self.raw["normality"]["replicates"]


def bundled_configs() -> list[str]:
    root = resources.files("inputdesign") / "configs"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def resolve_config_path(ref: str) -> Path:
    """A filesystem path, or the name of a bundled config (with or without ``.json``)."""
    p = Path(ref)
    if p.exists():
        return p
    name = ref[:-5] if ref.endswith(".json") else ref
    bundled = resources.files("inputdesign") / "configs" / f"{Path(name).name}.json"
    if bundled.is_file():
        return Path(str(bundled))
    raise ConfigError(f"config file not found: {ref} (bundled: {', '.join(bundled_configs())})")


def _merge(defaults: dict, given: dict) -> dict:
    out = copy.deepcopy(defaults)
    for key, value in given.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def _schema_errors(schema: dict, instance, prefix: tuple = ()) -> list[str]:
    validator = jsonschema.Draft202012Validator(schema)
    out = []
    for err in sorted(validator.iter_errors(instance), key=lambda e: list(map(str, e.absolute_path))):
        where = "/".join(str(p) for p in prefix + tuple(err.absolute_path)) or "<root>"
        out.append(f"{where}: {err.message}")
    return out


def parse_config(data, source: str = "<config>") -> ExperimentConfig:
    """Validate a config mapping against the schema, apply defaults, and check constants."""
    if not isinstance(data, dict):
        raise ConfigError(f"{source}: top level must be an object with required keys "
                          f"{CONFIG_SCHEMA['required']}")
    errors = _schema_errors(CONFIG_SCHEMA, data)
    if not errors:
        errors = _schema_errors(DOMAIN_SCHEMAS[data["domain"]["kind"]], data["domain"], ("domain",))
    if errors:
        raise ConfigError(f"{source}: " + "; ".join(errors))

    raw = _merge(DEFAULTS, data)
    raw["domain"] = _merge(DOMAIN_DEFAULTS[data["domain"]["kind"]], data["domain"])
    model = get_model(raw["model"])
    raw.setdefault("theta0", list(DEFAULT_THETA[raw["model"]]))
    try:
        theta0 = model.check_theta(raw["theta0"])
    except InputDesignError as exc:
        raise ConfigError(f"{source}: theta0: {exc}") from exc

    g = raw["gpo"]
    if g["N_limit"] is not None and g["N_limit"] > g["N"]:
        raise ConfigError(f"{source}: gpo/N_limit: {g['N_limit']} exceeds N = {g['N']}")
    try:
        domain = _build_domain(raw["domain"])
        gpo = GpoConfig(
            **g,
            matern_order=raw["gp"]["matern_order"],
            gp_restarts=raw["gp"]["restarts"],
            acquisition=AcquisitionConfig(**raw["acquisition"]),
        )
    except InputDesignError as exc:
        raise ConfigError(f"{source}: {exc}") from exc

    design = None
    if "design" in raw:
        design = np.asarray(raw["design"], dtype=float)
        _check_design(domain, design, source)
    return ExperimentConfig(raw, model, theta0, domain, gpo, design)


def _build_domain(spec: dict):
    if spec["kind"] == "markov":
        return MarkovDomain(tuple(spec["alphabet"]), spec["n"], spec["projection"])
    return ArDomain(spec["order"], tuple(spec["coeff_bounds"]), tuple(spec["sigma_bounds"]))


def _check_design(domain, design: np.ndarray, source: str) -> None:
    if design.shape != (domain.dim,):
        raise ConfigError(f"{source}: design: expected {domain.dim} values, got {design.size}")
    if isinstance(domain, ArDomain) and not ar_is_stable(design[:-1]):
        raise ConfigError(
            f"{source}: design: AR coefficients {design[:-1].tolist()} give a zero on or outside the unit circle"
        )
    if not domain.is_feasible(design, tol=1e-9):
        raise ConfigError(f"{source}: design: {design.tolist()} is not feasible for {domain!r}")


def load_config(ref: str) -> ExperimentConfig:
    path = resolve_config_path(ref)
    text = path.read_text()
    if not text.strip():
        raise ConfigError(f"{path}: empty config; required keys: {CONFIG_SCHEMA['required']}")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
    return parse_config(data, str(path))


validate_config = load_config
