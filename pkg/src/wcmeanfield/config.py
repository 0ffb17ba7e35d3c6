"""Run configuration: JSON schema, loading and hashing."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import jsonschema

from .meanfield import num_steps
from .model import ModelParams, ValidationError, params_from_dict


class ConfigError(ValueError):
    """Invalid configuration; ``path`` is the dotted location of the problem."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path


_number_list = {"type": "array", "items": {"type": "number"}, "minItems": 1}

_input_schema = {
    "oneOf": [
        {"type": "number"},
        {
            "type": "object",
            "properties": {
                "table": {
                    "type": "array",
                    "minItems": 1,
                    "items": {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2},
                }
            },
            "required": ["table"],
            "additionalProperties": False,
        },
    ]
}

MODEL_SCHEMA = {
    "type": "object",
    "properties": {
        "num_populations": {"type": "integer", "minimum": 1},
        "group_sizes": {"type": "array", "items": {"type": "integer", "minimum": 0}, "minItems": 1},
        "tau": {"type": "number", "exclusiveMinimum": 0},
        "sigma": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}, "minItems": 1},
        "coupling": {"type": "array", "items": _number_list, "minItems": 1},
        "input": {"type": "array", "items": _input_schema, "minItems": 1},
        "x_ini": _number_list,
        "q_ini": {"type": "array", "items": {"type": "number", "minimum": 0}},
        "sigmoid": {
            "type": "object",
            "properties": {
                "kind": {"enum": ["logistic", "tabulated"]},
                "x": _number_list,
                "y": _number_list,
            },
            "required": ["kind"],
            "additionalProperties": False,
        },
    },
    "required": ["group_sizes", "tau", "sigma", "coupling", "input", "x_ini"],
    "additionalProperties": False,
}

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "properties": {
        "model": MODEL_SCHEMA,
        "T": {"type": "number", "exclusiveMinimum": 0},
        "dt": {"type": "number", "exclusiveMinimum": 0},
        "n": {"type": "integer", "minimum": 0},
        "seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
        "samples": {"type": "integer", "minimum": 1},
        "quadrature_order": {"type": "integer", "minimum": 2},
        "output_dir": {"type": "string"},
        "store_every": {"type": "integer", "minimum": 1},
        "converge": {
            "type": "object",
            "properties": {
                "n_ladder": {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 1},
                "replications": {"type": "integer", "minimum": 1},
                "refine": {"type": "boolean"},
                "w1_times": _number_list,
            },
            "additionalProperties": False,
        },
        "tail": {
            "type": "object",
            "properties": {"m_grid": _number_list},
            "additionalProperties": False,
        },
    },
    "required": ["model", "T", "dt"],
    "additionalProperties": False,
}


@dataclass(frozen=True, eq=False)
class RunConfig:
    """Everything needed to reproduce a run."""

    model: ModelParams
    T: float
    dt: float
    n: int = 0
    seed: int = 0
    samples: int = 100
    quadrature_order: int = 64
    output_dir: str = "out"
    store_every: int = 1
    converge: dict = field(default_factory=dict)
    tail: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.T > 0:
            raise ConfigError("T", "must be > 0")
        if not self.dt > 0:
            raise ConfigError("dt", "must be > 0")
        if self.dt > self.T:
            raise ConfigError("dt", "must be <= T")
        if self.samples < 1:
            raise ConfigError("samples", "must be >= 1")
        try:
            num_steps(self.T, self.dt)
        except ValueError as exc:
            raise ConfigError("dt", str(exc)) from None

    @property
    def steps(self) -> int:
        return num_steps(self.T, self.dt)

    def replace(self, **changes) -> "RunConfig":
        kwargs = {k: getattr(self, k) for k in self.__dataclass_fields__}
        kwargs.update(changes)
        return RunConfig(**kwargs)

    def to_dict(self) -> dict:
        return {
            "model": self.model.to_dict(),
            "T": self.T,
            "dt": self.dt,
            "n": self.n,
            "seed": self.seed,
            "samples": self.samples,
            "quadrature_order": self.quadrature_order,
            "output_dir": self.output_dir,
            "store_every": self.store_every,
            "converge": dict(self.converge),
            "tail": dict(self.tail),
        }

    def digest(self) -> str:
        """SHA-256 of the canonical effective configuration (output_dir excluded)."""
        data = self.to_dict()
        del data["output_dir"]
        return config_hash(data)

    def digest_model(self) -> str:
        return config_hash(self.model.to_dict())


def config_hash(data: dict) -> str:
    text = json.dumps(data, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()


def _error_path(err: jsonschema.ValidationError) -> str:
    parts = [str(p) for p in err.absolute_path]
    if err.validator == "required":
        # message is "'name' is a required property"
        parts.append(err.message.split("'")[1])
    elif err.validator == "additionalProperties":
        extra = sorted(set(err.instance) - set(err.schema.get("properties", {})))
        parts.extend(extra[:1])
    return ".".join(parts)


def config_from_dict(data: dict) -> RunConfig:
    """Validate against the schema and build a RunConfig.

    A ``meta.json`` written by the CLI (with the effective configuration
    under ``"config"``) is accepted as well.
    """
    if isinstance(data, dict) and "config" in data and "model" not in data:
        data = data["config"]
    validator = jsonschema.Draft202012Validator(CONFIG_SCHEMA)
    errors = sorted(validator.iter_errors(data), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        raise ConfigError(_error_path(err), err.message)
    try:
        model = params_from_dict(data["model"])
    except ValidationError as exc:
        raise ConfigError("model", str(exc)) from None
    kwargs = {k: v for k, v in data.items() if k != "model"}
    return RunConfig(model=model, **kwargs)


def load_config(path) -> RunConfig:
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError("", f"cannot read config {path}: {exc}") from None
    return config_from_dict(data)
