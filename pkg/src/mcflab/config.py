"""Experiment configuration: schema validation, defaults and object construction."""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import jsonschema

from . import initdata
from .flow import FlowConfig
from .mesh import Grid1D, RadialGrid, TensorGrid2D, policy_from_name

EXPERIMENTS = ("single_run", "uniqueness_probe", "doubling", "harnack_suite", "invariant_suite", "sweep")


class ConfigError(ValueError):
    """Raised for schema violations; ``errors`` holds ``(json_pointer, message)`` pairs."""

    def __init__(self, errors: list[tuple[str, str]]):
        self.errors = errors
        super().__init__("; ".join(f"{p}: {m}" for p, m in errors))


def load_schema() -> dict:
    text = resources.files("mcflab").joinpath("schema/experiment.schema.json").read_text()
    return json.loads(text)


def _pointer(parts) -> str:
    return "/" + "/".join(str(p).replace("~", "~0").replace("/", "~1") for p in parts) if parts else "/"


def _describe(err: jsonschema.ValidationError) -> list[tuple[str, str]]:
    path = list(err.absolute_path)
    if err.validator == "required" and isinstance(err.instance, dict):
        missing = [k for k in err.validator_value if k not in err.instance]
        return [(_pointer(path + [k]), "required property is missing") for k in missing]
    if err.validator == "additionalProperties" and isinstance(err.instance, dict):
        allowed = set(err.schema.get("properties", {}))
        extra = sorted(k for k in err.instance if k not in allowed)
        return [(_pointer(path + [k]), "unknown key") for k in extra]
    if err.validator == "propertyNames" or "propertyNames" in err.absolute_schema_path:
        return [(_pointer(path + [err.instance]), "unknown key")]
    return [(_pointer(path), err.message)]


def validate(raw: dict) -> None:
    validator = jsonschema.Draft202012Validator(load_schema())
    errors = []
    for err in sorted(validator.iter_errors(raw), key=lambda e: list(map(str, e.absolute_path))):
        # if/then wrappers report the same failure twice; keep the leaf ones
        if err.validator in ("if", "allOf"):
            continue
        errors.extend(_describe(err))
    if errors:
        seen, unique = set(), []
        for pointer, msg in errors:
            if pointer not in seen:
                seen.add(pointer)
                unique.append((pointer, msg))
        raise ConfigError(unique)


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=True)


def config_hash(raw: dict) -> str:
    """SHA-256 of the canonical JSON form; independent of key order and whitespace."""
    return hashlib.sha256(canonical_json(raw).encode()).hexdigest()


@dataclass(frozen=True)
class ExperimentConfig:
    raw: dict

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        validate(raw)
        return cls(copy.deepcopy(raw))

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentConfig":
        try:
            raw = json.loads(Path(path).read_text())
        except FileNotFoundError:
            raise ConfigError([("/", f"config file not found: {path}")]) from None
        except json.JSONDecodeError as exc:
            raise ConfigError([("/", f"invalid JSON: {exc}")]) from None
        if not isinstance(raw, dict):
            raise ConfigError([("/", "top level must be an object")])
        return cls.from_dict(raw)

    @property
    def experiment(self) -> str:
        return self.raw["experiment"]

    @property
    def seed(self) -> int:
        return int(self.raw.get("seed", 0))

    @property
    def hash(self) -> str:
        return config_hash(self.raw)

    @property
    def name(self) -> str:
        return self.raw.get("name", f"{self.experiment}-{self.hash[:10]}")

    @property
    def workers(self) -> int:
        return int(self.raw.get("workers", 1))


# --------------------------------------------------------------------------
# construction helpers
# --------------------------------------------------------------------------


def build_grid(spec: dict):
    kind = spec["kind"]
    if kind == "1d":
        return Grid1D.from_spacing(spec["x_min"], spec["x_max"], spec["h"])
    if kind == "radial":
        return RadialGrid.from_spacing(spec["r_max"], spec["h"], spec.get("ambient_dim", 2))
    if kind == "2d":
        return TensorGrid2D.square(spec["half_width"], spec["h"])
    raise ValueError(f"grid kind {kind!r} is not a fixed grid")


def build_datum(spec: dict, seed: int = 0, grid=None) -> initdata.InitialDatum:
    params = dict(spec.get("params", {}))
    if spec["name"] == "random_lipschitz":
        if not isinstance(grid, Grid1D):
            raise ValueError("random_lipschitz data need a 1D grid")
        datum = initdata.random_lipschitz(seed, params.get("L", 1.0), grid)
    else:
        datum = initdata.builtin(spec["name"], **params)
    shift = spec.get("shift", 0.0)
    return datum.shifted(shift) if shift else datum


def build_flow(spec: dict, **overrides) -> FlowConfig:
    kw = {k: v for k, v in spec.items() if k != "policy"}
    kw["policy"] = policy_from_name(spec.get("policy", "linear"))
    kw["snapshot_times"] = tuple(spec.get("snapshot_times", ()))
    kw.update(overrides)
    return FlowConfig(**kw)


def tolerance(spec: dict | None, h: float, dt: float = 0.0, default: dict | None = None) -> float:
    spec = spec if spec is not None else (default or {})
    return spec.get("abs", 0.0) + spec.get("h1", 0.0) * h + spec.get("h2", 0.0) * h * h + spec.get("dt", 0.0) * dt


def set_path(raw: dict, dotted: str, value) -> dict:
    out = copy.deepcopy(raw)
    node = out
    keys = dotted.split(".")
    for k in keys[:-1]:
        node = node.setdefault(k, {})
    node[keys[-1]] = value
    return out
