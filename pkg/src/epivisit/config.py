"""Run configuration: JSON loading, range checks and schema validation.

This is the only module that reads the configuration file. Relative paths in
the file are resolved against the file's own directory. Keys this package
does not use (``num_procs``, shared-memory buffer sizes, ...) are kept in
``Config.legacy_keys`` so that older configuration files load unmodified.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Any, Mapping

import jsonschema

from .disease import (
    DiseaseModel,
    DwellSpec,
    HealthState,
    ProgressionEdge,
    TransmissionConfiguration,
    default_seir_model,
)
from .errors import ParseError, SchemaParseError, ValidationError

DEFAULT_SCALE = 0.8
SCALE_KEYS = ("mask_inf_scale", "mask_susc_scale", "distancing_inf_scale", "distancing_susc_scale")
PATH_KEYS = ("person_file", "visit_file", "location_file", "output_directory")
REQUIRED_KEYS = ("person_file", "visit_file", "output_directory", "iterations", "initial_exposed", "tau", "contact_probability")
KNOWN_KEYS = frozenset(
    PATH_KEYS
    + SCALE_KEYS
    + ("behavior_model", "num_workers", "iterations", "initial_exposed", "tau", "contact_probability", "seed",
       "disease", "write_local_observables")
)
MAX_SEED = (1 << 64) - 1


def default_schema_path() -> Path:
    return Path(str(resources.files("epivisit") / "schema.json"))


@dataclass(frozen=True)
class BehaviorSpec:
    name: str = "default"
    params: Mapping[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"name": self.name, "params": dict(self.params)}


@dataclass(frozen=True)
class DiseaseModelConfig:
    infectivity: Mapping[HealthState, float]
    susceptibility: Mapping[HealthState, float]
    transmissions: tuple[TransmissionConfiguration, ...]
    progressions: tuple[ProgressionEdge, ...]

    @classmethod
    def default(cls) -> "DiseaseModelConfig":
        m = default_seir_model()
        return cls(
            infectivity={s: m.infectivity[s] for s in HealthState},
            susceptibility={s: m.susceptibility[s] for s in HealthState},
            transmissions=m.transmissions,
            progressions=m.progressions,
        )

    def build(self, tau: float) -> DiseaseModel:
        return DiseaseModel(
            infectivity=tuple(float(self.infectivity[s]) for s in HealthState),
            susceptibility=tuple(float(self.susceptibility[s]) for s in HealthState),
            transmissions=tuple(self.transmissions),
            progressions=tuple(self.progressions),
            tau=tau,
        )

    def to_dict(self) -> dict:
        return {
            "infectivity": {s.name: self.infectivity[s] for s in HealthState},
            "susceptibility": {s.name: self.susceptibility[s] for s in HealthState},
            "transmissions": [
                {"entry": t.entry.name, "exit": t.exit.name, "contact": t.contact.name, "weight": t.weight}
                for t in self.transmissions
            ],
            "progressions": [
                {"from": e.source.name, "to": e.target.name, "probability": e.probability, "dwell": e.dwell.to_dict()}
                for e in self.progressions
            ],
        }


@dataclass(frozen=True)
class Config:
    person_file: Path
    visit_file: Path
    output_directory: Path
    iterations: int
    initial_exposed: int
    tau: float
    contact_probability: float
    behavior_model: BehaviorSpec = field(default_factory=BehaviorSpec)
    location_file: Path | None = None
    num_workers: int = 1
    seed: int = 0
    mask_inf_scale: float = DEFAULT_SCALE
    mask_susc_scale: float = DEFAULT_SCALE
    distancing_inf_scale: float = DEFAULT_SCALE
    distancing_susc_scale: float = DEFAULT_SCALE
    write_local_observables: bool = True
    disease: DiseaseModelConfig = field(default_factory=DiseaseModelConfig.default)
    legacy_keys: Mapping[str, Any] = field(default_factory=dict)

    def disease_model(self) -> DiseaseModel:
        return self.disease.build(self.tau)

    def to_dict(self) -> dict:
        out: dict[str, Any] = dict(self.legacy_keys)
        out.update(
            person_file=str(self.person_file),
            visit_file=str(self.visit_file),
            output_directory=str(self.output_directory),
            iterations=self.iterations,
            initial_exposed=self.initial_exposed,
            tau=self.tau,
            contact_probability=self.contact_probability,
            behavior_model=self.behavior_model.to_dict(),
            num_workers=self.num_workers,
            seed=self.seed,
            write_local_observables=self.write_local_observables,
            disease=self.disease.to_dict(),
        )
        if self.location_file is not None:
            out["location_file"] = str(self.location_file)
        for k in SCALE_KEYS:
            out[k] = getattr(self, k)
        return out

    def replace(self, **changes) -> "Config":
        return replace(self, **changes)


# -- field checks -------------------------------------------------------------


def _number(data: Mapping, key: str, path: str, lo=None, hi=None, integer=False, default=None):
    if key not in data:
        if default is None:
            raise ValidationError(path, "required key missing")
        return default
    v = data[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ValidationError(path, f"expected a number, got {v!r}")
    if integer and not isinstance(v, int):
        raise ValidationError(path, f"expected an integer, got {v!r}")
    if isinstance(v, float) and not math.isfinite(v):
        raise ValidationError(path, f"must be finite, got {v!r}")
    if lo is not None and v < lo:
        raise ValidationError(path, f"{v!r} is below the minimum {lo}")
    if hi is not None and v > hi:
        raise ValidationError(path, f"{v!r} is above the maximum {hi}")
    return v


def _path(data: Mapping, key: str, base_dir: Path, required=True) -> Path | None:
    if key not in data or data[key] is None:
        if required:
            raise ValidationError(key, "required key missing")
        return None
    v = data[key]
    if not isinstance(v, str) or not v:
        raise ValidationError(key, f"expected a non-empty path string, got {v!r}")
    p = Path(v).expanduser()
    return p if p.is_absolute() else (base_dir / p)


def _state(v, path: str) -> HealthState:
    try:
        return HealthState.parse(v)
    except (ValueError, KeyError):
        raise ValidationError(path, f"unknown health state {v!r}") from None


def _dwell(d, path: str) -> DwellSpec:
    if not isinstance(d, Mapping):
        raise ValidationError(path, "expected an object")
    kind = d.get("kind")
    if kind == "fixed":
        return DwellSpec.fixed(float(_number(d, "days", path + ".days", lo=0)))
    if kind in ("gamma", "discretized-gamma"):
        shape = _number(d, "shape", path + ".shape")
        scale = _number(d, "scale", path + ".scale")
        if shape <= 0:
            raise ValidationError(path + ".shape", "must be > 0")
        if scale <= 0:
            raise ValidationError(path + ".scale", "must be > 0")
        return DwellSpec.gamma(float(shape), float(scale))
    raise ValidationError(path + ".kind", f"unknown dwell kind {kind!r}")


def _disease(d, path: str = "disease") -> DiseaseModelConfig:
    base = DiseaseModelConfig.default()
    if d is None:
        return base
    if not isinstance(d, Mapping):
        raise ValidationError(path, "expected an object")
    maps = {}
    for name in ("infectivity", "susceptibility"):
        values = dict(getattr(base, name))
        for k, v in (d.get(name) or {}).items():
            values[_state(k, f"{path}.{name}.{k}")] = float(_number({k: v}, k, f"{path}.{name}.{k}", lo=0))
        maps[name] = values

    transmissions = base.transmissions
    if "transmissions" in d:
        transmissions = []
        for i, t in enumerate(d["transmissions"]):
            p = f"{path}.transmissions[{i}]"
            if not isinstance(t, Mapping):
                raise ValidationError(p, "expected an object")
            transmissions.append(
                TransmissionConfiguration(
                    _state(t.get("entry"), p + ".entry"),
                    _state(t.get("exit"), p + ".exit"),
                    _state(t.get("contact"), p + ".contact"),
                    float(_number(t, "weight", p + ".weight", lo=0, default=1.0)),
                )
            )
        transmissions = tuple(transmissions)

    progressions = base.progressions
    if "progressions" in d:
        progressions = []
        for i, e in enumerate(d["progressions"]):
            p = f"{path}.progressions[{i}]"
            if not isinstance(e, Mapping):
                raise ValidationError(p, "expected an object")
            progressions.append(
                ProgressionEdge(
                    _state(e.get("from"), p + ".from"),
                    _state(e.get("to"), p + ".to"),
                    float(_number(e, "probability", p + ".probability", lo=0, hi=1)),
                    _dwell(e.get("dwell"), p + ".dwell"),
                )
            )
        progressions = tuple(progressions)
        sums: dict[HealthState, float] = {}
        for e in progressions:
            sums[e.source] = sums.get(e.source, 0.0) + e.probability
        for s, total in sums.items():
            if abs(total - 1.0) > 1e-9:
                raise ValidationError(f"{path}.progressions", f"outgoing probabilities of {s.name} sum to {total}")

    return DiseaseModelConfig(maps["infectivity"], maps["susceptibility"], transmissions, progressions)


def _behavior(v) -> BehaviorSpec:
    if v is None:
        return BehaviorSpec()
    if isinstance(v, str):
        return BehaviorSpec(v, {})
    if isinstance(v, Mapping) and isinstance(v.get("name"), str):
        params = v.get("params") or {}
        if not isinstance(params, Mapping):
            raise ValidationError("behavior_model.params", "expected an object")
        return BehaviorSpec(v["name"], dict(params))
    raise ValidationError("behavior_model", f"expected a model name or {{name, params}}, got {v!r}")


def config_from_dict(data: Mapping[str, Any], base_dir: Path | str = ".") -> Config:
    """Build a :class:`Config` from parsed JSON, raising :class:`ValidationError` on bad values."""
    if not isinstance(data, Mapping):
        raise ValidationError("<root>", "configuration must be a JSON object")
    base_dir = Path(base_dir)
    for key in REQUIRED_KEYS:
        if key not in data:
            raise ValidationError(key, "required key missing")
    wlo = data.get("write_local_observables", True)
    if not isinstance(wlo, bool):
        raise ValidationError("write_local_observables", "expected true or false")
    return Config(
        person_file=_path(data, "person_file", base_dir),
        visit_file=_path(data, "visit_file", base_dir),
        output_directory=_path(data, "output_directory", base_dir),
        location_file=_path(data, "location_file", base_dir, required=False),
        iterations=_number(data, "iterations", "iterations", lo=0, integer=True),
        initial_exposed=_number(data, "initial_exposed", "initial_exposed", lo=0, integer=True),
        tau=float(_number(data, "tau", "tau", lo=0)),
        contact_probability=float(_number(data, "contact_probability", "contact_probability", lo=0, hi=1)),
        behavior_model=_behavior(data.get("behavior_model")),
        num_workers=_number(data, "num_workers", "num_workers", lo=1, integer=True, default=1),
        seed=_number(data, "seed", "seed", lo=0, hi=MAX_SEED, integer=True, default=0),
        write_local_observables=wlo,
        disease=_disease(data.get("disease")),
        legacy_keys={k: v for k, v in data.items() if k not in KNOWN_KEYS},
        **{k: float(_number(data, k, k, lo=0, hi=1, default=DEFAULT_SCALE)) for k in SCALE_KEYS},
    )


def read_json(path) -> Any:
    path = Path(path)
    text = path.read_text()  # FileNotFoundError propagates
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(path, exc.lineno, exc.colno, exc.msg) from None


def load_config(path) -> Config:
    path = Path(path)
    return config_from_dict(read_json(path), base_dir=path.resolve().parent)


# -- schema validation ----------------------------------------------------------


@dataclass(frozen=True)
class Violation:
    path: str
    rule: str
    message: str

    def __str__(self) -> str:
        return f"{self.path or '<root>'}: [{self.rule}] {self.message}"


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[Violation, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self) -> bool:
        return self.ok

    def __len__(self) -> int:
        return len(self.violations)

    def __str__(self) -> str:
        if self.ok:
            return "configuration is valid"
        return "\n".join(str(v) for v in self.violations)


def _json_path(err: jsonschema.ValidationError) -> str:
    parts = []
    for p in err.absolute_path:
        if isinstance(p, int):
            parts.append(f"[{p}]")
        else:
            parts.append(("." if parts else "") + str(p))
    path = "".join(parts)
    if err.validator == "required":
        # point at the missing key itself
        missing = err.message.split("'")[1] if "'" in err.message else ""
        path = f"{path}.{missing}" if path else missing
    return path


def load_schema(schema) -> dict:
    try:
        data = read_json(schema)
    except ParseError as exc:
        raise SchemaParseError(str(exc)) from None
    try:
        jsonschema.validators.validator_for(data).check_schema(data)
    except jsonschema.SchemaError as exc:
        raise SchemaParseError(f"{schema}: invalid schema: {exc.message}") from None
    return data


def validate_config(config: Config | Mapping[str, Any], schema) -> ValidationReport:
    """Check a configuration (object or raw parsed JSON) against a JSON schema file."""
    schema_data = load_schema(schema)
    data = config.to_dict() if isinstance(config, Config) else config
    cls = jsonschema.validators.validator_for(schema_data)
    validator = cls(schema_data)
    errors = sorted(validator.iter_errors(data), key=lambda e: (list(map(str, e.absolute_path)), e.validator))
    return ValidationReport(tuple(Violation(_json_path(e), str(e.validator), e.message) for e in errors))
