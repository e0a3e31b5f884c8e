"""Core value types: parameters, grids, configurations, KPI samples, CF descriptors.

Every type is an immutable dataclass with a ``to_dict``/``from_dict`` pair
producing the canonical JSON object form used on the wire and in logs.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Any, Iterable, Mapping

from .errors import OutOfRangeError, ValidationError

GRID_TOL = 1e-9


def _real(value, name):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ValidationError(f"{name} must be a number, got {value!r}")
    value = float(value)
    if not math.isfinite(value):
        raise ValidationError(f"{name} must be finite, got {value!r}")
    return value


def _ident(value, name):
    if not isinstance(value, str) or not value:
        raise ValidationError(f"{name} must be a nonempty string, got {value!r}")
    return value


@dataclass(frozen=True)
class ParameterSpec:
    name: str
    unit: str
    min: float
    max: float
    step: float

    def __post_init__(self):
        _ident(self.name, "parameter name")
        if not isinstance(self.unit, str):
            raise ValidationError(f"unit must be a string, got {self.unit!r}")
        for attr in ("min", "max", "step"):
            object.__setattr__(self, attr, _real(getattr(self, attr), f"{self.name}.{attr}"))
        if not self.min < self.max:
            raise ValidationError(f"{self.name}: min must be < max")
        if not self.step > 0:
            raise ValidationError(f"{self.name}: step must be > 0")
        intervals = (self.max - self.min) / self.step
        if abs(intervals - round(intervals)) > GRID_TOL:
            raise ValidationError(
                f"{self.name}: step {self.step} does not divide [{self.min}, {self.max}] evenly"
            )

    @property
    def n_points(self) -> int:
        return int(round((self.max - self.min) / self.step)) + 1

    def to_dict(self) -> dict:
        return {"name": self.name, "unit": self.unit, "min": self.min, "max": self.max, "step": self.step}

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "ParameterSpec":
        try:
            return cls(d["name"], d.get("unit", ""), d["min"], d["max"], d["step"])
        except KeyError as exc:
            raise ValidationError(f"parameter spec missing field {exc}") from None


@dataclass(frozen=True)
class ParameterGrid:
    spec: ParameterSpec
    values: tuple

    def __post_init__(self):
        values = tuple(float(v) for v in self.values)
        object.__setattr__(self, "values", values)
        if len(values) < 2:
            raise ValidationError("grid needs at least 2 points")
        if abs(values[0] - self.spec.min) > GRID_TOL or abs(values[-1] - self.spec.max) > GRID_TOL:
            raise ValidationError("grid must start at spec.min and end at spec.max")
        for a, b in zip(values, values[1:]):
            if abs((b - a) - self.spec.step) > GRID_TOL:
                raise ValidationError("grid spacing must equal spec.step")

    @property
    def name(self) -> str:
        return self.spec.name

    def __len__(self):
        return len(self.values)

    def __iter__(self):
        return iter(self.values)

    def index_of(self, value: float) -> int:
        """Index of ``value`` on the grid; raises if it is not a grid point."""
        i = int(round((value - self.spec.min) / self.spec.step))
        if 0 <= i < len(self.values) and abs(self.values[i] - value) <= GRID_TOL:
            return i
        raise ValidationError(f"{value!r} is not on the {self.name} grid")

    def contains(self, value: float) -> bool:
        try:
            self.index_of(value)
        except ValidationError:
            return False
        return True

    def to_dict(self) -> dict:
        return {"spec": self.spec.to_dict(), "values": list(self.values)}

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "ParameterGrid":
        return cls(ParameterSpec.from_dict(d["spec"]), tuple(d["values"]))


def build_grid(spec: ParameterSpec) -> ParameterGrid:
    n = spec.n_points
    values = [spec.min + i * spec.step for i in range(n)]
    # pin the last point so accumulated float error never moves the upper bound
    values[-1] = spec.max
    return ParameterGrid(spec, tuple(values))


def snap_to_grid(grid: ParameterGrid, v: float) -> float:
    """Nearest grid value to ``v``. Exact midpoints go to the lower point."""
    spec = grid.spec
    half = spec.step / 2
    if not (spec.min - half <= v <= spec.max + half):
        raise OutOfRangeError(f"{v!r} is outside the {spec.name} grid [{spec.min}, {spec.max}]")
    k = math.ceil((v - spec.min) / spec.step - 0.5)
    k = min(max(k, 0), len(grid.values) - 1)
    return grid.values[k]


@dataclass(frozen=True)
class Configuration:
    entries: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        entries = {_ident(k, "parameter name"): _real(v, k) for k, v in dict(self.entries).items()}
        object.__setattr__(self, "entries", MappingProxyType(dict(sorted(entries.items()))))

    def __getitem__(self, name):
        return self.entries[name]

    def __contains__(self, name):
        return name in self.entries

    def __eq__(self, other):
        if not isinstance(other, Configuration):
            return NotImplemented
        return dict(self.entries) == dict(other.entries)

    def __hash__(self):
        return hash(tuple(self.entries.items()))

    def with_value(self, name: str, value: float) -> "Configuration":
        entries = dict(self.entries)
        entries[name] = value
        return Configuration(entries)

    def validate(self, grids: Mapping[str, ParameterGrid]) -> "Configuration":
        for name, value in self.entries.items():
            if name not in grids:
                raise ValidationError(f"configuration names unknown parameter {name!r}")
            grids[name].index_of(value)
        return self

    def to_dict(self) -> dict:
        return {"entries": dict(self.entries)}

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "Configuration":
        return cls(d["entries"])


@dataclass(frozen=True)
class KpiSample:
    parameter_value: float
    objective_value: float

    def __post_init__(self):
        object.__setattr__(self, "parameter_value", _real(self.parameter_value, "parameter_value"))
        object.__setattr__(self, "objective_value", _real(self.objective_value, "objective_value"))

    def to_dict(self) -> dict:
        return {"parameter_value": self.parameter_value, "objective_value": self.objective_value}

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "KpiSample":
        return cls(d["parameter_value"], d["objective_value"])


def _idset(values: Iterable[str], name: str) -> frozenset:
    if isinstance(values, str):
        raise ValidationError(f"{name} must be a collection of identifiers, not a string")
    return frozenset(_ident(v, name) for v in values)


@dataclass(frozen=True)
class CfDescriptor:
    cf_id: str
    objective_kpi: str
    params_written: frozenset
    kpis_influenced: frozenset = frozenset()
    depends_on: frozenset = frozenset()

    def __post_init__(self):
        _ident(self.cf_id, "cf_id")
        _ident(self.objective_kpi, "objective_kpi")
        object.__setattr__(self, "params_written", _idset(self.params_written, "params_written"))
        object.__setattr__(self, "kpis_influenced", _idset(self.kpis_influenced, "kpis_influenced"))
        object.__setattr__(self, "depends_on", _idset(self.depends_on, "depends_on"))
        if not self.params_written:
            raise ValidationError(f"{self.cf_id}: params_written must be nonempty")

    def to_dict(self) -> dict:
        return {
            "cf_id": self.cf_id,
            "objective_kpi": self.objective_kpi,
            "params_written": sorted(self.params_written),
            "kpis_influenced": sorted(self.kpis_influenced),
            "depends_on": sorted(self.depends_on),
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "CfDescriptor":
        try:
            return cls(
                d["cf_id"],
                d["objective_kpi"],
                d["params_written"],
                d.get("kpis_influenced", ()),
                d.get("depends_on", ()),
            )
        except KeyError as exc:
            raise ValidationError(f"CF descriptor missing field {exc}") from None
