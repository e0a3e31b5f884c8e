"""Scenario files: one JSON document describing parameters, CFs, environment and run length."""
from __future__ import annotations

import json
import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Mapping

from .domain import CfDescriptor, Configuration, ParameterGrid, ParameterSpec, build_grid
from .envsim import KPIS, EnvConfig
from .errors import ScenarioError, ValidationError
from .utility import UtilityScale

REFERENCE_SCENARIO = Path(__file__).parent / "data" / "reference_scenario.json"

_TOP_LEVEL = {"parameters", "cfs", "env", "cycles", "preloaded", "timeout_ticks", "output_dir", "seed", "shifts"}


@dataclass(frozen=True)
class CfBlock:
    descriptor: CfDescriptor
    minimizing: bool = False
    threshold_pct: float = 5.0
    scale: UtilityScale = field(default_factory=UtilityScale)

    @property
    def parameter(self) -> str:
        return next(iter(self.descriptor.params_written))

    def to_dict(self) -> dict:
        d = self.descriptor.to_dict()
        d.update(minimizing=self.minimizing, threshold_pct=self.threshold_pct, scale=self.scale.to_dict())
        return d


@dataclass(frozen=True)
class Shift:
    """Environment override taking effect from ``cycle`` onwards."""

    cycle: int
    changes: Mapping[str, Any]


@dataclass(frozen=True)
class Scenario:
    parameters: tuple
    cfs: tuple
    env: EnvConfig
    cycles: int = 3
    preloaded: Configuration = field(default_factory=Configuration)
    timeout_ticks: int = 10
    output_dir: str = "out"
    seed: int = 7
    shifts: tuple = ()

    @property
    def grids(self) -> dict[str, ParameterGrid]:
        return {p.name: build_grid(p) for p in self.parameters}

    @property
    def descriptors(self) -> list[CfDescriptor]:
        return [b.descriptor for b in self.cfs]

    def env_at(self, cycle: int) -> EnvConfig:
        env = self.env
        for shift in sorted(self.shifts, key=lambda s: s.cycle):
            if shift.cycle <= cycle:
                env = env.with_overrides(**shift.changes)
        return env

    def with_seed(self, seed: int) -> "Scenario":
        return replace(self, seed=seed, env=self.env.with_overrides(seed=seed))


class _At(Exception):
    """Validation failure tagged with the JSON key path where it happened."""

    def __init__(self, keys, message):
        super().__init__(message)
        self.keys = keys
        self.message = message


def _require(d, key, keys):
    if not isinstance(d, Mapping):
        raise _At(keys, "expected a JSON object")
    if key not in d:
        raise _At(keys, f"missing field {key!r}")
    return d[key]


def _int(value, keys, minimum=0):
    if isinstance(value, bool) or not isinstance(value, int) or value < minimum:
        raise _At(keys, f"expected an integer >= {minimum}, got {value!r}")
    return value


def _guard(keys, fn, *args):
    try:
        return fn(*args)
    except (ValidationError, TypeError, KeyError) as exc:
        raise _At(keys, str(exc)) from None


def scenario_from_dict(doc: Mapping[str, Any]) -> Scenario:
    if not isinstance(doc, Mapping):
        raise _At([], "scenario must be a JSON object")
    unknown = set(doc) - _TOP_LEVEL
    if unknown:
        key = sorted(unknown)[0]
        raise _At([key], f"unknown field {key!r}")

    specs = _require(doc, "parameters", [])
    if not isinstance(specs, list) or not specs:
        raise _At(["parameters"], "expected a nonempty list of parameter specs")
    parameters = tuple(_guard(["parameters", i], ParameterSpec.from_dict, s) for i, s in enumerate(specs))
    names = [p.name for p in parameters]
    if len(set(names)) != len(names):
        raise _At(["parameters"], "duplicate parameter names")

    blocks = []
    for i, raw in enumerate(_require(doc, "cfs", [])):
        keys = ["cfs", i]
        d = _guard(keys, CfDescriptor.from_dict, raw)
        if len(d.params_written) != 1:
            raise _At(keys + ["params_written"], "each CF must write exactly one parameter")
        parameter = next(iter(d.params_written))
        if parameter not in names:
            raise _At(keys + ["params_written"], f"CF {d.cf_id} references undeclared parameter {parameter!r}")
        if d.objective_kpi not in KPIS:
            raise _At(keys + ["objective_kpi"], f"objective_kpi must be one of {list(KPIS)}")
        minimizing = raw.get("minimizing", False)
        if not isinstance(minimizing, bool):
            raise _At(keys + ["minimizing"], "minimizing must be true or false")
        threshold = raw.get("threshold_pct", 5.0)
        if isinstance(threshold, bool) or not isinstance(threshold, (int, float)) or not 0 < threshold < 100:
            raise _At(keys + ["threshold_pct"], f"threshold_pct must be in (0, 100), got {threshold!r}")
        scale = _guard(keys + ["scale"], UtilityScale.from_dict, raw.get("scale", {}))
        blocks.append(CfBlock(d, minimizing, float(threshold), scale))
    ids = [b.descriptor.cf_id for b in blocks]
    if len(set(ids)) != len(ids):
        raise _At(["cfs"], "duplicate cf_id")
    if not blocks:
        raise _At(["cfs"], "at least one CF is required")

    seed = _int(doc.get("seed", 7), ["seed"])
    env_doc = dict(doc.get("env", {}))
    if "seed" in env_doc:
        raise _At(["env", "seed"], "set the seed at the top level")
    env = _guard(["env"], EnvConfig.from_dict, {**env_doc, "seed": seed})

    grids = {p.name: build_grid(p) for p in parameters}
    preloaded_doc = doc.get("preloaded", {})
    if not isinstance(preloaded_doc, Mapping):
        raise _At(["preloaded"], "expected an object of parameter values")
    for name, value in preloaded_doc.items():
        if name not in grids:
            raise _At(["preloaded", name], f"unknown parameter {name!r}")
        if isinstance(value, bool) or not isinstance(value, (int, float)) or not grids[name].contains(value):
            raise _At(["preloaded", name], f"preloaded {name}={value!r} is not on the grid")
    preloaded = Configuration(preloaded_doc)

    shifts = []
    for i, raw in enumerate(doc.get("shifts", [])):
        if not isinstance(raw, Mapping):
            raise _At(["shifts", i], "expected an object")
        cycle = _int(_require(raw, "cycle", ["shifts", i]), ["shifts", i, "cycle"], minimum=1)
        changes = {k: v for k, v in raw.items() if k != "cycle"}
        if "seed" in changes:
            raise _At(["shifts", i, "seed"], "shifts cannot change the placement seed")
        _guard(["shifts", i], lambda: env.with_overrides(**changes))
        shifts.append(Shift(cycle, changes))

    return Scenario(
        parameters=parameters,
        cfs=tuple(blocks),
        env=env,
        cycles=_int(doc.get("cycles", 3), ["cycles"]),
        preloaded=preloaded,
        timeout_ticks=_int(doc.get("timeout_ticks", 10), ["timeout_ticks"], minimum=1),
        output_dir=str(doc.get("output_dir", "out")),
        seed=seed,
        shifts=tuple(shifts),
    )


def _locate(text: str, keys) -> int | None:
    """Best-effort line of the innermost named key along ``keys``.

    A list index ``k`` followed by a key selects that key's ``k+1``-th
    occurrence, which is right for lists of uniformly shaped objects.
    """
    line, pos, skip = None, 0, 0
    for key in keys:
        if isinstance(key, int):
            skip = key
            continue
        pattern = re.compile(r'"%s"\s*:' % re.escape(key))
        m = pattern.search(text, pos)
        for _ in range(skip):
            if m is None:
                break
            m = pattern.search(text, m.end())
        skip = 0
        if m is None:
            break
        pos = m.start()
        line = text.count("\n", 0, pos) + 1
    return line if line is not None else (1 if not keys else None)


def load_scenario(path: str | Path) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario: {exc.strerror}", path) from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"invalid JSON: {exc.msg}", path, exc.lineno) from None
    try:
        return scenario_from_dict(doc)
    except _At as exc:
        where = ".".join(str(k) for k in exc.keys) or "<root>"
        raise ScenarioError(f"{where}: {exc.message}", path, _locate(text, exc.keys) or 1) from None
