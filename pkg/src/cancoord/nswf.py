"""Nash social welfare maximization over a discrete candidate set.

Welfare is the product of per-CF utilities. Among welfare-maximal candidates
(relative tolerance ``WELFARE_RTOL``) the one with the smallest spread
between the best- and worst-off CF wins; remaining ties go to the smallest
parameter value.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence, Union

from .domain import GRID_TOL, ParameterGrid
from .errors import ValidationError
from .utility import OptimalConfigRange, UtilityTable

WELFARE_RTOL = 1e-9
# below this the log path loses too much; fall back to a direct product
LOG_FLOOR = 1e-12

Tables = Union[Mapping[str, UtilityTable], Sequence[UtilityTable]]


@dataclass(frozen=True)
class WelfareResult:
    chosen_value: float
    welfare: float
    per_cf_utilities: Mapping[str, float] = field(default_factory=dict)
    utility_spread: float = 0.0
    candidate_count: int = 0

    def to_dict(self) -> dict:
        return {
            "chosen_value": self.chosen_value,
            "welfare": self.welfare,
            "per_cf_utilities": dict(sorted(self.per_cf_utilities.items())),
            "utility_spread": self.utility_spread,
            "candidate_count": self.candidate_count,
        }

    @classmethod
    def from_dict(cls, d) -> "WelfareResult":
        return cls(d["chosen_value"], d["welfare"], dict(d["per_cf_utilities"]),
                   d["utility_spread"], d["candidate_count"])


def _product_log(utilities):
    # fsum is exactly rounded, so the result does not depend on input order
    return math.exp(math.fsum(math.log(u) for u in utilities))


def _product_direct(utilities):
    return math.prod(sorted(utilities))


def nswf_value(utilities: Sequence[float]) -> float:
    utilities = [float(u) for u in utilities]
    for u in utilities:
        if not u >= 0:
            raise ValidationError(f"utilities must be nonnegative, got {u!r}")
    if all(u >= LOG_FLOOR for u in utilities):
        return _product_log(utilities)
    return _product_direct(utilities)


def _named(tables: Tables) -> dict[str, UtilityTable]:
    if isinstance(tables, Mapping):
        return dict(tables)
    width = len(str(max(len(tables) - 1, 0)))
    return {f"cf{i:0{width}d}": t for i, t in enumerate(tables)}


def optimize(tables: Tables, candidates: Sequence[float]) -> WelfareResult:
    """Pick the candidate maximizing the product of utilities.

    ``tables`` is either a mapping ``cf_id -> UtilityTable`` or a plain
    sequence, in which case positional ids ``cf0, cf1, ...`` are used in the
    result. All tables must share parameter and grid.
    """
    named = _named(tables)
    if not named:
        raise ValidationError("optimize needs at least one utility table")
    if not candidates:
        raise ValidationError("optimize needs a nonempty candidate set")
    first = next(iter(named.values()))
    for cf, t in named.items():
        if t.parameter != first.parameter or len(t.grid) != len(first.grid) or any(
            abs(a - b) > GRID_TOL for a, b in zip(t.grid, first.grid)
        ):
            raise ValidationError(f"utility table of {cf!r} does not share the common grid")

    index = {g: i for i, g in enumerate(first.grid)}
    rows = []
    for x in candidates:
        i = index.get(x)
        if i is None:
            i = _lookup(first.grid, x)
        per_cf = {cf: t.utilities[i] for cf, t in named.items()}
        values = list(per_cf.values())
        rows.append((first.grid[i], nswf_value(values), max(values) - min(values), per_cf))

    best_welfare = max(r[1] for r in rows)
    floor = best_welfare - WELFARE_RTOL * best_welfare
    x, w, spread, per_cf = min((r for r in rows if r[1] >= floor), key=lambda r: (r[2], r[0]))
    return WelfareResult(x, w, per_cf, spread, len(rows))


def _lookup(grid, x):
    for i, g in enumerate(grid):
        if abs(g - x) <= GRID_TOL:
            return i
    raise ValidationError(f"candidate {x!r} is not on the utility grid")


def candidate_set(ranges: Sequence[OptimalConfigRange], grid: ParameterGrid) -> list[float]:
    """Grid points inside every range; the full grid when the ranges do not overlap."""
    params = {r.parameter for r in ranges}
    if len(params) > 1:
        raise ValidationError(f"ranges cover different parameters: {sorted(params)}")
    lo = max((r.min_value for r in ranges), default=grid.spec.min)
    hi = min((r.max_value for r in ranges), default=grid.spec.max)
    inside = [g for g in grid.values if lo - GRID_TOL <= g <= hi + GRID_TOL]
    return inside or list(grid.values)
