"""Utility normalization and optimal-config-range extraction.

A CF turns its raw objective curve into a utility on a common scale so the
Controller can compare CFs with different units, and reports the contiguous
parameter interval in which its objective stays close to its best value.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Mapping, Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .domain import GRID_TOL, KpiSample, _real
from .errors import DegenerateObjectiveError, ValidationError

# relative slack when comparing utilities against the range threshold
RANGE_RTOL = 1e-12


@dataclass(frozen=True)
class UtilityScale:
    lo: float = 0.0
    hi: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "lo", _real(self.lo, "scale.lo"))
        object.__setattr__(self, "hi", _real(self.hi, "scale.hi"))
        if not self.lo < self.hi:
            raise ValidationError(f"utility scale needs lo < hi, got ({self.lo}, {self.hi})")

    def to_dict(self) -> dict:
        return {"lo": self.lo, "hi": self.hi}

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "UtilityScale":
        return cls(d.get("lo", 0.0), d.get("hi", 1.0))


@dataclass(frozen=True)
class UtilityTable:
    """A CF's utility sampled on a parameter grid. This is the wire form of a utility function."""

    parameter: str
    grid: tuple
    utilities: tuple

    def __post_init__(self):
        grid = tuple(_real(g, "grid value") for g in self.grid)
        utilities = tuple(_real(u, "utility") for u in self.utilities)
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "utilities", utilities)
        if not self.parameter:
            raise ValidationError("utility table needs a parameter name")
        if len(grid) != len(utilities):
            raise ValidationError("utility table grid and utilities differ in length")
        if len(grid) < 2:
            raise ValidationError("utility table needs at least 2 points")
        if any(b <= a for a, b in zip(grid, grid[1:])):
            raise ValidationError("utility table grid must be strictly increasing")
        if any(u < 0 for u in utilities):
            raise ValidationError("utilities must be nonnegative")

    def __len__(self):
        return len(self.grid)

    def value_at(self, x: float) -> float:
        for g, u in zip(self.grid, self.utilities):
            if abs(g - x) <= GRID_TOL:
                return u
        raise ValidationError(f"{x!r} is not a grid point of the {self.parameter} utility table")

    def argmax(self) -> float:
        """Leftmost grid value with the maximal utility."""
        return self.grid[int(np.argmax(self.utilities))]

    def scaled(self, factor: float) -> "UtilityTable":
        return UtilityTable(self.parameter, self.grid, tuple(u * factor for u in self.utilities))

    def to_dict(self) -> dict:
        return {"parameter": self.parameter, "grid": list(self.grid), "utilities": list(self.utilities)}

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "UtilityTable":
        try:
            return cls(d["parameter"], tuple(d["grid"]), tuple(d["utilities"]))
        except (KeyError, TypeError) as exc:
            raise ValidationError(f"malformed utility table: {exc}") from None


@dataclass(frozen=True)
class OptimalConfigRange:
    parameter: str
    min_value: float
    max_value: float
    threshold_pct: float

    def __post_init__(self):
        for attr in ("min_value", "max_value", "threshold_pct"):
            object.__setattr__(self, attr, _real(getattr(self, attr), attr))
        if self.min_value > self.max_value:
            raise ValidationError(f"range needs min_value <= max_value, got [{self.min_value}, {self.max_value}]")
        if not 0 < self.threshold_pct < 100:
            raise ValidationError(f"threshold_pct must be in (0, 100), got {self.threshold_pct}")

    def contains(self, x: float) -> bool:
        return self.min_value - GRID_TOL <= x <= self.max_value + GRID_TOL

    def to_dict(self) -> dict:
        return {
            "parameter": self.parameter,
            "min_value": self.min_value,
            "max_value": self.max_value,
            "threshold_pct": self.threshold_pct,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "OptimalConfigRange":
        try:
            return cls(d["parameter"], d["min_value"], d["max_value"], d["threshold_pct"])
        except (KeyError, TypeError) as exc:
            raise ValidationError(f"malformed optimal-config-range: {exc}") from None


def _linear_map(values: np.ndarray, lo: float, hi: float) -> np.ndarray:
    if np.any(values < 0):
        raise ValidationError("linear normalization needs nonnegative objective values")
    maxv = float(values.max())
    if not maxv > 0:
        raise DegenerateObjectiveError(f"maximum objective value must be positive, got {maxv}")
    out = lo + (values / maxv) * (hi - lo)
    out = np.clip(out, lo, hi)
    out[values == maxv] = hi
    return out


def _invert(values: np.ndarray) -> np.ndarray:
    return values.max() - values


def normalize_linear(raw: Sequence[KpiSample], scale: UtilityScale = UtilityScale(),
                     parameter: str = "parameter") -> UtilityTable:
    """Map each sample's objective ``v`` to ``lo + v / maxv * (hi - lo)``, sorted by parameter value."""
    raw = sorted(raw, key=lambda s: s.parameter_value)
    if not raw:
        raise ValidationError("cannot normalize an empty sample list")
    grid = np.array([s.parameter_value for s in raw])
    values = np.array([s.objective_value for s in raw])
    if np.any(np.diff(grid) <= 0):
        raise ValidationError("samples must have distinct parameter values")
    utilities = _linear_map(values, scale.lo, scale.hi)
    return UtilityTable(parameter, tuple(grid), tuple(utilities))


def invert_for_minimization(raw: Sequence[KpiSample]) -> list[KpiSample]:
    """Turn a minimized objective into a maximized one via ``max_observed - v``."""
    if not raw:
        raise ValidationError("cannot invert an empty sample list")
    top = max(s.objective_value for s in raw)
    return [KpiSample(s.parameter_value, top - s.objective_value) for s in raw]


def utility_table(parameter: str, grid: Sequence[float], objective: Sequence[float], *,
                  scale: UtilityScale = UtilityScale(), minimizing: bool = False) -> UtilityTable:
    """Build a named utility table from an objective curve tabulated on ``grid``."""
    values = np.asarray(objective, dtype=float)
    if minimizing:
        values = _invert(values)
    return UtilityTable(parameter, tuple(grid), tuple(_linear_map(values, scale.lo, scale.hi)))


def optimal_config_range(table: UtilityTable, threshold_pct: float) -> OptimalConfigRange:
    if not len(table):
        raise ValidationError("empty utility table")
    if not 0 < threshold_pct < 100:
        raise ValidationError(f"threshold_pct must be in (0, 100), got {threshold_pct}")
    u = np.asarray(table.utilities)
    best = int(np.argmax(u))
    cutoff = u[best] * (1 - threshold_pct / 100)
    eligible = u >= cutoff - RANGE_RTOL * abs(u[best])
    lo = best
    while lo > 0 and eligible[lo - 1]:
        lo -= 1
    hi = best
    while hi < len(u) - 1 and eligible[hi + 1]:
        hi += 1
    return OptimalConfigRange(table.parameter, table.grid[lo], table.grid[hi], threshold_pct)


def ranges_identical(a: OptimalConfigRange, b: OptimalConfigRange) -> bool:
    if a.parameter != b.parameter:
        raise ValidationError(f"cannot compare ranges over {a.parameter!r} and {b.parameter!r}")
    return (math.isclose(a.min_value, b.min_value, rel_tol=0, abs_tol=GRID_TOL)
            and math.isclose(a.max_value, b.max_value, rel_tol=0, abs_tol=GRID_TOL))


class LinearUtilityScaler(TransformerMixin, BaseEstimator):
    """Estimator form of the linear utility map.

    ``fit`` learns the observed maximum (after optional inversion for a
    minimized objective); ``transform`` maps objective values onto
    ``[lo, hi]``. Values beyond the fitted maximum are clipped to ``hi``.

    Parameters
    ----------
    lo, hi : float
        Bounds of the utility scale.
    minimizing : bool
        If true, lower objective values receive higher utility.
    """

    def __init__(self, lo=0.0, hi=1.0, minimizing=False):
        self.lo = lo
        self.hi = hi
        self.minimizing = minimizing

    def _prepare(self, y):
        y = check_array(np.asarray(y, dtype=float).reshape(-1, 1), ensure_min_samples=1).ravel()
        return y

    def fit(self, y, _=None):
        scale = UtilityScale(self.lo, self.hi)
        y = self._prepare(y)
        if np.any(y < 0):
            raise ValidationError("linear normalization needs nonnegative objective values")
        self.observed_max_ = float(y.max())
        self.observed_min_ = float(y.min())
        top = self.observed_max_ - self.observed_min_ if self.minimizing else self.observed_max_
        if not top > 0:
            raise DegenerateObjectiveError(f"maximum objective value must be positive, got {top}")
        self.scale_ = scale
        self.max_utility_source_ = top
        return self

    def transform(self, y):
        check_is_fitted(self, "scale_")
        y = self._prepare(y)
        v = self.observed_max_ - y if self.minimizing else y
        v = np.clip(v, 0.0, None)
        out = self.lo + (v / self.max_utility_source_) * (self.hi - self.lo)
        out = np.clip(out, self.lo, self.hi)
        out[v >= self.max_utility_source_] = self.hi
        return out

    def inverse_transform(self, u):
        check_is_fitted(self, "scale_")
        u = self._prepare(u)
        v = (u - self.lo) / (self.hi - self.lo) * self.max_utility_source_
        return self.observed_max_ - v if self.minimizing else v
