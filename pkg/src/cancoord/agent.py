"""Cognitive-function runtime: table predictor, learning cycle, and CF-side protocol behavior."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted, column_or_1d

from .domain import CfDescriptor, KpiSample, ParameterGrid
from .errors import InsufficientDataError, ProtocolError, ValidationError
from .transport import (
    CONFIG_UPDATE,
    INFO_REQUEST,
    CoordMessage,
    ack,
    info_response,
    protocol_error,
    recalc_request,
)
from .utility import (
    OptimalConfigRange,
    UtilityScale,
    UtilityTable,
    optimal_config_range,
    ranges_identical,
    utility_table,
)


class TablePredictor(RegressorMixin, BaseEstimator):
    """Per-grid-point mean of observed objectives, linearly interpolated.

    Samples are snapped to the nearest grid point and averaged there. Grid
    points without samples are filled by linear interpolation between the
    nearest populated neighbors, and by the nearest populated value past
    either end.

    Parameters
    ----------
    grid : ParameterGrid
        The parameter axis the table is defined on.
    """

    def __init__(self, grid: ParameterGrid):
        self.grid = grid

    def fit(self, X, y):
        x = column_or_1d(np.asarray(X, dtype=float), warn=False)
        y = column_or_1d(np.asarray(y, dtype=float), warn=False)
        if len(x) != len(y):
            raise ValidationError("X and y differ in length")
        if len(x) < 2:
            raise InsufficientDataError(f"training needs at least 2 samples, got {len(x)}")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise ValidationError("training samples must be finite")
        spec = self.grid.spec
        if np.any(x < spec.min) or np.any(x > spec.max):
            raise ValidationError(f"sample parameter values fall outside [{spec.min}, {spec.max}]")

        grid = np.asarray(self.grid.values)
        # same nearest-point rule as snap_to_grid: midpoints go down
        idx = np.ceil((x - spec.min) / spec.step - 0.5).astype(int).clip(0, len(grid) - 1)
        self.counts_ = np.bincount(idx, minlength=len(grid))
        filled = np.flatnonzero(self.counts_)
        # fsum is exactly rounded, so bucket means do not depend on sample order
        means = np.array([math.fsum(y[idx == i]) / self.counts_[i] for i in filled])
        self.table_ = np.interp(grid, grid[filled], means)
        return self

    def predict(self, X):
        check_is_fitted(self, "table_")
        x = column_or_1d(np.asarray(X, dtype=float), warn=False)
        return np.interp(x, np.asarray(self.grid.values), self.table_)


def train(samples: Sequence[KpiSample], grid: ParameterGrid) -> TablePredictor:
    if len(samples) < 2:
        raise InsufficientDataError(f"training needs at least 2 samples, got {len(samples)}")
    x = [s.parameter_value for s in samples]
    y = [s.objective_value for s in samples]
    return TablePredictor(grid).fit(x, y)


@dataclass(frozen=True)
class CfState:
    """Everything one CF owns. Replaced, never mutated, by each cycle."""

    descriptor: CfDescriptor
    grid: ParameterGrid
    predictor: TablePredictor
    samples: tuple = ()
    scale: UtilityScale = field(default_factory=UtilityScale)
    threshold_pct: float = 5.0
    minimizing: bool = False
    last_range: Optional[OptimalConfigRange] = None
    cycle_index: int = 0

    def __post_init__(self):
        if self.grid.name not in self.descriptor.params_written:
            raise ValidationError(f"{self.cf_id} does not write parameter {self.grid.name!r}")
        if self.last_range is not None and self.last_range.parameter != self.grid.name:
            raise ValidationError("last_range parameter does not match the CF's parameter")

    @property
    def cf_id(self) -> str:
        return self.descriptor.cf_id

    @property
    def parameter(self) -> str:
        return self.grid.name

    def utility_table(self, grid_values: Sequence[float] | None = None) -> UtilityTable:
        values = self.grid.values if grid_values is None else tuple(grid_values)
        predicted = self.predictor.predict(values)
        return utility_table(self.parameter, values, predicted, scale=self.scale, minimizing=self.minimizing)

    def to_dict(self) -> dict:
        return {
            "descriptor": self.descriptor.to_dict(),
            "grid": self.grid.to_dict(),
            "table": list(self.predictor.table_),
            "samples": [s.to_dict() for s in self.samples],
            "scale": self.scale.to_dict(),
            "threshold_pct": self.threshold_pct,
            "minimizing": self.minimizing,
            "last_range": None if self.last_range is None else self.last_range.to_dict(),
            "cycle_index": self.cycle_index,
        }


def new_cf(descriptor: CfDescriptor, grid: ParameterGrid, samples: Sequence[KpiSample], *,
           scale: UtilityScale | None = None, threshold_pct: float = 5.0, minimizing: bool = False) -> CfState:
    """Train a fresh CF on its offline dataset. No range is recorded until the first cycle."""
    samples = tuple(samples)
    return CfState(descriptor, grid, train(samples, grid), samples, scale or UtilityScale(),
                   threshold_pct, minimizing)


def learning_cycle(state: CfState, fresh_samples: Sequence[KpiSample]) -> tuple[CfState, Optional[CoordMessage]]:
    samples = state.samples + tuple(fresh_samples)
    predictor = train(samples, state.grid)
    state = replace(state, predictor=predictor, samples=samples)
    new_range = optimal_config_range(state.utility_table(), state.threshold_pct)

    request = None
    if state.last_range is not None and not ranges_identical(new_range, state.last_range):
        request = recalc_request(state.cf_id, state.parameter)
    return replace(state, last_range=new_range, cycle_index=state.cycle_index + 1), request


def answer_info_request(state: CfState, parameter: str, grid: Sequence[float] | None = None):
    """Current range plus the utility table tabulated on the announced grid."""
    if parameter != state.parameter:
        raise ProtocolError(f"{state.cf_id} does not control parameter {parameter!r}")
    table = state.utility_table(grid)
    current = state.last_range
    if current is None:
        current = optimal_config_range(state.utility_table(), state.threshold_pct)
    return current, table


def handle_message(state: CfState, msg: CoordMessage) -> Optional[CoordMessage]:
    """CF reaction to a controller message; returns the reply, if any."""
    if msg.kind == INFO_REQUEST:
        try:
            range_, table = answer_info_request(state, msg.payload["parameter"], msg.payload["grid"])
        except (ProtocolError, ValidationError) as exc:
            return protocol_error(state.cf_id, str(exc), msg.request_id)
        return info_response(state.cf_id, msg.request_id, range_, table)
    if msg.kind == CONFIG_UPDATE:
        return ack(state.cf_id, msg.request_id, CONFIG_UPDATE)
    return None
