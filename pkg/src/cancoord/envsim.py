"""Analytic five-cell radio environment producing load and coverage KPIs.

Users are dropped uniformly in a square area. Received power follows a
log-distance model, ``rsrp = txp - (ref_loss + 10 * exponent * log10(d))``,
each user attaches to its strongest cell, and the KPIs of the center cell
(index 0) are

* load: number of users served by the center cell;
* coverage: fraction of all users whose best RSRP clears ``rsrp_threshold``.

Both are non-decreasing in the center cell's transmit power, which sets MLB
(pulls power down) against CCO (pulls power up).
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .domain import KpiSample, ParameterGrid
from .errors import ValidationError

DEFAULT_KPI_FOR_CF = {"MLB": "load", "CCO": "coverage"}
KPIS = ("load", "coverage")


def _default_cells(side):
    return ((side / 2, side / 2), (0.0, 0.0), (side, 0.0), (0.0, side), (side, side))


@dataclass(frozen=True)
class EnvConfig:
    area_side: float = 2000.0
    cells: tuple = field(default=None)
    users: int = 100
    placements: int = 20
    seed: int = 7
    pathloss_exponent: float = 3.5
    ref_loss: float = 40.0
    neighbor_txp: float = 65.0
    rsrp_threshold: float = -100.0
    min_distance: float = 1.0

    def __post_init__(self):
        if self.cells is None:
            object.__setattr__(self, "cells", _default_cells(self.area_side))
        cells = tuple((float(x), float(y)) for x, y in self.cells)
        object.__setattr__(self, "cells", cells)
        if not self.area_side > 0:
            raise ValidationError("area_side must be positive")
        if len(cells) < 1:
            raise ValidationError("at least one cell is required")
        if self.users <= 0:
            raise ValidationError("user count must be positive")
        if self.placements <= 0:
            raise ValidationError("placements must be positive")
        if not self.pathloss_exponent > 2:
            raise ValidationError("path-loss exponent must exceed 2")
        if not self.min_distance > 0:
            raise ValidationError("min_distance must be positive")

    def placement_seeds(self) -> list[int]:
        """Independent per-placement seeds derived from ``seed``."""
        return [int(s) for s in np.random.SeedSequence(self.seed).generate_state(self.placements)]

    def with_overrides(self, **changes) -> "EnvConfig":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        return {
            "area_side": self.area_side,
            "cells": [list(c) for c in self.cells],
            "users": self.users,
            "placements": self.placements,
            "seed": self.seed,
            "pathloss_exponent": self.pathloss_exponent,
            "ref_loss": self.ref_loss,
            "neighbor_txp": self.neighbor_txp,
            "rsrp_threshold": self.rsrp_threshold,
            "min_distance": self.min_distance,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "EnvConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ValidationError(f"unknown env fields: {sorted(unknown)}")
        kwargs = dict(d)
        if "cells" in kwargs and kwargs["cells"] is not None:
            kwargs["cells"] = tuple(tuple(c) for c in kwargs["cells"])
        return cls(**kwargs)


@dataclass(frozen=True)
class ScenarioSnapshot:
    users: np.ndarray
    serving: np.ndarray
    rsrp: np.ndarray  # best RSRP per user, dBm


def _placement(env: EnvConfig, placement_seed: int) -> np.ndarray:
    rng = np.random.default_rng(placement_seed)
    return rng.uniform(0.0, env.area_side, size=(env.users, 2))


def _path_loss(env: EnvConfig, users: np.ndarray) -> np.ndarray:
    cells = np.asarray(env.cells)
    d = np.linalg.norm(users[:, None, :] - cells[None, :, :], axis=2)
    d = np.maximum(d, env.min_distance)
    return env.ref_loss + 10.0 * env.pathloss_exponent * np.log10(d)


def _attach(env, loss, txp_center):
    txp = np.full(loss.shape[1], env.neighbor_txp)
    txp[0] = txp_center
    rsrp = txp[None, :] - loss
    serving = np.argmax(rsrp, axis=1)  # first maximum: lowest cell index wins ties
    return serving, rsrp[np.arange(len(rsrp)), serving]


def snapshot(env: EnvConfig, txp_center: float, placement_seed: int) -> ScenarioSnapshot:
    users = _placement(env, placement_seed)
    serving, best = _attach(env, _path_loss(env, users), txp_center)
    return ScenarioSnapshot(users, serving, best)


def _kpis(env, serving, best):
    load = float(np.count_nonzero(serving == 0))
    coverage = float(np.count_nonzero(best >= env.rsrp_threshold)) / env.users
    return load, coverage


def evaluate_kpis(env: EnvConfig, txp_center: float, placement_seed: int) -> tuple[float, float]:
    """Center-cell load and network coverage for one placement."""
    snap = snapshot(env, txp_center, placement_seed)
    return _kpis(env, snap.serving, snap.rsrp)


def kpi_rows(env: EnvConfig, grid: Sequence[float]) -> list[tuple[float, int, float, float]]:
    """``(txp, placement_seed, load, coverage)`` for every placement and grid value."""
    rows = []
    for seed in env.placement_seeds():
        loss = _path_loss(env, _placement(env, seed))
        for txp in grid:
            rows.append((float(txp), seed, *_kpis(env, *_attach(env, loss, txp))))
    return rows


def generate_dataset(env: EnvConfig, grid: ParameterGrid | Sequence[float],
                     kpi_for_cf: Mapping[str, str] = DEFAULT_KPI_FOR_CF) -> dict[str, list[KpiSample]]:
    """One ``(txp, kpi)`` sample per placement and grid value for each CF."""
    for cf, kpi in kpi_for_cf.items():
        if kpi not in KPIS:
            raise ValidationError(f"{cf}: environment does not produce KPI {kpi!r}")
    values = grid.values if isinstance(grid, ParameterGrid) else tuple(grid)
    rows = kpi_rows(env, values)
    column = {"load": 2, "coverage": 3}
    return {cf: [KpiSample(r[0], r[column[kpi]]) for r in rows] for cf, kpi in kpi_for_cf.items()}


def export_csv(env: EnvConfig, grid: ParameterGrid | Sequence[float], out_dir: str | Path,
               kpi_for_cf: Mapping[str, str] = DEFAULT_KPI_FOR_CF) -> list[Path]:
    """Write ``dataset_<cf>.csv`` files with columns ``txp,kpi,placement_seed``."""
    values = grid.values if isinstance(grid, ParameterGrid) else tuple(grid)
    rows = kpi_rows(env, values)
    column = {"load": 2, "coverage": 3}
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for cf, kpi in sorted(kpi_for_cf.items()):
        path = out_dir / f"dataset_{cf}.csv"
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["txp", "kpi", "placement_seed"])
            for r in rows:
                writer.writerow([repr(r[0]), repr(r[column[kpi]]), r[1]])
        paths.append(path)
    return paths
