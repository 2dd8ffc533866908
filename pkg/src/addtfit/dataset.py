"""ADDT data model, CSV ingestion and preprocessing.

A dataset is a long table of (temperature in Celsius, time in hours,
response) rows.  Column order carries the meaning; header names are only
checked for presence.
"""

from __future__ import annotations

import csv
import math
import os
import warnings
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import DataError

KELVIN_OFFSET = 273.16

BUNDLED = {
    "adhesive-bond-b": "adhesive_bond_b.csv",
    "seal-strength": "seal_strength.csv",
}
# Listed for the CLI; no public table values are available to ship.
UNBUNDLED = ("polymer-y", "adhesive-formulation-k")

DATA_DIR_ENV = "ADDTFIT_DATA_DIR"


@dataclass(frozen=True)
class Observation:
    temp_c: float
    time_h: float
    response: float

    def __post_init__(self):
        if not self.temp_c > -KELVIN_OFFSET:
            raise DataError(f"temperature {self.temp_c} C is below absolute zero")
        if not self.time_h >= 0:
            raise DataError(f"negative time {self.time_h}")
        if not self.response > 0:
            raise DataError(f"non-positive response {self.response}")


@dataclass(frozen=True, eq=False)
class DegradationDataset:
    """Immutable collection of ADDT observations.

    Parameters
    ----------
    temp_c, time_h, response : array-like
        Equal-length columns.  Row order is preserved.
    names : tuple of str
        Column names as read from the header, kept for serialization.
    """

    temp_c: np.ndarray
    time_h: np.ndarray
    response: np.ndarray
    names: tuple = ("TempC", "TimeH", "Response")
    source: str | None = None
    _cells: dict = field(default=None, repr=False)

    def __post_init__(self):
        cols = []
        for name in ("temp_c", "time_h", "response"):
            arr = np.array(getattr(self, name), dtype=float).ravel()
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
            cols.append(arr)
        t, h, y = cols
        if not (len(t) == len(h) == len(y)):
            raise DataError("columns have different lengths")
        if len(t) == 0:
            raise DataError("dataset is empty")
        if not np.all(np.isfinite(t) & np.isfinite(h) & np.isfinite(y)):
            raise DataError("dataset contains non-finite values")
        if np.any(t <= -KELVIN_OFFSET):
            raise DataError("temperature at or below absolute zero")
        if np.any(h < 0):
            raise DataError("negative time value")
        if np.any(y <= 0):
            bad = int(np.argmax(y <= 0))
            raise DataError(f"non-positive response {y[bad]} in row {bad + 1}")
        if len(np.unique(t[h > 0])) < 2:
            raise DataError(
                "fewer than two temperature levels with nonzero time points")
        cells: dict = {}
        for idx, key in enumerate(zip(t.tolist(), h.tolist())):
            cells.setdefault(key, []).append(idx)
        object.__setattr__(
            self, "_cells",
            {k: np.array(v) for k, v in sorted(cells.items())})

    @classmethod
    def from_observations(cls, obs: Iterable[Observation], **kw):
        obs = list(obs)
        return cls(np.array([o.temp_c for o in obs]),
                   np.array([o.time_h for o in obs]),
                   np.array([o.response for o in obs]), **kw)

    def __len__(self):
        return len(self.response)

    @property
    def observations(self) -> list[Observation]:
        return [Observation(*row) for row in
                zip(self.temp_c.tolist(), self.time_h.tolist(),
                    self.response.tolist())]

    @property
    def levels(self) -> np.ndarray:
        """Sorted distinct temperatures over all rows."""
        return np.unique(self.temp_c)

    @property
    def stress_levels(self) -> np.ndarray:
        """Sorted distinct temperatures among rows with time > 0."""
        return np.unique(self.temp_c[self.time_h > 0])

    @property
    def times(self) -> np.ndarray:
        return np.unique(self.time_h)

    @property
    def cells(self) -> dict:
        """Row indices keyed by (temperature, time), sorted by key."""
        return self._cells

    def cell_index(self) -> tuple[np.ndarray, np.ndarray]:
        """Return (cell id per row, cell sizes) for vectorized reductions."""
        ids = np.empty(len(self), dtype=int)
        sizes = np.empty(len(self._cells), dtype=int)
        for c, rows in enumerate(self._cells.values()):
            ids[rows] = c
            sizes[c] = len(rows)
        return ids, sizes

    def subset(self, mask) -> "DegradationDataset":
        """Rows selected by a boolean mask or an integer index array."""
        mask = np.asarray(mask)
        if mask.dtype != bool and not np.issubdtype(mask.dtype, np.integer):
            raise TypeError("subset takes a boolean mask or integer indices")
        return DegradationDataset(self.temp_c[mask], self.time_h[mask],
                                  self.response[mask], names=self.names,
                                  source=self.source)

    def replace(self, temp_c=None, time_h=None, response=None):
        return DegradationDataset(
            self.temp_c if temp_c is None else temp_c,
            self.time_h if time_h is None else time_h,
            self.response if response is None else response,
            names=self.names, source=self.source)

    def to_csv(self, path_or_file=None) -> str:
        lines = [",".join(self.names)]
        for row in zip(self.temp_c, self.time_h, self.response):
            lines.append(",".join(_fmt(v) for v in row))
        text = "\n".join(lines) + "\n"
        if path_or_file is not None:
            if hasattr(path_or_file, "write"):
                path_or_file.write(text)
            else:
                Path(path_or_file).write_text(text, encoding="utf-8")
        return text


def _fmt(v: float) -> str:
    s = repr(float(v))
    return s[:-2] if s.endswith(".0") else s


def _parse_float(cell: str, row: int, col: str) -> float:
    try:
        v = float(cell.strip())
    except ValueError:
        raise DataError(
            f"non-numeric value {cell!r} in column {col!r}, line {row}") from None
    if math.isnan(v) or math.isinf(v):
        raise DataError(f"non-finite value {cell!r} in column {col!r}, line {row}")
    return v


def parse_csv(lines: Sequence[str] | Iterable[str], source=None) -> DegradationDataset:
    reader = csv.reader(lines)
    try:
        header = next(reader)
    except StopIteration:
        raise DataError("empty file: no header row") from None
    header = [h.strip().lstrip("﻿") for h in header]
    if len(header) < 3 or any(not h for h in header[:3]):
        raise DataError(
            "missing column: header must name temperature, time and response "
            f"columns, got {header!r}")
    names = tuple(header[:3])
    cols = ([], [], [])
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) < 3:
            raise DataError(f"missing column: line {lineno} has {len(row)} fields")
        for j in range(3):
            cols[j].append(_parse_float(row[j], lineno, names[j]))
    if not cols[0]:
        raise DataError("no data rows")
    y = np.array(cols[2])
    if np.any(y <= 0):
        bad = int(np.argmax(y <= 0))
        raise DataError(f"non-positive response {y[bad]} on line {bad + 2}")
    return DegradationDataset(np.array(cols[0]), np.array(cols[1]), y,
                              names=names, source=source)


def load_csv(path) -> DegradationDataset:
    """Read a three-column ADDT CSV (temperature, time, response)."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"no such file: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        return parse_csv(fh, source=str(path))


def dataset_path(name: str) -> Path:
    """Resolve a bundled dataset name to a file, honouring the override dir."""
    if name in UNBUNDLED:
        raise DataError(f"dataset {name!r} is not bundled with this package")
    if name not in BUNDLED:
        choices = ", ".join(sorted(BUNDLED) + list(UNBUNDLED))
        raise DataError(f"unknown dataset {name!r}; choose one of: {choices}")
    override = os.environ.get(DATA_DIR_ENV)
    if override:
        return Path(override) / BUNDLED[name]
    return Path(str(resources.files("addtfit") / "data" / BUNDLED[name]))


def load_bundled(name: str) -> DegradationDataset:
    return load_csv(dataset_path(name))


def remap_time_zero(ds: DegradationDataset) -> DegradationDataset:
    """Move all time-0 rows to the lowest temperature used at time > 0.

    Initial measurements precede any thermal exposure, so their nominal
    temperature carries no information; placing them at the lowest stressed
    level gives one shared time-0 cell.
    """
    zero = ds.time_h == 0
    if not zero.any():
        warnings.warn("no time-0 rows; dataset returned unchanged",
                      stacklevel=2)
        return ds
    lowest = ds.stress_levels.min()
    temp = np.where(zero, lowest, ds.temp_c)
    return ds.replace(temp_c=temp)


def initial_value(ds: DegradationDataset, override: float | None = None) -> float:
    """Initial degradation level: the mean time-0 response unless overridden."""
    if override is not None:
        override = float(override)
        if not override > 0:
            raise DataError(f"initial value must be positive, got {override}")
        return override
    zero = ds.time_h == 0
    if not zero.any():
        raise DataError(
            "data contain no measurements at time 0; supply an initial value")
    vals = ds.response[zero]
    return math.fsum(vals.tolist()) / len(vals)
