"""Hourly time-series model, CSV ingestion and regional demand splitting.

The on-disk format is ``timestamp,value`` with ISO-8601 hourly timestamps,
one file per (region, quantity).  Values are written with ``repr`` so a
write/read round trip is exact, both as text and numerically.

The study calendar is a fixed non-leap synthetic year (8760 hours) starting
2021-01-01 00:00.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from datetime import datetime, timedelta
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

HOURS_PER_DAY = 24
HOURS_PER_YEAR = 8760
SYNTHETIC_YEAR_START = datetime(2021, 1, 1)

#: Region identifiers used by the bundled study data.  Configs may narrow
#: this set but never extend it.
KNOWN_REGIONS = ("QLD", "NSW", "VIC", "SA", "SH")

TIMESTAMP_FORMAT = "%Y-%m-%dT%H:%M:%S"


class TimeSeriesError(ValueError):
    """Malformed series data (gaps, duplicates, bad numbers, bad length)."""


@dataclass(frozen=True)
class TimeSeries:
    """Gap-free hourly series; index ``h`` is exactly ``start + h`` hours.

    ``values`` is an immutable float array (MW for power, $/MWh for price).
    """

    start: datetime
    values: np.ndarray
    label: str = ""

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=float)
        if arr.ndim != 1 or arr.size == 0:
            raise TimeSeriesError(f"series {self.label!r} must be a non-empty 1-d sequence")
        if not np.all(np.isfinite(arr)):
            bad = int(np.flatnonzero(~np.isfinite(arr))[0])
            raise TimeSeriesError(f"series {self.label!r} has a non-finite value at hour {bad}")
        if self.start.minute or self.start.second or self.start.microsecond:
            raise TimeSeriesError(f"series {self.label!r} must start on a whole hour")
        arr = arr.copy()
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    def __len__(self) -> int:
        return int(self.values.size)

    def timestamp_at(self, hour: int) -> datetime:
        return self.start + timedelta(hours=hour)

    @property
    def n_days(self) -> int:
        if len(self) % HOURS_PER_DAY:
            raise TimeSeriesError(f"series {self.label!r} is not a whole number of days")
        return len(self) // HOURS_PER_DAY

    def day(self, d: int) -> np.ndarray:
        """Values of day ``d`` (24 entries)."""
        n = self.n_days
        if not 0 <= d < n:
            raise IndexError(f"day {d} out of range 0..{n - 1}")
        return self.values[d * HOURS_PER_DAY:(d + 1) * HOURS_PER_DAY]

    def relabel(self, label: str) -> "TimeSeries":
        return TimeSeries(self.start, self.values, label)


def concat_series(parts: Iterable[TimeSeries], label: str = "") -> TimeSeries:
    """Concatenate contiguous series (each part must start where the previous ended)."""
    parts = list(parts)
    if not parts:
        raise TimeSeriesError("nothing to concatenate")
    for prev, nxt in zip(parts, parts[1:]):
        expected = prev.timestamp_at(len(prev))
        if nxt.start != expected:
            raise TimeSeriesError(
                f"series {nxt.label!r} starts at {nxt.start}, expected {expected}"
            )
    values = np.concatenate([p.values for p in parts])
    return TimeSeries(parts[0].start, values, label or parts[0].label)


def load_timeseries_csv(path, expected_hours: int) -> TimeSeries:
    """Read a ``timestamp,value`` CSV into a gap-free hourly series.

    Every structural defect is reported with its row number (1-based,
    counting the header as row 1).
    """
    path = Path(path)
    if not path.exists():
        raise TimeSeriesError(f"missing series file: {path}")
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise TimeSeriesError(f"{path}: empty file") from None
        header = [col.strip() for col in header]
        if header[:2] != ["timestamp", "value"]:
            raise TimeSeriesError(f"{path}: row 1: header must be 'timestamp,value', got {header}")
        start = None
        values: list[float] = []
        for rownum, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) < 2:
                raise TimeSeriesError(f"{path}: row {rownum}: expected 2 columns")
            try:
                stamp = datetime.fromisoformat(row[0].strip())
            except ValueError:
                raise TimeSeriesError(f"{path}: row {rownum}: bad timestamp {row[0]!r}") from None
            if start is None:
                start = stamp
            expected = start + timedelta(hours=len(values))
            if stamp == expected - timedelta(hours=1):
                raise TimeSeriesError(f"{path}: row {rownum}: duplicate timestamp {row[0]}")
            if stamp != expected:
                raise TimeSeriesError(
                    f"{path}: row {rownum}: gap in series, missing "
                    f"{expected.strftime(TIMESTAMP_FORMAT)}"
                )
            try:
                values.append(float(row[1]))
            except ValueError:
                raise TimeSeriesError(f"{path}: row {rownum}: non-numeric value {row[1]!r}") from None
        if start is None:
            raise TimeSeriesError(f"{path}: no data rows")
        if len(values) != expected_hours:
            raise TimeSeriesError(
                f"{path}: expected {expected_hours} rows, found {len(values)}"
            )
    return TimeSeries(start, np.array(values), label=path.stem)


def write_timeseries_csv(series: TimeSeries, path) -> None:
    """Write ``timestamp,value`` rows; floats via ``repr`` so re-reading is exact."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        fh.write("timestamp,value\n")
        for h, v in enumerate(series.values):
            fh.write(f"{series.timestamp_at(h).strftime(TIMESTAMP_FORMAT)},{float(v)!r}\n")


@dataclass(frozen=True)
class ZoneWeights:
    """Nonnegative per-zone shares used to split a regional series; sum to 1."""

    weights: Mapping[str, float]

    def __post_init__(self):
        if not self.weights:
            raise TimeSeriesError("zone weights must name at least one zone")
        w = dict(self.weights)
        for zone, share in w.items():
            if not np.isfinite(share) or share < 0:
                raise TimeSeriesError(f"zone {zone!r} weight {share} must be finite and >= 0")
        total = float(sum(w.values()))
        if abs(total - 1.0) > 1e-9:
            raise TimeSeriesError(f"zone weights sum to {total!r}, expected 1 within 1e-9")
        object.__setattr__(self, "weights", w)

    @staticmethod
    def equal(zones: Iterable[str]) -> "ZoneWeights":
        zones = list(zones)
        return ZoneWeights({z: 1.0 / len(zones) for z in zones})


def split_regional_demand(regional: TimeSeries, weights: ZoneWeights) -> dict[str, TimeSeries]:
    """Split a regional series into per-zone series, ``zone = weight * regional``.

    The zone series sum back to the input pointwise (within 1e-9).
    """
    out = {}
    for zone, share in weights.weights.items():
        label = f"{regional.label}:{zone}" if regional.label else zone
        out[zone] = TimeSeries(regional.start, share * regional.values, label)
    return out
