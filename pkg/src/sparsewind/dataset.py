"""Multi-station hourly wind-speed datasets: ingestion, validation, gap filling.

The on-disk format is a wide CSV (``timestamp,<id1>,<id2>,...``) with
ISO-8601 UTC hourly timestamps and empty cells for missing values. A sidecar
JSON next to the CSV carries station metadata and the run-length encoded
mask of interpolated cells.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from pathlib import Path
from typing import Sequence

import numpy as np

TIMESTAMP_FORMAT = "%Y-%m-%dT%H:00:00Z"
DEFAULT_GAP_LIMIT = 3
HOUR = timedelta(hours=1)


class DatasetError(ValueError):
    """Raised for malformed or inconsistent wind-speed input."""


@dataclass(frozen=True)
class StationMeta:
    id: str
    name: str = ""
    latitude: float | None = None
    longitude: float | None = None

    def __post_init__(self):
        if not self.id or not self.id.strip():
            raise DatasetError("station id must be nonempty")
        if self.latitude is not None and not -90.0 <= self.latitude <= 90.0:
            raise DatasetError(f"latitude out of range for {self.id}: {self.latitude}")
        if self.longitude is not None and not -180.0 <= self.longitude <= 180.0:
            raise DatasetError(f"longitude out of range for {self.id}: {self.longitude}")

    def to_dict(self) -> dict:
        return {"id": self.id, "name": self.name,
                "latitude": self.latitude, "longitude": self.longitude}


@dataclass(frozen=True, eq=False)
class Dataset:
    """P aligned hourly series.

    ``values`` is a read-only ``(P, T)`` float array in m/s; hour ``t`` is
    ``start + t hours``. ``filled_mask`` flags cells produced by interpolation.
    """

    stations: tuple[StationMeta, ...]
    start: datetime
    values: np.ndarray
    filled_mask: np.ndarray = field(default=None)

    def __post_init__(self):
        values = np.array(self.values, dtype=float, copy=True)
        if values.ndim != 2:
            raise DatasetError("values must be a (P, T) matrix")
        stations = tuple(self.stations)
        if len(stations) != values.shape[0]:
            raise DatasetError(
                f"{len(stations)} stations but values has {values.shape[0]} rows")
        ids = [s.id for s in stations]
        if len(set(ids)) != len(ids):
            raise DatasetError("station ids must be unique")
        if not np.all(np.isfinite(values)):
            raise DatasetError("values must be finite (missing cells must be filled first)")
        if np.any(values < 0):
            raise DatasetError("negative wind speed")
        if self.filled_mask is None:
            mask = np.zeros(values.shape, dtype=bool)
        else:
            mask = np.array(self.filled_mask, dtype=bool, copy=True)
            if mask.shape != values.shape:
                raise DatasetError("filled_mask shape does not match values")
        start = self.start
        if start.tzinfo is None:
            start = start.replace(tzinfo=timezone.utc)
        start = start.astimezone(timezone.utc)
        if start.minute or start.second or start.microsecond:
            raise DatasetError("start must be hour-aligned")
        values.setflags(write=False)
        mask.setflags(write=False)
        object.__setattr__(self, "stations", stations)
        object.__setattr__(self, "start", start)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "filled_mask", mask)

    @property
    def P(self) -> int:
        return self.values.shape[0]

    @property
    def T(self) -> int:
        return self.values.shape[1]

    @property
    def ids(self) -> list[str]:
        return [s.id for s in self.stations]

    def index_of(self, station_id: str) -> int:
        try:
            return self.ids.index(station_id)
        except ValueError:
            raise DatasetError(f"unknown station id {station_id!r}") from None

    def timestamp(self, hour: int) -> datetime:
        return self.start + hour * HOUR

    def slice(self, from_hour: int, to_hour: int) -> Dataset:
        """Hours ``[from_hour, to_hour)`` as a new dataset."""
        if not 0 <= from_hour < to_hour <= self.T:
            raise DatasetError(
                f"invalid slice [{from_hour}, {to_hour}) for T={self.T}")
        return Dataset(self.stations, self.timestamp(from_hour),
                       self.values[:, from_hour:to_hour],
                       self.filled_mask[:, from_hour:to_hour])

    def select(self, indices: Sequence[int]) -> Dataset:
        """Subset of stations, in the given order."""
        idx = list(indices)
        return Dataset(tuple(self.stations[i] for i in idx), self.start,
                       self.values[idx], self.filled_mask[idx])

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (self.stations == other.stations and self.start == other.start
                and np.array_equal(self.values, other.values)
                and np.array_equal(self.filled_mask, other.filled_mask))

    __hash__ = None


def slice_dataset(ds: Dataset, from_hour: int, to_hour: int) -> Dataset:
    return ds.slice(from_hour, to_hour)


def concat(first: Dataset, second: Dataset) -> Dataset:
    """Join two datasets that are contiguous in time and share stations."""
    if first.stations != second.stations:
        raise DatasetError("cannot concatenate datasets with different stations")
    if first.timestamp(first.T) != second.start:
        raise DatasetError("datasets are not contiguous in time")
    return Dataset(first.stations, first.start,
                   np.hstack([first.values, second.values]),
                   np.hstack([first.filled_mask, second.filled_mask]))


def sidecar_path(csv_path: str | Path) -> Path:
    p = Path(csv_path)
    return p.with_suffix(".meta.json")


def parse_timestamp(text: str) -> datetime:
    try:
        return datetime.strptime(text.strip(), TIMESTAMP_FORMAT).replace(tzinfo=timezone.utc)
    except ValueError:
        raise DatasetError(f"bad timestamp {text!r}, expected YYYY-MM-DDTHH:00:00Z") from None


def format_timestamp(ts: datetime) -> str:
    return ts.astimezone(timezone.utc).strftime(TIMESTAMP_FORMAT)


def fill_gaps(series: np.ndarray, gap_limit: int) -> tuple[np.ndarray, np.ndarray]:
    """Linearly interpolate interior NaN runs of length <= ``gap_limit``.

    Returns the filled series and a boolean mask of filled cells. Leading or
    trailing NaNs and longer runs raise :class:`DatasetError`.
    """
    y = np.asarray(series, dtype=float).copy()
    missing = np.isnan(y)
    mask = np.zeros(y.shape, dtype=bool)
    if not missing.any():
        return y, mask
    if missing[0] or missing[-1]:
        raise DatasetError("leading or trailing missing values cannot be interpolated")
    t = 0
    n = len(y)
    while t < n:
        if not missing[t]:
            t += 1
            continue
        run_start = t
        while t < n and missing[t]:
            t += 1
        run = t - run_start
        if run > gap_limit:
            raise DatasetError(
                f"gap exceeds limit: {run} missing hours at index {run_start} > {gap_limit}")
        left, right = y[run_start - 1], y[t]
        frac = np.arange(1, run + 1) / (run + 1)
        y[run_start:t] = left + frac * (right - left)
        mask[run_start:t] = True
    return y, mask


def _rle(mask_row: np.ndarray) -> list[list[int]]:
    runs = []
    t = 0
    n = len(mask_row)
    while t < n:
        if mask_row[t]:
            s = t
            while t < n and mask_row[t]:
                t += 1
            runs.append([s, t - s])
        else:
            t += 1
    return runs


def _unrle(runs, T: int) -> np.ndarray:
    row = np.zeros(T, dtype=bool)
    for s, length in runs:
        row[s:s + length] = True
    return row


def ingest_csv(path: str | Path, gap_limit: int = DEFAULT_GAP_LIMIT) -> Dataset:
    """Read a wide hourly CSV into a :class:`Dataset`.

    Column order defines station order. If a sidecar ``<name>.meta.json``
    exists, station metadata and previously filled cells are restored from it.
    """
    if gap_limit < 0:
        raise DatasetError("gap_limit must be >= 0")
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DatasetError(f"{path}: empty file") from None
        if len(header) < 2 or header[0].strip() != "timestamp":
            raise DatasetError(f"{path}: header must be 'timestamp,<id1>,...'")
        ids = [h.strip() for h in header[1:]]
        times: list[datetime] = []
        rows: list[list[float]] = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise DatasetError(
                    f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            times.append(parse_timestamp(row[0]))
            vals = []
            for cell in row[1:]:
                cell = cell.strip()
                if cell == "":
                    vals.append(math.nan)
                    continue
                try:
                    v = float(cell)
                except ValueError:
                    raise DatasetError(f"{path}:{lineno}: bad number {cell!r}") from None
                if not math.isfinite(v):
                    raise DatasetError(f"{path}:{lineno}: non-finite value {cell!r}")
                if v < 0:
                    raise DatasetError(f"{path}:{lineno}: negative speed {v}")
                vals.append(v)
            rows.append(vals)
    if not rows:
        raise DatasetError(f"{path}: no data rows")
    for k in range(1, len(times)):
        if times[k] - times[k - 1] != HOUR:
            raise DatasetError(
                f"{path}: timestamps not hourly-monotone at row {k + 2} "
                f"({format_timestamp(times[k - 1])} -> {format_timestamp(times[k])})")

    raw = np.array(rows, dtype=float).T
    values = np.empty_like(raw)
    mask = np.zeros(raw.shape, dtype=bool)
    for p in range(raw.shape[0]):
        try:
            values[p], mask[p] = fill_gaps(raw[p], gap_limit)
        except DatasetError as exc:
            raise DatasetError(f"{path}: station {ids[p]}: {exc}") from None

    stations = tuple(StationMeta(i) for i in ids)
    side = sidecar_path(path)
    if side.exists():
        meta = json.loads(side.read_text())
        by_id = {s["id"]: s for s in meta.get("stations", [])}
        stations = tuple(
            StationMeta(i, by_id[i].get("name", ""), by_id[i].get("latitude"),
                        by_id[i].get("longitude")) if i in by_id else StationMeta(i)
            for i in ids)
        for i, runs in meta.get("filled_mask", {}).items():
            if i in ids:
                mask[ids.index(i)] |= _unrle(runs, raw.shape[1])
    return Dataset(stations, times[0], values, mask)


def _fmt(v: float) -> str:
    return repr(float(v))


def write_csv(ds: Dataset, path: str | Path) -> Path:
    """Write the canonical CSV plus its ``.meta.json`` sidecar."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["timestamp", *ds.ids])
        for t in range(ds.T):
            w.writerow([format_timestamp(ds.timestamp(t)), *(_fmt(v) for v in ds.values[:, t])])
    meta = {
        "stations": [s.to_dict() for s in ds.stations],
        "start": format_timestamp(ds.start),
        "T": ds.T,
        "units": "m/s",
        "filled_mask": {s.id: _rle(ds.filled_mask[p]) for p, s in enumerate(ds.stations)},
    }
    sidecar_path(path).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return path
