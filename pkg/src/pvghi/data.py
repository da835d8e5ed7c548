"""Site and plant time-series data model, CSV ingestion and alignment.

All timestamps are UTC instants on a uniform grid. Missing samples are
represented as NaN and are excluded from every downstream fit; they are
never imputed.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from datetime import datetime, timezone

import numpy as np

PLANT_CSV_HEADER = ("timestamp", "power_w", "temp_c")


class InputError(ValueError):
    """Malformed or inconsistent input data."""


@dataclass(frozen=True)
class Site:
    """Geographic location and ground properties of the neighborhood."""

    latitude: float
    longitude: float
    altitude: float = 0.0
    albedo: float = 0.2

    def __post_init__(self):
        if not -90.0 <= self.latitude <= 90.0:
            raise InputError(f"latitude out of range: {self.latitude}")
        if not -180.0 <= self.longitude <= 180.0:
            raise InputError(f"longitude out of range: {self.longitude}")
        if not 0.0 <= self.albedo <= 1.0:
            raise InputError(f"albedo out of range: {self.albedo}")
        if not math.isfinite(self.altitude):
            raise InputError("altitude must be finite")


@dataclass(frozen=True)
class PlantSeries:
    """One plant's AC power and ambient temperature record.

    ``timestamps`` is a strictly increasing, uniformly sampled
    datetime64[s] array. ``power`` (W) and ``temperature`` (degC) use NaN
    for missing samples.
    """

    plant_id: str
    timestamps: np.ndarray
    power: np.ndarray
    temperature: np.ndarray

    def __post_init__(self):
        ts = np.asarray(self.timestamps, dtype="datetime64[s]")
        p = np.asarray(self.power, dtype=float)
        t = np.asarray(self.temperature, dtype=float)
        if ts.size == 0:
            raise InputError(f"{self.plant_id}: empty series")
        if len(p) != len(ts) or len(t) != len(ts):
            raise InputError(f"{self.plant_id}: column length mismatch")
        deltas = np.diff(ts.astype("int64"))
        if ts.size > 1:
            if np.any(deltas <= 0):
                raise InputError(f"{self.plant_id}: non-monotonic timestamps")
            if np.any(deltas != deltas[0]):
                raise InputError(f"{self.plant_id}: non-uniform sampling period")
        if np.any(p[np.isfinite(p)] < 0):
            raise InputError(f"{self.plant_id}: negative power sample")
        object.__setattr__(self, "timestamps", ts)
        object.__setattr__(self, "power", p)
        object.__setattr__(self, "temperature", t)
        for arr in (ts, p, t):
            arr.flags.writeable = False

    @property
    def sampling_seconds(self) -> int:
        if len(self.timestamps) < 2:
            return 0
        return int(np.diff(self.timestamps.astype("int64"))[0])

    def __len__(self) -> int:
        return len(self.timestamps)


@dataclass(frozen=True)
class AlignedDataset:
    """Plants re-indexed onto one shared timestamp grid."""

    timestamps: np.ndarray
    plants: tuple[PlantSeries, ...]
    site: Site

    @property
    def n_plants(self) -> int:
        return len(self.plants)

    @property
    def n_steps(self) -> int:
        return len(self.timestamps)

    @property
    def sampling_seconds(self) -> int:
        return self.plants[0].sampling_seconds

    def power_matrix(self) -> np.ndarray:
        """(T, n_plants) power array, NaN where missing."""
        return np.column_stack([p.power for p in self.plants])

    def mean_temperature(self) -> np.ndarray:
        """Per-timestep ambient temperature, averaged over reporting plants.

        Gaps left by all plants are filled by interpolation so the forward
        model always has a temperature to work with; the corresponding
        power samples stay missing.
        """
        temps = np.column_stack([p.temperature for p in self.plants])
        with np.errstate(invalid="ignore"):
            mean = np.nanmean(temps, axis=1)
        if np.isnan(mean).all():
            return np.zeros(len(mean)) + 15.0
        if np.isnan(mean).any():
            idx = np.arange(len(mean))
            good = ~np.isnan(mean)
            mean = np.interp(idx, idx[good], mean[good])
        return mean


def parse_timestamp(text: str) -> np.datetime64:
    """Parse an ISO-8601 UTC timestamp to datetime64[s].

    Naive stamps are taken as UTC; explicit offsets are converted.
    """
    text = text.strip()
    if text.endswith(("Z", "z")):
        text = text[:-1] + "+00:00"
    dt = datetime.fromisoformat(text)
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    dt = dt.astimezone(timezone.utc)
    return np.datetime64(int(dt.timestamp()), "s")


def _parse_float(text: str) -> float:
    text = text.strip()
    if not text:
        return math.nan
    try:
        return float(text)
    except ValueError:
        return math.nan


def load_plant_csv(path, plant_id: str) -> PlantSeries:
    """Load one plant record from a ``timestamp,power_w,temp_c`` CSV.

    Unparseable power or temperature fields become missing samples.
    Raises InputError for a missing file, bad header, empty body or
    non-monotonic timestamps.
    """
    try:
        fh = open(path, newline="")
    except FileNotFoundError:
        raise InputError(f"plant file not found: {path}") from None
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise InputError(f"{path}: empty file") from None
        if tuple(h.strip() for h in header) != PLANT_CSV_HEADER:
            raise InputError(
                f"{path}: expected header {','.join(PLANT_CSV_HEADER)}"
            )
        stamps, power, temp = [], [], []
        for row in reader:
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 3:
                raise InputError(f"{path}: malformed row {row!r}")
            try:
                stamps.append(parse_timestamp(row[0]))
            except ValueError:
                raise InputError(f"{path}: bad timestamp {row[0]!r}") from None
            power.append(_parse_float(row[1]))
            temp.append(_parse_float(row[2]))
    if not stamps:
        raise InputError(f"{path}: no data rows")
    p = np.array(power)
    p[p < 0] = np.nan
    return PlantSeries(plant_id, np.array(stamps), p, np.array(temp))


def save_plant_csv(series: PlantSeries, path) -> None:
    """Write a PlantSeries back out; round-trips numeric fields bit-exactly."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(PLANT_CSV_HEADER)
        for ts, p, t in zip(series.timestamps, series.power, series.temperature):
            writer.writerow([
                np.datetime_as_string(ts, timezone="UTC"),
                "" if math.isnan(p) else repr(float(p)),
                "" if math.isnan(t) else repr(float(t)),
            ])


def align(plants: list[PlantSeries], site: Site) -> AlignedDataset:
    """Re-index plants onto the intersection of their timestamp ranges.

    All plants must share one sampling period; grid points a plant does
    not cover become missing samples. Raises InputError on mismatched
    periods or an empty intersection.
    """
    if not plants:
        raise InputError("no plants to align")
    periods = {p.sampling_seconds for p in plants}
    if len(periods) > 1:
        raise InputError(f"mismatched sampling periods: {sorted(periods)}")
    start = max(p.timestamps[0] for p in plants)
    end = min(p.timestamps[-1] for p in plants)
    if start > end:
        raise InputError("empty timestamp intersection")
    base = plants[0].timestamps
    grid = base[(base >= start) & (base <= end)]
    if grid.size == 0:
        raise InputError("empty timestamp intersection")
    grid_i = grid.astype("int64")
    aligned = []
    for p in plants:
        ts_i = p.timestamps.astype("int64")
        pos = np.searchsorted(ts_i, grid_i)
        pos_c = np.clip(pos, 0, len(ts_i) - 1)
        hit = ts_i[pos_c] == grid_i
        if not hit.any():
            raise InputError(f"{p.plant_id}: no samples on the shared grid")
        power = np.full(grid.size, np.nan)
        temp = np.full(grid.size, np.nan)
        power[hit] = p.power[pos_c[hit]]
        temp[hit] = p.temperature[pos_c[hit]]
        aligned.append(replace(p, timestamps=grid, power=power, temperature=temp))
    return AlignedDataset(grid, tuple(aligned), site)
