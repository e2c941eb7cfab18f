"""Smartwatch log ingestion: CSV parsing, resampling, normalization, windowing.

Raw logs are one CSV per recording with the header
``timestamp,heart_rate_bpm,step_count,wrist_accel_g`` (epoch-second
integer timestamps, empty cell = missing). The pipeline turns them into
three uniform per-sensor series on a shared time grid, min-max
normalizes each against fixed physiological ranges, and cuts aligned
fixed-width windows that downstream receptive fields consume.

The cumulative pedometer count is first-differenced into a per-period
step rate; heart rate and wrist motion are bucket means. Buckets inside
a data gap longer than ``GAP_LIMIT_S`` are marked invalid, and any
window touching an invalid bucket is itself invalid: a trail built over
a gappy window would not be comparable to archetype trails.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum
from typing import Iterable, Optional

import numpy as np

CSV_HEADER = "timestamp,heart_rate_bpm,step_count,wrist_accel_g"
GAP_LIMIT_S = 60.0
SECONDS_PER_DAY = 86400


class CsvParseError(ValueError):
    """A malformed row; carries the 1-based line number."""


class CsvStructureError(ValueError):
    """Structurally inconsistent input (ordering, header, monotonicity)."""


class Sensor(str, Enum):
    HEART_RATE = "heart_rate"
    STEP_RATE = "step_rate"
    WRIST_MOTION = "wrist_motion"


@dataclass(frozen=True)
class RawRecord:
    timestamp: int
    heart_rate: Optional[float] = None
    step_count: Optional[float] = None
    wrist_motion: Optional[float] = None


@dataclass(frozen=True)
class SensorRange:
    """Fixed physical normalization bounds for one sensor."""

    lo: float
    hi: float

    def validate(self) -> None:
        if not self.lo < self.hi:
            raise ValueError(f"sensor range needs lo < hi, got [{self.lo}, {self.hi}]")


DEFAULT_RANGES = {
    Sensor.HEART_RATE: SensorRange(40.0, 180.0),    # bpm
    Sensor.STEP_RATE: SensorRange(0.0, 12.0),       # steps per 5 s period
    Sensor.WRIST_MOTION: SensorRange(0.0, 4.0),     # g
}


@dataclass(frozen=True)
class UniformSeries:
    """Evenly sampled single-sensor series with a per-sample validity mask.

    Invalid samples hold NaN so that accidental use fails loudly.
    """

    sensor: Sensor
    start: float            # epoch seconds of the first bucket's left edge
    period: float           # seconds per sample
    values: np.ndarray
    validity: np.ndarray


@dataclass(frozen=True)
class Window:
    index: int              # global ordinal on the shared bucket grid
    samples: np.ndarray
    day: int
    valid: bool


def parse_csv(text: str | Iterable[str]) -> list[RawRecord]:
    """Parse a raw log into records, enforcing ordering invariants.

    Raises CsvParseError (with line number) for malformed cells and
    CsvStructureError for a bad header, non-increasing timestamps, or a
    decreasing cumulative step count.
    """
    lines = text.splitlines() if isinstance(text, str) else [ln.rstrip("\n") for ln in text]
    if not lines:
        raise CsvStructureError("empty input: missing header")
    header = lines[0].strip()
    if header != CSV_HEADER:
        raise CsvStructureError(f"unexpected header {header!r}, want {CSV_HEADER!r}")

    records: list[RawRecord] = []
    last_ts: Optional[int] = None
    last_steps: Optional[float] = None
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        cells = line.split(",")
        if len(cells) != 4:
            raise CsvParseError(f"line {lineno}: expected 4 columns, got {len(cells)}")
        try:
            ts = int(cells[0])
            hr = float(cells[1]) if cells[1].strip() else None
            steps = float(cells[2]) if cells[2].strip() else None
            motion = float(cells[3]) if cells[3].strip() else None
        except ValueError as exc:
            raise CsvParseError(f"line {lineno}: {exc}") from None
        if hr is not None and hr <= 0:
            raise CsvParseError(f"line {lineno}: heart rate must be positive, got {hr}")
        if last_ts is not None and ts <= last_ts:
            raise CsvStructureError(
                f"line {lineno}: timestamp {ts} not after previous {last_ts}")
        if steps is not None:
            if last_steps is not None and steps < last_steps:
                raise CsvStructureError(
                    f"line {lineno}: cumulative step count decreased "
                    f"({last_steps} -> {steps})")
            last_steps = steps
        last_ts = ts
        records.append(RawRecord(ts, hr, steps, motion))
    return records


def _bucketize(times: np.ndarray, values: np.ndarray, start: float, period: float,
               n_buckets: int) -> tuple[np.ndarray, np.ndarray]:
    """Mean-aggregate irregular samples onto the bucket grid.

    A bucket with no sample of its own takes the nearest sample's value
    but is invalidated when it sits inside a sample gap longer than
    GAP_LIMIT_S (one-sided at the series edges, measured to the bucket
    center).
    """
    out = np.full(n_buckets, np.nan)
    valid = np.zeros(n_buckets, dtype=bool)
    if times.size == 0:
        return out, valid

    idx = np.floor((times - start) / period).astype(int)
    keep = (idx >= 0) & (idx < n_buckets)
    idx, t_kept, v_kept = idx[keep], times[keep], values[keep]
    sums = np.bincount(idx, weights=v_kept, minlength=n_buckets)
    counts = np.bincount(idx, minlength=n_buckets)
    filled = counts > 0
    out[filled] = sums[filled] / counts[filled]
    valid[filled] = True

    empty = np.nonzero(~filled)[0]
    if empty.size:
        centers = start + (empty + 0.5) * period
        nxt = np.searchsorted(times, centers)        # first sample after center
        prv = nxt - 1
        has_prev = prv >= 0
        has_next = nxt < times.size
        t_prev = np.where(has_prev, times[np.clip(prv, 0, None)], -np.inf)
        t_next = np.where(has_next, times[np.clip(nxt, None, times.size - 1)], np.inf)
        gap_ok = np.where(
            has_prev & has_next, (t_next - t_prev) <= GAP_LIMIT_S,
            np.where(has_prev, (centers - t_prev) <= GAP_LIMIT_S,
                     (t_next - centers) <= GAP_LIMIT_S))
        use_prev = (centers - t_prev) <= (t_next - centers)
        src = np.where(use_prev, np.clip(prv, 0, None), np.clip(nxt, None, times.size - 1))
        out[empty[gap_ok]] = values[src[gap_ok]]
        valid[empty[gap_ok]] = True
    return out, valid


def resample(records: list[RawRecord], period: float) -> dict[Sensor, UniformSeries]:
    """Place all three sensors on one shared uniform grid.

    Heart rate and wrist motion bucket directly; the cumulative step
    count is differenced into a per-period rate assigned to the start of
    each counting interval before bucketing. An empty record list yields
    empty series.
    """
    if period <= 0:
        raise ValueError(f"period must be positive, got {period}")
    if not records:
        empty = np.array([])
        return {s: UniformSeries(s, 0.0, period, empty.copy(), empty.astype(bool))
                for s in Sensor}

    start = float(records[0].timestamp)
    span = float(records[-1].timestamp) - start
    n_buckets = int(math.floor(span / period)) + 1

    streams: dict[Sensor, tuple[list[float], list[float]]] = {
        Sensor.HEART_RATE: ([], []), Sensor.WRIST_MOTION: ([], [])}
    for rec in records:
        if rec.heart_rate is not None:
            streams[Sensor.HEART_RATE][0].append(rec.timestamp)
            streams[Sensor.HEART_RATE][1].append(rec.heart_rate)
        if rec.wrist_motion is not None:
            streams[Sensor.WRIST_MOTION][0].append(rec.timestamp)
            streams[Sensor.WRIST_MOTION][1].append(rec.wrist_motion)

    step_t, step_c = zip(*[(r.timestamp, r.step_count) for r in records
                           if r.step_count is not None]) if any(
        r.step_count is not None for r in records) else ((), ())
    rate_t, rate_v = [], []
    for (t0, c0), (t1, c1) in zip(zip(step_t, step_c), zip(step_t[1:], step_c[1:])):
        rate_t.append(float(t0))
        rate_v.append((c1 - c0) / (t1 - t0) * period)

    out = {}
    for sensor, (times, values) in streams.items():
        vals, mask = _bucketize(np.asarray(times, dtype=float), np.asarray(values, dtype=float),
                                start, period, n_buckets)
        out[sensor] = UniformSeries(sensor, start, period, vals, mask)
    vals, mask = _bucketize(np.asarray(rate_t), np.asarray(rate_v), start, period, n_buckets)
    out[Sensor.STEP_RATE] = UniformSeries(Sensor.STEP_RATE, start, period, vals, mask)
    return out


def normalize(series: UniformSeries, srange: SensorRange) -> UniformSeries:
    """Min-max normalize against fixed bounds, clamping out-of-range values."""
    srange.validate()
    scaled = np.clip((series.values - srange.lo) / (srange.hi - srange.lo), 0.0, 1.0)
    return replace(series, values=scaled)


def cut_windows(series: UniformSeries, width: int, stride: Optional[int] = None,
                utc_offset: int = 0) -> list[Window]:
    """Cut fixed-width windows; any invalid sample poisons its window.

    Default stride equals the width (non-overlapping). The day ordinal
    comes from the window's start time shifted by the UTC offset.
    """
    if width <= 0:
        raise ValueError(f"width must be positive, got {width}")
    stride = width if stride is None else stride
    if stride <= 0:
        raise ValueError(f"stride must be positive, got {stride}")
    windows = []
    n = len(series.values)
    for i, lo in enumerate(range(0, n - width + 1, stride)):
        t_start = series.start + lo * series.period
        day = int(math.floor((t_start + utc_offset) / SECONDS_PER_DAY))
        windows.append(Window(
            index=i,
            samples=series.values[lo:lo + width],
            day=day,
            valid=bool(series.validity[lo:lo + width].all()),
        ))
    return windows


def partition_days(windows: list[Window]) -> dict[int, list[Window]]:
    """Group windows by day ordinal, preserving window order within a day.

    Days whose windows are all invalid still appear (with no valid
    member), so callers can flag them as unassessable.
    """
    by_day: dict[int, list[Window]] = {}
    for w in windows:
        by_day.setdefault(w.day, []).append(w)
    return by_day
