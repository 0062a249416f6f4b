"""CSV ingestion, chronological partitioning and synthetic series."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from datetime import datetime, timezone
from statistics import NormalDist

import numpy as np

from .core import TimeSeries
from .exceptions import ConfigError, MissingColumn, NonUniformResolution, ParseError, PartitionTooSmall

SYNTHETIC_KINDS = ("heteroscedastic_daily", "homoscedastic_ar")
DEFAULT_START = 1483228800  # 2017-01-01T00:00:00Z


def parse_timestamp(text):
    """Integer epoch seconds or ISO-8601; naive ISO times are taken as UTC."""
    text = text.strip()
    try:
        return int(text)
    except ValueError:
        pass
    if text.endswith("Z"):
        text = text[:-1] + "+00:00"
    dt = datetime.fromisoformat(text)
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return int(dt.timestamp())


def format_timestamp(ts):
    return datetime.fromtimestamp(int(ts), tz=timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def load_csv_series(path, target_column, exogenous_columns=(), timestamp_column="timestamp", resolution=None):
    """Read a header-first CSV into a :class:`TimeSeries`.

    Rows are sorted by timestamp. Every unparseable or non-finite cell is
    reported with its line number in a single :class:`ParseError`. The
    stride must be constant; ``resolution`` defaults to the smallest
    positive stride found.
    """
    exogenous_columns = list(exogenous_columns)
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        for col in [timestamp_column, target_column, *exogenous_columns]:
            if col not in header:
                raise MissingColumn(f"column {col!r} not found in {path} (have {header})")
        rows, bad = [], []
        for line, rec in enumerate(reader, start=2):
            try:
                ts = parse_timestamp(rec[timestamp_column])
                vals = [float(rec[c]) for c in [target_column, *exogenous_columns]]
                if not all(math.isfinite(v) for v in vals):
                    raise ValueError("non-finite value")
            except (TypeError, ValueError):
                bad.append(line)
                continue
            rows.append((ts, vals))
    if bad:
        shown = ", ".join(map(str, bad[:20])) + (" ..." if len(bad) > 20 else "")
        raise ParseError(f"{path}: unparseable rows at lines {shown}", rows=bad)
    if not rows:
        raise ParseError(f"{path}: no data rows")
    rows.sort(key=lambda r: r[0])
    ts = np.array([r[0] for r in rows], dtype=np.int64)
    values = np.array([r[1] for r in rows], dtype=float)
    diffs = np.diff(ts)
    if resolution is None:
        positive = diffs[diffs > 0]
        resolution = int(positive.min()) if positive.size else 3600
    gaps = np.nonzero(diffs != resolution)[0]
    if gaps.size:
        where = [format_timestamp(ts[i]) for i in gaps]
        raise NonUniformResolution(
            f"{path}: stride differs from {resolution}s after {', '.join(where[:10])}"
            + (" ..." if len(where) > 10 else ""),
            gaps=[int(ts[i]) for i in gaps],
        )
    return TimeSeries(
        ts,
        values[:, 0],
        values[:, 1:].T,
        resolution=int(resolution),
        target_name=target_column,
        exogenous_names=tuple(exogenous_columns),
    )


def write_csv_series(series, path, iso=False):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["timestamp", series.target_name, *series.exogenous_names])
        for i in range(len(series)):
            ts = format_timestamp(series.timestamps[i]) if iso else int(series.timestamps[i])
            writer.writerow([ts, repr(float(series.target[i])), *(repr(float(v)) for v in series.exogenous[:, i])])


@dataclass(frozen=True)
class SplitSpec:
    """How to cut a series into train, validation and test partitions.

    Exactly one mode applies: ``boundaries`` (timestamps where validation
    and test start), ``interleave_months`` (first year train, odd months of
    the second year validation, even months test) or the fractions.
    """

    train_fraction: float = 1 / 3
    val_fraction: float = 1 / 3
    test_fraction: float = 1 / 3
    boundaries: tuple = None
    interleave_months: bool = False

    def __post_init__(self):
        fractions = (self.train_fraction, self.val_fraction, self.test_fraction)
        if any(f < 0 for f in fractions) or self.train_fraction <= 0 or self.test_fraction <= 0:
            raise ConfigError(f"train and test fractions must be positive, validation non-negative: {fractions}")
        if abs(sum(fractions) - 1.0) > 1e-9:
            raise ConfigError(f"split fractions must sum to 1, got {sum(fractions):.6g}")
        if self.boundaries is not None:
            if len(self.boundaries) != 2 or self.boundaries[0] > self.boundaries[1]:
                raise ConfigError("boundaries must be (validation start, test start) in order")


@dataclass(frozen=True, eq=False)
class Partition:
    """Index ranges into ``series``; validation and test may be several segments."""

    series: TimeSeries
    train: tuple
    val: tuple
    test: tuple

    def _segments(self, ranges):
        return [self.series.slice(a, b) for a, b in ranges]

    @property
    def train_series(self):
        return self.series.slice(*self.train)

    @property
    def val_series(self):
        return self._segments(self.val)

    @property
    def test_series(self):
        return self._segments(self.test)

    def sizes(self):
        return (
            self.train[1] - self.train[0],
            sum(b - a for a, b in self.val),
            sum(b - a for a, b in self.test),
        )


def _month_numbers(ts):
    months = ts.astype("datetime64[s]").astype("datetime64[M]").astype(np.int64)
    return months % 12 + 1, months


def _plus_years(ts, years):
    dt = datetime.fromtimestamp(int(ts), tz=timezone.utc)
    try:
        return int(dt.replace(year=dt.year + years).timestamp())
    except ValueError:  # 29 February
        return int(dt.replace(year=dt.year + years, day=28).timestamp())


def chronological_split(series, spec, min_steps=1):
    """Partition ``series``; every non-empty segment needs ``min_steps`` steps.

    Train and test must be non-empty; validation may be empty only when it
    was asked for (zero fraction or coinciding boundaries).
    """
    T = len(series)
    ts = series.timestamps
    if spec.interleave_months:
        year1 = int(np.searchsorted(ts, _plus_years(ts[0], 1)))
        year2 = int(np.searchsorted(ts, _plus_years(ts[0], 2)))
        month_no, month_id = _month_numbers(ts[year1:year2])
        starts = np.concatenate([[0], np.nonzero(np.diff(month_id))[0] + 1])
        stops = np.concatenate([starts[1:], [len(month_id)]])
        val, test = [], []
        for a, b in zip(starts, stops):
            (val if month_no[a] % 2 == 1 else test).append((year1 + int(a), year1 + int(b)))
        train = (0, year1)
    else:
        if spec.boundaries is not None:
            v0 = int(np.searchsorted(ts, spec.boundaries[0]))
            t0 = int(np.searchsorted(ts, spec.boundaries[1]))
        else:
            v0 = int(round(spec.train_fraction * T))
            t0 = int(round((spec.train_fraction + spec.val_fraction) * T))
        train = (0, v0)
        val = [(v0, t0)] if t0 > v0 else []
        test = [(t0, T)]
    segments = [("train", train)] + [("validation", r) for r in val] + [("test", r) for r in test]
    for name, (a, b) in segments:
        if b - a < max(min_steps, 1):
            raise PartitionTooSmall(f"{name} partition [{a}, {b}) has {b - a} steps, need {min_steps}")
    if not test:
        raise PartitionTooSmall("test partition is empty")
    return Partition(series, train, tuple(val), tuple(test))


@dataclass(frozen=True, eq=False)
class SyntheticTruth:
    """Per-phase Gaussian marginal of a synthetic series."""

    kind: str
    period: int
    phase: np.ndarray
    mean: np.ndarray
    scale: np.ndarray

    def quantiles(self, levels):
        """Array (period, n_levels) of the true per-phase quantiles."""
        z = np.array([NormalDist().inv_cdf(a) for a in np.atleast_1d(levels)])
        return self.mean[:, None] + self.scale[:, None] * z[None, :]

    def interval_width(self, alpha):
        q = self.quantiles([alpha / 2, 1 - alpha / 2])
        return q[:, 1] - q[:, 0]


def _daylight(hours, sunrise, sunset):
    x = (hours - sunrise) / (sunset - sunrise)
    return np.where((x > 0) & (x < 1), np.sin(np.pi * np.clip(x, 0, 1)), 0.0)


def gen_synthetic(kind, length, seed=0, period=24, start=DEFAULT_START, resolution=3600, **params):
    """Seeded synthetic series with known per-phase quantiles.

    ``heteroscedastic_daily`` is a solar-like profile: a daylight bump in
    the mean with noise scale rising from ``night_sigma`` to
    ``midday_sigma``. ``homoscedastic_ar`` is a stationary AR(1) with
    coefficient ``phi`` and constant innovation scale ``sigma``.

    Returns ``(series, truth)``.
    """
    if length < 10 * period:
        raise ValueError(f"length must be at least {10 * period}")
    rng = np.random.default_rng(seed)
    phase = np.arange(length) % period
    ts = start + resolution * np.arange(length, dtype=np.int64)
    if kind == "heteroscedastic_daily":
        amplitude = params.pop("amplitude", 1.0)
        night = params.pop("night_sigma", 0.02)
        midday = params.pop("midday_sigma", 0.3)
        sunrise = params.pop("sunrise", 6.0 * period / 24)
        sunset = params.pop("sunset", 18.0 * period / 24)
        bump = _daylight(np.arange(period, dtype=float), sunrise, sunset)
        mean = amplitude * bump
        scale = night + (midday - night) * bump
        y = mean[phase] + scale[phase] * rng.standard_normal(length)
    elif kind == "homoscedastic_ar":
        phi = params.pop("phi", 0.8)
        sigma = params.pop("sigma", 0.1)
        level = params.pop("level", 0.0)
        if not abs(phi) < 1:
            raise ValueError("phi must lie in (-1, 1) for a stationary process")
        sd = sigma / math.sqrt(1 - phi ** 2)
        eps = rng.standard_normal(length)
        y = np.empty(length)
        y[0] = sd * eps[0]
        for t in range(1, length):
            y[t] = phi * y[t - 1] + sigma * eps[t]
        y += level
        mean = np.full(period, level)
        scale = np.full(period, sd)
    else:
        raise ValueError(f"unknown synthetic kind {kind!r}; choose from {SYNTHETIC_KINDS}")
    if params:
        raise TypeError(f"unexpected parameters for {kind}: {sorted(params)}")
    series = TimeSeries(ts, y, resolution=resolution)
    return series, SyntheticTruth(kind, period, phase, mean, scale)
