"""Prediction-interval quality metrics and the heteroscedasticity statistic."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .core import minmax_normalize
from .exceptions import DegenerateRange, SeriesTooShort, ShapeError


def _same_length(*arrays):
    arrays = [np.asarray(a, dtype=float).ravel() for a in arrays]
    n = len(arrays[0])
    if n == 0 or any(len(a) != n for a in arrays):
        raise ShapeError(f"expected equal non-zero lengths, got {[len(a) for a in arrays]}")
    return arrays


def covered(y, lower, upper):
    """Boolean mask of steps with ``lower <= y <= upper``."""
    y, lower, upper = _same_length(y, lower, upper)
    return (lower <= y) & (y <= upper)


def picp(y, lower, upper):
    """Fraction of observations inside their closed interval."""
    return float(np.mean(covered(y, lower, upper)))


def pinaw(y_all, lower, upper):
    """Mean interval width divided by the range of ``y_all``."""
    y_all = np.asarray(y_all, dtype=float)
    lower, upper = _same_length(lower, upper)
    R = float(np.max(y_all) - np.min(y_all)) if y_all.size else 0.0
    if not R > 0:
        raise DegenerateRange("target range is zero; PINAW is undefined")
    return float(np.mean(upper - lower) / R)


def cwc(picp_value, pinaw_value, alpha, eta=30.0):
    """Coverage width-based criterion with a symmetric coverage penalty."""
    if eta < 0:
        raise ValueError("eta must be non-negative")
    return (1 - pinaw_value) * math.exp(-eta * (picp_value - (1 - alpha)) ** 2)


def heteroscedasticity_measure(series, period=24, normalize=True):
    """Spread of the per-phase standard deviations.

    For each phase ``h`` the sample standard deviation of all values at
    indices congruent to ``h`` is taken; the result is the sample standard
    deviation of those ``period`` values. By default the series is first
    min-max scaled to [0, 1] on its own range.
    """
    if hasattr(series, "target"):
        if normalize:
            series = minmax_normalize(series)[0]
        values = np.asarray(series.target, dtype=float)
    else:
        values = np.asarray(series, dtype=float)
        if normalize:
            span = values.max() - values.min()
            values = (values - values.min()) / span if span > 0 else np.zeros_like(values)
    if len(values) < 2 * period:
        raise SeriesTooShort(f"need at least {2 * period} values, got {len(values)}")
    per_phase = np.array([values[h::period].std(ddof=1) for h in range(period)])
    return float(per_phase.std(ddof=1))


def _flat(v, rtol=1e-12):
    return np.ptp(v) <= rtol * max(1.0, float(np.max(np.abs(v))))


def width_correlation(width, reference):
    """Pearson correlation; 0.0 when either input is constant.

    Inputs that vary only by rounding (``upper - lower`` of a fixed
    half-width around a moving center, say) count as constant.
    """
    width, reference = _same_length(width, reference)
    if _flat(width) or _flat(reference):
        return 0.0
    return float(np.corrcoef(width, reference)[0, 1])


def phase_table(phase, y, lower, upper, period=24):
    """Mean width and coverage per phase; NaN where a phase has no steps."""
    phase = np.asarray(phase, dtype=np.int64)
    inside = covered(y, lower, upper)
    width = np.asarray(upper, dtype=float) - np.asarray(lower, dtype=float)
    mean_width, coverage = [], []
    for h in range(period):
        sel = phase == h
        mean_width.append(float(width[sel].mean()) if sel.any() else float("nan"))
        coverage.append(float(inside[sel].mean()) if sel.any() else float("nan"))
    return mean_width, coverage


@dataclass
class MetricReport:
    picp: float
    pinaw: float
    cwc: float
    alpha: float
    eta: float
    n: int
    per_hour_width: list = field(default_factory=list)
    per_hour_coverage: list = field(default_factory=list)

    @classmethod
    def from_intervals(cls, y, lower, upper, alpha, eta=30.0, y_range=None, phase=None, period=24):
        """Score intervals; ``y_range`` defaults to ``y`` itself for PINAW."""
        p = picp(y, lower, upper)
        w = pinaw(y if y_range is None else y_range, lower, upper)
        hours_w, hours_c = ([], []) if phase is None else phase_table(phase, y, lower, upper, period)
        return cls(p, w, cwc(p, w, alpha, eta), alpha, eta, len(np.ravel(y)), hours_w, hours_c)

    def consistent(self, tol=1e-12):
        return abs(self.cwc - cwc(self.picp, self.pinaw, self.alpha, self.eta)) <= tol

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**{k: d[k] for k in cls.__dataclass_fields__})

    def to_json(self):
        def clean(v):
            if isinstance(v, float) and math.isnan(v):
                return None
            if isinstance(v, list):
                return [clean(x) for x in v]
            return v

        return json.dumps({k: clean(v) for k, v in self.to_dict().items()}, sort_keys=True, indent=2) + "\n"

    @classmethod
    def from_json(cls, text):
        d = json.loads(text)
        for key in ("per_hour_width", "per_hour_coverage"):
            d[key] = [float("nan") if v is None else v for v in d.get(key, [])]
        return cls.from_dict(d)

    def to_csv_row(self, header=True, **extra):
        """Flat CSV with the scalar metrics and any ``extra`` key columns."""
        row = dict(extra)
        row.update({k: v for k, v in self.to_dict().items() if not isinstance(v, list)})
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=list(row), lineterminator="\n")
        if header:
            writer.writeheader()
        writer.writerow(row)
        return buf.getvalue()
