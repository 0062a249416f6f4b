"""Domain types, sliding windows, order-statistic quantiles and scaling."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import EmptyResidualSet, InvalidWindow, SeriesTooShort

# Guards ceil() against products such as 0.7 * 10 = 7.000000000000001.
_RANK_EPS = 1e-9


def _frozen(a, dtype):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class TimeSeries:
    """Regularly sampled target channel with optional exogenous channels.

    Arrays are copied and made read-only on construction.

    Parameters
    ----------
    timestamps : array of int
        Epoch seconds, strictly increasing with a constant stride.
    target : array of float
    exogenous : array of shape (k, T), optional
    resolution : int
        Seconds per step.
    """

    timestamps: np.ndarray
    target: np.ndarray
    exogenous: np.ndarray = None
    resolution: int = 3600
    target_name: str = "y"
    exogenous_names: tuple = ()

    def __post_init__(self):
        ts = _frozen(self.timestamps, np.int64)
        y = _frozen(self.target, np.float64)
        if ts.ndim != 1 or y.ndim != 1:
            raise ValueError("timestamps and target must be one-dimensional")
        if len(y) < 1:
            raise SeriesTooShort("a time series needs at least one step")
        if len(ts) != len(y):
            raise ValueError(f"timestamps ({len(ts)}) and target ({len(y)}) differ in length")
        exo = self.exogenous
        if exo is None:
            exo = np.empty((0, len(y)))
        exo = _frozen(np.atleast_2d(exo) if np.size(exo) else np.empty((0, len(y))), np.float64)
        if exo.shape[1] != len(y):
            raise ValueError("exogenous channels must match the target length")
        names = tuple(self.exogenous_names) or tuple(f"x{i}" for i in range(exo.shape[0]))
        if len(names) != exo.shape[0]:
            raise ValueError("one name per exogenous channel is required")
        if self.resolution <= 0:
            raise ValueError("resolution must be positive")
        if len(ts) > 1 and np.any(np.diff(ts) != self.resolution):
            raise ValueError("timestamps must advance by exactly one resolution per step")
        if not (np.all(np.isfinite(y)) and np.all(np.isfinite(exo))):
            raise ValueError("time series values must be finite")
        object.__setattr__(self, "timestamps", ts)
        object.__setattr__(self, "target", y)
        object.__setattr__(self, "exogenous", exo)
        object.__setattr__(self, "exogenous_names", names)

    def __len__(self):
        return len(self.target)

    def __eq__(self, other):
        if not isinstance(other, TimeSeries):
            return NotImplemented
        return (
            self.resolution == other.resolution
            and self.target_name == other.target_name
            and self.exogenous_names == other.exogenous_names
            and np.array_equal(self.timestamps, other.timestamps)
            and np.array_equal(self.target, other.target)
            and np.array_equal(self.exogenous, other.exogenous)
        )

    @property
    def n_channels(self):
        return 1 + self.exogenous.shape[0]

    def channels(self):
        """Return the (T, d) matrix with the target in column 0."""
        return np.column_stack([self.target, self.exogenous.T])

    def slice(self, start, stop):
        return TimeSeries(
            self.timestamps[start:stop],
            self.target[start:stop],
            self.exogenous[:, start:stop],
            resolution=self.resolution,
            target_name=self.target_name,
            exogenous_names=self.exogenous_names,
        )

    def replace_values(self, target, exogenous=None):
        return TimeSeries(
            self.timestamps,
            target,
            self.exogenous if exogenous is None else exogenous,
            resolution=self.resolution,
            target_name=self.target_name,
            exogenous_names=self.exogenous_names,
        )


@dataclass(frozen=True, eq=False)
class WindowedDataset:
    """Supervised (input window, target window) pairs.

    ``inputs`` has shape (n, n_x, d) and ``targets`` shape (n, n_y). Pair k
    reads source steps ``[origins[k] - n_x, origins[k])`` as input and
    ``[origins[k], origins[k] + n_y)`` as target.
    """

    inputs: np.ndarray
    targets: np.ndarray
    origins: np.ndarray
    n_x: int
    n_y: int

    def __post_init__(self):
        if not (len(self.inputs) == len(self.targets) == len(self.origins)):
            raise ValueError("inputs, targets and origins must have equal length")

    def __len__(self):
        return len(self.targets)

    @property
    def n_features(self):
        return self.inputs.shape[2]

    def subset(self, idx):
        return WindowedDataset(self.inputs[idx], self.targets[idx], self.origins[idx], self.n_x, self.n_y)


def _check_window(n_x, n_y, stride=1):
    if n_x < 1 or n_y < 1 or stride < 1:
        raise InvalidWindow(f"window sizes must be positive (n_x={n_x}, n_y={n_y}, stride={stride})")


def windows_at(series, origins, n_x, n_y):
    """Build pairs at explicit origin indices of ``series``."""
    _check_window(n_x, n_y)
    origins = np.asarray(origins, dtype=np.int64)
    T = len(series)
    if origins.size and (origins.min() < n_x or origins.max() > T - n_y):
        raise InvalidWindow(f"origins must lie in [{n_x}, {T - n_y}]")
    data = series.channels()
    d = data.shape[1]
    if origins.size == 0:
        return WindowedDataset(np.empty((0, n_x, d)), np.empty((0, n_y)), origins, n_x, n_y)
    in_idx = origins[:, None] + np.arange(-n_x, 0)[None, :]
    out_idx = origins[:, None] + np.arange(n_y)[None, :]
    return WindowedDataset(data[in_idx], series.target[out_idx], origins, n_x, n_y)


def make_sliding_windows(series, n_x, n_y, stride=1):
    """Carve ``floor((T - n_x - n_y) / stride) + 1`` pairs from ``series``.

    The first pair starts its target at step ``n_x``; exogenous channels are
    aligned step-for-step with the target inside each input window.
    """
    _check_window(n_x, n_y, stride)
    T = len(series)
    if T < n_x + n_y:
        raise SeriesTooShort(f"series of length {T} cannot host a window of {n_x}+{n_y} steps")
    return windows_at(series, np.arange(n_x, T - n_y + 1, stride), n_x, n_y)


def quantile_rank(n, level, convention="conformal"):
    """1-based rank of the order statistic used by :func:`empirical_quantile`."""
    if convention == "conformal":
        k = math.ceil(level * (n + 1) - _RANK_EPS)
    elif convention == "plain":
        k = math.ceil(level * n - _RANK_EPS)
    else:
        raise ValueError(f"unknown quantile convention {convention!r}")
    return min(max(k, 1), n)


def empirical_quantile(values, level, convention="conformal"):
    """Order-statistic quantile, never interpolated.

    The conformal convention takes the ``ceil(level * (n + 1))``-th smallest
    value, clamped to the maximum; ``plain`` takes the ``ceil(level * n)``-th.
    """
    v = np.asarray(values, dtype=float).ravel()
    if v.size == 0:
        raise EmptyResidualSet("cannot take a quantile of an empty collection")
    if not 0.0 < level < 1.0:
        raise ValueError(f"level must be in (0, 1), got {level}")
    k = quantile_rank(v.size, level, convention)
    return float(np.partition(v, k - 1)[k - 1])


@dataclass(frozen=True)
class QuantileLevels:
    """Lower, middle and upper quantile levels predicted by a model."""

    lo: float
    hi: float
    mid: float = 0.5

    def __post_init__(self):
        if not 0.0 < self.lo < self.mid < self.hi < 1.0:
            raise ValueError(f"need 0 < lo < mid < hi < 1, got {self.lo}, {self.mid}, {self.hi}")

    @classmethod
    def from_alpha(cls, alpha):
        return cls(alpha / 2, 1 - alpha / 2)

    def as_tuple(self):
        return (self.lo, self.mid, self.hi)


@dataclass(frozen=True, eq=False)
class IntervalBatch:
    lower: np.ndarray
    center: np.ndarray
    upper: np.ndarray
    alpha: float
    n_swapped: int = 0

    def __post_init__(self):
        lo, c, hi = (np.asarray(a, dtype=float) for a in (self.lower, self.center, self.upper))
        if not (lo.shape == c.shape == hi.shape):
            raise ValueError("lower, center and upper must have equal length")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "upper", hi)

    def __len__(self):
        return len(self.lower)

    @property
    def width(self):
        return self.upper - self.lower

    @classmethod
    def clamped(cls, lower, center, upper, alpha):
        """Build a batch, swapping any ``lower > upper`` pair in place.

        The swap keeps the midpoint; the number of swapped steps is kept in
        ``n_swapped``.
        """
        lower = np.array(lower, dtype=float)
        upper = np.array(upper, dtype=float)
        bad = lower > upper
        lower[bad], upper[bad] = upper[bad], lower[bad]
        return cls(lower, center, upper, alpha, int(bad.sum()))


@dataclass(frozen=True)
class ScaleParams:
    """Per-channel min/max; channel 0 is the target."""

    mins: tuple
    maxs: tuple
    constant: tuple = field(default=())

    def __post_init__(self):
        if not self.constant:
            object.__setattr__(self, "constant", tuple(bool(a == b) for a, b in zip(self.mins, self.maxs)))

    def scale(self, values, channel=0):
        lo, hi = self.mins[channel], self.maxs[channel]
        values = np.asarray(values, dtype=float)
        if self.constant[channel]:
            return np.zeros_like(values)
        return (values - lo) / (hi - lo)

    def unscale(self, values, channel=0):
        lo, hi = self.mins[channel], self.maxs[channel]
        values = np.asarray(values, dtype=float)
        if self.constant[channel]:
            return np.full_like(values, lo)
        return values * (hi - lo) + lo


def fit_minmax(series):
    data = series.channels()
    mins = tuple(float(v) for v in data.min(axis=0))
    maxs = tuple(float(v) for v in data.max(axis=0))
    return ScaleParams(mins, maxs)


def minmax_normalize(series, params=None):
    """Map every channel to ``(v - min) / (max - min)``.

    Pass ``params`` fitted on the training partition to scale validation
    and test data without leakage; values outside [0, 1] are then allowed.
    Constant channels map to 0.0 and are flagged in ``params.constant``.
    """
    if params is None:
        params = fit_minmax(series)
    if len(params.mins) != series.n_channels:
        raise ValueError("scale parameters do not match the channel count")
    target = params.scale(series.target, 0)
    exo = np.array([params.scale(row, i + 1) for i, row in enumerate(series.exogenous)])
    return series.replace_values(target, exo.reshape(series.exogenous.shape)), params


def denormalize(values, params, channel=0):
    return params.unscale(values, channel)
