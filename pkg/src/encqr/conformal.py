"""Interval constructors: split CP, CQR, EnbPI, EnCQR and the raw QR baseline.

Batch predictors (EnbPI, EnCQR, raw QR) follow a strict predict/observe
cycle: ``predict_batch`` returns intervals for ``s`` steps, and only then
may the ``s`` true values be passed to ``observe``, which slides the
conformity-score windows forward by exactly ``s`` entries.
"""

from __future__ import annotations

from collections import deque

import numpy as np

from .core import IntervalBatch, empirical_quantile
from .ensemble import loo_quantile_estimates
from .exceptions import BatchSizeMismatch, EmptyResidualSet

POOLING = ("pooled", "per_horizon")
SIDE_ALPHA = ("half", "full")


def asymmetric_scores(q_lo, q_hi, y):
    """Low-side ``q_lo - y`` and high-side ``y - q_hi`` conformity scores."""
    q_lo, q_hi, y = (np.asarray(v, dtype=float) for v in (q_lo, q_hi, y))
    e_lo, e_hi = q_lo - y, y - q_hi
    if e_lo.ndim == 0:
        return float(e_lo), float(e_hi)
    return e_lo, e_hi


def cqr_score(q_lo, q_hi, y):
    """Symmetric CQR score, the larger of the two asymmetric scores."""
    e_lo, e_hi = asymmetric_scores(q_lo, q_hi, y)
    return np.maximum(e_lo, e_hi) if isinstance(e_lo, np.ndarray) else max(e_lo, e_hi)


class ScoreFIFO:
    """Bounded first-in first-out collection of conformity scores."""

    def __init__(self, scores=(), capacity=None):
        scores = [float(v) for v in np.ravel(scores)]
        self.capacity = capacity or len(scores)
        if self.capacity < 1:
            raise EmptyResidualSet("a score window needs at least one score or an explicit capacity")
        self._q = deque(scores[-self.capacity:], maxlen=self.capacity)

    def __len__(self):
        return len(self._q)

    def __iter__(self):
        return iter(self._q)

    def values(self):
        return np.fromiter(self._q, dtype=float, count=len(self._q))

    def extend(self, scores):
        """Append new scores; once full, as many oldest scores drop out."""
        self._q.extend(float(v) for v in np.ravel(scores))

    def quantile(self, level):
        return empirical_quantile(self.values(), level, "conformal")


class ResidualStore:
    """Low- and high-side score windows updated together in batches of ``s``."""

    def __init__(self, lo_scores, hi_scores, s, capacity=None):
        if len(lo_scores) != len(hi_scores):
            raise ValueError("low and high score sets must have equal length")
        self.lo = ScoreFIFO(lo_scores, capacity)
        self.hi = ScoreFIFO(hi_scores, capacity)
        self.s = s

    def __len__(self):
        return len(self.lo)

    def update(self, lo_new, hi_new):
        if len(lo_new) != len(hi_new):
            raise ValueError("low and high updates must have equal length")
        self.lo.extend(lo_new)
        self.hi.extend(hi_new)

    def offsets(self, level):
        return self.lo.quantile(level), self.hi.quantile(level)


def _level_index(levels, a):
    return min(range(len(levels)), key=lambda i: abs(levels[i] - a))


def _center(pred, levels):
    """Level-0.5 column of (..., n_levels, n_y) predictions, else the middle one."""
    i = levels.index(0.5) if 0.5 in levels else len(levels) // 2
    return pred[..., i, :]


class ConformalPredictor:
    method = None

    def __init__(self, alpha):
        if not 0 < alpha < 1:
            raise ValueError(f"alpha must be in (0, 1), got {alpha}")
        self.alpha = alpha
        self.n_swapped = 0

    def _batch(self, lower, center, upper):
        batch = IntervalBatch.clamped(lower, center, upper, self.alpha)
        self.n_swapped += batch.n_swapped
        return batch


class SplitConformalPredictor(ConformalPredictor):
    """Point prediction plus or minus a calibrated absolute-residual quantile."""

    method = "split_cp"

    def __init__(self, model, residuals, alpha):
        super().__init__(alpha)
        self.model = model
        self.residuals = np.abs(np.ravel(residuals))
        self.half_width = empirical_quantile(self.residuals, 1 - alpha, "conformal")

    def interval(self, X):
        center = _center(self.model.predict(X), self.model.levels)
        return self._batch(center - self.half_width, center, center + self.half_width)


def _calibration_targets(Y_cal):
    Y_cal = np.asarray(Y_cal, dtype=float)
    if Y_cal.size == 0:
        raise EmptyResidualSet("the calibration set is empty")
    return Y_cal.reshape(len(Y_cal), -1)


def split_cp_build(model, X_cal, Y_cal, alpha):
    """Calibrate a model fitted on the proper training set only."""
    Y_cal = _calibration_targets(Y_cal)
    center = _center(model.predict(X_cal), model.levels)
    return SplitConformalPredictor(model, Y_cal - center, alpha)


class CQRPredictor(ConformalPredictor):
    """Quantile interval widened (or shrunk) by one calibrated offset."""

    method = "cqr"

    def __init__(self, model, scores, alpha, lo_index=0, hi_index=-1):
        super().__init__(alpha)
        self.model = model
        self.scores = np.ravel(scores)
        self.lo_index, self.hi_index = lo_index, hi_index
        self.offset = empirical_quantile(self.scores, 1 - alpha, "conformal")

    def interval(self, X):
        pred = self.model.predict(X)
        q_lo, q_hi = pred[:, self.lo_index], pred[:, self.hi_index]
        center = _center(pred, self.model.levels) if len(self.model.levels) > 2 else (q_lo + q_hi) / 2
        return self._batch(q_lo - self.offset, center, q_hi + self.offset)


def cqr_build(model, X_cal, Y_cal, alpha):
    Y_cal = _calibration_targets(Y_cal)
    pred = model.predict(X_cal)
    scores = cqr_score(pred[:, 0], pred[:, -1], Y_cal)
    return CQRPredictor(model, scores, alpha)


class _BatchPredictor(ConformalPredictor):
    """Shared predict/observe bookkeeping for the sliding-window methods."""

    def __init__(self, ensemble, alpha, s):
        super().__init__(alpha)
        if s < 1:
            raise ValueError("batch size s must be positive")
        self.ensemble = ensemble
        self.s = s
        self._pending = None

    @property
    def levels(self):
        return self.ensemble.levels

    def predict_batch(self, X):
        """Intervals for windows ``X`` whose horizons add up to ``s`` steps."""
        pred = self.ensemble.predict(X)  # (m, L, n_y)
        m, _, n_y = pred.shape
        if m * n_y != self.s:
            raise BatchSizeMismatch(f"{m} windows of {n_y} steps do not make a batch of s={self.s}")
        flat = pred.transpose(0, 2, 1).reshape(m * n_y, -1)  # (s, L)
        return self.predict_steps(flat, np.tile(np.arange(n_y), m))

    def predict_steps(self, quantiles, horizon):
        """Intervals from aggregated per-step quantiles of shape (s, n_levels)."""
        quantiles = np.asarray(quantiles, dtype=float)
        if len(quantiles) != self.s:
            raise BatchSizeMismatch(f"batch of {len(quantiles)} steps, expected s={self.s}")
        if self._pending is not None:
            raise RuntimeError("observe() the previous batch before predicting the next one")
        horizon = np.asarray(horizon, dtype=np.int64)
        batch = self._intervals(quantiles, horizon)
        self._pending = (quantiles, horizon)
        return batch

    def observe(self, y):
        y = np.asarray(y, dtype=float).ravel()
        if self._pending is None:
            raise RuntimeError("observe() called before predict_batch()")
        if len(y) != self.s:
            raise BatchSizeMismatch(f"observed {len(y)} values, expected s={self.s}")
        quantiles, horizon = self._pending
        self._pending = None
        self._update(quantiles, horizon, y)

    def _intervals(self, quantiles, horizon):
        raise NotImplementedError

    def _update(self, quantiles, horizon, y):
        pass


def _split_by_horizon(values, horizon, n_y):
    return [values[horizon == h] for h in range(n_y)]


class EnCQRPredictor(_BatchPredictor):
    """Ensemble quantile interval conformalized with asymmetric scores.

    The low and high bounds are shifted by separate empirical quantiles of
    the low- and high-side score windows. With ``side_alpha="half"`` each
    side is calibrated at level ``1 - alpha/2`` so the two tails together
    miss at most ``alpha``; ``"full"`` calibrates each side at ``1 - alpha``.
    """

    method = "encqr"

    def __init__(self, ensemble, stores, alpha, s, side_alpha="half"):
        super().__init__(ensemble, alpha, s)
        if side_alpha not in SIDE_ALPHA:
            raise ValueError(f"side_alpha must be one of {SIDE_ALPHA}")
        self.stores = list(stores)
        self.side_alpha = side_alpha
        self.lo_i = 0
        self.hi_i = len(self.levels) - 1
        self.last_offsets = None

    @property
    def score_level(self):
        return 1 - self.alpha / 2 if self.side_alpha == "half" else 1 - self.alpha

    @property
    def pooled(self):
        return len(self.stores) == 1

    @property
    def store(self):
        return self.stores[0]

    def _store(self, h):
        return self.stores[0] if self.pooled else self.stores[h]

    def offsets(self, horizon=0):
        return self._store(horizon).offsets(self.score_level)

    def _intervals(self, quantiles, horizon):
        q_lo, q_hi = quantiles[:, self.lo_i], quantiles[:, self.hi_i]
        center = _center(quantiles[:, :, None], self.levels)[:, 0]
        level = self.score_level
        if self.pooled:
            w_lo, w_hi = self.store.offsets(level)
            w_lo, w_hi = np.full(len(q_lo), w_lo), np.full(len(q_lo), w_hi)
        else:
            pairs = np.array([self.stores[h].offsets(level) for h in range(len(self.stores))])
            w_lo, w_hi = pairs[horizon, 0], pairs[horizon, 1]
        self.last_offsets = (w_lo, w_hi)
        return self._batch(q_lo - w_lo, center, q_hi + w_hi)

    def _update(self, quantiles, horizon, y):
        e_lo, e_hi = asymmetric_scores(quantiles[:, self.lo_i], quantiles[:, self.hi_i], y)
        if self.pooled:
            self.store.update(e_lo, e_hi)
            return
        for h, store in enumerate(self.stores):
            sel = horizon == h
            store.update(e_lo[sel], e_hi[sel])


def encqr_fit(ensemble, series, alpha, s, pooling="pooled", side_alpha="half"):
    """Warm the score windows with leave-one-out scores on the training series."""
    if pooling not in POOLING:
        raise ValueError(f"pooling must be one of {POOLING}")
    loo = loo_quantile_estimates(ensemble, series)
    e_lo, e_hi = asymmetric_scores(loo.quantiles[:, 0], loo.quantiles[:, -1], loo.y)
    if pooling == "pooled":
        stores = [ResidualStore(e_lo, e_hi, s)]
    else:
        n_y = ensemble.plan.n_y
        lo, hi = _split_by_horizon(e_lo, loo.horizon, n_y), _split_by_horizon(e_hi, loo.horizon, n_y)
        stores = [ResidualStore(a, b, s) for a, b in zip(lo, hi)]
    return EnCQRPredictor(ensemble, stores, alpha, s, side_alpha)


class EnbPIPredictor(_BatchPredictor):
    """Aggregated point forecast plus or minus a sliding absolute-residual quantile."""

    method = "enbpi"

    def __init__(self, ensemble, fifos, alpha, s):
        super().__init__(ensemble, alpha, s)
        self.fifos = list(fifos)
        self.last_half_width = None

    @property
    def fifo(self):
        return self.fifos[0]

    def _intervals(self, quantiles, horizon):
        center = _center(quantiles[:, :, None], self.levels)[:, 0]
        level = 1 - self.alpha
        if len(self.fifos) == 1:
            half = np.full(len(center), self.fifo.quantile(level))
        else:
            widths = np.array([f.quantile(level) for f in self.fifos])
            half = widths[horizon]
        self.last_half_width = half
        return self._batch(center - half, center, center + half)

    def _update(self, quantiles, horizon, y):
        resid = np.abs(y - _center(quantiles[:, :, None], self.levels)[:, 0])
        if len(self.fifos) == 1:
            self.fifo.extend(resid)
            return
        for h, fifo in enumerate(self.fifos):
            fifo.extend(resid[horizon == h])


def enbpi_build(ensemble, series, alpha, s, pooling="pooled"):
    """Warm the residual window with leave-one-out absolute residuals."""
    if pooling not in POOLING:
        raise ValueError(f"pooling must be one of {POOLING}")
    loo = loo_quantile_estimates(ensemble, series)
    center = loo.quantiles[:, _level_index(loo.levels, 0.5)]
    resid = np.abs(loo.y - center)
    if pooling == "pooled":
        fifos = [ScoreFIFO(resid)]
    else:
        fifos = [ScoreFIFO(r) for r in _split_by_horizon(resid, loo.horizon, ensemble.plan.n_y)]
    return EnbPIPredictor(ensemble, fifos, alpha, s)


class RawQRPredictor(_BatchPredictor):
    """Aggregated ensemble quantiles used as the interval, uncalibrated."""

    method = "raw_qr"

    def _intervals(self, quantiles, horizon):
        center = _center(quantiles[:, :, None], self.levels)[:, 0]
        return self._batch(quantiles[:, 0], center, quantiles[:, -1])
