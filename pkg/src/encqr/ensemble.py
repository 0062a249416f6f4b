"""Disjoint-subset homogeneous ensembles and leave-one-out estimates.

The training series is cut into ``B`` contiguous, equal-length subsets
``[b * T_b, (b + 1) * T_b)``; trailing ``T mod B`` steps are left out.
Member ``b`` only sees windows that lie entirely inside subset ``b``.

A training step ``i`` receives a conformity score when its whole input
window ``[i - n_x, i)`` lies in the same subset as ``i`` itself, so each
subset contributes ``T_b - n_x`` scored steps and the ensemble
``T' - B * n_x`` in total (``T' = B * T_b``). Such a step is predicted by
aggregating only the members trained on the other subsets.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .core import windows_at
from .exceptions import EmptyAggregate, NoOutOfSampleLearner, SubsetsTooSmall

AGGREGATIONS = ("mean", "median", "trimmed_mean")


def _shifted_mean(values, axis):
    # averaging offsets from the first value keeps equal inputs exact
    ref = np.take(values, [0], axis=axis)
    return np.squeeze(ref, axis=axis) + (values - ref).mean(axis=axis)


def aggregate(values, phi="mean", fraction=0.0, axis=0):
    """Combine member outputs along ``axis``.

    ``trimmed_mean`` drops the ``floor(fraction * B)`` smallest and largest
    values before averaging; ``median`` averages the two middle values for
    even ``B``.
    """
    values = np.asarray(values, dtype=float)
    if values.ndim == 0 or values.shape[axis] == 0:
        raise EmptyAggregate("nothing to aggregate")
    if phi == "mean":
        return _shifted_mean(values, axis)
    if phi == "median":
        return np.median(values, axis=axis)
    if phi == "trimmed_mean":
        B = values.shape[axis]
        cut = int(np.floor(fraction * B + 1e-12))
        if fraction < 0 or 2 * cut >= B:
            raise ValueError(f"trim fraction {fraction} leaves nothing of {B} values")
        ordered = np.sort(values, axis=axis)
        kept = np.take(ordered, np.arange(cut, B - cut), axis=axis)
        return _shifted_mean(kept, axis)
    raise ValueError(f"unknown aggregation {phi!r}; choose from {AGGREGATIONS}")


@dataclass(frozen=True)
class Aggregation:
    name: str = "mean"
    fraction: float = 0.0

    def __post_init__(self):
        if self.name not in AGGREGATIONS:
            raise ValueError(f"unknown aggregation {self.name!r}; choose from {AGGREGATIONS}")

    def __call__(self, values, axis=0):
        return aggregate(values, self.name, self.fraction, axis=axis)


@dataclass(frozen=True)
class SubsetPlan:
    T: int
    B: int
    n_x: int
    n_y: int

    @property
    def t_b(self):
        return self.T // self.B

    @property
    def subsets(self):
        return [(b * self.t_b, (b + 1) * self.t_b) for b in range(self.B)]

    @property
    def assigned(self):
        """Number of steps covered by the subsets."""
        return self.B * self.t_b

    @property
    def n_residuals(self):
        return self.assigned - self.B * self.n_x

    def subset_of(self, i):
        """Index of the subset holding step ``i``, or None if unassigned."""
        if 0 <= i < self.assigned:
            return i // self.t_b
        return None

    def eligible(self, i):
        """Members whose subset touches no step of the window ending at ``i``.

        Returns an empty tuple for steps that get no conformity score.
        """
        b = self.subset_of(i)
        if b is None or i - b * self.t_b < self.n_x:
            return ()
        return tuple(m for m in range(self.B) if m != b)

    def training_origins(self, b):
        start, stop = self.subsets[b]
        return np.arange(start + self.n_x, stop - self.n_y + 1)

    def residual_steps(self, b=None):
        """Scored training steps, in chronological order."""
        members = range(self.B) if b is None else [b]
        return np.concatenate([np.arange(self.subsets[m][0] + self.n_x, self.subsets[m][1]) for m in members])

    def residual_windows(self, b):
        """Windows covering the scored steps of subset ``b`` exactly once.

        Returns ``(origins, window_index, horizon)``: the window origins and,
        for each scored step in order, which window predicts it and at what
        horizon offset. Non-overlapping blocks of ``n_y`` are used; a
        trailing remainder is read from the last window ending at the
        subset boundary.
        """
        start, stop = self.subsets[b]
        first = start + self.n_x
        span = stop - first
        n_full, rem = divmod(span, self.n_y)
        origins = list(first + self.n_y * np.arange(n_full))
        win = np.repeat(np.arange(n_full), self.n_y)
        hor = np.tile(np.arange(self.n_y), n_full)
        if rem:
            origins.append(stop - self.n_y)
            win = np.concatenate([win, np.full(rem, n_full)])
            hor = np.concatenate([hor, np.arange(self.n_y - rem, self.n_y)])
        return np.array(origins, dtype=np.int64), win, hor


def plan_subsets(T, B, n_x, n_y):
    if B < 2:
        raise ValueError(f"an ensemble needs at least two members, got B={B}")
    if n_x < 1 or n_y < 1:
        raise ValueError("window sizes must be positive")
    plan = SubsetPlan(int(T), int(B), int(n_x), int(n_y))
    if plan.t_b < n_x + n_y:
        raise SubsetsTooSmall(
            f"subsets of {plan.t_b} steps (T={T}, B={B}) cannot hold a window of "
            f"{n_x}+{n_y} steps; reduce B or n_x"
        )
    return plan


class EnsembleModel:
    """``B`` fitted quantile models plus the plan they were trained on."""

    def __init__(self, members, plan, aggregation=None):
        if len(members) != plan.B or plan.B < 2:
            raise ValueError(f"expected {plan.B} >= 2 members, got {len(members)}")
        self.members = list(members)
        self.plan = plan
        self.aggregation = aggregation or Aggregation()
        self.levels = self.members[0].levels

    @property
    def B(self):
        return self.plan.B

    def member_predictions(self, X):
        """Array of shape (B, n, n_levels, n_y)."""
        return np.stack([m.predict(X) for m in self.members])

    def predict(self, X):
        """Aggregate over all members."""
        return self.aggregation(self.member_predictions(X), axis=0)


def _member_seeds(seed, B):
    return [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(B)]


def fit_ensemble(series, plan, factory, seed=0, aggregation=None, val=None, n_jobs=1):
    """Fit one model per subset.

    ``factory(seed)`` returns an unfitted regressor. ``val`` is an optional
    :class:`WindowedDataset` forwarded to every member for early stopping.
    Members are independent, so ``n_jobs > 1`` fits them on threads with
    results identical to the sequential run.
    """
    if len(series) < plan.T:
        raise ValueError(f"series has {len(series)} steps but the plan covers {plan.T}")
    seeds = _member_seeds(seed, plan.B)

    def fit_one(b):
        data = windows_at(series, plan.training_origins(b), plan.n_x, plan.n_y)
        model = factory(seeds[b])
        try:
            if val is not None and len(val):
                return model.fit(data, X_val=val.inputs, Y_val=val.targets)
            return model.fit(data)
        except Exception as exc:
            exc.member = b
            if exc.args and isinstance(exc.args[0], str):
                exc.args = (f"ensemble member {b}: {exc.args[0]}",) + exc.args[1:]
            raise

    if n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            members = list(pool.map(fit_one, range(plan.B)))
    else:
        members = [fit_one(b) for b in range(plan.B)]
    return EnsembleModel(members, plan, aggregation)


@dataclass(frozen=True, eq=False)
class LOOEstimates:
    """Out-of-sample predictions for the scored training steps.

    ``quantiles`` is (n_steps, n_levels); ``horizon`` is the offset of each
    step inside the window that predicted it.
    """

    steps: np.ndarray
    horizon: np.ndarray
    y: np.ndarray
    quantiles: np.ndarray
    levels: tuple

    def __len__(self):
        return len(self.steps)

    def level(self, a):
        return self.quantiles[:, self.levels.index(a)]


def loo_quantile_estimates(ensemble, series):
    """Aggregate, for every scored training step, the members that never saw it."""
    plan = ensemble.plan
    if len(series) < plan.T:
        raise ValueError(f"series has {len(series)} steps but the plan covers {plan.T}")
    steps, horizon, quantiles = [], [], []
    for b in range(plan.B):
        others = [m for m in range(plan.B) if m != b]
        if not others:
            raise NoOutOfSampleLearner(f"every member was trained on subset {b}")
        origins, win, hor = plan.residual_windows(b)
        X = windows_at(series, origins, plan.n_x, plan.n_y).inputs
        preds = np.stack([ensemble.members[m].predict(X) for m in others])
        agg = ensemble.aggregation(preds, axis=0)  # (n_windows, L, n_y)
        quantiles.append(agg[win, :, hor])
        steps.append(origins[win] + hor)
        horizon.append(hor)
    steps = np.concatenate(steps)
    return LOOEstimates(
        steps=steps,
        horizon=np.concatenate(horizon),
        y=np.asarray(series.target)[steps],
        quantiles=np.concatenate(quantiles),
        levels=tuple(ensemble.levels),
    )
