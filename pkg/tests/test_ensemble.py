import numpy as np
import pytest
from hypothesis import given, strategies as st

from encqr.ensemble import (
    Aggregation,
    EnsembleModel,
    aggregate,
    fit_ensemble,
    loo_quantile_estimates,
    plan_subsets,
)
from encqr.exceptions import EmptyAggregate, SubsetsTooSmall
from encqr.regress import LinearQuantileModel, QuantileRegressor

from conftest import make_series


class Probe(QuantileRegressor):
    """Predicts the smallest training target; records what it saw."""

    kind = "probe"

    def _fit(self, X, Y, X_val, Y_val):
        self.seen = np.unique(np.concatenate([X.ravel(), Y.ravel()]))
        self.const = float(Y.min())

    def _predict(self, X):
        return np.full((len(X), len(self.levels), self.n_outputs_), self.const)


def probe_factory(levels=(0.05, 0.5, 0.95)):
    return lambda seed: Probe(levels)


# plans


def test_plan_example():
    plan = plan_subsets(30, 3, 7, 3)
    assert plan.subsets == [(0, 10), (10, 20), (20, 30)]
    assert plan.n_residuals == 30 - 3 * 7 == 9
    assert len(plan.residual_steps()) == 9


def test_plan_too_small():
    with pytest.raises(SubsetsTooSmall, match="reduce B or n_x"):
        plan_subsets(30, 3, 9, 3)


def test_plan_remainder_unassigned():
    plan = plan_subsets(31, 3, 7, 3)
    assert plan.t_b == 10
    assert plan.subset_of(30) is None
    assert plan.eligible(30) == ()
    assert plan.n_residuals == 9


def test_plan_needs_two_members():
    with pytest.raises(ValueError):
        plan_subsets(100, 1, 5, 2)


def test_eligible_members():
    plan = plan_subsets(30, 3, 7, 3)
    assert plan.eligible(17) == (0, 2)
    assert plan.eligible(15) == ()  # input window reaches back into subset 0


@given(T=st.integers(4, 400), B=st.integers(2, 6), n_x=st.integers(1, 20), n_y=st.integers(1, 10))
def test_plan_properties(T, B, n_x, n_y):
    try:
        plan = plan_subsets(T, B, n_x, n_y)
    except SubsetsTooSmall:
        assert T // B < n_x + n_y
        return
    assert plan == plan_subsets(T, B, n_x, n_y)
    covered = np.concatenate([np.arange(a, b) for a, b in plan.subsets])
    assert len(covered) == len(np.unique(covered)) == B * (T // B)
    steps = plan.residual_steps()
    assert len(steps) == plan.n_residuals == B * (T // B) - B * n_x
    assert np.all(np.diff(steps) > 0)
    for i in range(T):
        b = plan.subset_of(i)
        scored = b is not None and i - n_x >= plan.subsets[b][0]
        assert (len(plan.eligible(i)) == B - 1) == scored
    for b in range(B):
        origins, win, hor = plan.residual_windows(b)
        assert np.array_equal(origins[win] + hor, plan.residual_steps(b))
        assert origins.min() - n_x >= plan.subsets[b][0]
        assert origins.max() + n_y <= plan.subsets[b][1]


# aggregation


def test_aggregate_examples():
    assert aggregate([1, 2, 3], "mean") == 2.0
    assert aggregate([1, 2, 100], "median") == 2.0
    assert aggregate([0, 1, 2, 3, 100], "trimmed_mean", 0.2) == 2.0
    assert aggregate([1, 2, 3, 10], "median") == 2.5


def test_aggregate_errors():
    with pytest.raises(EmptyAggregate):
        aggregate([], "mean")
    with pytest.raises(ValueError):
        aggregate([1, 2], "trimmed_mean", 0.5)
    with pytest.raises(ValueError):
        Aggregation("max")


@given(st.floats(-1e6, 1e6), st.integers(1, 9), st.sampled_from(["mean", "median", "trimmed_mean"]))
def test_aggregate_idempotent(v, B, phi):
    assert aggregate([v] * B, phi, 0.2) == v


# fitting


def test_members_train_inside_their_subset():
    T = 90
    plan = plan_subsets(T, 3, 7, 3)
    ens = fit_ensemble(make_series(np.arange(T, dtype=float)), plan, probe_factory())
    for b, (a, z) in enumerate(plan.subsets):
        seen = ens.members[b].seen
        assert seen.min() >= a and seen.max() < z


def test_window_census_one_per_member():
    plan = plan_subsets(30, 3, 7, 3)
    for b in range(3):
        assert len(plan.training_origins(b)) == 1


def test_identical_subsets_give_identical_members():
    pattern = np.sin(np.arange(20.0))
    series = make_series(np.tile(pattern, 2))
    plan = plan_subsets(40, 2, 4, 2)
    ens = fit_ensemble(series, plan, lambda seed: LinearQuantileModel((0.5,), epochs=50, seed=seed))
    a, b = ens.members
    assert np.array_equal(a.coef_, b.coef_) and np.array_equal(a.intercept_, b.intercept_)


def test_threads_match_sequential():
    rng = np.random.default_rng(0)
    series = make_series(rng.normal(size=120))
    plan = plan_subsets(120, 3, 6, 3)
    from encqr.regress import QuantileForestModel

    fac = lambda seed: QuantileForestModel((0.1, 0.5, 0.9), n_trees=3, seed=seed)  # noqa: E731
    seq = fit_ensemble(series, plan, fac, seed=5)
    par = fit_ensemble(series, plan, fac, seed=5, n_jobs=3)
    X = rng.normal(size=(4, 6, 1))
    assert np.array_equal(seq.member_predictions(X), par.member_predictions(X))


def test_member_errors_are_tagged():
    class Broken(Probe):
        def _fit(self, X, Y, X_val, Y_val):
            if 30 <= Y.min() < 60:
                raise ValueError("bad data")
            super()._fit(X, Y, X_val, Y_val)

    plan = plan_subsets(90, 3, 7, 3)
    with pytest.raises(ValueError, match="ensemble member 1: bad data") as info:
        fit_ensemble(make_series(np.arange(90.0)), plan, lambda seed: Broken((0.5,)))
    assert info.value.member == 1


def test_ensemble_needs_matching_members():
    plan = plan_subsets(30, 3, 7, 3)
    with pytest.raises(ValueError):
        EnsembleModel([Probe((0.5,))], plan)


# leave-one-out estimates


def test_loo_uses_only_other_members():
    T = 90
    series = make_series(np.arange(T, dtype=float))
    plan = plan_subsets(T, 3, 7, 3)
    ens = fit_ensemble(series, plan, probe_factory())
    consts = [m.const for m in ens.members]
    loo = loo_quantile_estimates(ens, series)
    assert len(loo) == plan.n_residuals
    assert np.array_equal(loo.steps, plan.residual_steps())
    assert np.array_equal(loo.y, loo.steps.astype(float))
    for i, q in zip(loo.steps, loo.quantiles):
        b = plan.subset_of(i)
        others = [consts[m] for m in range(3) if m != b]
        assert np.all(q == np.mean(others))
        # purity: no member used here saw step i or its input window
        for m in range(3):
            if m != b:
                assert not np.isin(np.arange(i - 7, i + 1), ens.members[m].seen).any()


def test_loo_fixture_length():
    rng = np.random.default_rng(1)
    series = make_series(rng.normal(size=30))
    ens = fit_ensemble(series, plan_subsets(30, 3, 7, 3), lambda seed: LinearQuantileModel((0.5,), epochs=20))
    assert len(loo_quantile_estimates(ens, series)) == 9


def test_loo_identical_members_equal_single_prediction():
    pattern = np.cos(np.arange(15.0))
    series = make_series(np.tile(pattern, 3))
    plan = plan_subsets(45, 3, 5, 2)
    ens = fit_ensemble(series, plan, lambda seed: LinearQuantileModel((0.2, 0.8), epochs=30))
    loo = loo_quantile_estimates(ens, series)
    from encqr.core import windows_at

    for i, h, q in zip(loo.steps, loo.horizon, loo.quantiles):
        x = windows_at(series, [i - h], 5, 2).inputs
        single = ens.members[0].predict(x)[0, :, h]
        assert np.allclose(q, single, rtol=0, atol=1e-12)
