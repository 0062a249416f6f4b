import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from encqr.data import (
    SplitSpec,
    chronological_split,
    format_timestamp,
    gen_synthetic,
    load_csv_series,
    parse_timestamp,
    write_csv_series,
)
from encqr.exceptions import ConfigError, MissingColumn, NonUniformResolution, ParseError, PartitionTooSmall
from encqr.metrics import heteroscedasticity_measure

from conftest import make_series


def write(path, text):
    path.write_text(text)
    return path


def test_load_small(tmp_path):
    p = write(tmp_path / "a.csv", "timestamp,load,temp,wind\n0,1.5,10,3\n3600,2.5,11,4\n7200,3.5,12,5\n")
    s = load_csv_series(p, "load", ["wind", "temp"])
    assert len(s) == 3
    assert s.target.tolist() == [1.5, 2.5, 3.5]
    assert s.exogenous_names == ("wind", "temp")
    assert s.exogenous[0].tolist() == [3, 4, 5]


def test_load_sorts_and_parses_iso(tmp_path):
    p = write(tmp_path / "a.csv", "time,y\n2020-01-01T01:00:00Z,2\n2020-01-01T00:00:00,1\n")
    s = load_csv_series(p, "y", timestamp_column="time")
    assert s.target.tolist() == [1.0, 2.0]
    assert format_timestamp(s.timestamps[0]) == "2020-01-01T00:00:00Z"


def test_load_gap(tmp_path):
    p = write(tmp_path / "a.csv", "timestamp,y\n0,1\n3600,2\n10800,3\n14400,4\n")
    with pytest.raises(NonUniformResolution, match="1970-01-01T01:00:00Z") as info:
        load_csv_series(p, "y")
    assert info.value.gaps == [3600]


def test_load_missing_column(tmp_path):
    p = write(tmp_path / "a.csv", "timestamp,y\n0,1\n")
    with pytest.raises(MissingColumn, match="temp"):
        load_csv_series(p, "y", ["temp"])


def test_load_bad_rows(tmp_path):
    p = write(tmp_path / "a.csv", "timestamp,y\n0,1\n3600,abc\n7200,nan\n10800,2,5\n")
    with pytest.raises(ParseError) as info:
        load_csv_series(p, "y")
    assert info.value.rows == [3, 4]


def test_parse_timestamp_forms():
    assert parse_timestamp("3600") == 3600
    assert parse_timestamp("1970-01-01T02:00:00+01:00") == 3600


@settings(max_examples=25)
@given(st.lists(st.floats(-1e12, 1e12), min_size=1, max_size=30), st.booleans())
def test_csv_roundtrip(tmp_path_factory, values, iso):
    rng = np.random.default_rng(len(values))
    s = make_series(values, rng.normal(size=(2, len(values))), start=1_600_000_000)
    path = tmp_path_factory.mktemp("rt") / "s.csv"
    write_csv_series(s, path, iso=iso)
    back = load_csv_series(path, "y", ["x0", "x1"], resolution=3600)
    assert back == s


# splitting


def test_split_thirds():
    part = chronological_split(make_series(np.arange(300.0)), SplitSpec())
    assert part.sizes() == (100, 100, 100)
    tr, va, te = part.train_series, part.val_series[0], part.test_series[0]
    assert tr.timestamps.max() < va.timestamps.min() <= va.timestamps.max() < te.timestamps.min()


def test_split_fraction_validation():
    with pytest.raises(ConfigError):
        SplitSpec(0.3, 0.3, 0.3)
    with pytest.raises(ConfigError):
        SplitSpec(0.5, 0.5, 0.0)


def test_split_boundaries_and_empty_val():
    s = make_series(np.arange(100.0))
    part = chronological_split(s, SplitSpec(boundaries=(60 * 3600, 60 * 3600)))
    assert part.sizes() == (60, 0, 40) and part.val == ()


def test_split_too_small():
    with pytest.raises(PartitionTooSmall):
        chronological_split(make_series(np.arange(30.0)), SplitSpec(), min_steps=20)


def test_interleave_months():
    start = 1483228800  # 2017-01-01
    s = make_series(np.zeros(2 * 365 * 24), start=start)
    part = chronological_split(s, SplitSpec(interleave_months=True))
    assert part.train == (0, 365 * 24)
    assert len(part.val) == 6 and len(part.test) == 6
    month = s.timestamps.astype("datetime64[s]").astype("datetime64[M]").astype(int) % 12 + 1
    year = s.timestamps.astype("datetime64[s]").astype("datetime64[Y]").astype(int) + 1970
    for a, b in part.val:
        assert np.all(month[a:b] % 2 == 1) and np.all(year[a:b] == 2018)
    for a, b in part.test:
        assert np.all(month[a:b] % 2 == 0) and np.all(year[a:b] == 2018)
    assert part.sizes()[1] + part.sizes()[2] == 365 * 24


# synthetic


@pytest.mark.parametrize("kind", ["heteroscedastic_daily", "homoscedastic_ar"])
def test_synthetic_deterministic(kind):
    a, _ = gen_synthetic(kind, 500, seed=3)
    b, _ = gen_synthetic(kind, 500, seed=3)
    c, _ = gen_synthetic(kind, 500, seed=4)
    assert a == b and a != c


def test_synthetic_heteroscedasticity_ordering():
    h, _ = gen_synthetic("heteroscedastic_daily", 5000, seed=0)
    ar, _ = gen_synthetic("homoscedastic_ar", 5000, seed=0)
    assert heteroscedasticity_measure(h) > heteroscedasticity_measure(ar)


@pytest.mark.parametrize("kind", ["heteroscedastic_daily", "homoscedastic_ar"])
def test_synthetic_true_quantiles(kind):
    s, truth = gen_synthetic(kind, 100_000, seed=1)
    quartiles = [0.25, 0.5, 0.75]
    q = truth.quantiles(quartiles)
    for h in range(24):
        emp = np.quantile(s.target[h::24], quartiles)
        assert np.all(np.abs(emp - q[h]) < 0.02)
    # tail quantiles are noisier in value, so check their exceedance rates
    tails = truth.quantiles([0.05, 0.95])
    for h in range(24):
        v = s.target[h::24]
        se = np.sqrt(0.05 * 0.95 / len(v))
        assert abs(np.mean(v < tails[h, 0]) - 0.05) < 4 * se
        assert abs(np.mean(v > tails[h, 1]) - 0.05) < 4 * se


def test_synthetic_errors():
    with pytest.raises(ValueError):
        gen_synthetic("heteroscedastic_daily", 100)
    with pytest.raises(ValueError):
        gen_synthetic("random_walk", 500)
    with pytest.raises(TypeError):
        gen_synthetic("homoscedastic_ar", 500, beta=1)
