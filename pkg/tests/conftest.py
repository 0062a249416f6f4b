import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from encqr.core import TimeSeries

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def make_series(target, exogenous=None, start=0, resolution=3600):
    target = np.asarray(target, dtype=float)
    ts = start + resolution * np.arange(len(target))
    return TimeSeries(ts, target, exogenous, resolution=resolution)


@pytest.fixture
def series_factory():
    return make_series


def sorted_oracle(values, level, convention="conformal"):
    """Rank by explicit sort and integer arithmetic on the level's fraction."""
    from fractions import Fraction
    import math

    v = sorted(values)
    n = len(v)
    f = Fraction(str(level)) if isinstance(level, float) else Fraction(level)
    k = math.ceil(f * (n + 1)) if convention == "conformal" else math.ceil(f * n)
    k = min(max(k, 1), n)
    return v[k - 1]


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod is None or not getattr(mod, "RESULTS", None):
        return
    terminalreporter.section("acceptance criteria")
    for line in mod.summary_lines():
        terminalreporter.write_line(line)
