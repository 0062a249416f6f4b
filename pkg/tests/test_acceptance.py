"""Acceptance criteria, one test each.

Every check records a ``PASS``/``FAIL`` line; the lines are printed in the
pytest terminal summary, and also when this file is run as a script.
"""

import json
import math
import sys
import time

import numpy as np
import pytest

from encqr.conformal import asymmetric_scores, cqr_build, cqr_score, encqr_fit, split_cp_build
from encqr.core import empirical_quantile
from encqr.data import gen_synthetic
from encqr.ensemble import fit_ensemble, plan_subsets
from encqr.experiment import run_experiment
from encqr.metrics import cwc, picp, pinaw, width_correlation
from encqr.regress import LinearQuantileModel, QuantileForestModel, pinball_loss, pinball_subgradient

sys.path.insert(0, __file__.rsplit("/", 1)[0])
from conftest import make_series, sorted_oracle  # noqa: E402

RESULTS = {}

TITLES = {
    1: "CWC golden value",
    2: "residual-count identity",
    3: "EnCQR marginal coverage (heteroscedastic)",
    4: "sharpness ordering vs EnbPI",
    5: "adaptive width",
    6: "conformalization lifts narrow raw QR",
    7: "oracle suites",
    8: "split CP / CQR coverage (exchangeable)",
    9: "byte-identical metrics.json",
}


def record(n, ok, detail):
    RESULTS[n] = (bool(ok), detail)
    line = summary_line(n)
    print(line)
    return ok


def summary_line(n):
    ok, detail = RESULTS[n]
    return f"criterion {n} [{'PASS' if ok else 'FAIL'}] {TITLES[n]}: {detail}"


def summary_lines():
    return [summary_line(n) for n in sorted(RESULTS)]


HETERO = dict(data=dict(kind="heteroscedastic_daily", length=4200, seed=0), split=dict(sizes=[3000, 0, 1200]),
              seed=0)
AR = dict(HETERO, data=dict(kind="homoscedastic_ar", length=4200, seed=0))
_cache = {}


def run(name, config):
    if name not in _cache:
        t = time.perf_counter()
        res = run_experiment(config)
        _cache[name] = (res, time.perf_counter() - t)
    return _cache[name]


def test_criterion_1_cwc_golden():
    value = cwc(0.884, 0.210, 0.10, 30)
    ok = abs(value - 0.784) <= 0.002
    assert record(1, ok, f"cwc(0.884, 0.210, 0.10, 30) = {value:.5f}, target 0.784 +/- 0.002")


def test_criterion_2_residual_count():
    t0 = time.perf_counter()
    details, ok = [], True
    for T, B, n_x, n_y in [(30, 3, 7, 3), (3000, 3, 168, 24), (5000, 5, 168, 24)]:
        if T < 240:
            series = make_series(np.random.default_rng(T).normal(size=T))
        else:
            series, _ = gen_synthetic("heteroscedastic_daily", T, seed=1)
        plan = plan_subsets(T, B, n_x, n_y)
        ens = fit_ensemble(series, plan, lambda seed: LinearQuantileModel((0.05, 0.5, 0.95), epochs=1))
        pred = encqr_fit(ens, series, 0.1, n_y)
        expected = B * (T // B) - B * n_x
        got = (len(pred.store.lo), len(pred.store.hi))
        ok &= got == (expected, expected)
        details.append(f"T={T},B={B},n_x={n_x}: {got[0]}/{got[1]} vs {expected}")
    elapsed = time.perf_counter() - t0
    ok &= elapsed < 1.0
    assert record(2, ok, "; ".join(details) + f" ({elapsed:.2f}s)")


def test_criterion_3_coverage():
    res, secs = run("hetero_encqr", dict(HETERO, method="encqr"))
    p = res.report.picp
    ok = 0.87 <= p <= 0.93 and secs < 60
    assert record(3, ok, f"PICP={p:.4f} in [0.87, 0.93], n={res.report.n}, runtime {secs:.1f}s < 60s")


def test_criterion_4_sharpness():
    enc, _ = run("hetero_encqr", dict(HETERO, method="encqr"))
    enb, _ = run("hetero_enbpi", dict(HETERO, method="enbpi"))
    ar_enc, _ = run("ar_encqr", dict(AR, method="encqr"))
    ar_enb, _ = run("ar_enbpi", dict(AR, method="enbpi"))
    h_ok = enc.report.picp >= 0.87 and enb.report.picp >= 0.87 and enc.report.pinaw < enb.report.pinaw
    gap = abs(ar_enc.report.pinaw - ar_enb.report.pinaw)
    ok = h_ok and gap <= 0.05
    assert record(4, ok, (
        f"heteroscedastic PINAW EnCQR {enc.report.pinaw:.4f} < EnbPI {enb.report.pinaw:.4f} "
        f"(PICP {enc.report.picp:.3f}/{enb.report.picp:.3f}); AR |gap|={gap:.4f} <= 0.05"
    ))


def test_criterion_5_adaptivity():
    enc, _ = run("hetero_encqr", dict(HETERO, method="encqr"))
    enb, _ = run("hetero_enbpi", dict(HETERO, method="enbpi"))
    true_width = enc.truth.interval_width(0.1)
    r_enc = width_correlation(enc.trace.width, true_width[enc.trace.phase])
    per_batch = []
    s = enb.config.s
    for k in range(0, len(enb.trace.width), s):
        sl = slice(k, k + s)
        per_batch.append(width_correlation(enb.trace.width[sl], true_width[enb.trace.phase[sl]]))
    w = enb.trace.width
    constant = all(np.allclose(w[k:k + s], w[k], rtol=1e-12, atol=0) for k in range(0, len(w), s))
    ok = r_enc >= 0.5 and constant and all(c == 0.0 for c in per_batch)
    assert record(5, ok, f"EnCQR corr={r_enc:.3f} >= 0.5; EnbPI per-batch corr all 0 over {len(per_batch)} batches")


def test_criterion_6_conformalization_effect():
    res, _ = run("hetero_narrow", dict(HETERO, method="encqr", q_lo_nominal=0.2, q_hi_nominal=0.8))
    tr = res.trace
    raw = picp(tr.y, tr.raw_lower, tr.raw_upper)
    ok = raw < 0.85 and res.report.picp >= 0.87
    assert record(6, ok, f"levels (0.2, 0.8): raw QR PICP={raw:.4f} < 0.85, EnCQR PICP={res.report.picp:.4f} >= 0.87")


def test_criterion_7_oracles():
    t0 = time.perf_counter()
    rng = np.random.default_rng(7)
    # empirical quantile vs sort-and-index
    q_ok = True
    for _ in range(1000):
        values = rng.integers(-20, 20, rng.integers(1, 50)).astype(float).tolist()
        level = float(rng.uniform(0.001, 0.999))
        conv = "conformal" if rng.random() < 0.5 else "plain"
        q_ok &= empirical_quantile(values, level, conv) == sorted_oracle(values, level, conv)
    # intercept-only linear QR
    lin_ok = True
    for level in (0.05, 0.5, 0.95):
        y = rng.normal(size=200)
        model = LinearQuantileModel((level,)).fit(np.zeros((200, 2)), y[:, None])
        pred = model.predict(np.zeros((1, 2)))[0, 0, 0]
        v = np.sort(y)
        k = math.ceil(level * 200 - 1e-9) - 1
        gap = max(v[min(k + 1, 199)] - v[k], v[k] - v[max(k - 1, 0)])
        lin_ok &= abs(pred - sorted_oracle(y.tolist(), level, "plain")) <= gap
    # pinball subgradient vs central differences
    worst = 0.0
    for _ in range(2000):
        y, q, a = rng.normal() * 5, rng.normal() * 5, rng.uniform(0.01, 0.99)
        if abs(y - q) <= 1e-3:
            continue
        h = 1e-5
        fd = (pinball_loss(y, q + h, a) - pinball_loss(y, q - h, a)) / (2 * h)
        g = float(pinball_subgradient(y, q, a))
        worst = max(worst, abs(fd - g) / abs(g))
    # cqr score consistency
    lo, hi, y = rng.normal(size=(3, 10_000)) * 10
    e_lo, e_hi = asymmetric_scores(lo, hi, y)
    c_ok = np.array_equal(cqr_score(lo, hi, y), np.maximum(e_lo, e_hi))
    elapsed = time.perf_counter() - t0
    ok = q_ok and lin_ok and worst <= 1e-4 and c_ok and elapsed < 30
    assert record(7, ok, (
        f"quantile={'ok' if q_ok else 'mismatch'}, linear QR={'ok' if lin_ok else 'off'}, "
        f"subgradient max rel err={worst:.2e}, cqr=max(asym)={'ok' if c_ok else 'mismatch'} ({elapsed:.1f}s)"
    ))


def exchangeable(n, rng):
    X = rng.uniform(0, 1, size=(n, 4))
    scale = 0.1 + 0.5 * X[:, 1]
    Y = np.sin(4 * X[:, 0]) + scale * rng.normal(size=n)
    return X, Y[:, None]


def test_criterion_8_baseline_coverage():
    t0 = time.perf_counter()
    rng = np.random.default_rng(8)
    Xtr, Ytr = exchangeable(1000, rng)
    Xcal, Ycal = exchangeable(500, rng)
    Xte, Yte = exchangeable(2000, rng)
    point = QuantileForestModel((0.5,), seed=1).fit(Xtr, Ytr)
    quant = QuantileForestModel((0.05, 0.5, 0.95), seed=1).fit(Xtr, Ytr)
    cp = split_cp_build(point, Xcal, Ycal, 0.1).interval(Xte)
    cq = cqr_build(quant, Xcal, Ycal, 0.1).interval(Xte)
    p_cp = picp(Yte.ravel(), cp.lower.ravel(), cp.upper.ravel())
    p_cq = picp(Yte.ravel(), cq.lower.ravel(), cq.upper.ravel())
    elapsed = time.perf_counter() - t0
    ok = p_cp >= 0.872 and p_cq >= 0.872 and elapsed < 30
    assert record(8, ok, f"split CP PICP={p_cp:.4f}, CQR PICP={p_cq:.4f} >= 0.872 ({elapsed:.1f}s)")


def test_criterion_9_determinism(tmp_path):
    from encqr.cli import main

    cfg = tmp_path / "c.yaml"
    cfg.write_text(json.dumps(dict(HETERO, method="encqr")))  # JSON is valid YAML
    main(["run", "--config", str(cfg), "--out", str(tmp_path / "a")])
    main(["run", "--config", str(cfg), "--out", str(tmp_path / "b")])
    a = (tmp_path / "a" / "metrics.json").read_bytes()
    b = (tmp_path / "b" / "metrics.json").read_bytes()
    assert record(9, a == b and len(a) > 0, f"two CLI runs, metrics.json {len(a)} bytes, identical={a == b}")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
