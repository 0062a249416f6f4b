"""Config-driven experiment pipeline: data, models, intervals, metrics, reports."""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .conformal import (
    POOLING,
    SIDE_ALPHA,
    EnbPIPredictor,
    RawQRPredictor,
    cqr_build,
    enbpi_build,
    encqr_fit,
    split_cp_build,
)
from .core import QuantileLevels, fit_minmax, minmax_normalize, windows_at
from .data import SplitSpec, chronological_split, format_timestamp, gen_synthetic, load_csv_series
from .ensemble import AGGREGATIONS, Aggregation, _member_seeds, fit_ensemble, plan_subsets
from .exceptions import ConfigError, LookaheadError, PartitionTooSmall
from .metrics import MetricReport, covered, phase_table
from .regress import MODELS, make_regressor

METHODS = ("encqr", "enbpi", "cqr", "split_cp", "raw_qr")


@dataclass
class DataConfig:
    source: str = "synthetic"
    kind: str = "heteroscedastic_daily"
    length: int = 4200
    seed: int = 0
    params: dict = field(default_factory=dict)
    path: str = None
    target_column: str = None
    exogenous_columns: list = field(default_factory=list)
    timestamp_column: str = "timestamp"


@dataclass
class SplitConfig:
    """Fractions, explicit ``boundaries`` (timestamps) or step ``sizes``.

    ``sizes`` are counted back from the end of the series; any surplus at
    the start joins the training partition.
    """

    train_fraction: float = 1 / 3
    val_fraction: float = 1 / 3
    test_fraction: float = 1 / 3
    sizes: list = None
    boundaries: list = None
    interleave_months: bool = False


@dataclass
class RegressorConfig:
    name: str = "quantile_forest"
    params: dict = field(default_factory=dict)


@dataclass
class ExperimentConfig:
    """All experiment settings, validated on construction through ``from_dict``."""

    data: DataConfig = field(default_factory=DataConfig)
    split: SplitConfig = field(default_factory=SplitConfig)
    method: str = "encqr"
    regressor: RegressorConfig = field(default_factory=RegressorConfig)
    alpha: float = 0.10
    B: int = 3
    s: int = 24
    n_x: int = 168
    n_y: int = 24
    q_lo_nominal: float = None
    q_hi_nominal: float = None
    aggregation: str = "mean"
    trim_fraction: float = 0.0
    eta: float = 30.0
    seed: int = 0
    residual_pooling: str = "pooled"
    side_alpha: str = "half"
    cal_fraction: float = 0.25
    n_jobs: int = 1

    @classmethod
    def from_dict(cls, d):
        d = dict(d or {})
        nested = {"data": DataConfig, "split": SplitConfig, "regressor": RegressorConfig}
        kwargs = {}
        for key, value in d.items():
            if key in nested:
                if not isinstance(value, dict):
                    raise ConfigError(f"{key}: expected a mapping")
                kwargs[key] = _build(nested[key], value, key)
            elif key in cls.__dataclass_fields__:
                kwargs[key] = value
            else:
                raise ConfigError(f"unknown config key {key!r}")
        config = cls(**kwargs)
        config.validate()
        return config

    def to_dict(self):
        return dataclasses.asdict(self)

    @property
    def levels(self):
        lo = self.alpha / 2 if self.q_lo_nominal is None else self.q_lo_nominal
        hi = 1 - self.alpha / 2 if self.q_hi_nominal is None else self.q_hi_nominal
        return QuantileLevels(lo, hi)

    def validate(self):
        def need(cond, msg):
            if not cond:
                raise ConfigError(msg)

        need(self.method in METHODS, f"method must be one of {METHODS}, got {self.method!r}")
        need(self.regressor.name in MODELS, f"regressor.name must be one of {sorted(MODELS)}")
        need(isinstance(self.regressor.params, dict), "regressor.params must be a mapping")
        need(0 < self.alpha < 1, f"alpha must be in (0, 1), got {self.alpha}")
        for key in ("B", "s", "n_x", "n_y", "n_jobs"):
            value = getattr(self, key)
            need(isinstance(value, int) and value >= 1, f"{key} must be a positive integer, got {value!r}")
        need(self.B >= 2, "B must be at least 2")
        need(self.n_y % self.s == 0, f"n_y ({self.n_y}) must be a multiple of s ({self.s})")
        try:
            self.levels
        except ValueError as exc:
            raise ConfigError(f"quantile levels: {exc}") from None
        need(self.aggregation in AGGREGATIONS, f"aggregation must be one of {AGGREGATIONS}")
        need(self.aggregation != "trimmed_mean" or 2 * int(self.trim_fraction * self.B) < self.B,
             "trim_fraction removes every member")
        need(self.eta >= 0, "eta must be non-negative")
        need(self.residual_pooling in POOLING, f"residual_pooling must be one of {POOLING}")
        need(self.side_alpha in SIDE_ALPHA, f"side_alpha must be one of {SIDE_ALPHA}")
        need(0 < self.cal_fraction < 1, "cal_fraction must be in (0, 1)")
        need(self.data.source in ("synthetic", "csv"), "data.source must be 'synthetic' or 'csv'")
        if self.data.source == "csv":
            need(self.data.path and self.data.target_column, "csv data needs data.path and data.target_column")
        else:
            period = self.data.params.get("period", 24)
            need(self.data.length >= 10 * period, f"data.length must be at least {10 * period}")
            try:
                gen_synthetic(self.data.kind, 10 * period, **self.data.params)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"data: {exc}") from None
        try:
            make_regressor(self.regressor.name, (0.5,), **self.regressor.params)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"regressor.params: {exc}") from None
        self.split_spec(None)

    def split_spec(self, series):
        sp = self.split
        boundaries = sp.boundaries
        if sp.sizes is not None:
            if len(sp.sizes) != 3 or any(int(v) < 0 for v in sp.sizes) or not (sp.sizes[0] and sp.sizes[2]):
                raise ConfigError("split.sizes must be three counts with non-empty train and test")
            if series is not None:
                if sum(sp.sizes) > len(series):
                    raise ConfigError(f"split.sizes add up to {sum(sp.sizes)} > series length {len(series)}")
                start = len(series) - sum(sp.sizes)
                ts = series.timestamps
                boundaries = (int(ts[start + sp.sizes[0]]), int(ts[start + sp.sizes[0] + sp.sizes[1]]))
        spec = SplitSpec(sp.train_fraction, sp.val_fraction, sp.test_fraction,
                         tuple(boundaries) if boundaries is not None else None, sp.interleave_months)
        return spec


def _build(cls, values, prefix):
    unknown = set(values) - set(cls.__dataclass_fields__)
    if unknown:
        raise ConfigError(f"unknown config keys under {prefix}: {sorted(unknown)}")
    return cls(**values)


class TargetFeed:
    """Gatekeeper for test targets.

    Targets before ``revealed`` may be read as model inputs. A batch is
    revealed only after ``mark_predicted`` has covered it.
    """

    def __init__(self, values, revealed):
        self._values = np.asarray(values, dtype=float)
        self.revealed = int(revealed)
        self.predicted = int(revealed)

    def read(self, start, stop):
        if stop > self.revealed:
            raise LookaheadError(f"read of steps [{start}, {stop}) before step {self.revealed} was revealed")
        return self._values[start:stop]

    def mark_predicted(self, start, stop):
        if start != self.predicted:
            raise LookaheadError(f"prediction of [{start}, {stop}) skips ahead of step {self.predicted}")
        self.predicted = stop

    def reveal(self, n):
        stop = self.revealed + n
        if stop > self.predicted:
            raise LookaheadError(f"reveal of steps up to {stop} before they were predicted")
        out = self._values[self.revealed:stop].copy()
        self.revealed = stop
        return out


@dataclass(eq=False)
class IntervalTrace:
    step: np.ndarray
    timestamp: np.ndarray
    y: np.ndarray
    lower: np.ndarray
    center: np.ndarray
    upper: np.ndarray
    raw_lower: np.ndarray
    raw_upper: np.ndarray
    horizon: np.ndarray
    phase: np.ndarray
    period: int = 24

    @property
    def width(self):
        return self.upper - self.lower

    @property
    def covered(self):
        return covered(self.y, self.lower, self.upper)


@dataclass(eq=False)
class ExperimentResult:
    config: ExperimentConfig
    report: MetricReport
    trace: IntervalTrace
    trace_normalized: IntervalTrace
    diagnostics: dict
    predictor: object = None
    truth: object = None
    partition: object = None


def load_series(config):
    d = config.data
    if d.source == "csv":
        return load_csv_series(d.path, d.target_column, d.exogenous_columns, d.timestamp_column), None
    return gen_synthetic(d.kind, d.length, seed=d.seed, **dict(d.params))


def _factory(config, levels):
    name, params = config.regressor.name, dict(config.regressor.params)
    params.pop("seed", None)
    return lambda seed: make_regressor(name, levels, seed=seed, **params)


def _val_windows(series, partition, n_x, n_y):
    """Non-overlapping validation windows; inputs may reach into earlier data."""
    origins = [np.arange(max(a, n_x), b - n_y + 1, n_y) for a, b in partition.val]
    origins = np.concatenate(origins) if origins else np.array([], dtype=np.int64)
    return windows_at(series, origins, n_x, n_y) if origins.size else None


def _build_predictor(config, norm, partition, diagnostics):
    alpha, n_x, n_y = config.alpha, config.n_x, config.n_y
    train = norm.slice(*partition.train)
    levels = config.levels.as_tuple()
    method = config.method
    if method in ("split_cp", "cqr"):
        T = len(train)
        cal_start = int(round(T * (1 - config.cal_fraction)))
        if cal_start < n_x + n_y or T - max(cal_start, n_x) < n_y:
            raise PartitionTooSmall(f"training partition of {T} steps is too short to split for calibration")
        proper = windows_at(train, np.arange(n_x, cal_start - n_y + 1), n_x, n_y)
        cal = windows_at(train, np.arange(cal_start, T - n_y + 1, n_y), n_x, n_y)
        model_levels = (0.5,) if method == "split_cp" else levels
        seed = _member_seeds(config.seed, 1)[0]
        val = _val_windows(norm, partition, n_x, n_y)
        model = _factory(config, model_levels)(seed)
        if val is not None:
            model.fit(proper, X_val=val.inputs, Y_val=val.targets)
        else:
            model.fit(proper)
        diagnostics["n_calibration"] = len(cal) * n_y
        build = split_cp_build if method == "split_cp" else cqr_build
        return build(model, cal.inputs, cal.targets, alpha)

    plan = plan_subsets(len(train), config.B, n_x, n_y)
    model_levels = (0.5,) if method == "enbpi" else levels
    ensemble = fit_ensemble(
        train,
        plan,
        _factory(config, model_levels),
        seed=config.seed,
        aggregation=Aggregation(config.aggregation, config.trim_fraction),
        val=_val_windows(norm, partition, n_x, n_y),
        n_jobs=config.n_jobs,
    )
    diagnostics["n_residuals"] = plan.n_residuals
    diagnostics["unassigned_train_steps"] = plan.T - plan.assigned
    if method == "encqr":
        return encqr_fit(ensemble, train, alpha, config.s, config.residual_pooling, config.side_alpha)
    if method == "enbpi":
        return enbpi_build(ensemble, train, alpha, config.s, config.residual_pooling)
    return RawQRPredictor(ensemble, alpha, config.s)


def run_experiment(config, feed_factory=TargetFeed):
    """Run one method end to end.

    Test segments are consumed in ``s``-step batches. Each window is
    predicted from the ``n_x`` steps before it (reaching back into earlier
    partitions when needed); targets are revealed through ``feed_factory``
    only after their batch has been predicted, and sliding methods update
    their score windows right after each reveal. A trailing remainder
    shorter than ``s`` in a segment is not evaluated.
    """
    if isinstance(config, dict):
        config = ExperimentConfig.from_dict(config)
    series, truth = load_series(config)
    partition = chronological_split(series, config.split_spec(series), min_steps=1)
    n_x, n_y, s = config.n_x, config.n_y, config.s
    for a, _ in partition.test:
        if a < n_x:
            raise PartitionTooSmall(f"test segment starting at step {a} has fewer than n_x={n_x} steps of history")
    params = fit_minmax(partition.train_series)
    norm, _ = minmax_normalize(series, params)
    diagnostics = {"method": config.method, "dropped_tail_steps": 0}
    predictor = _build_predictor(config, norm, partition, diagnostics)
    sliding = hasattr(predictor, "predict_steps")

    channels = norm.channels()
    rows = {k: [] for k in ("step", "y", "lower", "center", "upper", "raw_lower", "raw_upper", "horizon")}
    for a, b in partition.test:
        n_batches = (b - a) // s
        diagnostics["dropped_tail_steps"] += (b - a) - n_batches * s
        feed = feed_factory(norm.target, a)
        per_window = n_y // s
        for w in range(0, n_batches, per_window):
            o = a + w * s
            x = channels[o - n_x:o].copy()
            x[:, 0] = feed.read(o - n_x, o)
            chunks = min(per_window, n_batches - w)
            if sliding:
                q = predictor.ensemble.predict(x[None])[0].T  # (n_y, L)
            else:
                batch = predictor.interval(x[None])
            for c in range(chunks):
                start = o + c * s
                sl = slice(c * s, (c + 1) * s)
                hor = np.arange(c * s, (c + 1) * s)
                if sliding:
                    iv = predictor.predict_steps(q[sl], hor)
                    raw_lo, raw_hi = q[sl, 0], q[sl, -1]
                    lo, ce, hi = iv.lower, iv.center, iv.upper
                else:
                    lo, ce, hi = batch.lower[0, sl], batch.center[0, sl], batch.upper[0, sl]
                    raw_lo, raw_hi = lo, hi
                feed.mark_predicted(start, start + s)
                y = feed.reveal(s)
                if sliding:
                    predictor.observe(y)
                rows["step"].append(np.arange(start, start + s))
                rows["y"].append(y)
                rows["lower"].append(lo)
                rows["center"].append(ce)
                rows["upper"].append(hi)
                rows["raw_lower"].append(raw_lo)
                rows["raw_upper"].append(raw_hi)
                rows["horizon"].append(hor)
    cols = {k: np.concatenate(v) for k, v in rows.items()}
    if cols["step"].size == 0:
        raise PartitionTooSmall(f"no complete batch of s={s} steps in the test partition")
    steps = cols["step"]
    ts = series.timestamps[steps]
    period, phase = _phases(series.resolution, ts)
    trace_norm = IntervalTrace(steps, ts, cols["y"], cols["lower"], cols["center"], cols["upper"],
                               cols["raw_lower"], cols["raw_upper"], cols["horizon"], phase, period)
    unscale = lambda v: params.unscale(v, 0)  # noqa: E731
    trace = IntervalTrace(steps, ts, series.target[steps], unscale(cols["lower"]), unscale(cols["center"]),
                          unscale(cols["upper"]), unscale(cols["raw_lower"]), unscale(cols["raw_upper"]),
                          cols["horizon"], phase, period)

    test_y = np.concatenate([norm.target[a:b] for a, b in partition.test])
    report = MetricReport.from_intervals(
        trace_norm.y, trace_norm.lower, trace_norm.upper, config.alpha, config.eta,
        y_range=test_y, phase=phase, period=period,
    )
    diagnostics["n_swapped"] = predictor.n_swapped
    return ExperimentResult(config, report, trace, trace_norm, diagnostics, predictor, truth, partition)


def _phases(resolution, timestamps):
    period = 86400 // resolution if 86400 % resolution == 0 else 24
    return period, (np.asarray(timestamps) // resolution) % period


def compare(config, methods, n_jobs=1):
    """Run several methods on one configuration; returns ``{method: result}``."""
    base = config.to_dict() if isinstance(config, ExperimentConfig) else dict(config)
    configs = {}
    for m in methods:
        d = json.loads(json.dumps(base))
        d["method"] = m
        configs[m] = ExperimentConfig.from_dict(d)
    if n_jobs > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            results = dict(zip(configs, pool.map(run_experiment, configs.values())))
    else:
        results = {m: run_experiment(c) for m, c in configs.items()}
    return results


def _atomic_write(path, text):
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _csv_text(header, rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def _num(v):
    return "" if v is None or (isinstance(v, float) and np.isnan(v)) else repr(float(v))


def emit_report(result, out_dir, formats=("json", "csv")):
    """Write ``metrics.json``, ``intervals.csv`` and ``per_hour.csv``.

    Interval bounds are written in the units of the input data.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    report, trace = result.report, result.trace
    if "json" in formats:
        _atomic_write(out / "metrics.json", report.to_json())
        written.append(out / "metrics.json")
    if "csv" in formats:
        inside = trace.covered
        rows = [
            (int(trace.step[i]), format_timestamp(trace.timestamp[i]), _num(trace.y[i]), _num(trace.lower[i]),
             _num(trace.center[i]), _num(trace.upper[i]), int(inside[i]))
            for i in range(len(trace.step))
        ]
        _atomic_write(out / "intervals.csv",
                      _csv_text(["step", "timestamp", "y", "lower", "center", "upper", "covered"], rows))
        widths, coverage = phase_table(trace.phase, trace.y, trace.lower, trace.upper, trace.period)
        _atomic_write(out / "per_hour.csv",
                      _csv_text(["hour", "mean_width", "coverage"],
                                [(h, _num(widths[h]), _num(coverage[h])) for h in range(trace.period)]))
        _atomic_write(out / "metrics.csv", report.to_csv_row(method=result.config.method))
        written += [out / "intervals.csv", out / "per_hour.csv", out / "metrics.csv"]
    return written


def emit_comparison(results, out_dir):
    """Per-method report directories plus one ``comparison.csv`` keyed by method."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    header = ["method", "picp", "pinaw", "cwc", "alpha", "eta", "n"]
    rows = []
    for method, res in results.items():
        emit_report(res, out / method)
        r = res.report
        rows.append([method, _num(r.picp), _num(r.pinaw), _num(r.cwc), _num(r.alpha), _num(r.eta), r.n])
    _atomic_write(out / "comparison.csv", _csv_text(header, rows))
    return out / "comparison.csv"
