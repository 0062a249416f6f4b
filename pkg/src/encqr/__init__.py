"""Conformal prediction intervals for multi-step time-series forecasts."""

from .conformal import (
    CQRPredictor,
    EnbPIPredictor,
    EnCQRPredictor,
    RawQRPredictor,
    SplitConformalPredictor,
    asymmetric_scores,
    cqr_build,
    cqr_score,
    enbpi_build,
    encqr_fit,
    split_cp_build,
)
from .core import (
    IntervalBatch,
    QuantileLevels,
    TimeSeries,
    WindowedDataset,
    denormalize,
    empirical_quantile,
    make_sliding_windows,
    minmax_normalize,
)
from .data import SplitSpec, chronological_split, gen_synthetic, load_csv_series
from .ensemble import EnsembleModel, fit_ensemble, loo_quantile_estimates, plan_subsets
from .exceptions import *  # noqa: F401,F403
from .experiment import ExperimentConfig, compare, emit_report, run_experiment
from .metrics import MetricReport, cwc, heteroscedasticity_measure, picp, pinaw
from .regress import (
    LinearQuantileModel,
    QuantileForestModel,
    fit_linear_quantile,
    fit_quantile_forest,
    load_model,
    make_regressor,
    multi_quantile_loss,
    pinball_loss,
    save_model,
)

__version__ = "0.1.0"
