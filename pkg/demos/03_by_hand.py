"""The EnCQR loop built from its parts.

Instead of the config runner, this walks through the steps: windows,
disjoint subsets, the ensemble, leave-one-out scores, then the
predict/observe cycle over the test period. It also compares the two
per-side calibration levels.
"""

import numpy as np

from encqr import (
    QuantileForestModel,
    encqr_fit,
    fit_ensemble,
    gen_synthetic,
    minmax_normalize,
    picp,
    plan_subsets,
)
from encqr.core import fit_minmax

series, truth = gen_synthetic("heteroscedastic_daily", 4200, seed=3)
train = series.slice(0, 3000)
params = fit_minmax(train)
norm, _ = minmax_normalize(series, params)
train = norm.slice(0, 3000)

plan = plan_subsets(len(train), B=3, n_x=168, n_y=24)
print("subsets:", plan.subsets, " scored steps:", plan.n_residuals)

levels = (0.05, 0.5, 0.95)
ensemble = fit_ensemble(train, plan, lambda seed: QuantileForestModel(levels, seed=seed), seed=3)

X = norm.channels()
y = norm.target

for side_alpha in ("half", "full"):
    pred = encqr_fit(ensemble, train, alpha=0.1, s=24, side_alpha=side_alpha)
    lower, upper = [], []
    for o in range(3000, 4200, 24):
        q = ensemble.predict(X[None, o - 168:o])[0].T  # (24, levels)
        batch = pred.predict_steps(q, np.arange(24))
        lower.append(batch.lower)
        upper.append(batch.upper)
        pred.observe(y[o:o + 24])  # the truth arrives only now
    lower, upper = np.concatenate(lower), np.concatenate(upper)
    print(f"side level {pred.score_level:.2f}: PICP={picp(y[3000:4200], lower, upper):.3f}")
