"""Quantile regressors trained by pinball-loss minimization.

Both models predict every configured quantile level jointly for every step
of the output window (direct multi-output, one head per horizon step).
Predictions have shape ``(n_samples, n_levels, n_y)`` and are sorted along
the level axis, so quantiles never cross.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass

import numpy as np
from sklearn.tree import DecisionTreeRegressor

from .core import QuantileLevels, WindowedDataset, quantile_rank
from .exceptions import NoTrainingData, NotFitted, ShapeError

FORMAT_VERSION = 1


def pinball_loss(y, q_hat, alpha):
    """Pinball (tilted absolute) loss; vectorized over ``y`` and ``q_hat``."""
    y = np.asarray(y, dtype=float)
    q_hat = np.asarray(q_hat, dtype=float)
    loss = np.where(q_hat >= y, (1 - alpha) * (q_hat - y), alpha * (y - q_hat))
    return float(loss) if loss.ndim == 0 else loss


def pinball_subgradient(y, q_hat, alpha):
    """Subgradient of :func:`pinball_loss` with respect to ``q_hat``.

    At the kink ``q_hat == y`` the right derivative ``1 - alpha`` is used.
    """
    y = np.asarray(y, dtype=float)
    q_hat = np.asarray(q_hat, dtype=float)
    return np.where(q_hat >= y, 1 - alpha, -alpha)


def multi_quantile_loss(y_batch, predictions, levels):
    """Mean pinball loss over every (observation, horizon step, level).

    ``y_batch`` is (n, n_y) and ``predictions`` is (n, n_levels, n_y).
    """
    levels = _as_levels(levels)
    y = np.asarray(y_batch, dtype=float)
    p = np.asarray(predictions, dtype=float)
    if y.ndim == 1:
        y = y[:, None]
    if p.ndim == 2:
        p = p[:, :, None]
    if p.shape != (y.shape[0], len(levels), y.shape[1]):
        raise ShapeError(f"predictions {p.shape} do not match targets {y.shape} and {len(levels)} levels")
    a = np.asarray(levels)[None, :, None]
    diff = p - y[:, None, :]
    return float(np.mean(np.where(diff >= 0, (1 - a) * diff, -a * diff)))


def sort_crossing(predictions, axis=1):
    """Fix quantile crossing by sorting along the level axis."""
    return np.sort(predictions, axis=axis)


def _as_levels(levels):
    if isinstance(levels, QuantileLevels):
        levels = levels.as_tuple()
    levels = tuple(float(a) for a in np.atleast_1d(levels))
    if not levels or any(not 0 < a < 1 for a in levels) or list(levels) != sorted(levels):
        raise ValueError(f"quantile levels must be increasing and inside (0, 1): {levels}")
    return levels


def _as_xy(X, Y=None):
    if isinstance(X, WindowedDataset):
        X, Y = X.inputs, X.targets
    X = np.asarray(X, dtype=float)
    X = X.reshape(len(X), int(np.prod(X.shape[1:])))
    if Y is None:
        return X, None
    Y = np.asarray(Y, dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    if len(Y) != len(X):
        raise ShapeError(f"{len(X)} inputs but {len(Y)} targets")
    return X, Y


class QuantileRegressor:
    """Common surface of the quantile models.

    Subclasses implement ``_fit`` and ``_predict``; ``predict`` adds the
    shape checks and the crossing fix.
    """

    kind = None

    def __init__(self, levels):
        self.levels = _as_levels(levels)
        self.n_features_ = None
        self.n_outputs_ = None

    @property
    def fitted(self):
        return self.n_features_ is not None

    def fit(self, X, Y=None, X_val=None, Y_val=None):
        X, Y = _as_xy(X, Y)
        if len(X) == 0:
            raise NoTrainingData("no training pairs")
        if X_val is not None:
            X_val, Y_val = _as_xy(X_val, Y_val)
            if len(X_val) == 0:
                X_val = Y_val = None
        self._fit(X, Y, X_val, Y_val)
        self.n_features_ = X.shape[1]
        self.n_outputs_ = Y.shape[1]
        return self

    def predict(self, X):
        if not self.fitted:
            raise NotFitted(f"{type(self).__name__} must be fitted before predicting")
        X, _ = _as_xy(X)
        if X.shape[1] != self.n_features_:
            raise ShapeError(f"expected {self.n_features_} input features, got {X.shape[1]}")
        return sort_crossing(self._predict(X))

    def get_params(self):
        raise NotImplementedError

    def _state(self):
        raise NotImplementedError

    def _set_state(self, arrays):
        raise NotImplementedError


class LinearQuantileModel(QuantileRegressor):
    """Linear quantile regression trained by full-batch subgradient descent.

    Each (level, horizon step) pair has its own weight vector over the
    flattened input window plus a bias. Inputs are standardized and targets
    centred on their per-step median and scaled internally.
    The step size decays geometrically from ``lr`` to ``lr_min``; weight
    steps are further divided by the number of features so one update moves
    a prediction by roughly the same amount as a bias step. The returned
    weights are the best iterate seen, judged on the validation loss when
    validation data is given (with early stopping after ``patience`` epochs
    without improvement), otherwise on the training loss.
    """

    kind = "linear_qr"

    def __init__(self, levels, lr=0.5, lr_min=1e-4, epochs=2000, l2=1e-4, patience=50, seed=0):
        super().__init__(levels)
        self.lr = lr
        self.lr_min = lr_min
        self.epochs = epochs
        self.l2 = l2
        self.patience = patience
        self.seed = seed
        self.coef_ = None
        self.intercept_ = None
        self.x_mean_ = None
        self.x_scale_ = None
        self.y_center_ = None
        self.y_scale_ = None
        self.n_epochs_ = 0

    def get_params(self):
        return dict(lr=self.lr, lr_min=self.lr_min, epochs=self.epochs, l2=self.l2,
                    patience=self.patience, seed=self.seed)

    @property
    def n_weights(self):
        return self.coef_.size + self.intercept_.size

    def _standardize(self, X):
        return (X - self.x_mean_) / self.x_scale_

    def _fit(self, X, Y, X_val, Y_val):
        n, p = X.shape
        a = np.asarray(self.levels)[:, None, None]
        self.x_mean_ = X.mean(axis=0)
        scale = X.std(axis=0)
        self.x_scale_ = np.where(scale > 0, scale, 1.0)
        Z = self._standardize(X)
        Zv = self._standardize(X_val) if X_val is not None else None
        self.y_center_ = np.median(Y, axis=0)
        spread = Y.std(axis=0)
        self.y_scale_ = np.where(spread > 0, spread, 1.0)
        Y = (Y - self.y_center_) / self.y_scale_
        if Y_val is not None:
            Y_val = (Y_val - self.y_center_) / self.y_scale_

        L, k = len(self.levels), Y.shape[1]
        W = np.zeros((L, p, k))
        b = np.zeros((L, 1, k))
        Yn = Y[None, :, :]  # predictions are laid out (L, n, k)
        Zt = np.ascontiguousarray(Z.T)

        def loss(Zm, Ym, W, b):
            P = np.matmul(Zm, W) + b
            d = P - Ym[None]
            return float(np.mean(np.where(d >= 0, (1 - a) * d, -a * d)))

        decay = (self.lr_min / self.lr) ** (1.0 / max(self.epochs - 1, 1))
        w_scale = 1.0 / max(p, 1)
        best = (np.inf, W.copy(), b.copy())
        stale = 0
        lr = self.lr
        epoch = 0
        for epoch in range(self.epochs):
            P = np.matmul(Z, W) + b
            d = P - Yn
            train_loss = float(np.mean(np.where(d >= 0, (1 - a) * d, -a * d)))
            score = train_loss if Zv is None else loss(Zv, Y_val, W, b)
            if score < best[0] - 1e-12:
                best = (score, W.copy(), b.copy())
                stale = 0
            else:
                stale += 1
                if Zv is not None and stale >= self.patience:
                    break
            G = np.where(d >= 0, 1 - a, -a) / n  # (L, n, k)
            grad_W = np.matmul(Zt, G) + self.l2 * W
            grad_b = G.sum(axis=1, keepdims=True)
            W -= lr * w_scale * grad_W
            b -= lr * grad_b
            lr *= decay
        self.n_epochs_ = epoch + 1
        self.best_loss_ = best[0]
        self.coef_ = best[1]
        self.intercept_ = best[2]

    def _predict(self, X):
        P = (np.matmul(self._standardize(X), self.coef_) + self.intercept_).transpose(1, 0, 2)
        return P * self.y_scale_ + self.y_center_

    def _state(self):
        return dict(coef=self.coef_, intercept=self.intercept_, x_mean=self.x_mean_, x_scale=self.x_scale_,
                    y_center=self.y_center_, y_scale=self.y_scale_)

    def _set_state(self, arrays):
        self.coef_ = arrays["coef"]
        self.intercept_ = arrays["intercept"]
        self.x_mean_ = arrays["x_mean"]
        self.x_scale_ = arrays["x_scale"]
        self.y_center_ = arrays["y_center"]
        self.y_scale_ = arrays["y_scale"]


@dataclass
class Tree:
    """Flat regression tree.

    ``left[i] == -1`` marks a leaf; the training target rows that reached
    leaf ``i`` are ``values[start[i]:stop[i]]``. Rows go left when
    ``x[feature] <= threshold``.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    start: np.ndarray
    stop: np.ndarray
    values: np.ndarray

    def apply(self, X):
        """Leaf index reached by every row of ``X``."""
        node = np.zeros(len(X), dtype=np.int64)
        active = np.arange(len(X))
        while active.size:
            nd = node[active]
            internal = self.left[nd] >= 0
            active, nd = active[internal], nd[internal]
            if not active.size:
                break
            go_left = X[active, self.feature[nd]] <= self.threshold[nd]
            node[active] = np.where(go_left, self.left[nd], self.right[nd])
        return node

    def leaf_values(self, leaf):
        return self.values[self.start[leaf]:self.stop[leaf]]


def _grow_tree(X, Y, min_samples_leaf, max_features, seed):
    builder = DecisionTreeRegressor(
        min_samples_split=2 * min_samples_leaf,
        min_samples_leaf=min_samples_leaf,
        max_features=max_features,
        random_state=seed,
    ).fit(X, Y)
    t = builder.tree_
    left = t.children_left.astype(np.int64)
    tree = Tree(
        t.feature.astype(np.int64),
        t.threshold.astype(float),
        left,
        t.children_right.astype(np.int64),
        np.zeros(len(left), dtype=np.int64),
        np.zeros(len(left), dtype=np.int64),
        None,
    )
    # store each leaf's training rows contiguously, leaves in node order
    leaf = tree.apply(X)
    order = np.argsort(leaf, kind="stable")
    counts = np.bincount(leaf, minlength=len(left))
    tree.stop[:] = np.cumsum(counts)
    tree.start[:] = tree.stop - counts
    tree.values = Y[order]
    return tree


class QuantileForestModel(QuantileRegressor):
    """Quantile regression forest.

    Trees are grown on bootstrap resamples with variance-reduction splits
    on the flattened input window (scikit-learn's CART builder). A node
    becomes a leaf when its targets are identical or it holds fewer than
    ``2 * min_samples_leaf`` samples. Inputs are routed in float32, the
    precision the builder chose its thresholds in.
    The prediction at level ``a`` is the plain empirical ``a``-quantile of
    the target values pooled from the leaves reached in every tree.
    """

    kind = "quantile_forest"

    def __init__(self, levels, n_trees=10, min_samples_leaf=2, max_features=None, bootstrap=True, seed=0):
        super().__init__(levels)
        if n_trees < 1 or min_samples_leaf < 1:
            raise ValueError("n_trees and min_samples_leaf must be positive")
        self.n_trees = n_trees
        self.min_samples_leaf = min_samples_leaf
        self.max_features = max_features
        self.bootstrap = bootstrap
        self.seed = seed
        self.trees_ = None

    def get_params(self):
        return dict(n_trees=self.n_trees, min_samples_leaf=self.min_samples_leaf,
                    max_features=self.max_features, bootstrap=self.bootstrap, seed=self.seed)

    def _n_split_features(self, p):
        m = self.max_features
        if m is None:
            return None
        if isinstance(m, float):
            return max(1, int(m * p))
        return int(m)

    def _fit(self, X, Y, X_val=None, Y_val=None):
        if len(X) < self.min_samples_leaf:
            raise NoTrainingData(f"need at least {self.min_samples_leaf} training pairs, got {len(X)}")
        rng = np.random.default_rng(self.seed)
        m = self._n_split_features(X.shape[1])
        X = X.astype(np.float32)
        self.trees_ = []
        for _ in range(self.n_trees):
            idx = rng.integers(0, len(X), len(X)) if self.bootstrap else np.arange(len(X))
            seed = int(rng.integers(2**31 - 1))
            self.trees_.append(_grow_tree(X[idx], Y[idx], self.min_samples_leaf, m, seed))

    def pooled_values(self, X):
        """Per input row, the stacked leaf target rows from every tree."""
        X, _ = _as_xy(X)
        X = X.astype(np.float32)
        leaves = [tree.apply(X) for tree in self.trees_]
        return [
            np.concatenate([tree.leaf_values(lv[i]) for tree, lv in zip(self.trees_, leaves)], axis=0)
            for i in range(len(X))
        ]

    def _predict(self, X):
        out = np.empty((len(X), len(self.levels), self.n_outputs_))
        for i, pool in enumerate(self.pooled_values(X)):
            pool = np.sort(pool, axis=0)
            ranks = [quantile_rank(len(pool), a, "plain") - 1 for a in self.levels]
            out[i] = pool[ranks]
        return out

    def _state(self):
        arrays = {}
        for t, tree in enumerate(self.trees_):
            for name in ("feature", "threshold", "left", "right", "start", "stop", "values"):
                arrays[f"tree{t}_{name}"] = getattr(tree, name)
        return arrays

    def _set_state(self, arrays):
        names = ("feature", "threshold", "left", "right", "start", "stop", "values")
        self.trees_ = [Tree(*(arrays[f"tree{t}_{n}"] for n in names)) for t in range(self.n_trees)]


MODELS = {cls.kind: cls for cls in (LinearQuantileModel, QuantileForestModel)}


def make_regressor(name, levels, **params):
    try:
        cls = MODELS[name]
    except KeyError:
        raise ValueError(f"unknown regressor {name!r}; choose from {sorted(MODELS)}") from None
    return cls(levels, **params)


def fit_linear_quantile(data, levels, hyper=None, val=None):
    model = LinearQuantileModel(levels, **(hyper or {}))
    if val is not None:
        return model.fit(data, X_val=val.inputs, Y_val=val.targets)
    return model.fit(data)


def fit_quantile_forest(data, levels, hyper=None):
    return QuantileForestModel(levels, **(hyper or {})).fit(data)


def predict_quantiles(model, window):
    """Quantiles for a single (n_x, d) window as an (n_levels, n_y) array."""
    return model.predict(np.asarray(window, dtype=float)[None])[0]


def save_model(model, path):
    """Write a fitted model to a versioned ``.npz`` archive."""
    if not model.fitted:
        raise NotFitted("only fitted models can be saved")
    meta = dict(
        format="encqr-model",
        version=FORMAT_VERSION,
        kind=model.kind,
        levels=list(model.levels),
        params=model.get_params(),
        n_features=model.n_features_,
        n_outputs=model.n_outputs_,
    )
    buf = io.BytesIO()
    np.savez(buf, __meta__=np.array(json.dumps(meta, sort_keys=True)), **model._state())
    with open(path, "wb") as fh:
        fh.write(buf.getvalue())


def load_model(path):
    with np.load(path, allow_pickle=False) as npz:
        meta = json.loads(str(npz["__meta__"]))
        if meta.get("format") != "encqr-model":
            raise ValueError(f"{path} is not a saved model")
        if meta["version"] > FORMAT_VERSION:
            raise ValueError(f"model format version {meta['version']} is newer than supported {FORMAT_VERSION}")
        arrays = {k: npz[k] for k in npz.files if k != "__meta__"}
    model = make_regressor(meta["kind"], meta["levels"], **meta["params"])
    model._set_state(arrays)
    model.n_features_ = meta["n_features"]
    model.n_outputs_ = meta["n_outputs"]
    return model
