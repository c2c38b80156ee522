"""LASSO and random-forest regressors over flattened feature vectors.

Both baselines see the same inputs as the recurrent models: the scaled
``T_x x 7`` weather block flattened row-major, followed by the enabled
static scalars (maturity group, then cluster).
"""
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .seeding import derive_seed


def flatten(feats, use_weather=True, use_mg=True, use_cluster=True, weather_columns=None):
    """FlatFeatures matrix of shape ``(N, T_x * n_weather + n_statics)``."""
    n = len(feats)
    parts = []
    if use_weather:
        w = feats.weather if weather_columns is None else feats.weather[:, :, list(weather_columns)]
        parts.append(w.reshape(n, -1))
    if use_mg:
        parts.append(np.asarray(feats.mg, dtype=np.float64)[:, None])
    if use_cluster:
        parts.append(np.asarray(feats.cluster, dtype=np.float64)[:, None])
    if not parts:
        raise ValueError("flatten: no input features enabled")
    return np.ascontiguousarray(np.concatenate(parts, axis=1), dtype=np.float64)


def _check_xy(X, y):
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).ravel()
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise ValueError(f"X {X.shape} and y {y.shape} do not align")
    if X.shape[0] == 0:
        raise ValueError("empty training data")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise ValueError("training data contains NaN or infinite values")
    return X, y


def soft_threshold(b, lam):
    return np.sign(b) * np.maximum(np.abs(b) - lam, 0.0)


@dataclass
class LassoModel:
    coef: np.ndarray
    intercept: float
    lam: float
    n_sweeps: int = 0
    objective: list = field(default_factory=list)  # after every sweep

    def predict(self, X):
        return np.asarray(X, dtype=np.float64) @ self.coef + self.intercept


def lasso_objective(X, y, coef, intercept, lam):
    r = y - X @ coef - intercept
    return float(r @ r / (2 * len(y)) + lam * np.abs(coef).sum())


def lasso_fit(X, y, lam, tol=1e-8, max_sweeps=10_000, fit_intercept=True, warm_start=None):
    """Cyclic coordinate descent for (1/(2n))||y - X b - b0||^2 + lam ||b||_1.

    Stops once the largest coefficient change in a sweep is below ``tol``.
    """
    X, y = _check_xy(X, y)
    if lam < 0 or not np.isfinite(lam):
        raise ValueError(f"lasso: penalty must be finite and non-negative, got {lam}")
    n, p = X.shape
    if fit_intercept:
        x_mean = X.mean(axis=0)
        y_mean = y.mean()
        Xc = X - x_mean
        yc = y - y_mean
    else:
        x_mean = np.zeros(p)
        y_mean = 0.0
        Xc, yc = X, y
    col_sq = np.einsum("ij,ij->j", Xc, Xc) / n
    beta = np.zeros(p) if warm_start is None else np.array(warm_start, dtype=np.float64)
    resid = yc - Xc @ beta
    history = []
    sweeps = 0
    Xf = np.asfortranarray(Xc)
    for sweeps in range(1, max_sweeps + 1):
        max_delta = 0.0
        for j in range(p):
            if col_sq[j] == 0.0:
                continue
            xj = Xf[:, j]
            old = beta[j]
            rho = xj @ resid / n + col_sq[j] * old
            new = soft_threshold(rho, lam) / col_sq[j]
            if new != old:
                resid -= (new - old) * xj
                beta[j] = new
                max_delta = max(max_delta, abs(new - old))
        history.append(float(resid @ resid / (2 * n) + lam * np.abs(beta).sum()))
        if max_delta < tol:
            break
    return LassoModel(beta, float(y_mean - x_mean @ beta), float(lam), sweeps, history)


def lambda_max(X, y):
    """Smallest penalty giving an all-zero solution (with intercept)."""
    X, y = _check_xy(X, y)
    return float(np.max(np.abs((X - X.mean(axis=0)).T @ (y - y.mean()))) / len(y))


def lasso_select(X, y, X_val, y_val, n_lambdas=12, ratio=1e-4, tol=1e-6):
    """Fit a warm-started geometric penalty path and keep the best validation fit.

    Returns ``(model, path)`` where ``path`` lists ``(lam, val_rmse)``.
    """
    top = lambda_max(X, y)
    grid = top * np.geomspace(1.0, ratio, n_lambdas) if top > 0 else np.array([0.0])
    best, best_err, path = None, np.inf, []
    coef = None
    for lam in grid:
        m = lasso_fit(X, y, lam, tol=tol, warm_start=coef)
        coef = m.coef
        err = float(np.sqrt(np.mean((m.predict(X_val) - np.asarray(y_val)) ** 2)))
        path.append((float(lam), err))
        if err < best_err:
            best, best_err = m, err
    return best, path


@dataclass
class ForestParams:
    n_trees: int = 100
    max_depth: int = 12
    min_samples_leaf: int = 5
    feature_fraction: float = 1 / 3
    bootstrap: bool = True


@dataclass
class Tree:
    feature: np.ndarray  # -1 marks a leaf
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    n_samples: np.ndarray

    def apply(self, X):
        node = np.zeros(X.shape[0], dtype=np.int64)
        active = np.flatnonzero(self.feature[node] >= 0)
        while active.size:
            nd = node[active]
            go_left = X[active, self.feature[nd]] <= self.threshold[nd]
            node[active] = np.where(go_left, self.left[nd], self.right[nd])
            active = active[self.feature[node[active]] >= 0]
        return node

    def predict(self, X):
        return self.value[self.apply(X)]


def tree_fit(X, y, max_depth, min_samples_leaf, feature_fraction, rng):
    """Greedy variance-reduction regression tree."""
    n, p = X.shape
    n_feat = min(p, max(1, int(round(feature_fraction * p))))
    feature, threshold, left, right, value, count = [], [], [], [], [], []

    def new_node(rows):
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(float(y[rows].mean()))
        count.append(len(rows))
        return len(feature) - 1

    stack = [(new_node(np.arange(n)), np.arange(n), 0)]
    while stack:
        node, rows, depth = stack.pop()
        m = len(rows)
        if depth >= max_depth or m < 2 * min_samples_leaf:
            continue
        yr = y[rows]
        if np.all(yr == yr[0]):
            continue
        cols = np.sort(rng.choice(p, size=n_feat, replace=False))
        Xn = X[np.ix_(rows, cols)]
        order = np.argsort(Xn, axis=0, kind="stable")
        xs = np.ascontiguousarray(np.take_along_axis(Xn, order, axis=0))
        ys = np.ascontiguousarray(yr[order])
        j, thr, score = kernels.split_scan(xs, ys, min_samples_leaf)
        total = yr.sum()
        if j < 0 or score <= total * total / m * (1 + 1e-12):
            continue
        thr = float(thr)
        f = int(cols[j])
        mask = X[rows, f] <= thr
        lrows, rrows = rows[mask], rows[~mask]
        feature[node], threshold[node] = f, thr
        left[node] = new_node(lrows)
        right[node] = new_node(rrows)
        stack.append((right[node], rrows, depth + 1))
        stack.append((left[node], lrows, depth + 1))
    return Tree(
        np.array(feature, dtype=np.int64), np.array(threshold), np.array(left, dtype=np.int64),
        np.array(right, dtype=np.int64), np.array(value), np.array(count, dtype=np.int64),
    )


@dataclass
class ForestModel:
    params: ForestParams
    seed: int
    trees: list

    def predict(self, X):
        return forest_predict(self, X)


def forest_fit(X, y, params=None, seed=0):
    """Bagged regression trees, each grown from its own derived seed."""
    params = params or ForestParams()
    X, y = _check_xy(X, y)
    if params.n_trees < 1 or params.max_depth < 0 or params.min_samples_leaf < 1:
        raise ValueError(f"invalid forest parameters {params}")
    if not 0 < params.feature_fraction <= 1:
        raise ValueError(f"feature_fraction must be in (0, 1], got {params.feature_fraction}")
    n = X.shape[0]
    if n < params.min_samples_leaf:
        raise ValueError(f"forest: {n} rows is fewer than min_samples_leaf={params.min_samples_leaf}")
    trees = []
    for t in range(params.n_trees):
        rng = np.random.default_rng(derive_seed(seed, "forest", "tree", t))
        rows = rng.integers(0, n, size=n) if params.bootstrap else np.arange(n)
        trees.append(tree_fit(X[rows], y[rows], params.max_depth, params.min_samples_leaf,
                              params.feature_fraction, rng))
    return ForestModel(params, int(seed), trees)


def forest_predict(model, X):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError(f"forest_predict: expected a 2-d array, got {X.shape}")
    out = np.zeros(X.shape[0])
    for tree in model.trees:
        out += tree.predict(X)
    return out / len(model.trees)
