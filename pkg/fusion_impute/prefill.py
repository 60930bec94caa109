"""
One-shot initial estimates for missing cells: column means and
random forest regression, filled column by column.
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
import logging
import math

import numpy as np

from fusion_impute.dataset import DatasetError
from fusion_impute.helper_functions import arg_validator, pretty_logger

logger = logging.getLogger(__name__)

LEAF = -1


@dataclass(frozen=True)
class ForestConfig:
    """
    Parameters
    ----------
    n_trees: int, default 50
    max_depth: int, default 10
    min_samples_leaf: int, default 2
    feature_subsample: float, default 1/3
        Fraction of predictors drawn per split, at least 1 predictor.
    seed: int, default 0
    bootstrap: bool, default True
        Whether every tree is trained on a bootstrap sample.
    n_jobs: int, default 1
        Threads training trees. Results do not depend on it.
    """

    n_trees: int = 50
    max_depth: int = 10
    min_samples_leaf: int = 2
    feature_subsample: float = 1 / 3
    seed: int = 0
    bootstrap: bool = True
    n_jobs: int = 1

    def __post_init__(self):
        arg_validator(self.__dict__,
                      {"n_trees": {"valid_types": [int], "valid_range": (1, None)},
                       "max_depth": {"valid_types": [int], "valid_range": (1, None)},
                       "min_samples_leaf": {"valid_types": [int], "valid_range": (1, None)},
                       "feature_subsample": {"valid_types": [float, int],
                                             "valid_range": (1e-12, 1.0)},
                       "seed": {"valid_types": [int], "valid_range": (0, None)},
                       "bootstrap": {"valid_types": [bool]},
                       "n_jobs": {"valid_types": [int], "valid_range": (1, None)}})

    def n_split_features(self, n_features):
        return max(1, min(n_features, math.ceil(self.feature_subsample * n_features)))


@dataclass(frozen=True)
class RegressionTree:
    """
    CART regression tree stored as flat node arrays.

    Internal nodes have ``split_column >= 0``; samples with
    ``x[split_column] <= split_threshold`` go to ``left``. Leaves have
    ``split_column == -1`` and predict ``prediction``.
    """

    split_column: np.ndarray
    split_threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    prediction: np.ndarray

    @property
    def n_nodes(self):
        return len(self.split_column)

    @property
    def n_leaves(self):
        return int((self.split_column == LEAF).sum())

    def predict(self, X):
        X = np.asarray(X, dtype=float)
        node = np.zeros(X.shape[0], dtype=int)
        active = self.split_column[node] != LEAF
        while active.any():
            idx = np.flatnonzero(active)
            current = node[idx]
            goes_left = X[idx, self.split_column[current]] <= self.split_threshold[current]
            node[idx] = np.where(goes_left, self.left[current], self.right[current])
            active = self.split_column[node] != LEAF
        return self.prediction[node]


def _best_split(X, y, features, min_samples_leaf):
    """
    Returns ``(sse, column, threshold)`` of the split with the lowest summed
    squared error of both children, or ``None`` if no split is admissible.
    """
    n = len(y)
    left_n = np.arange(1, n)
    right_n = n - left_n
    best = None
    for column in features:
        order = np.argsort(X[:, column], kind="stable")
        xs, ys = X[order, column], y[order]
        csum, csq = np.cumsum(ys), np.cumsum(ys * ys)
        left_sum, left_sq = csum[:-1], csq[:-1]
        right_sum, right_sq = csum[-1] - left_sum, csq[-1] - left_sq
        sse = (left_sq - left_sum ** 2 / left_n) + (right_sq - right_sum ** 2 / right_n)
        admissible = ((xs[1:] > xs[:-1]) & (left_n >= min_samples_leaf)
                      & (right_n >= min_samples_leaf))
        if not admissible.any():
            continue
        sse = np.where(admissible, sse, np.inf)
        pos = int(np.argmin(sse))
        if best is None or sse[pos] < best[0]:
            best = (sse[pos], column, 0.5 * (xs[pos] + xs[pos + 1]))
    return best


def fit_tree(X, y, cfg, rng):
    """
    Grows a regression tree by greedy splits minimizing the weighted
    child variance.

    Growth stops at ``cfg.max_depth``, when a node holds fewer than
    ``2 * cfg.min_samples_leaf`` samples, when its targets are constant or
    when no split lowers the squared error.

    Parameters
    ----------
    X: np.ndarray
        Predictor matrix.
    y: np.ndarray
        Targets.
    cfg: ForestConfig
    rng: np.random.Generator
        Draws the predictor subset of every split.

    Returns
    -------
    tree: RegressionTree
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n_features = X.shape[1]
    n_draw = cfg.n_split_features(n_features)
    split_column, split_threshold, left, right, prediction = [], [], [], [], []

    def new_node(samples):
        split_column.append(LEAF)
        split_threshold.append(0.0)
        left.append(LEAF)
        right.append(LEAF)
        prediction.append(float(np.mean(y[samples])))
        return len(split_column) - 1

    stack = [(new_node(np.arange(len(y))), np.arange(len(y)), 0)]
    while stack:
        node, samples, depth = stack.pop()
        targets = y[samples]
        if (depth >= cfg.max_depth or len(samples) < 2 * cfg.min_samples_leaf
                or np.ptp(targets) == 0):
            continue
        features = np.sort(rng.choice(n_features, size=n_draw, replace=False))
        split = _best_split(X[samples], targets, features, cfg.min_samples_leaf)
        parent_sse = float(np.sum((targets - targets.mean()) ** 2))
        if split is None or not split[0] < parent_sse:
            continue
        _, column, threshold = split
        goes_left = X[samples, column] <= threshold
        split_column[node] = int(column)
        split_threshold[node] = float(threshold)
        left[node] = new_node(samples[goes_left])
        right[node] = new_node(samples[~goes_left])
        stack.append((right[node], samples[~goes_left], depth + 1))
        stack.append((left[node], samples[goes_left], depth + 1))

    return RegressionTree(np.array(split_column, dtype=int), np.array(split_threshold),
                          np.array(left, dtype=int), np.array(right, dtype=int),
                          np.array(prediction))


class RandomForest:
    """
    Bagged regression trees. Tree ``t`` draws from its own stream seeded by
    ``(cfg.seed, *stream_key, t)``, so the fit does not depend on ``n_jobs``.

    Parameters
    ----------
    cfg: ForestConfig
    stream_key: tuple of int
        Extra seed material, e.g. the index of the column being filled.
    """

    def __init__(self, cfg, stream_key=()):
        self.cfg = cfg
        self.stream_key = tuple(int(k) for k in stream_key)
        self.trees = []

    def _fit_one(self, tree_index, X, y):
        rng = np.random.default_rng([self.cfg.seed, *self.stream_key, tree_index])
        if self.cfg.bootstrap:
            samples = rng.integers(0, len(y), size=len(y))
            X, y = X[samples], y[samples]
        return fit_tree(X, y, self.cfg, rng)

    def fit(self, X, y):
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        indices = range(self.cfg.n_trees)
        if self.cfg.n_jobs > 1:
            with ThreadPoolExecutor(max_workers=self.cfg.n_jobs) as pool:
                self.trees = list(pool.map(lambda t: self._fit_one(t, X, y), indices))
        else:
            self.trees = [self._fit_one(t, X, y) for t in indices]
        return self

    def predict(self, X):
        return np.mean([tree.predict(X) for tree in self.trees], axis=0)


def mean_prefill(table):
    """
    Fills every missing cell with the mean of its column's observed values.

    Parameters
    ----------
    table: NumericTable

    Returns
    -------
    filled: NumericTable
        Same mask as `table`, missing cells hold the column means.

    Raises
    ------
    DatasetError
        If a column has no observed value.
    """
    counts = table.mask.sum(axis=0)
    if (counts == 0).any():
        name = table.column_names[int(np.flatnonzero(counts == 0)[0])]
        raise DatasetError("Column '{}' has no observed value to average.".format(name))
    means = np.where(table.mask, table.values, 0.0).sum(axis=0) / counts
    return table.with_values(np.where(table.mask, table.values, means))


def prefill_order(table):
    """
    Columns holding missing cells, by ascending missing count and then
    ascending column index.
    """
    missing = (~table.mask).sum(axis=0)
    return [j for _, j in sorted((count, j) for j, count in enumerate(missing) if count)]


def forest_prefill(table, cfg):
    """
    Fills missing cells column by column with random forest regression.

    Columns are visited by :func:`prefill_order`. Every forest is trained on
    the rows where its target is observed, with all other columns as
    predictors. Predictors that are still missing hold their column mean
    until their own column has been filled, and the predictions of a column
    are written back before the next column is trained.

    Parameters
    ----------
    table: NumericTable
    cfg: ForestConfig

    Returns
    -------
    filled: NumericTable
    """
    table.validate()
    if table.n_missing == 0:
        return table
    order = prefill_order(table)
    pretty_logger("FOREST PREFILL", "{} missing cells, column order {}".format(
        table.n_missing, [table.column_names[j] for j in order]))
    working = np.array(mean_prefill(table).values)
    for j in order:
        observed = table.mask[:, j]
        predictors = np.delete(working, j, axis=1)
        forest = RandomForest(cfg, stream_key=(j,)).fit(predictors[observed],
                                                        working[observed, j])
        working[~observed, j] = forest.predict(predictors[~observed])
        logger.debug("filled column '%s' (%d cells)", table.column_names[j],
                     int((~observed).sum()))
    return table.with_values(working)


@dataclass(frozen=True)
class PrefillConfig:
    """
    Parameters
    ----------
    method: {'forest', 'mean'}, default 'forest'
    forest: ForestConfig, default ForestConfig()
    """

    method: str = "forest"
    forest: ForestConfig = ForestConfig()

    def __post_init__(self):
        arg_validator(self.__dict__, {"method": {"valid_values": ["forest", "mean"]},
                                      "forest": {"valid_types": [ForestConfig]}})


def prefill(table, cfg):
    """Dispatches to :func:`forest_prefill` or :func:`mean_prefill`."""
    if cfg.method == "mean":
        return mean_prefill(table)
    return forest_prefill(table, cfg.forest)
