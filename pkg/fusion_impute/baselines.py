"""
Reference imputers: column means, k nearest neighbours, a classical
autoencoder and the correlation enhanced autoencoder (CE-AANN).

The two network baselines train under the same loop as FFEAM
(:func:`fusion_impute.ffeam.train_mvdc`), so comparisons isolate the
architecture.
"""
from dataclasses import dataclass
import logging

import numpy as np

from fusion_impute.dataset import DatasetError
from fusion_impute.ffeam import (
    DetrackingAutoencoder,
    Gradients,
    TrainConfig,
    init_params,
    relu,
    train_mvdc,
)
from fusion_impute.helper_functions import arg_validator
from fusion_impute.prefill import mean_prefill

logger = logging.getLogger(__name__)

AeConfig = TrainConfig
CeAannConfig = TrainConfig


@dataclass(frozen=True)
class KnnConfig:
    """
    Parameters
    ----------
    k: int, default 5
    eps: float, default 1e-8
        Floor of the distance in the inverse-distance weights.
    """

    k: int = 5
    eps: float = 1e-8

    def __post_init__(self):
        arg_validator(self.__dict__, {"k": {"valid_types": [int], "valid_range": (1, None)},
                                      "eps": {"valid_types": [float], "valid_range": (0, None)}})


def impute_means(table):
    """Fills every missing cell with its column mean, see :func:`mean_prefill`."""
    return mean_prefill(table)


def impute_knn(table, cfg=None):
    """
    Fills every incomplete row from its `k` nearest complete rows.

    Distances are euclidean over the coordinates observed in the incomplete
    row. Each missing cell becomes the inverse-distance weighted average of
    the neighbours' values in that column. Ties in distance go to the
    lower row index.

    Parameters
    ----------
    table: NumericTable
    cfg: KnnConfig, default KnnConfig()

    Returns
    -------
    filled: NumericTable

    Raises
    ------
    DatasetError
        If fewer than `k` complete rows exist.
    """
    cfg = cfg or KnnConfig()
    values = np.array(table.values, dtype=float)
    complete = table.mask.all(axis=1)
    donors = values[complete]
    if len(donors) < cfg.k:
        raise DatasetError("KNN imputation with k={} needs at least {} complete rows, the "
                           "table has {}. Use a smaller k or another method."
                           "".format(cfg.k, cfg.k, len(donors)))
    for i in np.flatnonzero(~complete):
        observed = table.mask[i]
        dist = np.sqrt(((donors[:, observed] - values[i, observed]) ** 2).sum(axis=1))
        nearest = np.argsort(dist, kind="stable")[:cfg.k]
        weights = 1.0 / np.maximum(dist[nearest], cfg.eps)
        values[i, ~observed] = weights @ donors[nearest][:, ~observed] / weights.sum()
    return table.with_values(values)


@dataclass
class AeParams:
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray

    def tensors(self):
        return {"w1": self.w1, "b1": self.b1, "w2": self.w2, "b2": self.b2}


@dataclass
class AeTrace:
    pre: np.ndarray
    hidden: np.ndarray
    y: np.ndarray


class ClassicAutoencoder:
    """
    One hidden layer of ``m1 + m2`` relu neurons, each seeing every input,
    and a linear output trained on ``1/(2n) * sum((y - x)^2)``.
    """

    name = "ae"

    def __init__(self, cfg):
        self.cfg = cfg

    def setup(self, prefilled, rng):
        n_hidden = self.cfg.m1 + self.cfg.m2
        n_cols = prefilled.shape[1]
        scale = self.cfg.init_scale
        return AeParams(w1=rng.uniform(-scale, scale, size=(n_hidden, n_cols)),
                        b1=np.zeros(n_hidden),
                        w2=rng.uniform(-scale, scale, size=(n_hidden, n_cols)),
                        b2=np.zeros(n_cols))

    def forward(self, params, x):
        pre = np.asarray(x, dtype=float) @ params.w1.T + params.b1
        hidden = relu(pre)
        return AeTrace(pre, hidden, hidden @ params.w2 + params.b2)

    def loss(self, trace, x):
        return float(np.sum((trace.y - x) ** 2)) / (2.0 * len(x))

    def backward(self, trace, x, params, mask=None):
        d_y = (trace.y - x) / len(x)
        d_pre = (d_y @ params.w2.T) * (trace.pre > 0)
        grads = {"w2": trace.hidden.T @ d_y,
                 "b2": d_y.sum(axis=0),
                 "w1": d_pre.T @ x,
                 "b1": d_pre.sum(axis=0)}
        d_x = d_pre @ params.w1 - d_y
        if mask is not None:
            d_x = np.where(mask, 0.0, d_x)
        return Gradients(grads, d_x)

    def final_output(self, params, x):
        return self.forward(params, x).y


class CeAannModel(DetrackingAutoencoder):
    """
    ``m1`` de-tracking neurons feed ``y`` and ``m2`` traditional relu
    neurons, which see every input, feed the reference ``r``.
    """

    name = "ce_aann"

    def setup(self, prefilled, rng):
        params = init_params(self.cfg, None, rng, n_cols=prefilled.shape[1])
        scale = self.cfg.init_scale
        params.ref_w = rng.uniform(-scale, scale, size=(self.cfg.m2, prefilled.shape[1]))
        params.ref_b = np.zeros(self.cfg.m2)
        return params

    def reference_forward(self, params, x):
        pre = x @ params.ref_w.T + params.ref_b
        return relu(pre), {"pre": pre}

    def reference_backward(self, params, x, trace, d_net_r, grads):
        d_pre = d_net_r * (trace.ref_cache["pre"] > 0)
        grads["ref_w"] = d_pre.T @ x
        grads["ref_b"] = d_pre.sum(axis=0)
        return d_pre @ params.ref_w


def impute_classic_ae(table, cfg=None, prefill_cfg=None):
    """
    Imputes `table` with the classical autoencoder.

    With ``cfg.static_fill`` the missing cells stay at their pre-filled
    values during training, otherwise they are optimized like in FFEAM.

    Returns
    -------
    (filled, log): tuple of NumericTable and TrainLog
    """
    cfg = cfg or AeConfig()
    return train_mvdc(table, ClassicAutoencoder(cfg), cfg, prefill_cfg)


def impute_ce_aann(table, cfg=None, prefill_cfg=None):
    """
    Imputes `table` with CE-AANN.

    Returns
    -------
    (filled, log): tuple of NumericTable and TrainLog
    """
    cfg = cfg or CeAannConfig()
    return train_mvdc(table, CeAannModel(cfg), cfg, prefill_cfg)
