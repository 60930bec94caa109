"""
Feature fusion autoencoder with de-tracking and RBF hidden neurons.

The hidden layer holds ``m1`` de-tracking neurons, which for output
attribute ``j`` ignore input ``j``, and ``m2`` reference neurons (RBF neurons
here, traditional neurons in :mod:`fusion_impute.baselines`). The de-tracking
pathway produces the output ``y``, the reference pathway the reference
output ``r``; both share the output bias. Training optimizes the network
weights and the missing cells of the table jointly with Adam.
"""
from dataclasses import dataclass, field
import json
import logging
import math
import time

import numpy as np

from fusion_impute.helper_functions import ImputeError, arg_validator, pretty_logger
from fusion_impute.prefill import PrefillConfig, prefill
from fusion_impute.rbf_init import RbfConfig, fit_basis

logger = logging.getLogger(__name__)


class NonFiniteError(ImputeError, FloatingPointError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    """
    Hyperparameters shared by every network imputer.

    Parameters
    ----------
    learning_rate: float, default 0.1
    epochs: int, default 1000
        Number of shuffled passes over all rows, or of optimizer steps if
        `iteration_unit` is 'steps'.
    batch_size: int, default 20
    m1: int, default 10
        De-tracking neurons.
    m2: int, default 10
        Reference (RBF) neurons.
    adam_beta1, adam_beta2, adam_eps: float
    init_scale: float, default 0.1
        Weights are drawn uniform in ``[-init_scale, init_scale]``.
    seed: int, default 0
    rbf_norm: {'squared', 'as_written'}, default 'squared'
        Distance fed to the gaussian of the RBF neurons: squared euclidean
        norm, or the plain euclidean norm.
    iteration_unit: {'epochs', 'steps'}, default 'epochs'
    hidden_total: int or None, default None
        If given, ``m1 + m2`` must equal it.
    static_fill: bool, default False
        Keep the missing cells frozen at their pre-filled values.
    """

    learning_rate: float = 0.1
    epochs: int = 1000
    batch_size: int = 20
    m1: int = 10
    m2: int = 10
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    init_scale: float = 0.1
    seed: int = 0
    rbf_norm: str = "squared"
    iteration_unit: str = "epochs"
    hidden_total: int = None
    static_fill: bool = False

    def __post_init__(self):
        positive_int = {"valid_types": [int], "valid_range": (1, None)}
        arg_validator(self.__dict__,
                      {"learning_rate": {"valid_types": [float, int], "valid_range": (0, None)},
                       "epochs": positive_int,
                       "batch_size": positive_int,
                       "m1": positive_int,
                       "m2": positive_int,
                       "adam_beta1": {"valid_types": [float], "valid_range": (0, 1)},
                       "adam_beta2": {"valid_types": [float], "valid_range": (0, 1)},
                       "adam_eps": {"valid_types": [float], "valid_range": (0, None)},
                       "init_scale": {"valid_types": [float, int], "valid_range": (0, None)},
                       "seed": {"valid_types": [int], "valid_range": (0, None)},
                       "rbf_norm": {"valid_values": ["squared", "as_written"]},
                       "iteration_unit": {"valid_values": ["epochs", "steps"]},
                       "hidden_total": {"valid_types": [int, type(None)]},
                       "static_fill": {"valid_types": [bool]}})
        if self.hidden_total is not None and self.m1 + self.m2 != self.hidden_total:
            raise ValueError("m1 + m2 = {} does not match the hidden total of "
                             "{}.".format(self.m1 + self.m2, self.hidden_total))


@dataclass
class FfeamParams:
    """
    Network parameters. ``basis`` is fixed during training, every other
    array is trained. ``ref_w``/``ref_b`` are only used by traditional
    reference neurons.
    """

    w1: np.ndarray
    b1: np.ndarray
    w2d: np.ndarray
    w2r: np.ndarray
    b2: np.ndarray
    basis: object = None
    ref_w: np.ndarray = None
    ref_b: np.ndarray = None

    TRAINABLE = ("w1", "b1", "w2d", "w2r", "b2", "ref_w", "ref_b")

    def tensors(self):
        """Trainable arrays by name. Updating them in place updates the params."""
        return {name: getattr(self, name) for name in self.TRAINABLE
                if getattr(self, name) is not None}

    def copy(self):
        return FfeamParams(basis=self.basis,
                           **{name: array.copy() for name, array in self.tensors().items()})


@dataclass
class ForwardTrace:
    """
    Activations of one forward pass over a batch.

    ``net_d[i, k, j]`` is de-tracking neuron ``k`` for output attribute ``j``,
    ``net_r[i, g]`` the reference neuron ``g`` (shared by every attribute).
    """

    pre_d: np.ndarray
    net_d: np.ndarray
    net_r: np.ndarray
    y: np.ndarray
    r: np.ndarray
    ref_cache: dict = field(default_factory=dict)


@dataclass
class Gradients:
    """
    ``params`` holds one gradient per trainable tensor, ``x`` the gradient
    with respect to every input cell of the batch (zeroed at observed cells
    when a mask was passed to ``backward``).
    """

    params: dict
    x: np.ndarray


def relu(values):
    return np.maximum(values, 0.0)


def exclusion_matrix(n_cols):
    """``E[l, j] = 0`` if ``l == j`` else 1, so input ``j`` never reaches output ``j``."""
    return 1.0 - np.eye(n_cols)


class DetrackingAutoencoder:
    """
    Shared kernel of the de-tracking pathway and the joint loss.
    Subclasses provide the reference pathway.

    Parameters
    ----------
    cfg: TrainConfig
    """

    name = "detracking"

    def __init__(self, cfg):
        self.cfg = cfg

    # reference pathway, implemented by subclasses

    def setup(self, prefilled, rng):
        """Returns initial params for the pre-filled ``n x s`` matrix."""
        raise NotImplementedError

    def reference_forward(self, params, x):
        raise NotImplementedError

    def reference_backward(self, params, x, trace, d_net_r, grads):
        raise NotImplementedError

    # shared kernel

    def forward(self, params, x):
        x = np.asarray(x, dtype=float)
        exclude = exclusion_matrix(x.shape[1])
        contributions = x[:, None, :] * params.w1[None, :, :]
        pre_d = np.einsum("ikl,lj->ikj", contributions, exclude) + params.b1[None, :, None]
        net_d = relu(pre_d)
        y = np.einsum("ikj,kj->ij", net_d, params.w2d) + params.b2
        net_r, ref_cache = self.reference_forward(params, x)
        r = net_r @ params.w2r + params.b2
        return ForwardTrace(pre_d, net_d, net_r, y, r, ref_cache)

    def loss(self, trace, x):
        return 0.5 * float(np.sum((trace.y - x) ** 2) + np.sum((trace.y - trace.r) ** 2))

    def backward(self, trace, x, params, mask=None):
        x = np.asarray(x, dtype=float)
        exclude = exclusion_matrix(x.shape[1])
        d_y = (trace.y - x) + (trace.y - trace.r)
        d_r = -(trace.y - trace.r)
        d_x = -(trace.y - x)

        grads = {"w2d": np.einsum("ikj,ij->kj", trace.net_d, d_y),
                 "w2r": trace.net_r.T @ d_r,
                 "b2": d_y.sum(axis=0) + d_r.sum(axis=0)}

        d_pre = d_y[:, None, :] * params.w2d[None, :, :] * (trace.pre_d > 0)
        # spread every d_pre[i, k, j] back onto the inputs l != j
        d_contrib = np.einsum("ikj,lj->ikl", d_pre, exclude)
        grads["w1"] = np.einsum("ikl,il->kl", d_contrib, x)
        grads["b1"] = d_pre.sum(axis=(0, 2))
        d_x += np.einsum("ikl,kl->il", d_contrib, params.w1)

        d_net_r = d_r @ params.w2r.T
        d_x += self.reference_backward(params, x, trace, d_net_r, grads)
        if mask is not None:
            d_x = np.where(mask, 0.0, d_x)
        return Gradients(grads, d_x)

    def final_output(self, params, x):
        return self.forward(params, x).y


class FfeamModel(DetrackingAutoencoder):
    """
    De-tracking neurons for ``y``, RBF neurons for the reference ``r``.

    Parameters
    ----------
    cfg: TrainConfig
    rbf_cfg: RbfConfig, default RbfConfig()
    """

    name = "ffeam"

    def __init__(self, cfg, rbf_cfg=None):
        super().__init__(cfg)
        self.rbf_cfg = rbf_cfg or RbfConfig()

    def setup(self, prefilled, rng):
        basis = fit_basis(prefilled, self.rbf_cfg, self.cfg.m2)
        return init_params(self.cfg, basis, rng)

    def reference_forward(self, params, x):
        basis = params.basis
        diff = x[:, None, :] - basis.centroids[None, :, :]
        sq_dist = (diff ** 2).sum(axis=2)
        dist = sq_dist if self.cfg.rbf_norm == "squared" else np.sqrt(sq_dist)
        net_r = np.exp(-dist / (2.0 * basis.width ** 2))
        return net_r, {"diff": diff, "dist": dist}

    def reference_backward(self, params, x, trace, d_net_r, grads):
        diff, dist = trace.ref_cache["diff"], trace.ref_cache["dist"]
        d_dist = d_net_r * trace.net_r * (-1.0 / (2.0 * params.basis.width ** 2))
        if self.cfg.rbf_norm == "squared":
            coef = 2.0 * d_dist
        else:
            # subgradient 0 where the sample sits on the centroid
            safe = np.where(dist > 0, dist, 1.0)
            coef = np.where(dist > 0, d_dist / safe, 0.0)
        return np.einsum("ig,igl->il", coef, diff)


def init_params(cfg, basis, rng, n_cols=None):
    """
    Draws the initial network parameters.

    Weights are uniform in ``[-cfg.init_scale, cfg.init_scale]`` (drawn in
    the order ``w1``, ``w2d``, ``w2r``), biases are zero.

    Parameters
    ----------
    cfg: TrainConfig
    basis: RbfBasis or None
        ``None`` for models without RBF neurons, then `n_cols` is required.
    rng: np.random.Generator
    n_cols: int, optional

    Raises
    ------
    ValueError
        If the basis does not hold ``cfg.m2`` centroids.
    """
    if basis is not None:
        if basis.h != cfg.m2:
            raise ValueError("The basis holds {} centroids but m2 is {}.".format(basis.h, cfg.m2))
        if n_cols is not None and n_cols != basis.dim:
            raise ValueError("The basis has dimension {} but the table has {} "
                             "columns.".format(basis.dim, n_cols))
        n_cols = basis.dim
    scale = cfg.init_scale
    w1 = rng.uniform(-scale, scale, size=(cfg.m1, n_cols))
    w2d = rng.uniform(-scale, scale, size=(cfg.m1, n_cols))
    w2r = rng.uniform(-scale, scale, size=(cfg.m2, n_cols))
    return FfeamParams(w1=w1, b1=np.zeros(cfg.m1), w2d=w2d, w2r=w2r, b2=np.zeros(n_cols),
                       basis=basis)


def forward(params, x_batch, rbf_norm="squared"):
    """Forward pass of an FFEAM network, see :class:`FfeamModel`."""
    model = FfeamModel(TrainConfig(m1=params.w1.shape[0], m2=params.w2r.shape[0],
                                   rbf_norm=rbf_norm))
    return model.forward(params, x_batch)


def loss(trace, x_batch):
    """Half the summed squared errors of ``y`` against ``x`` and against ``r``."""
    return 0.5 * float(np.sum((trace.y - x_batch) ** 2) + np.sum((trace.y - trace.r) ** 2))


def backward(trace, x_batch, params, mask_batch=None, rbf_norm="squared"):
    """Analytic gradients of :func:`loss`, see :meth:`DetrackingAutoencoder.backward`."""
    model = FfeamModel(TrainConfig(m1=params.w1.shape[0], m2=params.w2r.shape[0],
                                   rbf_norm=rbf_norm))
    return model.backward(trace, x_batch, params, mask_batch)


class AdamOptimizer:
    """
    Adam with bias correction. One instance keeps one step counter and one
    pair of moment buffers per tensor name.

    Parameters
    ----------
    lr: float
    beta1: float, default 0.9
    beta2: float, default 0.999
    eps: float, default 1e-8
    """

    def __init__(self, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = {}
        self.v = {}
        self.t = 0

    @staticmethod
    def _check_finite(name, grad):
        if not np.all(np.isfinite(grad)):
            raise NonFiniteError("Non-finite gradient for tensor `{}`.".format(name))

    def _moments(self, name, like):
        if name not in self.m:
            self.m[name] = np.zeros_like(like, dtype=float)
            self.v[name] = np.zeros_like(like, dtype=float)
        return self.m[name], self.v[name]

    def step(self, params, grads):
        """
        Updates every array of `params` in place.

        Parameters
        ----------
        params: dict of np.ndarray
        grads: dict of np.ndarray
            Same keys and shapes as `params`.

        Raises
        ------
        NonFiniteError
            Naming the first tensor with a non-finite gradient. No tensor
            is updated in that case.
        """
        for name in params:
            self._check_finite(name, grads[name])
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for name, param in params.items():
            g = grads[name]
            m, v = self._moments(name, param)
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            param -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)

    def step_entries(self, name, values, grads, index):
        """
        Updates ``values[index]`` in place, leaving the moments of all other
        entries untouched. Used for the missing-value variables, where only
        the cells of the current batch receive a gradient.
        """
        self._check_finite(name, grads)
        self.t += 1
        if len(index) == 0:
            return
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        m, v = self._moments(name, values)
        m[index] = self.beta1 * m[index] + (1.0 - self.beta1) * grads
        v[index] = self.beta2 * v[index] + (1.0 - self.beta2) * (grads * grads)
        values[index] -= self.lr * (m[index] / bc1) / (np.sqrt(v[index] / bc2) + self.eps)


def adam_step(state, grads, lr=None):
    """
    Functional form of one Adam update.

    Parameters
    ----------
    state: tuple of (AdamOptimizer, dict)
        The optimizer and the parameter tensors it updates in place.
    grads: dict of np.ndarray
    lr: float, optional
        Overrides the optimizer's learning rate for this step.

    Returns
    -------
    params: dict of np.ndarray
    """
    optimizer, params = state
    if lr is not None:
        optimizer.lr = lr
    optimizer.step(params, grads)
    return params


@dataclass(frozen=True)
class MissingVariables:
    """
    One trainable value per missing cell, in row-major cell order.
    """

    rows: np.ndarray
    cols: np.ndarray
    values: np.ndarray
    positions: np.ndarray

    @classmethod
    def from_table(cls, table):
        """Variables initialized from the (pre-filled) missing cells of `table`."""
        rows, cols = table.missing_cells()
        positions = np.full(table.values.shape, -1, dtype=int)
        positions[rows, cols] = np.arange(len(rows))
        return cls(rows, cols, np.array(table.values[rows, cols], dtype=float), positions)

    @property
    def index(self):
        return {(int(r), int(c)): pos for pos, (r, c) in enumerate(zip(self.rows, self.cols))}

    def __len__(self):
        return len(self.values)

    def value_at(self, row, col):
        pos = self.positions[row, col]
        if pos < 0:
            raise KeyError("Cell ({}, {}) is not a missing cell.".format(row, col))
        return float(self.values[pos])


@dataclass
class TrainLog:
    epochs: list = field(default_factory=list)
    mean_loss: list = field(default_factory=list)
    variable_values: list = field(default_factory=list)
    wall_time_s: float = 0.0

    def append(self, epoch, mean_loss):
        self.epochs.append(int(epoch))
        self.mean_loss.append(float(mean_loss))

    def to_jsonl(self, path):
        with open(path, "w") as f:
            for epoch, mean_loss in zip(self.epochs, self.mean_loss):
                f.write(json.dumps({"epoch": epoch, "mean_loss": mean_loss}) + "\n")


def train_mvdc(table, model, cfg, prefill_cfg=None):
    """
    Trains `model` on all rows of `table` while optimizing its missing
    cells as variables.

    The missing cells are pre-filled, turned into variables, and then every
    mini-batch substitutes the current variable values, runs a forward and
    backward pass and updates the weights and the batch's variables with
    two Adam optimizers. After training the model output of a forward pass
    over all rows fills the missing cells.

    Parameters
    ----------
    table: NumericTable
    model: DetrackingAutoencoder or a model with the same interface
    cfg: TrainConfig
    prefill_cfg: PrefillConfig, default PrefillConfig()

    Returns
    -------
    (filled, log): tuple of NumericTable and TrainLog

    Raises
    ------
    NonFiniteError
        If a loss or gradient stops being finite, naming epoch and batch.
    """
    table.validate()
    started = time.perf_counter()
    rng = np.random.default_rng(cfg.seed)
    prefilled = prefill(table, prefill_cfg or PrefillConfig())
    variables = MissingVariables.from_table(prefilled)
    current = np.array(prefilled.values, dtype=float)
    params = model.setup(current, rng)

    n_rows = table.n_rows
    batches_per_epoch = math.ceil(n_rows / cfg.batch_size)
    if cfg.iteration_unit == "epochs":
        total_steps = cfg.epochs * batches_per_epoch
    else:
        total_steps = cfg.epochs
    weight_opt = AdamOptimizer(cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps)
    variable_opt = AdamOptimizer(cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2,
                                 cfg.adam_eps)
    update_variables = len(variables) > 0 and not cfg.static_fill
    pretty_logger("TRAIN {}".format(model.name.upper()),
                  "{} rows, {} missing cells, {} optimizer steps".format(
                      n_rows, len(variables), total_steps))

    log = TrainLog()
    step = 0
    epoch = 0
    while step < total_steps:
        order = rng.permutation(n_rows)
        batch_losses = []
        for batch_index, start in enumerate(range(0, n_rows, cfg.batch_size)):
            if step == total_steps:
                break
            batch = order[start:start + cfg.batch_size]
            x = current[batch]
            missing = ~table.mask[batch]
            trace = model.forward(params, x)
            batch_loss = model.loss(trace, x)
            if not math.isfinite(batch_loss):
                raise NonFiniteError("Non-finite loss at epoch {}, batch {}.".format(
                    epoch, batch_index))
            grads = model.backward(trace, x, params, ~missing)
            try:
                weight_opt.step(params.tensors(), grads.params)
                if update_variables:
                    index = variables.positions[batch][missing]
                    variable_opt.step_entries("missing", variables.values,
                                              grads.x[missing], index)
                    current[variables.rows[index], variables.cols[index]] = \
                        variables.values[index]
            except NonFiniteError as e:
                raise NonFiniteError("{} (epoch {}, batch {})".format(e, epoch, batch_index))
            batch_losses.append(batch_loss)
            step += 1
        log.append(epoch, np.mean(batch_losses))
        logger.debug("epoch %d mean loss %.6g", epoch, log.mean_loss[-1])
        epoch += 1

    final = model.final_output(params, current)
    filled = np.where(table.mask, table.values, final)
    log.variable_values = variables.values.tolist()
    log.wall_time_s = time.perf_counter() - started
    logger.info("%s finished after %d epochs, last mean loss %.6g", model.name, epoch,
                log.mean_loss[-1] if log.mean_loss else float("nan"))
    return table.with_values(filled), log


def train(table, cfg=None, prefill_cfg=None, rbf_cfg=None):
    """
    Imputes `table` with an FFEAM network.

    Parameters
    ----------
    table: NumericTable
    cfg: TrainConfig, default TrainConfig()
    prefill_cfg: PrefillConfig, default PrefillConfig()
        Random forest pre-filling unless configured otherwise.
    rbf_cfg: RbfConfig, default RbfConfig()

    Returns
    -------
    (filled, log): tuple of NumericTable and TrainLog
    """
    cfg = cfg or TrainConfig()
    return train_mvdc(table, FfeamModel(cfg, rbf_cfg), cfg, prefill_cfg)
