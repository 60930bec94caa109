"""
Benchmark orchestration: MCAR injection grids over datasets, rates,
seeds and methods, masked-cell evaluation, t-tests and reports.
"""
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
import json
import logging
import math
import os
import time
import warnings

import numpy as np
import pandas as pd

from fusion_impute.baselines import (
    impute_ce_aann,
    impute_classic_ae,
    impute_knn,
    impute_means,
)
from fusion_impute.config import (
    DEFAULT_SPLITS,
    RunConfig,
    default_dataset,
    seeded,
)
from fusion_impute.dataset import (
    DatasetError,
    InjectionSpec,
    SyntheticSpec,
    denormalize,
    generate_synthetic,
    inject_missing,
    load_builtin,
    load_csv,
    normalize,
    rescale,
    scale_truth,
)
from fusion_impute.ffeam import train
from fusion_impute.helper_functions import ConfigError, ImputeError, pretty_logger
from fusion_impute.stats import welch_ttest

logger = logging.getLogger(__name__)

RECORD_COLUMNS = ["dataset", "method", "rate", "seed", "rmse", "mae", "n_eval", "p_value",
                  "wall_time_s", "config_digest", "error"]


class EvaluationError(ImputeError, ValueError):
    pass


@dataclass(frozen=True)
class Metrics:
    rmse: float
    mae: float
    n_eval: int


def evaluate(filled, truth):
    """
    RMSE and MAE of the fills at the cells hidden by the injection.

    Observed cells of `filled` never enter the metrics.

    Parameters
    ----------
    filled: NumericTable
        Imputer output, whose mask still marks the filled cells as missing.
    truth: GroundTruth

    Returns
    -------
    metrics: Metrics

    Raises
    ------
    EvaluationError
        If `truth` is empty or names a cell that is outside of `filled` or
        observed in it.

    Examples
    --------
    Truths ``[1, 2]`` filled with ``[1, 4]`` give ``rmse = sqrt(2)`` and
    ``mae = 1``.
    """
    if len(truth) == 0:
        raise EvaluationError("The ground truth holds no cells to evaluate.")
    rows = np.asarray(truth.rows, dtype=int)
    cols = np.asarray(truth.cols, dtype=int)
    inside = ((rows >= 0) & (rows < filled.n_rows) & (cols >= 0) & (cols < filled.n_cols))
    if not inside.all():
        pos = int(np.flatnonzero(~inside)[0])
        raise EvaluationError("Truth cell ({}, {}) lies outside of the {}x{} table.".format(
            rows[pos], cols[pos], filled.n_rows, filled.n_cols))
    observed = filled.mask[rows, cols]
    if observed.any():
        pos = int(np.flatnonzero(observed)[0])
        raise EvaluationError("Truth cell ({}, {}) was observed, not filled.".format(
            rows[pos], cols[pos]))
    errors = np.asarray(filled.values)[rows, cols] - np.asarray(truth.values)
    return Metrics(rmse=float(np.sqrt(np.mean(errors ** 2))),
                   mae=float(np.mean(np.abs(errors))),
                   n_eval=len(errors))


@dataclass(frozen=True)
class TTestResult:
    """
    ``p_value`` is the mean of the per-column p-values. Columns where both
    samples had zero variance are listed in ``flagged_columns``.
    """

    p_value: float
    column_p: dict
    flagged_columns: tuple = ()


def ttest_filled_vs_original(original, filled):
    """
    Per column Welch t-tests between the complete original table and the
    filled table, whole columns against whole columns.

    Parameters
    ----------
    original: NumericTable
        Fully observed.
    filled: NumericTable
        Same shape.

    Returns
    -------
    result: TTestResult
    """
    if original.values.shape != filled.values.shape:
        raise EvaluationError("Shapes differ: {} vs {}.".format(original.values.shape,
                                                               filled.values.shape))
    if original.n_missing:
        raise EvaluationError("The original table needs to be fully observed.")
    column_p = {}
    flagged = []
    for j, name in enumerate(original.column_names):
        result = welch_ttest(original.values[:, j], filled.values[:, j])
        column_p[name] = result.p_value
        if result.zero_variance:
            flagged.append(name)
    if flagged:
        warnings.warn("Columns with zero variance in both samples: {}.".format(
            ", ".join(flagged)), UserWarning)
    return TTestResult(float(np.mean(list(column_p.values()))), column_p, tuple(flagged))


def load_dataset(dataset):
    """
    Resolves a :class:`DatasetConfig` (or a bare name) to a complete table.

    Raises
    ------
    DatasetError
        If the table has missing cells, since the masked-cell evaluation needs
        the true values.
    """
    if isinstance(dataset, str):
        dataset = default_dataset(dataset)
    if dataset.source == "builtin":
        table = load_builtin(dataset.name)
    elif dataset.source == "synthetic":
        table = generate_synthetic(SyntheticSpec(dataset.n_samples, dataset.n_valid,
                                                 dataset.n_noise, dataset.seed))
    else:
        table = load_csv(dataset.source, dataset.missing_token)
    if table.n_missing:
        raise DatasetError("Dataset '{}' has {} missing cells, benchmarks need a complete "
                           "table.".format(dataset.name, table.n_missing))
    return table


def impute(table, method, cfg):
    """
    Runs one imputer with the settings of `cfg`.

    Returns
    -------
    (filled, log): tuple of NumericTable and TrainLog or None
    """
    if method == "means":
        return impute_means(table), None
    if method == "knn":
        return impute_knn(table, cfg.knn), None
    if method == "ae":
        return impute_classic_ae(table, cfg.ae, cfg.prefill)
    if method == "ce_aann":
        return impute_ce_aann(table, cfg.ce_aann, cfg.prefill)
    if method == "ffeam":
        return train(table, cfg.ffeam, cfg.prefill, cfg.rbf)
    raise ConfigError("Unknown method '{}'.".format(method))


def run_record(dataset, method, rate, seed, cfg, table=None):
    """
    One benchmark record: inject, impute, evaluate and test.

    Failures are caught and stored in the record's ``error`` field.

    Returns
    -------
    record: dict
        With the keys of :data:`RECORD_COLUMNS`.
    """
    record = {"dataset": dataset.name, "method": method, "rate": rate, "seed": seed,
              "rmse": math.nan, "mae": math.nan, "n_eval": 0, "p_value": math.nan,
              "wall_time_s": 0.0, "config_digest": cfg.digest(method), "error": ""}
    pretty_logger("RECORD", "{} / {} / rate {} / seed {}".format(dataset.name, method, rate,
                                                                  seed), level=logging.DEBUG)
    try:
        original = table if table is not None else load_dataset(dataset)
        masked, truth = inject_missing(original, InjectionSpec(rate, seed, cfg.min_row_observed,
                                                                cfg.min_col_observed))
        if dataset.units == "minmax":
            masked, info = normalize(masked)
            truth = scale_truth(truth, info)
            original = rescale(original, info)
        run_cfg = seeded(cfg, seed)
        started = time.perf_counter()
        if cfg.normalize:
            scaled, info = normalize(masked)
            filled, _ = impute(scaled, method, run_cfg)
            filled = denormalize(filled, info)
        else:
            filled, _ = impute(masked, method, run_cfg)
        record["wall_time_s"] = time.perf_counter() - started
        metrics = evaluate(filled, truth)
        record.update(rmse=metrics.rmse, mae=metrics.mae, n_eval=metrics.n_eval)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", UserWarning)
            record["p_value"] = ttest_filled_vs_original(original, filled).p_value
    except Exception as e:
        record["error"] = "{}: {}".format(type(e).__name__, e)
        logger.error("record %s/%s/%s/%s failed: %s", dataset.name, method, rate, seed,
                     record["error"])
    return record


def _run_record_args(args):
    return run_record(*args)


@dataclass
class EvalReport:
    """
    Benchmark records in (dataset, method, rate, seed) order, the resolved
    configuration and the decisions that shaped the numbers.
    """

    records: list = field(default_factory=list)
    config: dict = field(default_factory=dict)
    decisions: dict = field(default_factory=dict)

    @property
    def failed(self):
        return [record for record in self.records if record["error"]]

    def to_frame(self):
        return pd.DataFrame(self.records, columns=RECORD_COLUMNS)

    def aggregate(self):
        """Median RMSE and MAE per (dataset, method, rate) over the successful seeds."""
        frame = self.to_frame()
        frame = frame[frame["error"] == ""]
        return (frame.groupby(["dataset", "method", "rate"], sort=False)[["rmse", "mae"]]
                .median().reset_index())

    def write(self, output_dir):
        """Writes ``report.csv`` and ``report.json`` into `output_dir`."""
        os.makedirs(output_dir, exist_ok=True)
        self.to_frame().to_csv(os.path.join(output_dir, "report.csv"), index=False)
        payload = {"records": self.records, "config": self.config,
                   "decisions": self.decisions}
        with open(os.path.join(output_dir, "report.json"), "w") as f:
            json.dump(payload, f, indent=2, default=_json_default)
        logger.info("report written to %s", output_dir)


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    raise TypeError("{} is not JSON serializable".format(type(obj).__name__))


def decision_flags(cfg):
    return {
        "rbf_norm": cfg.ffeam.rbf_norm,
        "iteration_unit": cfg.ffeam.iteration_unit,
        "knn_k": cfg.knn.k,
        "ae_static_fill": cfg.ae.static_fill,
        "prefill": cfg.prefill.method,
        "forest": {"n_trees": cfg.prefill.forest.n_trees,
                   "max_depth": cfg.prefill.forest.max_depth,
                   "min_samples_leaf": cfg.prefill.forest.min_samples_leaf,
                   "feature_subsample": cfg.prefill.forest.feature_subsample},
        "guard_policy": "seeded permutation, cells skipped when a row keeps fewer than {} or "
                        "a column fewer than {} observed".format(cfg.min_row_observed,
                                                                 cfg.min_col_observed),
        "p_value_aggregation": "mean of per-column Welch p-values",
        "normalize": cfg.normalize,
        "units": {dataset.name: dataset.units for dataset in cfg.datasets},
        "synthetic_generator": "3 standard normal latent factors mixed with U(-1, 1) weights "
                               "plus N(0, 0.1^2) noise; noise columns U(0, 1)",
    }


def _execute(tasks, workers):
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_run_record_args, tasks))
    return [_run_record_args(task) for task in tasks]


def run_benchmark(cfg=None):
    """
    Runs the cross-product of datasets, methods, rates and seeds of `cfg`.

    Records are computed in a pool of ``cfg.workers`` processes and reduced
    in (dataset, method, rate, seed) order, so the report does not depend on
    the number of workers. A dataset that cannot be loaded fails all of its
    records without stopping the run.

    Parameters
    ----------
    cfg: RunConfig, default RunConfig()

    Returns
    -------
    report: EvalReport
    """
    cfg = cfg or RunConfig()
    n_records = len(cfg.datasets) * len(cfg.methods) * len(cfg.rates) * len(cfg.seeds)
    pretty_logger("BENCHMARK", "{} datasets, {} methods, {} rates, {} seeds: {} records".format(
        len(cfg.datasets), len(cfg.methods), len(cfg.rates), len(cfg.seeds), n_records))
    tasks = []
    for dataset in cfg.datasets:
        try:
            table = load_dataset(dataset)
        except ImputeError as e:
            logger.error("dataset %s cannot be loaded: %s", dataset.name, e)
            table = None
        for method in cfg.methods:
            for rate in cfg.rates:
                for seed in cfg.seeds:
                    tasks.append((dataset, method, rate, seed, cfg, table))
    report = EvalReport(_execute(tasks, cfg.workers), cfg.to_dict(), decision_flags(cfg))
    if report.failed:
        logger.warning("%d of %d records failed", len(report.failed), len(report.records))
    pretty_logger("MEDIANS", report.aggregate().to_string(index=False))
    return report


@dataclass
class SweepReport:
    records: list = field(default_factory=list)

    def to_frame(self):
        return pd.DataFrame(self.records, columns=["m1", "m2"] + RECORD_COLUMNS)

    def summary(self):
        """Median RMSE and MAE per split, in the order the splits were given."""
        frame = self.to_frame()
        frame = frame[frame["error"] == ""]
        return (frame.groupby(["m1", "m2"], sort=False)[["rmse", "mae"]]
                .median().reset_index())

    def best_split(self):
        summary = self.summary()
        best = summary.loc[summary["rmse"].idxmin()]
        return int(best["m1"]), int(best["m2"])


def sweep_split(dataset, rate, total_hidden=20, splits=DEFAULT_SPLITS, seeds=(0, 1, 2, 3, 4),
                cfg=None):
    """
    Trains FFEAM for every ``(m1, m2)`` allocation of `total_hidden` neurons.

    Every record is computed exactly like the ``ffeam`` records of
    :func:`run_benchmark`, with ``m1`` and ``m2`` replaced.

    Parameters
    ----------
    dataset: str or DatasetConfig
    rate: float
    total_hidden: int, default 20
    splits: sequence of (int, int)
    seeds: sequence of int
    cfg: RunConfig, optional
        Source of every other setting.

    Returns
    -------
    report: SweepReport

    Raises
    ------
    ConfigError
        If a split does not sum to `total_hidden`.
    """
    cfg = cfg or RunConfig()
    if isinstance(dataset, str):
        dataset = default_dataset(dataset)
    split_cfgs = []
    for m1, m2 in splits:
        try:
            ffeam = replace(cfg.ffeam, m1=m1, m2=m2, hidden_total=total_hidden)
        except ValueError as e:
            raise ConfigError("Invalid split ({}, {}): {}".format(m1, m2, e))
        split_cfgs.append((m1, m2, replace(cfg, ffeam=replace(ffeam, hidden_total=None))))
    pretty_logger("SWEEP", "{} on {} at rate {}, splits {}".format(
        "ffeam", dataset.name, rate, [(m1, m2) for m1, m2, _ in split_cfgs]))
    table = load_dataset(dataset)
    tasks = [(dataset, "ffeam", rate, seed, split_cfg, table)
             for _, _, split_cfg in split_cfgs for seed in seeds]
    results = _execute(tasks, cfg.workers)
    report = SweepReport()
    for task, record in zip(tasks, results):
        ffeam = task[4].ffeam
        report.records.append(dict(m1=ffeam.m1, m2=ffeam.m2, **record))
    return report

