"""
Tabular numeric data with explicit missingness.

Every imputer in ``fusion_impute`` consumes and returns a :class:`NumericTable`.
Missing cells hold ``NaN`` at the storage level, but consumers must always
go through ``mask`` and never test for the sentinel.
"""
from dataclasses import dataclass, field
import logging
import math
import os
import warnings

import numpy as np
import pandas as pd

from fusion_impute.helper_functions import (
    DATA_DIR,
    ImputeError,
    arg_validator,
    get_env_dict,
)

logger = logging.getLogger(__name__)

MIN_OBSERVED_PER_ROW = 1
MIN_OBSERVED_PER_COLUMN = 2

BUILTIN_FILES = {"iris": "iris.csv", "wine": "wine.csv"}

SEEDS_URL = ("https://archive.ics.uci.edu/ml/machine-learning-databases/00236/"
             "seeds_dataset.txt")
SEEDS_COLUMNS = ("area", "perimeter", "compactness", "kernel_length", "kernel_width",
                 "asymmetry", "groove_length")


class DatasetError(ImputeError):
    pass


class InjectionError(ImputeError):
    pass


@dataclass(frozen=True, eq=False)
class NumericTable:
    """
    Dense numeric matrix with column names and an observed/missing mask.

    Parameters
    ----------
    values: np.ndarray
        ``n x s`` matrix of floats. Cells where ``mask`` is False are placeholders.
    mask: np.ndarray
        Boolean ``n x s`` matrix, True where the cell is observed.
    column_names: tuple of str
        One name per column.
    """

    values: np.ndarray
    mask: np.ndarray
    column_names: tuple

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        mask = np.array(self.mask, dtype=bool)
        if values.ndim != 2 or values.shape != mask.shape:
            raise DatasetError("`values` and `mask` need to be matrices of identical shape, "
                               "got {} and {}.".format(values.shape, mask.shape))
        n_rows, n_cols = values.shape
        if n_rows < 1 or n_cols < 2:
            raise DatasetError("A table needs at least 1 row and 2 columns, "
                               "got {} x {}.".format(n_rows, n_cols))
        column_names = tuple(str(name) for name in self.column_names)
        if len(column_names) != n_cols:
            raise DatasetError("Expected {} column names, got {}.".format(n_cols,
                                                                          len(column_names)))
        values.flags.writeable = False
        mask.flags.writeable = False
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "mask", mask)
        object.__setattr__(self, "column_names", column_names)

    @property
    def n_rows(self):
        return self.values.shape[0]

    @property
    def n_cols(self):
        return self.values.shape[1]

    @property
    def n_missing(self):
        return int((~self.mask).sum())

    def missing_cells(self):
        """
        Returns
        -------
        (rows, cols): tuple of np.ndarray
            Coordinates of the missing cells in row-major order.
        """
        return np.nonzero(~self.mask)

    def validate(self):
        """
        Checks the observation guards: every row holds at least 1 and
        every column at least 2 observed cells.

        Raises
        ------
        DatasetError
            Naming the first row or column violating a guard.
        """
        row_counts = self.mask.sum(axis=1)
        col_counts = self.mask.sum(axis=0)
        bad_rows = np.flatnonzero(row_counts < MIN_OBSERVED_PER_ROW)
        if bad_rows.size:
            raise DatasetError("Row {} has no observed value.".format(bad_rows[0] + 1))
        bad_cols = np.flatnonzero(col_counts < MIN_OBSERVED_PER_COLUMN)
        if bad_cols.size:
            name = self.column_names[bad_cols[0]]
            raise DatasetError("Column '{}' has {} observed values, at least {} are "
                               "needed.".format(name, col_counts[bad_cols[0]],
                                                MIN_OBSERVED_PER_COLUMN))
        return self

    def with_values(self, values):
        """
        New table holding `values`, same mask and column names.
        Missing cells of the result keep the filled numbers from `values`,
        which is how imputers hand back their fills.
        """
        return NumericTable(values, self.mask, self.column_names)

    def to_frame(self):
        return pd.DataFrame(np.array(self.values), columns=list(self.column_names))


@dataclass(frozen=True)
class GroundTruth:
    """True values of the cells hidden by :func:`inject_missing`."""

    rows: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    cols: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    values: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __len__(self):
        return len(self.values)


@dataclass(frozen=True)
class InjectionSpec:
    rate: float
    seed: int = 0
    min_row_observed: int = MIN_OBSERVED_PER_ROW
    min_col_observed: int = MIN_OBSERVED_PER_COLUMN

    def __post_init__(self):
        try:
            arg_validator({"rate": float(self.rate), "seed": self.seed},
                          {"rate": {"valid_range": (0.0, None)},
                           "seed": {"valid_types": [int], "valid_range": (0, 2**64 - 1)}},
                          strict_type_check=False)
        except (TypeError, ValueError) as e:
            raise InjectionError(str(e))
        if not self.rate < 1:
            raise InjectionError("The missing rate needs to be below 1, "
                                 "the given value was {}.".format(self.rate))


@dataclass(frozen=True)
class SyntheticSpec:
    """
    Parameters
    ----------
    n_samples: int
    n_valid: int
        Columns generated from a shared 3 factor latent model.
    n_noise: int
        Independent uniform noise columns.
    seed: int
    """

    n_samples: int = 1000
    n_valid: int = 3
    n_noise: int = 7
    seed: int = 0

    def __post_init__(self):
        arg_validator(self.__dict__,
                      {"n_samples": {"valid_types": [int], "valid_range": (1, None)},
                       "n_valid": {"valid_types": [int], "valid_range": (1, None)},
                       "n_noise": {"valid_types": [int], "valid_range": (0, None)},
                       "seed": {"valid_types": [int], "valid_range": (0, None)}})
        if self.n_valid + self.n_noise < 2:
            raise ValueError("A synthetic table needs at least 2 columns.")


# 1000 samples each, named by valid/noise column counts
SYNTHETIC_PRESETS = {
    "ds3_7": (3, 7),
    "ds5_5": (5, 5),
    "ds7_3": (7, 3),
    "ds10_0": (10, 0),
    "ds13_0": (13, 0),
    "ds16_0": (16, 0),
}

LATENT_FACTORS = 3
PERTURBATION_SCALE = 0.1


@dataclass(frozen=True)
class ScaleInfo:
    """
    Per column min-max scaling computed from observed cells.
    Constant columns are flagged and pass through unscaled.
    """

    mins: np.ndarray
    ranges: np.ndarray
    constant: np.ndarray


def load_csv(path, missing_token=""):
    """
    Reads a CSV file with a header row into a :class:`NumericTable`.

    Parameters
    ----------
    path: str, Path
        Path to the CSV file.
    missing_token: str, default ''
        Cell text marking a missing value. Empty cells are always missing.

    Returns
    -------
    table: NumericTable

    Raises
    ------
    DatasetError
        If a cell does not parse as a finite real (row and column are named),
        rows are ragged, or a guard is violated.
    """
    if not os.path.isfile(path):
        raise DatasetError("{} is not a valid file path, to an actual file.".format(path))
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, na_filter=False)
    except pd.errors.ParserError as e:
        raise DatasetError("Ragged rows in {}: {}".format(path, e))
    except pd.errors.EmptyDataError:
        raise DatasetError("{} holds no header row.".format(path))
    if frame.shape[0] == 0:
        raise DatasetError("{} holds no data rows.".format(path))

    # rows shorter than the header come back as NaN even with na_filter off
    short = frame.isna().any(axis=1).to_numpy()
    if short.any():
        raise DatasetError("Ragged rows in {}: row {} has fewer fields than the "
                           "header.".format(path, np.flatnonzero(short)[0] + 1))

    text = frame.apply(lambda col: col.str.strip())
    mask = ~((text == "") | (text == missing_token)).to_numpy()
    values = np.full(frame.shape, np.nan)
    for j, name in enumerate(frame.columns):
        parsed = pd.to_numeric(text[name].where(mask[:, j]), errors="coerce").to_numpy(float)
        bad = mask[:, j] & ~np.isfinite(parsed)
        if bad.any():
            row = np.flatnonzero(bad)[0]
            raise DatasetError("Cannot parse '{}' as a finite number at row {}, column "
                               "'{}'.".format(text[name].iloc[row], row + 1, name))
        values[:, j] = parsed
    table = NumericTable(values, mask, tuple(frame.columns))
    logger.debug("loaded %s: %d x %d, %d missing", path, table.n_rows, table.n_cols,
                 table.n_missing)
    return table.validate()


def save_csv(table, path, missing_token="", fill=False):
    """
    Writes `table` as CSV. Missing cells are written as `missing_token`
    unless `fill` is True, in which case their (filled) values are written.
    """
    values = np.array(["%.17g" % v for v in np.asarray(table.values).ravel()],
                      dtype=object).reshape(table.values.shape)
    if not fill:
        values[~table.mask] = missing_token
    pd.DataFrame(values, columns=list(table.column_names)).to_csv(path, index=False)


def save_mask_csv(table, path):
    """Writes the observation mask as a parallel CSV of 0/1."""
    pd.DataFrame(table.mask.astype(int),
                 columns=list(table.column_names)).to_csv(path, index=False)


def save_truth_csv(truth, column_names, path):
    """Writes ground truth as ``row,column,value`` lines (0-based row)."""
    pd.DataFrame({"row": truth.rows,
                  "column": [column_names[j] for j in truth.cols],
                  "value": ["%.17g" % v for v in truth.values]}).to_csv(path, index=False)


def load_truth_csv(path, column_names):
    frame = pd.read_csv(path)
    lookup = {name: j for j, name in enumerate(column_names)}
    try:
        cols = np.array([lookup[name] for name in frame["column"].astype(str)], dtype=int)
    except KeyError as e:
        raise DatasetError("Ground truth names unknown column {}.".format(e))
    return GroundTruth(frame["row"].to_numpy(int), cols, frame["value"].to_numpy(float))


def inject_missing(table, spec):
    """
    Hides cells of a complete table, uniformly at random (MCAR).

    Cells are visited in a seeded random order and hidden unless that
    would leave their row with fewer than ``spec.min_row_observed`` or their
    column with fewer than ``spec.min_col_observed`` observed cells.

    Parameters
    ----------
    table: NumericTable
        Fully observed table.
    spec: InjectionSpec

    Returns
    -------
    (masked, truth): tuple of NumericTable and GroundTruth

    Raises
    ------
    InjectionError
        If the table has missing cells or the rate cannot be reached
        without breaking the guards.
    """
    if table.n_missing:
        raise InjectionError("Missing values can only be injected into a complete table, "
                             "this one has {} missing cells.".format(table.n_missing))
    n_rows, n_cols = table.n_rows, table.n_cols
    target = int(math.floor(spec.rate * n_rows * n_cols))
    capacity = n_rows * n_cols - max(n_rows * spec.min_row_observed,
                                     n_cols * spec.min_col_observed)
    if target > capacity:
        raise InjectionError("A rate of {} hides {} cells, but at most {} can be hidden while "
                             "keeping {} observed per row and {} per column."
                             "".format(spec.rate, target, max(capacity, 0),
                                       spec.min_row_observed, spec.min_col_observed))

    rng = np.random.default_rng(spec.seed)
    order = rng.permutation(n_rows * n_cols)
    mask = np.ones((n_rows, n_cols), dtype=bool)
    row_counts = np.full(n_rows, n_cols)
    col_counts = np.full(n_cols, n_rows)
    hidden = 0
    for cell in order:
        if hidden == target:
            break
        i, j = divmod(int(cell), n_cols)
        if row_counts[i] <= spec.min_row_observed or col_counts[j] <= spec.min_col_observed:
            continue
        mask[i, j] = False
        row_counts[i] -= 1
        col_counts[j] -= 1
        hidden += 1
    if hidden < target:
        warnings.warn("Only {} of {} cells could be hidden without breaking the observation "
                      "guards.".format(hidden, target), UserWarning)

    rows, cols = np.nonzero(~mask)
    truth = GroundTruth(rows, cols, np.array(table.values[rows, cols]))
    return NumericTable(np.where(mask, table.values, np.nan), mask, table.column_names), truth


def generate_synthetic(spec):
    """
    Generates a complete table with structured and pure noise columns.

    The ``n_valid`` columns mix 3 standard normal latent factors linearly
    and add a small gaussian perturbation, which correlates them. The
    ``n_noise`` columns are independent uniform noise on [0, 1].

    Parameters
    ----------
    spec: SyntheticSpec

    Returns
    -------
    table: NumericTable
    """
    rng = np.random.default_rng(spec.seed)
    latent = rng.standard_normal((spec.n_samples, LATENT_FACTORS))
    mixing = rng.uniform(-1.0, 1.0, size=(LATENT_FACTORS, spec.n_valid))
    valid = latent @ mixing
    valid += PERTURBATION_SCALE * rng.standard_normal(valid.shape)
    noise = rng.uniform(0.0, 1.0, size=(spec.n_samples, spec.n_noise))
    names = (["valid_{}".format(j + 1) for j in range(spec.n_valid)]
             + ["noise_{}".format(j + 1) for j in range(spec.n_noise)])
    values = np.hstack([valid, noise])
    return NumericTable(values, np.ones(values.shape, dtype=bool), tuple(names))


def synthetic_preset(name, seed=0, n_samples=1000):
    try:
        n_valid, n_noise = SYNTHETIC_PRESETS[name]
    except KeyError:
        raise DatasetError("Unknown synthetic preset '{}', valid presets are "
                           "{}.".format(name, ", ".join(SYNTHETIC_PRESETS)))
    return generate_synthetic(SyntheticSpec(n_samples, n_valid, n_noise, seed))


def load_builtin(name):
    """
    Loads a bundled fixture (``iris``, ``wine``) or the ``seeds`` data from
    the path given by ``IMPUTE_SEEDS_CSV``.

    Raises
    ------
    DatasetError
        If the name is unknown or ``seeds`` is requested without a path.
    """
    if name in BUILTIN_FILES:
        return load_csv(os.path.join(DATA_DIR, BUILTIN_FILES[name]))
    if name == "seeds":
        seeds_csv = get_env_dict()["seeds_csv"]
        if not seeds_csv:
            raise DatasetError("The seeds data is not bundled. Fetch it once with "
                               "`fusion-impute fetch-seeds --out seeds.csv` and point "
                               "IMPUTE_SEEDS_CSV to the file.")
        return load_csv(seeds_csv)
    raise DatasetError("Unknown builtin dataset '{}', valid names are "
                       "{}.".format(name, ", ".join(list(BUILTIN_FILES) + ["seeds"])))


def download_seeds(path, url=SEEDS_URL):
    """
    Converts the whitespace separated UCI Seeds file into a CSV with a header
    row that :func:`load_builtin` reads through ``IMPUTE_SEEDS_CSV``.

    The class label column is dropped.

    Parameters
    ----------
    path: str
        Destination CSV.
    url: str, default SEEDS_URL
        Anything :func:`pandas.read_csv` accepts, a local copy included.

    Returns
    -------
    table: NumericTable

    Raises
    ------
    DatasetError
        If the source cannot be read or has the wrong number of columns.
    """
    try:
        frame = pd.read_csv(url, sep=r"\s+", header=None)
    except (OSError, ValueError) as e:
        raise DatasetError("Cannot read the seeds data from {}: {}".format(url, e))
    if frame.shape[1] != len(SEEDS_COLUMNS) + 1:
        raise DatasetError("Expected {} columns in the seeds data, got {}.".format(
            len(SEEDS_COLUMNS) + 1, frame.shape[1]))
    frame = frame.iloc[:, :len(SEEDS_COLUMNS)]
    frame.columns = list(SEEDS_COLUMNS)
    frame.to_csv(path, index=False)
    logger.info("wrote %d seeds rows to %s", len(frame), path)
    return load_csv(path)


def normalize(table):
    """
    Min-max scales every column to [0, 1] using observed cells only.

    Returns
    -------
    (scaled, info): tuple of NumericTable and ScaleInfo
    """
    observed = np.where(table.mask, table.values, np.nan)
    mins = np.nanmin(observed, axis=0)
    ranges = np.nanmax(observed, axis=0) - mins
    constant = ranges == 0
    if constant.any():
        warnings.warn("Constant columns pass through unscaled: {}.".format(
            ", ".join(table.column_names[j] for j in np.flatnonzero(constant))), UserWarning)
    mins = np.where(constant, 0.0, mins)
    ranges = np.where(constant, 1.0, ranges)
    info = ScaleInfo(mins, ranges, constant)
    return rescale(table, info), info


def rescale(table, info):
    """Applies the scaling of `info`, e.g. to the complete table a masked one came from."""
    return table.with_values((np.asarray(table.values) - info.mins) / info.ranges)


def denormalize(table, info):
    """Inverse of :func:`normalize`, applied to observed and filled cells alike."""
    return table.with_values(np.asarray(table.values) * info.ranges + info.mins)


def scale_truth(truth, info):
    """Ground truth in the units of a table scaled with `info`."""
    cols = np.asarray(truth.cols, dtype=int)
    values = (np.asarray(truth.values) - info.mins[cols]) / info.ranges[cols]
    return GroundTruth(truth.rows, truth.cols, values)
