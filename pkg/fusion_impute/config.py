"""
Run configuration: defaults, a flat ``key = value`` file, environment
variables and command line overrides, in increasing precedence.

Example file::

    datasets = iris, ds3_7
    rates = 0.2, 0.5
    seeds = 0, 1, 2, 3, 4
    methods = means, knn, ae, ce_aann, ffeam
    ffeam.learning_rate = 0.1
    ffeam.rbf_norm = squared
    prefill.method = forest
    knn.k = 5
    sweep.splits = 5:15, 10:10, 15:5
    dataset.mydata.source = /data/mydata.csv
"""
from dataclasses import dataclass, fields, replace
import hashlib
import json
import logging
import os

from fusion_impute.baselines import KnnConfig
from fusion_impute.dataset import BUILTIN_FILES, SYNTHETIC_PRESETS
from fusion_impute.ffeam import TrainConfig
from fusion_impute.helper_functions import ConfigError, arg_validator, get_env_dict
from fusion_impute.prefill import ForestConfig, PrefillConfig
from fusion_impute.rbf_init import RbfConfig

logger = logging.getLogger(__name__)

METHODS = ("means", "knn", "ae", "ce_aann", "ffeam")
NETWORK_METHODS = ("ae", "ce_aann", "ffeam")
DEFAULT_SPLITS = ((5, 15), (7, 13), (10, 10), (13, 7), (15, 5))


@dataclass(frozen=True)
class DatasetConfig:
    """
    Parameters
    ----------
    name: str
    source: str
        'builtin', 'synthetic' or the path of a CSV file.
    missing_token: str, default ''
        Only used for CSV files.
    n_samples, n_valid, n_noise, seed: int
        Only used for synthetic tables.
    units: {'raw', 'minmax'}, default 'raw'
        Units of the benchmark. With 'minmax' the masked table is scaled to
        [0, 1] from its observed cells and the fills are scored against the
        equally scaled ground truth.
    """

    name: str
    source: str = "builtin"
    missing_token: str = ""
    n_samples: int = 1000
    n_valid: int = 3
    n_noise: int = 7
    seed: int = 0
    units: str = "raw"

    def __post_init__(self):
        try:
            arg_validator(self.__dict__, {"units": {"valid_values": ["raw", "minmax"]}})
        except (TypeError, ValueError) as e:
            raise ConfigError(str(e))


@dataclass(frozen=True)
class RunConfig:
    """Everything a benchmark or sweep run needs. Built by :func:`load_config`."""

    datasets: tuple = (DatasetConfig("iris"),)
    rates: tuple = (0.2, 0.3, 0.4, 0.5)
    seeds: tuple = (0, 1, 2, 3, 4)
    methods: tuple = METHODS
    output_dir: str = "impute_reports"
    workers: int = 1
    normalize: bool = False
    min_row_observed: int = 1
    min_col_observed: int = 2
    ffeam: TrainConfig = TrainConfig()
    ae: TrainConfig = TrainConfig()
    ce_aann: TrainConfig = TrainConfig()
    knn: KnnConfig = KnnConfig()
    rbf: RbfConfig = RbfConfig()
    prefill: PrefillConfig = PrefillConfig()
    sweep_splits: tuple = DEFAULT_SPLITS
    sweep_total_hidden: int = 20

    def __post_init__(self):
        for name in ("datasets", "rates", "seeds", "methods"):
            if not getattr(self, name):
                raise ConfigError("`{}` needs at least one entry.".format(name))
        unknown = [m for m in self.methods if m not in METHODS]
        if unknown:
            raise ConfigError("Unknown methods {}, valid methods are {}.".format(
                unknown, ", ".join(METHODS)))
        for rate in self.rates:
            if not 0 < rate < 1:
                raise ConfigError("Every rate needs to lie in (0, 1), got {}.".format(rate))
        try:
            arg_validator(self.__dict__,
                          {"workers": {"valid_types": [int], "valid_range": (1, None)},
                           "normalize": {"valid_types": [bool]},
                           "sweep_total_hidden": {"valid_types": [int],
                                                  "valid_range": (2, None)}})
        except (TypeError, ValueError) as e:
            raise ConfigError(str(e))

    def method_config(self, method):
        """TrainConfig of a network method, KnnConfig for knn, None for means."""
        if method in NETWORK_METHODS:
            return getattr(self, method)
        if method == "knn":
            return self.knn
        return None

    def to_dict(self):
        return _jsonable(self)

    def digest(self, method=None):
        """
        sha256 over the settings that determine the results: all of them, or
        only those used by `method`.
        """
        if method is None:
            payload = self.to_dict()
            payload.pop("output_dir")
            payload.pop("workers")
        else:
            payload = {"method": method, "normalize": self.normalize,
                       "settings": _jsonable(self.method_config(method))}
            if method in NETWORK_METHODS:
                payload["prefill"] = _jsonable(self.prefill)
            if method == "ffeam":
                payload["rbf"] = _jsonable(self.rbf)
        text = json.dumps(payload, sort_keys=True)
        return hashlib.sha256(text.encode()).hexdigest()[:16]


def _jsonable(obj):
    if hasattr(obj, "__dataclass_fields__"):
        return {f.name: _jsonable(getattr(obj, f.name)) for f in fields(obj)}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(item) for item in obj]
    return obj


def parse_config_text(text):
    """
    Parses flat ``key = value`` lines into an ordered dict of strings.

    Raises
    ------
    ConfigError
        On lines without ``=`` or keys given twice.
    """
    entries = {}
    for number, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError("Line {} is not of the form `key = value`: {!r}".format(
                number, line))
        key, value = (part.strip() for part in line.split("=", 1))
        if key in entries:
            raise ConfigError("Key `{}` is given twice (line {}).".format(key, number))
        entries[key] = value
    return entries


def _split_list(value):
    return [item.strip() for item in value.split(",") if item.strip()]


def _convert(key, value, kind):
    try:
        if value.lower() == "none":
            return None
        if kind is bool:
            lowered = value.lower()
            if lowered not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(value)
            return lowered in ("true", "1", "yes")
        return kind(value)
    except ValueError:
        raise ConfigError("Cannot read `{}` = {!r} as {}.".format(key, value, kind.__name__))


def _section(entries, prefix, cls, key_fields=None):
    """Converts every ``prefix.<field>`` entry to the field type of `cls`."""
    kinds = {f.name: f.type for f in fields(cls)}
    if key_fields is not None:
        kinds = {name: kinds[name] for name in key_fields}
    values = {}
    for key in [k for k in entries if k.startswith(prefix + ".")]:
        name = key[len(prefix) + 1:]
        if name not in kinds:
            continue
        values[name] = _convert(key, entries.pop(key), kinds[name])
    return values


def _build(cls, section, values, base=None):
    try:
        if base is not None:
            return replace(base, **values)
        return cls(**values)
    except (TypeError, ValueError) as e:
        raise ConfigError("Invalid `{}` settings: {}".format(section, e))


def parse_splits(value):
    splits = []
    for item in _split_list(value):
        try:
            m1, m2 = (int(part) for part in item.split(":"))
        except ValueError:
            raise ConfigError("Splits are `m1:m2` pairs, got {!r}.".format(item))
        splits.append((m1, m2))
    return tuple(splits)


def default_dataset(name):
    """Dataset settings for a name given without a ``dataset.<name>.source`` entry."""
    if name in BUILTIN_FILES or name == "seeds":
        return DatasetConfig(name, "builtin")
    if name in SYNTHETIC_PRESETS:
        n_valid, n_noise = SYNTHETIC_PRESETS[name]
        return DatasetConfig(name, "synthetic", n_valid=n_valid, n_noise=n_noise)
    raise ConfigError("Dataset `{}` is neither builtin nor a synthetic preset, set "
                      "`dataset.{}.source`.".format(name, name))


def _datasets(entries, names):
    datasets = []
    for name in names:
        prefix = "dataset.{}".format(name)
        values = _section(entries, prefix, DatasetConfig)
        if "source" in values:
            base = DatasetConfig(name, values.pop("source"))
            if base.source == "synthetic" and name in SYNTHETIC_PRESETS:
                n_valid, n_noise = SYNTHETIC_PRESETS[name]
                base = replace(base, n_valid=n_valid, n_noise=n_noise)
        else:
            base = default_dataset(name)
        values.pop("name", None)
        datasets.append(_build(DatasetConfig, prefix, values, base))
    return tuple(datasets)


def build_run_config(entries, env=None, seed=None):
    """
    Builds a :class:`RunConfig` from parsed config entries.

    Parameters
    ----------
    entries: dict of str
        As returned by :func:`parse_config_text`.
    env: dict, optional
        Environment overrides with the keys of
        :func:`fusion_impute.helper_functions.get_env_dict`; only keys whose
        variable is set should be present.
    seed: int, optional
        Replaces the seed list, highest precedence.

    Raises
    ------
    ConfigError
        On unknown keys or invalid values.
    """
    entries = dict(entries)
    env = env or {}
    top = {}
    if "datasets" in entries:
        names = _split_list(entries.pop("datasets"))
    else:
        names = ["iris"]
    if "rates" in entries:
        top["rates"] = tuple(_convert("rates", v, float)
                             for v in _split_list(entries.pop("rates")))
    if "seeds" in entries:
        top["seeds"] = tuple(_convert("seeds", v, int) for v in _split_list(entries.pop("seeds")))
    if "methods" in entries:
        top["methods"] = tuple(_split_list(entries.pop("methods")))
    for key, kind in (("output_dir", str), ("workers", int), ("normalize", bool)):
        if key in entries:
            top[key] = _convert(key, entries.pop(key), kind)
    inject = _section(entries, "inject", RunConfig, ("min_row_observed", "min_col_observed"))
    top.update(inject)

    for method in NETWORK_METHODS:
        top[method] = _build(TrainConfig, method, _section(entries, method, TrainConfig))
    top["knn"] = _build(KnnConfig, "knn", _section(entries, "knn", KnnConfig))
    top["rbf"] = _build(RbfConfig, "rbf", _section(entries, "rbf", RbfConfig))
    method = entries.pop("prefill.method", "forest")
    forest = _build(ForestConfig, "prefill", _section(entries, "prefill", ForestConfig))
    top["prefill"] = _build(PrefillConfig, "prefill", {"method": method, "forest": forest})
    if "sweep.splits" in entries:
        top["sweep_splits"] = parse_splits(entries.pop("sweep.splits"))
    if "sweep.total_hidden" in entries:
        top["sweep_total_hidden"] = _convert("sweep.total_hidden",
                                             entries.pop("sweep.total_hidden"), int)
    top["datasets"] = _datasets(entries, names)

    if entries:
        raise ConfigError("Unknown config keys: {}.".format(", ".join(sorted(entries))))

    for key in ("output_dir", "workers"):
        if key in env:
            top[key] = env[key]
    seed = seed if seed is not None else env.get("seed")
    if seed is not None:
        top["seeds"] = (int(seed),)
    return _build(RunConfig, "run", top)


def env_overrides():
    """The values of :func:`get_env_dict` whose environment variable is set."""
    env_dict = get_env_dict()
    names = {"seed": "IMPUTE_SEED", "output_dir": "IMPUTE_OUTPUT_DIR",
             "workers": "IMPUTE_WORKERS"}
    return {key: env_dict[key] for key, var in names.items() if os.getenv(var)}


def load_config(path=None, seed=None):
    """
    Resolves the run configuration of the command line tool.

    Parameters
    ----------
    path: str, optional
        Config file; without it only defaults and environment apply.
    seed: int, optional
        Value of ``--seed``.

    Returns
    -------
    cfg: RunConfig
    """
    entries = {}
    if path is not None:
        try:
            with open(path) as f:
                entries = parse_config_text(f.read())
        except OSError as e:
            raise ConfigError("Cannot read config file {}: {}".format(path, e))
    cfg = build_run_config(entries, env_overrides(), seed)
    logger.debug("resolved config %s", cfg.digest())
    return cfg


def seeded(cfg, seed):
    """Copies of the seedable method settings of `cfg` with every seed set to `seed`."""
    forest = replace(cfg.prefill.forest, seed=seed)
    return replace(cfg,
                   ffeam=replace(cfg.ffeam, seed=seed),
                   ae=replace(cfg.ae, seed=seed),
                   ce_aann=replace(cfg.ce_aann, seed=seed),
                   rbf=replace(cfg.rbf, seed=seed),
                   prefill=replace(cfg.prefill, forest=forest))

