#!/usr/bin/env python

import json

import pytest

from fusion_impute.config import (
    DEFAULT_SPLITS,
    DatasetConfig,
    RunConfig,
    build_run_config,
    default_dataset,
    env_overrides,
    load_config,
    parse_config_text,
    parse_splits,
    seeded,
)
from fusion_impute.ffeam import TrainConfig
from fusion_impute.helper_functions import ConfigError

ENV_VARS = ["IMPUTE_SEED", "IMPUTE_OUTPUT_DIR", "IMPUTE_WORKERS", "IMPUTE_SEEDS_CSV"]

CONFIG_TEXT = """
# trimmed benchmark grid
datasets = iris, ds3_7, mydata
rates = 0.2, 0.5
seeds = 0, 1
methods = knn, ffeam   # two methods
workers = 3
normalize = yes
inject.min_col_observed = 3
ffeam.learning_rate = 0.05
ffeam.rbf_norm = as_written
ffeam.hidden_total = none
ae.static_fill = true
knn.k = 3
rbf.kmeans_max_iters = 50
prefill.method = mean
prefill.n_trees = 20
sweep.splits = 4:16, 16:4
sweep.total_hidden = 20
dataset.ds3_7.n_samples = 200
dataset.mydata.source = /data/mydata.csv
dataset.mydata.missing_token = ?
"""


@pytest.fixture
def clean_env(monkeypatch):
    for var in ENV_VARS:
        monkeypatch.delenv(var, raising=False)
    return monkeypatch


def test_parse_config_text():
    entries = parse_config_text("a = 1\n\n# comment\nb.c=x y  # trailing\n")
    assert entries == {"a": "1", "b.c": "x y"}


@pytest.mark.parametrize("text, message", [
    ("a = 1\nnonsense\n", "Line 2 is not of the form"),
    ("a = 1\na = 2\n", "Key `a` is given twice"),
])
def test_parse_config_text_errors(text, message):
    with pytest.raises(ConfigError, match=message):
        parse_config_text(text)


def test_build_run_config(clean_env):
    cfg = build_run_config(parse_config_text(CONFIG_TEXT))
    assert [d.name for d in cfg.datasets] == ["iris", "ds3_7", "mydata"]
    assert cfg.datasets[1] == DatasetConfig("ds3_7", "synthetic", n_samples=200,
                                            n_valid=3, n_noise=7)
    assert cfg.datasets[2].source == "/data/mydata.csv"
    assert cfg.datasets[2].missing_token == "?"
    assert cfg.rates == (0.2, 0.5)
    assert cfg.seeds == (0, 1)
    assert cfg.methods == ("knn", "ffeam")
    assert cfg.workers == 3
    assert cfg.normalize is True
    assert cfg.min_col_observed == 3
    assert cfg.ffeam == TrainConfig(learning_rate=0.05, rbf_norm="as_written")
    assert cfg.ae.static_fill is True
    assert cfg.ce_aann == TrainConfig()
    assert cfg.knn.k == 3
    assert cfg.rbf.kmeans_max_iters == 50
    assert cfg.prefill.method == "mean"
    assert cfg.prefill.forest.n_trees == 20
    assert cfg.sweep_splits == ((4, 16), (16, 4))


def test_build_run_config_defaults(clean_env):
    cfg = build_run_config({})
    assert cfg == RunConfig()
    assert cfg.sweep_splits == DEFAULT_SPLITS
    assert load_config() == cfg


@pytest.mark.parametrize("entries, message", [
    ({"ffeam.epochs": "ten"}, r"Cannot read `ffeam.epochs` = 'ten' as int"),
    ({"ffeam.epochs": "0"}, r"Invalid `ffeam` settings: The Argument `epochs`"),
    ({"knn.k": "0"}, r"Invalid `knn` settings"),
    ({"normalize": "maybe"}, r"Cannot read `normalize`"),
    ({"methods": "means, mice"}, r"Unknown methods \['mice'\]"),
    ({"rates": "0.2, 1.0"}, r"Every rate needs to lie in \(0, 1\)"),
    ({"datasets": ""}, r"`datasets` needs at least one entry"),
    ({"datasets": "nowhere"}, r"set `dataset.nowhere.source`"),
    ({"ffeam.colour": "red", "plot": "yes"}, r"Unknown config keys: ffeam.colour, plot"),
    ({"sweep.splits": "10-10"}, r"Splits are `m1:m2` pairs"),
    ({"workers": "0"}, r"The Argument `workers`"),
    ({"dataset.iris.units": "zscore"}, r"Invalid `dataset.iris` settings"),
])
def test_build_run_config_errors(clean_env, entries, message):
    with pytest.raises(ConfigError, match=message):
        build_run_config(entries)


def test_precedence(clean_env, tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("workers = 3\noutput_dir = from_file\nseeds = 0, 1, 2\n")
    assert load_config(str(path)).workers == 3
    clean_env.setenv("IMPUTE_WORKERS", "5")
    clean_env.setenv("IMPUTE_SEED", "7")
    cfg = load_config(str(path))
    assert cfg.workers == 5
    assert cfg.output_dir == "from_file"
    assert cfg.seeds == (7,)
    assert load_config(str(path), seed=11).seeds == (11,)


def test_env_overrides(clean_env, tmp_path):
    assert env_overrides() == {}
    clean_env.setenv("IMPUTE_OUTPUT_DIR", str(tmp_path))
    assert env_overrides() == {"output_dir": str(tmp_path)}


def test_load_config_unreadable(clean_env, tmp_path):
    with pytest.raises(ConfigError, match="Cannot read config file"):
        load_config(str(tmp_path / "missing.cfg"))


def test_default_dataset():
    assert default_dataset("iris") == DatasetConfig("iris", "builtin")
    assert default_dataset("seeds").source == "builtin"
    preset = default_dataset("ds7_3")
    assert (preset.source, preset.n_valid, preset.n_noise) == ("synthetic", 7, 3)


def test_parse_splits():
    assert parse_splits("5:15, 10:10") == ((5, 15), (10, 10))


def test_digest():
    cfg = RunConfig()
    assert cfg.digest() == RunConfig().digest()
    assert len(cfg.digest()) == 16
    faster = RunConfig(ffeam=TrainConfig(learning_rate=0.01))
    assert faster.digest() != cfg.digest()
    assert faster.digest("knn") == cfg.digest("knn")
    assert faster.digest("ffeam") != cfg.digest("ffeam")
    moved = RunConfig(output_dir="elsewhere", workers=4)
    assert moved.digest() == cfg.digest()


def test_to_dict_is_json():
    payload = json.loads(json.dumps(RunConfig().to_dict()))
    assert payload["datasets"][0]["name"] == "iris"
    assert payload["ffeam"]["m1"] == 10
    assert payload["sweep_splits"][0] == [5, 15]


def test_seeded():
    cfg = seeded(RunConfig(), 9)
    assert cfg.ffeam.seed == cfg.ae.seed == cfg.ce_aann.seed == 9
    assert cfg.rbf.seed == 9
    assert cfg.prefill.forest.seed == 9
    assert cfg.ffeam.learning_rate == RunConfig().ffeam.learning_rate


def test_run_config_validation():
    with pytest.raises(ConfigError, match="`seeds` needs at least one entry"):
        RunConfig(seeds=())
    with pytest.raises(ConfigError, match="`normalize`"):
        RunConfig(normalize=1)


def test_dataset_units(clean_env):
    cfg = build_run_config({"datasets": "iris, wine", "dataset.iris.units": "minmax"})
    assert [d.units for d in cfg.datasets] == ["minmax", "raw"]
    with pytest.raises(ConfigError, match="units"):
        DatasetConfig("iris", units="zscore")
