#!/usr/bin/env python

import math
import warnings

import numpy as np
import pytest

from fusion_impute.dataset import (
    DatasetError,
    GroundTruth,
    InjectionError,
    InjectionSpec,
    SEEDS_COLUMNS,
    NumericTable,
    SyntheticSpec,
    denormalize,
    download_seeds,
    generate_synthetic,
    inject_missing,
    load_builtin,
    load_csv,
    load_truth_csv,
    normalize,
    rescale,
    save_csv,
    save_mask_csv,
    save_truth_csv,
    scale_truth,
    synthetic_preset,
)

# HELPER FUNCTIONS


def write_csv(tmp_path, text, name="table.csv"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def random_table(n_rows=30, n_cols=4, seed=0):
    values = np.random.default_rng(seed).normal(size=(n_rows, n_cols))
    return NumericTable(values, np.ones(values.shape, dtype=bool),
                        ["c{}".format(j) for j in range(n_cols)])


def correlation(table):
    return np.corrcoef(np.asarray(table.values), rowvar=False)


# TESTS

def test_load_csv_marks_empty_cells(tmp_path):
    table = load_csv(write_csv(tmp_path, "a,b\n1,2\n,3\n4,\n"))
    assert table.column_names == ("a", "b")
    expected_mask = np.array([[True, True], [False, True], [True, False]])
    np.testing.assert_array_equal(table.mask, expected_mask)
    assert table.values[0, 1] == 2.0
    assert table.n_missing == 2


def test_load_csv_missing_token(tmp_path):
    table = load_csv(write_csv(tmp_path, "a,b\n1,NA\n2,3\n4,5\n"), missing_token="NA")
    assert not table.mask[0, 1]
    assert table.n_missing == 1


def test_load_csv_complete(tmp_path):
    table = load_csv(write_csv(tmp_path, "a,b,c\n1,2,3\n4,5,6\n"))
    assert table.mask.all()
    np.testing.assert_array_equal(table.values, [[1, 2, 3], [4, 5, 6]])


def test_load_csv_parse_error(tmp_path):
    path = write_csv(tmp_path, "a,b\n1,2\nabc,3\n4,5\n")
    with pytest.raises(DatasetError, match=r"Cannot parse 'abc' as a finite number at row 2, "
                                           r"column 'a'"):
        load_csv(path)


def test_load_csv_rejects_infinite(tmp_path):
    with pytest.raises(DatasetError, match="row 1, column 'b'"):
        load_csv(write_csv(tmp_path, "a,b\n1,inf\n2,3\n4,5\n"))


def test_load_csv_ragged(tmp_path):
    with pytest.raises(DatasetError, match="Ragged rows"):
        load_csv(write_csv(tmp_path, "a,b\n1,2\n3,4,5\n"))
    with pytest.raises(DatasetError, match="Ragged rows"):
        load_csv(write_csv(tmp_path, "a,b,c\n1,2,3\n4,5\n", name="short.csv"))


def test_load_csv_column_guard(tmp_path):
    with pytest.raises(DatasetError, match="Column 'b' has 1 observed values, at least 2"):
        load_csv(write_csv(tmp_path, "a,b\n1,2\n3,\n4,\n"))


def test_load_csv_row_guard(tmp_path):
    with pytest.raises(DatasetError, match="Row 2 has no observed value."):
        load_csv(write_csv(tmp_path, "a,b\n1,2\n,\n4,5\n6,7\n"))


def test_load_csv_not_a_file(tmp_path):
    with pytest.raises(DatasetError, match="is not a valid file path"):
        load_csv(str(tmp_path / "missing.csv"))


def test_numeric_table_invariants():
    with pytest.raises(DatasetError, match="identical shape"):
        NumericTable(np.zeros((2, 2)), np.ones((2, 3), dtype=bool), ["a", "b"])
    with pytest.raises(DatasetError, match="at least 1 row and 2 columns"):
        NumericTable(np.zeros((3, 1)), np.ones((3, 1), dtype=bool), ["a"])
    with pytest.raises(DatasetError, match="Expected 2 column names, got 3."):
        NumericTable(np.zeros((2, 2)), np.ones((2, 2), dtype=bool), ["a", "b", "c"])


def test_numeric_table_is_read_only():
    table = random_table()
    with pytest.raises(ValueError):
        table.values[0, 0] = 1.0
    with pytest.raises(ValueError):
        table.mask[0, 0] = False


def test_with_values_keeps_mask():
    table, _ = inject_missing(random_table(), InjectionSpec(0.2, seed=1))
    filled = table.with_values(np.zeros(table.values.shape))
    np.testing.assert_array_equal(filled.mask, table.mask)
    assert filled.column_names == table.column_names
    assert filled.n_missing == table.n_missing


def test_inject_missing_iris_count(iris_table):
    masked, truth = inject_missing(iris_table, InjectionSpec(0.2, seed=0))
    assert iris_table.values.shape == (150, 4)
    assert masked.n_missing == 120
    assert len(truth) == 120
    np.testing.assert_array_equal(truth.values, iris_table.values[truth.rows, truth.cols])


def test_inject_missing_rate_zero():
    table = random_table()
    masked, truth = inject_missing(table, InjectionSpec(0.0))
    assert masked.n_missing == 0
    assert len(truth) == 0


def test_inject_missing_deterministic(iris_table):
    first, _ = inject_missing(iris_table, InjectionSpec(0.3, seed=5))
    second, _ = inject_missing(iris_table, InjectionSpec(0.3, seed=5))
    other, _ = inject_missing(iris_table, InjectionSpec(0.3, seed=6))
    np.testing.assert_array_equal(first.mask, second.mask)
    assert not np.array_equal(first.mask, other.mask)


@pytest.mark.parametrize("rate", [0.2, 0.3, 0.4, 0.5])
def test_inject_missing_guards(iris_table, rate):
    masked, truth = inject_missing(iris_table, InjectionSpec(rate, seed=3))
    assert masked.mask.sum(axis=1).min() >= 1
    assert masked.mask.sum(axis=0).min() >= 2
    assert len(truth) <= math.floor(rate * 600)
    # masked cells hold the NaN placeholder, observed cells are untouched
    assert np.isnan(masked.values[~masked.mask]).all()
    np.testing.assert_array_equal(masked.values[masked.mask], iris_table.values[masked.mask])


def test_inject_missing_warns_on_shortfall():
    # rows and columns may each lose 2 of 3 cells, greedy picks can strand the last ones
    table = random_table(n_rows=3, n_cols=3)
    for seed in range(20):
        spec = InjectionSpec(0.67, seed=seed, min_row_observed=1, min_col_observed=1)
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            masked, truth = inject_missing(table, spec)
        assert len(truth) <= 6
        assert masked.mask.sum(axis=1).min() >= 1
        assert masked.mask.sum(axis=0).min() >= 1
        warned = any("could be hidden" in str(w.message) for w in caught)
        assert warned == (len(truth) < 6)


def test_inject_missing_errors():
    table = random_table(n_rows=4, n_cols=2)
    with pytest.raises(InjectionError, match="at most"):
        inject_missing(table, InjectionSpec(0.9))
    with pytest.raises(InjectionError, match="needs to be below 1"):
        InjectionSpec(1.0)
    incomplete, _ = inject_missing(random_table(), InjectionSpec(0.1))
    with pytest.raises(InjectionError, match="complete table"):
        inject_missing(incomplete, InjectionSpec(0.1))


def test_generate_synthetic_correlated_columns():
    table = generate_synthetic(SyntheticSpec(n_samples=1000, n_valid=10, n_noise=0, seed=0))
    assert table.values.shape == (1000, 10)
    corr = correlation(table)
    off_diagonal = np.abs(corr[~np.eye(10, dtype=bool)])
    assert off_diagonal.mean() > 0.2


def test_generate_synthetic_noise_columns():
    table = generate_synthetic(SyntheticSpec(n_samples=1000, n_valid=3, n_noise=7, seed=0))
    assert table.column_names[:3] == ("valid_1", "valid_2", "valid_3")
    assert table.column_names[3] == "noise_1"
    corr = correlation(table)
    assert np.abs(corr[:3, 3:]).mean() < 0.1
    noise = np.asarray(table.values)[:, 3:]
    assert noise.min() >= 0 and noise.max() <= 1


def test_generate_synthetic_validation():
    with pytest.raises(ValueError, match="n_valid"):
        SyntheticSpec(n_samples=100, n_valid=0, n_noise=5)
    with pytest.raises(TypeError, match="n_samples"):
        SyntheticSpec(n_samples=10.5)


def test_synthetic_preset():
    table = synthetic_preset("ds5_5", seed=2, n_samples=50)
    assert table.values.shape == (50, 10)
    with pytest.raises(DatasetError, match="Unknown synthetic preset"):
        synthetic_preset("ds1_1")


def test_load_builtin():
    wine = load_builtin("wine")
    assert wine.values.shape == (178, 14)
    assert wine.mask.all()
    with pytest.raises(DatasetError, match="Unknown builtin dataset"):
        load_builtin("mnist")


def test_load_builtin_seeds_from_env(monkeypatch, tmp_path):
    monkeypatch.delenv("IMPUTE_SEEDS_CSV", raising=False)
    with pytest.raises(DatasetError, match="IMPUTE_SEEDS_CSV"):
        load_builtin("seeds")
    path = write_csv(tmp_path, "area,perimeter\n15.26,14.84\n14.88,14.57\n")
    monkeypatch.setenv("IMPUTE_SEEDS_CSV", path)
    assert load_builtin("seeds").values.shape == (2, 2)


def test_normalize_min_max():
    values = np.array([[0.0, 4.0], [5.0, 4.0], [10.0, 4.0]])
    table = NumericTable(values, np.ones((3, 2), dtype=bool), ["x", "const"])
    with pytest.warns(UserWarning, match="const"):
        scaled, info = normalize(table)
    np.testing.assert_array_equal(scaled.values[:, 0], [0.0, 0.5, 1.0])
    np.testing.assert_array_equal(scaled.values[:, 1], [4.0, 4.0, 4.0])
    np.testing.assert_array_equal(info.constant, [False, True])


def test_normalize_uses_observed_cells_only():
    values = np.array([[0.0, 1.0], [100.0, 2.0], [10.0, 3.0]])
    mask = np.array([[True, True], [False, True], [True, True]])
    scaled, info = normalize(NumericTable(values, mask, ["a", "b"]))
    assert info.ranges[0] == 10.0
    assert scaled.values[2, 0] == 1.0


def test_normalize_round_trip():
    table, _ = inject_missing(random_table(n_rows=50, seed=4), InjectionSpec(0.2, seed=4))
    filled = table.with_values(np.where(table.mask, table.values, 0.5))
    scaled, info = normalize(filled)
    restored = denormalize(scaled, info)
    deviation = np.abs(restored.values - filled.values)[filled.mask]
    assert deviation.max() < 1e-12


def test_scale_truth_and_rescale_follow_the_masked_scaling():
    original = NumericTable(np.array([[0.0, 1.0], [100.0, 2.0], [10.0, 3.0]]),
                            np.ones((3, 2), dtype=bool), ["a", "b"])
    masked = NumericTable(original.values, np.array([[True, True], [False, True],
                                                     [True, True]]), ["a", "b"])
    truth = GroundTruth(np.array([1]), np.array([0]), np.array([100.0]))
    scaled, info = normalize(masked)
    np.testing.assert_array_equal(scale_truth(truth, info).values, [10.0])
    np.testing.assert_array_equal(rescale(original, info).values[:, 0], [0.0, 10.0, 1.0])
    np.testing.assert_array_equal(rescale(original, info).values[:, 1], [0.0, 0.5, 1.0])
    assert rescale(original, info).mask.all()


def test_download_seeds_from_local_copy(tmp_path):
    source = tmp_path / "seeds_dataset.txt"
    source.write_text("15.26 14.84 0.871 5.763 3.312 2.221 5.22 1\n"
                      "14.88\t14.57\t0.8811\t5.554\t3.333\t1.018\t4.956\t1\n"
                      "13.84 13.94 0.8955 5.324 3.379 2.259 4.805 2\n")
    path = str(tmp_path / "seeds.csv")
    table = download_seeds(path, url=str(source))
    assert table.column_names == SEEDS_COLUMNS
    assert table.values.shape == (3, 7)
    assert table.values[2, 6] == pytest.approx(4.805)


def test_download_seeds_errors(tmp_path):
    with pytest.raises(DatasetError, match="Cannot read the seeds data"):
        download_seeds(str(tmp_path / "seeds.csv"), url=str(tmp_path / "missing.txt"))
    source = tmp_path / "short.txt"
    source.write_text("1 2 3\n")
    with pytest.raises(DatasetError, match="Expected 8 columns"):
        download_seeds(str(tmp_path / "seeds.csv"), url=str(source))


def test_csv_round_trip(tmp_path):
    table, truth = inject_missing(random_table(seed=7), InjectionSpec(0.25, seed=7))
    path = str(tmp_path / "masked.csv")
    save_csv(table, path)
    loaded = load_csv(path)
    np.testing.assert_array_equal(loaded.mask, table.mask)
    np.testing.assert_allclose(loaded.values[loaded.mask], table.values[table.mask],
                               rtol=0, atol=1e-10)

    truth_path = str(tmp_path / "truth.csv")
    save_truth_csv(truth, table.column_names, truth_path)
    loaded_truth = load_truth_csv(truth_path, table.column_names)
    np.testing.assert_array_equal(loaded_truth.rows, truth.rows)
    np.testing.assert_array_equal(loaded_truth.cols, truth.cols)
    np.testing.assert_allclose(loaded_truth.values, truth.values, rtol=0, atol=1e-10)


def test_save_csv_token_and_fill(tmp_path):
    values = np.array([[1.0, 2.0], [7.5, 3.0], [4.0, 5.0]])
    mask = np.array([[True, True], [False, True], [True, True]])
    table = NumericTable(values, mask, ["a", "b"])
    path = str(tmp_path / "token.csv")
    save_csv(table, path, missing_token="?")
    assert (tmp_path / "token.csv").read_text().splitlines()[2] == "?,3"
    filled_path = str(tmp_path / "filled.csv")
    save_csv(table, filled_path, fill=True)
    assert load_csv(filled_path).values[1, 0] == 7.5
    mask_path = str(tmp_path / "mask.csv")
    save_mask_csv(table, mask_path)
    assert (tmp_path / "mask.csv").read_text().splitlines() == ["a,b", "1,1", "0,1", "1,1"]


def test_ground_truth_len():
    assert len(GroundTruth()) == 0
