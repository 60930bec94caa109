#!/usr/bin/env python

import pytest

from .dataset import InjectionSpec, inject_missing, load_builtin, synthetic_preset
from .helper_functions import get_env_dict, get_scope

FIXTURE_SCOPE = get_scope()


def pytest_configure(config):
    config.addinivalue_line("markers",
                            "slow: long reproduction runs, enabled with IMPUTE_RUN_SLOW=1")


def pytest_collection_modifyitems(config, items):
    if get_env_dict()["run_slow"]:
        return
    skip_slow = pytest.mark.skip(reason="set IMPUTE_RUN_SLOW=1 to run")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture(scope=FIXTURE_SCOPE)
def iris_table():
    """The bundled Iris measurements (150 x 4), fully observed.

    Returns
    -------
    iris_table: NumericTable
    """
    return load_builtin("iris")


@pytest.fixture(scope=FIXTURE_SCOPE)
def incomplete_iris(iris_table):
    """Iris with 20% of its cells hidden (MCAR, seed 0).

    Returns
    -------
    (masked, truth): tuple of NumericTable and GroundTruth
    """
    return inject_missing(iris_table, InjectionSpec(0.2, seed=0))


@pytest.fixture(scope=FIXTURE_SCOPE)
def synthetic_table():
    """A small ``ds3_7`` table: 200 rows, 3 correlated and 7 noise columns.

    Returns
    -------
    synthetic_table: NumericTable
    """
    return synthetic_preset("ds3_7", seed=0, n_samples=200)
