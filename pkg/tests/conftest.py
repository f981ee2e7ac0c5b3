import numpy as np
import pytest

from tabcash.tabular import BINARY, NUMERIC, REGRESSION, ColumnSchema, Dataset


def make_regression_dataset(n=80, w=3, seed=0, noise=0.2):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, w))
    beta = rng.normal(size=w)
    y = 1.0 + X @ beta + noise * rng.normal(size=n)
    return Dataset(
        X=X.astype(object),
        y=y,
        schema=tuple(ColumnSchema(f"x{j}", NUMERIC) for j in range(w)),
        response=ColumnSchema("y", NUMERIC),
        task=REGRESSION,
    )


def make_binary_dataset(n_major=60, n_minor=20, w=2, seed=0, spread=0.8):
    rng = np.random.default_rng(seed)
    X = np.vstack(
        [
            rng.normal(0.0, spread, (n_major, w)),
            rng.normal(2.0, spread, (n_minor, w)),
        ]
    )
    y = np.concatenate([np.zeros(n_major, dtype=np.int64), np.ones(n_minor, dtype=np.int64)])
    order = rng.permutation(len(y))
    return Dataset(
        X=X[order].astype(object),
        y=y[order],
        schema=tuple(ColumnSchema(f"x{j}", NUMERIC) for j in range(w)),
        response=ColumnSchema("y", NUMERIC),
        task=BINARY,
        labels=(0, 1),
    )


@pytest.fixture
def regression_dataset():
    return make_regression_dataset()


@pytest.fixture
def binary_dataset():
    return make_binary_dataset()
