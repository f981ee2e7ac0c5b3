"""Seeded synthetic datasets for tests, benchmarks, and the synth command.

Three families: count regression with a log-linear rate (y is Poisson
around exp(intercept + X beta)), imbalanced two-blob binary classification
with exact class counts at the requested ratio, and plain Gaussian linear
regression. Optional no-signal categorical columns and uniformly injected
missing cells exercise the encoding and imputation stages.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError
from .tabular import BINARY, NUMERIC, CATEGORICAL, REGRESSION, ColumnSchema, Dataset

KINDS = ("poisson", "imbalanced_binary", "gaussian")

_CATEGORY_LEVELS = ("a", "b", "c")

# Euclidean distance between blob centers, in units of the noise scale.
_BLOB_SEPARATION = 3.0


@dataclass(frozen=True)
class GeneratorSpec:
    kind: str
    n_rows: int = 1000
    n_features: int = 5
    coefficients: tuple | None = None
    intercept: float = 0.0
    imbalance_ratio: float = 9.0
    noise_scale: float = 1.0
    missing_fraction: float = 0.0
    n_categorical: int = 0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigurationError(f"unknown generator kind {self.kind!r}")
        if self.n_rows < 10:
            raise ConfigurationError("generator needs at least 10 rows")
        if self.n_features < 1:
            raise ConfigurationError("generator needs at least 1 numeric feature")
        if self.imbalance_ratio < 1:
            raise ConfigurationError("imbalance ratio must be at least 1")
        if not 0 <= self.missing_fraction <= 0.5:
            raise ConfigurationError("missing fraction must be in [0, 0.5]")
        if self.n_categorical < 0:
            raise ConfigurationError("categorical column count must be nonnegative")
        if self.coefficients is not None and len(self.coefficients) != self.n_features:
            raise ConfigurationError("coefficient length must equal n_features")


def default_coefficients(n_features: int) -> tuple:
    return tuple(0.3 * (-1.0) ** j for j in range(n_features))


def _inject_missing(X: np.ndarray, fraction: float, rng) -> np.ndarray:
    if fraction <= 0 or X.size == 0:
        return X
    n_cells = X.shape[0] * X.shape[1]
    n_missing = int(fraction * n_cells)
    flat = rng.choice(n_cells, size=n_missing, replace=False)
    for pos in flat:
        i, j = divmod(int(pos), X.shape[1])
        X[i, j] = np.nan if isinstance(X[i, j], float) else None
    return X


def _categorical_block(n_rows: int, n_cols: int, rng) -> list[np.ndarray]:
    cols = []
    for _ in range(n_cols):
        picks = rng.integers(0, len(_CATEGORY_LEVELS), n_rows)
        cols.append(np.array([_CATEGORY_LEVELS[p] for p in picks], dtype=object))
    return cols


def generate(spec: GeneratorSpec) -> Dataset:
    """Deterministic dataset for the given generator spec."""
    rng = np.random.default_rng(spec.seed)
    beta = np.asarray(
        spec.coefficients
        if spec.coefficients is not None
        else default_coefficients(spec.n_features),
        dtype=float,
    )

    if spec.kind == "imbalanced_binary":
        n_minor = int(round(spec.n_rows / (1.0 + spec.imbalance_ratio)))
        if n_minor < 1:
            raise ConfigurationError("imbalance ratio leaves no minority rows")
        n_major = spec.n_rows - n_minor
        offset = _BLOB_SEPARATION / np.sqrt(spec.n_features)
        major = rng.normal(0.0, spec.noise_scale, (n_major, spec.n_features))
        minor = rng.normal(offset, spec.noise_scale, (n_minor, spec.n_features))
        Xnum = np.vstack([major, minor])
        y = np.concatenate([np.zeros(n_major, dtype=int), np.ones(n_minor, dtype=int)])
        order = rng.permutation(spec.n_rows)
        Xnum, y = Xnum[order], y[order]
        task, labels = BINARY, (0, 1)
        response = ColumnSchema("response", NUMERIC)
        y_final: np.ndarray = y.astype(np.int64)
    else:
        Xnum = rng.normal(0.0, 1.0, (spec.n_rows, spec.n_features))
        eta = spec.intercept + Xnum @ beta
        if spec.kind == "poisson":
            y_final = rng.poisson(np.exp(eta)).astype(float)
        else:
            y_final = eta + rng.normal(0.0, spec.noise_scale, spec.n_rows)
        task, labels = REGRESSION, ()
        response = ColumnSchema("response", NUMERIC)

    columns: list[np.ndarray] = [
        Xnum[:, j].astype(object) for j in range(spec.n_features)
    ]
    schemas = [ColumnSchema(f"x{j}", NUMERIC) for j in range(spec.n_features)]
    for c, col in enumerate(_categorical_block(spec.n_rows, spec.n_categorical, rng)):
        columns.append(col)
        schemas.append(
            ColumnSchema(f"c{c}", CATEGORICAL, categories=_CATEGORY_LEVELS)
        )
    X = np.stack(columns, axis=1)
    X = _inject_missing(X, spec.missing_fraction, rng)

    missing_by_col = [
        sum(
            1
            for v in X[:, j]
            if v is None or (isinstance(v, float) and np.isnan(v))
        )
        for j in range(X.shape[1])
    ]
    schemas = [
        ColumnSchema(s.name, s.kind, missing_count=m, categories=s.categories)
        for s, m in zip(schemas, missing_by_col)
    ]
    return Dataset(
        X=X,
        y=y_final,
        schema=tuple(schemas),
        response=response,
        task=task,
        labels=labels,
    )
