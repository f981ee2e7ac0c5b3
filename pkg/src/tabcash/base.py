"""Estimator plumbing: parameter introspection and input validation helpers.

Every pipeline component (encoder, imputer, scaler, selector, balancer,
model) derives from :class:`Component` and follows the usual estimator
conventions: constructor arguments are stored verbatim under the same
attribute name, fitted state lives in trailing-underscore attributes, and
``get_params`` / ``set_params`` round-trip the constructor arguments.
"""

from __future__ import annotations

import inspect

import numpy as np

from .errors import ContractError


class Component:
    """Minimal estimator base with sklearn-compatible parameter handling."""

    @classmethod
    def _param_names(cls) -> list[str]:
        sig = inspect.signature(cls.__init__)
        return [
            name
            for name, p in sig.parameters.items()
            if name != "self" and p.kind not in (p.VAR_POSITIONAL, p.VAR_KEYWORD)
        ]

    def get_params(self) -> dict:
        return {name: getattr(self, name) for name in self._param_names()}

    def set_params(self, **params):
        valid = set(self._param_names())
        for name, value in params.items():
            if name not in valid:
                raise ContractError(f"unknown parameter {name!r} for {type(self).__name__}")
            setattr(self, name, value)
        return self

    def __repr__(self) -> str:
        args = ", ".join(f"{k}={v!r}" for k, v in self.get_params().items())
        return f"{type(self).__name__}({args})"


def check_fitted(obj, attribute: str) -> None:
    """Raise unless ``obj`` carries the given fitted attribute."""
    if getattr(obj, attribute, None) is None:
        raise ContractError(
            f"{type(obj).__name__} used before fit (missing {attribute!r})"
        )


def as_float_matrix(X, name: str = "X") -> np.ndarray:
    """Coerce to a 2-D float64 array; NaN marks missing cells."""
    arr = np.asarray(X, dtype=float)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    if arr.ndim != 2:
        raise ContractError(f"{name} must be 2-dimensional, got shape {arr.shape}")
    return arr


def as_float_vector(v, name: str = "y") -> np.ndarray:
    arr = np.asarray(v, dtype=float)
    if arr.ndim != 1:
        raise ContractError(f"{name} must be 1-dimensional, got shape {arr.shape}")
    return arr


def check_no_missing(X: np.ndarray, name: str = "X") -> None:
    if np.isnan(X).any():
        raise ContractError(f"{name} contains missing values; impute first")


def check_same_length(a, b, name_a: str = "y", name_b: str = "yhat") -> None:
    if len(a) != len(b):
        raise ContractError(
            f"{name_a} and {name_b} have different lengths ({len(a)} vs {len(b)})"
        )


def check_matching_width(X: np.ndarray, expected: int, name: str = "X") -> None:
    if X.shape[1] != expected:
        raise ContractError(
            f"{name} has {X.shape[1]} columns, component was fitted on {expected}"
        )
