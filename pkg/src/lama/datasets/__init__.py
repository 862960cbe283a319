"""Bundled example datasets and the standardization used with them."""

from __future__ import annotations

from importlib import resources

import numpy as np

from ..models import Dataset, load_csv

__all__ = ["available", "fixture_path", "load_builtin", "load_crime", "load_mtcars", "standardize_dataset"]

_RESPONSES = {"crime": "y", "mtcars": "mpg"}


def available() -> tuple[str, ...]:
    return tuple(sorted(_RESPONSES))


def fixture_path(name: str):
    """Filesystem path of a bundled CSV (for the CLI and for inspection)."""
    if name not in _RESPONSES:
        raise ValueError(f"unknown builtin dataset {name!r}; available: {available()}")
    return resources.files(__package__).joinpath(f"{name}.csv")


def standardize_dataset(data: Dataset) -> Dataset:
    """Center and scale the response and every non-intercept regressor.

    Uses full-sample means and standard deviations (ddof=1).  Applied once,
    before any train/test splitting, so all splits share one scale.
    """
    X = data.X.copy()
    start = 1 if data.has_intercept else 0
    cols = X[:, start:]
    sd = np.std(cols, axis=0, ddof=1)
    if np.any(sd <= 0.0):
        bad = np.flatnonzero(sd <= 0.0) + start
        raise ValueError(f"constant column(s) {bad.tolist()} cannot be standardized")
    X[:, start:] = (cols - np.mean(cols, axis=0)) / sd
    y_sd = np.std(data.Y, ddof=1)
    if y_sd <= 0.0:
        raise ValueError("constant response cannot be standardized")
    Y = (data.Y - np.mean(data.Y)) / y_sd
    return Dataset(Y=Y, X=X, has_intercept=data.has_intercept, column_names=data.column_names)


def load_builtin(name: str, standardize: bool = True, intercept: bool = True) -> Dataset:
    with resources.as_file(fixture_path(name)) as path:
        data = load_csv(path, response=_RESPONSES[name], intercept=intercept)
    return standardize_dataset(data) if standardize else data


def load_crime(standardize: bool = True, intercept: bool = True) -> Dataset:
    """47 US states, 1960 aggregate crime rates and 15 socio-economic predictors."""
    return load_builtin("crime", standardize, intercept)


def load_mtcars(standardize: bool = True, intercept: bool = True) -> Dataset:
    """32 cars from the 1974 Motor Trend road tests; fuel economy response."""
    return load_builtin("mtcars", standardize, intercept)
