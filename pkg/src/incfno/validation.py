"""Input checks for the estimator-facing API."""

from __future__ import annotations

import numpy as np


def check_function_batch(X, spatial_dims, name="X"):
    """Coerce to ``(n_samples, *grid, channels)`` float64.

    Accepts ``(n, *grid)`` (implicit single channel) or
    ``(n, *grid, channels)``; grids must be uniform across samples and
    values finite.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == spatial_dims + 1:
        X = X[..., None]
    if X.ndim != spatial_dims + 2:
        raise ValueError(
            f"{name} must have shape (n_samples, *grid) or (n_samples, *grid, channels) "
            f"for {spatial_dims} spatial dimension(s), got {X.shape}"
        )
    if X.shape[0] == 0:
        raise ValueError(f"{name} is empty")
    if not np.all(np.isfinite(X)):
        raise ValueError(f"{name} contains NaN/Inf")
    return X


def check_paired_batches(X, y, spatial_dims):
    """Validate an (input, target) pair of function batches."""
    X = check_function_batch(X, spatial_dims, "X")
    y = check_function_batch(y, spatial_dims, "y")
    if X.shape[0] != y.shape[0]:
        raise ValueError(f"X and y disagree on sample count: {X.shape[0]} vs {y.shape[0]}")
    if X.shape[1 : 1 + spatial_dims] != y.shape[1 : 1 + spatial_dims]:
        raise ValueError(
            f"X and y disagree on grid shape: {X.shape[1:]} vs {y.shape[1:]}"
        )
    return X, y


def check_positive(name, value):
    if value is not None and value <= 0:
        raise ValueError(f"{name} must be positive, got {value}")
    return value
