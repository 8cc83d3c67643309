"""Input validation helpers shared by the public entry points.

These mirror the spirit of sklearn's ``check_array``: coerce early, fail
loudly with a message naming the offending argument.
"""

from __future__ import annotations

import numpy as np

from .errors import DimensionError


def as_float_array(values, name: str = "values") -> np.ndarray:
    """Coerce to a float64 ndarray and require every entry to be finite."""
    arr = np.asarray(values, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must contain only finite values")
    return arr


def check_feature_values(values, name: str = "values") -> np.ndarray:
    """Validate an L x L x T activation tensor and return it as float64."""
    arr = as_float_array(values, name)
    if arr.ndim != 3:
        raise DimensionError(f"{name} must be a 3-d (rows, cols, channels) tensor, got {arr.ndim}-d")
    if arr.shape[0] != arr.shape[1]:
        raise DimensionError(f"{name} must be square over its spatial axes, got {arr.shape}")
    if arr.shape[0] < 2:
        raise DimensionError(f"{name} needs a grid of at least 2x2 cells, got {arr.shape}")
    if arr.shape[2] < 1:
        raise DimensionError(f"{name} needs at least one channel")
    return arr


def check_vector(values, length: int | None = None, name: str = "values") -> np.ndarray:
    """Validate a finite 1-d vector, optionally of a fixed length."""
    arr = as_float_array(values, name)
    if arr.ndim != 1:
        raise DimensionError(f"{name} must be 1-d, got shape {arr.shape}")
    if length is not None and arr.shape[0] != length:
        raise DimensionError(f"{name} must have length {length}, got {arr.shape[0]}")
    return arr


def check_index(value, limit: int, name: str = "index") -> int:
    """Validate an integer in [0, limit)."""
    idx = int(value)
    if idx != value or not 0 <= idx < limit:
        raise ValueError(f"{name} must be an integer in [0, {limit}), got {value!r}")
    return idx


def check_positive_int(value, name: str, minimum: int = 1) -> int:
    iv = int(value)
    if iv != value or iv < minimum:
        raise ValueError(f"{name} must be an integer >= {minimum}, got {value!r}")
    return iv


def check_nonnegative(value, name: str) -> float:
    fv = float(value)
    if not np.isfinite(fv) or fv < 0:
        raise ValueError(f"{name} must be finite and >= 0, got {value!r}")
    return fv
