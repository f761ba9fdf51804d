"""Input validation helpers used at module boundaries."""

from __future__ import annotations

import numbers

import numpy as np

from .errors import ContractError, DataError


def check_cloud(points, *, copy=False):
    """Return ``points`` as a C-contiguous ``(P, 3)`` float64 array.

    Raises :class:`DataError` if any coordinate is NaN or infinite.
    """
    arr = np.array(points, dtype=np.float64, copy=copy) if copy else np.asarray(points, dtype=np.float64)
    if arr.size == 0:
        return np.zeros((0, 3), dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise ContractError(f"point cloud must have shape (P, 3), got {arr.shape}")
    if not np.isfinite(arr).all():
        bad = int(np.flatnonzero(~np.isfinite(arr).all(axis=1))[0])
        raise DataError(f"point cloud contains a non-finite coordinate at index {bad}")
    return np.ascontiguousarray(arr)


def check_probability(value, name):
    value = float(value)
    if not 0.0 <= value <= 1.0:
        raise ContractError(f"{name} must lie in [0, 1], got {value}")
    return value


def check_nonnegative(value, name):
    value = float(value)
    if not value >= 0.0:
        raise ContractError(f"{name} must be >= 0, got {value}")
    return value


def check_positive(value, name):
    value = float(value)
    if not value > 0.0:
        raise ContractError(f"{name} must be > 0, got {value}")
    return value


def check_count(value, name, minimum=1):
    if not isinstance(value, numbers.Integral) or isinstance(value, bool):
        raise ContractError(f"{name} must be an integer, got {value!r}")
    if value < minimum:
        raise ContractError(f"{name} must be >= {minimum}, got {value}")
    return int(value)


def check_range(bounds, name, *, lower=0.0):
    """Validate a ``[lo, hi]`` parameter range with ``lower <= lo <= hi``."""
    lo, hi = (float(b) for b in bounds)
    if not (lower <= lo <= hi):
        raise ContractError(f"{name} must satisfy {lower} <= lo <= hi, got [{lo}, {hi}]")
    return lo, hi


def check_mask(mask, shape, name="mask"):
    mask = np.asarray(mask)
    if mask.shape != tuple(shape):
        raise ContractError(f"{name} has shape {mask.shape}, expected {tuple(shape)}")
    return mask.astype(bool, copy=False)


def as_generator(seed):
    """Turn ``None``, an int seed or an existing Generator into a Generator."""
    if isinstance(seed, np.random.Generator):
        return seed
    if seed is None or isinstance(seed, numbers.Integral):
        return np.random.default_rng(seed)
    raise ContractError(f"cannot build a random generator from {seed!r}")
