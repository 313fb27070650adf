"""Input validation helpers shared by the estimators and the functional API."""

import math
import numbers

import numpy as np


class BoundConditionError(ValueError):
    """A theorem hypothesis required by a bound calculator does not hold."""


def check_points(points, name="points"):
    """Return ``points`` as a finite float array of shape (n, q), n >= 1."""
    arr = np.asarray(points, dtype=float)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be a 2-D array of shape (n, q), got ndim={arr.ndim}")
    if arr.shape[0] == 0:
        raise ValueError(f"{name} is empty")
    if arr.shape[1] == 0:
        raise ValueError(f"{name} must have dimension q >= 1")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def check_vector(x, dim=None, name="x"):
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be a vector, got shape {arr.shape}")
    if dim is not None and arr.shape[0] != dim:
        raise ValueError(f"{name} has dimension {arr.shape[0]}, expected {dim}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr.copy()


def check_positive(value, name, strict=True):
    if isinstance(value, bool) or not isinstance(value, numbers.Real):
        raise TypeError(f"{name} must be a real number, got {type(value).__name__}")
    value = float(value)
    if math.isnan(value) or (value <= 0 if strict else value < 0):
        op = ">" if strict else ">="
        raise ValueError(f"{name} must be {op} 0, got {value}")
    return value


def check_int(value, name, minimum=1):
    if isinstance(value, bool) or not isinstance(value, numbers.Integral):
        if isinstance(value, numbers.Real) and float(value).is_integer():
            value = int(value)
        else:
            raise TypeError(f"{name} must be an integer, got {value!r}")
    value = int(value)
    if value < minimum:
        raise ValueError(f"{name} must be >= {minimum}, got {value}")
    return value


def check_unit_interval(value, name, closed_left=True):
    value = float(value)
    lo_ok = value >= 0 if closed_left else value > 0
    if not (lo_ok and value < 1):
        left = "[" if closed_left else "("
        raise ValueError(f"{name} must lie in {left}0, 1), got {value}")
    return value
