"""Input validation helpers, in the spirit of ``sklearn.utils.validation``."""

import math

import numpy as np
from sklearn.utils import check_array

from .exceptions import InvalidInputError


def check_temperature(T):
    try:
        T = float(T)
    except (TypeError, ValueError):
        raise InvalidInputError(f"temperature must be a real number, got {T!r}")
    if not math.isfinite(T) or T <= 0:
        raise InvalidInputError(f"temperature must be finite and > 0, got {T}")
    return T


def check_top_p(top_p):
    top_p = float(top_p)
    if not (0.0 < top_p <= 1.0):
        raise InvalidInputError(f"top_p must lie in (0, 1], got {top_p}")
    return top_p


def check_finite_logits(values):
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 1 or arr.size == 0:
        raise InvalidInputError("logits must be a non-empty 1-D sequence")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError("logits must all be finite")
    return arr


def check_label_logprobs(X, n_labels=None):
    """Validate a matrix of per-label log-probabilities.

    ``-inf`` marks a label the source never returned and is allowed; NaN and
    ``+inf`` are not. Every row needs at least one finite entry.
    """
    X = check_array(X, dtype=np.float64, ensure_all_finite=False)
    if np.isnan(X).any() or np.isposinf(X).any():
        raise InvalidInputError("label log-probabilities may not be NaN or +inf")
    if n_labels is not None and X.shape[1] != n_labels:
        raise InvalidInputError(f"expected {n_labels} label columns, got {X.shape[1]}")
    empty = ~np.isfinite(X).any(axis=1)
    if empty.any():
        rows = np.flatnonzero(empty)[:5].tolist()
        raise InvalidInputError(f"rows {rows} have no finite label log-probability")
    return X


def check_series(values, name="series", min_length=3):
    arr = np.asarray(getattr(values, "values", values), dtype=np.float64)
    if arr.ndim != 1:
        raise InvalidInputError(f"{name} must be one-dimensional")
    if arr.size < min_length:
        raise InvalidInputError(f"{name} needs at least {min_length} values, got {arr.size}")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{name} contains missing or non-finite values")
    return arr
