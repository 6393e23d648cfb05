"""Input checks shared by the estimator wrappers."""

import numpy as np

from .errors import InvalidArgument, StateError
from .walls import PROFILE_SHAPE

N_PIXELS = PROFILE_SHAPE[0] * PROFILE_SHAPE[1]


def check_field_matrix(X, n_features=None, complex_ok=False):
    """2D finite array of field vectors; optionally pin the column count."""
    X = np.asarray(X)
    if X.ndim == 1:
        X = X[None]
    if X.ndim != 2:
        raise InvalidArgument(f"expected a 2D array of field vectors, got shape {X.shape}")
    if len(X) == 0:
        raise InvalidArgument("no samples given")
    if np.iscomplexobj(X) and not complex_ok:
        raise InvalidArgument("complex field vectors are not accepted here")
    X = X.astype(complex if complex_ok and np.iscomplexobj(X) else float)
    if not np.all(np.isfinite(X)):
        raise InvalidArgument("field vectors contain NaN or inf")
    if n_features is not None and X.shape[1] != n_features:
        raise InvalidArgument(f"expected {n_features} features per sample, got {X.shape[1]}")
    return X


def check_profiles(y, n=None):
    """Stack of eps profiles as (n, 32, 32); accepts flattened rows or DielectricProfile objects."""
    if isinstance(y, (list, tuple)) and y and hasattr(y[0], "values"):
        y = [p.values for p in y]
    y = np.asarray(y, dtype=float)
    if y.ndim == 2 and y.shape[1] == N_PIXELS:
        y = y.reshape((len(y),) + PROFILE_SHAPE)
    if y.ndim != 3 or y.shape[1:] != PROFILE_SHAPE:
        raise InvalidArgument(f"profiles must be (n, 32, 32) or (n, 1024), got {y.shape}")
    if n is not None and len(y) != n:
        raise InvalidArgument(f"{n} inputs but {len(y)} profiles")
    if not np.all(np.isfinite(y)):
        raise InvalidArgument("profiles contain NaN or inf")
    return y


def check_fitted(est, attr):
    if not hasattr(est, attr):
        raise StateError(f"{type(est).__name__} is not fitted; call fit first")


def check_in_set(name, value, allowed):
    if value not in allowed:
        raise InvalidArgument(f"{name} must be one of {sorted(allowed)}, got {value!r}")
    return value


def check_positive(name, value, strict=True):
    value = float(value)
    if not np.isfinite(value) or (value <= 0 if strict else value < 0):
        raise InvalidArgument(f"{name} must be {'> 0' if strict else '>= 0'}, got {value}")
    return value
