"""Error metric shared by training and evaluation."""

import numpy as np

from .errors import InvalidArgument


def _values(p):
    return np.asarray(getattr(p, "values", p), dtype=float)


def nmse(truth, est) -> float:
    """Squared error norm over the squared norm of ``truth``."""
    t = _values(truth)
    e = _values(est)
    if t.shape != e.shape:
        raise InvalidArgument(f"profile shapes differ: {t.shape} vs {e.shape}")
    denom = float(np.sum(t * t))
    if denom == 0.0:
        raise InvalidArgument("ground-truth profile has zero norm")
    return float(np.sum((t - e) ** 2)) / denom


def nmse_rows(truth, est) -> np.ndarray:
    """Per-row NMSE for stacks of flattened profiles, shape (n, ...)."""
    t = _values(truth).reshape(len(truth), -1)
    e = _values(est).reshape(len(est), -1)
    if t.shape != e.shape:
        raise InvalidArgument(f"profile shapes differ: {t.shape} vs {e.shape}")
    return np.sum((t - e) ** 2, axis=1) / np.sum(t * t, axis=1)
