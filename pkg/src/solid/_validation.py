"""Input validation helpers shared across the package."""

from __future__ import annotations

import numpy as np
from sklearn.utils import check_array


def check_vector(v, name="vector", n=None):
    """Return ``v`` as a finite 1-D float64 array, optionally of length ``n``."""
    arr = np.asarray(v, dtype=np.float64)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be 1-D, got shape {arr.shape}")
    if n is not None and arr.shape[0] != n:
        raise ValueError(f"{name} has length {arr.shape[0]}, expected {n}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


def check_same_length(*vectors, names=None):
    lengths = {len(v) for v in vectors}
    if len(lengths) > 1:
        labels = names or [f"arg{i}" for i in range(len(vectors))]
        detail = ", ".join(f"{lab}={len(v)}" for lab, v in zip(labels, vectors))
        raise ValueError(f"dimension mismatch: {detail}")


def check_positive(value, name):
    if not value > 0:
        raise ValueError(f"{name} must be > 0, got {value!r}")
    return float(value)


def check_returns(X, min_samples=2):
    """Validate a (T, n) matrix of per-period returns."""
    return check_array(
        X,
        dtype=np.float64,
        ensure_min_samples=min_samples,
        ensure_all_finite=True,
        input_name="returns",
    )


def frozen(arr):
    """Read-only copy of ``arr``."""
    out = np.array(arr, dtype=np.float64, copy=True)
    out.setflags(write=False)
    return out
