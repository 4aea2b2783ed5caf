"""Input validation helpers shared by the estimators."""

from __future__ import annotations

import numpy as np

from .data import N_STAGES


def as_float_matrix(X, n_cols: int | None = None, name: str = "X") -> np.ndarray:
    """Coerce to a 2-D float64 array with all-finite entries."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {X.shape}")
    if n_cols is not None and X.shape[1] != n_cols:
        raise ValueError(f"{name} must have {n_cols} columns, got {X.shape[1]}")
    if not np.all(np.isfinite(X)):
        raise ValueError(f"{name} contains non-finite values")
    return X


def as_unit_matrix(X, n_cols: int | None = None, name: str = "X") -> np.ndarray:
    """A float matrix whose entries all lie in [0, 1] (scaled features)."""
    X = as_float_matrix(X, n_cols, name)
    if X.size and (X.min() < 0.0 or X.max() > 1.0):
        raise ValueError(f"{name} entries must lie in [0, 1]; range is [{X.min()}, {X.max()}]")
    return X


def as_labels(y, n: int | None = None, name: str = "y") -> np.ndarray:
    """Coerce to a 1-D int64 stage-label array with values in {0..4}."""
    y = np.asarray(y)
    if y.ndim != 1:
        raise ValueError(f"{name} must be 1-D, got shape {y.shape}")
    if y.size and not np.issubdtype(y.dtype, np.integer):
        as_int = y.astype(np.int64)
        if not np.array_equal(as_int, y):
            raise ValueError(f"{name} must hold integer stage codes")
        y = as_int
    y = y.astype(np.int64)
    if y.size and (y.min() < 0 or y.max() >= N_STAGES):
        raise ValueError(f"{name} labels must lie in 0..{N_STAGES - 1}")
    if n is not None and len(y) != n:
        raise ValueError(f"{name} has {len(y)} labels for {n} samples")
    return y


def as_window_tensor(X, in_dim: int | None = None, seq_len: int | None = None) -> np.ndarray:
    """Coerce to a 3-D (n_windows, seq_len, in_dim) float64 tensor."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 3:
        raise ValueError(f"windows must be 3-D (n, seq_len, in_dim), got shape {X.shape}")
    if seq_len is not None and X.shape[1] != seq_len:
        raise ValueError(f"windows have seq_len {X.shape[1]}, model expects {seq_len}")
    if in_dim is not None and X.shape[2] != in_dim:
        raise ValueError(f"windows have in_dim {X.shape[2]}, model expects {in_dim}")
    if not np.all(np.isfinite(X)):
        raise ValueError("windows contain non-finite values")
    return X
