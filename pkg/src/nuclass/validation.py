"""Input checks shared by the estimators and the command line."""
from __future__ import annotations

import numbers

import numpy as np

from .autodiff import ShapeError


def check_image_pairs(X, size=None, dtype=np.float64):
    """Coerce to a finite (N, 2, S, S) array; a single (2, S, S) pair gets a batch axis."""
    X = np.asarray(X, dtype=dtype)
    if X.ndim == 3:
        X = X[None]
    if X.ndim != 4 or X.shape[1] != 2 or X.shape[2] != X.shape[3]:
        raise ShapeError(f"expected image pairs of shape (N, 2, S, S), got {X.shape}")
    if size is not None and X.shape[2] != size:
        raise ShapeError(f"expected {size}x{size} images, got {X.shape[2]}x{X.shape[3]}")
    if X.shape[0] == 0:
        raise ValueError("no samples given")
    if not np.all(np.isfinite(X)):
        raise ValueError("images contain NaN or infinite values")
    return X


def check_labels(y, n_classes, n_samples=None):
    y = np.asarray(y)
    if y.ndim != 1:
        raise ShapeError(f"labels must be 1-D, got shape {y.shape}")
    if n_samples is not None and len(y) != n_samples:
        raise ShapeError(f"{n_samples} samples but {len(y)} labels")
    if not np.issubdtype(y.dtype, np.integer):
        if not np.all(np.equal(np.mod(y, 1), 0)):
            raise ValueError("labels must be integer class indices")
    y = y.astype(np.int64)
    if len(y) and (y.min() < 0 or y.max() >= n_classes):
        raise ValueError(f"labels must lie in [0, {n_classes}), got range [{y.min()}, {y.max()}]")
    return y


def check_fractions(fractions, tol=1e-9):
    f = np.asarray(fractions, dtype=float)
    if f.ndim != 1 or len(f) < 2:
        raise ValueError(f"need at least two split fractions, got {fractions!r}")
    if np.any(~np.isfinite(f)) or np.any(f <= 0):
        raise ValueError(f"split fractions must be positive, got {list(f)}")
    if abs(f.sum() - 1.0) > tol:
        raise ValueError(f"split fractions must sum to 1, got {f.sum():.12g}")
    return f


def check_positive(value, name, integer=False):
    kind = numbers.Integral if integer else numbers.Real
    if isinstance(value, bool) or not isinstance(value, kind) or not value > 0:
        what = "a positive integer" if integer else "positive"
        raise ValueError(f"{name} must be {what}, got {value!r}")
    return value
