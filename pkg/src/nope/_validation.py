"""Input checks for complex-valued arrays.

scikit-learn's ``check_array`` rejects complex dtypes, so the estimators
use these instead.
"""

from __future__ import annotations

import numpy as np
from sklearn.exceptions import NotFittedError

__all__ = ["check_channel", "check_received", "check_is_fitted"]


def _as_complex(a, name: str) -> np.ndarray:
    try:
        arr = np.asarray(a, dtype=complex)
    except (TypeError, ValueError):
        raise TypeError(f"{name} must be numeric") from None
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains NaN or infinity")
    return arr


def check_channel(H) -> np.ndarray:
    """Finite complex ``(B, U)`` matrix with ``U <= B``."""
    H = _as_complex(np.asarray(H), "H")
    if H.ndim != 2:
        raise ValueError(f"H must be 2-D, got shape {H.shape}")
    B, U = H.shape
    if U == 0 or B == 0:
        raise ValueError("H must be non-empty")
    if U > B:
        raise ValueError(f"overloaded system rejected: U={U} > B={B}")
    return H


def check_received(Y, B: int) -> tuple[np.ndarray, bool]:
    """``(n_samples, B)`` complex array; a single length-``B`` vector is promoted.

    Returns the array and whether the input was a single vector.
    """
    Y = _as_complex(Y, "Y")
    single = Y.ndim == 1
    if single:
        Y = Y[None, :]
    if Y.ndim != 2 or Y.shape[1] != B:
        raise ValueError(f"expected received vectors of length {B}, got shape {Y.shape}")
    return Y, single


def check_is_fitted(est, attr: str = "H_") -> None:
    if not hasattr(est, attr):
        raise NotFittedError(f"{type(est).__name__} is not fitted; call fit(H) first")
