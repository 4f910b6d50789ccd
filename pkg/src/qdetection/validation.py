"""Input checks shared by the estimator wrappers."""

from __future__ import annotations

import numpy as np
from sklearn.utils import check_random_state
from sklearn.utils.validation import check_array, check_X_y

__all__ = ["check_unit_features", "check_labeled", "check_flags", "check_losses", "seed_from"]


def check_unit_features(X) -> np.ndarray:
    X = check_array(X, dtype=np.float64)
    if np.any(X < 0.0) or np.any(X > 1.0):
        raise ValueError("features must lie in [0, 1]; rescale before fitting")
    return X


def check_labeled(X, y) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Validated features, dense integer labels and the original class values."""
    X, y = check_X_y(X, y, dtype=np.float64)
    check_unit_features(X)
    classes, dense = np.unique(y, return_inverse=True)
    if len(classes) < 2:
        raise ValueError("need at least two classes")
    return X, dense.astype(np.int64), classes


def check_flags(flags, n: int) -> np.ndarray | None:
    if flags is None:
        return None
    flags = np.asarray(flags)
    if flags.shape != (n,):
        raise ValueError(f"poison_flags must have shape ({n},), got {flags.shape}")
    if not np.isin(flags, (0, 1)).all():
        raise ValueError("poison_flags must be boolean")
    return flags.astype(bool)


def check_losses(losses) -> np.ndarray:
    losses = check_array(np.asarray(losses, dtype=np.float64).reshape(-1, 1),
                         dtype=np.float64).ravel()
    if np.any(losses < 0.0) or np.any(losses > 1.0):
        raise ValueError("normalised losses must lie in [0, 1]")
    return losses


def seed_from(random_state) -> int:
    """Turn an sklearn-style ``random_state`` into a plain integer seed."""
    if isinstance(random_state, (int, np.integer)):
        return int(random_state)
    return int(check_random_state(random_state).randint(0, 2**31 - 1))
