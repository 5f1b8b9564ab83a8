"""Input validation helpers shared by the estimators and builders."""

from __future__ import annotations

import numpy as np


class ValidationError(ValueError):
    """Raised when an input violates a documented invariant.

    ``path`` names the offending field (``"battery.soc_min"``) when known.
    """

    def __init__(self, message: str, path: str | None = None):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


def check_series(values, length: int, name: str, nonneg: bool = True) -> np.ndarray:
    """Return ``values`` as a float array of exactly ``length`` entries."""
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 1:
        raise ValidationError(f"expected a 1-D series, got shape {arr.shape}", name)
    if arr.shape[0] != length:
        raise ValidationError(f"expected length {length}, got {arr.shape[0]}", name)
    if not np.all(np.isfinite(arr)):
        raise ValidationError("series contains non-finite values", name)
    if nonneg and np.any(arr < 0):
        idx = int(np.argmax(arr < 0))
        raise ValidationError(f"negative value {arr[idx]:g} at slot {idx + 1}", name)
    return arr


def expand_price(price, grid, name: str) -> np.ndarray:
    """Broadcast a scalar, a daily profile or a full-horizon series to length T."""
    arr = np.asarray(price, dtype=float)
    if arr.ndim == 0:
        out = np.full(grid.T, float(arr))
    elif arr.shape[0] == grid.T:
        out = arr.copy()
    elif arr.shape[0] == grid.slots_per_day:
        out = np.tile(arr, grid.days)
    else:
        raise ValidationError(
            f"price series must be scalar, length {grid.slots_per_day} or {grid.T}; "
            f"got length {arr.shape[0]}",
            name,
        )
    if np.any(out <= 0):
        raise ValidationError("prices must be positive", name)
    return out

