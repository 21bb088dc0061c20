"""Input validation shared by the estimators."""

from __future__ import annotations

import numpy as np
from sklearn.utils.validation import check_is_fitted

from .exceptions import InvalidFieldError
from .grid import Field, Grid

__all__ = ["check_field", "check_is_fitted", "check_same_grid"]


def check_field(X, grid: Grid | None = None, masked: bool = True) -> Field:
    """Coerce ``X`` to a :class:`Field`, the way ``check_array`` coerces arrays.

    Bare arrays are accepted when ``grid`` is given; exterior values are
    zeroed in that case.
    """
    if isinstance(X, Field):
        if grid is not None and X.grid != grid:
            raise InvalidFieldError("field lives on a different grid than the estimator")
        return X
    if grid is None:
        raise InvalidFieldError("a bare array needs a grid to be interpreted as a field")
    arr = np.asarray(X, dtype=float)
    if arr.shape != grid.shape:
        raise InvalidFieldError(f"expected shape {grid.shape}, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidFieldError("field contains non-finite values")
    return grid.field(arr) if masked else Field(grid, arr, masked=False)


def check_same_grid(u: Field, v: Field) -> None:
    if u.grid != v.grid:
        raise InvalidFieldError("fields live on different grids")
