"""Input validation helpers shared by the estimators and the functional API."""

from __future__ import annotations

import numpy as np
from sklearn.utils.validation import check_array

from .exceptions import DatasetValidationError

SIMPLEX_TOL = 1e-12


def check_simplex(p, tol: float = SIMPLEX_TOL) -> np.ndarray:
    """Return ``p`` as a float array after checking it lies on the simplex
    along its last axis."""
    p = np.asarray(p, dtype=float)
    if p.ndim == 0 or p.shape[-1] == 0:
        raise ValueError("probability vector must have at least one entry")
    if not np.all(np.isfinite(p)):
        raise ValueError("probabilities must be finite")
    if np.any(p < 0) or np.any(p > 1):
        raise ValueError("probabilities must lie in [0, 1]")
    if np.any(np.abs(p.sum(axis=-1) - 1.0) > max(tol, 1e-12 * p.shape[-1])):
        raise ValueError("probabilities must sum to 1")
    return p


def check_counts(counts, group_size: int | None = None) -> tuple[np.ndarray, int]:
    """Validate a (n_units, n_categories, n_times) count array.

    Every (unit, time) column must sum to the same group size. Returns the
    counts as int64 and the group size.
    """
    arr = np.asarray(counts)
    if arr.ndim != 3:
        raise DatasetValidationError(
            f"counts must be indexed (unit, category, time); got {arr.ndim} dimensions"
        )
    if arr.size == 0:
        raise DatasetValidationError("counts array is empty")
    if arr.dtype.kind == "f":
        if not np.all(np.isfinite(arr)) or np.any(arr != np.round(arr)):
            raise DatasetValidationError("counts must be integers")
    elif arr.dtype.kind not in "iu":
        raise DatasetValidationError(f"counts must be integers, got dtype {arr.dtype}")
    arr = arr.astype(np.int64)
    if np.any(arr < 0):
        raise DatasetValidationError("counts must be non-negative")
    totals = arr.sum(axis=1)
    if group_size is None:
        group_size = int(totals.flat[0])
    bad = np.argwhere(totals != group_size)
    if bad.size:
        i, t = bad[0]
        raise DatasetValidationError(
            f"unit index {i}, time index {t}: counts sum to {totals[i, t]}, "
            f"expected group size {group_size}"
        )
    if group_size < 1:
        raise DatasetValidationError("group size must be positive")
    return arr, int(group_size)


def check_reference(reference: int, n_categories: int) -> int:
    reference = int(reference)
    if not 0 <= reference < n_categories:
        raise ValueError(
            f"reference category {reference} outside 0..{n_categories - 1}"
        )
    return reference


def check_positive(value, name: str) -> float:
    value = float(value)
    if not np.isfinite(value) or value <= 0:
        raise ValueError(f"{name} must be positive and finite, got {value}")
    return value


def check_grouped_panel(X, Y, groups, times=None):
    """Reshape row-wise (group, occasion) observations into panel arrays.

    Returns ``X`` as (n_units, n_times, n_features), counts as
    (n_units, n_categories, n_times), and the group and occasion labels in
    first-appearance order.
    """
    X = check_array(X, dtype=float)
    Y = np.asarray(Y)
    groups = np.asarray(groups)
    n_rows = X.shape[0]
    if Y.ndim == 1:
        if Y.dtype.kind == "f" and np.any(Y != np.round(Y)):
            raise ValueError("class labels must be integers")
        labels = Y.astype(np.int64)
        if labels.min() < 0:
            raise ValueError("class labels must be non-negative")
        Y = np.eye(int(labels.max()) + 1, dtype=np.int64)[labels]
    if Y.ndim != 2 or Y.shape[0] != n_rows:
        raise ValueError(f"Y must have {n_rows} rows of category counts")
    if groups.shape != (n_rows,):
        raise ValueError(f"groups must have shape ({n_rows},)")
    group_labels = tuple(dict.fromkeys(groups.tolist()))
    gi = {g: k for k, g in enumerate(group_labels)}
    g_idx = np.array([gi[g] for g in groups.tolist()])
    if times is None:
        t_idx = np.zeros(n_rows, dtype=int)
        seen = np.zeros(len(group_labels), dtype=int)
        for r, g in enumerate(g_idx):
            t_idx[r] = seen[g]
            seen[g] += 1
        time_labels = tuple(str(t + 1) for t in range(int(seen.max())))
    else:
        times = np.asarray(times)
        if times.shape != (n_rows,):
            raise ValueError(f"times must have shape ({n_rows},)")
        time_labels = tuple(dict.fromkeys(times.tolist()))
        ti = {t: k for k, t in enumerate(time_labels)}
        t_idx = np.array([ti[t] for t in times.tolist()])
    n, T = len(group_labels), len(time_labels)
    filled = np.zeros((n, T), dtype=int)
    np.add.at(filled, (g_idx, t_idx), 1)
    if np.any(filled != 1):
        raise DatasetValidationError(
            "rows must form a complete panel with exactly one row per (group, occasion)")
    Xp = np.empty((n, T, X.shape[1]))
    Xp[g_idx, t_idx] = X
    counts = np.empty((n, Y.shape[1], T), dtype=Y.dtype)
    counts[g_idx, :, t_idx] = Y
    return Xp, counts, tuple(str(g) for g in group_labels), tuple(str(t) for t in time_labels)
