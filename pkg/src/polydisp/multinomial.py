"""Multinomial probability mass, moments, sampling and the generalized-logit
softmax used throughout the package."""

from __future__ import annotations

import numpy as np
from scipy.special import gammaln

from .validation import check_simplex

__all__ = [
    "multinomial_pmf",
    "multinomial_logpmf",
    "multinomial_moments",
    "multinomial_sample",
    "softmax_probs",
]


def multinomial_logpmf(y, p) -> float:
    """Log probability of the count vector ``y`` under Multinomial(sum(y), p).

    Returns ``-inf`` when a category with zero probability has a positive
    count.
    """
    y = np.asarray(y)
    p = check_simplex(p)
    if y.ndim != 1 or y.shape != p.shape:
        raise ValueError(
            f"count vector of shape {y.shape} does not match probabilities "
            f"of shape {p.shape}"
        )
    if np.any(y < 0) or not np.all(np.equal(np.mod(y, 1), 0)):
        raise ValueError("counts must be non-negative integers")
    y = y.astype(float)
    n = y.sum()
    if np.any((p == 0) & (y > 0)):
        return -np.inf
    pos = y > 0
    return float(
        gammaln(n + 1) - gammaln(y + 1).sum() + np.sum(y[pos] * np.log(p[pos]))
    )


def multinomial_pmf(y, p) -> float:
    """Probability ``n! / prod(y_j!) * prod(p_j ** y_j)``, evaluated in log space.

    Parameters
    ----------
    y : array-like of int, shape (J,)
        Category counts; their sum is the number of trials.
    p : array-like of float, shape (J,)
        Category probabilities.

    Examples
    --------
    >>> round(multinomial_pmf([1, 2, 2], [0.2, 0.3, 0.5]), 12)
    0.135
    """
    return float(np.exp(multinomial_logpmf(y, p)))


def multinomial_moments(total: int, p) -> tuple[np.ndarray, np.ndarray]:
    """Mean vector and covariance matrix of Multinomial(total, p)."""
    p = check_simplex(p)
    if total < 0:
        raise ValueError("total must be non-negative")
    mean = total * p
    cov = -total * np.outer(p, p)
    np.fill_diagonal(cov, total * p * (1.0 - p))
    return mean, cov


def multinomial_sample(total, p, rng: np.random.Generator) -> np.ndarray:
    """Draw multinomial counts by sequential conditional binomials.

    ``total`` may be a scalar or an integer array of shape ``S``; ``p`` is
    then either a single simplex of shape (J,) or a stack of shape ``S + (J,)``.
    One binomial draw per category per cell, in category order, so the
    result is a deterministic function of the generator state.

    Returns
    -------
    counts : ndarray of int64, shape ``S + (J,)``
    """
    p = np.asarray(p, dtype=float)
    total = np.asarray(total, dtype=np.int64)
    if np.any(total < 0):
        raise ValueError("total must be non-negative")
    if p.ndim == 1:
        check_simplex(p)
        p = np.broadcast_to(p, total.shape + p.shape)
    else:
        if p.shape[:-1] != total.shape:
            total = np.broadcast_to(total, p.shape[:-1])
        check_simplex(p)
    n_cat = p.shape[-1]
    counts = np.zeros(p.shape, dtype=np.int64)
    remaining = total.copy()
    mass_left = np.ones(p.shape[:-1])
    for j in range(n_cat - 1):
        pj = p[..., j]
        with np.errstate(divide="ignore", invalid="ignore"):
            cond = np.where(mass_left > 0, pj / mass_left, 0.0)
        cond = np.clip(cond, 0.0, 1.0)
        draw = rng.binomial(remaining, cond)
        counts[..., j] = draw
        remaining = remaining - draw
        mass_left = mass_left - pj
    counts[..., n_cat - 1] = remaining
    return counts


def softmax_probs(eta, reference: int = 0) -> np.ndarray:
    """Category probabilities from ``J - 1`` generalized logits.

    ``eta[..., k]`` is the log-odds of the k-th non-reference category
    against the reference category, categories keeping their natural order
    once ``reference`` is removed. Leading axes broadcast.

    Parameters
    ----------
    eta : array-like, shape (..., J - 1)
    reference : int
        Zero-based position of the reference category in the output.

    Returns
    -------
    probs : ndarray, shape (..., J)
    """
    eta = np.asarray(eta, dtype=float)
    if not np.all(np.isfinite(eta)):
        raise ValueError("linear predictor contains non-finite values")
    n_cat = eta.shape[-1] + 1
    if not 0 <= reference < n_cat:
        raise ValueError(f"reference {reference} outside 0..{n_cat - 1}")
    full = np.insert(eta, reference, 0.0, axis=-1)
    full = full - full.max(axis=-1, keepdims=True)
    ex = np.exp(full)
    return ex / ex.sum(axis=-1, keepdims=True)
