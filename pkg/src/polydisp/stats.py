"""Chi-square tails, likelihood-ratio tests for nested fits, and the
Shapiro-Wilk normality test."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import gammaincc, ndtri
from scipy.stats import norm

from .exceptions import NestingError, OptimizerFailureError
from .model import FitResult

DEVIANCE_SLACK = 1e-6


def chisq_sf(x: float, df: int) -> float:
    """Upper tail ``P(X > x)`` of a chi-square variable with ``df`` degrees of
    freedom, via the regularized upper incomplete gamma function."""
    x = float(x)
    if not x >= 0:
        raise ValueError(f"chi-square statistic must be non-negative, got {x}")
    if df <= 0:
        raise ValueError(f"degrees of freedom must be positive, got {df}")
    if x == 0:
        return 1.0
    return float(gammaincc(df / 2.0, x / 2.0))


@dataclass(frozen=True)
class LrTestResult:
    deviance_diff: float
    df: int
    p_value: float


def lr_test(nested: FitResult, full: FitResult) -> LrTestResult:
    """Deviance test of ``nested`` against the larger model ``full``.

    Both fits must come from the same data, reference category and
    random-effect structure, with the nested fixed-effect columns a subset
    of the full ones. Deviance differences down to ``-1e-6`` are treated
    as optimizer noise and clamped to zero.
    """
    if nested.fitted_probs.shape != full.fitted_probs.shape or \
            nested.categories != full.categories or \
            nested.data_fingerprint != full.data_fingerprint:
        raise NestingError("fits were computed on different data")
    if nested.spec.reference != full.spec.reference:
        raise NestingError("fits use different reference categories")
    if nested.spec.random_intercept != full.spec.random_intercept:
        raise NestingError("fits use different random-effect structures")
    missing = [c for c in nested.column_names if c not in full.column_names]
    if missing:
        raise NestingError(f"columns {missing} of the smaller model are absent from the larger")
    df = full.n_params - nested.n_params
    diff = nested.deviance - full.deviance
    if diff < -DEVIANCE_SLACK:
        raise OptimizerFailureError(
            f"larger model has deviance {-diff:.6g} above the nested one")
    diff = max(diff, 0.0)
    p = 1.0 if df == 0 else chisq_sf(diff, df)
    return LrTestResult(deviance_diff=diff, df=df, p_value=p)


@dataclass(frozen=True)
class ShapiroResult:
    statistic: float
    p_value: float

    def __iter__(self):
        return iter((self.statistic, self.p_value))


_C1 = (0.0, 0.221157, -0.147981, -2.07119, 4.434685, -2.706056)
_C2 = (0.0, 0.042981, -0.293762, -1.752461, 5.682633, -3.582633)
_C3 = (0.544, -0.39978, 0.025054, -6.714e-4)
_C4 = (1.3822, -0.77857, 0.062767, -0.0020322)
_C5 = (-1.5861, -0.31082, -0.083751, 0.0038915)
_C6 = (-0.4803, -0.082676, 0.0030302)
_G = (-2.273, 0.459)


def _poly(coef, x):
    # coefficients in increasing degree
    return np.polynomial.polynomial.polyval(x, coef)


def _sw_coefficients(n: int) -> np.ndarray:
    """Antisymmetric Shapiro-Wilk weights for sorted samples (Royston 1992 approximation)."""
    half = n // 2
    if n == 3:
        upper = np.array([np.sqrt(0.5)])
    else:
        i = np.arange(1, half + 1)
        mk = -ndtri((i - 0.375) / (n + 0.25))  # expected extremes, positive
        summ2 = 2.0 * np.sum(mk ** 2)
        ssumm2 = np.sqrt(summ2)
        rsn = 1.0 / np.sqrt(n)
        a1 = _poly(_C1, rsn) + mk[0] / ssumm2
        upper = mk.copy()
        if n > 5:
            a2 = mk[1] / ssumm2 + _poly(_C2, rsn)
            fac = np.sqrt((summ2 - 2 * mk[0] ** 2 - 2 * mk[1] ** 2)
                          / (1 - 2 * a1 ** 2 - 2 * a2 ** 2))
            upper[2:] = mk[2:] / fac
            upper[1] = a2
        else:
            fac = np.sqrt((summ2 - 2 * mk[0] ** 2) / (1 - 2 * a1 ** 2))
            upper[1:] = mk[1:] / fac
        upper[0] = a1
    a = np.zeros(n)
    a[:half] = -upper
    a[n - half:] = upper[::-1]
    return a


def shapiro_wilk(samples) -> ShapiroResult:
    """Shapiro-Wilk W statistic and p-value for 3 <= n <= 5000.

    Weights and the null distribution of ``log(1 - W)`` follow Royston's
    polynomial approximations; for n = 3 the p-value is exact.

    Raises
    ------
    ValueError
        For sample sizes outside [3, 5000] or a constant sample.
    """
    x = np.sort(np.asarray(samples, dtype=float).ravel())
    n = x.size
    if not 3 <= n <= 5000:
        raise ValueError(f"Shapiro-Wilk needs 3 <= n <= 5000, got {n}")
    if not np.all(np.isfinite(x)):
        raise ValueError("samples contain non-finite values")
    if x[-1] - x[0] <= 1e-19 * max(1.0, abs(x[0])):
        raise ValueError("Shapiro-Wilk is undefined for a constant sample")
    a = _sw_coefficients(n)
    xc = (x - x.mean()) / (x[-1] - x[0])
    w = float(np.dot(a, xc) ** 2 / np.dot(xc, xc))
    w = min(w, 1.0)
    if n == 3:
        p = 6.0 / np.pi * (np.arcsin(np.sqrt(w)) - np.pi / 3.0)
        return ShapiroResult(w, float(min(max(p, 0.0), 1.0)))
    w1 = 1.0 - w
    if w1 <= 0:
        return ShapiroResult(w, 1.0)
    y = np.log(w1)
    if n <= 11:
        gamma = _poly(_G, n)
        if y >= gamma:
            return ShapiroResult(w, 1e-99)
        y = -np.log(gamma - y)
        mean = _poly(_C3, n)
        sd = np.exp(_poly(_C4, n))
    else:
        ln = np.log(n)
        mean = _poly(_C5, ln)
        sd = np.exp(_poly(_C6, ln))
    return ShapiroResult(w, float(norm.sf(y, loc=mean, scale=sd)))
