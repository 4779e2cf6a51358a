"""Longitudinal multinomial dispersion index.

For each category ``j`` and occasion ``t`` the index compares the sample
variance of the counts across units with the multinomial variance implied
by the fitted model, ``m * pbar_jt * (1 - pbar_jt)``, where ``pbar_jt`` is
the unit-averaged fitted probability. The ratios are averaged over
categories, then over occasions, and divided by the group size.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .data import GroupedLongitudinalDataset
from .exceptions import DegenerateDataError, NotConvergedError
from .model import FitResult

EXPECTED_VARIANCE_MIN = 1e-12


@dataclass(frozen=True, eq=False)
class DispersionReport:
    """Observed and expected variances and the aggregated dispersion indices.

    Arrays are indexed (category, time).
    """

    observed_var: np.ndarray
    expected_var: np.ndarray
    lambda_jt: np.ndarray
    lambda_t: np.ndarray
    lambda_m: float
    lambda_longitudinal: float
    group_size: int
    categories: tuple = ()
    times: tuple = ()

    def as_dict(self) -> dict:
        """Flat key-value view, one key per cell plus the aggregates."""
        out = {"group_size": self.group_size}
        for j, cat in enumerate(self.categories):
            for t, tm in enumerate(self.times):
                out[f"observed_var[{cat},{tm}]"] = float(self.observed_var[j, t])
                out[f"expected_var[{cat},{tm}]"] = float(self.expected_var[j, t])
                out[f"lambda[{cat},{tm}]"] = float(self.lambda_jt[j, t])
        for t, tm in enumerate(self.times):
            out[f"lambda_t[{tm}]"] = float(self.lambda_t[t])
        out["lambda_m"] = self.lambda_m
        out["lambda_longitudinal"] = self.lambda_longitudinal
        return out

    def to_text(self) -> str:
        return "".join(f"{k} = {_fmt(v)}\n" for k, v in self.as_dict().items())

    def to_csv(self) -> str:
        """CSV with one row per (category, time) and aggregate rows.

        Aggregate rows leave the cell-specific columns empty: ``time`` rows
        carry the per-occasion index, and the ``lambda_m`` and
        ``lambda_longitudinal`` rows the overall values.
        """
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["level", "category", "time", "observed_var", "expected_var", "lambda"])
        for j, cat in enumerate(self.categories):
            for t, tm in enumerate(self.times):
                w.writerow(["cell", cat, tm, _fmt(self.observed_var[j, t]),
                            _fmt(self.expected_var[j, t]), _fmt(self.lambda_jt[j, t])])
        for t, tm in enumerate(self.times):
            w.writerow(["time", "", tm, "", "", _fmt(self.lambda_t[t])])
        w.writerow(["lambda_m", "", "", "", "", _fmt(self.lambda_m)])
        w.writerow(["lambda_longitudinal", "", "", "", "", _fmt(self.lambda_longitudinal)])
        return buf.getvalue()


def _fmt(v) -> str:
    return repr(float(v)) if not isinstance(v, (int, np.integer)) else str(v)


def observed_variance(data: GroupedLongitudinalDataset, j: int | None = None,
                      t: int | None = None):
    """Sample variance (divisor ``n - 1``) of the counts across units.

    With ``j`` and ``t`` given returns a float, otherwise the full
    (category, time) array.
    """
    if data.n_units < 2:
        raise ValueError("observed variance needs at least two units")
    var = np.var(data.counts.astype(float), axis=0, ddof=1)
    if j is None and t is None:
        return var
    return float(var[j, t])


def _probs_from(fitted) -> np.ndarray:
    if isinstance(fitted, FitResult):
        if not fitted.converged:
            raise NotConvergedError(f"fit did not converge: {fitted.message}")
        return fitted.fitted_probs
    return np.asarray(fitted, dtype=float)


def expected_variance(fitted, group_size: int, j: int | None = None, t: int | None = None):
    """Model variance ``m * pbar * (1 - pbar)`` with ``pbar`` the mean fitted
    probability over units.

    ``fitted`` is a :class:`FitResult` (must be converged) or an array of
    fitted probabilities indexed (unit, category, time).
    """
    pbar = _probs_from(fitted).mean(axis=0)
    var = group_size * pbar * (1.0 - pbar)
    var = np.maximum(var, 0.0)
    if j is None and t is None:
        return var
    return float(var[j, t])


def dispersion_index(data: GroupedLongitudinalDataset, fitted) -> DispersionReport:
    """Dispersion report for ``data`` against a fit (or fitted probabilities).

    All categories, the reference included, enter the per-occasion average.

    Raises
    ------
    DegenerateDataError
        If some cell's expected variance is below 1e-12.
    """
    probs = _probs_from(fitted)
    if probs.shape != data.counts.shape:
        raise ValueError(f"fitted probabilities of shape {probs.shape} do not match "
                         f"counts of shape {data.counts.shape}")
    m = data.group_size
    v_obs = observed_variance(data)
    v_exp = expected_variance(probs, m)
    bad = np.argwhere(v_exp < EXPECTED_VARIANCE_MIN)
    if bad.size:
        j, t = bad[0]
        raise DegenerateDataError(
            f"expected variance {v_exp[j, t]:.3g} for category {data.categories[j]!r} "
            f"at time {data.times[t]!r} is too small for a variance ratio")
    lam = v_obs / v_exp
    lam_t = lam.mean(axis=0)
    lam_m = float(lam_t.mean())
    for arr in (v_obs, v_exp, lam, lam_t):
        arr.setflags(write=False)
    return DispersionReport(
        observed_var=v_obs,
        expected_var=v_exp,
        lambda_jt=lam,
        lambda_t=lam_t,
        lambda_m=lam_m,
        lambda_longitudinal=lam_m / m,
        group_size=m,
        categories=data.categories,
        times=data.times,
    )
