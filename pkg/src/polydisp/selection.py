"""Nested-model deviance analysis over a sequence of linear predictors."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, replace

from .data import GroupedLongitudinalDataset, ModelSpec
from .model import FitOptions, FitResult, fit
from .stats import LrTestResult, lr_test


@dataclass(frozen=True)
class DevianceRow:
    model: int
    label: str
    compared_with: int | None
    test: LrTestResult | None
    deviance: float
    n_params: int

    @property
    def comparison(self) -> str:
        return "" if self.compared_with is None else f"{self.compared_with} x {self.model}"


@dataclass(frozen=True, eq=False)
class SelectionResult:
    rows: list
    fits: list
    selected: int  # 1-based model number

    @property
    def selected_fit(self) -> FitResult:
        return self.fits[self.selected - 1]

    def deviance_table_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["model", "linear_predictor", "comparison", "df", "deviance", "p_value"])
        for r in self.rows:
            if r.test is None:
                w.writerow([r.model, r.label, "", "", "", ""])
            else:
                w.writerow([r.model, r.label, r.comparison, r.test.df,
                            f"{r.test.deviance_diff:.2f}", f"{r.test.p_value:.2f}"])
        return buf.getvalue()


def _nested_in(small: FitResult, big: FitResult) -> bool:
    return set(small.column_names) <= set(big.column_names) and small.n_params < big.n_params


def select_models(data: GroupedLongitudinalDataset, models, alpha: float = 0.05,
                  options: FitOptions | None = None) -> SelectionResult:
    """Fit a sequence of models and test each against an earlier nested one.

    ``models`` is a sequence of ``(label, ModelSpec)``. Model ``k`` is
    compared with the largest earlier model whose fixed-effect columns it
    contains. Selection starts at model 1 and moves to model ``k`` only
    when that comparison is against the currently selected model and is
    significant at ``alpha``.
    """
    models = list(models)
    if not models:
        raise ValueError("need at least one model")
    fits = [fit(spec, data, options) for _, spec in models]
    rows = [DevianceRow(1, models[0][0], None, None, fits[0].deviance, fits[0].n_params)]
    selected = 1
    for k in range(1, len(models)):
        candidates = [p for p in range(k) if _nested_in(fits[p], fits[k])]
        test, ref = None, None
        if candidates:
            ref = max(candidates, key=lambda p: (fits[p].n_params, p))
            test = lr_test(fits[ref], fits[k])
            if ref + 1 == selected and test.p_value < alpha:
                selected = k + 1
        rows.append(DevianceRow(k + 1, models[k][0], None if ref is None else ref + 1, test,
                                fits[k].deviance, fits[k].n_params))
    return SelectionResult(rows=rows, fits=fits, selected=selected)


def with_reference(models, reference: int):
    return [(label, replace(spec, reference=reference)) for label, spec in models]
