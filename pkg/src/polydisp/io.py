"""Long-format CSV datasets, report writers, manifests and study configs."""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml

from .data import GroupedLongitudinalDataset
from .exceptions import DatasetValidationError
from .model import FitResult

BASE_COLUMNS = ("unit", "time", "category", "count")


@dataclass(frozen=True)
class DatasetSchema:
    """How to interpret a long-format dataset file.

    Parameters
    ----------
    categories : tuple of str, optional
        Category order; defaults to sorted labels found in the file.
    group_size : int, optional
        Declared group size; inferred (and checked for consistency) if absent.
    factors : tuple of str
        Covariate columns to treat as factors. Columns whose values do not
        all parse as numbers are treated as factors regardless.
    """

    categories: tuple = ()
    group_size: int | None = None
    factors: tuple = ()


def _natural_order(labels):
    labels = list(dict.fromkeys(labels))
    try:
        return sorted(labels, key=float)
    except ValueError:
        return labels


def _parse_count(raw, line):
    try:
        value = float(raw)
    except ValueError:
        raise DatasetValidationError(f"line {line}: count {raw!r} is not a number") from None
    if value != int(value):
        raise DatasetValidationError(f"line {line}: count {raw!r} is not an integer")
    return int(value)


def read_dataset(path, schema: DatasetSchema | None = None) -> GroupedLongitudinalDataset:
    """Read a long-format CSV with header ``unit,time,category,count[,covariate...]``.

    Every (unit, time) pair must list every category once, zero counts
    included, and all pairs must share one group size. Covariate values
    must be constant within a (unit, time) pair.
    """
    schema = schema or DatasetSchema()
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DatasetValidationError(f"{path}: empty file") from None
        if tuple(header[:4]) != BASE_COLUMNS:
            raise DatasetValidationError(
                f"{path}: header must start with {','.join(BASE_COLUMNS)}, got {','.join(header)}")
        cov_names = header[4:]
        rows = []
        for line, rec in enumerate(reader, start=2):
            if not rec or all(not f.strip() for f in rec):
                continue
            if len(rec) != len(header):
                raise DatasetValidationError(
                    f"line {line}: expected {len(header)} fields, got {len(rec)}")
            rows.append((line, [f.strip() for f in rec]))
    if not rows:
        raise DatasetValidationError(f"{path}: no data rows")

    units = list(dict.fromkeys(r[0] for _, r in rows))
    times = _natural_order(r[1] for _, r in rows)
    found = {r[2] for _, r in rows}
    categories = list(schema.categories) or sorted(found)
    unknown = found - set(categories)
    if unknown:
        raise DatasetValidationError(f"categories {sorted(unknown)} not in the declared schema")
    ui = {u: k for k, u in enumerate(units)}
    ti = {t: k for k, t in enumerate(times)}
    ci = {c: k for k, c in enumerate(categories)}

    counts = np.full((len(units), len(categories), len(times)), -1, dtype=np.int64)
    cov_raw = {c: np.full((len(units), len(times)), None, dtype=object) for c in cov_names}
    for line, rec in rows:
        i, t, j = ui[rec[0]], ti[rec[1]], ci[rec[2]]
        if counts[i, j, t] != -1:
            raise DatasetValidationError(
                f"line {line}: duplicate row for unit {rec[0]}, time {rec[1]}, category {rec[2]}")
        counts[i, j, t] = _parse_count(rec[3], line)
        for name, val in zip(cov_names, rec[4:]):
            prev = cov_raw[name][i, t]
            if prev is not None and prev != val:
                raise DatasetValidationError(
                    f"line {line}: covariate {name!r} differs within unit {rec[0]}, time {rec[1]}")
            cov_raw[name][i, t] = val

    missing = np.argwhere(counts < 0)
    if missing.size:
        i, j, t = missing[0]
        raise DatasetValidationError(
            f"unit {units[i]}, time {times[t]}: missing row for category {categories[j]}")
    totals = counts.sum(axis=1)
    m = schema.group_size if schema.group_size is not None else int(totals.flat[0])
    bad = np.argwhere(totals != m)
    if bad.size:
        i, t = bad[0]
        raise DatasetValidationError(
            f"unit {units[i]}, time {times[t]}: counts sum to {totals[i, t]}, expected group size {m}")

    covariates, factors = {}, {}
    for name in cov_names:
        vals = cov_raw[name]
        numeric = None
        if name not in schema.factors:
            try:
                numeric = np.vectorize(float, otypes=[float])(vals)
            except ValueError:
                numeric = None
        if numeric is not None:
            covariates[name] = numeric
        else:
            levels = _natural_order(vals.ravel().tolist())
            lookup = {lv: k for k, lv in enumerate(levels)}
            factors[name] = (np.vectorize(lookup.__getitem__, otypes=[np.int64])(vals), levels)
    return GroupedLongitudinalDataset(
        counts=counts, group_size=m, categories=tuple(categories), units=tuple(units),
        times=tuple(times), covariates=covariates, factors=factors)


def write_dataset(data: GroupedLongitudinalDataset, path) -> None:
    """Write ``data`` in canonical long format: units, then times, then categories."""
    cov_names = list(data.covariates) + list(data.factors)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(BASE_COLUMNS) + cov_names)
        for i, unit in enumerate(data.units):
            for t, tm in enumerate(data.times):
                extra = [repr(float(data.covariates[c][i, t])) for c in data.covariates]
                extra += [lv[codes[i, t]] for codes, lv in data.factors.values()]
                for j, cat in enumerate(data.categories):
                    w.writerow([unit, tm, cat, int(data.counts[i, j, t])] + extra)


def write_fitted_probs(fit: FitResult, data: GroupedLongitudinalDataset, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["unit", "time", "category", "prob"])
        for i, unit in enumerate(data.units):
            for t, tm in enumerate(data.times):
                for j, cat in enumerate(data.categories):
                    w.writerow([unit, tm, cat, repr(float(fit.fitted_probs[i, j, t]))])


def read_fitted_probs(path, data: GroupedLongitudinalDataset) -> np.ndarray:
    """Fitted probabilities aligned to ``data``'s (unit, category, time) layout."""
    ui = {u: k for k, u in enumerate(data.units)}
    ti = {t: k for k, t in enumerate(data.times)}
    ci = {c: k for k, c in enumerate(data.categories)}
    probs = np.full(data.counts.shape, np.nan)
    with open(path, newline="", encoding="utf-8") as fh:
        for line, rec in enumerate(csv.DictReader(fh), start=2):
            try:
                probs[ui[rec["unit"]], ci[rec["category"]], ti[rec["time"]]] = float(rec["prob"])
            except KeyError as exc:
                raise DatasetValidationError(f"{path} line {line}: unknown label {exc}") from None
    if np.isnan(probs).any():
        raise DatasetValidationError(f"{path}: fitted probabilities missing for some cells")
    if np.any(np.abs(probs.sum(axis=1) - 1.0) > 1e-8):
        raise DatasetValidationError(f"{path}: fitted probabilities do not sum to 1")
    return probs


def fit_report_text(fit: FitResult) -> str:
    lines = [
        f"converged = {str(fit.converged).lower()}",
        f"message = {fit.message}",
        f"iterations = {fit.iterations}",
        f"newton_steps = {fit.newton_steps}",
        f"gradient_norm = {fit.gradient_norm!r}",
        f"reference_category = {fit.categories[fit.spec.reference]}",
        f"terms = {','.join(fit.spec.terms)}",
        f"sigma2 = {fit.sigma2_hat!r}",
        f"loglik = {fit.loglik!r}",
        f"penalized_loglik = {fit.penalized_loglik!r}",
        f"deviance = {fit.deviance!r}",
        f"n_params = {fit.n_params}",
    ]
    for name, est, se in fit.summary_table():
        lines.append(f"beta[{name}] = {est!r}")
        lines.append(f"se[{name}] = {se!r}")
    return "\n".join(lines) + "\n"


def write_estimates(fit: FitResult, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["parameter", "estimate", "std_error"])
        for name, est, se in fit.summary_table():
            w.writerow([name, repr(est), repr(se)])


def config_hash(config) -> str:
    blob = json.dumps(config, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()


def write_manifest(path, entries: dict) -> None:
    """Key-value manifest, one ``key = value`` per line in insertion order."""
    with open(path, "w", encoding="utf-8") as fh:
        for key, value in entries.items():
            if isinstance(value, (dict, list, tuple)):
                value = json.dumps(value, sort_keys=True, default=str)
            fh.write(f"{key} = {value}\n")


def read_manifest(path) -> dict:
    out = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if "=" in line:
                key, value = line.split("=", 1)
                out[key.strip()] = value.strip()
    return out


def load_config(path) -> dict:
    """Load a YAML config; an empty file gives an empty dict."""
    with open(path, encoding="utf-8") as fh:
        try:
            cfg = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise ValueError(f"{path}: malformed config: {str(exc).splitlines()[0]}") from None
    if cfg is None:
        return {}
    if not isinstance(cfg, dict):
        raise ValueError(f"{path}: config must be a mapping at top level")
    return cfg


def write_text(path, text: str) -> None:
    Path(path).write_text(text, encoding="utf-8")
