"""Grouped longitudinal count data and fixed-effect model specifications."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from itertools import combinations

import numpy as np

from .exceptions import DatasetValidationError
from .validation import check_counts, check_reference

INTERCEPT = "(Intercept)"
TIME_FACTOR = "time"


@dataclass(frozen=True, eq=False)
class GroupedLongitudinalDataset:
    """Counts ``y[i, j, t]`` of category ``j`` in group ``i`` at occasion ``t``.

    Each group holds ``group_size`` individuals, so counts in every
    (unit, time) cell sum to ``group_size``.

    Parameters
    ----------
    counts : ndarray of int, shape (n_units, n_categories, n_times)
    group_size : int, optional
        Inferred from the first cell when omitted and checked against all cells.
    categories, units, times : sequence of str, optional
        Labels; default to ``"1", "2", ...``.
    covariates : dict of str -> ndarray, shape (n_units, n_times)
        Continuous covariates.
    factors : dict of str -> (codes, levels)
        Categorical covariates; ``codes`` is an int array of shape
        (n_units, n_times) indexing into the ``levels`` tuple. The first
        level is the baseline in design expansions. The name ``"time"`` is
        reserved for the occasion factor, which is always available.
    """

    counts: np.ndarray
    group_size: int | None = None
    categories: tuple = ()
    units: tuple = ()
    times: tuple = ()
    covariates: dict = field(default_factory=dict)
    factors: dict = field(default_factory=dict)

    def __post_init__(self):
        counts, m = check_counts(self.counts, self.group_size)
        counts.setflags(write=False)
        n, J, T = counts.shape
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "group_size", m)
        for name, size, attr in (("categories", J, "categories"), ("units", n, "units"),
                                 ("times", T, "times")):
            labels = tuple(str(v) for v in getattr(self, attr)) or tuple(
                str(k + 1) for k in range(size))
            if len(labels) != size:
                raise DatasetValidationError(f"{len(labels)} {name} labels for {size} {name}")
            if len(set(labels)) != size:
                raise DatasetValidationError(f"duplicate {name} labels")
            object.__setattr__(self, attr, labels)
        covs = {}
        for key, arr in self.covariates.items():
            arr = np.array(arr, dtype=float)
            if arr.shape != (n, T):
                raise DatasetValidationError(
                    f"covariate {key!r} has shape {arr.shape}, expected {(n, T)}")
            if not np.all(np.isfinite(arr)):
                raise DatasetValidationError(f"covariate {key!r} has non-finite values")
            arr.setflags(write=False)
            covs[str(key)] = arr
        facs = {}
        for key, (codes, levels) in self.factors.items():
            if key == TIME_FACTOR:
                raise DatasetValidationError("'time' is reserved for the occasion factor")
            codes = np.array(codes, dtype=np.int64)
            levels = tuple(str(v) for v in levels)
            if codes.shape != (n, T):
                raise DatasetValidationError(
                    f"factor {key!r} has shape {codes.shape}, expected {(n, T)}")
            if codes.size and (codes.min() < 0 or codes.max() >= len(levels)):
                raise DatasetValidationError(f"factor {key!r} has codes outside its levels")
            codes.setflags(write=False)
            facs[str(key)] = (codes, levels)
        clash = set(covs) & set(facs)
        if clash:
            raise DatasetValidationError(f"names used as both covariate and factor: {clash}")
        object.__setattr__(self, "covariates", covs)
        object.__setattr__(self, "factors", facs)

    @property
    def n_units(self) -> int:
        return self.counts.shape[0]

    @property
    def n_categories(self) -> int:
        return self.counts.shape[1]

    @property
    def n_times(self) -> int:
        return self.counts.shape[2]

    def factor(self, name: str):
        """Return ``(codes, levels)`` for a factor, including the built-in time factor."""
        if name == TIME_FACTOR:
            codes = np.broadcast_to(np.arange(self.n_times), (self.n_units, self.n_times))
            return codes, self.times
        return self.factors[name]

    def take_units(self, order) -> "GroupedLongitudinalDataset":
        """Dataset restricted to / reordered by the unit indices in ``order``."""
        order = np.asarray(order, dtype=int)
        return replace(
            self,
            counts=self.counts[order],
            units=tuple(self.units[k] for k in order),
            covariates={k: v[order] for k, v in self.covariates.items()},
            factors={k: (c[order], lv) for k, (c, lv) in self.factors.items()},
        )

    def with_counts(self, counts) -> "GroupedLongitudinalDataset":
        return replace(self, counts=np.asarray(counts), group_size=None)


def expand_terms(terms) -> tuple[str, ...]:
    """Expand ``a*b`` shorthand into ``a``, ``b``, ``a:b``; drop duplicates
    and explicit intercepts, keep first-seen order."""
    out: list[str] = []
    for raw in terms:
        for piece in str(raw).replace(" ", "").split("+"):
            if piece in ("", "1", "intercept", INTERCEPT):
                continue
            if "*" in piece:
                parts = piece.split("*")
                expanded = list(parts)
                for size in range(2, len(parts) + 1):
                    expanded += [":".join(c) for c in combinations(parts, size)]
            else:
                expanded = [piece]
            for term in expanded:
                if term not in out:
                    out.append(term)
    return tuple(out)


@dataclass(frozen=True)
class ModelSpec:
    """Mixed generalized-logits model specification.

    Every non-reference category gets its own intercept and a coefficient
    for each expanded fixed-effect column. The random intercept is a single
    Gaussian effect per unit shared across logits and occasions.

    Parameters
    ----------
    terms : tuple of str
        Fixed-effect terms besides the intercept: covariate names, factor
        names, interactions ``"a:b"`` or ``"a*b"``.
    reference : int
        Zero-based index of the reference category.
    random_intercept : bool
        Include the per-unit random intercept.
    sigma2 : float or None
        Fixed random-intercept variance; ``None`` estimates it.
    """

    terms: tuple = ()
    reference: int = 0
    random_intercept: bool = True
    sigma2: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "terms", expand_terms(self.terms))
        if self.sigma2 is not None and not self.sigma2 > 0:
            raise ValueError("fixed sigma2 must be positive")

    def column_names(self, data: GroupedLongitudinalDataset) -> list[str]:
        return design_matrix(self, data)[1]

    def n_params(self, data: GroupedLongitudinalDataset) -> int:
        return (data.n_categories - 1) * len(self.column_names(data))


def _term_columns(term: str, data: GroupedLongitudinalDataset):
    if ":" in term:
        cols, names = [np.ones((data.n_units, data.n_times))], [""]
        for part in term.split(":"):
            pc, pn = _term_columns(part, data)
            cols = [a * b for a in cols for b in pc]
            names = [f"{a}:{b}" if a else b for a in names for b in pn]
        return cols, names
    if term in data.covariates:
        return [data.covariates[term]], [term]
    if term == TIME_FACTOR or term in data.factors:
        codes, levels = data.factor(term)
        return ([(codes == k).astype(float) for k in range(1, len(levels))],
                [f"{term}[{lv}]" for lv in levels[1:]])
    raise KeyError(f"unknown term {term!r}; dataset has covariates "
                   f"{sorted(data.covariates)} and factors {sorted(data.factors) + [TIME_FACTOR]}")


def design_matrix(spec: ModelSpec, data: GroupedLongitudinalDataset):
    """Fixed-effect design ``X[i, t, k]`` shared by every logit, with column names.

    Column 0 is always the intercept; factors use treatment contrasts
    against their first level.
    """
    cols = [np.ones((data.n_units, data.n_times))]
    names = [INTERCEPT]
    for term in spec.terms:
        tc, tn = _term_columns(term, data)
        cols += tc
        names += tn
    return np.stack(cols, axis=-1), names


def parameter_names(spec: ModelSpec, data: GroupedLongitudinalDataset) -> list[str]:
    """Names of the fixed effects in logit-major order, e.g. ``"eating:(Intercept)"``."""
    check_reference(spec.reference, data.n_categories)
    cols = spec.column_names(data)
    return [f"{cat}:{c}" for j, cat in enumerate(data.categories)
            if j != spec.reference for c in cols]
