"""Synthetic animal-behaviour dataset: 8 pens of 16 pigs, three behaviours
observed on five days under two rearing conditions.

The fixture has the layout of a real pen experiment but no treatment or
day effects, and a small random-intercept variance (a low-overdispersion
regime).
"""

from __future__ import annotations

from importlib import resources

import numpy as np

from .data import GroupedLongitudinalDataset, ModelSpec
from .multinomial import multinomial_sample, softmax_probs

CATEGORIES = ("resting", "eating", "exploring")
DAYS = ("1", "8", "14", "20", "27")
CONDITIONS = ("SE", "CE")  # without / with environmental enrichment
INTERCEPTS = (-1.6361, -0.9162)
FIXTURE_SEED = 20140301
FIXTURE_FILE = "case_study.csv"

MODEL_SEQUENCE = [
    ("Intercept + Random Effect", ModelSpec(terms=())),
    ("Environmental Condition + Random Effect", ModelSpec(terms=("treat",))),
    ("Day + Random Effect", ModelSpec(terms=("time",))),
    ("Environmental Condition + Day + Random Effect", ModelSpec(terms=("treat", "time"))),
    ("Environmental Condition*Day + Random Effect", ModelSpec(terms=("treat*time",))),
]


def simulate_case_study(seed: int = FIXTURE_SEED, sigma2: float = 0.01, n_pens: int = 8,
                        pigs_per_pen: int = 16) -> GroupedLongitudinalDataset:
    """Pens split evenly between conditions; no condition or day effect."""
    rng = np.random.default_rng(seed)
    T = len(DAYS)
    u = rng.normal(0.0, np.sqrt(sigma2), size=n_pens)
    eta = np.broadcast_to(np.asarray(INTERCEPTS), (n_pens, T, 2)) + u[:, None, None]
    counts = multinomial_sample(np.full((n_pens, T), pigs_per_pen), softmax_probs(eta, 0), rng)
    treat = np.repeat((np.arange(n_pens) >= n_pens // 2).astype(int)[:, None], T, axis=1)
    return GroupedLongitudinalDataset(
        counts=np.moveaxis(counts, 2, 1),
        group_size=pigs_per_pen,
        categories=CATEGORIES,
        units=tuple(f"pen{k + 1}" for k in range(n_pens)),
        times=DAYS,
        factors={"treat": (treat, CONDITIONS)},
    )


def fixture_path():
    """Path of the bundled case-study CSV."""
    return resources.files("polydisp").joinpath("data").joinpath(FIXTURE_FILE)


def load_case_study() -> GroupedLongitudinalDataset:
    from .io import DatasetSchema, read_dataset

    with resources.as_file(fixture_path()) as path:
        return read_dataset(path, DatasetSchema(categories=CATEGORIES, factors=("treat",)))
