"""Monte-Carlo study of the dispersion index under equi- and overdispersion.

Data come from a mixed generalized-logits model with one standard-normal
covariate per (unit, occasion), category 1 as reference, and a
per-unit Gaussian random intercept shared across occasions. Each replicate
is simulated, refitted with the matching model, and reduced to its
longitudinal dispersion index.
"""

from __future__ import annotations

import csv
import io
import itertools
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from threadpoolctl import threadpool_limits

from .data import GroupedLongitudinalDataset, ModelSpec
from .dispersion import dispersion_index
from .exceptions import DegenerateDataError, RankDeficiencyError
from .model import FitOptions, fit
from .multinomial import multinomial_sample, softmax_probs
from .stats import shapiro_wilk

logger = logging.getLogger(__name__)

DEFAULT_THETA = {
    3: (1.0, 0.5, 0.5, 1.0),
    4: (1.0, 0.5, 1.5, 0.5, 1.0, -1.0),
    5: (1.0, 0.5, 1.5, 1.0, 0.5, 1.0, -1.0, -0.7),
}
GRID_N = (100, 200, 500)
GRID_J = (3, 4, 5)
GRID_M = (5, 10, 15)
GRID_T = (3, 4)
GRID_SIGMA2 = (0.01, 10.0)
UNRELIABLE_FRACTION = 0.10

STUDY_SPEC = ModelSpec(terms=("x",), reference=0, random_intercept=True)

SUMMARY_COLUMNS = ["N", "J", "m", "T", "sigma2", "replicates", "excluded", "max", "min",
                   "amplitude", "mean", "sd", "shapiro_W", "shapiro_p", "p2.5", "p97.5",
                   "unreliable"]


@dataclass(frozen=True)
class ScenarioConfig:
    """One cell of the simulation grid.

    ``theta`` holds the intercepts of categories 2..J followed by their
    covariate slopes; it defaults to the standard vector for ``n_categories``.
    """

    n_units: int = 100
    n_categories: int = 3
    group_size: int = 5
    n_times: int = 3
    sigma2: float = 0.01
    theta: tuple | None = None
    replicates: int = 200
    seed: int = 0

    def __post_init__(self):
        if self.theta is None:
            if self.n_categories not in DEFAULT_THETA:
                raise ValueError(f"no default theta for J={self.n_categories}; pass theta")
            object.__setattr__(self, "theta", DEFAULT_THETA[self.n_categories])
        object.__setattr__(self, "theta", tuple(float(v) for v in self.theta))
        if len(self.theta) != 2 * (self.n_categories - 1):
            raise ValueError(f"theta needs {2 * (self.n_categories - 1)} entries "
                             f"for J={self.n_categories}, got {len(self.theta)}")
        if self.replicates < 1:
            raise ValueError("replicates must be at least 1")
        if self.sigma2 < 0:
            raise ValueError("sigma2 must be non-negative")
        for name in ("n_units", "n_categories", "group_size", "n_times"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.n_categories < 2:
            raise ValueError("need at least two categories")

    @property
    def intercepts(self) -> np.ndarray:
        return np.asarray(self.theta[: self.n_categories - 1])

    @property
    def slopes(self) -> np.ndarray:
        return np.asarray(self.theta[self.n_categories - 1:])

    @property
    def label(self) -> str:
        return (f"N={self.n_units},J={self.n_categories},m={self.group_size},"
                f"T={self.n_times},sigma2={self.sigma2:g}")


def default_grid(seed: int = 2024, replicates: int = 200) -> list[ScenarioConfig]:
    """All 54 (N, J, m, T) cells, each under both variance settings.

    Ordered by N, J, m, T, then sigma2; each of the 108 configurations gets
    its own seed derived from ``seed``.
    """
    cells = list(itertools.product(GRID_N, GRID_J, GRID_M, GRID_T, GRID_SIGMA2))
    seeds = [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(len(cells))]
    return [
        ScenarioConfig(n_units=N, n_categories=J, group_size=m, n_times=T, sigma2=s2,
                       replicates=replicates, seed=sd)
        for (N, J, m, T, s2), sd in zip(cells, seeds)
    ]


def replicate_rng(seed: int, replicate: int) -> np.random.Generator:
    """Generator for one replicate, independent of execution order."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(replicate,)))


def simulate_dataset(cfg: ScenarioConfig, rng: np.random.Generator,
                     covariate=None) -> GroupedLongitudinalDataset:
    """Draw one dataset from the study's generating model.

    Draw order: random intercepts (one per unit), then the covariate
    (one per unit and occasion, unless ``covariate`` is given), then the
    counts.
    """
    n, T, J, m = cfg.n_units, cfg.n_times, cfg.n_categories, cfg.group_size
    u = rng.normal(0.0, np.sqrt(cfg.sigma2), size=n)
    if covariate is None:
        x = rng.normal(size=(n, T))
    else:
        x = np.broadcast_to(np.asarray(covariate, dtype=float), (n, T)).copy()
    eta = cfg.intercepts + x[..., None] * cfg.slopes + u[:, None, None]
    probs = softmax_probs(eta, reference=0)  # (n, T, J)
    counts = multinomial_sample(np.full((n, T), m), probs, rng)
    return GroupedLongitudinalDataset(
        counts=np.moveaxis(counts, 2, 1),
        group_size=m,
        covariates={"x": x},
    )


def run_replicate(cfg: ScenarioConfig, replicate: int,
                  options: FitOptions | None = None) -> tuple[float, str]:
    """Simulate, fit and index one replicate.

    Returns the longitudinal index and a status: ``"ok"``,
    ``"unconverged"`` or ``"degenerate"``; the index is NaN unless ok.
    """
    data = simulate_dataset(cfg, replicate_rng(cfg.seed, replicate))
    try:
        res = fit(STUDY_SPEC, data, options)
    except (DegenerateDataError, RankDeficiencyError):
        return float("nan"), "degenerate"
    if not res.converged:
        return float("nan"), "unconverged"
    try:
        report = dispersion_index(data, res)
    except DegenerateDataError:
        return float("nan"), "degenerate"
    return report.lambda_longitudinal, "ok"


@dataclass(frozen=True)
class StudySummary:
    """Descriptive statistics of the replicate indices of one scenario.

    ``sd`` is ``None`` with fewer than two usable replicates; the
    Shapiro-Wilk fields are ``None`` with fewer than three or when all
    values coincide.
    """

    n_used: int
    excluded: int
    maximum: float
    minimum: float
    amplitude: float
    mean: float
    sd: float | None
    shapiro_W: float | None
    shapiro_p: float | None
    p2_5: float
    p97_5: float
    unreliable: bool


def summarize(samples, excluded: int = 0) -> StudySummary:
    x = np.asarray(samples, dtype=float)
    x = x[np.isfinite(x)]
    total = x.size + excluded
    unreliable = total > 0 and excluded > UNRELIABLE_FRACTION * total
    if x.size == 0:
        nan = float("nan")
        return StudySummary(0, excluded, nan, nan, nan, nan, None, None, None, nan, nan, True)
    sd = float(np.std(x, ddof=1)) if x.size >= 2 else None
    w = p = None
    if 3 <= x.size <= 5000 and np.ptp(x) > 0:
        w, p = shapiro_wilk(x)
    lo, hi = np.percentile(x, [2.5, 97.5])
    return StudySummary(
        n_used=int(x.size), excluded=int(excluded),
        maximum=float(x.max()), minimum=float(x.min()),
        amplitude=float(x.max() - x.min()), mean=float(x.mean()), sd=sd,
        shapiro_W=w, shapiro_p=p, p2_5=float(lo), p97_5=float(hi),
        unreliable=bool(unreliable),
    )


@dataclass(frozen=True, eq=False)
class ScenarioResult:
    config: ScenarioConfig
    indices: np.ndarray  # NaN where the replicate was excluded
    statuses: tuple
    summary: StudySummary

    @property
    def samples(self) -> np.ndarray:
        return self.indices[np.isfinite(self.indices)]


def _run_chunk(args):
    cfg, start, stop, options = args
    with threadpool_limits(limits=1):
        return [run_replicate(cfg, r, options) for r in range(start, stop)]


def _chunks(cfgs, chunk_size, options):
    for k, cfg in enumerate(cfgs):
        for start in range(0, cfg.replicates, chunk_size):
            yield k, (cfg, start, min(start + chunk_size, cfg.replicates), options)


def run_study(cfgs, options: FitOptions | None = None, workers: int = 1,
              chunk_size: int = 25) -> list[ScenarioResult]:
    """Run every replicate of every scenario and summarize per scenario.

    Replicates are seeded from ``(cfg.seed, replicate index)`` alone, so
    results do not depend on ``workers`` or scheduling. Unconverged or
    degenerate replicates are excluded and counted; a scenario with more
    than 10% exclusions is flagged ``unreliable``.
    """
    cfgs = list(cfgs)
    jobs = list(_chunks(cfgs, chunk_size, options))
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outputs = list(pool.map(_run_chunk, [a for _, a in jobs]))
    else:
        outputs = [_run_chunk(a) for _, a in jobs]
    per_cfg: list[list] = [[] for _ in cfgs]
    for (k, _), out in zip(jobs, outputs):
        per_cfg[k].extend(out)
    results = []
    for cfg, reps in zip(cfgs, per_cfg):
        indices = np.array([v for v, _ in reps], dtype=float)
        statuses = tuple(s for _, s in reps)
        excluded = sum(s != "ok" for s in statuses)
        summary = summarize(indices, excluded)
        if summary.unreliable:
            logger.warning("%s: %d of %d replicates excluded", cfg.label, excluded, len(reps))
        results.append(ScenarioResult(cfg, indices, statuses, summary))
    return results


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, (int, np.integer)):
        return str(v)
    return repr(float(v))


def summary_rows(results) -> list[list[str]]:
    rows = []
    for r in results:
        c, s = r.config, r.summary
        rows.append([_cell(v) for v in (
            c.n_units, c.n_categories, c.group_size, c.n_times, float(c.sigma2), c.replicates,
            s.excluded, s.maximum, s.minimum, s.amplitude, s.mean, s.sd, s.shapiro_W,
            s.shapiro_p, s.p2_5, s.p97_5, s.unreliable)])
    return rows


def summary_csv(results) -> str:
    """Study summary as CSV text, one row per scenario."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SUMMARY_COLUMNS)
    w.writerows(summary_rows(results))
    return buf.getvalue()


def histogram_bins(samples, bin_count: int = 20) -> tuple[np.ndarray, np.ndarray]:
    """Equal-width histogram over ``[min, max]`` of the samples.

    Returns ``(edges, counts)`` with ``len(edges) == bin_count + 1``.
    """
    x = np.asarray(samples, dtype=float)
    x = x[np.isfinite(x)]
    if x.size == 0:
        raise ValueError("histogram needs at least one finite sample")
    if bin_count < 1:
        raise ValueError("bin_count must be positive")
    counts, edges = np.histogram(x, bins=bin_count, range=(x.min(), x.max()))
    return edges, counts


@dataclass(frozen=True)
class CurvePoint:
    group_size: int
    sigma2: float
    mean: float
    p2_5: float
    p97_5: float
    n_used: int


def percentile_curve(n_categories: int, n_times: int, m_values, template: ScenarioConfig,
                     sigma2_values=GRID_SIGMA2, options: FitOptions | None = None,
                     workers: int = 1) -> list[CurvePoint]:
    """Mean and 2.5/97.5 percentiles of the index as the group size varies.

    One scenario per (m, sigma2), built from ``template`` with the given
    number of categories and occasions; output is ordered by m, then sigma2.
    """
    m_values = sorted(int(m) for m in m_values)
    if not m_values:
        raise ValueError("m_values must be non-empty")
    theta = template.theta if template.n_categories == n_categories else None
    seeds = np.random.SeedSequence(template.seed).spawn(len(m_values) * len(sigma2_values))
    cfgs = [
        replace(template, n_categories=n_categories, n_times=n_times, group_size=m,
                sigma2=float(s2), theta=theta, seed=int(sd.generate_state(1)[0]))
        for (m, s2), sd in zip(itertools.product(m_values, sigma2_values), seeds)
    ]
    results = run_study(cfgs, options=options, workers=workers)
    return [CurvePoint(r.config.group_size, r.config.sigma2, r.summary.mean,
                       r.summary.p2_5, r.summary.p97_5, r.summary.n_used) for r in results]


def bands_separated(points, low_sigma2=GRID_SIGMA2[0], high_sigma2=GRID_SIGMA2[1]) -> dict:
    """Per group size, whether the low-variance 97.5% point lies below the
    high-variance 2.5% point."""
    by = {(p.group_size, p.sigma2): p for p in points}
    out = {}
    for m in sorted({p.group_size for p in points}):
        lo, hi = by.get((m, low_sigma2)), by.get((m, high_sigma2))
        if lo is not None and hi is not None:
            out[m] = lo.p97_5 < hi.p2_5
    return out
