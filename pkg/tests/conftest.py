import numpy as np
import pytest

from polydisp.data import GroupedLongitudinalDataset
from polydisp.simulation import ScenarioConfig, default_grid, run_study, simulate_dataset

STUDY_SEED = 2024
REPLICATES = 200


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_data():
    """40 units, 3 categories, 3 occasions, m=5, one covariate."""
    cfg = ScenarioConfig(n_units=40, sigma2=0.5, seed=7)
    return simulate_dataset(cfg, np.random.default_rng(7))


@pytest.fixture
def factor_data():
    """Two-level treatment crossed with occasion, 12 units of size 6."""
    rng = np.random.default_rng(99)
    n, J, T, m = 12, 3, 4, 6
    p = np.array([0.5, 0.3, 0.2])
    counts = np.moveaxis(rng.multinomial(m, p, size=(n, T)), 2, 1)
    treat = np.repeat((np.arange(n) % 2)[:, None], T, axis=1)
    return GroupedLongitudinalDataset(counts=counts, factors={"treat": (treat, ("A", "B"))})


_ACCEPTANCE_KEY = pytest.StashKey[list]()


@pytest.fixture
def acceptance_log(request):
    """Record one PASS/FAIL line per acceptance criterion for the summary."""
    log = request.config.stash.setdefault(_ACCEPTANCE_KEY, [])

    def record(number, title, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'}  [{number:>2}] {title}: {detail}"
        log.append((number, line))
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    log = config.stash.get(_ACCEPTANCE_KEY, [])
    if log:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(log):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def study_results():
    """Results for every m=5 grid cell plus the J=3, T=3, N=100 m-series,
    keyed by (N, J, m, T, sigma2); 200 replicates each."""
    wanted = [c for c in default_grid(seed=STUDY_SEED, replicates=REPLICATES)
              if c.group_size == 5 or (c.n_units, c.n_categories, c.n_times) == (100, 3, 3)]
    return {(c.n_units, c.n_categories, c.group_size, c.n_times, c.sigma2): r
            for c, r in zip(wanted, run_study(wanted))}


@pytest.fixture(scope="session")
def study(study_results):
    return {k: r.summary for k, r in study_results.items()}
