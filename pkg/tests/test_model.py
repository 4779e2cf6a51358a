"""Mixed generalized-logits fitting: gradient, MLE oracles and invariances."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import minimize

from polydisp.data import GroupedLongitudinalDataset, ModelSpec, design_matrix, parameter_names
from polydisp.exceptions import DegenerateDataError, NotConvergedError, RankDeficiencyError
from polydisp.model import (FitOptions, deviance_of, fit, fitted_probabilities, linear_predictor,
                            loglik, penalized_gradient, penalized_loglik)

XSPEC = ModelSpec(terms=("x",))


def _fd_gradient(f, theta, h=1e-5):
    g = np.empty_like(theta)
    for k in range(theta.size):
        e = np.zeros_like(theta)
        e[k] = h
        g[k] = (f(theta + e) - f(theta - e)) / (2 * h)
    return g


def test_gradient_matches_finite_differences(small_data):
    rng = np.random.default_rng(2)
    spec = XSPEC
    p = spec.n_params(small_data)
    n = small_data.n_units
    for _ in range(20):
        beta = rng.normal(0, 0.7, p)
        u = rng.normal(0, 0.8, n)
        sigma2 = float(rng.uniform(0.2, 3.0))

        def obj(theta):
            return penalized_loglik(spec, theta[:p], theta[p:], sigma2, small_data)

        theta = np.concatenate([beta, u])
        g_b, g_u = penalized_gradient(spec, beta, u, sigma2, small_data)
        fd = _fd_gradient(obj, theta)
        an = np.concatenate([g_b, g_u])
        rel = np.abs(an - fd) / np.maximum(np.abs(fd), 1.0)
        assert rel.max() < 1e-5


def test_gradient_with_factor_terms(factor_data):
    spec = ModelSpec(terms=("treat*time",), reference=2)
    rng = np.random.default_rng(3)
    p = spec.n_params(factor_data)
    beta, u = rng.normal(0, 0.5, p), rng.normal(0, 0.5, factor_data.n_units)
    g_b, _ = penalized_gradient(spec, beta, u, 0.7, factor_data)
    fd = _fd_gradient(lambda b: penalized_loglik(spec, b, u, 0.7, factor_data), beta)
    np.testing.assert_allclose(g_b, fd, rtol=1e-6, atol=1e-6)


def _oracle_fixed_effects_mle(data, spec):
    """Independent multinomial-logit MLE via BFGS on a flattened likelihood."""
    X, _ = design_matrix(spec, data)
    X = X.reshape(-1, X.shape[-1])
    Y = np.moveaxis(data.counts, 1, 2).reshape(-1, data.n_categories).astype(float)
    ref = spec.reference
    q, K = data.n_categories - 1, X.shape[1]

    def negll(b):
        eta = X @ b.reshape(q, K).T
        eta = np.insert(eta, ref, 0.0, axis=1)
        lse = np.logaddexp.reduce(eta, axis=1)
        return -np.sum(Y * (eta - lse[:, None]))

    res = minimize(negll, np.zeros(q * K), method="BFGS", options={"gtol": 1e-9})
    return res.x


def test_closed_form_intercept_only(rng):
    n, T, m = 500, 2, 4
    p = np.array([0.2, 0.5, 0.3])
    counts = np.moveaxis(rng.multinomial(m, p, size=(n, T)), 2, 1)
    data = GroupedLongitudinalDataset(counts=counts)
    res = fit(ModelSpec(random_intercept=False), data)
    tot = counts.sum(axis=(0, 2))
    np.testing.assert_allclose(res.beta_hat, np.log(tot[1:] / tot[0]), atol=1e-4)
    pooled = tot / tot.sum()
    np.testing.assert_allclose(res.fitted_probs[0, :, 0], pooled, atol=1e-8)


def test_fixed_effects_fit_matches_oracle(small_data):
    spec = ModelSpec(terms=("x",), random_intercept=False, reference=1)
    res = fit(spec, small_data)
    assert res.converged
    np.testing.assert_allclose(res.beta_hat, _oracle_fixed_effects_mle(small_data, spec),
                               atol=1e-4)


def test_tiny_sigma2_reduces_to_fixed_effects(small_data):
    res = fit(ModelSpec(terms=("x",), sigma2=1e-8), small_data)
    assert res.converged
    assert np.max(np.abs(res.u_hat)) < 1e-3
    ref = fit(ModelSpec(terms=("x",), random_intercept=False), small_data)
    np.testing.assert_allclose(res.beta_hat, ref.beta_hat, atol=1e-3)


def test_fitted_probs_on_simplex(small_data):
    res = fit(XSPEC, small_data)
    assert res.converged
    np.testing.assert_allclose(res.fitted_probs.sum(axis=1), 1.0, atol=1e-10)
    assert res.fitted_probs.shape == small_data.counts.shape


def test_fitted_probs_match_linear_predictor(small_data):
    res = fit(XSPEC, small_data)
    eta = linear_predictor(XSPEC, res.beta_hat, res.u_hat, small_data)
    probs = fitted_probabilities(XSPEC, res.beta_hat, res.u_hat, small_data)
    np.testing.assert_allclose(np.log(probs[:, 1:] / probs[:, :1]), eta, atol=1e-10)
    np.testing.assert_allclose(probs, res.fitted_probs)


def test_stationarity_at_optimum():
    from polydisp.simulation import ScenarioConfig, simulate_dataset

    data = simulate_dataset(ScenarioConfig(n_units=60, sigma2=3.0), np.random.default_rng(4))
    res = fit(XSPEC, data)
    assert res.converged and res.sigma2_hat > 0.5
    g_b, g_u = penalized_gradient(XSPEC, res.beta_hat, res.u_hat, res.sigma2_hat, data)
    assert np.max(np.abs(g_b)) < 1e-5
    assert np.max(np.abs(g_u)) < 1e-5
    # variance update is at its fixed point
    assert res.sigma2_hat == pytest.approx(np.mean(res.u_hat**2), rel=1e-4)


@pytest.mark.parametrize("c", [-2.0, 1.5, 4.0])
def test_covariate_shift_only_moves_intercepts(small_data, c):
    base = fit(XSPEC, small_data)
    shifted = GroupedLongitudinalDataset(
        counts=small_data.counts, covariates={"x": small_data.covariates["x"] + c})
    res = fit(XSPEC, shifted)
    Bb, Bs = base.beta_matrix, res.beta_matrix
    np.testing.assert_allclose(Bs[:, 0], Bb[:, 0] - Bb[:, 1] * c, atol=2e-3)
    np.testing.assert_allclose(Bs[:, 1], Bb[:, 1], atol=2e-3)
    np.testing.assert_allclose(res.fitted_probs, base.fitted_probs, atol=1e-4)


@pytest.mark.parametrize("reference", [1, 2])
def test_deviance_invariant_to_reference_without_random_effect(small_data, reference):
    a = fit(ModelSpec(terms=("x",), random_intercept=False), small_data)
    b = fit(ModelSpec(terms=("x",), random_intercept=False, reference=reference), small_data)
    assert abs(a.deviance - b.deviance) < 1e-6
    np.testing.assert_allclose(a.fitted_probs, b.fitted_probs, atol=1e-7)


def test_reference_change_is_a_different_random_effect_model(small_data):
    # the shared intercept moves every non-reference logit together, so the
    # reference choice picks which category the effect contrasts against
    a = fit(ModelSpec(terms=("x",), sigma2=2.0), small_data)
    b = fit(ModelSpec(terms=("x",), sigma2=2.0, reference=2), small_data)
    assert a.converged and b.converged
    assert abs(a.deviance - b.deviance) > 1e-6


def test_nested_fits_increase_loglik(factor_data):
    small = fit(ModelSpec(terms=("treat",)), factor_data)
    big = fit(ModelSpec(terms=("treat", "time")), factor_data)
    assert big.loglik >= small.loglik - 1e-6


def test_parameter_names_and_layout(factor_data):
    spec = ModelSpec(terms=("treat*time",))
    names = parameter_names(spec, factor_data)
    cols = spec.column_names(factor_data)
    assert cols[:2] == ["(Intercept)", "treat[B]"]
    assert "treat[B]:time[2]" in cols
    assert len(names) == 2 * len(cols)
    assert names[0] == "2:(Intercept)"
    res = fit(spec, factor_data)
    assert res.beta_matrix.shape == (2, len(cols))
    assert [r[0] for r in res.summary_table()] == names


def test_standard_errors_match_fixed_effects_oracle(rng):
    # without a random effect the SE is the inverse observed information
    n, T, m = 300, 1, 3
    counts = np.moveaxis(rng.multinomial(m, [0.3, 0.7], size=(n, T)), 2, 1)
    data = GroupedLongitudinalDataset(counts=counts)
    res = fit(ModelSpec(random_intercept=False), data)
    k = counts[:, 1].sum()
    N = n * T * m
    p = k / N
    assert res.se_beta[0] == pytest.approx(np.sqrt(1 / (N * p * (1 - p))), rel=1e-6)


def test_degenerate_category_raises(rng):
    counts = np.zeros((5, 3, 2), dtype=int)
    counts[:, 0] = 2
    counts[:, 1] = 1
    with pytest.raises(DegenerateDataError, match="never observed: 3"):
        fit(ModelSpec(), GroupedLongitudinalDataset(counts=counts))


def test_aliased_covariate_raises(small_data):
    data = GroupedLongitudinalDataset(
        counts=small_data.counts,
        covariates={"x": small_data.covariates["x"], "x2": 2 * small_data.covariates["x"]})
    with pytest.raises(RankDeficiencyError) as err:
        fit(ModelSpec(terms=("x", "x2")), data)
    assert err.value.aliased == ["x2"]


def test_unconverged_fit_is_reported(small_data):
    res = fit(XSPEC, small_data, FitOptions(max_outer=1))
    assert not res.converged
    with pytest.raises(NotConvergedError):
        deviance_of(res)


def test_fit_deterministic(small_data):
    a = fit(XSPEC, small_data)
    b = fit(XSPEC, small_data)
    np.testing.assert_array_equal(a.beta_hat, b.beta_hat)
    assert a.sigma2_hat == b.sigma2_hat


def test_loglik_matches_scipy_up_to_constant(small_data):
    from scipy.stats import multinomial

    res = fit(XSPEC, small_data)
    P = np.moveaxis(res.fitted_probs, 1, 2).reshape(-1, small_data.n_categories)
    Y = np.moveaxis(small_data.counts, 1, 2).reshape(-1, small_data.n_categories)
    full = multinomial.logpmf(Y, small_data.group_size, P).sum()
    from scipy.special import gammaln
    const = np.sum(gammaln(small_data.group_size + 1) - gammaln(Y + 1).sum(axis=1))
    ll = loglik(XSPEC, res.beta_hat, res.u_hat, small_data)
    assert ll == pytest.approx(full - const, rel=1e-10)


@given(seed=st.integers(0, 10_000), sigma2=st.sampled_from([0.01, 1.0, 10.0]))
@settings(max_examples=8, deadline=None)
def test_random_fits_are_stationary(seed, sigma2):
    from polydisp.simulation import ScenarioConfig, simulate_dataset

    cfg = ScenarioConfig(n_units=30, sigma2=sigma2, seed=seed)
    data = simulate_dataset(cfg, np.random.default_rng(seed))
    res = fit(XSPEC, data)
    if res.converged:
        np.testing.assert_allclose(res.fitted_probs.sum(axis=1), 1.0, atol=1e-10)
        assert res.gradient_norm < 1e-5
