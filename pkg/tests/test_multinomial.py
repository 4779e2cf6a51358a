"""Multinomial pmf, moments, sampler and softmax."""

import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from polydisp.multinomial import (multinomial_logpmf, multinomial_moments, multinomial_pmf,
                                  multinomial_sample, softmax_probs)


def _compositions(total, J):
    for cut in itertools.combinations(range(total + J - 1), J - 1):
        parts = np.diff((-1,) + cut + (total + J - 1,)) - 1
        yield parts


simplex = st.integers(2, 4).flatmap(
    lambda J: st.lists(st.floats(0.01, 1.0), min_size=J, max_size=J)
).map(lambda w: np.asarray(w) / np.sum(w))


@given(p=simplex, total=st.integers(0, 6))
@settings(max_examples=40, deadline=None)
def test_pmf_sums_to_one(p, total):
    s = sum(multinomial_pmf(y, p) for y in _compositions(total, p.size))
    assert abs(s - 1.0) < 1e-10


def test_pmf_matches_scipy():
    p = np.array([0.2, 0.3, 0.5])
    for y in _compositions(7, 3):
        assert multinomial_logpmf(y, p) == pytest.approx(stats.multinomial.logpmf(y, 7, p),
                                                         abs=1e-12)


def test_pmf_zero_probability_category():
    p = np.array([0.0, 0.4, 0.6])
    assert multinomial_logpmf([1, 1, 1], p) == -np.inf
    assert multinomial_pmf([0, 2, 1], p) == pytest.approx(3 * 0.4**2 * 0.6)


def test_degenerate_total():
    assert multinomial_pmf([5, 0, 0], [1.0, 0.0, 0.0]) == pytest.approx(1.0)
    assert multinomial_pmf([0, 0], [0.5, 0.5]) == pytest.approx(1.0)


def test_invalid_probabilities():
    with pytest.raises(ValueError):
        multinomial_pmf([1, 1], [0.7, 0.7])
    with pytest.raises(ValueError):
        multinomial_sample(3, [0.5, np.nan, 0.5], np.random.default_rng(0))


def test_moments_closed_form():
    mean, cov = multinomial_moments(5, [0.2, 0.3, 0.5])
    np.testing.assert_allclose(mean, [1.0, 1.5, 2.5])
    np.testing.assert_allclose(np.diag(cov), [0.8, 1.05, 1.25])
    assert cov[0, 1] == pytest.approx(-5 * 0.2 * 0.3)
    np.testing.assert_allclose(cov.sum(axis=1), 0.0, atol=1e-12)


def test_moments_against_samples(rng):
    p = np.array([0.1, 0.25, 0.3, 0.35])
    total, S = 9, 200_000
    draws = multinomial_sample(np.full(S, total), p, rng).astype(float)
    mean, cov = multinomial_moments(total, p)
    se_mean = np.sqrt(np.diag(cov) / S)
    assert np.all(np.abs(draws.mean(axis=0) - mean) < 4 * se_mean)
    emp = np.cov(draws, rowvar=False)
    # Var of a sample covariance entry ~ (E[d_a^2 d_b^2] - cov_ab^2) / S
    d = draws - mean
    var_cov = (np.einsum("sa,sb->ab", d**2, d**2) / S - cov**2) / S
    assert np.all(np.abs(emp - cov) < 4 * np.sqrt(var_cov))


@given(total=st.integers(0, 50), p=simplex, seed=st.integers(0, 2**32 - 1))
@settings(max_examples=50, deadline=None)
def test_samples_sum_to_total(total, p, seed):
    draws = multinomial_sample(np.full(30, total), p, np.random.default_rng(seed))
    assert draws.shape == (30, p.size)
    assert np.all(draws.sum(axis=1) == total)
    assert np.all(draws >= 0)


def test_sampler_broadcasts_per_cell_probabilities(rng):
    p = np.stack([np.eye(3)[k] for k in range(3)])  # each row certain
    draws = multinomial_sample(np.array([2, 3, 4]), p, rng)
    np.testing.assert_array_equal(draws, np.diag([2, 3, 4]))


def test_sampler_reproducible():
    a = multinomial_sample(10, [0.2, 0.8], np.random.default_rng(5))
    b = multinomial_sample(10, [0.2, 0.8], np.random.default_rng(5))
    np.testing.assert_array_equal(a, b)


@given(eta=st.lists(st.floats(-30, 30), min_size=1, max_size=5),
       ref=st.integers(0, 5))
@settings(max_examples=80, deadline=None)
def test_softmax_simplex_and_logit_recovery(eta, ref):
    eta = np.asarray(eta)
    ref = ref % (eta.size + 1)
    p = softmax_probs(eta, reference=ref)
    assert abs(p.sum() - 1.0) < 1e-12
    assert np.all(p > 0)
    others = np.delete(np.arange(eta.size + 1), ref)
    np.testing.assert_allclose(np.log(p[others]) - np.log(p[ref]), eta, atol=1e-10)


def test_softmax_extreme_values_stay_finite():
    p = softmax_probs(np.array([800.0, -800.0]))
    assert np.all(np.isfinite(p))
    assert p[1] == pytest.approx(1.0)


def test_softmax_rejects_non_finite():
    with pytest.raises(ValueError):
        softmax_probs(np.array([np.inf, 0.0]))
