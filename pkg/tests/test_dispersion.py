"""Observed/expected variances and the aggregated dispersion indices."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from polydisp.data import GroupedLongitudinalDataset, ModelSpec
from polydisp.dispersion import dispersion_index, expected_variance, observed_variance
from polydisp.exceptions import DegenerateDataError, NotConvergedError
from polydisp.model import FitOptions, fit


def test_observed_variance_matches_manual():
    counts = np.array([[[2], [3]], [[4], [1]], [[5], [0]]])
    data = GroupedLongitudinalDataset(counts=counts)
    assert observed_variance(data, 0, 0) == pytest.approx(np.var([2, 4, 5], ddof=1))
    assert observed_variance(data).shape == (2, 1)


def test_observed_variance_needs_two_units():
    with pytest.raises(ValueError):
        observed_variance(GroupedLongitudinalDataset(counts=np.array([[[1], [2]]])))


def test_expected_variance_uses_unit_mean():
    probs = np.zeros((2, 2, 1))
    probs[:, 0, 0] = [0.2, 0.4]
    probs[:, 1, 0] = [0.8, 0.6]
    assert expected_variance(probs, 5, 0, 0) == pytest.approx(5 * 0.3 * 0.7)


def test_index_is_one_over_m_when_variances_agree():
    # V^o = 1 in both categories; choose fitted p with m p (1 - p) = 1 at m = 5
    p = 0.5 * (1 - np.sqrt(1 - 4 / 5))
    data = GroupedLongitudinalDataset(
        counts=np.array([[[0], [5]], [[1], [4]], [[2], [3]]]))  # var = 1
    probs = np.broadcast_to(np.array([p, 1 - p])[None, :, None], data.counts.shape)
    rep = dispersion_index(data, probs)
    np.testing.assert_allclose(rep.lambda_jt, 1.0)
    assert rep.lambda_m == pytest.approx(1.0)
    assert rep.lambda_longitudinal == pytest.approx(0.2)


def test_reference_category_enters_average(small_data):
    res = fit(ModelSpec(terms=("x",)), small_data)
    rep = dispersion_index(small_data, res)
    assert rep.lambda_jt.shape == (3, 3)
    np.testing.assert_allclose(rep.lambda_t, rep.lambda_jt.mean(axis=0))
    assert rep.lambda_m == pytest.approx(rep.lambda_t.mean())
    assert rep.lambda_longitudinal == pytest.approx(rep.lambda_m / 5)
    assert rep.lambda_longitudinal > 0


def test_unit_permutation_invariance(small_data):
    res = fit(ModelSpec(terms=("x",)), small_data)
    rep = dispersion_index(small_data, res)
    order = np.random.default_rng(0).permutation(small_data.n_units)
    perm = small_data.take_units(order)
    rep2 = dispersion_index(perm, fit(ModelSpec(terms=("x",)), perm))
    for key in ("observed_var", "expected_var", "lambda_jt", "lambda_t"):
        np.testing.assert_allclose(getattr(rep, key), getattr(rep2, key), rtol=1e-6)
    assert rep.lambda_longitudinal == pytest.approx(rep2.lambda_longitudinal, rel=1e-6)


def test_unconverged_fit_rejected(small_data):
    res = fit(ModelSpec(terms=("x",)), small_data, FitOptions(max_outer=1))
    with pytest.raises(NotConvergedError):
        dispersion_index(small_data, res)


def test_degenerate_expected_variance():
    counts = np.array([[[3], [0]], [[2], [1]]])
    probs = np.zeros((2, 2, 1))
    probs[:, 0] = 1.0
    with pytest.raises(DegenerateDataError, match="category '1'"):
        dispersion_index(GroupedLongitudinalDataset(counts=counts), probs)


def test_shape_mismatch(small_data):
    with pytest.raises(ValueError):
        dispersion_index(small_data, np.full((2, 3, 3), 1 / 3))


def test_report_serialization(small_data):
    rep = dispersion_index(small_data, fit(ModelSpec(terms=("x",)), small_data))
    text = rep.to_text()
    assert f"lambda_longitudinal = {rep.lambda_longitudinal!r}" in text
    lines = rep.to_csv().splitlines()
    assert lines[0] == "level,category,time,observed_var,expected_var,lambda"
    assert len(lines) == 1 + 9 + 3 + 2
    assert lines[-1].startswith("lambda_longitudinal,")
    d = rep.as_dict()
    assert d["lambda[1,1]"] == pytest.approx(rep.lambda_jt[0, 0])


@given(seed=st.integers(0, 1000))
@settings(max_examples=15, deadline=None)
def test_index_positive_on_random_panels(seed):
    rng = np.random.default_rng(seed)
    counts = np.moveaxis(rng.multinomial(6, [0.3, 0.3, 0.4], size=(20, 2)), 2, 1)
    data = GroupedLongitudinalDataset(counts=counts)
    try:
        res = fit(ModelSpec(), data)
    except DegenerateDataError:
        return
    if res.converged and np.any(observed_variance(data) > 0):
        assert dispersion_index(data, res).lambda_longitudinal > 0


def test_pooled_fit_reproduces_pooled_proportion(small_data):
    # intercept score equations force mean fitted probability to the pooled
    # proportion at each occasion only when the model has time effects
    res = fit(ModelSpec(terms=("time",), random_intercept=False), small_data)
    pbar = res.fitted_probs.mean(axis=0)
    obs = small_data.counts.mean(axis=0) / small_data.group_size
    np.testing.assert_allclose(pbar, obs, atol=1e-7)
