"""scikit-learn style estimator around the mixed generalized-logits fit."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .data import GroupedLongitudinalDataset, ModelSpec
from .dispersion import dispersion_index
from .model import FitOptions, fit
from .multinomial import softmax_probs
from .validation import check_grouped_panel


class MixedLogitRegressor(BaseEstimator):
    """Mixed generalized-logits model for grouped nominal counts.

    Each row of ``X`` is one (group, occasion) observation; ``Y`` holds the
    category counts of that row, or class labels when every group has a
    single member. Rows must form a complete panel: every group observed at
    every occasion.

    Parameters
    ----------
    reference : int, default=0
        Zero-based index of the reference category.
    random_intercept : bool, default=True
        Include a per-group Gaussian random intercept.
    sigma2 : float or None, default=None
        Fixed random-intercept variance; estimated when ``None``.
    max_outer : int, default=200
        Maximum variance-component updates.
    tol : float, default=1e-8
        Relative change of the penalized log-likelihood for convergence.

    Attributes
    ----------
    intercept_ : ndarray of shape (n_categories - 1,)
    coef_ : ndarray of shape (n_categories - 1, n_features)
    random_effects_ : dict
        Predicted random intercept per group label.
    sigma2_ : float
    fit_result_ : FitResult
    n_categories_ : int
    """

    def __init__(self, reference=0, random_intercept=True, sigma2=None, max_outer=200,
                 tol=1e-8):
        self.reference = reference
        self.random_intercept = random_intercept
        self.sigma2 = sigma2
        self.max_outer = max_outer
        self.tol = tol

    def _dataset(self, X, Y, groups, times):
        X, counts, group_labels, time_labels = check_grouped_panel(X, Y, groups, times)
        names = [f"x{k}" for k in range(X.shape[2])]
        return GroupedLongitudinalDataset(
            counts=counts,
            units=group_labels,
            times=time_labels,
            covariates={nm: X[:, :, k] for k, nm in enumerate(names)},
        ), names

    def fit(self, X, Y, groups, times=None):
        """Fit the model.

        Parameters
        ----------
        X : array-like of shape (n_rows, n_features)
        Y : array-like of shape (n_rows, n_categories) or (n_rows,)
            Counts per category, or integer class labels 0..J-1.
        groups : array-like of shape (n_rows,)
            Group (unit) label of each row.
        times : array-like of shape (n_rows,), optional
            Occasion label of each row; defaults to order within group.

        Returns
        -------
        self
        """
        data, names = self._dataset(X, Y, groups, times)
        spec = ModelSpec(terms=tuple(names), reference=self.reference,
                         random_intercept=self.random_intercept, sigma2=self.sigma2)
        result = fit(spec, data, FitOptions(max_outer=self.max_outer, tol_obj=self.tol))
        self.fit_result_ = result
        self.dataset_ = data
        B = result.beta_matrix
        self.intercept_ = B[:, 0].copy()
        self.coef_ = B[:, 1:].copy()
        self.random_effects_ = dict(zip(data.units, result.u_hat.tolist()))
        self.sigma2_ = result.sigma2_hat
        self.n_categories_ = data.n_categories
        self.n_features_in_ = len(names)
        return self

    def decision_function(self, X, groups=None):
        """Generalized logits, shape (n_rows, n_categories - 1). Unknown or
        absent groups get a zero random intercept."""
        check_is_fitted(self, "fit_result_")
        X = check_array(X)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, model was fitted with "
                             f"{self.n_features_in_}")
        eta = self.intercept_ + X @ self.coef_.T
        if groups is not None:
            u = np.array([self.random_effects_.get(str(g), 0.0) for g in np.asarray(groups).tolist()])
            eta = eta + u[:, None]
        return eta

    def predict_proba(self, X, groups=None):
        return softmax_probs(self.decision_function(X, groups), self.reference)

    def predict(self, X, groups=None):
        return np.argmax(self.predict_proba(X, groups), axis=1)

    def score(self, X, Y, groups, times=None):
        """Mean log-likelihood per individual (multinomial coefficient omitted)."""
        _, counts, _, _ = check_grouped_panel(X, Y, groups, times)
        P = self.predict_proba(X, groups)
        Yc = np.asarray(Y)
        if Yc.ndim == 1:
            Yc = np.eye(self.n_categories_)[Yc.astype(int)]
        with np.errstate(divide="ignore"):
            ll = np.sum(np.where(Yc > 0, Yc * np.log(P), 0.0))
        return float(ll / Yc.sum())

    def dispersion_report(self):
        """Dispersion report of the training data against this fit."""
        check_is_fitted(self, "fit_result_")
        return dispersion_index(self.dataset_, self.fit_result_)
