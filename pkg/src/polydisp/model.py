"""Mixed generalized-logits model for grouped longitudinal counts.

The model for unit ``i``, non-reference category ``j`` and occasion ``t`` is

    log(pi_ijt / pi_i,ref,t) = x_it' beta_j + u_i,    u_i ~ N(0, sigma2)

and is fitted by maximizing the penalized log-likelihood ``l1 + l2``:

    l1 = sum_it [ sum_j y_ijt eta_ijt - m log(1 + sum_j exp(eta_ijt)) ]
    l2 = -1/2 [ n log(2 pi sigma2) + u'u / sigma2 ]

jointly over ``(beta, u)`` by Newton's method at fixed ``sigma2``, with
``sigma2 <- u'u / n`` between inner solves. The multinomial coefficient is
constant in the parameters and left out of ``l1``.
"""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve, LinAlgError
from scipy.special import logsumexp

from .data import GroupedLongitudinalDataset, ModelSpec, design_matrix, parameter_names
from .exceptions import DegenerateDataError, NotConvergedError, RankDeficiencyError
from .validation import check_positive, check_reference

logger = logging.getLogger(__name__)

LOG_2PI = np.log(2 * np.pi)


@dataclass(frozen=True)
class FitOptions:
    """Convergence controls for :func:`fit`."""

    max_outer: int = 200
    max_inner: int = 100
    tol_obj: float = 1e-8
    tol_grad: float = 1e-6
    tol_sigma2: float = 1e-6
    max_halvings: int = 30
    ridge: float = 1e-8
    sigma2_init: float = 1.0
    sigma2_floor: float = 1e-8


@dataclass(frozen=True, eq=False)
class FitResult:
    """Estimates from a mixed generalized-logits fit.

    ``beta_hat`` and ``se_beta`` are in logit-major order: all columns of
    the first non-reference category, then the next. ``fitted_probs`` is
    indexed (unit, category, time) over all categories, reference included.
    ``loglik`` omits the multinomial coefficient, so ``deviance`` is
    ``-2 * loglik`` on that scale.
    """

    spec: ModelSpec
    beta_hat: np.ndarray
    u_hat: np.ndarray
    sigma2_hat: float
    se_beta: np.ndarray
    loglik: float
    penalized_loglik: float
    deviance: float
    fitted_probs: np.ndarray
    converged: bool
    iterations: int
    newton_steps: int
    gradient_norm: float
    param_names: list = field(default_factory=list)
    column_names: list = field(default_factory=list)
    categories: tuple = ()
    data_fingerprint: str = ""
    message: str = ""

    @property
    def n_params(self) -> int:
        return self.beta_hat.size

    @property
    def beta_matrix(self) -> np.ndarray:
        """Coefficients as an array of shape (n_logits, n_columns)."""
        return self.beta_hat.reshape(-1, len(self.column_names))

    def summary_table(self) -> list[tuple[str, float, float]]:
        return list(zip(self.param_names, self.beta_hat.tolist(), self.se_beta.tolist()))


class _Problem:
    """Arrays for one (spec, data) pair, laid out (unit, time, logit)."""

    def __init__(self, spec: ModelSpec, data: GroupedLongitudinalDataset):
        self.ref = check_reference(spec.reference, data.n_categories)
        self.X, self.columns = design_matrix(spec, data)
        y = np.moveaxis(data.counts, 1, 2).astype(float)  # (n, T, J)
        self.y_nonref = np.delete(y, self.ref, axis=2)
        self.m = float(data.group_size)
        self.n, self.T, self.K = self.X.shape
        self.q = data.n_categories - 1
        self.has_u = spec.random_intercept

    def unpack(self, beta, u):
        beta = np.asarray(beta, dtype=float).reshape(-1)
        if beta.size != self.q * self.K:
            raise ValueError(f"beta has {beta.size} entries, model needs {self.q * self.K}")
        if u is None:
            u = np.zeros(self.n)
        u = np.asarray(u, dtype=float).reshape(-1)
        if u.size != self.n:
            raise ValueError(f"u has {u.size} entries, dataset has {self.n} units")
        return beta.reshape(self.q, self.K), u

    def eta(self, B, u):
        return np.einsum("itk,jk->itj", self.X, B) + u[:, None, None]

    def loglik(self, eta):
        lse = logsumexp(np.concatenate([np.zeros(eta.shape[:2] + (1,)), eta], axis=2), axis=2)
        return float(np.sum(self.y_nonref * eta) - self.m * lse.sum())

    def penalty(self, u, sigma2):
        if not self.has_u:
            return 0.0
        return -0.5 * (self.n * (LOG_2PI + np.log(sigma2)) + u @ u / sigma2)

    def probs_nonref(self, eta):
        shift = np.maximum(eta.max(axis=2, keepdims=True), 0.0)
        ex = np.exp(eta - shift)
        denom = np.exp(-shift) + ex.sum(axis=2, keepdims=True)
        return ex / denom, np.exp(-shift[..., 0]) / denom[..., 0]

    def gradient(self, eta, u, sigma2):
        pi, _ = self.probs_nonref(eta)
        resid = self.y_nonref - self.m * pi
        g_beta = np.einsum("itk,itj->jk", self.X, resid).reshape(-1)
        if not self.has_u:
            return g_beta, np.zeros(0)
        g_u = resid.sum(axis=(1, 2)) - u / sigma2
        return g_beta, g_u

    def neg_hessian(self, eta, sigma2):
        """Blocks of minus the Hessian: (beta-beta, beta-u, diagonal u-u)."""
        pi, pi_ref = self.probs_nonref(eta)
        m = self.m
        # W_it = m (diag(pi) - pi pi')
        W = -m * pi[..., :, None] * pi[..., None, :]
        idx = np.arange(self.q)
        W[..., idx, idx] += m * pi
        A_bb = np.einsum("itjl,itk,itr->jklr", W, self.X, self.X).reshape(
            self.q * self.K, self.q * self.K)
        if not self.has_u:
            return A_bb, None, None
        w1 = m * pi * pi_ref[..., None]  # W_it @ 1
        A_bu = np.einsum("itj,itk->jki", w1, self.X).reshape(self.q * self.K, self.n)
        d = (m * (1.0 - pi_ref) * pi_ref).sum(axis=1) + 1.0 / sigma2
        return A_bb, A_bu, d


def _schur(A_bb, A_bu, d):
    if A_bu is None:
        return A_bb
    return A_bb - (A_bu / d) @ A_bu.T


def _cholesky(S, ridge):
    bump = 0.0
    for _ in range(12):
        try:
            return cho_factor(S + bump * np.eye(S.shape[0]), lower=True)
        except LinAlgError:
            bump = ridge if bump == 0.0 else bump * 10.0
    raise LinAlgError("negative Hessian is not positive definite even after ridging")


def _newton_direction(prob, eta, g_b, g_u, sigma2, ridge):
    A_bb, A_bu, d = prob.neg_hessian(eta, sigma2)
    factor = _cholesky(_schur(A_bb, A_bu, d), ridge)
    if A_bu is None:
        return cho_solve(factor, g_b), None
    step_b = cho_solve(factor, g_b - A_bu @ (g_u / d))
    step_u = (g_u - A_bu.T @ step_b) / d
    return step_b, step_u


def linear_predictor(spec: ModelSpec, beta, u, data: GroupedLongitudinalDataset) -> np.ndarray:
    """Linear predictors ``eta[i, j, t]`` for the non-reference logits.

    ``beta`` is in logit-major order; ``u`` holds one random intercept per
    unit (``None`` means all zeros).
    """
    prob = _Problem(spec, data)
    B, u = prob.unpack(beta, u)
    return np.moveaxis(prob.eta(B, u), 2, 1)


def fitted_probabilities(spec: ModelSpec, beta, u, data: GroupedLongitudinalDataset) -> np.ndarray:
    """Category probabilities ``pi[i, j, t]`` over all categories."""
    prob = _Problem(spec, data)
    B, u = prob.unpack(beta, u)
    pi, pi_ref = prob.probs_nonref(prob.eta(B, u))
    full = np.insert(pi, prob.ref, pi_ref, axis=2)
    return np.moveaxis(full, 2, 1)


def penalized_loglik(spec: ModelSpec, beta, u, sigma2, data: GroupedLongitudinalDataset) -> float:
    """Penalized log-likelihood ``l1 + l2`` (multinomial coefficient omitted)."""
    sigma2 = check_positive(sigma2, "sigma2")
    prob = _Problem(spec, data)
    B, u = prob.unpack(beta, u)
    return prob.loglik(prob.eta(B, u)) + prob.penalty(u, sigma2)


def loglik(spec: ModelSpec, beta, u, data: GroupedLongitudinalDataset) -> float:
    """Conditional multinomial log-likelihood ``l1`` without the coefficient term."""
    prob = _Problem(spec, data)
    B, u = prob.unpack(beta, u)
    return prob.loglik(prob.eta(B, u))


def penalized_gradient(spec: ModelSpec, beta, u, sigma2, data: GroupedLongitudinalDataset):
    """Analytic gradient of ``l1 + l2``.

    Returns
    -------
    grad_beta : ndarray, logit-major like ``beta``
    grad_u : ndarray of length n_units (empty without a random intercept)
    """
    sigma2 = check_positive(sigma2, "sigma2")
    prob = _Problem(spec, data)
    B, u = prob.unpack(beta, u)
    return prob.gradient(prob.eta(B, u), u, sigma2)


def _check_design(prob: _Problem, data: GroupedLongitudinalDataset):
    totals = data.counts.sum(axis=(0, 2))
    empty = [data.categories[j] for j in np.flatnonzero(totals == 0)]
    if empty:
        raise DegenerateDataError(f"categories never observed: {', '.join(empty)}")
    X = prob.X.reshape(-1, prob.K)
    aliased, kept = [], []
    for k in range(prob.K):
        trial = kept + [k]
        if np.linalg.matrix_rank(X[:, trial]) == len(trial):
            kept = trial
        else:
            aliased.append(prob.columns[k])
    if aliased:
        raise RankDeficiencyError(aliased)


def _start_beta(prob: _Problem):
    pooled = prob.y_nonref.sum(axis=(0, 1))
    ref_total = prob.m * prob.n * prob.T - pooled.sum()
    B = np.zeros((prob.q, prob.K))
    with np.errstate(divide="ignore"):
        B[:, 0] = np.log(pooled) - np.log(ref_total)
    return B.reshape(-1)


def _inner_newton(prob, beta, u, sigma2, opts):
    """Maximize l1 + l2 over (beta, u) at fixed sigma2."""
    B = beta.reshape(prob.q, prob.K)
    eta = prob.eta(B, u)
    obj = prob.loglik(eta) + prob.penalty(u, sigma2)
    steps = 0
    gnorm = np.inf
    for steps in range(1, opts.max_inner + 1):
        g_b, g_u = prob.gradient(eta, u, sigma2)
        gnorm = float(np.sqrt(g_b @ g_b + g_u @ g_u))
        if gnorm < opts.tol_grad:
            return beta, u, obj, gnorm, steps - 1, True
        d_b, d_u = _newton_direction(prob, eta, g_b, g_u, sigma2, opts.ridge)
        t = 1.0
        for _ in range(opts.max_halvings + 1):
            beta_new = beta + t * d_b
            u_new = u + t * d_u if prob.has_u else u
            eta_new = prob.eta(beta_new.reshape(prob.q, prob.K), u_new)
            obj_new = prob.loglik(eta_new) + prob.penalty(u_new, sigma2)
            if np.isfinite(obj_new) and obj_new >= obj - 1e-12 * abs(obj):
                break
            t *= 0.5
        else:
            return beta, u, obj, gnorm, steps, False
        improvement = obj_new - obj
        beta, u, eta, obj = beta_new, u_new, eta_new, obj_new
        if abs(improvement) <= 1e-15 * max(1.0, abs(obj)) and t < 1.0:
            # no further progress possible at double precision
            g_b, g_u = prob.gradient(eta, u, sigma2)
            gnorm = float(np.sqrt(g_b @ g_b + g_u @ g_u))
            return beta, u, obj, gnorm, steps, gnorm < opts.tol_grad
    g_b, g_u = prob.gradient(eta, u, sigma2)
    gnorm = float(np.sqrt(g_b @ g_b + g_u @ g_u))
    return beta, u, obj, gnorm, steps, gnorm < opts.tol_grad


def fit(spec: ModelSpec, data: GroupedLongitudinalDataset,
        options: FitOptions | None = None) -> FitResult:
    """Fit a mixed generalized-logits model by penalized maximum likelihood.

    Newton steps with step halving maximize ``l1 + l2`` over the fixed
    effects and random intercepts at the current variance; the variance
    is then updated to ``u'u / n`` and the cycle repeats until the
    penalized objective changes by less than ``tol_obj`` and the variance
    by less than ``tol_sigma2`` (both relative) with gradient norm below
    ``tol_grad``, or the variance hits its floor.

    Non-convergence is reported through ``FitResult.converged`` rather than
    raised. Raises :class:`DegenerateDataError` when a category is never
    observed and :class:`RankDeficiencyError` for aliased design columns.
    """
    opts = options or FitOptions()
    prob = _Problem(spec, data)
    _check_design(prob, data)

    beta = _start_beta(prob)
    u = np.zeros(prob.n)
    free_sigma = prob.has_u and spec.sigma2 is None
    sigma2 = spec.sigma2 if spec.sigma2 is not None else opts.sigma2_init
    if not prob.has_u:
        sigma2 = 1.0

    converged = False
    message = "maximum outer iterations reached"
    prev_obj = None
    newton_total = 0
    outer = 0
    gnorm = np.inf
    for outer in range(1, opts.max_outer + 1):
        beta, u, obj, gnorm, steps, inner_ok = _inner_newton(prob, beta, u, sigma2, opts)
        newton_total += steps
        if not free_sigma:
            converged = inner_ok
            message = "converged" if inner_ok else "inner Newton iterations did not converge"
            break
        new_sigma2 = max(float(u @ u) / prob.n, opts.sigma2_floor)
        if inner_ok and prev_obj is not None and \
                abs(obj - prev_obj) <= opts.tol_obj * max(1.0, abs(obj)) and \
                abs(new_sigma2 - sigma2) <= opts.tol_sigma2 * sigma2:
            converged, message = True, "converged"
            break
        if inner_ok and new_sigma2 == opts.sigma2_floor and sigma2 == opts.sigma2_floor:
            converged, message = True, "converged; variance component at its floor"
            break
        prev_obj = obj
        sigma2 = new_sigma2
    if not converged:
        logger.debug("fit did not converge: %s (gradient norm %.3g)", message, gnorm)

    B = beta.reshape(prob.q, prob.K)
    eta = prob.eta(B, u)
    l1 = prob.loglik(eta)
    l2 = prob.penalty(u, sigma2)
    A_bb, A_bu, d = prob.neg_hessian(eta, sigma2)
    try:
        cov = np.linalg.inv(_schur(A_bb, A_bu, d))
        se = np.sqrt(np.where(np.diag(cov) > 0, np.diag(cov), np.nan))
    except np.linalg.LinAlgError:
        se = np.full(beta.size, np.nan)
    probs = fitted_probabilities(spec, beta, u, data)
    return FitResult(
        spec=spec,
        beta_hat=beta,
        u_hat=u if prob.has_u else np.zeros(prob.n),
        sigma2_hat=float(sigma2) if prob.has_u else 0.0,
        se_beta=se,
        loglik=l1,
        penalized_loglik=float(l1 + l2),
        deviance=-2.0 * l1,
        fitted_probs=probs,
        converged=bool(converged),
        iterations=outer,
        newton_steps=newton_total,
        gradient_norm=gnorm,
        param_names=parameter_names(spec, data),
        column_names=list(prob.columns),
        categories=data.categories,
        data_fingerprint=data_fingerprint(data),
        message=message,
    )


def data_fingerprint(data: GroupedLongitudinalDataset) -> str:
    """Digest of the counts, used to check that two fits share their data."""
    return hashlib.sha1(np.ascontiguousarray(data.counts).tobytes()
                        + repr(data.counts.shape).encode()).hexdigest()


def deviance_of(result: FitResult) -> float:
    """Deviance ``-2 * loglik`` of a converged fit."""
    if not result.converged:
        raise NotConvergedError(f"fit did not converge: {result.message}")
    return result.deviance
