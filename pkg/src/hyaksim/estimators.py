"""Death-probability estimators fitted to survey data.

Three closed-form or likelihood-based fits, in increasing order of
structure:

* pooled: one death rate for everyone
* stratified: one rate per age-sex stratum
* covariate logistic: stratum intercepts plus village covariate slopes,
  maximum likelihood via iteratively reweighted least squares

Each fit returns the same shape of result: fitted death probabilities for
every village-stratum cell, the coefficients that produced them, and
convergence diagnostics.  The spatially smoothed model lives in its own
module because it is sampled, not maximised.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .sampling import SampleData
from .synth import STRATA
from .util import binomial_loglik, expit

__all__ = [
    "FitResult",
    "fit_naive",
    "fit_age_sex",
    "fit_logistic_mle",
]

_STRATA = STRATA

MAX_ITER = 100
SCORE_TOL = 1e-8
LOGLIK_TOL = 1e-10
RIDGE = 1e-4


@dataclass(frozen=True)
class FitResult:
    """Fitted probabilities plus how they were obtained."""

    model: str
    coefficients: dict
    probs: np.ndarray
    converged: bool
    standard_errors: dict = field(default_factory=dict)
    random_effects: dict = field(default_factory=dict)
    variance_posteriors: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)


def fit_naive(data: SampleData, covariates: np.ndarray | None = None) -> FitResult:
    """One rate for everyone: total observed deaths over total children sampled."""
    n = data.design.sampled
    total = n.sum()
    if total == 0:
        raise ValueError("no children sampled")
    deaths = data.deaths.sum()
    rate = deaths / total
    probs = np.full(n.shape, rate)
    flags = {"boundary": bool(deaths == 0 or deaths == total)}
    return FitResult(model="naive", coefficients={"rate": float(rate)},
                     probs=probs, converged=True, diagnostics=flags)


def fit_age_sex(data: SampleData, covariates: np.ndarray | None = None) -> FitResult:
    """One rate per stratum, pooled across villages."""
    n = data.design.sampled
    trials = n.sum(axis=0)
    if not trials.all():
        raise ValueError("every stratum needs at least one sampled child")
    col_deaths = data.deaths.sum(axis=0)
    rates = col_deaths / trials
    probs = np.broadcast_to(rates, n.shape).copy()
    flags = {"boundary": bool(np.any(col_deaths == 0) or np.any(col_deaths == trials))}
    return FitResult(model="age_sex", coefficients={"rates": rates},
                     probs=probs, converged=True, diagnostics=flags)


def _design_rows(data: SampleData, covariates: np.ndarray):
    """Flatten sampled cells into regression rows: two covariate columns
    followed by one indicator column per stratum (no global intercept)."""
    n = data.design.sampled
    rows_i, rows_j = np.nonzero(n > 0)
    xmat = np.zeros((len(rows_i), 2 + STRATA))
    xmat[:, :2] = covariates[rows_i]
    xmat[np.arange(len(rows_i)), 2 + rows_j] = 1.0
    return xmat, data.deaths[rows_i, rows_j], n[rows_i, rows_j]


def _irls(xmat, y, n, ridge=0.0):
    """Newton ascent on the binomial log likelihood with step halving.

    Returns (theta, converged, iterations, max_score).  A positive ridge
    subtracts ridge * |theta|^2 from the objective, which keeps the
    information matrix invertible under separation or collinearity.
    """
    p = xmat.shape[1]
    theta = np.zeros(p)
    loglik = binomial_loglik(y, n, xmat @ theta) - ridge * theta @ theta
    it = 0
    max_score = np.inf
    for it in range(1, MAX_ITER + 1):
        eta = xmat @ theta
        mu = n * expit(eta)
        score = xmat.T @ (y - mu) - 2.0 * ridge * theta
        max_score = float(np.max(np.abs(score)))
        if max_score < SCORE_TOL:
            return theta, True, it, max_score
        w = mu * (1.0 - expit(eta))
        info = (xmat * w[:, None]).T @ xmat + 2.0 * ridge * np.eye(p)
        try:
            step = np.linalg.solve(info, score)
        except np.linalg.LinAlgError:
            return theta, False, it, max_score
        # halve until the objective improves; separation pushes eta to
        # +-inf and full Newton steps can overshoot there
        new = theta
        new_ll = loglik
        scale_ok = False
        for _ in range(40):
            cand = theta + step
            cand_ll = binomial_loglik(y, n, xmat @ cand) - ridge * cand @ cand
            if cand_ll >= loglik - 1e-12:
                new, new_ll, scale_ok = cand, cand_ll, True
                break
            step = 0.5 * step
        if not scale_ok:
            return theta, False, it, max_score
        improved = new_ll - loglik
        theta, loglik = new, new_ll
        if abs(improved) < LOGLIK_TOL * (abs(loglik) + 1.0):
            eta = xmat @ theta
            score = xmat.T @ (y - n * expit(eta)) - 2.0 * ridge * theta
            max_score = float(np.max(np.abs(score)))
            return theta, max_score < 1e-4, it, max_score
    return theta, False, MAX_ITER, max_score


def fit_logistic_mle(data: SampleData, covariates: np.ndarray) -> FitResult:
    """Maximum-likelihood logistic fit, then probabilities for every cell.

    Columns that cannot be identified are dropped before fitting and come
    back as NaN coefficients: a stratum indicator with no sampled children,
    or a covariate that is constant across the sampled villages (constant
    columns are collinear with the full indicator block).  If the plain
    Newton path fails to converge the fit is retried with a small ridge
    penalty and flagged in the diagnostics.
    """
    x = np.asarray(covariates, dtype=float)
    if x.ndim != 2 or x.shape[1] != 2 or len(x) != len(data.design.sampled):
        raise ValueError("covariates must be (villages, 2)")
    xmat, y, n = _design_rows(data, x)
    if xmat.shape[0] == 0:
        raise ValueError("no sampled cells to fit")

    keep = np.ones(2 + STRATA, dtype=bool)
    for c in range(2):
        keep[c] = np.ptp(xmat[:, c]) > 1e-12
    for j in range(STRATA):
        keep[2 + j] = xmat[:, 2 + j].any()
    dropped = np.nonzero(~keep)[0]
    if not keep.any():
        raise ValueError("no identifiable columns")

    sub = xmat[:, keep]
    theta_sub, converged, iters, max_score = _irls(sub, y, n)
    penalized = False
    if not converged:
        theta_sub, converged, iters, max_score = _irls(sub, y, n, ridge=RIDGE)
        penalized = True

    theta = np.full(2 + STRATA, np.nan)
    theta[keep] = theta_sub
    se = np.full(2 + STRATA, np.nan)
    mu = n * expit(sub @ theta_sub)
    w = mu * (1.0 - expit(sub @ theta_sub))
    info = (sub * w[:, None]).T @ sub
    try:
        se[keep] = np.sqrt(np.diag(np.linalg.inv(info)))
    except np.linalg.LinAlgError:
        pass

    beta, gamma = theta[:2], theta[2:]
    # a dropped slope was constant over the fitted rows, so its effect is
    # already inside the intercepts; predict with slope zero.  A dropped
    # stratum intercept stays NaN and poisons that stratum's column.
    eta = np.where(np.isnan(beta), 0.0, beta) @ x.T
    probs = expit(gamma[None, :] + eta[:, None])
    return FitResult(
        model="covariates",
        coefficients={"slopes": beta, "stratum_intercepts": gamma},
        probs=probs,
        converged=converged,
        standard_errors={"slopes": se[:2], "stratum_intercepts": se[2:]},
        diagnostics={"iterations": iters, "max_score": max_score,
                     "penalized": penalized,
                     "dropped_columns": tuple(int(c) for c in dropped)},
    )
