"""Small numeric helpers shared across modules."""

from __future__ import annotations

import numpy as np


def expit(eta):
    """Numerically stable inverse logit, elementwise."""
    eta = np.asarray(eta, dtype=float)
    out = np.empty_like(eta)
    pos = eta >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-eta[pos]))
    ex = np.exp(eta[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out if out.ndim else float(out)


def logit(p):
    p = np.asarray(p, dtype=float)
    if np.any(p <= 0) or np.any(p >= 1):
        raise ValueError("logit requires probabilities strictly inside (0, 1)")
    out = np.log(p) - np.log1p(-p)
    return out if out.ndim else float(out)


def log1pexp(eta):
    """log(1 + exp(eta)) without overflow for large eta."""
    return np.logaddexp(0.0, eta)


def binomial_loglik(deaths, trials, eta):
    """Binomial log likelihood in the linear predictor, dropping the
    combinatorial constant.  Cells with trials == 0 contribute zero."""
    deaths = np.asarray(deaths, dtype=float)
    trials = np.asarray(trials, dtype=float)
    eta = np.asarray(eta, dtype=float)
    terms = deaths * eta - trials * log1pexp(eta)
    return float(np.sum(np.where(trials > 0, terms, 0.0)))
