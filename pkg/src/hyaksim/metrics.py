"""Predicted death counts and their error decomposition.

A cell's predicted deaths are the observed deaths plus the fitted
probability applied to the children who were not sampled.  Across
replicates, prediction error splits exactly into summed squared bias plus
summed variance; both are reported together with their sum so the identity
is checkable downstream.  Truth may be one shared realisation for every
replicate or a fresh realisation per replicate; the decomposition is taken
about the per-replicate error either way, which keeps the identity exact
in both modes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .sampling import SampleData

__all__ = [
    "MetricsReport",
    "predict_deaths",
    "mse_decomposition",
    "comparison_table",
    "COMPARED_METRICS",
]

COMPARED_METRICS = ("deaths_captured", "bias_rms", "var_sum", "mse")


@dataclass(frozen=True)
class MetricsReport:
    """Replicate-averaged prediction error, decomposed."""

    replicates: int
    bias_sq_sum: float
    var_sum: float
    mse: float
    bias_rms: float
    deaths_captured: float | None
    per_cell_prediction: np.ndarray
    per_cell_truth: np.ndarray
    fixed_truth: bool


def predict_deaths(sample: SampleData, probs: np.ndarray,
                   children: np.ndarray) -> np.ndarray:
    """Observed deaths plus expected deaths among unsampled children.

    Census cells pass the observed count through untouched, so they stay
    exact even when the fitted probability there is undefined."""
    n = sample.design.sampled
    p = np.asarray(probs, dtype=float)
    big_n = np.asarray(children, dtype=int)
    if p.shape != n.shape or big_n.shape != n.shape:
        raise ValueError("probabilities and children must match the design")
    if np.any(big_n < n):
        raise ValueError("sampled more children than exist")
    y = sample.deaths
    return np.where(n == big_n, y, y + (big_n - n) * p)


def mse_decomposition(predictions, truth, observed_totals=None,
                      fixed_truth: bool | None = None) -> MetricsReport:
    """Decompose replicate prediction errors into bias and variance parts.

    predictions is a sequence of per-replicate cell matrices.  truth is
    either a single matrix shared by all replicates or one matrix per
    replicate.  Per cell, bias is the mean error and variance the
    population variance of the error; mse is computed along the
    independent route, as the mean total squared error, so the additive
    identity is a genuine crosscheck rather than a restatement.
    """
    preds = [np.asarray(p, dtype=float) for p in predictions]
    if len(preds) == 0:
        raise ValueError("need at least one replicate")
    shape = preds[0].shape
    if any(p.shape != shape for p in preds):
        raise ValueError("replicate matrices must share a shape")
    reps = len(preds)

    if isinstance(truth, np.ndarray) and truth.shape == shape:
        truths = [np.asarray(truth, dtype=float)] * reps
        fixed = True
    else:
        truths = [np.asarray(t, dtype=float) for t in truth]
        if len(truths) != reps or any(t.shape != shape for t in truths):
            raise ValueError("truth must be one matrix or one per replicate")
        fixed = bool(all(t is truths[0] or np.array_equal(t, truths[0])
                         for t in truths[1:])) if reps > 1 else True
    if fixed_truth is not None:
        fixed = bool(fixed_truth)

    errors = np.stack([p - t for p, t in zip(preds, truths)])
    bias = errors.mean(axis=0)
    var = np.mean((errors - bias) ** 2, axis=0)
    bias_sq_sum = float((bias ** 2).sum())
    var_sum = float(var.sum())
    mse = float(np.mean([(e ** 2).sum() for e in errors]))

    captured = None
    if observed_totals is not None:
        captured = float(np.mean(np.asarray(observed_totals, dtype=float)))

    return MetricsReport(
        replicates=reps,
        bias_sq_sum=bias_sq_sum,
        var_sum=var_sum,
        mse=mse,
        bias_rms=float(np.sqrt(bias_sq_sum)),
        deaths_captured=captured,
        per_cell_prediction=np.stack(preds).mean(axis=0),
        per_cell_truth=np.stack(truths).mean(axis=0),
        fixed_truth=fixed,
    )


def comparison_table(report_a: MetricsReport, report_b: MetricsReport) -> list:
    """Raw and proportional differences of the headline metrics, b vs a.

    Proportional entries are None when the baseline is zero or a metric is
    missing on either side."""
    rows = []
    for metric in COMPARED_METRICS:
        a = getattr(report_a, metric)
        b = getattr(report_b, metric)
        if a is None or b is None:
            rows.append({"metric": metric, "baseline": a, "other": b,
                         "difference": None, "proportional": None})
            continue
        diff = b - a
        prop = diff / a if a != 0 else None
        rows.append({"metric": metric, "baseline": a, "other": b,
                     "difference": diff, "proportional": prop})
    return rows
