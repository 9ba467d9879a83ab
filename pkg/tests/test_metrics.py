"""Prediction arithmetic and the error decomposition identity."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hyaksim import seeds
from hyaksim.metrics import (
    MetricsReport,
    comparison_table,
    mse_decomposition,
    predict_deaths,
)
from hyaksim.sampling import SampleData, SampleDesign
from hyaksim.validate import check_mse_identity


def make_sample(sampled, deaths):
    design = SampleDesign(kind="probe", sampled=np.asarray(sampled),
                          hdss_ids=frozenset())
    return SampleData(design=design, deaths=np.asarray(deaths))


def report_with(**overrides):
    base = dict(replicates=1, bias_sq_sum=0.0, var_sum=0.0, mse=0.0,
                bias_rms=0.0, deaths_captured=None,
                per_cell_prediction=np.zeros((1, 4)),
                per_cell_truth=np.zeros((1, 4)), fixed_truth=True)
    base.update(overrides)
    return MetricsReport(**base)


# ----------------------------------------------------------------- predictions

def test_predicted_deaths_arithmetic():
    sample = make_sample([[100, 0, 350, 50]], [[10, 0, 35, 5]])
    children = np.array([[350, 350, 350, 350]])
    probs = np.array([[0.08, 0.1, 0.5, 0.02]])
    got = predict_deaths(sample, probs, children)
    assert got[0, 0] == pytest.approx(10 + 250 * 0.08)  # = 30
    assert got[0, 1] == pytest.approx(35.0)             # pure prediction
    assert got[0, 2] == 35                              # census passthrough
    assert got[0, 3] == pytest.approx(5 + 300 * 0.02)


def test_census_cells_are_exact_even_without_probabilities():
    sample = make_sample([[350, 350, 350, 350]], [[30, 41, 11, 25]])
    children = np.full((1, 4), 350)
    got = predict_deaths(sample, np.full((1, 4), np.nan), children)
    assert np.array_equal(got, [[30, 41, 11, 25]])


def test_predict_deaths_validates_shapes():
    sample = make_sample([[10, 10, 10, 10]], [[1, 1, 1, 1]])
    with pytest.raises(ValueError):
        predict_deaths(sample, np.zeros((2, 4)), np.full((1, 4), 350))
    with pytest.raises(ValueError):
        predict_deaths(sample, np.zeros((1, 4)), np.full((1, 4), 5))


# --------------------------------------------------------------- decomposition

def test_perfect_predictions_have_zero_error():
    truth = np.arange(8.0).reshape(2, 4)
    rep = mse_decomposition([truth.copy() for _ in range(5)], truth)
    assert rep.mse == 0 and rep.bias_sq_sum == 0 and rep.var_sum == 0
    assert rep.replicates == 5 and rep.fixed_truth


def test_single_replicate_is_pure_bias():
    truth = np.zeros((2, 4))
    pred = np.full((2, 4), 1.5)
    rep = mse_decomposition([pred], truth)
    assert rep.var_sum == 0.0
    assert rep.mse == rep.bias_sq_sum == pytest.approx(8 * 1.5 ** 2)
    assert rep.bias_rms == pytest.approx(np.sqrt(rep.bias_sq_sum))


def test_identity_on_random_sets():
    result = check_mse_identity(sets=200)
    assert result.passed, result.detail


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.integers(1, 8),
       st.integers(1, 6), st.integers(1, 4), st.booleans())
def test_identity_property(entropy, reps, rows, cols, per_replicate_truth):
    rng = np.random.default_rng(entropy)
    preds = [rng.uniform(0, 60, size=(rows, cols)) for _ in range(reps)]
    if per_replicate_truth:
        truth = [rng.uniform(0, 60, size=(rows, cols)) for _ in range(reps)]
    else:
        truth = rng.uniform(0, 60, size=(rows, cols))
    rep = mse_decomposition(preds, truth)
    assert rep.mse == pytest.approx(rep.bias_sq_sum + rep.var_sum, rel=1e-10)
    assert rep.bias_sq_sum >= 0 and rep.var_sum >= 0


def test_constant_shift_moves_only_bias():
    rng = seeds.stream(51, "metrics-shift")
    truth = rng.uniform(0, 50, size=(3, 4))
    preds = [rng.uniform(0, 50, size=(3, 4)) for _ in range(6)]
    base = mse_decomposition(preds, truth)
    c = 2.5
    shifted = mse_decomposition([p + c for p in preds], truth)
    assert shifted.var_sum == pytest.approx(base.var_sum, rel=1e-12)
    bias_cells = np.stack(preds).mean(axis=0) - truth
    expected_gain = float((2 * c * bias_cells + c ** 2).sum())
    assert shifted.bias_sq_sum - base.bias_sq_sum == pytest.approx(expected_gain)


def test_replicate_order_is_irrelevant():
    rng = seeds.stream(52, "metrics-permute")
    truth = [rng.uniform(0, 50, size=(2, 4)) for _ in range(5)]
    preds = [rng.uniform(0, 50, size=(2, 4)) for _ in range(5)]
    fwd = mse_decomposition(preds, truth)
    order = [3, 0, 4, 1, 2]
    rev = mse_decomposition([preds[i] for i in order], [truth[i] for i in order])
    assert rev.mse == pytest.approx(fwd.mse, rel=1e-14)
    assert rev.bias_sq_sum == pytest.approx(fwd.bias_sq_sum, rel=1e-14)
    assert rev.var_sum == pytest.approx(fwd.var_sum, rel=1e-14)


def test_observed_totals_become_deaths_captured():
    truth = np.zeros((1, 4))
    rep = mse_decomposition([truth, truth], truth, observed_totals=[470, 490])
    assert rep.deaths_captured == pytest.approx(480.0)


def test_decomposition_rejects_bad_inputs():
    with pytest.raises(ValueError):
        mse_decomposition([], np.zeros((1, 4)))
    with pytest.raises(ValueError):
        mse_decomposition([np.zeros((1, 4)), np.zeros((2, 4))], np.zeros((1, 4)))
    with pytest.raises(ValueError):
        mse_decomposition([np.zeros((1, 4))], [np.zeros((1, 4))] * 2)


# ------------------------------------------------------------------ comparison

def test_identical_reports_compare_to_zero():
    rep = report_with(mse=10.0, bias_sq_sum=4.0, bias_rms=2.0, var_sum=6.0,
                      deaths_captured=100.0)
    rows = comparison_table(rep, rep)
    for row in rows:
        assert row["difference"] == 0
        assert row["proportional"] == 0


def test_comparison_matches_published_style_numbers():
    a = report_with(deaths_captured=473.0, mse=1918.0, var_sum=353.0,
                    bias_sq_sum=1565.0, bias_rms=float(np.sqrt(1565.0)))
    b = report_with(deaths_captured=549.0, mse=1193.0, var_sum=86.0,
                    bias_sq_sum=1107.0, bias_rms=float(np.sqrt(1107.0)))
    rows = {r["metric"]: r for r in comparison_table(a, b)}
    assert rows["deaths_captured"]["difference"] == pytest.approx(76.0)
    assert rows["deaths_captured"]["proportional"] == pytest.approx(0.1606, abs=5e-4)
    assert rows["var_sum"]["difference"] == pytest.approx(-267.0)
    assert rows["var_sum"]["proportional"] == pytest.approx(-0.756, abs=5e-3)


def test_zero_or_missing_baselines_are_undefined():
    a = report_with(mse=0.0, deaths_captured=None)
    b = report_with(mse=5.0, deaths_captured=100.0)
    rows = {r["metric"]: r for r in comparison_table(a, b)}
    assert rows["mse"]["difference"] == 5.0
    assert rows["mse"]["proportional"] is None
    assert rows["deaths_captured"]["difference"] is None
    assert rows["deaths_captured"]["proportional"] is None
