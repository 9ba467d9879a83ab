"""Estimator fits: closed forms, likelihood maximisation, degenerate data."""

import numpy as np
import pytest

from hyaksim import seeds
from hyaksim.estimators import (
    FitResult,
    fit_logistic_mle,
    fit_naive,
    fit_age_sex,
)
from hyaksim.sampling import SampleData, SampleDesign
from hyaksim.util import binomial_loglik, expit
from hyaksim.validate import check_mle_oracle


def make_data(sampled, deaths):
    design = SampleDesign(kind="probe", sampled=np.asarray(sampled),
                          hdss_ids=frozenset())
    return SampleData(design=design, deaths=np.asarray(deaths))


def simulate(rng, villages, beta, gamma, per_cell=260):
    x = rng.uniform(0.0, 1.0, size=(villages, 2))
    n = np.full((villages, 4), per_cell)
    probs = expit((x @ beta)[:, None] + np.asarray(gamma)[None, :])
    y = rng.binomial(n, probs)
    return make_data(n, y), x


# --------------------------------------------------------------- closed form

def test_pooled_rate_is_total_ratio():
    data = make_data([[10, 20, 30, 40], [0, 0, 0, 0]],
                     [[1, 2, 3, 4], [0, 0, 0, 0]])
    fit = fit_naive(data)
    assert fit.coefficients["rate"] == pytest.approx(10 / 100)
    assert fit.probs.shape == (2, 4)
    assert np.all(fit.probs == 0.1)
    assert fit.converged


def test_pooled_requires_samples():
    data = make_data(np.zeros((3, 4), dtype=int), np.zeros((3, 4), dtype=int))
    with pytest.raises(ValueError):
        fit_naive(data)


def test_stratified_rates_per_column():
    data = make_data([[100, 200, 100, 50], [100, 0, 100, 50]],
                     [[10, 30, 2, 5], [10, 0, 2, 5]])
    fit = fit_age_sex(data)
    assert fit.coefficients["rates"] == pytest.approx([0.1, 0.15, 0.02, 0.1])
    assert np.array_equal(fit.probs[0], fit.probs[1])


def test_stratified_rejects_empty_stratum():
    data = make_data([[100, 0, 100, 100]], [[1, 0, 1, 1]])
    with pytest.raises(ValueError):
        fit_age_sex(data)


# ---------------------------------------------------------------- likelihood

def test_logistic_recovers_known_coefficients():
    beta = np.array([-1.1, 0.7])
    gamma = np.array([-2.9, -2.0, -3.4, -2.6])
    rng = seeds.stream(31, "estimator-recovery")
    data, x = simulate(rng, 20, beta, gamma, per_cell=100_000)
    fit = fit_logistic_mle(data, x)
    assert fit.converged
    assert fit.coefficients["slopes"] == pytest.approx(beta, abs=0.05)
    assert fit.coefficients["stratum_intercepts"] == pytest.approx(gamma, abs=0.05)
    # errors scale like 1/sqrt(total children); estimates sit within 4 se
    z_beta = (fit.coefficients["slopes"] - beta) / fit.standard_errors["slopes"]
    z_gamma = (fit.coefficients["stratum_intercepts"] - gamma) / fit.standard_errors["stratum_intercepts"]
    assert np.all(np.abs(z_beta) < 4)
    assert np.all(np.abs(z_gamma) < 4)


def test_logistic_matches_derivative_free_oracle():
    result = check_mle_oracle(instances=20)
    assert result.passed, result.detail


def test_logistic_matches_scipy_bfgs():
    scipy_opt = pytest.importorskip("scipy.optimize")
    rng = seeds.stream(32, "estimator-bfgs")
    data, x = simulate(rng, 8, [-0.8, 0.5], [-2.5, -2.0, -3.0, -2.2])
    fit = fit_logistic_mle(data, x)
    theta_hat = np.concatenate([fit.coefficients["slopes"], fit.coefficients["stratum_intercepts"]])

    n = data.design.sampled
    rows_i, rows_j = np.nonzero(n > 0)
    xmat = np.zeros((len(rows_i), 6))
    xmat[:, :2] = x[rows_i]
    xmat[np.arange(len(rows_i)), 2 + rows_j] = 1.0
    yy = data.deaths[rows_i, rows_j]
    nn = n[rows_i, rows_j]

    res = scipy_opt.minimize(lambda t: -binomial_loglik(yy, nn, xmat @ t),
                             np.zeros(6), method="BFGS",
                             options={"gtol": 1e-10, "maxiter": 500})
    assert np.max(np.abs(theta_hat - res.x)) < 1e-5


def test_logistic_prediction_covers_unsampled_villages():
    rng = seeds.stream(33, "estimator-predict")
    data, x = simulate(rng, 6, [-1.0, 0.6], [-2.8, -2.1, -3.3, -2.5])
    # blank out three villages: the fit must ignore them but still predict
    sampled = data.design.sampled.copy()
    deaths = data.deaths.copy()
    sampled[3:] = 0
    deaths[3:] = 0
    partial = make_data(sampled, deaths)
    fit = fit_logistic_mle(partial, x)
    assert fit.probs.shape == (6, 4)
    assert np.all(np.isfinite(fit.probs))
    eta = x @ fit.coefficients["slopes"]
    manual = expit(fit.coefficients["stratum_intercepts"][None, :] + eta[:, None])
    assert fit.probs == pytest.approx(manual)


def test_logistic_zero_trial_cells_do_not_affect_fit():
    rng = seeds.stream(34, "estimator-zero-cells")
    data, x = simulate(rng, 5, [-1.0, 0.6], [-2.8, -2.1, -3.3, -2.5])
    wide_n = np.zeros((7, 4), dtype=int)
    wide_y = np.zeros((7, 4), dtype=int)
    wide_n[:5] = data.design.sampled
    wide_y[:5] = data.deaths
    wide_x = np.vstack([x, [[0.2, 0.9], [0.7, 0.1]]])
    narrow = fit_logistic_mle(data, x)
    wide = fit_logistic_mle(make_data(wide_n, wide_y), wide_x)
    assert wide.coefficients["slopes"] == pytest.approx(narrow.coefficients["slopes"])
    assert wide.coefficients["stratum_intercepts"] == pytest.approx(narrow.coefficients["stratum_intercepts"])


# ------------------------------------------------------------ degenerate fits

def test_unsampled_stratum_drops_its_intercept():
    rng = seeds.stream(35, "estimator-dropped")
    data, x = simulate(rng, 6, [-1.0, 0.6], [-2.8, -2.1, -3.3, -2.5])
    n = data.design.sampled.copy()
    y = data.deaths.copy()
    n[:, 2] = 0
    y[:, 2] = 0
    fit = fit_logistic_mle(make_data(n, y), x)
    assert np.isnan(fit.coefficients["stratum_intercepts"][2])
    assert np.all(np.isnan(fit.probs[:, 2]))
    assert np.all(np.isfinite(fit.coefficients["slopes"]))
    assert 4 in fit.diagnostics["dropped_columns"]
    finite = [j for j in range(4) if j != 2]
    assert np.all(np.isfinite(fit.probs[:, finite]))


def test_constant_covariate_drops_its_slope():
    rng = seeds.stream(36, "estimator-constant")
    data, x = simulate(rng, 6, [-1.0, 0.6], [-2.8, -2.1, -3.3, -2.5])
    x = x.copy()
    x[:, 1] = 0.4
    fit = fit_logistic_mle(data, x)
    assert np.isnan(fit.coefficients["slopes"][1])
    assert np.all(np.isfinite(fit.coefficients["stratum_intercepts"]))
    assert 1 in fit.diagnostics["dropped_columns"]
    # the constant level is folded into the intercepts, so predictions at
    # that level are still finite
    assert np.all(np.isfinite(fit.probs))


def test_all_zero_deaths_still_produce_a_usable_fit():
    # boundary case: the maximiser walks the intercepts far negative until
    # the score underflows; either exit (clean or penalized) must yield
    # finite coefficients and near-zero probabilities
    n = np.full((4, 4), 200)
    y = np.zeros((4, 4), dtype=int)
    x = seeds.stream(37, "estimator-separation").uniform(size=(4, 2))
    fit = fit_logistic_mle(make_data(n, y), x)
    assert fit.converged or fit.diagnostics["penalized"]
    assert np.all(np.isfinite(fit.coefficients["stratum_intercepts"]))
    assert np.all(fit.probs < 0.01)


def test_ridge_penalty_shrinks_coefficients():
    from hyaksim.estimators import _irls

    rng = seeds.stream(38, "estimator-ridge")
    data, x = simulate(rng, 6, [-1.0, 0.6], [-2.8, -2.1, -3.3, -2.5])
    n = data.design.sampled
    rows_i, rows_j = np.nonzero(n > 0)
    xmat = np.zeros((len(rows_i), 6))
    xmat[:, :2] = x[rows_i]
    xmat[np.arange(len(rows_i)), 2 + rows_j] = 1.0
    yy = data.deaths[rows_i, rows_j]
    nn = n[rows_i, rows_j]
    plain, ok_plain, _, _ = _irls(xmat, yy, nn)
    shrunk, ok_ridge, _, _ = _irls(xmat, yy, nn, ridge=50.0)
    assert ok_plain and ok_ridge
    assert np.linalg.norm(shrunk) < np.linalg.norm(plain)


def test_logistic_validates_covariates():
    data = make_data(np.full((3, 4), 10), np.zeros((3, 4), dtype=int))
    with pytest.raises(ValueError):
        fit_logistic_mle(data, np.zeros((3, 3)))
    with pytest.raises(ValueError):
        fit_logistic_mle(data, np.zeros((2, 2)))


def test_fit_result_shape():
    data = make_data([[50, 50, 50, 50]], [[5, 5, 5, 5]])
    fit = fit_naive(data)
    assert isinstance(fit, FitResult)
    assert fit.model == "naive"


def test_age_sex_collapses_to_naive_on_uniform_data():
    data = make_data(np.full((3, 4), 100), np.full((3, 4), 7))
    assert fit_age_sex(data).probs == pytest.approx(fit_naive(data).probs)


def test_boundary_rates_are_flagged():
    zero = make_data(np.full((2, 4), 50), np.zeros((2, 4), dtype=int))
    assert fit_naive(zero).diagnostics["boundary"]
    assert np.all(fit_naive(zero).probs == 0.0)
    some = make_data(np.full((2, 4), 50), np.full((2, 4), 3))
    assert not fit_naive(some).diagnostics["boundary"]


def test_covariate_fit_dominates_embedded_age_sex_likelihood():
    rng = seeds.stream(39, "estimator-nesting")
    data, x = simulate(rng, 10, [-1.0, 0.6], [-2.8, -2.1, -3.3, -2.5])
    n = data.design.sampled
    rows_i, rows_j = np.nonzero(n > 0)
    yy = data.deaths[rows_i, rows_j]
    nn = n[rows_i, rows_j]

    def loglik(beta, gamma):
        eta = x[rows_i] @ beta + np.asarray(gamma)[rows_j]
        return binomial_loglik(yy, nn, eta)

    mle = fit_logistic_mle(data, x)
    rates = fit_age_sex(data).coefficients["rates"]
    embedded = np.log(rates / (1.0 - rates))
    ll_mle = loglik(mle.coefficients["slopes"], mle.coefficients["stratum_intercepts"])
    assert ll_mle >= loglik(np.zeros(2), embedded) - 1e-9


def test_predictions_are_permutation_equivariant():
    rng = seeds.stream(40, "estimator-permute")
    data, x = simulate(rng, 8, [-1.0, 0.6], [-2.8, -2.1, -3.3, -2.5])
    perm = rng.permutation(8)
    shuffled = make_data(data.design.sampled[perm], data.deaths[perm])
    for fitter, args in ((fit_naive, ()), (fit_age_sex, ()),
                         (fit_logistic_mle, (x,))):
        base = fitter(data, *args)
        moved = fitter(shuffled, *(a[perm] for a in args))
        assert moved.probs == pytest.approx(base.probs[perm], abs=1e-8)
