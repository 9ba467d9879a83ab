"""Bayesian spatial mortality model, sampled by Metropolis-within-Gibbs.

The model extends the covariate logistic fit with two village-level random
effects: an independent shock and a spatially smoothed effect whose prior
says each village centers on the average of its neighbors.  Flat priors on
the regression coefficients, Gamma priors on both precisions.

Sampler layout, chosen for a single-CPU budget:

* all chains advance in lockstep through vectorized numpy ops
* regression coefficients move as one joint random-walk block
* village shocks move simultaneously (their conditionals are independent)
* spatial effects move color class by color class, so sites updated
  together are never neighbors
* both precisions are conjugate given the effects and are Gibbs-sampled
* the spatial field is recentered to sum zero after every sweep, with the
  level absorbed into the stratum intercepts (the likelihood only sees
  their sum, and the intercepts carry a flat prior)

Proposal scales adapt during burn-in only, so kept draws come from a
fixed transition kernel.  Villages without sampled children contribute no
likelihood term; their effects follow the prior conditionals, which is
exactly how predictions for unsampled villages are integrated.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .estimators import FitResult
from .geometry import VillageMap
from .sampling import SampleData
from .synth import STRATA
from .util import expit, log1pexp

__all__ = ["PriorSpec", "MCMCSettings", "fit_spatial_bayes", "split_rhat"]


@dataclass(frozen=True)
class PriorSpec:
    """Gamma(shape, rate) on both precisions; flat on the coefficients."""

    precision_shape: float = 5.0
    precision_rate: float = 1.0

    def __post_init__(self):
        if self.precision_shape <= 0 or self.precision_rate <= 0:
            raise ValueError("Gamma prior needs positive shape and rate")


@dataclass(frozen=True)
class MCMCSettings:
    chains: int = 4
    iterations: int = 20_000
    burn_in: int | None = None  # None: half the iterations
    thinning: int = 5

    def __post_init__(self):
        if self.chains < 1:
            raise ValueError("need at least one chain")
        if self.iterations < 2:
            raise ValueError("too few iterations")
        burn = self.resolved_burn_in
        if not 0 <= burn < self.iterations:
            raise ValueError("burn-in must leave draws to keep")
        if self.thinning < 1:
            raise ValueError("thinning must be positive")
        if (self.iterations - burn) // self.thinning < 4:
            raise ValueError("settings keep fewer than 4 draws per chain")

    @property
    def resolved_burn_in(self) -> int:
        return self.iterations // 2 if self.burn_in is None else self.burn_in


def greedy_coloring(neighbors) -> list:
    """Split villages into classes with no within-class adjacency."""
    icount = len(neighbors)
    order = sorted(range(icount), key=lambda i: -len(neighbors[i]))
    color = np.full(icount, -1)
    for i in order:
        used = {color[j] for j in neighbors[i] if color[j] >= 0}
        c = 0
        while c in used:
            c += 1
        color[i] = c
    return [np.nonzero(color == c)[0] for c in range(int(color.max()) + 1)]


def split_rhat(trace: np.ndarray) -> float:
    """Potential scale reduction with each chain split in half.

    trace has shape (draws, chains).  Values near 1 signal that chain
    halves agree; above about 1.1 the sampler has not mixed."""
    draws, chains = trace.shape
    half = draws // 2
    if half < 2:
        return np.inf
    seqs = np.concatenate([trace[:half], trace[half:2 * half]], axis=1)
    length = seqs.shape[0]
    means = seqs.mean(axis=0)
    within = float(seqs.var(axis=0, ddof=1).mean())
    between = length * float(means.var(ddof=1))
    if within <= 0:
        return 1.0 if between <= 0 else np.inf
    var_plus = (length - 1) / length * within + between / length
    return float(np.sqrt(var_plus / within))


def _chain_loglik(y, n, eta):
    """Per-chain, per-village log likelihood: (C, I, J) eta -> (C, I)."""
    return (y * eta - n * log1pexp(eta)).sum(axis=-1)


def fit_spatial_bayes(rng: np.random.Generator, data: SampleData,
                      covariates: np.ndarray, village_map: VillageMap,
                      priors: PriorSpec = PriorSpec(),
                      settings: MCMCSettings = MCMCSettings()) -> FitResult:
    """Posterior for the random-effects logistic model on the village graph.

    Returns posterior-mean probabilities for every village and stratum,
    posterior means and spreads of the coefficients and variance
    components, and split-chain convergence diagnostics.
    """
    x = np.asarray(covariates, dtype=float)
    icount = village_map.village_count
    if x.shape != (icount, 2):
        raise ValueError("covariates must be (villages, 2)")
    if data.design.sampled.shape != (icount, STRATA):
        raise ValueError("sample does not match the village map")

    y = data.deaths.astype(float)
    n = data.design.sampled.astype(float)
    chains = settings.chains
    burn = settings.resolved_burn_in
    a, b = priors.precision_shape, priors.precision_rate

    laplacian = village_map.structure_matrix()
    degrees = np.asarray(village_map.degrees, dtype=float)
    adjacency = np.diag(degrees) - laplacian
    colors = greedy_coloring(village_map.neighbors)

    # overdispersed starts: intercepts jittered around the pooled logit
    pooled = (y.sum() + 0.5) / (n.sum() + 1.0) if n.sum() > 0 else 0.05
    base_logit = np.log(pooled / (1.0 - pooled))
    beta = rng.normal(0.0, 0.3, size=(chains, 2))
    gamma = base_logit + rng.normal(0.0, 0.5, size=(chains, STRATA))
    eps = np.zeros((chains, icount))
    spat = np.zeros((chains, icount))
    tau_eps = rng.gamma(a, 1.0 / b, size=chains)
    tau_s = rng.gamma(a, 1.0 / b, size=chains)

    def full_eta(beta, gamma, eps, spat):
        site = (x @ beta.T).T + eps + spat  # (C, I)
        return site[:, :, None] + gamma[:, None, :]

    def village_ll(beta, gamma, eps, spat):
        return _chain_loglik(y, n, full_eta(beta, gamma, eps, spat))

    vll = village_ll(beta, gamma, eps, spat)

    # per-chain log proposal scales, adapted during burn-in in batches; the
    # coefficient block also learns a full proposal covariance, since slopes
    # and intercepts are strongly correlated in the posterior
    dim = 2 + STRATA
    step_block = np.full(chains, np.log(0.05))
    step_eps = np.full(chains, np.log(0.5))
    step_spat = np.full(chains, np.log(0.5))
    targets = (0.234, 0.44, 0.44)
    BATCH = 50
    acc_block = np.zeros(chains)
    acc_eps = np.zeros(chains)
    acc_spat = np.zeros(chains)
    block_chol = np.tile(np.eye(dim), (chains, 1, 1))
    cov_active = False
    run_count = 0
    run_mean = np.zeros((chains, dim))
    run_m2 = np.zeros((chains, dim, dim))

    keep_total = (settings.iterations - burn) // settings.thinning
    trace = np.empty((keep_total, chains, dim + 2))
    p_sum = np.zeros((chains, icount, STRATA))
    eps_sum = np.zeros((chains, icount))
    spat_sum = np.zeros((chains, icount))
    kept = 0

    site_y = [y[sites] for sites in colors]
    site_n = [n[sites] for sites in colors]
    site_x = [x[sites] for sites in colors]
    site_deg = [degrees[sites] for sites in colors]

    for it in range(settings.iterations):
        if it % BATCH == 0:
            # draw a batch of standard variates up front; scales are applied
            # at use, so adaptation between batches stays effective
            z_block = rng.normal(size=(BATCH, chains, dim))
            lu_block = np.log(rng.uniform(size=(BATCH, chains)))
            z_eps = rng.normal(size=(BATCH, chains, icount))
            lu_eps = np.log(rng.uniform(size=(BATCH, chains, icount)))
            z_spat = rng.normal(size=(BATCH, chains, icount))
            lu_spat = np.log(rng.uniform(size=(BATCH, chains, icount)))
        slot = it % BATCH

        # joint random-walk move of slopes and intercepts
        prop = np.einsum("cij,cj->ci", block_chol, z_block[slot])
        prop *= np.exp(step_block)[:, None]
        beta_new = beta + prop[:, :2]
        gamma_new = gamma + prop[:, 2:]
        vll_new = village_ll(beta_new, gamma_new, eps, spat)
        delta = vll_new.sum(axis=1) - vll.sum(axis=1)
        accept = lu_block[slot] < delta
        beta = np.where(accept[:, None], beta_new, beta)
        gamma = np.where(accept[:, None], gamma_new, gamma)
        vll = np.where(accept[:, None], vll_new, vll)
        acc_block += accept

        # simultaneous village-shock moves: conditionals are independent
        eps_new = eps + z_eps[slot] * np.exp(step_eps)[:, None]
        vll_new = village_ll(beta, gamma, eps_new, spat)
        delta = (vll_new - vll
                 - 0.5 * tau_eps[:, None] * (eps_new ** 2 - eps ** 2))
        accept = lu_eps[slot] < delta
        eps = np.where(accept, eps_new, eps)
        vll = np.where(accept, vll_new, vll)
        acc_eps += accept.mean(axis=1)

        # spatial moves one color class at a time; within a class no two
        # sites are neighbors, so their conditionals do not interact
        base_site = (x @ beta.T).T + eps  # (C, I), spatial part excluded
        for k, sites in enumerate(colors):
            s_old = spat[:, sites]
            s_new = s_old + z_spat[slot][:, sites] * np.exp(step_spat)[:, None]
            eta3 = ((base_site[:, sites] + s_new)[:, :, None]
                    + gamma[:, None, :])
            ll_new = (site_y[k] * eta3 - site_n[k] * log1pexp(eta3)).sum(axis=-1)
            nbr = spat @ adjacency[:, sites]
            prior_delta = -0.5 * tau_s[:, None] * (
                site_deg[k] * (s_new ** 2 - s_old ** 2)
                - 2.0 * (s_new - s_old) * nbr)
            delta = ll_new - vll[:, sites] + prior_delta
            accept = lu_spat[slot][:, sites] < delta
            spat[:, sites] = np.where(accept, s_new, s_old)
            vll[:, sites] = np.where(accept, ll_new, vll[:, sites])
            acc_spat += accept.sum(axis=1) / icount

        # recenter the spatial field; the level moves into the intercepts
        level = spat.mean(axis=1)
        spat -= level[:, None]
        gamma += level[:, None]

        # conjugate precision updates
        tau_eps = rng.gamma(a + 0.5 * icount,
                            1.0 / (b + 0.5 * (eps ** 2).sum(axis=1)))
        quad = np.einsum("ci,ij,cj->c", spat, laplacian, spat)
        quad = np.maximum(quad, 0.0)
        tau_s = rng.gamma(a + 0.5 * (icount - 1), 1.0 / (b + 0.5 * quad))

        if it < burn:
            theta = np.concatenate([beta, gamma], axis=1)
            run_count += 1
            d = theta - run_mean
            run_mean += d / run_count
            run_m2 += np.einsum("ci,cj->cij", d, theta - run_mean)
            if (it + 1) % BATCH == 0:
                batch = (it + 1) // BATCH
                gain = 1.0 / np.sqrt(batch)
                step_block = np.clip(step_block + gain * (acc_block / BATCH - targets[0]), -8, 3)
                step_eps = np.clip(step_eps + gain * (acc_eps / BATCH - targets[1]), -8, 3)
                step_spat = np.clip(step_spat + gain * (acc_spat / BATCH - targets[2]), -8, 3)
                acc_block[:] = 0
                acc_eps[:] = 0
                acc_spat[:] = 0
                if run_count >= 20 * dim:
                    cov = run_m2 / (run_count - 1)
                    cov *= 2.38 ** 2 / dim
                    cov += 1e-9 * np.eye(dim)
                    try:
                        block_chol = np.linalg.cholesky(cov)
                    except np.linalg.LinAlgError:
                        pass  # flat posterior; keep the isotropic proposal
                    else:
                        if not cov_active:
                            cov_active = True
                            step_block[:] = 0.0  # covariance carries the scale now
            continue

        if (it - burn) % settings.thinning == 0 and kept < keep_total:
            trace[kept, :, :2] = beta
            trace[kept, :, 2:dim] = gamma
            trace[kept, :, -2] = 1.0 / tau_eps
            trace[kept, :, -1] = 1.0 / tau_s
            p_sum += expit(full_eta(beta, gamma, eps, spat))
            eps_sum += eps
            spat_sum += spat
            kept += 1

    trace = trace[:kept]
    draws = kept * chains
    flat = trace.reshape(-1, trace.shape[-1])
    names = ["slope_1", "slope_2", "intercept_1", "intercept_2",
             "intercept_3", "intercept_4", "var_village", "var_spatial"]
    rhats = {name: split_rhat(trace[:, :, k]) for k, name in enumerate(names)}
    converged = all(r <= 1.1 for r in rhats.values())

    probs = p_sum.sum(axis=0) / draws
    post_mean = flat.mean(axis=0)
    post_sd = flat.std(axis=0, ddof=1)

    return FitResult(
        model="covariates_space",
        coefficients={"slopes": post_mean[:2],
                      "stratum_intercepts": post_mean[2:2 + STRATA]},
        probs=probs,
        converged=converged,
        standard_errors={"slopes": post_sd[:2],
                         "stratum_intercepts": post_sd[2:2 + STRATA]},
        random_effects={"village": eps_sum.sum(axis=0) / draws,
                        "spatial": spat_sum.sum(axis=0) / draws},
        variance_posteriors={
            "village": {"mean": float(post_mean[-2]), "sd": float(post_sd[-2]),
                        "precision_mean": float(np.mean(1.0 / flat[:, -2]))},
            "spatial": {"mean": float(post_mean[-1]), "sd": float(post_sd[-1]),
                        "precision_mean": float(np.mean(1.0 / flat[:, -1]))},
        },
        diagnostics={"rhat": rhats, "kept_draws": int(draws),
                     "chains": chains, "iterations": settings.iterations},
    )
