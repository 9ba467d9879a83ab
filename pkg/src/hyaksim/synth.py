"""Synthetic mortality surface for a study region.

The probability that a child dies before age five varies by village and by
age-sex stratum on the logit scale: stratum baselines, two village-level
covariates with fixed slopes, an independent village shock, and a spatially
smooth village effect tied to the neighbour graph.  True death counts are
binomial draws against those probabilities.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import VillageMap, is_connected
from .util import expit, logit

__all__ = [
    "STRATUM_LABELS",
    "STRATA",
    "DisconnectedRegionError",
    "MortalityParams",
    "PopulationFrame",
    "gen_covariates",
    "sample_icar",
    "compute_true_probs",
    "draw_deaths",
    "generate_frame",
    "odds_factor_interval",
]

# Stratum order is fixed everywhere in the package: girls then boys within
# age band, infants first.
STRATUM_LABELS = ("girls_under_1", "boys_under_1", "girls_1_to_4", "boys_1_to_4")
STRATA = len(STRATUM_LABELS)


class DisconnectedRegionError(ValueError):
    """The neighbour graph has more than one component, so the smooth
    spatial effect is not identified up to a single level constraint."""


def _default_risks():
    return np.array([0.050, 0.117, 0.032, 0.071])


def _default_slopes():
    return np.array([-1.1, 0.7])


@dataclass(frozen=True)
class MortalityParams:
    """Truth-generating parameters.

    stratum_risks : probability of death by stratum at covariates 0 and no
                    village effects
    slopes        : log-odds change per unit of each village covariate
    sigma2_village: variance of the independent village shock
    sigma2_spatial: conditional variance scale of the smooth spatial effect
    """

    stratum_risks: np.ndarray = field(default_factory=_default_risks)
    slopes: np.ndarray = field(default_factory=_default_slopes)
    sigma2_village: float = 0.22
    sigma2_spatial: float = 0.48

    def __post_init__(self):
        risks = np.asarray(self.stratum_risks, dtype=float)
        slopes = np.asarray(self.slopes, dtype=float)
        if risks.shape != (STRATA,):
            raise ValueError(f"expected {STRATA} stratum risks")
        if np.any(risks <= 0) or np.any(risks >= 1):
            raise ValueError("stratum risks must lie strictly inside (0, 1)")
        if slopes.shape != (2,):
            raise ValueError("expected 2 covariate slopes")
        if self.sigma2_village < 0 or self.sigma2_spatial < 0:
            raise ValueError("variance components cannot be negative")
        object.__setattr__(self, "stratum_risks", risks)
        object.__setattr__(self, "slopes", slopes)

    @property
    def stratum_logits(self) -> np.ndarray:
        return logit(self.stratum_risks)


def odds_factor_interval(sigma2: float, coverage: float = 0.95) -> tuple[float, float]:
    """Central range of the multiplicative odds factor exp(effect) implied
    by a normal effect with variance sigma2."""
    if not 0 < coverage < 1:
        raise ValueError("coverage must be in (0, 1)")
    from statistics import NormalDist

    z = NormalDist().inv_cdf(0.5 + coverage / 2.0)
    half = z * float(np.sqrt(sigma2))
    return float(np.exp(-half)), float(np.exp(half))


def gen_covariates(rng: np.random.Generator, village_count: int) -> np.ndarray:
    """Two independent uniform(0, 1) covariates per village."""
    if village_count < 1:
        raise ValueError("village_count must be positive")
    return rng.uniform(0.0, 1.0, size=(village_count, 2))


def sample_icar(rng: np.random.Generator, village_map: VillageMap, sigma2: float,
                size: int | None = None) -> np.ndarray:
    """Draw smooth spatial effects over the villages.

    The effect vector has an improper joint density with precision
    (1/sigma2) * Q, Q the graph Laplacian, equivalent to each village being
    conditionally normal around the mean of its neighbours with variance
    sigma2 / degree.  Sampling works in the spectral basis: independent
    normals with variance sigma2 / eigenvalue along every eigenvector with
    positive eigenvalue, and coefficient zero along the constant null
    vector.  Draws therefore sum to zero and have covariance
    sigma2 * pinv(Q).
    """
    if sigma2 < 0:
        raise ValueError("sigma2 must be non-negative")
    if not is_connected(village_map.neighbors):
        raise DisconnectedRegionError("neighbour graph is not connected")
    q = village_map.structure_matrix()
    eigval, eigvec = np.linalg.eigh(q)
    null = eigval < 1e-9 * max(eigval[-1], 1.0)
    if int(null.sum()) != 1:
        raise DisconnectedRegionError("expected exactly one null eigenvalue")
    keep = ~null
    scale = np.sqrt(sigma2 / eigval[keep])
    n = 1 if size is None else int(size)
    z = rng.standard_normal((n, keep.sum())) * scale
    draws = z @ eigvec[:, keep].T
    draws -= draws.mean(axis=1, keepdims=True)  # pin the sum at exactly zero
    return draws[0] if size is None else draws


def compute_true_probs(params: MortalityParams, covariates: np.ndarray,
                       village_shocks: np.ndarray, spatial: np.ndarray) -> np.ndarray:
    """Death probabilities per village and stratum on the truth model."""
    x = np.asarray(covariates, dtype=float)
    eps = np.asarray(village_shocks, dtype=float)
    s = np.asarray(spatial, dtype=float)
    if x.ndim != 2 or x.shape[1] != 2:
        raise ValueError("covariates must be (villages, 2)")
    if eps.shape != (len(x),) or s.shape != (len(x),):
        raise ValueError("village effects must be one value per village")
    eta = (x @ params.slopes + eps + s)[:, None] + params.stratum_logits[None, :]
    return expit(eta)


def draw_deaths(rng: np.random.Generator, probs: np.ndarray, children) -> np.ndarray:
    """Binomial deaths per cell given probabilities and children at risk."""
    probs = np.asarray(probs, dtype=float)
    counts = np.broadcast_to(np.asarray(children, dtype=int), probs.shape)
    if np.any(counts < 0):
        raise ValueError("children counts cannot be negative")
    if np.any(probs < 0) or np.any(probs > 1):
        raise ValueError("probabilities outside [0, 1]")
    return rng.binomial(counts, probs)


@dataclass(frozen=True)
class PopulationFrame:
    """One realised truth: who lives where, and who died.

    children  : (I, STRATA) children at risk per cell
    covariates: (I, 2) village covariates
    shocks    : (I,) independent village effects
    spatial   : (I,) smooth spatial effects
    probs     : (I, STRATA) true death probabilities
    deaths    : (I, STRATA) realised true death counts
    """

    children: np.ndarray
    covariates: np.ndarray
    shocks: np.ndarray
    spatial: np.ndarray
    probs: np.ndarray
    deaths: np.ndarray

    @property
    def village_count(self) -> int:
        return len(self.children)

    @property
    def total_children(self) -> int:
        return int(self.children.sum())

    @property
    def total_deaths(self) -> int:
        return int(self.deaths.sum())


def generate_frame(rng: np.random.Generator, village_map: VillageMap,
                   params: MortalityParams, covariates: np.ndarray,
                   children_per_cell: int = 350) -> PopulationFrame:
    """Realise one truth over the region.

    Draw order is fixed (village shocks, then spatial effects, then deaths)
    so a given generator state always produces the same frame.  Covariates
    are supplied by the caller because they are a fixed feature of the
    region, not of one realisation.
    """
    icount = village_map.village_count
    x = np.asarray(covariates, dtype=float)
    if x.shape != (icount, 2):
        raise ValueError("covariates must match the village count")
    if children_per_cell < 1:
        raise ValueError("children_per_cell must be positive")
    eps = rng.normal(0.0, np.sqrt(params.sigma2_village), size=icount)
    spatial = sample_icar(rng, village_map, params.sigma2_spatial)
    probs = compute_true_probs(params, x, eps, spatial)
    children = np.full((icount, STRATA), int(children_per_cell))
    deaths = draw_deaths(rng, probs, children)
    return PopulationFrame(children=children, covariates=x, shocks=eps,
                           spatial=spatial, probs=probs, deaths=deaths)
