"""Survey designs over a realised population.

Two designs produce the observed data.  The cluster design picks a handful
of villages at random and samples a fixed number of children per stratum in
each.  The hybrid design enumerates every child in the surveillance
villages and spreads a small survey budget over the remaining villages in
proportion to the death counts predicted by a regression fitted to the
surveillance data alone.  Observed deaths in a sampled cell are
hypergeometric: children are drawn without replacement from the cell's
realised population.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .synth import STRATA, PopulationFrame

__all__ = [
    "AllocationError",
    "SampleDesign",
    "SampleData",
    "cluster_sample",
    "select_hdss_villages",
    "informed_allocation",
    "hyak_design",
    "hdss_census_data",
    "draw_sample_outcomes",
]

GIRL_STRATA = (0, 2)
BOY_STRATA = (1, 3)


class AllocationError(ValueError):
    """The requested allocation cannot be honoured."""


@dataclass(frozen=True)
class SampleDesign:
    """How many children are drawn from each cell.

    kind     : "cluster" or "hyak" (tests may build ad-hoc kinds)
    sampled  : (I, STRATA) children drawn per cell
    hdss_ids : villages under full enumeration (empty for cluster)
    """

    kind: str
    sampled: np.ndarray
    hdss_ids: frozenset

    def __post_init__(self):
        n = np.asarray(self.sampled, dtype=int)
        if n.ndim != 2 or n.shape[1] != STRATA:
            raise ValueError("sampled must be (villages, strata)")
        if np.any(n < 0):
            raise ValueError("sample sizes cannot be negative")
        object.__setattr__(self, "sampled", n)

    @property
    def total_sampled(self) -> int:
        return int(self.sampled.sum())

    def sampled_villages(self) -> np.ndarray:
        return np.nonzero(self.sampled.sum(axis=1) > 0)[0]


@dataclass(frozen=True)
class SampleData:
    """A design together with the deaths it observed."""

    design: SampleDesign
    deaths: np.ndarray

    def __post_init__(self):
        y = np.asarray(self.deaths, dtype=int)
        if y.shape != self.design.sampled.shape:
            raise ValueError("deaths shape must match the design")
        if np.any(y < 0) or np.any(y > self.design.sampled):
            raise ValueError("deaths must lie in [0, sampled]")
        object.__setattr__(self, "deaths", y)

    @property
    def total_observed_deaths(self) -> int:
        return int(self.deaths.sum())


def cluster_sample(rng: np.random.Generator, frame: PopulationFrame,
                   villages: int = 5, per_stratum: int = 260) -> SampleDesign:
    """Uniformly choose villages without replacement and take the same
    number of children from every stratum in each: with the defaults,
    5 villages x 4 strata x 260 = 5,200 children, half girls and half boys."""
    icount = frame.village_count
    if not 1 <= villages <= icount:
        raise AllocationError(f"cannot pick {villages} of {icount} villages")
    chosen = rng.choice(icount, size=villages, replace=False)
    if np.any(frame.children[chosen] < per_stratum):
        raise AllocationError("per-stratum take exceeds cell population")
    sampled = np.zeros((icount, STRATA), dtype=int)
    sampled[chosen, :] = per_stratum
    return SampleDesign(kind="cluster", sampled=sampled, hdss_ids=frozenset())


def select_hdss_villages(rng: np.random.Generator, covariates: np.ndarray) -> tuple:
    """Pick the three surveillance villages.

    The first two anchor the covariate range: the village where both
    covariates are largest (max x1*x2) and the village where both are
    smallest (max (1-x1)*(1-x2)).  The third is uniform among the rest, so
    the surveillance set is not purely extreme."""
    x = np.asarray(covariates, dtype=float)
    icount = len(x)
    if icount < 3:
        raise ValueError("need at least three villages")
    first = int(np.argmax(x[:, 0] * x[:, 1]))
    low = (1.0 - x[:, 0]) * (1.0 - x[:, 1])
    low[first] = -np.inf
    second = int(np.argmax(low))
    rest = [i for i in range(icount) if i not in (first, second)]
    third = int(rng.choice(rest))
    return (first, second, third)


def informed_allocation(predicted: np.ndarray, budget: int, caps: np.ndarray) -> np.ndarray:
    """Integer allocation proportional to predictions, by largest remainder.

    Cells receive floor(budget * share) plus one extra for the largest
    fractional parts (ties broken by lowest index).  A cell never exceeds
    its cap; overshoot is redistributed over the uncapped cells by the same
    rule.  If every remaining prediction is zero during redistribution the
    leftover spreads uniformly.  All-zero predictions up front, or a budget
    above the total capacity, are rejected.
    """
    pred = np.asarray(predicted, dtype=float).ravel()
    cap = np.asarray(caps, dtype=int).ravel()
    if pred.shape != cap.shape:
        raise ValueError("predictions and caps must align")
    if np.any(pred < 0):
        raise AllocationError("negative predicted deaths")
    budget = int(budget)
    if budget < 0:
        raise AllocationError("budget cannot be negative")
    if budget == 0:
        return np.zeros_like(cap)
    if budget > cap.sum():
        raise AllocationError(f"budget {budget} exceeds capacity {cap.sum()}")
    if pred.sum() <= 0:
        raise AllocationError("all predicted deaths are zero")

    alloc = np.zeros_like(cap)
    active = np.ones(len(cap), dtype=bool)
    remaining = budget
    while remaining > 0:
        idx = np.nonzero(active)[0]
        weights = pred[idx]
        wsum = weights.sum()
        if wsum <= 0:
            weights = np.ones(len(idx))
            wsum = float(len(idx))
        quota = remaining * weights / wsum
        base = np.floor(quota).astype(int)
        leftover = remaining - int(base.sum())
        if leftover > 0:
            # stable sort: equal remainders resolve to the lowest index
            order = np.argsort(-(quota - base), kind="stable")
            base[order[:leftover]] += 1
        over = base > cap[idx]
        if not np.any(over):
            alloc[idx] = base
            break
        hit = idx[over]
        alloc[hit] = cap[hit]
        active[hit] = False
        remaining = budget - int(alloc.sum())
        if not np.any(active) and remaining > 0:
            raise AllocationError("capacity exhausted during redistribution")
    return alloc


def hyak_design(frame: PopulationFrame, hdss_ids, predicted_probs: np.ndarray,
                budget: int = 1000) -> SampleDesign:
    """Full enumeration of the surveillance villages plus an informed survey.

    predicted_probs must cover every village and stratum; only the rows of
    non-surveillance villages are consulted, scaled by cell population to
    give predicted death counts for the allocation."""
    ids = frozenset(int(i) for i in hdss_ids)
    icount = frame.village_count
    if not ids or not all(0 <= i < icount for i in ids):
        raise ValueError("invalid surveillance village ids")
    probs = np.asarray(predicted_probs, dtype=float)
    if probs.shape != frame.children.shape:
        raise ValueError("predicted_probs must be (villages, strata)")
    if np.any(~np.isfinite(probs)) or np.any(probs < 0):
        raise ValueError("predicted probabilities must be finite and non-negative")
    others = np.array(sorted(set(range(icount)) - ids))
    sampled = np.zeros_like(frame.children)
    sampled[list(ids), :] = frame.children[list(ids), :]
    predicted_deaths = frame.children[others] * probs[others]
    alloc = informed_allocation(predicted_deaths.ravel(), budget,
                                frame.children[others].ravel())
    sampled[others, :] = alloc.reshape(len(others), STRATA)
    return SampleDesign(kind="hyak", sampled=sampled, hdss_ids=ids)


def hdss_census_data(frame: PopulationFrame, hdss_ids) -> SampleData:
    """The surveillance villages see their full population and all deaths."""
    ids = sorted(int(i) for i in hdss_ids)
    sampled = np.zeros_like(frame.children)
    deaths = np.zeros_like(frame.deaths)
    sampled[ids, :] = frame.children[ids, :]
    deaths[ids, :] = frame.deaths[ids, :]
    design = SampleDesign(kind="hyak", sampled=sampled, hdss_ids=frozenset(ids))
    return SampleData(design=design, deaths=deaths)


def draw_sample_outcomes(rng: np.random.Generator, design: SampleDesign,
                         frame: PopulationFrame) -> SampleData:
    """Observe deaths for a design: per cell, sampling n of N children
    without replacement captures a hypergeometric share of the Y deaths."""
    n = design.sampled
    if n.shape != frame.children.shape:
        raise ValueError("design does not match the frame")
    if np.any(n > frame.children):
        raise AllocationError("design samples more children than exist")
    total = frame.children
    dead = frame.deaths
    y = np.zeros_like(n)
    partial = (n > 0) & (n < total)
    if np.any(partial):
        y[partial] = rng.hypergeometric(dead[partial], total[partial] - dead[partial],
                                        n[partial])
    census = n == total
    y[census] = dead[census]  # exact by construction, no draw needed
    return SampleData(design=design, deaths=y)
