"""Cumulative cost curves for the two monitoring systems.

The DHS-like system pays a full census up front and then repeated survey
rounds.  The hybrid system pays a surveillance start-up plus an optional
baseline census up front, then cheaper surveillance visits and a small
survey each round.  Curves are yearly cumulative totals; the crossover is
the first (interpolated) time the hybrid curve dips to or below the
DHS-like curve.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["CostParams", "cumulative_cost", "crossover_year"]

CENSUS_SCOPES = ("none", "non_hdss", "full")


@dataclass(frozen=True)
class CostParams:
    census_cost_per_person: float = 20.0
    survey_cost_per_person: float = 40.0
    hdss_visit_cost: float = 7.50
    hdss_startup: float = 325_000.0
    rounds_per_year: int = 2
    horizon_years: int = 5
    population: int = 28_000
    dhs_sample_per_round: int = 5_200
    hdss_population: int = 4_200
    informed_sample_per_round: int = 1_000
    hyak_census_scope: str = "full"

    def __post_init__(self):
        rates = (self.census_cost_per_person, self.survey_cost_per_person,
                 self.hdss_visit_cost, self.hdss_startup)
        counts = (self.population, self.dhs_sample_per_round,
                  self.hdss_population, self.informed_sample_per_round)
        if any(r < 0 for r in rates) or any(c < 0 for c in counts):
            raise ValueError("costs and populations cannot be negative")
        if self.rounds_per_year < 1:
            raise ValueError("need at least one round per year")
        if self.horizon_years < 0:
            raise ValueError("horizon cannot be negative")
        if self.hyak_census_scope not in CENSUS_SCOPES:
            raise ValueError(f"hyak_census_scope must be one of {CENSUS_SCOPES}")
        if self.hdss_population > self.population:
            raise ValueError("surveillance population exceeds the region")


def _census_people(params: CostParams) -> int:
    if params.hyak_census_scope == "none":
        return 0
    if params.hyak_census_scope == "non_hdss":
        return params.population - params.hdss_population
    return params.population


def cumulative_cost(params: CostParams, system: str) -> np.ndarray:
    """Cumulative spend at years 0..horizon for one system."""
    if system == "dhs_like":
        upfront = params.population * params.census_cost_per_person
        annual = (params.rounds_per_year * params.dhs_sample_per_round
                  * params.survey_cost_per_person)
    elif system == "hyak":
        upfront = (params.hdss_startup
                   + _census_people(params) * params.census_cost_per_person)
        annual = params.rounds_per_year * (
            params.hdss_population * params.hdss_visit_cost
            + params.informed_sample_per_round * params.survey_cost_per_person)
    else:
        raise ValueError("system must be 'hyak' or 'dhs_like'")
    years = np.arange(params.horizon_years + 1)
    return upfront + annual * years.astype(float)


def crossover_year(params: CostParams):
    """First time within the horizon where the hybrid system is no more
    expensive, interpolating linearly between yearly totals.  None when the
    curves never meet inside the horizon."""
    hyak = cumulative_cost(params, "hyak")
    dhs = cumulative_cost(params, "dhs_like")
    gap = hyak - dhs  # crossover when the gap reaches zero from above
    if gap[0] <= 0:
        return 0.0
    for k in range(1, len(gap)):
        if gap[k] <= 0:
            return float(k - 1 + gap[k - 1] / (gap[k - 1] - gap[k]))
    return None
