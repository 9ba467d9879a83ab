"""Survey designs: cluster draws, informed allocation, outcome draws."""

import numpy as np
import pytest

from hyaksim import seeds
from hyaksim.geometry import build_neighbor_graph, default_layout
from hyaksim.sampling import (
    AllocationError,
    SampleData,
    SampleDesign,
    cluster_sample,
    draw_sample_outcomes,
    hdss_census_data,
    hyak_design,
    informed_allocation,
    select_hdss_villages,
)
from hyaksim.synth import (
    MortalityParams,
    PopulationFrame,
    gen_covariates,
    generate_frame,
)


def make_frame(seed=5):
    vmap = default_layout(4)
    params = MortalityParams()
    x = gen_covariates(seeds.stream(seed, "covariates"), vmap.village_count)
    return generate_frame(seeds.stream(seed, "truth", 0), vmap, params, x)


def plain_frame(children, deaths):
    """Frame with just enough structure for outcome draws."""
    children = np.asarray(children, dtype=int)
    icount = len(children)
    return PopulationFrame(
        children=children,
        covariates=np.full((icount, 2), 0.5),
        shocks=np.zeros(icount),
        spatial=np.zeros(icount),
        probs=np.full(children.shape, 0.1),
        deaths=np.asarray(deaths, dtype=int),
    )


# ---------------------------------------------------------------- allocation

def test_equal_predictions_split_by_largest_remainder():
    alloc = informed_allocation(np.ones(68), 1000, np.full(68, 350))
    assert alloc.sum() == 1000
    # 1000/68 = 14.70..., equal remainders resolve to the lowest indices
    assert np.all(alloc[:48] == 15)
    assert np.all(alloc[48:] == 14)


def test_capped_cell_redistributes():
    pred = np.ones(68)
    pred[0] = 1e6
    alloc = informed_allocation(pred, 1000, np.full(68, 350))
    assert alloc[0] == 350
    rest = alloc[1:]
    assert rest.sum() == 650
    # 650 over 67 equal weights: floor 9, first 47 by index get the extra
    assert np.all(rest[:47] == 10)
    assert np.all(rest[47:] == 9)


def test_zero_budget_allocates_nothing():
    alloc = informed_allocation(np.ones(10), 0, np.full(10, 5))
    assert alloc.shape == (10,) and not alloc.any()


def test_allocation_rejects_bad_inputs():
    with pytest.raises(AllocationError):
        informed_allocation(np.zeros(4), 10, np.full(4, 50))
    with pytest.raises(AllocationError):
        informed_allocation(np.ones(4), 201, np.full(4, 50))
    with pytest.raises(AllocationError):
        informed_allocation(np.array([1.0, -0.5]), 10, np.array([50, 50]))
    with pytest.raises(AllocationError):
        informed_allocation(np.ones(3), -1, np.full(3, 50))


def test_allocation_tracks_prediction_ratios():
    # ten cells at weight 23 vs ten at weight 10: totals should divide 2.3
    pred = np.array([23.0] * 10 + [10.0] * 10)
    alloc = informed_allocation(pred, 1000, np.full(20, 350))
    heavy = alloc[:10].sum()
    light = alloc[10:].sum()
    assert alloc.sum() == 1000
    assert heavy / light == pytest.approx(2.3, rel=0.02)


def test_allocation_invariants_random():
    rng = seeds.stream(202608, "alloc-fuzz")
    for _ in range(200):
        cells = int(rng.integers(1, 40))
        caps = rng.integers(0, 60, size=cells)
        if caps.sum() == 0:
            continue
        pred = rng.random(cells) * rng.integers(0, 2, size=cells)
        if pred.sum() <= 0:
            continue
        budget = int(rng.integers(0, caps.sum() + 1))
        alloc = informed_allocation(pred, budget, caps)
        assert alloc.sum() == budget
        assert np.all(alloc <= caps)
        assert np.all(alloc >= 0)


def test_zero_weight_cells_get_nothing_when_uncapped():
    pred = np.array([5.0, 0.0, 3.0, 0.0])
    alloc = informed_allocation(pred, 7, np.full(4, 100))
    assert alloc[1] == 0 and alloc[3] == 0
    assert alloc.sum() == 7


def test_uniform_fallback_when_positive_cells_cap_out():
    # all weight sits in cell 0, which caps at 2; the rest spreads evenly
    pred = np.array([9.0, 0.0, 0.0, 0.0])
    alloc = informed_allocation(pred, 8, np.array([2, 10, 10, 10]))
    assert alloc[0] == 2
    assert alloc.sum() == 8
    assert np.all(alloc[1:] == 2)


# ------------------------------------------------------------------- cluster

def test_cluster_sample_counts():
    frame = make_frame()
    design = cluster_sample(seeds.stream(5, "design", 0), frame)
    assert design.kind == "cluster"
    assert design.hdss_ids == frozenset()
    assert design.total_sampled == 5200
    chosen = design.sampled_villages()
    assert len(chosen) == 5
    assert np.all(design.sampled[chosen] == 260)
    untouched = np.setdiff1d(np.arange(frame.village_count), chosen)
    assert not design.sampled[untouched].any()
    # strata split evenly: half the children are girls
    assert design.sampled[:, [0, 2]].sum() == 2600


def test_cluster_sample_is_reproducible():
    frame = make_frame()
    a = cluster_sample(seeds.stream(5, "design", 3), frame)
    b = cluster_sample(seeds.stream(5, "design", 3), frame)
    assert np.array_equal(a.sampled, b.sampled)


def test_cluster_sample_rejects_oversized_take():
    frame = make_frame()
    with pytest.raises(AllocationError):
        cluster_sample(seeds.stream(5, "design", 0), frame, per_stratum=351)
    with pytest.raises(AllocationError):
        cluster_sample(seeds.stream(5, "design", 0), frame, villages=21)


# ------------------------------------------------------------ hdss selection

def test_select_hdss_frozen_example():
    x = np.array([[0.9, 0.9], [0.1, 0.1], [0.5, 0.5], [0.2, 0.8]])
    picked = select_hdss_villages(seeds.stream(1, "hdss"), x)
    assert picked[0] == 0
    assert picked[1] == 1
    assert picked[2] in (2, 3)
    assert len(set(picked)) == 3


def test_select_hdss_excludes_first_from_second():
    # village 0 maximises both products (.25 on each), so the low pick must
    # skip it and fall to village 3 (.24)
    x = np.array([[0.5, 0.5], [0.9, 0.05], [0.05, 0.9], [0.6, 0.4]])
    picked = select_hdss_villages(seeds.stream(2, "hdss"), x)
    assert picked[0] == 0
    assert picked[1] == 3
    assert picked[2] in (1, 2)


def test_select_hdss_three_villages():
    x = np.array([[0.9, 0.9], [0.1, 0.1], [0.5, 0.5]])
    picked = select_hdss_villages(seeds.stream(3, "hdss"), x)
    assert sorted(picked) == [0, 1, 2]
    with pytest.raises(ValueError):
        select_hdss_villages(seeds.stream(3, "hdss"), x[:2])


# --------------------------------------------------------------- hyak design

def test_hyak_design_census_plus_budget():
    frame = make_frame()
    hdss = select_hdss_villages(seeds.stream(5, "hdss"), frame.covariates)
    design = hyak_design(frame, hdss, frame.probs, budget=1000)
    assert design.kind == "hyak"
    assert design.hdss_ids == frozenset(hdss)
    ids = list(design.hdss_ids)
    assert np.array_equal(design.sampled[ids], frame.children[ids])
    assert design.sampled[ids].sum() == 4200
    assert design.total_sampled == 5200
    others = np.setdiff1d(np.arange(frame.village_count), ids)
    assert np.all(design.sampled[others] <= frame.children[others])
    assert design.sampled[others].sum() == 1000


def test_hyak_design_validates_inputs():
    frame = make_frame()
    with pytest.raises(ValueError):
        hyak_design(frame, [], frame.probs)
    with pytest.raises(ValueError):
        hyak_design(frame, [0, 99], frame.probs)
    with pytest.raises(ValueError):
        hyak_design(frame, [0, 1, 2], frame.probs[:, :2])


def test_hdss_census_data_matches_frame():
    frame = make_frame()
    data = hdss_census_data(frame, (0, 4, 7))
    ids = [0, 4, 7]
    assert np.array_equal(data.design.sampled[ids], frame.children[ids])
    assert np.array_equal(data.deaths[ids], frame.deaths[ids])
    rest = np.setdiff1d(np.arange(frame.village_count), ids)
    assert not data.design.sampled[rest].any()
    assert not data.deaths[rest].any()
    assert data.total_observed_deaths == frame.deaths[ids].sum()


# ------------------------------------------------------------------ outcomes

def test_census_outcomes_are_exact():
    frame = make_frame()
    design = SampleDesign(kind="census", sampled=frame.children.copy(),
                          hdss_ids=frozenset())
    data = draw_sample_outcomes(seeds.stream(5, "obs", 0), design, frame)
    assert np.array_equal(data.deaths, frame.deaths)


def test_partial_outcomes_match_hypergeometric_moments():
    frame = plain_frame([[350, 350, 350, 350]], [[35, 0, 350, 100]])
    design = SampleDesign(kind="probe",
                          sampled=np.array([[175, 175, 350, 0]]),
                          hdss_ids=frozenset())
    rng = seeds.stream(11, "obs-moments")
    draws = np.array([
        draw_sample_outcomes(rng, design, frame).deaths[0] for _ in range(10_000)
    ])
    # N=350, Y=35, n=175: mean 17.5, sd of the mean over 1e4 draws ~ 0.0281
    assert draws[:, 0].mean() == pytest.approx(17.5, abs=0.0843)
    assert not draws[:, 1].any()            # no deaths to capture
    assert np.all(draws[:, 2] == 350)       # census cell is exact
    assert not draws[:, 3].any()            # nothing sampled


def test_outcomes_validate_design():
    frame = plain_frame([[10, 10, 10, 10]], [[1, 2, 3, 4]])
    over = SampleDesign(kind="probe", sampled=np.array([[11, 0, 0, 0]]),
                        hdss_ids=frozenset())
    with pytest.raises(AllocationError):
        draw_sample_outcomes(seeds.stream(1, "obs"), over, frame)
    wrong = SampleDesign(kind="probe", sampled=np.zeros((2, 4), dtype=int),
                         hdss_ids=frozenset())
    with pytest.raises(ValueError):
        draw_sample_outcomes(seeds.stream(1, "obs"), wrong, frame)


def test_sample_data_validation():
    design = SampleDesign(kind="probe", sampled=np.full((2, 4), 5),
                          hdss_ids=frozenset())
    with pytest.raises(ValueError):
        SampleData(design=design, deaths=np.full((2, 4), 6))
    with pytest.raises(ValueError):
        SampleData(design=design, deaths=np.full((2, 4), -1))
    data = SampleData(design=design, deaths=np.full((2, 4), 2))
    assert data.total_observed_deaths == 16
