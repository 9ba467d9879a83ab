"""Study orchestration.

One replicate realises (or reuses) a truth, draws both survey designs on
it, fits every requested model under each design, and records predicted
death counts.  A study runs many replicates and aggregates the error
decomposition per (design, model).

All randomness flows through named streams keyed on (study seed, purpose,
replicate index), so replicates are reproducible in isolation, execution
order never matters, and adding a model never shifts another model's
draws.
"""

from __future__ import annotations

import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import seeds
from .config import MODEL_ORDER, ROMAN_BY_MODEL, StudyConfig, config_to_text
from .estimators import FitResult, fit_age_sex, fit_logistic_mle, fit_naive
from .geometry import VillageMap, default_layout
from .mcmc import fit_spatial_bayes
from .metrics import MetricsReport, comparison_table, mse_decomposition, predict_deaths
from .sampling import (
    SampleData,
    cluster_sample,
    draw_sample_outcomes,
    hdss_census_data,
    hyak_design,
    select_hdss_villages,
)
from .synth import PopulationFrame, gen_covariates, generate_frame

__all__ = [
    "DESIGNS",
    "StudyContext",
    "DesignOutcome",
    "ReplicateRecord",
    "StudyReport",
    "prepare_context",
    "run_replicate",
    "run_study",
    "table1_rows",
    "table2_rows",
]

DESIGNS = ("cluster", "hyak")
NA = "-na-"


@dataclass(frozen=True)
class StudyContext:
    """Per-study fixtures shared by every replicate."""

    config: StudyConfig
    village_map: VillageMap
    covariates: np.ndarray
    hdss_ids: frozenset
    fixed_frame: PopulationFrame | None


@dataclass(frozen=True)
class DesignOutcome:
    """One design's draw and fits within a replicate."""

    sample: SampleData
    predictions: dict
    probs: dict
    converged: dict
    errors: dict

    @property
    def observed_deaths(self) -> int:
        return self.sample.total_observed_deaths


@dataclass(frozen=True)
class ReplicateRecord:
    index: int
    frame: PopulationFrame
    designs: dict


@dataclass(frozen=True)
class StudyReport:
    config: StudyConfig
    village_map: VillageMap
    covariates: np.ndarray
    hdss_ids: frozenset
    records: list
    metrics: dict
    runtime: dict = field(default_factory=dict)

    def models_for(self, design: str) -> tuple:
        return tuple(m for m in self.config.models
                     if not (design == "cluster" and m == "covariates_space"))


def prepare_context(config: StudyConfig) -> StudyContext:
    village_map = default_layout(config.layout_seed, config.village_count)
    covariates = gen_covariates(seeds.stream(config.seed, "covariates"),
                                config.village_count)
    hdss_ids = select_hdss_villages(seeds.stream(config.seed, "hdss"), covariates)
    fixed_frame = None
    if config.fixed_truth:
        fixed_frame = generate_frame(seeds.stream(config.seed, "truth", 0),
                                     village_map, config.params, covariates,
                                     config.children_per_cell)
    return StudyContext(config=config, village_map=village_map,
                        covariates=covariates, hdss_ids=hdss_ids,
                        fixed_frame=fixed_frame)


def _allocation_probs(frame: PopulationFrame, hdss_ids, covariates) -> np.ndarray:
    """Cell probabilities that drive the informed allocation: the covariate
    model fitted to the surveillance sites' complete enumeration."""
    census = hdss_census_data(frame, hdss_ids)
    fit = fit_logistic_mle(census, covariates)
    return fit.probs


def _fit_model(model: str, sample: SampleData, ctx: StudyContext,
               index: int) -> FitResult:
    if model == "naive":
        return fit_naive(sample)
    if model == "age_sex":
        return fit_age_sex(sample)
    if model == "covariates":
        return fit_logistic_mle(sample, ctx.covariates)
    if model == "covariates_space":
        return fit_spatial_bayes(seeds.stream(ctx.config.seed, "mcmc", index),
                                 sample, ctx.covariates, ctx.village_map,
                                 priors=ctx.config.priors,
                                 settings=ctx.config.mcmc)
    raise ValueError(f"unknown model {model!r}")


def _fit_design(sample: SampleData, models, ctx: StudyContext,
                index: int, frame: PopulationFrame) -> DesignOutcome:
    predictions, probs, converged, errors = {}, {}, {}, {}
    for model in models:
        try:
            fit = _fit_model(model, sample, ctx, index)
            predictions[model] = predict_deaths(sample, fit.probs, frame.children)
            probs[model] = fit.probs
            converged[model] = fit.converged
        except Exception as exc:  # a broken fit must not sink the replicate
            predictions[model] = None
            probs[model] = None
            converged[model] = False
            errors[model] = f"{type(exc).__name__}: {exc}"
    return DesignOutcome(sample=sample, predictions=predictions, probs=probs,
                         converged=converged, errors=errors)


def run_replicate(config: StudyConfig, replicate_index: int,
                  context: StudyContext | None = None) -> ReplicateRecord:
    """Run both designs and all requested models on one truth realisation.

    Deterministic given (config.seed, replicate_index); the shared context
    argument only saves recomputation and never changes the result.
    """
    if replicate_index < 0:
        raise ValueError("replicate_index cannot be negative")
    ctx = context if context is not None else prepare_context(config)
    if ctx.fixed_frame is not None:
        frame = ctx.fixed_frame
    else:
        frame = generate_frame(
            seeds.stream(config.seed, "truth", replicate_index),
            ctx.village_map, config.params, ctx.covariates,
            config.children_per_cell)

    cluster_models = tuple(m for m in config.models if m != "covariates_space")
    cluster_design = cluster_sample(
        seeds.stream(config.seed, "design", replicate_index), frame,
        villages=config.cluster_villages,
        per_stratum=config.per_stratum_sample)
    cluster_sample_data = draw_sample_outcomes(
        seeds.stream(config.seed, "cluster-obs", replicate_index),
        cluster_design, frame)
    cluster_outcome = _fit_design(cluster_sample_data, cluster_models, ctx,
                                  replicate_index, frame)

    # the informed design allocates by predicted deaths from the
    # surveillance-site fit on this replicate's truth
    alloc_probs = _allocation_probs(frame, ctx.hdss_ids, ctx.covariates)
    hyak_design_plan = hyak_design(frame, ctx.hdss_ids, alloc_probs,
                                   budget=config.hyak_budget)
    hyak_sample_data = draw_sample_outcomes(
        seeds.stream(config.seed, "hyak-obs", replicate_index),
        hyak_design_plan, frame)
    hyak_outcome = _fit_design(hyak_sample_data, config.models, ctx,
                               replicate_index, frame)

    return ReplicateRecord(index=replicate_index, frame=frame,
                           designs={"cluster": cluster_outcome,
                                    "hyak": hyak_outcome})


# process pool entry point; contexts are cached per worker process
_CTX_CACHE: dict = {}


def _pool_replicate(args) -> ReplicateRecord:
    config, index = args
    key = config_to_text(config)
    ctx = _CTX_CACHE.get(key)
    if ctx is None:
        ctx = prepare_context(config)
        _CTX_CACHE.clear()  # one study per pool; no need to hoard frames
        _CTX_CACHE[key] = ctx
    return run_replicate(config, index, ctx)


def _aggregate(config: StudyConfig, records: list, design: str,
               model: str) -> MetricsReport | None:
    kept_predictions = []
    kept_truth = []
    observed = []
    for rec in records:
        outcome = rec.designs[design]
        pred = outcome.predictions.get(model)
        if pred is None:
            continue
        kept_predictions.append(pred)
        kept_truth.append(rec.frame.deaths)
        observed.append(outcome.observed_deaths)
    if not kept_predictions:
        return None
    truth = kept_truth[0] if config.fixed_truth else kept_truth
    return mse_decomposition(kept_predictions, truth,
                             observed_totals=observed,
                             fixed_truth=config.fixed_truth)


def run_study(config: StudyConfig) -> StudyReport:
    """Run all replicates and aggregate the error decomposition."""
    started = time.time()
    ctx = prepare_context(config)
    indices = range(config.replicates)
    if config.workers > 1:
        jobs = [(config, i) for i in indices]
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            records = list(pool.map(_pool_replicate, jobs))
        records.sort(key=lambda rec: rec.index)
    else:
        records = [run_replicate(config, i, ctx) for i in indices]

    metrics = {}
    failures = {}
    for design in DESIGNS:
        models = tuple(m for m in config.models
                       if not (design == "cluster" and m == "covariates_space"))
        for model in models:
            metrics[(design, model)] = _aggregate(config, records, design, model)
            failed = sum(1 for rec in records
                         if rec.designs[design].predictions.get(model) is None)
            if failed:
                failures[f"{design}/{model}"] = failed

    runtime = {
        "started": time.strftime("%Y-%m-%dT%H:%M:%S", time.gmtime(started)),
        "wall_seconds": round(time.time() - started, 3),
        "workers": config.workers,
        "replicates": config.replicates,
        "failed_fits": failures,
    }
    return StudyReport(config=config, village_map=ctx.village_map,
                       covariates=ctx.covariates, hdss_ids=ctx.hdss_ids,
                       records=records, metrics=metrics, runtime=runtime)


# ---------------------------------------------------------------------------
# report tables


def _fmt(value, decimals=2):
    if value is None:
        return NA
    return f"{value:.{decimals}f}"


def table1_rows(report: StudyReport) -> list:
    """sampling, model, deaths, bias, variance, mse; one row per pair."""
    rows = []
    for design in DESIGNS:
        for model in report.config.models:
            label = ROMAN_BY_MODEL[model]
            if design == "cluster" and model == "covariates_space":
                rows.append({"sampling": design, "model": label,
                             "deaths": NA, "bias": NA,
                             "variance": NA, "mse": NA})
                continue
            rep = report.metrics.get((design, model))
            if rep is None:
                rows.append({"sampling": design, "model": label,
                             "deaths": NA, "bias": NA,
                             "variance": NA, "mse": NA})
                continue
            rows.append({
                "sampling": design,
                "model": label,
                "deaths": _fmt(rep.deaths_captured),
                "bias": _fmt(rep.bias_rms),
                "variance": _fmt(rep.var_sum),
                "mse": _fmt(rep.mse),
            })
    return rows


def table2_rows(report: StudyReport) -> list:
    """Per-model design comparison: hyak relative to cluster."""
    rows = []
    for model in report.config.models:
        label = ROMAN_BY_MODEL[model]
        base = report.metrics.get(("cluster", model))
        other = report.metrics.get(("hyak", model))
        if base is None or other is None:
            for metric in ("deaths_captured", "bias_rms", "var_sum", "mse"):
                rows.append({"model": label, "metric": metric,
                             "cluster": NA, "hyak": NA,
                             "difference": NA, "proportional": NA})
            continue
        for entry in comparison_table(base, other):
            rows.append({
                "model": label,
                "metric": entry["metric"],
                "cluster": _fmt(entry["baseline"]),
                "hyak": _fmt(entry["other"]),
                "difference": _fmt(entry["difference"]),
                "proportional": (NA if entry["proportional"] is None
                                 else f"{entry['proportional']:+.1%}"),
            })
    return rows
