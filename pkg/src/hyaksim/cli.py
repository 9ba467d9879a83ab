"""Command line entry point.

Commands:
  simulate       run a study and write table1.csv / table2.csv (+ dumps)
  cost           write cost.csv and report the crossover year
  validate       run the built-in oracle checks
  dump-geometry  write the village map (centroids, cell polygons, edges)

Every run directory receives a `run.json` manifest (config hash, seed,
version, timestamps, file inventory) written last, so a complete manifest
implies a complete run.  CSV formatting is fixed: probabilities carry 6
decimals, currency 2, effects 6; identical (config, seed) runs produce
byte-identical CSVs.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .config import (
    ConfigError,
    ROMAN_BY_MODEL,
    StudyConfig,
    config_to_text,
    default_config,
    load_config,
    with_overrides,
)
from .cost import crossover_year, cumulative_cost
from .experiment import run_study, table1_rows, table2_rows
from .geometry import default_layout
from .sampling import select_hdss_villages
from .seeds import stream
from .synth import STRATUM_LABELS, gen_covariates
from .validate import run_all_checks

OUT_DIR_ENV = "HYAK_SIM_OUT"


def _out_dir(args) -> Path:
    chosen = args.out_dir or os.environ.get(OUT_DIR_ENV) or "hyak-run"
    path = Path(chosen)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _write_csv(path: Path, fieldnames, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.DictWriter(handle, fieldnames=fieldnames,
                                lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)


def _load_study_config(args) -> StudyConfig:
    config = load_config(args.config) if args.config else default_config()
    return with_overrides(config,
                          seed=getattr(args, "seed", None),
                          replicates=getattr(args, "replicates", None),
                          models=getattr(args, "models", None),
                          workers=getattr(args, "workers", None))


def _write_manifest(out_dir: Path, config: StudyConfig, started: float,
                    warnings: dict, extra: dict | None = None) -> dict:
    text = config_to_text(config)
    inventory = {}
    for path in sorted(out_dir.iterdir()):
        if path.name == "run.json" or not path.is_file():
            continue
        data = path.read_bytes()
        inventory[path.name] = {
            "bytes": len(data),
            "sha256": hashlib.sha256(data).hexdigest(),
        }
    manifest = {
        "tool": "hyaksim",
        "version": __version__,
        "seed": config.seed,
        "config_sha256": hashlib.sha256(text.encode()).hexdigest(),
        "started": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime(started)),
        "finished": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
        "files": inventory,
        "warnings": warnings,
    }
    if extra:
        manifest.update(extra)
    with open(out_dir / "run.json", "w", encoding="utf-8") as handle:
        json.dump(manifest, handle, indent=2, sort_keys=True)
        handle.write("\n")
    return manifest


# ---------------------------------------------------------------------------
# dump writers


def _dump_truth(out_dir: Path, report) -> None:
    rows = []
    records = report.records if not report.config.fixed_truth else report.records[:1]
    for rec in records:
        frame = rec.frame
        for i in range(frame.village_count):
            for j, label in enumerate(STRATUM_LABELS):
                rows.append({
                    "replicate": rec.index,
                    "village": i,
                    "stratum": label,
                    "children": int(frame.children[i, j]),
                    "deaths": int(frame.deaths[i, j]),
                    "true_prob": f"{frame.probs[i, j]:.6f}",
                    "village_effect": f"{frame.shocks[i]:.6f}",
                    "spatial_effect": f"{frame.spatial[i]:.6f}",
                })
    _write_csv(out_dir / "truth.csv",
               ["replicate", "village", "stratum", "children", "deaths",
                "true_prob", "village_effect", "spatial_effect"], rows)


def _dump_samples(out_dir: Path, report) -> None:
    rows = []
    for rec in report.records:
        for design_name, outcome in rec.designs.items():
            sampled = outcome.sample.design.sampled
            deaths = outcome.sample.deaths
            for i in range(sampled.shape[0]):
                for j, label in enumerate(STRATUM_LABELS):
                    rows.append({
                        "replicate": rec.index,
                        "design": design_name,
                        "village": i,
                        "stratum": label,
                        "sampled": int(sampled[i, j]),
                        "observed_deaths": int(deaths[i, j]),
                    })
    _write_csv(out_dir / "samples.csv",
               ["replicate", "design", "village", "stratum", "sampled",
                "observed_deaths"], rows)


def _dump_fits(out_dir: Path, report) -> None:
    rows = []
    for rec in report.records:
        for design_name, outcome in rec.designs.items():
            for model, probs in outcome.probs.items():
                if probs is None:
                    continue
                pred = outcome.predictions[model]
                flag = "yes" if outcome.converged[model] else "no"
                for i in range(probs.shape[0]):
                    for j, label in enumerate(STRATUM_LABELS):
                        value = probs[i, j]
                        rows.append({
                            "replicate": rec.index,
                            "design": design_name,
                            "model": ROMAN_BY_MODEL[model],
                            "village": i,
                            "stratum": label,
                            "prob": "" if np.isnan(value) else f"{value:.6f}",
                            "predicted_deaths": f"{pred[i, j]:.2f}",
                            "converged": flag,
                        })
    _write_csv(out_dir / "fits.csv",
               ["replicate", "design", "model", "village", "stratum", "prob",
                "predicted_deaths", "converged"], rows)


def _write_geometry(out_dir: Path, config: StudyConfig) -> None:
    village_map = default_layout(config.layout_seed, config.village_count)
    covariates = gen_covariates(stream(config.seed, "covariates"),
                                config.village_count)
    hdss = select_hdss_villages(stream(config.seed, "hdss"), covariates)
    villages = [{
        "village": i,
        "x": f"{village_map.centroids[i, 0]:.6f}",
        "y": f"{village_map.centroids[i, 1]:.6f}",
        "covariate_1": f"{covariates[i, 0]:.6f}",
        "covariate_2": f"{covariates[i, 1]:.6f}",
        "is_hdss": "yes" if i in hdss else "no",
    } for i in range(village_map.village_count)]
    _write_csv(out_dir / "villages.csv",
               ["village", "x", "y", "covariate_1", "covariate_2", "is_hdss"],
               villages)

    cell_rows = []
    for i, cell in enumerate(village_map.cells):
        for k, (vx, vy) in enumerate(cell):
            cell_rows.append({"village": i, "vertex": k,
                              "x": f"{vx:.6f}", "y": f"{vy:.6f}"})
    _write_csv(out_dir / "cells.csv", ["village", "vertex", "x", "y"], cell_rows)

    edge_rows = [{"village_a": i, "village_b": j}
                 for i, group in enumerate(village_map.neighbors)
                 for j in sorted(group) if i < j]
    _write_csv(out_dir / "edges.csv", ["village_a", "village_b"], edge_rows)


_SCHEMA_NOTES = """\
# Output file columns

All CSVs carry a header row.  Formatting is fixed so identical runs are
byte-identical: probabilities and effects 6 decimals, currency and metric
summaries 2 decimals, counts plain integers.  Missing values are empty
strings; inapplicable table entries read -na-.

table1.csv   sampling, model, deaths, bias, variance, mse
             One row per (design, model).  deaths = mean observed deaths
             across replicates; bias = root of summed squared per-cell
             bias; variance = summed per-cell variance; mse = bias^2 sum
             + variance sum.  Model IV under cluster sampling is -na-.
table2.csv   model, metric, cluster, hyak, difference, proportional
             Per-model design comparison; difference = hyak - cluster,
             proportional = difference / cluster (signed percent).
cost.csv     year, hyak_cumulative, dhs_cumulative
             Cumulative expenditure by end of each year, currency units.
truth.csv    replicate, village, stratum, children, deaths, true_prob,
             village_effect, spatial_effect
             One realized population per replicate (replicate 0 only when
             the truth is fixed across replicates).
samples.csv  replicate, design, village, stratum, sampled, observed_deaths
fits.csv     replicate, design, model, village, stratum, prob,
             predicted_deaths, converged
villages.csv village, x, y, covariate_1, covariate_2, is_hdss
cells.csv    village, vertex, x, y   (cell polygon, vertices in order)
edges.csv    village_a, village_b    (each adjacency once, a < b)
run.json     manifest: config hash, seed, version, timestamps, inventory
"""


def _write_schema(out_dir: Path) -> None:
    (out_dir / "schema.txt").write_text(_SCHEMA_NOTES, encoding="utf-8")


# ---------------------------------------------------------------------------
# commands


def cmd_simulate(args) -> int:
    config = _load_study_config(args)
    out_dir = _out_dir(args)
    started = time.time()
    report = run_study(config)

    _write_csv(out_dir / "table1.csv",
               ["sampling", "model", "deaths", "bias", "variance", "mse"],
               table1_rows(report))
    _write_csv(out_dir / "table2.csv",
               ["model", "metric", "cluster", "hyak", "difference",
                "proportional"],
               table2_rows(report))
    if args.dump_truth:
        _dump_truth(out_dir, report)
    if args.dump_samples:
        _dump_samples(out_dir, report)
    if args.dump_fits:
        _dump_fits(out_dir, report)
    _write_schema(out_dir)
    (out_dir / "config.cfg").write_text(config_to_text(config), "utf-8")

    warnings = dict(report.runtime.get("failed_fits", {}))
    unconverged = {}
    for rec in report.records:
        for design_name, outcome in rec.designs.items():
            for model, ok in outcome.converged.items():
                if not ok:
                    key = f"{design_name}/{model} non-converged"
                    unconverged[key] = unconverged.get(key, 0) + 1
    warnings.update(unconverged)
    manifest = _write_manifest(out_dir, config, started, warnings,
                               extra={"replicates": config.replicates,
                                      "models": list(config.models),
                                      "wall_seconds": report.runtime["wall_seconds"]})
    if args.json:
        print(json.dumps(manifest, indent=2, sort_keys=True))
    else:
        print(f"wrote {out_dir}/table1.csv and table2.csv"
              f" ({config.replicates} replicates, seed {config.seed})")
        for key, count in warnings.items():
            print(f"warning: {key}: {count}", file=sys.stderr)
    return 0


def cmd_cost(args) -> int:
    config = _load_study_config(args)
    params = config.cost
    if args.hyak_census:
        params = dataclasses.replace(params, hyak_census_scope=args.hyak_census)
    if args.horizon is not None:
        params = dataclasses.replace(params, horizon_years=args.horizon)
    out_dir = _out_dir(args)
    hyak = cumulative_cost(params, "hyak")
    dhs = cumulative_cost(params, "dhs_like")
    rows = [{"year": year,
             "hyak_cumulative": f"{hyak[year]:.2f}",
             "dhs_cumulative": f"{dhs[year]:.2f}"}
            for year in range(params.horizon_years + 1)]
    _write_csv(out_dir / "cost.csv",
               ["year", "hyak_cumulative", "dhs_cumulative"], rows)
    year = crossover_year(params)
    if args.json:
        print(json.dumps({
            "years": list(range(params.horizon_years + 1)),
            "hyak_cumulative": [round(v, 2) for v in hyak],
            "dhs_cumulative": [round(v, 2) for v in dhs],
            "crossover_year": year,
        }, indent=2))
    elif year is None:
        print(f"wrote {out_dir}/cost.csv; no crossover within"
              f" {params.horizon_years} years")
    else:
        print(f"wrote {out_dir}/cost.csv; hyak overtakes at year {year:.2f}")
    return 0


def cmd_validate(args) -> int:
    results = run_all_checks(fault=args.fault)
    if args.json:
        print(json.dumps([dataclasses.asdict(r) for r in results], indent=2))
    else:
        for res in results:
            mark = "pass" if res.passed else "FAIL"
            print(f"{mark}  {res.name}: {res.detail}")
    return 0 if all(r.passed for r in results) else 1


def cmd_dump_geometry(args) -> int:
    config = _load_study_config(args)
    out_dir = _out_dir(args)
    _write_geometry(out_dir, config)
    print(f"wrote {out_dir}/villages.csv, cells.csv, edges.csv"
          f" ({config.village_count} villages)")
    return 0


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hyaksim",
        description="Simulation laboratory for comparing mortality survey designs.")
    parser.add_argument("--version", action="version",
                        version=f"hyaksim {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, with_study_flags=True):
        p.add_argument("--config", help="config file (flat key = value lines)")
        p.add_argument("--out-dir",
                       help=f"output directory (default ${OUT_DIR_ENV} or ./hyak-run)")
        p.add_argument("--json", action="store_true",
                       help="machine-readable summary on stdout")
        if with_study_flags:
            p.add_argument("--seed", type=int, help="override study seed")

    sim = sub.add_parser("simulate", help="run a replicated two-design study")
    common(sim)
    sim.add_argument("--replicates", type=int, help="override replicate count")
    sim.add_argument("--models",
                     help="comma-separated models to fit (I,II,III,IV)")
    sim.add_argument("--workers", type=int, help="parallel replicate workers")
    sim.add_argument("--dump-truth", action="store_true",
                     help="write truth.csv (realized populations)")
    sim.add_argument("--dump-samples", action="store_true",
                     help="write samples.csv (per-design draws)")
    sim.add_argument("--dump-fits", action="store_true",
                     help="write fits.csv (per-model cell probabilities)")
    sim.set_defaults(func=cmd_simulate)

    cost = sub.add_parser("cost", help="cumulative cost comparison")
    common(cost, with_study_flags=False)
    cost.add_argument("--hyak-census", choices=("none", "non_hdss", "full"),
                      help="how much of the region the informed system censuses")
    cost.add_argument("--horizon", type=int, help="override horizon in years")
    cost.set_defaults(func=cmd_cost)

    val = sub.add_parser("validate", help="run the built-in oracle checks")
    val.add_argument("--json", action="store_true",
                     help="machine-readable check report")
    val.add_argument("--fault", choices=("icar-unconstrained",),
                     help="inject a known fault (harness self-test)")
    val.set_defaults(func=cmd_validate)

    geo = sub.add_parser("dump-geometry", help="write the village map as CSV")
    common(geo)
    geo.set_defaults(func=cmd_dump_geometry)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
