"""The five figures.

Every renderer reads CSVs from a run directory, never mutates them, and
draws with a fixed style so the same inputs give the same image bytes.
Choropleths map higher values to darker shades.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
matplotlib.rcParams["svg.hashsalt"] = "hyakfig"

import matplotlib.pyplot as plt
import numpy as np
from matplotlib.cm import ScalarMappable
from matplotlib.colors import Normalize
from matplotlib.patches import Polygon

from .io import SchemaError, load_rows, numeric

__all__ = ["FIGURES", "REQUIREMENTS", "check_inputs", "render"]

MODEL_LADDER = ("I", "II", "III", "IV")
STRATUM_ORDER = ("girls_under_1", "boys_under_1", "girls_1_to_4", "boys_1_to_4")
STRATUM_TITLES = {
    "girls_under_1": "girls under 1",
    "boys_under_1": "boys under 1",
    "girls_1_to_4": "girls 1 to 4",
    "boys_1_to_4": "boys 1 to 4",
}

REQUIREMENTS = {
    "map": {
        "villages.csv": ("village", "x", "y", "is_hdss"),
        "cells.csv": ("village", "vertex", "x", "y"),
    },
    "spatial": {
        "cells.csv": ("village", "vertex", "x", "y"),
        "truth.csv": ("replicate", "village", "spatial_effect"),
    },
    "strata": {
        "cells.csv": ("village", "vertex", "x", "y"),
        "fits.csv": ("replicate", "design", "model", "village", "stratum",
                     "prob"),
    },
    "tradeoff": {
        "fits.csv": ("replicate", "design", "model", "village", "stratum",
                     "prob"),
        "truth.csv": ("replicate", "village", "stratum", "true_prob"),
    },
    "cost": {
        "cost.csv": ("year", "hyak_cumulative", "dhs_cumulative"),
    },
}


def check_inputs(figure_id: str, in_dir: Path) -> dict:
    """Load and schema-check every input; the renderers build on this."""
    tables = {}
    for name, columns in REQUIREMENTS[figure_id].items():
        tables[name] = load_rows(in_dir, name, columns)
    return tables


def _polygons(cell_rows: list) -> dict:
    cells: dict = {}
    for row in cell_rows:
        cells.setdefault(int(row["village"]),
                         []).append((int(row["vertex"]),
                                     float(row["x"]), float(row["y"])))
    polys = {}
    for village, pts in cells.items():
        pts.sort()
        polys[village] = np.array([(x, y) for _, x, y in pts])
    return polys


def _draw_cells(ax, polys, values=None, cmap="Greys", vmin=None, vmax=None):
    """Fill cell polygons; constant face when values is None."""
    mappable = None
    if values is not None:
        vmin = min(values.values()) if vmin is None else vmin
        vmax = max(values.values()) if vmax is None else vmax
        if vmax <= vmin:
            vmax = vmin + 1e-12
        norm = Normalize(vmin=vmin, vmax=vmax)
        mappable = ScalarMappable(norm=norm, cmap=cmap)
    for village in sorted(polys):
        poly = polys[village]
        if values is None:
            face = "white"
        else:
            face = mappable.to_rgba(values[village])
        ax.add_patch(Polygon(poly, closed=True, facecolor=face,
                             edgecolor="black", linewidth=0.8))
    pts = np.vstack(list(polys.values()))
    ax.set_xlim(pts[:, 0].min(), pts[:, 0].max())
    ax.set_ylim(pts[:, 1].min(), pts[:, 1].max())
    ax.set_aspect("equal")
    ax.set_xticks([])
    ax.set_yticks([])
    return mappable


def _save(fig, out_path: Path) -> None:
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out_path, metadata={"Date": None}
                if out_path.suffix == ".svg" else None)
    plt.close(fig)


def render_map(tables, out_path) -> str:
    polys = _polygons(tables["cells.csv"])
    fig, ax = plt.subplots(figsize=(7, 7))
    _draw_cells(ax, polys)
    hdss = []
    for row in tables["villages.csv"]:
        village = int(row["village"])
        x, y = float(row["x"]), float(row["y"])
        if row["is_hdss"] == "yes":
            hdss.append(village)
            ax.add_patch(Polygon(polys[village], closed=True,
                                 facecolor="0.82", edgecolor="black",
                                 linewidth=0.8))
        ax.plot([x], [y], marker="o", color="black", markersize=3)
        ax.annotate(str(village), (x, y), textcoords="offset points",
                    xytext=(4, 4), fontsize=9)
    ax.set_title("Village map (shaded cells: surveillance sites)")
    _save(fig, out_path)
    return f"{len(polys)} villages, surveillance sites {sorted(hdss)}"


def _first_replicate_rows(truth_rows: list) -> list:
    first = truth_rows[0]["replicate"]
    return [row for row in truth_rows if row["replicate"] == first]


def render_spatial(tables, out_path) -> str:
    polys = _polygons(tables["cells.csv"])
    values = {}
    for row in _first_replicate_rows(tables["truth.csv"]):
        values[int(row["village"])] = float(row["spatial_effect"])
    missing = sorted(set(polys) - set(values))
    if missing:
        raise SchemaError(f"truth.csv: no spatial_effect for villages {missing}")
    fig, ax = plt.subplots(figsize=(7.6, 7))
    mappable = _draw_cells(ax, polys, values)
    fig.colorbar(mappable, ax=ax, shrink=0.8, label="spatial effect (log-odds)")
    ax.set_title("Smooth spatial risk surface (darker = higher)")
    _save(fig, out_path)
    lo, hi = min(values.values()), max(values.values())
    return f"spatial effects in [{lo:+.3f}, {hi:+.3f}]"


def _pick_design_model(fit_rows: list, design: str | None, model: str | None):
    designs = {row["design"] for row in fit_rows}
    chosen_design = design or ("hyak" if "hyak" in designs else sorted(designs)[0])
    if chosen_design not in designs:
        raise SchemaError(f"fits.csv: no rows for design '{chosen_design}'")
    models = {row["model"] for row in fit_rows if row["design"] == chosen_design}
    if model:
        if model not in models:
            raise SchemaError(f"fits.csv: no rows for model '{model}'"
                              f" under design '{chosen_design}'")
        return chosen_design, model
    ladder = [m for m in MODEL_LADDER if m in models]
    if not ladder:
        raise SchemaError("fits.csv: no recognizable model labels")
    return chosen_design, ladder[-1]


def _mean_probs(fit_rows, design, model) -> dict:
    sums: dict = {}
    counts: dict = {}
    for row in fit_rows:
        if row["design"] != design or row["model"] != model or row["prob"] == "":
            continue
        key = (int(row["village"]), row["stratum"])
        sums[key] = sums.get(key, 0.0) + float(row["prob"])
        counts[key] = counts.get(key, 0) + 1
    return {key: sums[key] / counts[key] for key in sums}


def render_strata(tables, out_path, design=None, model=None) -> str:
    polys = _polygons(tables["cells.csv"])
    fit_rows = tables["fits.csv"]
    design, model = _pick_design_model(fit_rows, design, model)
    means = _mean_probs(fit_rows, design, model)
    strata = [s for s in STRATUM_ORDER
              if any(key[1] == s for key in means)]
    if not strata:
        raise SchemaError("fits.csv: no recognizable stratum labels")
    values_all = [means[key] for key in means]
    vmin, vmax = min(values_all), max(values_all)
    fig, axes = plt.subplots(2, 2, figsize=(11, 10))
    mappable = None
    for ax, stratum in zip(axes.ravel(), strata):
        values = {v: means[(v, stratum)] for v, s in means if s == stratum}
        mappable = _draw_cells(ax, polys, values, vmin=vmin, vmax=vmax)
        ax.set_title(STRATUM_TITLES.get(stratum, stratum))
    for ax in axes.ravel()[len(strata):]:
        ax.set_axis_off()
    fig.suptitle(f"Mean estimated death probability, model {model},"
                 f" {design} design (darker = higher)")
    fig.colorbar(mappable, ax=axes, shrink=0.7, label="probability")
    _save(fig, out_path)
    return (f"model {model}, design {design}, {len(strata)} strata,"
            f" probabilities in [{vmin:.4f}, {vmax:.4f}]")


def render_tradeoff(tables, out_path, design=None) -> str:
    fit_rows = tables["fits.csv"]
    designs = {row["design"] for row in fit_rows}
    design = design or ("hyak" if "hyak" in designs else sorted(designs)[0])
    truth_rows = tables["truth.csv"]
    by_rep = {(row["replicate"], int(row["village"]), row["stratum"]):
              float(row["true_prob"]) for row in truth_rows}
    fallback = {(int(row["village"]), row["stratum"]): float(row["true_prob"])
                for row in _first_replicate_rows(truth_rows)}

    errors: dict = {}
    for row in fit_rows:
        if row["design"] != design or row["prob"] == "":
            continue
        key = (row["replicate"], int(row["village"]), row["stratum"])
        true = by_rep.get(key, fallback.get(key[1:]))
        if true is None:
            continue
        errors.setdefault(row["model"], []).append(float(row["prob"]) - true)
    models = [m for m in MODEL_LADDER if m in errors]
    if not models:
        raise SchemaError(f"fits.csv: no rows for design '{design}'")

    fig, ax = plt.subplots(figsize=(8, 5.5))
    ax.axhline(0.0, color="0.6", linewidth=0.8, zorder=0)
    ax.boxplot([errors[m] for m in models], tick_labels=models,
               showfliers=False)
    ax.set_xlabel("model")
    ax.set_ylabel("estimated minus true probability")
    ax.set_title(f"Error distribution per model, {design} design")
    _save(fig, out_path)
    spread = {m: float(np.median(np.abs(errors[m]))) for m in models}
    return ("median |error| " +
            ", ".join(f"{m}: {spread[m]:.4f}" for m in models))


def intersection_year(years, hyak, dhs) -> float | None:
    """First time the hybrid curve is at or below the comparison curve,
    interpolating between yearly points."""
    gap = np.asarray(hyak, dtype=float) - np.asarray(dhs, dtype=float)
    if gap[0] <= 0:
        return 0.0
    for k in range(1, len(gap)):
        if gap[k] <= 0:
            frac = gap[k - 1] / (gap[k - 1] - gap[k])
            return float(years[k - 1] + frac * (years[k] - years[k - 1]))
    return None


def render_cost(tables, out_path) -> str:
    rows = tables["cost.csv"]
    years = numeric(rows, "year")
    hyak = numeric(rows, "hyak_cumulative")
    dhs = numeric(rows, "dhs_cumulative")
    cross = intersection_year(years, hyak, dhs)
    fig, ax = plt.subplots(figsize=(8, 5.5))
    ax.plot(years, dhs, marker="o", color="black", linestyle="--",
            label="survey-only system")
    ax.plot(years, hyak, marker="s", color="black", label="hybrid system")
    if cross is not None:
        ax.axvline(cross, color="0.5", linewidth=0.8, linestyle=":")
        ax.annotate(f"crossover {cross:.2f} y", (cross, max(dhs) * 0.35),
                    rotation=90, fontsize=9,
                    textcoords="offset points", xytext=(6, 0))
    ax.set_xlabel("year")
    ax.set_ylabel("cumulative cost (currency units)")
    ax.set_title("Cumulative cost of the two systems")
    ax.legend()
    _save(fig, out_path)
    if cross is None:
        return "curves do not meet within the horizon"
    return f"intersection at year {cross:.2f}"


FIGURES = {
    "map": render_map,
    "spatial": render_spatial,
    "strata": render_strata,
    "tradeoff": render_tradeoff,
    "cost": render_cost,
}


def render(figure_id: str, in_dir: Path, out_path: Path, **options) -> str:
    tables = check_inputs(figure_id, in_dir)
    return FIGURES[figure_id](tables, out_path, **options)
