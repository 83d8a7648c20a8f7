"""Render paper-style panels from sweep CSV files.

Four panel families cover the standard readouts of a vaccination sweep:

* ``outbreak_vs_p``: mean outbreak size against vaccination rate, one line
  per strategy (and per F value when several are plotted);
* ``efficiency_vs_p``: percent outbreak reduction against vaccination rate;
* ``over_threshold_vs_p``: how many replicates exceeded the containment
  threshold;
* ``tradeoff``: dual-axis vaccination-cost (left) vs infection-cost (right).

Rendering is read-only over the CSV: values are plotted exactly as parsed,
never rescaled or reordered beyond sorting the x axis. Output is
deterministic for fixed inputs (fixed backend, size, dpi, no timestamps).
"""
from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass, field

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

FAMILIES = ("outbreak_vs_p", "efficiency_vs_p", "over_threshold_vs_p", "tradeoff")

REQUIRED_COLUMNS = {
    "outbreak_vs_p": ("strategy", "P", "F", "mean_outbreak"),
    "efficiency_vs_p": ("strategy", "P", "F", "eta"),
    "over_threshold_vs_p": ("strategy", "P", "F", "over_threshold_count"),
    "tradeoff": ("strategy", "P", "F", "mean_vaccinated", "mean_outbreak"),
}

STRATEGY_COLORS = {"RV": "tab:blue", "AV": "tab:red", "IMV": "olive", "DV": "purple",
                   "IMVE": "tab:green", "IMVT": "tab:orange", "REFERENCE": "gray"}

DPI = 110
PANEL_SIZE = (4.6, 3.4)


class FigureSpecError(ValueError):
    """Invalid figure spec or CSV not matching the expected schema."""


@dataclass(frozen=True)
class PanelSpec:
    family: str
    csv: str
    strategies: tuple[str, ...] = ()
    f_values: tuple[float, ...] = ()
    title: str = ""
    x_label: str = "vaccination rate P (%)"
    y_label: str | None = None
    log_y: bool = False


@dataclass(frozen=True)
class FigureSpec:
    output: str
    panels: tuple[PanelSpec, ...]
    layout: tuple[int, int] | None = None


def load_spec(path: str) -> list[FigureSpec]:
    with open(path) as f:
        raw = json.load(f)
    if raw.get("schema_version") != 1:
        raise FigureSpecError("figure spec must declare schema_version 1")
    base = os.path.dirname(os.path.abspath(path))
    figures = []
    for fig_raw in raw.get("figures", []):
        unknown = set(fig_raw) - {"output", "layout", "panels"}
        if unknown:
            raise FigureSpecError(f"unknown figure keys: {sorted(unknown)}")
        panels = []
        for p in fig_raw.get("panels", []):
            unknown = set(p) - {"family", "csv", "strategies", "f_values", "title",
                                "x_label", "y_label", "log_y"}
            if unknown:
                raise FigureSpecError(f"unknown panel keys: {sorted(unknown)}")
            if p.get("family") not in FAMILIES:
                raise FigureSpecError(f"unknown panel family {p.get('family')!r}; "
                                      f"expected one of {FAMILIES}")
            csv_path = p["csv"]
            if not os.path.isabs(csv_path):
                csv_path = os.path.join(base, csv_path)
            panels.append(PanelSpec(
                family=p["family"], csv=csv_path,
                strategies=tuple(p.get("strategies", ())),
                f_values=tuple(float(v) for v in p.get("f_values", ())),
                title=p.get("title", ""),
                x_label=p.get("x_label", "vaccination rate P (%)"),
                y_label=p.get("y_label"), log_y=bool(p.get("log_y", False))))
        if not panels:
            raise FigureSpecError("figure without panels")
        layout = tuple(fig_raw["layout"]) if "layout" in fig_raw else None
        figures.append(FigureSpec(output=fig_raw["output"], panels=tuple(panels),
                                  layout=layout))
    if not figures:
        raise FigureSpecError("spec contains no figures")
    return figures


def read_sweep_csv(path: str) -> list[dict]:
    try:
        with open(path) as f:
            rows = list(csv.DictReader(f))
    except FileNotFoundError:
        raise FigureSpecError(f"CSV not found: {path}") from None
    if not rows:
        raise FigureSpecError(f"CSV has no data rows: {path}")
    return rows


def _check_columns(rows: list[dict], family: str, path: str) -> None:
    missing = [c for c in REQUIRED_COLUMNS[family] if c not in rows[0]]
    if missing:
        raise FigureSpecError(f"{path}: missing columns {missing} for family {family!r}")


def _series(rows: list[dict], panel: PanelSpec, value_col: str):
    """(strategy, F) -> sorted (P, value) points, exactly as in the CSV."""
    out: dict[tuple[str, float], list[tuple[float, float]]] = {}
    for row in rows:
        strategy = row["strategy"]
        if strategy == "REFERENCE":
            continue
        if panel.strategies and strategy not in panel.strategies:
            continue
        f_value = float(row["F"])
        if panel.f_values and f_value not in panel.f_values:
            continue
        if row[value_col] == "NA":
            continue
        out.setdefault((strategy, f_value), []).append(
            (float(row["P"]), float(row[value_col])))
    if not out:
        raise FigureSpecError(f"no rows match panel selection "
                              f"(strategies={panel.strategies}, f_values={panel.f_values})")
    return {key: sorted(pts) for key, pts in sorted(out.items())}


def _label(strategy: str, f_value: float, many_f: bool) -> str:
    return f"{strategy} (F={f_value:g})" if many_f else strategy


def _draw_lines(ax, rows, panel: PanelSpec, value_col: str, default_ylabel: str):
    series = _series(rows, panel, value_col)
    many_f = len({f for _, f in series}) > 1
    for (strategy, f_value), pts in series.items():
        xs = [p for p, _ in pts]
        ys = [v for _, v in pts]
        style = "--" if many_f and f_value != max(f for _, f in series) else "-"
        ax.plot(xs, ys, marker="o", markersize=3, linestyle=style,
                color=STRATEGY_COLORS.get(strategy),
                label=_label(strategy, f_value, many_f))
    ax.set_xlabel(panel.x_label)
    ax.set_ylabel(panel.y_label or default_ylabel)
    if panel.log_y:
        ax.set_yscale("log")
    if panel.title:
        ax.set_title(panel.title, fontsize=10)
    ax.legend(fontsize=7)
    ax.grid(True, alpha=0.3)


def _draw_tradeoff(ax, rows, panel: PanelSpec):
    series_cost = _series(rows, panel, "mean_vaccinated")
    series_size = _series(rows, panel, "mean_outbreak")
    many_f = len({f for _, f in series_cost}) > 1
    right = ax.twinx()
    for (strategy, f_value), pts in series_cost.items():
        ax.plot([p for p, _ in pts], [v for _, v in pts], marker="s", markersize=3,
                color="tab:red", linestyle="-",
                label=f"vaccinated {_label(strategy, f_value, many_f)}")
    for (strategy, f_value), pts in series_size.items():
        right.plot([p for p, _ in pts], [v for _, v in pts], marker="o", markersize=3,
                   color="tab:blue", linestyle="--",
                   label=f"outbreak {_label(strategy, f_value, many_f)}")
    ax.set_xlabel(panel.x_label)
    ax.set_ylabel(panel.y_label or "nodes vaccinated")
    right.set_ylabel("mean outbreak size")
    if panel.title:
        ax.set_title(panel.title, fontsize=10)
    lines_l, labels_l = ax.get_legend_handles_labels()
    lines_r, labels_r = right.get_legend_handles_labels()
    ax.legend(lines_l + lines_r, labels_l + labels_r, fontsize=7)
    ax.grid(True, alpha=0.3)


def render_figure(fig_spec: FigureSpec, out_dir: str) -> str:
    n = len(fig_spec.panels)
    rows_n, cols_n = fig_spec.layout or (1, n)
    if rows_n * cols_n < n:
        raise FigureSpecError(f"layout {fig_spec.layout} too small for {n} panels")
    fig, axes = plt.subplots(rows_n, cols_n,
                             figsize=(PANEL_SIZE[0] * cols_n, PANEL_SIZE[1] * rows_n),
                             squeeze=False)
    for idx, panel in enumerate(fig_spec.panels):
        ax = axes[idx // cols_n][idx % cols_n]
        rows = read_sweep_csv(panel.csv)
        _check_columns(rows, panel.family, panel.csv)
        if panel.family == "outbreak_vs_p":
            _draw_lines(ax, rows, panel, "mean_outbreak", "mean outbreak size")
        elif panel.family == "efficiency_vs_p":
            _draw_lines(ax, rows, panel, "eta", "preventive efficiency (%)")
        elif panel.family == "over_threshold_vs_p":
            _draw_lines(ax, rows, panel, "over_threshold_count",
                        "seeds with outbreak > threshold")
        else:
            _draw_tradeoff(ax, rows, panel)
    for idx in range(n, rows_n * cols_n):
        axes[idx // cols_n][idx % cols_n].axis("off")
    fig.tight_layout()
    os.makedirs(out_dir, exist_ok=True)
    out_path = os.path.join(out_dir, fig_spec.output)
    fig.savefig(out_path, dpi=DPI, metadata={"Software": None})
    plt.close(fig)
    return out_path


def render(spec_path: str, out_dir: str) -> list[str]:
    """Render every figure in the spec; returns the written image paths."""
    return [render_figure(fig_spec, out_dir) for fig_spec in load_spec(spec_path)]
