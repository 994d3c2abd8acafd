"""SVG charts from experiment CSV files.

Each CSV becomes one SVG with a panel per metric. The x axis is the
innermost numeric sweep column (eta, beta, arrival rate or task count);
the remaining sweep columns split the rows into series. Tables without a
numeric axis are drawn against their last categorical column.
"""

from __future__ import annotations

import csv
import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

__all__ = ["RenderError", "read_table", "render_chart", "render_charts"]

_NUMERIC_AXES = ("eta", "beta", "arrival_rate", "n_tasks")
_TAIL = ["metric", "mean", "ci95", "n"]
_RC = {
    "svg.hashsalt": "robustdrop",
    "svg.fonttype": "none",
    "font.size": 9,
}


class RenderError(ValueError):
    pass


def _num(text: str, where: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise RenderError(f"{where}: not a number: {text!r}") from None


def read_table(path) -> tuple[list[str], list[dict]]:
    """Sweep column names and parsed rows of an experiment CSV."""
    path = Path(path)
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise RenderError(f"{path}: empty file")
    header = rows[0]
    if header[-4:] != _TAIL or not all(h.startswith("sweep_") for h in header[:-4]):
        raise RenderError(f"{path}: unexpected header {header!r}")
    axes = [h[len("sweep_"):] for h in header[:-4]]
    out = []
    for k, r in enumerate(rows[1:], start=2):
        if not r:
            continue
        where = f"{path}:{k}"
        if len(r) != len(header):
            raise RenderError(f"{where}: expected {len(header)} fields, got {len(r)}")
        n = len(axes)
        out.append({
            "coords": dict(zip(axes, r[:n])),
            "metric": r[n],
            "mean": _num(r[n + 1], where),
            "ci95": _num(r[n + 2], where),
            "n": int(_num(r[n + 3], where)),
        })
    if not out:
        raise RenderError(f"{path}: no data")
    return axes, out


def _x_axis(axes: list[str]) -> str | None:
    numeric = [a for a in axes if a in _NUMERIC_AXES]
    if numeric:
        return numeric[-1]
    return axes[-1] if axes else None


def render_chart(csv_path, svg_path=None) -> Path:
    csv_path = Path(csv_path)
    svg_path = Path(svg_path) if svg_path else csv_path.with_suffix(".svg")
    axes, rows = read_table(csv_path)
    xname = _x_axis(axes)
    numeric_x = xname in _NUMERIC_AXES
    series_axes = [a for a in axes if a != xname]
    metrics = list(dict.fromkeys(r["metric"] for r in rows))
    categories = list(dict.fromkeys(r["coords"].get(xname, "") for r in rows))

    with plt.rc_context(_RC):
        fig, panels = plt.subplots(
            len(metrics), 1, figsize=(6.0, 2.6 * len(metrics)), squeeze=False
        )
        for ax, metric in zip(panels[:, 0], metrics):
            mrows = [r for r in rows if r["metric"] == metric]
            groups: dict[tuple, list[dict]] = {}
            for r in mrows:
                key = tuple((a, r["coords"][a]) for a in series_axes)
                groups.setdefault(key, []).append(r)
            for k, (key, grp) in enumerate(groups.items()):
                if numeric_x:
                    grp = sorted(grp, key=lambda r: float(r["coords"][xname]))
                    xs = [float(r["coords"][xname]) for r in grp]
                else:
                    xs = [categories.index(r["coords"].get(xname, "")) for r in grp]
                ys = [r["mean"] for r in grp]
                errs = [0.0 if not math.isfinite(r["ci95"]) else r["ci95"] for r in grp]
                label = ", ".join(f"{a}={v}" for a, v in key) or metric
                line = ax.plot(
                    xs, ys, marker="o", markersize=4,
                    linestyle="-" if numeric_x else "none", label=label,
                )[0]
                line.set_gid(f"{metric}-series{k}-markers")
                bars = ax.errorbar(
                    xs, ys, yerr=errs, fmt="none", ecolor=line.get_color(), capsize=0,
                )
                bars.lines[2][0].set_gid(f"{metric}-series{k}-errorbars")
            if not numeric_x:
                ax.set_xticks(range(len(categories)), categories)
            ax.set_xlabel(xname or "")
            ax.set_ylabel(metric)
            ax.grid(True, linewidth=0.3)
            if len(groups) > 1:
                ax.legend(fontsize=7)
        fig.tight_layout()
        try:
            fig.savefig(svg_path, format="svg", metadata={"Date": None})
        finally:
            plt.close(fig)
    return svg_path


def render_charts(paths) -> list[Path]:
    """Render every CSV in ``paths``; a directory expands to its ``*.csv``."""
    files = []
    for p in [paths] if isinstance(paths, (str, Path)) else paths:
        p = Path(p)
        files.extend(sorted(p.glob("*.csv")) if p.is_dir() else [p])
    if not files:
        raise RenderError("no data: no CSV files found")
    return [render_chart(f) for f in files]
