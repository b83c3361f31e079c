"""Figure rendering: convergence traces, sweep curves, 3D trajectories.

Read-only over the input CSVs; identical inputs give identical
metadata-stripped bytes (fixed SVG hash salt, no embedded dates).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
matplotlib.rcParams["svg.hashsalt"] = "plotkit"

import matplotlib.pyplot as plt
from mpl_toolkits.mplot3d import Axes3D  # noqa: F401  (registers 3d projection)

from . import schema

KINDS = ("convergence", "sweep", "trajectory3d")

_STYLE = {
    "proposed_active": dict(color="tab:red", marker="o"),
    "passive_ris": dict(color="tab:blue", marker="s"),
    "random_ris": dict(color="tab:green", marker="^"),
    "no_ris": dict(color="tab:gray", marker="x"),
    "fixed_trajectory": dict(color="tab:purple", marker="d"),
    "sdma_active": dict(color="tab:orange", marker="v"),
}


@dataclass(frozen=True)
class FigureSpec:
    """One figure: kind, input CSV, scheme selectors, output image path."""

    kind: str
    csv_path: str
    out_path: str
    schemes: list[str] = field(default_factory=list)
    nodes_csv: str | None = None     # trajectory3d overlay
    platform: str = "uav"            # trajectory3d: uav or hap
    title: str | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise schema.SchemaError(f"unknown figure kind '{self.kind}'")
        if self.platform not in ("uav", "hap"):
            raise schema.SchemaError(f"unknown platform '{self.platform}'")


def _style(tag: str):
    return _STYLE.get(tag, dict(marker="."))


def _save(fig, out_path: str) -> None:
    out = Path(out_path)
    out.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out, metadata={"Date": None} if out.suffix == ".svg" else None)
    plt.close(fig)


def render_convergence(spec: FigureSpec) -> None:
    rows = schema.read_rows(spec.csv_path, schema.RUNS_COLUMNS)
    rows, tags = schema.select_schemes(rows, spec.schemes, Path(spec.csv_path).name)
    fig, ax = plt.subplots(figsize=(5.2, 3.6), constrained_layout=True)
    for tag in tags:
        series = {}
        for r in rows:
            if r["scheme"] == tag:
                series.setdefault(r["run"], []).append((r["iter"], r["avg_sum_rate"]))
        for i, (run, pts) in enumerate(sorted(series.items())):
            pts.sort()
            ax.plot([p[0] for p in pts], [p[1] for p in pts],
                    label=tag if i == 0 else None, markersize=4, **_style(tag))
    ax.set_xlabel("BCD iteration")
    ax.set_ylabel("average sum-rate (bits/s/Hz)")
    ax.set_title(spec.title or "Convergence")
    ax.grid(True, alpha=0.4)
    ax.legend()
    _save(fig, spec.out_path)


def render_sweep(spec: FigureSpec) -> None:
    rows = schema.read_rows(spec.csv_path, schema.SUMMARY_COLUMNS)
    rows, tags = schema.select_schemes(rows, spec.schemes, Path(spec.csv_path).name)
    key = rows[0]["sweep_key"]
    fig, ax = plt.subplots(figsize=(5.2, 3.6), constrained_layout=True)
    for tag in tags:
        pts = sorted((r["value"], r["mean"], r["stderr"])
                     for r in rows if r["scheme"] == tag)
        ax.errorbar([p[0] for p in pts], [p[1] for p in pts],
                    yerr=[p[2] for p in pts], capsize=3, label=tag,
                    markersize=4, **_style(tag))
    ax.set_xlabel(key)
    ax.set_ylabel("average sum-rate (bits/s/Hz)")
    ax.set_title(spec.title or f"Average sum-rate versus {key}")
    ax.grid(True, alpha=0.4)
    ax.legend()
    _save(fig, spec.out_path)


def render_trajectory3d(spec: FigureSpec) -> None:
    rows = schema.read_rows(spec.csv_path, schema.PATHS_COLUMNS)
    rows, tags = schema.select_schemes(rows, spec.schemes, Path(spec.csv_path).name)
    tag = tags[0]
    rows = [r for r in rows if r["scheme"] == tag and r["platform"] == spec.platform]
    if not rows:
        raise schema.SchemaError(
            f"{Path(spec.csv_path).name}: no '{spec.platform}' rows for scheme {tag}")
    run = min(r["run"] for r in rows)
    rows = [r for r in rows if r["run"] == run]
    iters = sorted({r["iter"] for r in rows})
    first, last = iters[0], iters[-1]

    def path_of(it):
        pts = sorted((r["slot"], r["x"], r["y"], r["z"])
                     for r in rows if r["iter"] == it)
        return [p[1] for p in pts], [p[2] for p in pts], [p[3] for p in pts]

    fig = plt.figure(figsize=(5.6, 4.4))
    ax = fig.add_subplot(projection="3d")
    x0, y0, z0 = path_of(first)
    ax.plot(x0, y0, z0, "--", color="tab:gray", marker=".", label="initial path")
    x1, y1, z1 = path_of(last)
    ax.plot(x1, y1, z1, "-", color="tab:red", marker="o", markersize=4,
            label="optimized path")
    if spec.nodes_csv:
        nodes = schema.read_rows(spec.nodes_csv, schema.NODES_COLUMNS)
        wanted = ("tbs", "terr_user") if spec.platform == "uav" else ("sat_user",)
        seen = set()
        for n in nodes:
            if n["kind"] not in wanted:
                continue
            label = n["kind"] if n["kind"] not in seen else None
            seen.add(n["kind"])
            marker = "*" if n["kind"] == "tbs" else "^"
            ax.scatter([n["x"]], [n["y"]], [n["z"]], marker=marker, s=60,
                       label=label)
    ax.set_xlabel("x (m)")
    ax.set_ylabel("y (m)")
    ax.set_zlabel("z (m)")
    ax.set_title(spec.title or f"{spec.platform.upper()} trajectory ({tag})")
    ax.legend(loc="upper left", fontsize=8)
    _save(fig, spec.out_path)


_RENDERERS = {
    "convergence": render_convergence,
    "sweep": render_sweep,
    "trajectory3d": render_trajectory3d,
}


def render(spec: FigureSpec) -> str:
    """Render one figure and return the output path."""
    _RENDERERS[spec.kind](spec)
    return spec.out_path
