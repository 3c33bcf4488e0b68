"""Renderers for the three harness figure styles.

All science numbers come from the CSVs; the only statistics computed here
are means and standard deviations of the provided columns.  Output is
raster PNG at a fixed DPI with a text chunk naming the manifest the data
came from, so every figure is traceable to its run.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .spec import FigureSpec, FigureError  # noqa: E402


def read_series_csv(path: str | Path):
    """Parse a "t,<name>,..." CSV into (times, {name: column})."""
    path = Path(path)
    try:
        lines = path.read_text().strip().splitlines()
        header = lines[0].split(",")
        if header[0] != "t":
            raise ValueError("header must start with 't'")
        data = np.array([[float(v) for v in line.split(",")] for line in lines[1:]])
        data = data.reshape(-1, len(header))
    except (OSError, ValueError, IndexError) as exc:
        raise FigureError(f"{path}: not a parseable series CSV ({exc})") from None
    return data[:, 0], {name: data[:, j + 1] for j, name in enumerate(header[1:])}


def read_tail_fit_csv(path: str | Path):
    """Parse tail_fit.csv into (N, mean, std, c_const, c_slope)."""
    path = Path(path)
    try:
        lines = path.read_text().strip().splitlines()
        header = lines[0].split(",")
        cols = {name: [] for name in header}
        for line in lines[1:]:
            for name, value in zip(header, line.split(",")):
                cols[name].append(float(value))
        n = np.array(cols["N"])
        return (n, np.array(cols["mean"]), np.array(cols["std"]),
                cols["c_const"][0], cols["c_slope"][0])
    except (OSError, ValueError, KeyError, IndexError) as exc:
        raise FigureError(f"{path}: not a parseable tail_fit CSV ({exc})") from None


def _resolve_column(columns: dict, column: str, path) -> np.ndarray:
    """A named column, or a '+'-joined sum of named columns."""
    total = None
    for name in column.split("+"):
        name = name.strip()
        if name not in columns:
            raise FigureError(f"{path}: column {name!r} not found (has {sorted(columns)})")
        total = columns[name] if total is None else total + columns[name]
    return total


def _metadata(spec: FigureSpec) -> dict:
    if spec.manifest is None:
        return {}
    return {"manifest": Path(spec.manifest).name}


def _finish(fig, spec: FigureSpec) -> Path:
    for ax in fig.axes:
        if spec.log_x:
            ax.set_xscale("log")
        if spec.log_y:
            ax.set_yscale("log")
    if spec.title:
        fig.axes[0].set_title(spec.title)
    out = Path(spec.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out, dpi=spec.dpi, metadata=_metadata(spec))
    plt.close(fig)
    return out


def build_traces(spec: FigureSpec):
    """Per-run translucent traces with a bold cross-run average."""
    times = None
    runs = []
    for path in spec.inputs:
        t, columns = read_series_csv(path)
        if times is None:
            times = t
        elif t.shape != times.shape or not np.array_equal(t, times):
            raise FigureError(f"{path}: time grid differs from {spec.inputs[0]}")
        runs.append(_resolve_column(columns, spec.column, path))
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    for values in runs:
        ax.plot(times, values, color="tab:blue", alpha=0.25, linewidth=0.9)
    if len(runs) > 1:
        ax.plot(times, np.mean(runs, axis=0), color="tab:blue", linewidth=2.2,
                label=f"average of {len(runs)} runs")
        ax.legend()
    ax.set_xlabel("time")
    ax.set_ylabel(spec.column)
    return fig


def build_nfit(spec: FigureSpec):
    """Tail means vs N with error bars and the dashed C' + C/N fit."""
    n, mean, std, c_const, c_slope = read_tail_fit_csv(spec.inputs[0])
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    ax.errorbar(n, mean, yerr=std, fmt="s", color="black", capsize=3.0,
                markersize=5.5, label="tail average")
    grid = np.linspace(n.min(), n.max(), 256)
    ax.plot(grid, c_const + c_slope / grid, linestyle="--", color="tab:gray",
            label=f"{c_const:.4g} + {c_slope:.4g}/N")
    ax.set_xlabel("N")
    ax.set_ylabel("tail average")
    ax.legend()
    return fig


def build_comparison(spec: FigureSpec):
    """Two-series overlay: momentum run in blue, comparison run in red."""
    labels = spec.labels or ("with momentum", "without momentum")
    if len(labels) != 2:
        raise FigureError(f"comparison needs 2 labels, got {len(labels)}")
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    for path, color, label in zip(spec.inputs, ("tab:blue", "tab:red"), labels):
        t, columns = read_series_csv(path)
        ax.plot(t, _resolve_column(columns, spec.column, path), color=color,
                linewidth=1.4, label=label)
    ax.set_xlabel("time")
    ax.set_ylabel(spec.column)
    ax.legend()
    return fig


_BUILDERS = {"traces": build_traces, "nfit": build_nfit, "comparison": build_comparison}


def render(spec: FigureSpec) -> Path:
    """Build the figure for the spec and write the PNG; returns its path."""
    fig = _BUILDERS[spec.kind](spec)
    return _finish(fig, spec)
