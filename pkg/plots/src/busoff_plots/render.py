"""Figure rendering over the documented CSV schemas.

Four kinds: ``residuals`` (Riccati residual decay from synth), ``distance``
(actual vs desired gap from an acc trace), ``counter`` (error counter with the
bus-off threshold), and ``combined`` (distance + counter panels for one or
more traces). All data comes from the CSVs; nothing is re-simulated.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

E_BAR = 128.0
DT = 0.1


def sample_csv_path(name: str) -> str:
    """Absolute path of a shipped sample CSV."""
    path = resources.files("busoff_plots") / "samples" / name
    if not path.is_file():
        raise FileNotFoundError(f"no shipped sample named {name!r}")
    return str(path)


@dataclass(frozen=True)
class FigureSpec:
    """What to render: input CSVs, figure kind, output image path, labels."""

    inputs: list[str]
    kind: str  # residuals | distance | counter | combined
    output: str
    labels: list[str] = field(default_factory=list)
    tau_h: float = 2.5  # spacing-policy constants used for the d_des overlay
    d_0: float = 5.0

    def __post_init__(self):
        if self.kind not in ("residuals", "distance", "counter", "combined"):
            raise ValueError(f"unknown figure kind {self.kind!r}")
        if not self.inputs:
            raise ValueError("FigureSpec needs at least one input CSV")
        if self.labels and len(self.labels) != len(self.inputs):
            raise ValueError("labels must match inputs one-to-one")


def read_columns(path: str, columns: list[str]) -> dict[str, np.ndarray]:
    """Read the named columns; missing columns and empty files are errors."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty CSV") from None
        rows = list(reader)
    if not rows:
        raise ValueError(f"{path}: empty CSV (header only)")
    missing = [c for c in columns if c not in header]
    if missing:
        raise ValueError(f"{path}: missing column(s) {', '.join(missing)}")
    idx = {c: header.index(c) for c in columns}
    out = {}
    for c in columns:
        cells = [row[idx[c]] for row in rows]
        out[c] = np.array([float(v) if v else np.nan for v in cells])
    return out


def _label(spec: FigureSpec, i: int) -> str:
    if spec.labels:
        return spec.labels[i]
    return Path(spec.inputs[i]).stem


def _plot_residuals(spec: FigureSpec, ax) -> None:
    for i, path in enumerate(spec.inputs):
        data = read_columns(path, ["iter", "residual"])
        ax.semilogy(data["iter"], data["residual"], label=_label(spec, i))
    ax.set_xlabel("iteration")
    ax.set_ylabel("fixed-point residual")
    ax.set_title("Riccati iteration convergence")
    if len(spec.inputs) > 1:
        ax.legend()


def _plot_distance(spec: FigureSpec, ax, path: str, label: str) -> None:
    data = read_columns(path, ["t", "gap_actual", "v_ego"])
    t = data["t"] * DT
    ax.plot(t, data["gap_actual"], label=f"{label} actual gap")
    d_des = spec.tau_h * data["v_ego"] + spec.d_0
    ax.plot(t, d_des, linestyle="--", label=f"{label} desired gap")
    ax.axhline(0.0, color="black", linewidth=0.6)
    ax.set_xlabel("time [s]")
    ax.set_ylabel("gap [m]")
    ax.legend()


def _plot_counter(spec: FigureSpec, ax, path: str, label: str) -> None:
    data = read_columns(path, ["t", "S"])
    t = data["t"] * DT
    S = data["S"]
    ax.step(t, S, where="post", label=f"{label} counter")
    ax.axhline(E_BAR, color="red", linestyle=":", label=r"$\bar{e}$ = 128")
    hits = np.flatnonzero(S >= E_BAR)
    if hits.size:
        xi = t[hits[0]]
        ax.axvline(xi, color="red", linewidth=0.8)
        ax.annotate(f"bus-off {xi:.1f} s", (xi, E_BAR), xytext=(5, -15),
                    textcoords="offset points", color="red")
    ax.set_xlabel("time [s]")
    ax.set_ylabel("error counter")
    ax.legend()


def render(spec: FigureSpec) -> str:
    """Write the figure and return the output path."""
    if spec.kind == "residuals":
        fig, ax = plt.subplots(figsize=(6, 4))
        _plot_residuals(spec, ax)
    elif spec.kind in ("distance", "counter"):
        fig, ax = plt.subplots(figsize=(7, 4))
        for i, path in enumerate(spec.inputs):
            if spec.kind == "distance":
                _plot_distance(spec, ax, path, _label(spec, i))
            else:
                _plot_counter(spec, ax, path, _label(spec, i))
    else:  # combined: one distance + one counter row per trace
        n = len(spec.inputs)
        fig, axes = plt.subplots(n, 2, figsize=(11, 3.2 * n), squeeze=False)
        for i, path in enumerate(spec.inputs):
            _plot_distance(spec, axes[i][0], path, _label(spec, i))
            _plot_counter(spec, axes[i][1], path, _label(spec, i))
    fig.tight_layout()
    out = Path(spec.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out)
    plt.close(fig)
    return str(out)
