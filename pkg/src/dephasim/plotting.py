"""Read dephasim CSV files and render them as deterministic SVG figures."""
from __future__ import annotations

import csv
import io
from pathlib import Path

import matplotlib
import numpy as np
from matplotlib.figure import Figure

CANVAS_PX = (960, 600)
DPI = 100

SCHEMAS = {
    "rates": ("tau", "gamma1", "gamma2", "gamma_sum", "gamma_diff"),
    "scan": ("param", "N_phi", "N_psi", "N_blp", "N1", "twoN1", "divisible"),
    "pairs": ("index", "category", "N", "argmax_flag"),
    "additivity": ("param", "N2", "twoN1", "regime", "factorized_prediction"),
}
_TEXT_COLUMNS = {"category", "regime", "divisible", "argmax_flag", "multi_interval"}

_RC = {
    "svg.hashsalt": "dephasim",
    "svg.fonttype": "path",
    "font.family": "DejaVu Sans",
    "font.size": 11,
    "axes.formatter.useoffset": False,
    "axes.formatter.limits": (-3, 4),
    "lines.linewidth": 1.4,
}


class SchemaMismatch(ValueError):
    """CSV content does not match the columns a plot kind requires."""

    def __init__(self, column: str, message: str):
        super().__init__(f"column {column!r}: {message}")
        self.column = column


def read_csv(path: str | Path) -> tuple[dict[str, str], dict[str, list[str]]]:
    """Split a dephasim CSV into its ``# key = value`` header and raw columns."""
    meta: dict[str, str] = {}
    body = []
    for line in Path(path).read_text().splitlines():
        if line.startswith("#"):
            key, sep, value = line[1:].partition("=")
            if sep:
                meta[key.strip()] = value.strip()
        elif line.strip():
            body.append(line)
    if not body:
        return meta, {}
    reader = csv.reader(io.StringIO("\n".join(body)))
    header = next(reader)
    cols: dict[str, list[str]] = {h: [] for h in header}
    for row in reader:
        if len(row) != len(header):
            raise SchemaMismatch(header[min(len(row), len(header) - 1)],
                                 f"row has {len(row)} fields, header has {len(header)}")
        for h, v in zip(header, row):
            cols[h].append(v)
    return meta, cols


def check_schema(kind: str, cols: dict[str, list[str]]) -> dict[str, np.ndarray]:
    """Validate columns for ``kind`` and convert numeric ones to arrays."""
    if kind not in SCHEMAS:
        raise ValueError(f"unknown plot kind {kind!r}; expected one of {sorted(SCHEMAS)}")
    need = SCHEMAS[kind]
    if not cols:
        raise SchemaMismatch(need[0], "data section is empty")
    for name in need:
        if name not in cols:
            raise SchemaMismatch(name, "missing")
    if not cols[need[0]]:
        raise SchemaMismatch(need[0], "data section is empty")
    out: dict[str, np.ndarray] = {}
    for name in need:
        if name in _TEXT_COLUMNS:
            out[name] = np.array(cols[name], dtype=object)
            continue
        try:
            out[name] = np.array([float(v) for v in cols[name]])
        except ValueError:
            raise SchemaMismatch(name, "non-numeric value") from None
    return out


def _figure(nrows: int = 1) -> tuple[Figure, list]:
    fig = Figure(figsize=(CANVAS_PX[0] / DPI, CANVAS_PX[1] / DPI), dpi=DPI)
    axes = [fig.add_subplot(nrows, 1, i + 1) for i in range(nrows)]
    return fig, axes


def _zero_line(ax, gid: str):
    ax.axhline(0.0, color="0.5", lw=0.8, ls="--", gid=gid)


def _plot_rates(meta, data):
    fig, (top, bottom) = _figure(2)
    tau = data["tau"]
    for name, color in (("gamma1", "C0"), ("gamma2", "C1")):
        top.plot(tau, data[name], color=color, label=name, gid=name)
    _zero_line(top, "zero_top")
    top.set_ylabel("rate (reduced units)")
    top.legend(loc="upper right")
    for name, color in (("gamma_sum", "C2"), ("gamma_diff", "C3")):
        bottom.plot(tau, data[name], color=color, label=name, gid=name)
    _zero_line(bottom, "zero_bottom")
    bottom.set_xlabel("tau (reduced time)")
    bottom.set_ylabel("rate (reduced units)")
    bottom.legend(loc="upper right")
    return fig


def _axis_setup(ax, meta, x):
    ax.set_xlabel(meta.get("axis", "param"))
    if meta.get("spacing") == "log" and np.all(x > 0):
        ax.set_xscale("log")


def _plot_scan(meta, data):
    fig, (ax,) = _figure()
    x = data["param"]
    for name, style in (("N_phi", "o-"), ("N_psi", "s-"), ("N_blp", "k-"), ("twoN1", "^--")):
        ax.plot(x, data[name], style, ms=4, label=name, gid=name)
    _zero_line(ax, "zero")
    _axis_setup(ax, meta, x)
    ax.set_ylabel("backflow measure")
    ax.legend(loc="best")
    return fig


def _plot_additivity(meta, data):
    fig, (ax,) = _figure()
    x = data["param"]
    ax.plot(x, data["N2"], "o-", ms=4, label="N2", gid="N2")
    ax.plot(x, data["twoN1"], "s--", ms=4, label="twoN1", gid="twoN1")
    ax.plot(x, data["factorized_prediction"], ":", label="factorized_prediction",
            gid="factorized_prediction")
    _axis_setup(ax, meta, x)
    ax.set_ylabel("backflow measure")
    ax.legend(loc="best")
    return fig


def _plot_pairs(meta, data):
    fig, (ax,) = _figure()
    cats = list(dict.fromkeys(data["category"]))
    pos = {c: i for i, c in enumerate(cats)}
    idx = data["index"]
    # golden-ratio jitter: spread points within a column without randomness
    jitter = ((idx * 0.6180339887498949) % 1.0 - 0.5) * 0.6
    x = np.array([pos[c] for c in data["category"]]) + jitter
    ax.scatter(x, data["N"], s=4, c="C0", gid="pairs")
    best = data["argmax_flag"] == "1"
    if best.any():
        ax.scatter(x[best], data["N"][best], s=40, c="C3", marker="*", gid="argmax")
    ax.set_xticks(range(len(cats)), cats)
    ax.set_ylabel("backflow N")
    return fig


_RENDERERS = {
    "rates": _plot_rates,
    "scan": _plot_scan,
    "pairs": _plot_pairs,
    "additivity": _plot_additivity,
}


def build_figure(kind: str, meta: dict[str, str], cols: dict[str, list[str]]) -> Figure:
    data = check_schema(kind, cols)
    with matplotlib.rc_context(_RC):
        fig = _RENDERERS[kind](meta, data)
        fig.tight_layout()
    return fig


def render_svg(csv_path: str | Path, kind: str, svg_path: str | Path) -> Path:
    """Render ``csv_path`` as an SVG at ``svg_path``; identical input gives identical bytes."""
    meta, cols = read_csv(csv_path)
    fig = build_figure(kind, meta, cols)
    svg_path = Path(svg_path)
    with matplotlib.rc_context(_RC):
        fig.savefig(svg_path, format="svg", metadata={"Date": None})
    return svg_path
