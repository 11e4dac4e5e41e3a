"""Plot data as CSV plus a small static SVG rendering.

The SVG is written by hand so the output is byte-stable and needs no
plotting backend.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence
from xml.sax.saxutils import escape

import numpy as np

from .errors import InputError
from .io import fmt

WIDTH, HEIGHT = 640, 420
MARGIN = {"left": 80, "right": 20, "top": 30, "bottom": 55}
COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e")


@dataclass(frozen=True)
class PlotSeries:
    """One curve or point set with labelled units."""

    x: np.ndarray
    y: np.ndarray
    x_label: str
    y_label: str
    kind: str = "line"
    label: str = ""

    def __post_init__(self):
        x = np.array(self.x, dtype=float)
        y = np.array(self.y, dtype=float)
        if x.ndim != 1 or x.shape != y.shape:
            raise InputError("plot series x and y must be 1-D and of equal length")
        if x.size == 0:
            raise InputError("plot series is empty")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise InputError(f"plot series {self.label!r} contains non-finite values")
        if any(ch in self.label for ch in ",;=\n"):
            raise InputError(f"plot label {self.label!r} may not contain , ; = or newlines")
        if self.kind not in ("line", "scatter"):
            raise InputError(f"plot kind must be 'line' or 'scatter', got {self.kind!r}")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)


def write_series_csv(path, series: Sequence[PlotSeries]) -> None:
    """Long-format table ``label,kind,x,y`` with units in comment lines."""
    lines = []
    for s in series:
        lines.append(f"#series={s.label};kind={s.kind};x={s.x_label};y={s.y_label}")
    lines.append("label,kind,x,y")
    for s in series:
        for xv, yv in zip(s.x, s.y):
            lines.append(f"{s.label},{s.kind},{fmt(xv)},{fmt(yv)}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_series_csv(path) -> list[PlotSeries]:
    units: dict[str, tuple[str, str, str]] = {}
    data: dict[str, list[tuple[float, float]]] = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror or exc}") from None
    for lineno, line in enumerate(text.splitlines(), start=1):
        try:
            if line.startswith("#series="):
                fields = dict(part.split("=", 1) for part in line[1:].split(";"))
                units[fields["series"]] = (fields["kind"], fields["x"], fields["y"])
                data.setdefault(fields["series"], [])
            elif line and line != "label,kind,x,y":
                label, _, xv, yv = line.rsplit(",", 3)
                data[label].append((float(xv), float(yv)))
        except (KeyError, ValueError):
            raise InputError(f"{path}: malformed plot series line {lineno}") from None
    out = []
    for label, (kind, xl, yl) in units.items():
        xy = np.array(data[label], dtype=float).reshape(-1, 2)
        out.append(PlotSeries(xy[:, 0], xy[:, 1], xl, yl, kind, label))
    return out


def _nice_ticks(lo: float, hi: float, n: int = 5) -> np.ndarray:
    if hi <= lo:
        return np.array([lo])
    raw = (hi - lo) / n
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 5, 10) if m * mag >= raw), default=10 * mag)
    start = math.ceil(lo / step) * step
    return np.arange(start, hi + 0.5 * step, step)


def _num(x: float) -> str:
    return format(x, ".4g")


def render_svg(series: Sequence[PlotSeries], title: str = "") -> str:
    """Axes, ticks, one polyline or marker set per series and a legend."""
    if not series:
        raise InputError("nothing to plot")
    xs = np.concatenate([s.x for s in series])
    ys = np.concatenate([s.y for s in series])
    x0, x1 = float(xs.min()), float(xs.max())
    y0, y1 = float(ys.min()), float(ys.max())
    if x1 == x0:
        x0, x1 = x0 - 1, x1 + 1
    if y1 == y0:
        y0, y1 = y0 - 1, y1 + 1
    pad = 0.05 * (y1 - y0)
    y0, y1 = y0 - pad, y1 + pad
    left, top = MARGIN["left"], MARGIN["top"]
    pw = WIDTH - MARGIN["left"] - MARGIN["right"]
    ph = HEIGHT - MARGIN["top"] - MARGIN["bottom"]

    def px(x):
        return left + (np.asarray(x) - x0) / (x1 - x0) * pw

    def py(y):
        return top + (1 - (np.asarray(y) - y0) / (y1 - y0)) * ph

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
           f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">',
           f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>']
    for t in _nice_ticks(x0, x1):
        X = float(px(t))
        out.append(f'<line x1="{X:.2f}" y1="{top + ph}" x2="{X:.2f}" y2="{top + ph + 4}" stroke="black"/>')
        out.append(f'<text x="{X:.2f}" y="{top + ph + 16}" text-anchor="middle">{_num(t)}</text>')
    for t in _nice_ticks(y0, y1):
        Y = float(py(t))
        out.append(f'<line x1="{left - 4}" y1="{Y:.2f}" x2="{left}" y2="{Y:.2f}" stroke="black"/>')
        out.append(f'<text x="{left - 6}" y="{Y + 4:.2f}" text-anchor="end">{_num(t)}</text>')
    out.append(f'<text x="{left + pw / 2:.1f}" y="{HEIGHT - 12}" text-anchor="middle">'
               f'{escape(series[0].x_label)}</text>')
    out.append(f'<text transform="translate(16,{top + ph / 2:.1f}) rotate(-90)" text-anchor="middle">'
               f'{escape(series[0].y_label)}</text>')
    if title:
        out.append(f'<text x="{left + pw / 2:.1f}" y="18" text-anchor="middle">{escape(title)}</text>')
    for k, s in enumerate(series):
        color = COLORS[k % len(COLORS)]
        X, Y = px(s.x), py(s.y)
        if s.kind == "line":
            pts = " ".join(f"{a:.2f},{b:.2f}" for a, b in zip(X, Y))
            out.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.2"/>')
        else:
            out.extend(f'<circle cx="{a:.2f}" cy="{b:.2f}" r="2.5" fill="{color}"/>' for a, b in zip(X, Y))
        if s.label:
            ly = top + 14 + 14 * k
            out.append(f'<rect x="{left + pw - 130}" y="{ly - 8}" width="10" height="10" fill="{color}"/>')
            out.append(f'<text x="{left + pw - 115}" y="{ly + 1}">{escape(s.label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def write_plot(stem, series: Sequence[PlotSeries], title: str = "") -> None:
    """Write ``<stem>.csv`` and ``<stem>.svg``."""
    stem = Path(stem)
    write_series_csv(stem.with_suffix(".csv"), series)
    stem.with_suffix(".svg").write_text(render_svg(series, title))
