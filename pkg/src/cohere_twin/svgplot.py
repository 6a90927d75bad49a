"""Minimal deterministic SVG line/scatter plots.

Output depends only on the data: coordinates are written with fixed
precision and no timestamps or random ids are emitted.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from xml.sax.saxutils import escape

import numpy as np

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf")


def nice_ticks(lo: float, hi: float, target: int = 5) -> list[float]:
    if not (math.isfinite(lo) and math.isfinite(hi)) or hi <= lo:
        return [lo]
    raw = (hi - lo) / target
    mag = 10.0 ** math.floor(math.log10(raw))
    step = next(m * mag for m in (1, 2, 2.5, 5, 10) if m * mag >= raw)
    first = math.ceil(lo / step - 1e-9)
    last = math.floor(hi / step + 1e-9)
    return [round(k * step, 12) for k in range(first, last + 1)]


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def _label(v: float) -> str:
    return f"{v:.6g}"


@dataclass
class Series:
    x: np.ndarray
    y: np.ndarray
    kind: str  # "line" or "markers"
    css_class: str
    label: str = ""
    yerr: np.ndarray | None = None


@dataclass
class Figure:
    title: str
    xlabel: str
    ylabel: str
    width: int = 720
    height: int = 480
    series: list[Series] = field(default_factory=list)

    margin_left = 80
    margin_right = 20
    margin_top = 40
    margin_bottom = 60

    def line(self, x, y, css_class: str = "curve", label: str = ""):
        self.series.append(Series(np.asarray(x, float), np.asarray(y, float), "line", css_class, label))

    def markers(self, x, y, css_class: str = "marker", label: str = "", yerr=None):
        err = None if yerr is None else np.asarray(yerr, float)
        self.series.append(Series(np.asarray(x, float), np.asarray(y, float), "markers", css_class, label, err))

    def _limits(self):
        xs = np.concatenate([s.x for s in self.series]) if self.series else np.array([0.0, 1.0])
        ys = [s.y for s in self.series] + [s.y + s.yerr for s in self.series if s.yerr is not None]
        ys += [s.y - s.yerr for s in self.series if s.yerr is not None]
        ys = np.concatenate(ys) if ys else np.array([0.0, 1.0])
        xs, ys = xs[np.isfinite(xs)], ys[np.isfinite(ys)]
        x0, x1 = (float(xs.min()), float(xs.max())) if xs.size else (0.0, 1.0)
        y0, y1 = (float(ys.min()), float(ys.max())) if ys.size else (0.0, 1.0)
        if x1 <= x0:
            x0, x1 = x0 - 0.5, x1 + 0.5
        if y1 <= y0:
            y0, y1 = y0 - 0.5, y1 + 0.5
        pad = 0.05 * (y1 - y0)
        return x0, x1, y0 - pad, y1 + pad

    def to_svg(self) -> str:
        x0, x1, y0, y1 = self._limits()
        left, top = self.margin_left, self.margin_top
        pw = self.width - left - self.margin_right
        ph = self.height - top - self.margin_bottom

        def px(x):
            return left + (np.asarray(x) - x0) / (x1 - x0) * pw

        def py(y):
            return top + (y1 - np.asarray(y)) / (y1 - y0) * ph

        out = [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{self.width}" height="{self.height}" '
            f'viewBox="0 0 {self.width} {self.height}">',
            "<style>text{font-family:sans-serif;font-size:12px}.axis{stroke:#000;fill:none}"
            ".grid{stroke:#ddd}.marker{stroke:none}</style>",
            f'<rect x="0" y="0" width="{self.width}" height="{self.height}" fill="#fff"/>',
            f'<text x="{self.width / 2:.1f}" y="22" text-anchor="middle" font-size="14">{escape(self.title)}</text>',
        ]
        for t in nice_ticks(x0, x1):
            X = _fmt(float(px(t)))
            out.append(f'<line class="grid" x1="{X}" y1="{top}" x2="{X}" y2="{top + ph}"/>')
            out.append(f'<text x="{X}" y="{top + ph + 16}" text-anchor="middle">{_label(t)}</text>')
        for t in nice_ticks(y0, y1):
            Y = _fmt(float(py(t)))
            out.append(f'<line class="grid" x1="{left}" y1="{Y}" x2="{left + pw}" y2="{Y}"/>')
            out.append(f'<text x="{left - 6}" y="{Y}" text-anchor="end" dominant-baseline="middle">{_label(t)}</text>')
        out.append(f'<rect class="axis" x="{left}" y="{top}" width="{pw}" height="{ph}"/>')
        out.append(
            f'<text x="{left + pw / 2:.1f}" y="{self.height - 16}" text-anchor="middle">{escape(self.xlabel)}</text>'
        )
        out.append(
            f'<text x="16" y="{top + ph / 2:.1f}" text-anchor="middle" '
            f'transform="rotate(-90 16 {top + ph / 2:.1f})">{escape(self.ylabel)}</text>'
        )

        for i, s in enumerate(self.series):
            color = PALETTE[i % len(PALETTE)]
            ok = np.isfinite(s.x) & np.isfinite(s.y)
            X, Y = px(s.x[ok]), py(s.y[ok])
            if s.kind == "line":
                pts = " ".join(f"{_fmt(a)},{_fmt(b)}" for a, b in zip(X.tolist(), Y.tolist()))
                out.append(
                    f'<polyline class="{s.css_class}" fill="none" stroke="{color}" stroke-width="1.2" points="{pts}"/>'
                )
                continue
            if s.yerr is not None:
                e = s.yerr[ok]
                for a, lo, hi in zip(X.tolist(), py(s.y[ok] - e).tolist(), py(s.y[ok] + e).tolist()):
                    out.append(
                        f'<line class="errorbar" stroke="{color}" x1="{_fmt(a)}" y1="{_fmt(lo)}" '
                        f'x2="{_fmt(a)}" y2="{_fmt(hi)}"/>'
                    )
            for a, b in zip(X.tolist(), Y.tolist()):
                out.append(f'<circle class="{s.css_class}" fill="{color}" cx="{_fmt(a)}" cy="{_fmt(b)}" r="3"/>')

        labelled = [(i, s) for i, s in enumerate(self.series) if s.label]
        for row, (i, s) in enumerate(labelled):
            y = top + 14 + 16 * row
            out.append(f'<rect x="{left + pw - 170}" y="{y - 9}" width="10" height="10" fill="{PALETTE[i % len(PALETTE)]}"/>')
            out.append(f'<text x="{left + pw - 154}" y="{y}">{escape(s.label)}</text>')
        out.append("</svg>")
        return "\n".join(out) + "\n"
