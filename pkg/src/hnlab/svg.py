"""Minimal standalone SVG writer for scatter and polyline layers."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence
from xml.sax.saxutils import escape

import numpy as np


class SvgError(ValueError):
    pass


@dataclass
class Layer:
    kind: str                     # "scatter" or "polyline"
    x: np.ndarray
    y: np.ndarray
    label: str = ""
    color: str = "#1f77b4"
    size: float = 2.0             # marker radius or stroke width, in pixels

    def __post_init__(self):
        if self.kind not in ("scatter", "polyline"):
            raise SvgError(f"unknown layer kind {self.kind!r}")
        self.x = np.asarray(self.x, float).ravel()
        self.y = np.asarray(self.y, float).ravel()
        if self.x.shape != self.y.shape:
            raise SvgError("x and y must have the same length")
        if not (np.all(np.isfinite(self.x)) and np.all(np.isfinite(self.y))):
            raise SvgError(f"layer {self.label!r} has non-finite coordinates")


@dataclass
class PlotSpec:
    layers: list = field(default_factory=list)
    xlabel: str = ""
    ylabel: str = ""
    title: str = ""
    xlim: Optional[tuple] = None
    ylim: Optional[tuple] = None
    width: int = 640
    height: int = 480


def _limits(values: Sequence[np.ndarray], given):
    if given is not None:
        lo, hi = map(float, given)
    else:
        allv = np.concatenate([v for v in values if v.size] or [np.array([0.0, 1.0])])
        lo, hi = float(allv.min()), float(allv.max())
    if not (math.isfinite(lo) and math.isfinite(hi)):
        raise SvgError("axis limits must be finite")
    if hi <= lo:
        pad = max(abs(lo), 1.0) * 0.5
        lo, hi = lo - pad, hi + pad
    return lo, hi


def _ticks(lo: float, hi: float, n: int = 5) -> np.ndarray:
    raw = (hi - lo) / n
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 5, 10) if m * mag >= raw), default=10 * mag)
    start = math.ceil(lo / step) * step
    return np.arange(start, hi + 0.5 * step, step)


def _fmt(v: float) -> str:
    return f"{v:.6g}"


def emit_svg(plot: PlotSpec) -> str:
    """Render ``plot`` as an SVG document string.

    The viewBox equals the pixel size; data are mapped into a margin-inset
    frame. Each layer becomes one <g> carrying a data-count attribute.
    """
    W, H = plot.width, plot.height
    ml, mr, mt, mb = 70, 20, 30, 50
    layers = list(plot.layers)
    x0, x1 = _limits([l.x for l in layers], plot.xlim)
    y0, y1 = _limits([l.y for l in layers], plot.ylim)
    if plot.xlim is None:
        pad = 0.03 * (x1 - x0)
        x0, x1 = x0 - pad, x1 + pad
    if plot.ylim is None:
        pad = 0.03 * (y1 - y0)
        y0, y1 = y0 - pad, y1 + pad
    fw, fh = W - ml - mr, H - mt - mb

    def mx(x):
        return ml + (np.asarray(x) - x0) / (x1 - x0) * fw

    def my(y):
        return mt + fh - (np.asarray(y) - y0) / (y1 - y0) * fh

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">',
           f'<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>']
    if plot.title:
        out.append(f'<text x="{W / 2}" y="18" text-anchor="middle" font-size="14">{escape(plot.title)}</text>')
    # axes
    out.append('<g class="axes" stroke="black" fill="none">')
    out.append(f'<rect x="{ml}" y="{mt}" width="{fw}" height="{fh}"/>')
    for t in _ticks(x0, x1):
        px = float(mx(t))
        out.append(f'<line x1="{px:.2f}" y1="{mt + fh}" x2="{px:.2f}" y2="{mt + fh + 5}"/>')
    for t in _ticks(y0, y1):
        py = float(my(t))
        out.append(f'<line x1="{ml - 5}" y1="{py:.2f}" x2="{ml}" y2="{py:.2f}"/>')
    out.append("</g>")
    out.append('<g class="tick-labels" font-size="11" fill="black">')
    for t in _ticks(x0, x1):
        out.append(f'<text x="{float(mx(t)):.2f}" y="{mt + fh + 18}" text-anchor="middle">{_fmt(t)}</text>')
    for t in _ticks(y0, y1):
        out.append(f'<text x="{ml - 8}" y="{float(my(t)) + 4:.2f}" text-anchor="end">{_fmt(t)}</text>')
    out.append("</g>")
    if plot.xlabel:
        out.append(f'<text x="{ml + fw / 2}" y="{H - 10}" text-anchor="middle" font-size="12">'
                   f'{escape(plot.xlabel)}</text>')
    if plot.ylabel:
        out.append(f'<text x="14" y="{mt + fh / 2}" text-anchor="middle" font-size="12" '
                   f'transform="rotate(-90 14 {mt + fh / 2})">{escape(plot.ylabel)}</text>')
    # data, clipped to the frame
    out.append(f'<defs><clipPath id="frame"><rect x="{ml}" y="{mt}" width="{fw}" height="{fh}"/></clipPath></defs>')
    for k, layer in enumerate(layers):
        label = escape(layer.label or f"layer{k}", {'"': "&quot;"})
        px, py = mx(layer.x), my(layer.y)
        if layer.kind == "scatter":
            out.append(f'<g class="scatter" data-label="{label}" data-count="{layer.x.size}" '
                       f'fill="{layer.color}" clip-path="url(#frame)">')
            out.extend(f'<circle cx="{a:.2f}" cy="{b:.2f}" r="{layer.size}"/>' for a, b in zip(px, py))
        else:
            out.append(f'<g class="polyline" data-label="{label}" data-count="{layer.x.size}" fill="none" '
                       f'stroke="{layer.color}" stroke-width="{layer.size}" clip-path="url(#frame)">')
            if layer.x.size:
                pts = " ".join(f"{a:.2f},{b:.2f}" for a, b in zip(px, py))
                out.append(f'<polyline points="{pts}"/>')
        out.append("</g>")
    out.append("</svg>")
    return "\n".join(out) + "\n"
