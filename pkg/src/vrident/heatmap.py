"""Standalone SVG heatmaps with a viridis-like scale (yellow = high)."""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional
from xml.sax.saxutils import escape

# viridis control points, low -> high
_STOPS = [(0.0, (68, 1, 84)), (0.25, (59, 82, 139)), (0.5, (33, 145, 140)),
          (0.75, (94, 201, 98)), (1.0, (253, 231, 37))]

CELL = 56
MARGIN_LEFT = 90
MARGIN_TOP = 60
LEGEND_W = 18


@dataclass
class HeatmapSpec:
    x_labels: List[str]
    y_labels: List[str]
    values: List[List[Optional[float]]]  # rows follow y_labels, columns x_labels
    title: str = ""
    x_title: str = ""
    y_title: str = ""
    vmin: Optional[float] = None
    vmax: Optional[float] = None

    def __post_init__(self):
        if len(self.values) != len(self.y_labels) or any(
                len(r) != len(self.x_labels) for r in self.values):
            raise ValueError("value grid does not match the axis labels")

    def finite_values(self) -> List[float]:
        return [v for r in self.values for v in r if v is not None and math.isfinite(v)]

    def scale(self):
        vals = self.finite_values()
        lo = self.vmin if self.vmin is not None else (min(vals) if vals else 0.0)
        hi = self.vmax if self.vmax is not None else (max(vals) if vals else 1.0)
        if hi <= lo:
            lo, hi = min(lo, 0.0), max(hi, 1.0)
        return lo, hi

    def to_json(self) -> dict:
        return {"x_labels": self.x_labels, "y_labels": self.y_labels, "values": self.values,
                "title": self.title, "x_title": self.x_title, "y_title": self.y_title,
                "vmin": self.vmin, "vmax": self.vmax}


def color(u: float) -> str:
    """Hex color for ``u`` in [0, 1]."""
    u = min(max(u, 0.0), 1.0)
    for (a, ca), (b, cb) in zip(_STOPS, _STOPS[1:]):
        if u <= b:
            f = (u - a) / (b - a)
            rgb = [round(x + f * (y - x)) for x, y in zip(ca, cb)]
            return "#%02x%02x%02x" % tuple(rgb)
    return "#%02x%02x%02x" % _STOPS[-1][1]


def render_svg(spec: HeatmapSpec) -> str:
    nx, ny = len(spec.x_labels), len(spec.y_labels)
    lo, hi = spec.scale()
    grid_w, grid_h = nx * CELL, ny * CELL
    width = MARGIN_LEFT + grid_w + 110
    height = MARGIN_TOP + grid_h + 70
    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width}" '
        f'height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif">',
        '<defs>',
        '<pattern id="nodata" width="8" height="8" patternUnits="userSpaceOnUse" '
        'patternTransform="rotate(45)">',
        '<rect width="8" height="8" fill="#ffffff"/>',
        '<line x1="0" y1="0" x2="0" y2="8" stroke="#999999" stroke-width="3"/>',
        '</pattern>',
        '<linearGradient id="scale" x1="0" y1="1" x2="0" y2="0">',
    ]
    out += [f'<stop offset="{a:g}" stop-color="{color(a)}"/>' for a, _ in _STOPS]
    out += ['</linearGradient>', '</defs>']
    if spec.title:
        out.append(f'<text x="{width / 2:.1f}" y="24" text-anchor="middle" font-size="15">'
                   f'{escape(spec.title)}</text>')

    for r, row in enumerate(spec.values):
        for c, v in enumerate(row):
            x, y = MARGIN_LEFT + c * CELL, MARGIN_TOP + r * CELL
            if v is None or not math.isfinite(v):
                out.append(f'<rect x="{x}" y="{y}" width="{CELL}" height="{CELL}" '
                           f'fill="url(#nodata)" stroke="#ffffff" class="nodata"/>')
                continue
            u = (v - lo) / (hi - lo)
            fill = color(u)
            out.append(f'<rect x="{x}" y="{y}" width="{CELL}" height="{CELL}" fill="{fill}" '
                       f'stroke="#ffffff" class="cell"><title>{v:.4f}</title></rect>')
            ink = "#000000" if u > 0.6 else "#ffffff"
            out.append(f'<text x="{x + CELL / 2:.1f}" y="{y + CELL / 2 + 4:.1f}" '
                       f'text-anchor="middle" font-size="11" fill="{ink}">{v:.3f}</text>')

    for c, lab in enumerate(spec.x_labels):
        out.append(f'<text x="{MARGIN_LEFT + c * CELL + CELL / 2:.1f}" '
                   f'y="{MARGIN_TOP + grid_h + 16}" text-anchor="middle" font-size="12">'
                   f'{escape(str(lab))}</text>')
    for r, lab in enumerate(spec.y_labels):
        out.append(f'<text x="{MARGIN_LEFT - 8}" y="{MARGIN_TOP + r * CELL + CELL / 2 + 4:.1f}" '
                   f'text-anchor="end" font-size="12">{escape(str(lab))}</text>')
    if spec.x_title:
        out.append(f'<text x="{MARGIN_LEFT + grid_w / 2:.1f}" y="{MARGIN_TOP + grid_h + 40}" '
                   f'text-anchor="middle" font-size="13">{escape(spec.x_title)}</text>')
    if spec.y_title:
        cx, cy = 24, MARGIN_TOP + grid_h / 2
        out.append(f'<text x="{cx}" y="{cy:.1f}" text-anchor="middle" font-size="13" '
                   f'transform="rotate(-90 {cx} {cy:.1f})">{escape(spec.y_title)}</text>')

    lx = MARGIN_LEFT + grid_w + 24
    out.append(f'<rect x="{lx}" y="{MARGIN_TOP}" width="{LEGEND_W}" height="{grid_h}" '
               f'fill="url(#scale)" stroke="#333333" class="legend"/>')
    for frac in (0.0, 0.5, 1.0):
        y = MARGIN_TOP + grid_h * (1.0 - frac)
        out.append(f'<text x="{lx + LEGEND_W + 6}" y="{y + 4:.1f}" font-size="11">'
                   f'{lo + frac * (hi - lo):.3f}</text>')
    out.append('</svg>')
    return "\n".join(out) + "\n"


def emit_heatmap(spec: HeatmapSpec, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(render_svg(spec), encoding="utf-8")
    return path
