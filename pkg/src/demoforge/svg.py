"""Deterministic SVG 1.1 output: frames, heatmaps, line charts, reliability diagrams.

All numbers are written with fixed precision, so the same input always
produces the same bytes.
"""

from __future__ import annotations

import math
from typing import Mapping, Optional, Sequence
from xml.sax.saxutils import escape

import numpy as np

from . import model as m
from .matchgen import BOMB_SITES, MAP_BOUNDS

CT_COLOR = "#00bcd4"  # cyan
T_COLOR = "#ff9800"  # orange
FIRE_COLOR = "#e53935"
SMOKE_COLOR = "#9e9e9e"
SERIES_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#8c564b", "#e377c2")


def _n(v: float) -> str:
    s = f"{v:.2f}"
    return "0.00" if s == "-0.00" else s


def _doc(width: int, height: int, body: list[str], background: str = "#ffffff") -> str:
    head = (f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width}" height="{height}" '
            f'viewBox="0 0 {width} {height}">')
    return "\n".join([head, f'<rect x="0" y="0" width="{width}" height="{height}" fill="{background}"/>',
                      *body, "</svg>"]) + "\n"


class _MapCanvas:
    def __init__(self, size: int, bounds):
        self.size = size
        self.xmin, self.xmax, self.ymin, self.ymax = bounds

    def __call__(self, x: float, y: float) -> tuple[float, float]:
        px = (x - self.xmin) / (self.xmax - self.xmin) * self.size
        py = (self.ymax - y) / (self.ymax - self.ymin) * self.size
        return px, py

    def scale(self, d: float) -> float:
        return d / (self.xmax - self.xmin) * self.size


def render_frame_svg(frame: m.Frame, map_name: str, size: int = 600,
                     bounds=MAP_BOUNDS, sites: Mapping = BOMB_SITES) -> str:
    """Draw one frame: players as side-colored dots with HP bars and view lines.

    A white triangle marks the bomb (at its site when planted, on the carrier
    otherwise), red circles are fires and gray circles smokes. Dead players
    are drawn as small gray crosses without an HP bar.
    """
    c = _MapCanvas(size, bounds)
    body = [f'<text x="8" y="18" font-family="sans-serif" font-size="14" fill="#ffffff">'
            f'{escape(map_name)} tick {frame.tick} {frame.phase.name} {_n(frame.clock_secs)}s</text>']
    for e in frame.smokes:
        x, y = c(e.pos[0], e.pos[1])
        body.append(f'<circle class="smoke" cx="{_n(x)}" cy="{_n(y)}" r="{_n(c.scale(144))}" '
                    f'fill="{SMOKE_COLOR}" fill-opacity="0.6"/>')
    for e in frame.fires:
        x, y = c(e.pos[0], e.pos[1])
        body.append(f'<circle class="fire" cx="{_n(x)}" cy="{_n(y)}" r="{_n(c.scale(120))}" '
                    f'fill="{FIRE_COLOR}" fill-opacity="0.6"/>')
    bomb_at: Optional[tuple[float, float]] = None
    if frame.bomb.planted_site is not None:
        bomb_at = sites[frame.bomb.planted_site]
    for p in frame.players:
        x, y = c(p.pos[0], p.pos[1])
        if p.hp <= 0:
            body.append(f'<path class="dead" d="M{_n(x - 4)} {_n(y - 4)}L{_n(x + 4)} {_n(y + 4)}'
                        f'M{_n(x - 4)} {_n(y + 4)}L{_n(x + 4)} {_n(y - 4)}" stroke="#bdbdbd" stroke-width="2"/>')
            continue
        color = CT_COLOR if p.side is m.Side.CT else T_COLOR
        yaw = math.radians(p.view_yaw)
        lx, ly = x + 16 * math.cos(yaw), y - 16 * math.sin(yaw)
        body.append(f'<line class="view" x1="{_n(x)}" y1="{_n(y)}" x2="{_n(lx)}" y2="{_n(ly)}" '
                    f'stroke="#000000" stroke-width="2"/>')
        body.append(f'<circle class="player {p.side.name.lower()}" cx="{_n(x)}" cy="{_n(y)}" r="6" '
                    f'fill="{color}" stroke="#000000" stroke-width="1"/>')
        body.append(f'<rect class="hpbar-bg" x="{_n(x - 10)}" y="{_n(y - 14)}" width="20" height="3" '
                    f'fill="#424242"/>')
        body.append(f'<rect class="hpbar" x="{_n(x - 10)}" y="{_n(y - 14)}" width="{_n(20 * min(p.hp, 100) / 100)}" '
                    f'height="3" fill="#4caf50"/>')
        if frame.bomb.planted_site is None and p.player_id == frame.bomb.carrier_id:
            bomb_at = (p.pos[0], p.pos[1])
    if bomb_at is not None:
        x, y = c(*bomb_at)
        body.append(f'<polygon class="bomb" points="{_n(x)},{_n(y - 7)} {_n(x - 6)},{_n(y + 5)} '
                    f'{_n(x + 6)},{_n(y + 5)}" fill="#ffffff" stroke="#000000" stroke-width="1"/>')
    return _doc(size, size, body, background="#263238")


def _heat_color(v: float) -> str:
    # dark blue -> yellow ramp
    r = int(round(20 + v * (253 - 20)))
    g = int(round(20 + v * (231 - 20)))
    b = int(round(80 + v * (37 - 80)))
    return f"#{r:02x}{g:02x}{b:02x}"


def heatmap_svg(grid, title: str = "", size: int = 500) -> str:
    """Heatmap of a HeatmapGrid with log(1 + count) intensity; empty bins are left dark."""
    nx, ny = grid.resolution
    v = np.log1p(grid.counts.astype(float))
    top = float(v.max()) if v.size else 0.0
    if top > 0:
        v = v / top
    cw, ch = size / nx, size / ny
    body = []
    for i in range(nx):
        for j in range(ny):
            if grid.counts[i, j] == 0:
                continue
            y = (ny - 1 - j) * ch
            body.append(f'<rect class="bin" x="{_n(i * cw)}" y="{_n(y)}" width="{_n(cw)}" height="{_n(ch)}" '
                        f'fill="{_heat_color(float(v[i, j]))}"><title>{int(grid.counts[i, j])}</title></rect>')
    if title:
        body.append(f'<text x="8" y="18" font-family="sans-serif" font-size="14" fill="#ffffff">'
                    f'{escape(title)}</text>')
    return _doc(size, size, body, background="#101020")


def line_chart_svg(series: Mapping[str, Sequence[tuple[float, float]]], title: str = "",
                   width: int = 640, height: int = 360, y_range: tuple[float, float] = (0.0, 1.0),
                   x_label: str = "tick", y_label: str = "P(CT win)") -> str:
    """Polyline per named series over a shared x axis; series drawn in name order."""
    pad = 48
    xs = [x for pts in series.values() for x, _ in pts]
    x0, x1 = (min(xs), max(xs)) if xs else (0.0, 1.0)
    if x1 == x0:
        x1 = x0 + 1
    y0, y1 = y_range

    def px(x):
        return pad + (x - x0) / (x1 - x0) * (width - 2 * pad)

    def py(y):
        return height - pad - (y - y0) / (y1 - y0) * (height - 2 * pad)

    body = [f'<line x1="{pad}" y1="{height - pad}" x2="{width - pad}" y2="{height - pad}" stroke="#000000"/>',
            f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{height - pad}" stroke="#000000"/>']
    for k in range(5):
        yv = y0 + (y1 - y0) * k / 4
        body.append(f'<text x="4" y="{_n(py(yv) + 4)}" font-family="sans-serif" font-size="10">{yv:.2f}</text>')
    body.append(f'<text x="{width // 2}" y="{height - 10}" font-family="sans-serif" font-size="12">'
                f'{escape(x_label)}</text>')
    body.append(f'<text x="4" y="{pad - 16}" font-family="sans-serif" font-size="12">{escape(y_label)}</text>')
    for idx, name in enumerate(sorted(series)):
        color = SERIES_COLORS[idx % len(SERIES_COLORS)]
        pts = " ".join(f"{_n(px(x))},{_n(py(y))}" for x, y in series[name])
        body.append(f'<polyline class="series" points="{pts}" fill="none" stroke="{color}" stroke-width="2"/>')
        body.append(f'<text x="{width - pad - 120}" y="{pad + 14 * idx}" font-family="sans-serif" '
                    f'font-size="11" fill="{color}">{escape(name)}</text>')
    if title:
        body.append(f'<text x="{pad}" y="20" font-family="sans-serif" font-size="14">{escape(title)}</text>')
    return _doc(width, height, body)


def reliability_svg(bins: Sequence, title: str = "", size: int = 400) -> str:
    """Reliability diagram: per-bin accuracy bars against the diagonal.

    ``bins`` holds objects with ``lower``, ``upper``, ``size`` and ``acc``.
    """
    pad = 40
    span = size - 2 * pad
    body = [f'<line x1="{pad}" y1="{size - pad}" x2="{size - pad}" y2="{pad}" stroke="#9e9e9e" '
            f'stroke-dasharray="4,4"/>',
            f'<rect x="{pad}" y="{pad}" width="{span}" height="{span}" fill="none" stroke="#000000"/>']
    for b in bins:
        if b.size == 0:
            continue
        x = pad + b.lower * span
        w = (b.upper - b.lower) * span
        h = b.acc * span
        body.append(f'<rect class="bin" x="{_n(x)}" y="{_n(size - pad - h)}" width="{_n(w)}" height="{_n(h)}" '
                    f'fill="#1f77b4" fill-opacity="0.7" stroke="#0d3c61"/>')
    if title:
        body.append(f'<text x="{pad}" y="24" font-family="sans-serif" font-size="14">{escape(title)}</text>')
    return _doc(size, size, body)
