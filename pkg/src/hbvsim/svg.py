"""Minimal SVG line and scatter plots, written without a plotting library."""

from __future__ import annotations

import math
from pathlib import Path
from typing import Sequence
from xml.sax.saxutils import escape

import numpy as np

WIDTH, HEIGHT = 640, 420
MARGIN = dict(left=72, right=150, top=36, bottom=52)
PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e",
           "#17becf", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22")


def _nice_ticks(lo: float, hi: float, count: int = 5) -> list[float]:
    if hi <= lo:
        return [lo]
    raw = (hi - lo) / count
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 5, 10) if m * mag >= raw), default=10 * mag)
    start = math.ceil(lo / step) * step
    ticks = []
    x = start
    while x <= hi + 1e-9 * step:
        ticks.append(round(x, 12))
        x += step
    return ticks


class _Axes:
    def __init__(self, xs, ys, log_y: bool):
        self.log_y = log_y
        xs = np.asarray(xs, dtype=float)
        ys = np.asarray(ys, dtype=float)
        if log_y:
            ys = ys[ys > 0]
            ys = np.log10(ys) if ys.size else np.array([0.0, 1.0])
        ys = ys[np.isfinite(ys)]
        xs = xs[np.isfinite(xs)]
        self.x0, self.x1 = (float(xs.min()), float(xs.max())) if xs.size else (0.0, 1.0)
        self.y0, self.y1 = (float(ys.min()), float(ys.max())) if ys.size else (0.0, 1.0)
        if self.x1 == self.x0:
            self.x1 = self.x0 + 1.0
        if self.y1 == self.y0:
            self.y0, self.y1 = self.y0 - 0.5, self.y1 + 0.5
        if log_y:
            self.y0, self.y1 = math.floor(self.y0), math.ceil(self.y1)
        self.pw = WIDTH - MARGIN["left"] - MARGIN["right"]
        self.ph = HEIGHT - MARGIN["top"] - MARGIN["bottom"]

    def px(self, x: float) -> float:
        return MARGIN["left"] + (x - self.x0) / (self.x1 - self.x0) * self.pw

    def py(self, y: float) -> float:
        if self.log_y:
            y = math.log10(y) if y > 0 else self.y0
        return MARGIN["top"] + (1 - (y - self.y0) / (self.y1 - self.y0)) * self.ph

    def frame(self, title: str, xlabel: str, ylabel: str) -> list[str]:
        left, top = MARGIN["left"], MARGIN["top"]
        out = [
            f'<rect x="{left}" y="{top}" width="{self.pw}" height="{self.ph}" '
            f'fill="none" stroke="#000"/>',
            f'<text x="{WIDTH / 2:.1f}" y="22" text-anchor="middle" font-size="14">{escape(title)}</text>',
            f'<text x="{left + self.pw / 2:.1f}" y="{HEIGHT - 12}" text-anchor="middle" '
            f'font-size="12">{escape(xlabel)}</text>',
            f'<text x="16" y="{top + self.ph / 2:.1f}" text-anchor="middle" font-size="12" '
            f'transform="rotate(-90 16 {top + self.ph / 2:.1f})">{escape(ylabel)}</text>',
        ]
        for t in _nice_ticks(self.x0, self.x1):
            x = self.px(t)
            out.append(f'<line x1="{x:.1f}" y1="{top + self.ph}" x2="{x:.1f}" '
                       f'y2="{top + self.ph + 5}" stroke="#000"/>')
            out.append(f'<text x="{x:.1f}" y="{top + self.ph + 18}" text-anchor="middle" '
                       f'font-size="10">{t:g}</text>')
        if self.log_y:
            span = int(self.y1 - self.y0)
            stride = max(1, span // 6)
            yticks = [(10.0 ** e, f"1e{e}") for e in range(int(self.y0), int(self.y1) + 1, stride)]
        else:
            yticks = [(t, f"{t:g}") for t in _nice_ticks(self.y0, self.y1)]
        for val, label in yticks:
            y = self.py(val)
            out.append(f'<line x1="{left - 5}" y1="{y:.1f}" x2="{left}" y2="{y:.1f}" stroke="#000"/>')
            out.append(f'<text x="{left - 8}" y="{y + 3:.1f}" text-anchor="end" '
                       f'font-size="10">{label}</text>')
        return out


def _write(path, body: list[str]) -> Path:
    path = Path(path)
    head = (f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
            f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif">')
    path.write_text("\n".join([head, '<rect width="100%" height="100%" fill="#fff"/>', *body,
                               "</svg>"]) + "\n")
    return path


def line_plot(path, series: Sequence[tuple[str, Sequence[float], Sequence[float]]],
              title: str = "", xlabel: str = "time (days)", ylabel: str = "",
              log_y: bool = False) -> Path:
    """One polyline per ``(label, t, y)`` series. Non-positive values are
    pinned to the axis floor on a log scale."""
    all_t = np.concatenate([np.asarray(t, dtype=float) for _, t, _ in series]) if series else []
    all_y = np.concatenate([np.asarray(y, dtype=float) for _, _, y in series]) if series else []
    ax = _Axes(all_t, all_y, log_y)
    body = ax.frame(title, xlabel, ylabel)
    for k, (label, t, y) in enumerate(series):
        colour = PALETTE[k % len(PALETTE)]
        pts = " ".join(f"{ax.px(a):.2f},{ax.py(b):.2f}"
                       for a, b in zip(np.asarray(t, float), np.asarray(y, float)) if math.isfinite(b))
        body.append(f'<polyline fill="none" stroke="{colour}" stroke-width="1.5" points="{pts}"/>')
        ly = MARGIN["top"] + 14 + 16 * k
        lx = WIDTH - MARGIN["right"] + 10
        body.append(f'<line x1="{lx}" y1="{ly - 4}" x2="{lx + 18}" y2="{ly - 4}" '
                    f'stroke="{colour}" stroke-width="2"/>')
        body.append(f'<text x="{lx + 24}" y="{ly}" font-size="11">{escape(label)}</text>')
    return _write(path, body)


def scatter_plot(path, x, y, title: str = "", xlabel: str = "", ylabel: str = "",
                 log_y: bool = False) -> Path:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    ax = _Axes(x, y, log_y)
    body = ax.frame(title, xlabel, ylabel)
    for a, b in zip(x, y):
        if math.isfinite(a) and math.isfinite(b) and (b > 0 or not log_y):
            body.append(f'<circle cx="{ax.px(a):.2f}" cy="{ax.py(b):.2f}" r="1.6" '
                        f'fill="#1f77b4" fill-opacity="0.6"/>')
    return _write(path, body)
