"""Minimal deterministic SVG plotting.

Renders line and scatter plots as plain SVG strings with linear or
log10 axes, a fixed color palette, and no external dependencies.  The
output is a pure function of the input series: no timestamps, random
identifiers, or environment-dependent formatting, so rerunning an
experiment reproduces its plots byte for byte.  CSV stays the canonical
record; these plots exist for quick visual inspection.

Non-finite points (and non-positive points on a log axis) are dropped;
a line series breaks into separate segments around dropped points.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

__all__ = ["Series", "line_plot", "scatter_plot", "write_svg", "PALETTE"]

PALETTE = (
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd",
    "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f",
)

_FONT = "Helvetica,Arial,sans-serif"


@dataclass(frozen=True)
class Series:
    """One named sequence of (x, y) points."""

    label: str
    xs: tuple
    ys: tuple

    def __post_init__(self):
        object.__setattr__(self, "xs", tuple(float(v) for v in self.xs))
        object.__setattr__(self, "ys", tuple(float(v) for v in self.ys))
        if len(self.xs) != len(self.ys):
            raise ValueError(
                f"series {self.label!r} has {len(self.xs)} x values but "
                f"{len(self.ys)} y values")


def _usable(value: float, log: bool) -> bool:
    return math.isfinite(value) and (not log or value > 0.0)


def _axis_transform(value: float, log: bool) -> float:
    return math.log10(value) if log else value


def _nice_step(span: float) -> float:
    """Tick step of the form {1,2,5}x10^k giving roughly five ticks."""
    raw = span / 5.0
    power = math.floor(math.log10(raw))
    base = raw / 10.0 ** power
    for mult in (1.0, 2.0, 5.0):
        if base <= mult:
            return mult * 10.0 ** power
    return 10.0 ** (power + 1)


def _linear_ticks(lo: float, hi: float) -> list[float]:
    step = _nice_step(hi - lo)
    first = math.ceil(lo / step - 1e-9) * step
    ticks = []
    value = first
    while value <= hi + 1e-9 * step:
        ticks.append(0.0 if abs(value) < 1e-12 * step else value)
        value += step
    return ticks


def _log_ticks(lo: float, hi: float) -> list[float]:
    """Decade ticks (as exponents) covering [lo, hi], thinned to <= 8."""
    first = math.ceil(lo - 1e-9)
    last = math.floor(hi + 1e-9)
    if first > last:
        return [lo, hi]
    exps = list(range(first, last + 1))
    stride = max(1, math.ceil(len(exps) / 8))
    return [float(e) for e in exps[::stride]]


def _fmt_tick(value: float, log: bool) -> str:
    if log:
        exp = round(value)
        if abs(value - exp) < 1e-9:
            return f"1e{exp:+03d}" if abs(exp) > 3 else f"{10.0 ** exp:g}"
        return f"{10.0 ** value:.2g}"
    return f"{value:g}"


def _escape(text: str) -> str:
    return (text.replace("&", "&amp;").replace("<", "&lt;")
            .replace(">", "&gt;").replace('"', "&quot;"))


class _Frame:
    """Shared plotting frame: axes, ticks, grid, title, legend."""

    def __init__(self, series, *, title, xlabel, ylabel, xlog, ylog,
                 width, height):
        self.xlog, self.ylog = xlog, ylog
        self.width, self.height = width, height
        self.ml, self.mr, self.mt, self.mb = 62.0, 16.0, 34.0, 46.0
        self.pw = width - self.ml - self.mr
        self.ph = height - self.mt - self.mb
        self.title, self.xlabel, self.ylabel = title, xlabel, ylabel
        self.series = list(series)

        txs, tys = [], []
        for s in self.series:
            for x, y in zip(s.xs, s.ys):
                if _usable(x, xlog) and _usable(y, ylog):
                    txs.append(_axis_transform(x, xlog))
                    tys.append(_axis_transform(y, ylog))
        self.empty = not txs
        if self.empty:
            self.x0 = self.y0 = 0.0
            self.x1 = self.y1 = 1.0
        else:
            self.x0, self.x1 = self._padded(min(txs), max(txs), xlog)
            self.y0, self.y1 = self._padded(min(tys), max(tys), ylog)

    @staticmethod
    def _padded(lo: float, hi: float, log: bool) -> tuple[float, float]:
        if hi - lo < 1e-12:
            pad = 0.5 if log else max(0.5, abs(lo) * 0.1)
            return lo - pad, hi + pad
        pad = (hi - lo) * 0.04
        return lo - pad, hi + pad

    def px(self, x: float) -> float:
        t = _axis_transform(x, self.xlog)
        return self.ml + (t - self.x0) / (self.x1 - self.x0) * self.pw

    def py(self, y: float) -> float:
        t = _axis_transform(y, self.ylog)
        return self.mt + (1.0 - (t - self.y0) / (self.y1 - self.y0)) * self.ph

    def usable(self, x: float, y: float) -> bool:
        return _usable(x, self.xlog) and _usable(y, self.ylog)

    def _tick_values(self, lo, hi, log) -> list[tuple[float, str]]:
        if log:
            return [(t, _fmt_tick(t, True)) for t in _log_ticks(lo, hi)]
        return [(t, _fmt_tick(t, False)) for t in _linear_ticks(lo, hi)]

    def header(self) -> list[str]:
        out = [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{self.width}" '
            f'height="{self.height}" viewBox="0 0 {self.width} {self.height}">',
            f'<rect width="{self.width}" height="{self.height}" fill="#ffffff"/>',
        ]
        x_right = self.ml + self.pw
        y_bot = self.mt + self.ph
        for t, label in self._tick_values(self.x0, self.x1, self.xlog):
            px = self.ml + (t - self.x0) / (self.x1 - self.x0) * self.pw
            out.append(f'<line x1="{px:.2f}" y1="{self.mt:.2f}" '
                       f'x2="{px:.2f}" y2="{y_bot:.2f}" stroke="#e0e0e0" '
                       'stroke-width="1"/>')
            out.append(f'<text x="{px:.2f}" y="{y_bot + 16:.2f}" '
                       f'font-family="{_FONT}" font-size="11" fill="#444" '
                       f'text-anchor="middle">{_escape(label)}</text>')
        for t, label in self._tick_values(self.y0, self.y1, self.ylog):
            py = self.mt + (1.0 - (t - self.y0) / (self.y1 - self.y0)) * self.ph
            out.append(f'<line x1="{self.ml:.2f}" y1="{py:.2f}" '
                       f'x2="{x_right:.2f}" y2="{py:.2f}" stroke="#e0e0e0" '
                       'stroke-width="1"/>')
            out.append(f'<text x="{self.ml - 6:.2f}" y="{py + 4:.2f}" '
                       f'font-family="{_FONT}" font-size="11" fill="#444" '
                       f'text-anchor="end">{_escape(label)}</text>')
        out.append(f'<rect x="{self.ml:.2f}" y="{self.mt:.2f}" '
                   f'width="{self.pw:.2f}" height="{self.ph:.2f}" '
                   'fill="none" stroke="#333333" stroke-width="1"/>')
        if self.title:
            out.append(f'<text x="{self.width / 2:.2f}" y="22" '
                       f'font-family="{_FONT}" font-size="14" fill="#111" '
                       f'text-anchor="middle">{_escape(self.title)}</text>')
        if self.xlabel:
            out.append(f'<text x="{self.ml + self.pw / 2:.2f}" '
                       f'y="{self.height - 10:.2f}" font-family="{_FONT}" '
                       'font-size="12" fill="#111" text-anchor="middle">'
                       f'{_escape(self.xlabel)}</text>')
        if self.ylabel:
            cx, cy = 16.0, self.mt + self.ph / 2
            out.append(f'<text x="{cx:.2f}" y="{cy:.2f}" '
                       f'font-family="{_FONT}" font-size="12" fill="#111" '
                       f'text-anchor="middle" '
                       f'transform="rotate(-90 {cx:.2f} {cy:.2f})">'
                       f'{_escape(self.ylabel)}</text>')
        if self.empty:
            out.append(f'<text x="{self.ml + self.pw / 2:.2f}" '
                       f'y="{self.mt + self.ph / 2:.2f}" '
                       f'font-family="{_FONT}" font-size="13" fill="#888" '
                       'text-anchor="middle">no plottable data</text>')
        return out

    def legend(self) -> list[str]:
        labeled = [s for s in self.series if s.label]
        if not labeled:
            return []
        box_w = 14 + 7 * max(len(s.label) for s in labeled) + 14
        box_h = 8 + 16 * len(labeled)
        bx = self.ml + self.pw - box_w - 8
        by = self.mt + 8
        out = [f'<rect x="{bx:.2f}" y="{by:.2f}" width="{box_w}" '
               f'height="{box_h}" fill="#ffffff" fill-opacity="0.85" '
               'stroke="#999999" stroke-width="0.5"/>']
        for i, s in enumerate(labeled):
            color = PALETTE[self.series.index(s) % len(PALETTE)]
            ly = by + 16 + 16 * i
            out.append(f'<line x1="{bx + 6:.2f}" y1="{ly - 4:.2f}" '
                       f'x2="{bx + 22:.2f}" y2="{ly - 4:.2f}" '
                       f'stroke="{color}" stroke-width="2.5"/>')
            out.append(f'<text x="{bx + 27:.2f}" y="{ly:.2f}" '
                       f'font-family="{_FONT}" font-size="11" fill="#222">'
                       f'{_escape(s.label)}</text>')
        return out


def line_plot(series, *, title: str = "", xlabel: str = "", ylabel: str = "",
              xlog: bool = False, ylog: bool = False, width: int = 720,
              height: int = 480, markers: bool = False) -> str:
    """Render line series to an SVG string (segments break at gaps)."""
    frame = _Frame(series, title=title, xlabel=xlabel, ylabel=ylabel,
                   xlog=xlog, ylog=ylog, width=width, height=height)
    out = frame.header()
    for i, s in enumerate(frame.series):
        color = PALETTE[i % len(PALETTE)]
        segment: list[str] = []
        segments: list[list[str]] = []
        for x, y in zip(s.xs, s.ys):
            if frame.usable(x, y):
                segment.append(f"{frame.px(x):.2f},{frame.py(y):.2f}")
            elif segment:
                segments.append(segment)
                segment = []
        if segment:
            segments.append(segment)
        for seg in segments:
            if len(seg) == 1:
                cx, cy = seg[0].split(",")
                out.append(f'<circle cx="{cx}" cy="{cy}" r="2.5" '
                           f'fill="{color}"/>')
            else:
                out.append(f'<polyline points="{" ".join(seg)}" fill="none" '
                           f'stroke="{color}" stroke-width="1.8"/>')
        if markers:
            for x, y in zip(s.xs, s.ys):
                if frame.usable(x, y):
                    out.append(f'<circle cx="{frame.px(x):.2f}" '
                               f'cy="{frame.py(y):.2f}" r="2.5" '
                               f'fill="{color}"/>')
    out.extend(frame.legend())
    out.append("</svg>")
    return "\n".join(out) + "\n"


def scatter_plot(series, *, title: str = "", xlabel: str = "",
                 ylabel: str = "", xlog: bool = False, ylog: bool = False,
                 width: int = 720, height: int = 480,
                 radius: float = 3.5) -> str:
    """Render scatter series to an SVG string."""
    frame = _Frame(series, title=title, xlabel=xlabel, ylabel=ylabel,
                   xlog=xlog, ylog=ylog, width=width, height=height)
    out = frame.header()
    for i, s in enumerate(frame.series):
        color = PALETTE[i % len(PALETTE)]
        for x, y in zip(s.xs, s.ys):
            if frame.usable(x, y):
                out.append(f'<circle cx="{frame.px(x):.2f}" '
                           f'cy="{frame.py(y):.2f}" r="{radius}" '
                           f'fill="{color}" fill-opacity="0.75"/>')
    out.extend(frame.legend())
    out.append("</svg>")
    return "\n".join(out) + "\n"


def write_svg(path, svg_text: str) -> Path:
    """Write an SVG string to ``path``, creating parent directories."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(svg_text, encoding="utf-8")
    return path
