"""Minimal deterministic SVG plots (log-scale scatter and histograms).

These are inspection aids for experiment outputs, not publication
figures: fixed palette, text-only legend, byte-identical output for
identical data.
"""

from __future__ import annotations

import math
from xml.sax.saxutils import escape

__all__ = ["scatter_svg", "histogram_svg"]

PALETTE = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
    "#9467bd", "#8c564b", "#17becf", "#7f7f7f",
]

_MARGIN_L, _MARGIN_R, _MARGIN_T, _MARGIN_B = 64.0, 16.0, 34.0, 46.0


def _fmt(v: float) -> str:
    return f"{v:.4g}"


def _finite(values):
    return [v for v in values if v is not None and math.isfinite(v)]


def _axis_ticks(lo: float, hi: float, count: int = 5):
    if hi <= lo:
        hi = lo + 1.0
    step = (hi - lo) / (count - 1)
    return [lo + i * step for i in range(count)]


class _Frame:
    """Maps data coordinates onto the pixel frame, optionally log-y."""

    def __init__(self, xs, ys, width, height, ylog):
        self.width, self.height = width, height
        self.ylog = ylog
        xs = _finite(xs) or [0.0, 1.0]
        ys = _finite(ys) or [0.1, 1.0]
        if ylog:
            positive = [y for y in ys if y > 0.0]
            floor = min(positive) / 10.0 if positive else 1e-300
            ys = [math.log10(max(y, floor)) for y in ys]
        self.x_lo, self.x_hi = min(xs), max(xs)
        self.y_lo, self.y_hi = min(ys), max(ys)
        if self.x_hi == self.x_lo:
            self.x_lo -= 0.5
            self.x_hi += 0.5
        if self.y_hi == self.y_lo:
            self.y_lo -= 0.5
            self.y_hi += 0.5

    def y_value(self, y: float) -> float:
        if self.ylog:
            y = math.log10(y) if y > 0.0 else self.y_lo
        return y

    def px(self, x: float) -> float:
        span = self.x_hi - self.x_lo
        return _MARGIN_L + (x - self.x_lo) / span * (self.width - _MARGIN_L - _MARGIN_R)

    def py(self, y: float) -> float:
        span = self.y_hi - self.y_lo
        frac = (self.y_value(y) - self.y_lo) / span
        return self.height - _MARGIN_B - frac * (self.height - _MARGIN_T - _MARGIN_B)

    def y_tick_label(self, tick: float) -> str:
        return f"1e{tick:.3g}" if self.ylog else _fmt(tick)


def _document_head(width, height, title):
    return [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2:.1f}" y="20" text-anchor="middle" '
        f'font-family="sans-serif" font-size="14">{escape(title)}</text>',
    ]


def _axes(parts, frame, xlabel, ylabel, width, height):
    x0, x1 = _MARGIN_L, width - _MARGIN_R
    y0, y1 = height - _MARGIN_B, _MARGIN_T
    parts.append(
        f'<path d="M {x0} {y1} L {x0} {y0} L {x1} {y0}" fill="none" '
        'stroke="black" stroke-width="1"/>'
    )
    for tx in _axis_ticks(frame.x_lo, frame.x_hi):
        px = frame.px(tx)
        parts.append(f'<line x1="{px:.1f}" y1="{y0}" x2="{px:.1f}" y2="{y0 + 4}" stroke="black"/>')
        parts.append(
            f'<text x="{px:.1f}" y="{y0 + 18}" text-anchor="middle" '
            f'font-family="sans-serif" font-size="11">{_fmt(tx)}</text>'
        )
    for ty in _axis_ticks(frame.y_lo, frame.y_hi):
        frac = (ty - frame.y_lo) / (frame.y_hi - frame.y_lo)
        py = y0 - frac * (y0 - y1)
        parts.append(f'<line x1="{x0 - 4}" y1="{py:.1f}" x2="{x0}" y2="{py:.1f}" stroke="black"/>')
        parts.append(
            f'<text x="{x0 - 7}" y="{py + 4:.1f}" text-anchor="end" '
            f'font-family="sans-serif" font-size="11">{escape(frame.y_tick_label(ty))}</text>'
        )
    parts.append(
        f'<text x="{(x0 + x1) / 2:.1f}" y="{height - 8}" text-anchor="middle" '
        f'font-family="sans-serif" font-size="12">{escape(xlabel)}</text>'
    )
    parts.append(
        f'<text x="16" y="{(y0 + y1) / 2:.1f}" text-anchor="middle" '
        f'font-family="sans-serif" font-size="12" '
        f'transform="rotate(-90 16 {(y0 + y1) / 2:.1f})">{escape(ylabel)}</text>'
    )


def _legend(parts, names, width):
    for i, name in enumerate(names):
        color = PALETTE[i % len(PALETTE)]
        y = _MARGIN_T + 6 + 14 * i
        parts.append(
            f'<circle cx="{width - _MARGIN_R - 130}" cy="{y - 4}" r="3.5" fill="{color}"/>'
        )
        parts.append(
            f'<text x="{width - _MARGIN_R - 122}" y="{y}" font-family="sans-serif" '
            f'font-size="11">{escape(name)}</text>'
        )


def scatter_svg(series: dict, *, title="", xlabel="", ylabel="", ylog=False,
                width=640, height=440) -> str:
    """Scatter plot of ``{name: (xs, ys)}`` series."""
    all_x = [x for xs, _ in series.values() for x in xs]
    all_y = [y for _, ys in series.values() for y in ys]
    frame = _Frame(all_x, all_y, width, height, ylog)
    parts = _document_head(width, height, title)
    _axes(parts, frame, xlabel, ylabel, width, height)
    for i, (name, (xs, ys)) in enumerate(series.items()):
        color = PALETTE[i % len(PALETTE)]
        for x, y in zip(xs, ys):
            if y is None or not math.isfinite(x):
                continue
            parts.append(
                f'<circle cx="{frame.px(x):.1f}" cy="{frame.py(y):.1f}" r="2.5" '
                f'fill="{color}" fill-opacity="0.7"/>'
            )
    _legend(parts, list(series), width)
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def histogram_svg(series: dict, *, bins=24, title="", xlabel="", ylabel="count",
                  width=640, height=440) -> str:
    """Grouped histogram of ``{name: values}`` over a shared bin range."""
    pooled = _finite([v for vals in series.values() for v in vals])
    if not pooled:
        pooled = [0.0, 1.0]
    lo, hi = min(pooled), max(pooled)
    if hi == lo:
        lo -= 0.5
        hi += 0.5
    edges = [lo + (hi - lo) * i / bins for i in range(bins + 1)]
    counts = {}
    for name, vals in series.items():
        hist = [0] * bins
        for v in _finite(vals):
            idx = min(int((v - lo) / (hi - lo) * bins), bins - 1)
            hist[idx] += 1
        counts[name] = hist
    max_count = max(max(h) for h in counts.values()) or 1
    frame = _Frame([lo, hi], [0, max_count], width, height, ylog=False)
    parts = _document_head(width, height, title)
    _axes(parts, frame, xlabel, ylabel, width, height)
    n_series = len(counts)
    for i, (name, hist) in enumerate(counts.items()):
        color = PALETTE[i % len(PALETTE)]
        for b, count in enumerate(hist):
            if count == 0:
                continue
            x_left = frame.px(edges[b])
            x_right = frame.px(edges[b + 1])
            slot = (x_right - x_left) / n_series
            top = frame.py(count)
            bottom = frame.py(0)
            parts.append(
                f'<rect x="{x_left + i * slot:.1f}" y="{top:.1f}" '
                f'width="{max(slot - 1, 1):.1f}" height="{bottom - top:.1f}" '
                f'fill="{color}" fill-opacity="0.75"/>'
            )
    _legend(parts, list(counts), width)
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
