"""Tiny SVG chart writer: horizontal bars, histograms and line plots."""

from __future__ import annotations

from html import escape
from pathlib import Path
from typing import Sequence

W, H = 640, 400
PAD_L, PAD_R, PAD_T, PAD_B = 70, 20, 40, 50


def _doc(body: list[str], title: str, width: int = W, height: int = H) -> str:
    head = (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">'
    )
    t = f'<text x="{width / 2:.1f}" y="20" text-anchor="middle" font-size="14">{escape(title)}</text>'
    return "\n".join([head, f'<rect width="{width}" height="{height}" fill="white"/>', t, *body, "</svg>"]) + "\n"


def _axes(xlabel: str, ylabel: str) -> list[str]:
    x0, y0, x1, y1 = PAD_L, H - PAD_B, W - PAD_R, PAD_T
    return [
        f'<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/>',
        f'<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>',
        f'<text x="{(x0 + x1) / 2:.1f}" y="{H - 12}" text-anchor="middle">{escape(xlabel)}</text>',
        f'<text x="16" y="{(y0 + y1) / 2:.1f}" text-anchor="middle" '
        f'transform="rotate(-90 16 {(y0 + y1) / 2:.1f})">{escape(ylabel)}</text>',
    ]


def _ticks(lo: float, hi: float, to_px, axis: str, n: int = 5) -> list[str]:
    out = []
    for i in range(n + 1):
        v = lo + (hi - lo) * i / n
        p = to_px(v)
        if axis == "x":
            out.append(f'<text x="{p:.1f}" y="{H - PAD_B + 15}" text-anchor="middle">{v:.2g}</text>')
        else:
            out.append(f'<text x="{PAD_L - 6}" y="{p + 4:.1f}" text-anchor="end">{v:.2g}</text>')
    return out


def bar_chart(labels: Sequence[str], values: Sequence[float], title: str = "") -> str:
    """Horizontal signed bars, one per label (token-weight plots)."""
    n = max(1, len(values))
    row = 22
    height = PAD_T + row * n + 30
    lim = max([abs(v) for v in values] + [1e-12])
    mid = PAD_L + 60 + (W - PAD_L - 60 - PAD_R) / 2
    half = (W - PAD_L - 60 - PAD_R) / 2
    body = [f'<line x1="{mid:.1f}" y1="{PAD_T}" x2="{mid:.1f}" y2="{PAD_T + row * n}" stroke="#888"/>']
    for i, (lab, v) in enumerate(zip(labels, values)):
        y = PAD_T + i * row
        w = abs(v) / lim * half
        x = mid if v >= 0 else mid - w
        colour = "#c0392b" if v >= 0 else "#2c7fb8"
        body.append(f'<rect x="{x:.1f}" y="{y + 3}" width="{w:.1f}" height="{row - 6}" fill="{colour}"/>')
        body.append(f'<text x="{PAD_L + 50}" y="{y + row - 7}" text-anchor="end">{escape(str(lab))}</text>')
        body.append(f'<text x="{W - PAD_R}" y="{y + row - 7}" text-anchor="end">{v:+.4f}</text>')
    return _doc(body, title, W, height)


def histogram(counts: Sequence[int], edges: Sequence[float], title: str = "", xlabel: str = "", ylabel: str = "count") -> str:
    top = max(list(counts) + [1])
    lo, hi = float(edges[0]), float(edges[-1])
    sx = lambda v: PAD_L + (v - lo) / (hi - lo) * (W - PAD_L - PAD_R)
    sy = lambda v: H - PAD_B - v / top * (H - PAD_B - PAD_T)
    body = _axes(xlabel, ylabel) + _ticks(lo, hi, sx, "x") + _ticks(0, top, sy, "y")
    for c, a, b in zip(counts, edges[:-1], edges[1:]):
        body.append(
            f'<rect x="{sx(a):.1f}" y="{sy(c):.1f}" width="{sx(b) - sx(a):.1f}" '
            f'height="{sy(0) - sy(c):.1f}" fill="#5b8db8" stroke="white"/>'
        )
    return _doc(body, title)


def line_plot(
    series: Sequence[tuple[str, Sequence[float], Sequence[float]]],
    title: str = "",
    xlabel: str = "",
    ylabel: str = "",
    xlim: tuple[float, float] | None = None,
    ylim: tuple[float, float] | None = None,
) -> str:
    """Polyline per ``(name, xs, ys)`` series with point markers."""
    xs_all = [x for _, xs, _ in series for x in xs] or [0.0, 1.0]
    ys_all = [y for _, _, ys in series for y in ys] or [0.0, 1.0]
    x_lo, x_hi = xlim or (min(xs_all), max(xs_all))
    y_lo, y_hi = ylim or (min(ys_all), max(ys_all))
    if x_hi == x_lo:
        x_hi = x_lo + 1.0
    if y_hi == y_lo:
        y_hi = y_lo + 1.0
    sx = lambda v: PAD_L + (v - x_lo) / (x_hi - x_lo) * (W - PAD_L - PAD_R)
    sy = lambda v: H - PAD_B - (v - y_lo) / (y_hi - y_lo) * (H - PAD_B - PAD_T)
    body = _axes(xlabel, ylabel) + _ticks(x_lo, x_hi, sx, "x") + _ticks(y_lo, y_hi, sy, "y")
    palette = ("#c0392b", "#2c7fb8", "#27ae60", "#8e44ad")
    for k, (name, xs, ys) in enumerate(series):
        colour = palette[k % len(palette)]
        pts = " ".join(f"{sx(x):.1f},{sy(y):.1f}" for x, y in zip(xs, ys))
        dash = ' stroke-dasharray="4 3"' if k else ""
        body.append(f'<polyline points="{pts}" fill="none" stroke="{colour}"{dash}/>')
        body += [f'<circle cx="{sx(x):.1f}" cy="{sy(y):.1f}" r="2.5" fill="{colour}"/>' for x, y in zip(xs, ys)]
        body.append(f'<text x="{PAD_L + 10}" y="{PAD_T + 14 * (k + 1)}" fill="{colour}">{escape(name)}</text>')
    return _doc(body, title)


def write(path: str | Path, svg: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(svg, encoding="utf-8")
    return path
