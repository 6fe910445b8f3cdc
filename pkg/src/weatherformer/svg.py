"""Self-contained SVG line charts."""
from __future__ import annotations

import math
from typing import Mapping, Sequence
from xml.sax.saxutils import escape

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def nice_ticks(lo: float, hi: float, n: int = 5) -> list:
    """Round tick values covering [lo, hi]."""
    if not (math.isfinite(lo) and math.isfinite(hi)):
        raise ValueError("tick range must be finite")
    if hi <= lo:
        hi = lo + (abs(lo) or 1.0)
    raw = (hi - lo) / max(n - 1, 1)
    mag = 10 ** math.floor(math.log10(raw))
    step = next(m * mag for m in (1, 2, 2.5, 5, 10) if m * mag >= raw)
    first = math.floor(lo / step) * step
    ticks = []
    t = first
    while t <= hi + step * 1e-9:
        ticks.append(round(t, 12))
        t += step
    if ticks[-1] < hi:
        ticks.append(round(t, 12))
    return ticks


def _fmt(v: float) -> str:
    return f"{v:.3g}"


def line_chart(series: Mapping[str, tuple], title: str = "", x_label: str = "epoch", y_label: str = "loss",
               width: int = 640, height: int = 400, log_y: bool = False) -> str:
    """Render ``{name: (xs, ys)}`` as an SVG document string.

    Non-finite points are skipped. With ``log_y`` values must be positive.
    """
    clean = {}
    for name, (xs, ys) in series.items():
        pts = [(float(x), float(y)) for x, y in zip(xs, ys) if math.isfinite(x) and math.isfinite(y)]
        if log_y:
            if any(y <= 0 for _, y in pts):
                raise ValueError(f"series {name!r} has non-positive values on a log axis")
            pts = [(x, math.log10(y)) for x, y in pts]
        if pts:
            clean[name] = pts
    if not clean:
        raise ValueError("nothing to plot")
    all_x = [x for pts in clean.values() for x, _ in pts]
    all_y = [y for pts in clean.values() for _, y in pts]
    xt, yt = nice_ticks(min(all_x), max(all_x)), nice_ticks(min(all_y), max(all_y))
    left, right, top, bottom = 70, 20, 40, 50
    pw, ph = width - left - right, height - top - bottom

    def sx(x):
        return left + pw * (x - xt[0]) / (xt[-1] - xt[0])

    def sy(y):
        return top + ph * (1 - (y - yt[0]) / (yt[-1] - yt[0]))

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">',
           f'<rect width="{width}" height="{height}" fill="white"/>']
    if title:
        out.append(f'<text x="{width / 2:.1f}" y="22" text-anchor="middle" font-size="14">{escape(title)}</text>')
    for t in xt:
        out.append(f'<line x1="{sx(t):.2f}" y1="{top}" x2="{sx(t):.2f}" y2="{top + ph}" stroke="#eee"/>')
        out.append(f'<text x="{sx(t):.2f}" y="{top + ph + 16}" text-anchor="middle">{_fmt(t)}</text>')
    for t in yt:
        label = _fmt(10 ** t) if log_y else _fmt(t)
        out.append(f'<line x1="{left}" y1="{sy(t):.2f}" x2="{left + pw}" y2="{sy(t):.2f}" stroke="#eee"/>')
        out.append(f'<text x="{left - 6}" y="{sy(t) + 4:.2f}" text-anchor="end">{label}</text>')
    out.append(f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="#333"/>')
    out.append(f'<text x="{left + pw / 2:.1f}" y="{height - 10}" text-anchor="middle">{escape(x_label)}</text>')
    out.append(f'<text x="16" y="{top + ph / 2:.1f}" text-anchor="middle" '
               f'transform="rotate(-90 16 {top + ph / 2:.1f})">{escape(y_label)}</text>')
    for k, (name, pts) in enumerate(clean.items()):
        color = PALETTE[k % len(PALETTE)]
        path = " ".join(f"{'M' if i == 0 else 'L'}{sx(x):.2f},{sy(y):.2f}" for i, (x, y) in enumerate(pts))
        out.append(f'<path d="{path}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        ly = top + 14 + 16 * k
        out.append(f'<line x1="{left + pw - 110}" y1="{ly}" x2="{left + pw - 90}" y2="{ly}" '
                   f'stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{left + pw - 85}" y="{ly + 4}">{escape(name)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def write_chart(path, series: Mapping[str, tuple], **kwargs) -> None:
    with open(path, "w") as fh:
        fh.write(line_chart(series, **kwargs))


def columns(rows: Sequence[Mapping], x: str, ys: Sequence[str]) -> dict:
    """``{y: (xs, values)}`` from CSV-style rows, skipping blanks."""
    out = {}
    for y in ys:
        pts = [(float(r[x]), float(r[y])) for r in rows if r.get(y) not in (None, "", "nan")]
        if pts:
            out[y] = tuple(zip(*pts))
    return out
