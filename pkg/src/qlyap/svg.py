"""Minimal static SVG line charts (no plotting dependency)."""
from __future__ import annotations

from xml.sax.saxutils import escape

import numpy as np

from .simulator import atomic_write

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf")
MAX_POINTS = 2000


def _thin(x, y):
    if len(x) <= MAX_POINTS:
        return x, y
    idx = np.unique(np.linspace(0, len(x) - 1, MAX_POINTS).astype(int))
    return x[idx], y[idx]


def _ticks(lo, hi, n=5):
    return [lo + (hi - lo) * i / (n - 1) for i in range(n)]


def line_chart(series, path, title="", xlabel="t", ylabel="", width=640, height=400) -> None:
    """Write ``series`` (a list of ``(label, x, y)``) as one SVG chart."""
    ml, mr, mt, mb = 64, 150, 32, 48
    pw, ph = width - ml - mr, height - mt - mb
    xs = [np.asarray(s[1], dtype=float) for s in series]
    ys = [np.asarray(s[2], dtype=float) for s in series]
    finite = [v[np.isfinite(v)] for v in ys]
    x0 = min(float(x.min()) for x in xs)
    x1 = max(float(x.max()) for x in xs)
    y0 = min((float(v.min()) for v in finite if v.size), default=0.0)
    y1 = max((float(v.max()) for v in finite if v.size), default=1.0)
    if x1 <= x0:
        x1 = x0 + 1.0
    if y1 <= y0:
        y0, y1 = y0 - 0.5, y1 + 0.5
    pad = 0.04 * (y1 - y0)
    y0, y1 = y0 - pad, y1 + pad

    def px(x):
        return ml + (x - x0) / (x1 - x0) * pw

    def py(y):
        return mt + (y1 - y) / (y1 - y0) * ph

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'font-family="sans-serif" font-size="11">',
           f'<rect width="{width}" height="{height}" fill="white"/>',
           f'<text x="{ml}" y="18" font-size="13">{escape(title)}</text>',
           f'<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="none" stroke="#444"/>']
    for v in _ticks(x0, x1):
        out.append(f'<text x="{px(v):.1f}" y="{mt + ph + 16}" text-anchor="middle">{v:.3g}</text>')
    for v in _ticks(y0, y1):
        out.append(f'<text x="{ml - 6}" y="{py(v) + 4:.1f}" text-anchor="end">{v:.3g}</text>')
        out.append(f'<line x1="{ml}" x2="{ml + pw}" y1="{py(v):.1f}" y2="{py(v):.1f}" '
                   f'stroke="#ddd"/>')
    out.append(f'<text x="{ml + pw / 2}" y="{height - 10}" text-anchor="middle">{escape(xlabel)}</text>')
    out.append(f'<text x="14" y="{mt + ph / 2}" transform="rotate(-90 14 {mt + ph / 2})" '
               f'text-anchor="middle">{escape(ylabel)}</text>')
    for i, ((label, _, _), x, y) in enumerate(zip(series, xs, ys)):
        color = PALETTE[i % len(PALETTE)]
        x, y = _thin(x, y)
        ok = np.isfinite(y)
        pts = " ".join(f"{px(a):.2f},{py(b):.2f}" for a, b in zip(x[ok], y[ok]))
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.3" points="{pts}"/>')
        ly = mt + 14 + 16 * i
        out.append(f'<line x1="{ml + pw + 10}" x2="{ml + pw + 30}" y1="{ly - 4}" y2="{ly - 4}" '
                   f'stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{ml + pw + 34}" y="{ly}">{escape(str(label))}</text>')
    out.append("</svg>\n")
    atomic_write(path, lambda fh: fh.write("\n".join(out)))


def trajectory_charts(named_trajs, stem) -> list[str]:
    """Fidelity, V and control charts for ``[(label, Trajectory), ...]``.

    Files are written as ``{stem}_fidelity.svg`` and so on; returns the paths.
    """
    paths = []
    for key, ylabel in (("fidelity", "fidelity"), ("V", "V")):
        p = f"{stem}_{key}.svg"
        line_chart([(lab, tr.t, getattr(tr, key)) for lab, tr in named_trajs], p,
                   title=ylabel, ylabel=ylabel)
        paths.append(p)
    p = f"{stem}_controls.svg"
    series = []
    for lab, tr in named_trajs:
        for k in range(tr.u.shape[1]):
            series.append((f"{lab} u{k + 1}", tr.t, tr.u[:, k]))
    line_chart(series, p, title="controls", ylabel="u")
    paths.append(p)
    return paths
