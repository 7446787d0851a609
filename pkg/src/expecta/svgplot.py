"""Minimal native SVG plotting: histogram panels, bar charts, tables.

Plots are static artifacts; everything is drawn directly as SVG text
with no external dependency.  Histograms are max-normalized per series
so distributions of different sample counts compare by shape and
support.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

FONT = "font-family=\"Helvetica, Arial, sans-serif\""

PALETTE = {
    "collected": "#4878cf",
    "expected": "#d65f5f",
    "estimate": "#6acc65",
    "t1": "#8c8c8c",
    "tstar": "#4878cf",
    "vanilla": "#8c8c8c",
    "batchnorm": "#d65f5f",
    "dropout": "#6acc65",
}


def _esc(text) -> str:
    return (
        str(text)
        .replace("&", "&amp;")
        .replace("<", "&lt;")
        .replace(">", "&gt;")
        .replace('"', "&quot;")
    )


def _f(x: float) -> str:
    return f"{float(x):.2f}".rstrip("0").rstrip(".")


def hist_counts(values: Sequence[float], lo: float, hi: float, nbins: int):
    """Equal-width histogram over [lo, hi]; returns (edges, counts)."""
    counts, edges = np.histogram(np.asarray(values, dtype=np.float64), bins=nbins, range=(lo, hi))
    return edges, counts


class _Canvas:
    def __init__(self, width: int, height: int):
        self.width = width
        self.height = height
        self.parts: list[str] = []

    def rect(self, x, y, w, h, fill, opacity=1.0, stroke="none"):
        self.parts.append(
            f'<rect x="{_f(x)}" y="{_f(y)}" width="{_f(w)}" height="{_f(h)}" '
            f'fill="{fill}" fill-opacity="{_f(opacity)}" stroke="{stroke}"/>'
        )

    def line(self, x1, y1, x2, y2, stroke="#333", width=1.0, dash=None):
        extra = f' stroke-dasharray="{dash}"' if dash else ""
        self.parts.append(
            f'<line x1="{_f(x1)}" y1="{_f(y1)}" x2="{_f(x2)}" y2="{_f(y2)}" '
            f'stroke="{stroke}" stroke-width="{_f(width)}"{extra}/>'
        )

    def poly(self, points, stroke, width=1.5):
        pts = " ".join(f"{_f(x)},{_f(y)}" for x, y in points)
        self.parts.append(
            f'<polyline points="{pts}" fill="none" stroke="{stroke}" '
            f'stroke-width="{_f(width)}"/>'
        )

    def text(self, x, y, s, size=11, anchor="start", color="#222", bold=False):
        weight = ' font-weight="bold"' if bold else ""
        self.parts.append(
            f'<text x="{_f(x)}" y="{_f(y)}" font-size="{size}" {FONT} '
            f'text-anchor="{anchor}" fill="{color}"{weight}>{_esc(s)}</text>'
        )

    def to_svg(self) -> str:
        body = "\n".join(self.parts)
        return (
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{self.width}" '
            f'height="{self.height}" viewBox="0 0 {self.width} {self.height}">\n'
            f'<rect width="{self.width}" height="{self.height}" fill="white"/>\n'
            f"{body}\n</svg>\n"
        )


def _panel_hist(cv: _Canvas, x0, y0, w, h, subtitle, series, x_range):
    """One histogram panel: series = [(label, color, edges, counts), ...]."""
    lo, hi = x_range
    cv.text(x0 + w / 2, y0 + 12, subtitle, size=11, anchor="middle", bold=True)
    top, bottom, left, right = y0 + 20, y0 + h - 18, x0 + 8, x0 + w - 4
    span = hi - lo if hi > lo else 1.0

    def px(v):
        return left + (v - lo) / span * (right - left)

    def py(frac):
        return bottom - frac * (bottom - top - 4)

    for label, color, edges, counts in series:
        peak = counts.max() if len(counts) and counts.max() > 0 else 1
        pts = [(px(edges[0]), py(0.0))]
        for i, c in enumerate(counts):
            frac = c / peak
            pts.append((px(edges[i]), py(frac)))
            pts.append((px(edges[i + 1]), py(frac)))
        pts.append((px(edges[-1]), py(0.0)))
        fill_pts = " ".join(f"{_f(x)},{_f(y)}" for x, y in pts)
        cv.parts.append(
            f'<polygon points="{fill_pts}" fill="{color}" fill-opacity="0.18"/>'
        )
        cv.poly(pts, color)
    cv.line(left, bottom, right, bottom, "#333")
    cv.text(left, bottom + 12, _f(lo), size=9)
    cv.text(right, bottom + 12, _f(hi), size=9, anchor="end")


def _legend(cv: _Canvas, x, y, entries):
    for i, (label, color) in enumerate(entries):
        cx = x + i * 110
        cv.rect(cx, y - 9, 10, 10, color, opacity=0.8)
        cv.text(cx + 14, y, label, size=11)


def hist_grid_svg(
    title: str,
    panel_rows: Sequence[Sequence[tuple]],
    legend: Sequence[tuple[str, str]],
    panel_size=(210, 150),
) -> str:
    """Grid of histogram panels.

    panel_rows[r][c] = (subtitle, series, (lo, hi)) with series as in
    _panel_hist; rows may have different lengths.
    """
    pw, ph = panel_size
    cols = max(len(row) for row in panel_rows)
    width = 20 + cols * (pw + 10)
    height = 58 + len(panel_rows) * (ph + 8)
    cv = _Canvas(width, height)
    cv.text(14, 22, title, size=14, bold=True)
    _legend(cv, 14, 40, legend)
    for r, row in enumerate(panel_rows):
        for c, (subtitle, series, x_range) in enumerate(row):
            _panel_hist(
                cv, 14 + c * (pw + 10), 50 + r * (ph + 8), pw, ph, subtitle, series, x_range
            )
    return cv.to_svg()


def bar_chart_svg(
    title: str,
    group_labels: Sequence[str],
    series: Sequence[tuple[str, str, Sequence[float]]],
    ylabel: str = "",
    y_range=(0.0, 1.0),
    size=(560, 300),
    baseline: float | None = None,
) -> str:
    """Grouped bar chart; series = [(label, color, values per group), ...]."""
    width, height = size
    cv = _Canvas(width, height)
    cv.text(14, 22, title, size=14, bold=True)
    _legend(cv, 14, 40, [(label, color) for label, color, _ in series])
    left, right, top, bottom = 52, width - 16, 54, height - 34
    lo, hi = y_range

    def py(v):
        return bottom - (v - lo) / (hi - lo) * (bottom - top)

    for tick in np.linspace(lo, hi, 6):
        cv.line(left, py(tick), right, py(tick), "#ddd")
        cv.text(left - 6, py(tick) + 4, _f(tick), size=9, anchor="end")
    if baseline is not None and lo <= baseline <= hi:
        cv.line(left, py(baseline), right, py(baseline), "#d65f5f", dash="4,3")
    n_groups = len(group_labels)
    n_series = len(series)
    group_w = (right - left) / max(n_groups, 1)
    bar_w = group_w * 0.7 / max(n_series, 1)
    for gi, gl in enumerate(group_labels):
        gx = left + gi * group_w + group_w * 0.15
        for si, (_, color, values) in enumerate(series):
            v = float(values[gi])
            v_clip = min(max(v, lo), hi)
            cv.rect(gx + si * bar_w, py(v_clip), bar_w - 2, bottom - py(v_clip), color, opacity=0.85)
            cv.text(gx + si * bar_w + bar_w / 2 - 1, py(v_clip) - 4, _f(v), size=9, anchor="middle")
        cv.text(left + gi * group_w + group_w / 2, bottom + 14, gl, size=11, anchor="middle")
    cv.line(left, bottom, right, bottom, "#333")
    cv.line(left, top, left, bottom, "#333")
    if ylabel:
        cv.text(14, top - 8, ylabel, size=10)
    return cv.to_svg()


def table_svg(title: str, headers: Sequence[str], rows: Sequence[Sequence]) -> str:
    """Plain text table with striped rows; cells are str()-formatted."""
    col_w = [max(len(str(h)), *(len(str(r[i])) for r in rows)) if rows else len(str(h))
             for i, h in enumerate(headers)]
    x_pos = [20]
    for w in col_w[:-1]:
        x_pos.append(x_pos[-1] + 9 * w + 18)
    width = x_pos[-1] + 9 * col_w[-1] + 24
    height = 66 + 20 * len(rows)
    cv = _Canvas(width, height)
    cv.text(14, 22, title, size=14, bold=True)
    y = 46
    for i, h in enumerate(headers):
        cv.text(x_pos[i], y, h, size=11, bold=True)
    cv.line(14, y + 6, width - 14, y + 6, "#333")
    for r, row in enumerate(rows):
        ry = y + 20 + r * 20
        if r % 2 == 1:
            cv.rect(14, ry - 13, width - 28, 19, "#f2f2f2")
        for i, cell in enumerate(row):
            cv.text(x_pos[i], ry, cell, size=11)
    return cv.to_svg()
