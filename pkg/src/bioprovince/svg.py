"""Minimal deterministic SVG emitters for the pipeline's figures."""
from __future__ import annotations

from typing import Optional, Sequence

import numpy as np

PALETTE = (
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
    "#bcbd22", "#17becf", "#aec7e8", "#ffbb78", "#98df8a", "#ff9896", "#c5b0d5", "#c49c94",
    "#f7b6d2", "#c7c7c7", "#dbdb8d", "#9edae5",
)

W, H = 640, 400
LEFT, RIGHT, TOP, BOTTOM = 60, 110, 30, 50


def colour(label: int) -> str:
    return PALETTE[(int(label) - 1) % len(PALETTE)]


def _f(x: float) -> str:
    return f"{x:.2f}"


def _esc(s) -> str:
    return str(s).replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def _doc(body: list[str], title: str, width: int = W, height: int = H) -> str:
    head = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2:.0f}" y="18" text-anchor="middle" font-family="sans-serif" font-size="13">{_esc(title)}</text>',
    ]
    return "\n".join(head + body + ["</svg>", ""])


class _Axes:
    def __init__(self, xlim, ylim, flip_y=False, width=W, height=H):
        self.x0, self.x1 = xlim
        self.y0, self.y1 = ylim
        if self.x1 == self.x0:
            self.x1 = self.x0 + 1
        if self.y1 == self.y0:
            self.y1 = self.y0 + 1
        self.flip_y = flip_y
        self.pw = width - LEFT - RIGHT
        self.ph = height - TOP - BOTTOM

    def x(self, v):
        return LEFT + (np.asarray(v, dtype=float) - self.x0) / (self.x1 - self.x0) * self.pw

    def y(self, v):
        frac = (np.asarray(v, dtype=float) - self.y0) / (self.y1 - self.y0)
        return TOP + (frac if self.flip_y else 1 - frac) * self.ph

    def frame(self, xlabel, ylabel, n_ticks=5):
        out = [f'<rect x="{LEFT}" y="{TOP}" width="{self.pw}" height="{self.ph}" fill="none" stroke="black"/>']
        for t in np.linspace(self.x0, self.x1, n_ticks):
            out.append(
                f'<text x="{_f(self.x(t))}" y="{TOP + self.ph + 15}" text-anchor="middle" '
                f'font-family="sans-serif" font-size="10">{t:.3g}</text>'
            )
        for t in np.linspace(self.y0, self.y1, n_ticks):
            out.append(
                f'<text x="{LEFT - 5}" y="{_f(self.y(t) + 3)}" text-anchor="end" '
                f'font-family="sans-serif" font-size="10">{t:.3g}</text>'
            )
        out.append(
            f'<text x="{LEFT + self.pw / 2:.0f}" y="{TOP + self.ph + 35}" text-anchor="middle" '
            f'font-family="sans-serif" font-size="11">{_esc(xlabel)}</text>'
        )
        out.append(
            f'<text x="15" y="{TOP + self.ph / 2:.0f}" text-anchor="middle" font-family="sans-serif" '
            f'font-size="11" transform="rotate(-90 15 {TOP + self.ph / 2:.0f})">{_esc(ylabel)}</text>'
        )
        return out


def _legend(items, x=W - RIGHT + 10, y=TOP) -> list[str]:
    out = []
    for i, (label, fill) in enumerate(items):
        yy = y + 16 * i
        out.append(f'<rect x="{x}" y="{yy}" width="10" height="10" fill="{fill}"/>')
        out.append(
            f'<text x="{x + 14}" y="{yy + 9}" font-family="sans-serif" font-size="10">{_esc(label)}</text>'
        )
    return out


def province_raster(
    latitude,
    depth,
    labels,
    title: str = "Provinces",
    opacity=None,
    sample_lat=None,
    sample_depth=None,
    sample_labels=None,
) -> str:
    """Latitude by depth raster coloured by label, depth increasing downward.

    ``opacity`` (0..1 per point) sets the fill alpha; sample labels are drawn
    as numbers on top when given.
    """
    lat = np.asarray(latitude, dtype=float)
    dep = np.asarray(depth, dtype=float)
    labels = np.asarray(labels, dtype=int)
    ax = _Axes((lat.min(), lat.max()), (dep.min(), dep.max()), flip_y=True)
    cw = ax.pw / max(len(np.unique(lat)) - 1, 1)
    ch = ax.ph / max(len(np.unique(dep)) - 1, 1)
    body = []
    for i in range(len(lat)):
        alpha = "" if opacity is None else f' fill-opacity="{float(opacity[i]):.3f}"'
        body.append(
            f'<rect x="{_f(ax.x(lat[i]) - cw / 2)}" y="{_f(ax.y(dep[i]) - ch / 2)}" '
            f'width="{_f(cw)}" height="{_f(ch)}" fill="{colour(labels[i])}"{alpha}/>'
        )
    if sample_lat is not None:
        for la, de, lab in zip(sample_lat, sample_depth, sample_labels):
            body.append(
                f'<text x="{_f(ax.x(la))}" y="{_f(ax.y(de) + 3)}" text-anchor="middle" '
                f'font-family="sans-serif" font-size="8">{int(lab)}</text>'
            )
    body += ax.frame("latitude (deg)", "depth (m)")
    body += _legend([(f"province {k}", colour(k)) for k in sorted(set(labels.tolist()))])
    return _doc(body, title)


def heatmap(row_labels, col_labels, values, title: str = "Cross-tabulation") -> str:
    values = np.asarray(values, dtype=float)
    nr, nc = values.shape
    cell = min(30, (W - 200) / max(nc, 1), (H - 120) / max(nr, 1))
    x0, y0 = 120, 60
    body = []
    for i in range(nr):
        body.append(
            f'<text x="{x0 - 5}" y="{_f(y0 + (i + 0.5) * cell + 3)}" text-anchor="end" '
            f'font-family="sans-serif" font-size="10">{_esc(row_labels[i])}</text>'
        )
        for j in range(nc):
            v = values[i, j]
            shade = int(round(255 * (1 - v)))
            body.append(
                f'<rect x="{_f(x0 + j * cell)}" y="{_f(y0 + i * cell)}" width="{_f(cell)}" height="{_f(cell)}" '
                f'fill="rgb({shade},{shade},255)" stroke="white"/>'
            )
            if v > 0:
                body.append(
                    f'<text x="{_f(x0 + (j + 0.5) * cell)}" y="{_f(y0 + (i + 0.5) * cell + 3)}" '
                    f'text-anchor="middle" font-family="sans-serif" font-size="8">{100 * v:.0f}</text>'
                )
    for j in range(nc):
        body.append(
            f'<text x="{_f(x0 + (j + 0.5) * cell)}" y="{y0 - 5}" text-anchor="middle" '
            f'font-family="sans-serif" font-size="10">{_esc(col_labels[j])}</text>'
        )
    return _doc(body, title)


def stacked_bars(clusters, groups, values, title: str = "Mean composition by cluster") -> str:
    values = np.asarray(values, dtype=float)
    ax = _Axes((0, len(clusters)), (0, 1))
    bw = ax.pw / max(len(clusters), 1)
    body = []
    for i, c in enumerate(clusters):
        base = 0.0
        for g in range(len(groups)):
            v = values[i, g]
            if v <= 0:
                continue
            top = ax.y(base + v)
            body.append(
                f'<rect x="{_f(LEFT + i * bw + 0.1 * bw)}" y="{_f(top)}" width="{_f(0.8 * bw)}" '
                f'height="{_f(ax.y(base) - top)}" fill="{PALETTE[g % len(PALETTE)]}"/>'
            )
            base += v
        body.append(
            f'<text x="{_f(LEFT + (i + 0.5) * bw)}" y="{TOP + ax.ph + 15}" text-anchor="middle" '
            f'font-family="sans-serif" font-size="10">{_esc(c)}</text>'
        )
    body.append(f'<rect x="{LEFT}" y="{TOP}" width="{ax.pw}" height="{ax.ph}" fill="none" stroke="black"/>')
    shown = list(groups)[:20]
    body += _legend([(g, PALETTE[i % len(PALETTE)]) for i, g in enumerate(shown)])
    return _doc(body, title)


def line_plot(
    series: Sequence[tuple],
    xlabel: str,
    ylabel: str,
    title: str,
    bands: Optional[Sequence[tuple]] = None,
    marker_x: Optional[float] = None,
) -> str:
    """``series`` items are ``(x, y, name)``; ``bands`` items ``(x, lo, hi, name)``."""
    bands = list(bands or [])
    xs = np.concatenate([np.asarray(s[0], dtype=float) for s in series])
    ys = np.concatenate([np.asarray(s[1], dtype=float) for s in series] + [np.asarray(b[1], dtype=float) for b in bands] + [np.asarray(b[2], dtype=float) for b in bands])
    ax = _Axes((xs.min(), xs.max()), (min(ys.min(), 0.0), ys.max()))
    body = []
    for i, (x, lo, hi, _) in enumerate(bands):
        pts = [f"{_f(a)},{_f(b)}" for a, b in zip(ax.x(x), ax.y(hi))]
        pts += [f"{_f(a)},{_f(b)}" for a, b in zip(ax.x(x)[::-1], ax.y(lo)[::-1])]
        body.append(f'<polygon points="{" ".join(pts)}" fill="{PALETTE[i % len(PALETTE)]}" fill-opacity="0.2"/>')
    for i, (x, y, _) in enumerate(series):
        pts = " ".join(f"{_f(a)},{_f(b)}" for a, b in zip(ax.x(x), ax.y(y)))
        body.append(f'<polyline points="{pts}" fill="none" stroke="{PALETTE[i % len(PALETTE)]}" stroke-width="2"/>')
        for a, b in zip(ax.x(x), ax.y(y)):
            body.append(f'<circle cx="{_f(a)}" cy="{_f(b)}" r="2.5" fill="{PALETTE[i % len(PALETTE)]}"/>')
    if marker_x is not None:
        mx = _f(ax.x(marker_x))
        body.append(f'<line x1="{mx}" y1="{TOP}" x2="{mx}" y2="{TOP + ax.ph}" stroke="grey" stroke-dasharray="4 3"/>')
    body += ax.frame(xlabel, ylabel)
    body += _legend([(s[2], PALETTE[i % len(PALETTE)]) for i, s in enumerate(series)])
    return _doc(body, title)


def scatter_fits(panels: Sequence[dict], title: str) -> str:
    """One row of scatter panels, each ``{"x", "y", "slope", "intercept", "name"}``."""
    k = max(len(panels), 1)
    pw = 260
    width = 40 + pw * k
    body = []
    for i, p in enumerate(panels):
        x = np.asarray(p["x"], dtype=float)
        y = np.asarray(p["y"], dtype=float)
        ox = 40 + i * pw
        xr = (x.min(), x.max()) if len(x) else (0, 1)
        yr = (y.min(), y.max()) if len(y) else (0, 1)
        xs = 200 / (xr[1] - xr[0] or 1)
        ys = 220 / (yr[1] - yr[0] or 1)

        def px(v):
            return ox + (v - xr[0]) * xs

        def py(v):
            return 260 - (v - yr[0]) * ys

        body.append(f'<rect x="{ox}" y="40" width="200" height="220" fill="none" stroke="black"/>')
        for a, b in zip(x, y):
            body.append(f'<circle cx="{_f(px(a))}" cy="{_f(py(b))}" r="1.5" fill="black"/>')
        if p.get("slope") is not None and len(x):
            x_line = np.array(xr)
            y_line = p["intercept"] + p["slope"] * x_line
            y_line = np.clip(y_line, yr[0], yr[1])
            body.append(
                f'<line x1="{_f(px(x_line[0]))}" y1="{_f(py(y_line[0]))}" x2="{_f(px(x_line[1]))}" '
                f'y2="{_f(py(y_line[1]))}" stroke="red" stroke-width="1.5"/>'
            )
        body.append(
            f'<text x="{ox + 100}" y="280" text-anchor="middle" font-family="sans-serif" font-size="10">{_esc(p["name"])}</text>'
        )
    return _doc(body, title, width=width, height=300)
