"""Static SVG figures: component functions, score charts and path plots.

Output is plain text assembled with fixed-precision number formatting, so
identical inputs give byte-identical files.
"""

from __future__ import annotations

import math
from pathlib import Path
from xml.sax.saxutils import escape, quoteattr

import numpy as np

__all__ = ["components_svg", "chart_svg", "paths_svg", "power_svg", "write_svg"]

WIDTH, HEIGHT = 640, 480
MARGIN = (70, 30, 30, 55)  # left, right, top, bottom
PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def _fmt(v: float) -> str:
    s = f"{v:.2f}"
    return "0.00" if s == "-0.00" else s


def _nice_ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    if not hi > lo:
        return [lo]
    raw = (hi - lo) / n
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 2.5, 5, 10) if m * mag >= raw), default=10 * mag)
    first = math.ceil(lo / step - 1e-9) * step
    ticks = []
    v = first
    while v <= hi + 1e-9 * step:
        ticks.append(0.0 if abs(v) < 1e-12 * step else v)
        v += step
    return ticks


def _tick_label(v: float) -> str:
    return f"{v:.6g}"


class _Figure:
    """Data-to-pixel mapping plus an element list."""

    def __init__(self, xlim, ylim, title="", xlabel="", ylabel="", equal=False):
        self.left, self.right, self.top, self.bottom = MARGIN
        self.pw = WIDTH - self.left - self.right
        self.ph = HEIGHT - self.top - self.bottom
        (x0, x1), (y0, y1) = _pad(xlim), _pad(ylim)
        if equal:
            sx, sy = (x1 - x0) / self.pw, (y1 - y0) / self.ph
            s = max(sx, sy)
            cx, cy = (x0 + x1) / 2, (y0 + y1) / 2
            x0, x1 = cx - s * self.pw / 2, cx + s * self.pw / 2
            y0, y1 = cy - s * self.ph / 2, cy + s * self.ph / 2
        self.xlim, self.ylim = (x0, x1), (y0, y1)
        self.items = []
        self._axes(title, xlabel, ylabel)

    def px(self, x):
        x0, x1 = self.xlim
        return self.left + (np.asarray(x, dtype=float) - x0) / (x1 - x0) * self.pw

    def py(self, y):
        y0, y1 = self.ylim
        return self.top + (1 - (np.asarray(y, dtype=float) - y0) / (y1 - y0)) * self.ph

    def _points(self, x, y) -> str:
        return " ".join(f"{_fmt(a)},{_fmt(b)}" for a, b in zip(self.px(x), self.py(y)))

    def _axes(self, title, xlabel, ylabel):
        L, T = self.left, self.top
        B = T + self.ph
        self.items.append(f'<rect x="{L}" y="{T}" width="{self.pw}" height="{self.ph}" '
                          f'fill="none" stroke="#000000" stroke-width="1"/>')
        for v in _nice_ticks(*self.xlim):
            p = _fmt(float(self.px(v)))
            self.items.append(f'<line class="tick" x1="{p}" y1="{B}" x2="{p}" y2="{B + 5}" stroke="#000000"/>')
            self.items.append(f'<text x="{p}" y="{B + 18}" text-anchor="middle" font-size="11">'
                              f'{_tick_label(v)}</text>')
        for v in _nice_ticks(*self.ylim):
            p = _fmt(float(self.py(v)))
            self.items.append(f'<line class="tick" x1="{L - 5}" y1="{p}" x2="{L}" y2="{p}" stroke="#000000"/>')
            self.items.append(f'<text x="{L - 8}" y="{p}" text-anchor="end" dominant-baseline="middle" '
                              f'font-size="11">{_tick_label(v)}</text>')
        if title:
            self.items.append(f'<text x="{L + self.pw / 2:.2f}" y="{T - 10}" text-anchor="middle" '
                              f'font-size="14">{escape(title)}</text>')
        if xlabel:
            self.items.append(f'<text x="{L + self.pw / 2:.2f}" y="{HEIGHT - 12}" text-anchor="middle" '
                              f'font-size="12">{escape(xlabel)}</text>')
        if ylabel:
            cy = T + self.ph / 2
            self.items.append(f'<text x="16" y="{cy:.2f}" text-anchor="middle" font-size="12" '
                              f'transform="rotate(-90 16 {cy:.2f})">{escape(ylabel)}</text>')

    def polyline(self, x, y, color, width=1.5, cls="curve", extra=""):
        self.items.append(f'<polyline class="{cls}"{extra} fill="none" stroke="{color}" '
                          f'stroke-width="{width}" points="{self._points(x, y)}"/>')

    def polygon(self, x, y, color, width=1.5, cls="contour", extra=""):
        self.items.append(f'<polygon class="{cls}"{extra} fill="none" stroke="{color}" '
                          f'stroke-width="{width}" points="{self._points(x, y)}"/>')

    def scatter(self, x, y, color, r=2.0, cls="point", opacity=0.6):
        for a, b in zip(self.px(x), self.py(y)):
            self.items.append(f'<circle class="{cls}" cx="{_fmt(a)}" cy="{_fmt(b)}" r="{r}" '
                              f'fill="{color}" fill-opacity="{opacity}"/>')

    def legend(self, entries):
        x = self.left + self.pw - 110
        for i, (text, color) in enumerate(entries):
            y = self.top + 16 + 16 * i
            self.items.append(f'<line x1="{x}" y1="{y}" x2="{x + 20}" y2="{y}" stroke="{color}" stroke-width="2"/>')
            self.items.append(f'<text class="legend" x="{x + 26}" y="{y}" dominant-baseline="middle" '
                              f'font-size="11">{escape(text)}</text>')

    def render(self) -> str:
        head = (f'<?xml version="1.0" encoding="UTF-8"?>\n'
                f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
                f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif">\n'
                f'<rect width="{WIDTH}" height="{HEIGHT}" fill="#ffffff"/>\n')
        return head + "\n".join(self.items) + "\n</svg>\n"


def _pad(lim, frac=0.05):
    lo, hi = float(lim[0]), float(lim[1])
    if not hi > lo:
        w = max(abs(lo), 1.0) * 0.5
        return lo - w, hi + w
    w = (hi - lo) * frac
    return lo - w, hi + w


def components_svg(model, n_points: int = 201, covariate=None) -> str:
    """Component functions over the model's time domain, one labeled curve each.

    For a covariate-adjusted model the components are drawn at
    ``covariate`` (default: the training mean).
    """
    lo, hi = model.basis.domain
    t = np.linspace(lo, hi, n_points)
    if getattr(model, "kind", "rpca") == "covariate":
        x = model.covariate_summary["mean"] if covariate is None else covariate
        curves = np.column_stack([model.component(k, t, x) for k in range(model.K)])
        title = f"Component functions at covariate {x:.4g}"
    else:
        curves = model.components(t)
        title = "Component functions"
    fig = _Figure((lo, hi), (curves.min(), curves.max()), title, "time", "component")
    entries = []
    for k in range(model.K):
        color = PALETTE[k % len(PALETTE)]
        name = f"phi{k + 1}"
        fig.polyline(t, curves[:, k], color, 2.0, extra=f' data-component="{k + 1}" aria-label="{name}"')
        entries.append((f"{name} (R2 {model.r_squared[k]:.3f})", color))
    fig.legend(entries)
    return fig.render()


def chart_svg(chart, scores, levels=(0.5, 0.75, 0.95), highlight=None, n_angles: int = 360) -> str:
    """Score scatter with one closed contour per requested level.

    ``levels`` must be members of ``chart.tau_grid``. ``highlight`` is an
    optional score pair drawn as a marked point.
    """
    scores = np.asarray(scores, dtype=float)[:, :2]
    grid = np.asarray(chart.tau_grid)
    idx = []
    for lv in levels:
        hit = np.flatnonzero(np.abs(grid - lv) < 1e-9)
        if hit.size == 0:
            raise ValueError(f"level {lv} is not on the chart's tau grid")
        idx.append(int(hit[0]))
    _, _, xy = chart.polylines(n_angles)
    shown = xy[idx]
    pts = [scores, shown.reshape(-1, 2)]
    if highlight is not None:
        pts.append(np.asarray(highlight, dtype=float)[None, :2])
    allp = np.vstack(pts)
    fig = _Figure((allp[:, 0].min(), allp[:, 0].max()), (allp[:, 1].min(), allp[:, 1].max()),
                  "Score chart", "score 1", "score 2", equal=True)
    fig.scatter(scores[:, 0], scores[:, 1], "#7f7f7f", 1.8, "score", 0.5)
    entries = []
    for j, (lv, line) in enumerate(zip(levels, shown)):
        color = PALETTE[j % len(PALETTE)]
        fig.polygon(line[:, 0], line[:, 1], color, 1.8, "contour", f' data-tau={quoteattr(f"{lv:g}")}')
        entries.append((f"tau = {lv:g}", color))
    if highlight is not None:
        h = np.asarray(highlight, dtype=float)
        fig.scatter([h[0]], [h[1]], "#000000", 5.0, "highlight", 1.0)
    fig.legend(entries)
    return fig.render()


def paths_svg(data, model=None, highlight=None, n_points: int = 201) -> str:
    """Spaghetti plot of observed paths with one subject highlighted.

    With a model, the fitted mean and the highlighted subject's fitted path
    (mean plus projected components) are overlaid.
    """
    from .rpca import project_dataset

    lo, hi = data.domain
    t = np.linspace(lo, hi, n_points)
    ys = [data.values]
    hi_idx = None
    if highlight is not None:
        ids = list(data.ids)
        if highlight not in ids:
            raise ValueError(f"subject {highlight!r} not in the data")
        hi_idx = ids.index(highlight)
    mean_curve = fitted = None
    if model is not None and getattr(model, "kind", "rpca") == "rpca":
        mean_curve = model.mean(t)
        ys.append(mean_curve)
        if hi_idx is not None:
            sub = data.subset([hi_idx])
            scores, errors = project_dataset(sub, model)
            if not errors:
                fitted = mean_curve + model.components(t) @ scores[0]
                ys.append(fitted)
    yall = np.concatenate(ys)
    fig = _Figure((lo, hi), (yall.min(), yall.max()), "Growth paths", "time", "value")
    for i, s in enumerate(data.subjects):
        if i != hi_idx:
            fig.polyline(s.times, s.values, "#b0b0b0", 0.8, "path")
    entries = []
    if mean_curve is not None:
        fig.polyline(t, mean_curve, "#000000", 2.0, "mean")
        entries.append(("mean", "#000000"))
    if hi_idx is not None:
        s = data.subjects[hi_idx]
        fig.polyline(s.times, s.values, PALETTE[1], 2.2, "highlight", f" data-id={quoteattr(s.id)}")
        fig.scatter(s.times, s.values, PALETTE[1], 3.0, "highlight-point", 1.0)
        entries.append((f"subject {s.id}", PALETTE[1]))
        if fitted is not None:
            fig.polyline(t, fitted, PALETTE[0], 1.8, "fitted")
            entries.append(("fitted path", PALETTE[0]))
    fig.legend(entries)
    return fig.render()


def power_svg(report) -> str:
    """Grid of flagged percentages, slopes down the rows and shifts across."""
    As = sorted({c["A"] for c in report.cells})
    Bs = sorted({c["B"] for c in report.cells})
    left, top = 80, 60
    cw = (WIDTH - left - 30) / max(len(Bs), 1)
    ch = (HEIGHT - top - 40) / max(len(As), 1)
    items = [f'<text x="{WIDTH / 2:.2f}" y="28" text-anchor="middle" font-size="14">'
             f'Percent flagged at level {report.level:g}</text>']
    for j, b in enumerate(Bs):
        items.append(f'<text x="{left + (j + 0.5) * cw:.2f}" y="{top - 8}" text-anchor="middle" '
                     f'font-size="11">B={b:g}</text>')
    for i, a in enumerate(As):
        y = top + i * ch
        items.append(f'<text x="{left - 8}" y="{y + ch / 2:.2f}" text-anchor="end" dominant-baseline="middle" '
                     f'font-size="11">A={a:g}</text>')
        for j, b in enumerate(Bs):
            x = left + j * cw
            try:
                v = report.cell(a, b)["mean"]
            except KeyError:
                continue
            shade = 255 - int(round(200 * (0.0 if math.isnan(v) else v)))
            items.append(f'<rect class="cell" x="{x:.2f}" y="{y:.2f}" width="{cw:.2f}" height="{ch:.2f}" '
                         f'fill="rgb(255,{shade},{shade})" stroke="#ffffff"/>')
            items.append(f'<text x="{x + cw / 2:.2f}" y="{y + ch / 2:.2f}" text-anchor="middle" '
                         f'dominant-baseline="middle" font-size="11">{100 * v:.1f}</text>')
    head = (f'<?xml version="1.0" encoding="UTF-8"?>\n'
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
            f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif">\n'
            f'<rect width="{WIDTH}" height="{HEIGHT}" fill="#ffffff"/>\n')
    return head + "\n".join(items) + "\n</svg>\n"


def write_svg(path, text: str) -> None:
    Path(path).write_text(text, encoding="utf-8")
