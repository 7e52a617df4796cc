"""Minimal native SVG plotting: line panels and scatter plots.

Just enough to render flux-vs-time panels and predicted-vs-actual scatters
without pulling in a plotting dependency.  CSV outputs remain the contract;
these figures are for eyeballing runs.
"""

from __future__ import annotations

import math
from pathlib import Path

_COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"]


def _nice_ticks(lo: float, hi: float, n: int = 5):
    if not math.isfinite(lo) or not math.isfinite(hi) or hi <= lo:
        return [lo]
    span = hi - lo
    raw = span / max(n - 1, 1)
    mag = 10 ** math.floor(math.log10(raw))
    for mult in (1, 2, 2.5, 5, 10):
        if raw <= mult * mag:
            step = mult * mag
            break
    start = math.ceil(lo / step) * step
    ticks = []
    t = start
    while t <= hi + 1e-12 * span:
        ticks.append(round(t, 12))
        t += step
    return ticks or [lo]


def _fmt_tick(v: float) -> str:
    if v == 0:
        return "0"
    if abs(v) >= 1e4 or abs(v) < 1e-3:
        return f"{v:.1e}"
    return f"{v:.4g}"


class _Panel:
    def __init__(self, title, xlabel, ylabel, log_x=False, log_y=False):
        self.title = title
        self.xlabel = xlabel
        self.ylabel = ylabel
        self.log_x = log_x
        self.log_y = log_y
        self.series = []  # (label, xs, ys, mode)

    def add_line(self, label, xs, ys):
        self.series.append((label, list(xs), list(ys), "line"))

    def add_points(self, label, xs, ys):
        self.series.append((label, list(xs), list(ys), "points"))

    def _transform(self, v, log):
        return math.log10(v) if log else v

    def render(self, width, height) -> str:
        pad_l, pad_r, pad_t, pad_b = 64, 14, 26, 42
        iw, ih = width - pad_l - pad_r, height - pad_t - pad_b
        xs_all, ys_all = [], []
        for _, xs, ys, _mode in self.series:
            for x, y in zip(xs, ys):
                if self.log_x and x <= 0 or self.log_y and y <= 0:
                    continue
                if math.isfinite(x) and math.isfinite(y):
                    xs_all.append(self._transform(x, self.log_x))
                    ys_all.append(self._transform(y, self.log_y))
        if not xs_all:
            xs_all, ys_all = [0.0, 1.0], [0.0, 1.0]
        x_lo, x_hi = min(xs_all), max(xs_all)
        y_lo, y_hi = min(ys_all), max(ys_all)
        if x_hi == x_lo:
            x_hi = x_lo + 1.0
        if y_hi == y_lo:
            y_hi = y_lo + 1.0
        y_pad = 0.06 * (y_hi - y_lo)
        y_lo, y_hi = y_lo - y_pad, y_hi + y_pad

        def sx(v):
            return pad_l + (v - x_lo) / (x_hi - x_lo) * iw

        def sy(v):
            return pad_t + ih - (v - y_lo) / (y_hi - y_lo) * ih

        out = [
            f'<rect x="{pad_l}" y="{pad_t}" width="{iw}" height="{ih}" '
            'fill="white" stroke="#444" stroke-width="1"/>',
            f'<text x="{pad_l + iw / 2}" y="{pad_t - 9}" text-anchor="middle" '
            f'font-size="13" font-weight="bold">{self.title}</text>',
            f'<text x="{pad_l + iw / 2}" y="{height - 8}" text-anchor="middle" '
            f'font-size="12">{self.xlabel}</text>',
            f'<text x="14" y="{pad_t + ih / 2}" text-anchor="middle" '
            f'font-size="12" transform="rotate(-90 14 {pad_t + ih / 2})">'
            f"{self.ylabel}</text>",
        ]
        for t in _nice_ticks(x_lo, x_hi):
            label = _fmt_tick(10**t if self.log_x else t)
            out.append(
                f'<line x1="{sx(t):.1f}" y1="{pad_t + ih}" x2="{sx(t):.1f}" '
                f'y2="{pad_t + ih + 4}" stroke="#444"/>'
                f'<text x="{sx(t):.1f}" y="{pad_t + ih + 16}" '
                f'text-anchor="middle" font-size="10">{label}</text>'
            )
        for t in _nice_ticks(y_lo, y_hi):
            label = _fmt_tick(10**t if self.log_y else t)
            out.append(
                f'<line x1="{pad_l - 4}" y1="{sy(t):.1f}" x2="{pad_l}" '
                f'y2="{sy(t):.1f}" stroke="#444"/>'
                f'<text x="{pad_l - 7}" y="{sy(t) + 3:.1f}" text-anchor="end" '
                f'font-size="10">{label}</text>'
            )
        for i, (label, xs, ys, mode) in enumerate(self.series):
            color = _COLORS[i % len(_COLORS)]
            pts = [
                (sx(self._transform(x, self.log_x)), sy(self._transform(y, self.log_y)))
                for x, y in zip(xs, ys)
                if (not self.log_x or x > 0)
                and (not self.log_y or y > 0)
                and math.isfinite(x)
                and math.isfinite(y)
            ]
            if mode == "line" and len(pts) > 1:
                path = " ".join(f"{x:.1f},{y:.1f}" for x, y in pts)
                out.append(
                    f'<polyline points="{path}" fill="none" stroke="{color}" '
                    'stroke-width="1.4"/>'
                )
            else:
                out.extend(
                    f'<circle cx="{x:.1f}" cy="{y:.1f}" r="2.4" fill="{color}" '
                    'fill-opacity="0.75"/>'
                    for x, y in pts
                )
            lx = pad_l + iw - 8
            ly = pad_t + 14 + 13 * i
            out.append(
                f'<text x="{lx}" y="{ly}" text-anchor="end" font-size="10" '
                f'fill="{color}">{label}</text>'
            )
        return "\n".join(out)


class Figure:
    """A grid of panels rendered to one SVG file."""

    def __init__(self, columns: int = 2, panel_width: int = 360,
                 panel_height: int = 240):
        self.columns = columns
        self.panel_width = panel_width
        self.panel_height = panel_height
        self.panels: list[_Panel] = []

    def panel(self, title="", xlabel="", ylabel="", log_x=False, log_y=False):
        p = _Panel(title, xlabel, ylabel, log_x, log_y)
        self.panels.append(p)
        return p

    def render(self) -> str:
        n = max(len(self.panels), 1)
        cols = min(self.columns, n)
        rows = (n + cols - 1) // cols
        width = cols * self.panel_width
        height = rows * self.panel_height
        chunks = [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
            f'height="{height}" viewBox="0 0 {width} {height}" '
            'font-family="Helvetica, Arial, sans-serif">',
            f'<rect width="{width}" height="{height}" fill="white"/>',
        ]
        for i, panel in enumerate(self.panels):
            ox = (i % cols) * self.panel_width
            oy = (i // cols) * self.panel_height
            chunks.append(f'<g transform="translate({ox} {oy})">')
            chunks.append(panel.render(self.panel_width, self.panel_height))
            chunks.append("</g>")
        chunks.append("</svg>")
        return "\n".join(chunks)

    def save(self, path) -> Path:
        path = Path(path)
        path.write_text(self.render(), encoding="utf-8")
        return path


def flux_figure(flux, title_prefix="", observed=None) -> Figure:
    """One panel per gas: simulated flux line plus optional observed points."""
    fig = Figure(columns=2)
    for g in flux.gases:
        p = fig.panel(
            title=f"{title_prefix}{g}", xlabel="time (s)", ylabel="flux (nmol/s)"
        )
        p.add_line("model", flux.times, flux[g])
        if observed is not None and g in observed.fluxes:
            stride = max(1, len(observed.times) // 160)
            p.add_points("data", observed.times[::stride], observed[g][::stride])
    return fig


def scatter_figure(title, xlabel, ylabel, xs, ys, log=True) -> Figure:
    fig = Figure(columns=1, panel_width=420, panel_height=320)
    p = fig.panel(title=title, xlabel=xlabel, ylabel=ylabel, log_x=log, log_y=log)
    p.add_points("designs", xs, ys)
    return fig
