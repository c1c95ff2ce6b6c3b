"""Plain-text SVG charts for the CSVs written by the harness.

Three chart kinds are recognized from the CSV header: learning curves
(metrics), calibration scatters and solver-sweep lines. Several metrics
files are drawn as one curve: the mean over files with a shaded band of
one standard deviation.
"""

from __future__ import annotations

import csv
import math
from pathlib import Path
from typing import Sequence
from xml.sax.saxutils import escape

import numpy as np

from .exceptions import DataError
from .harness import CALIBRATION_HEADER, METRICS_HEADER, SWEEP_HEADER

WIDTH, HEIGHT = 640, 420
MARGIN = {"left": 80, "right": 20, "top": 40, "bottom": 60}
COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e")


def read_csv(path) -> tuple[list, list]:
    """Header and rows of a CSV file; raises DataError when unusable."""
    path = Path(path)
    if not path.is_file():
        raise DataError(f"CSV not found: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or not rows[0]:
        raise DataError(f"{path}: empty CSV")
    header, body = rows[0], [r for r in rows[1:] if r]
    if not body:
        raise DataError(f"{path}: CSV has a header but no data rows")
    for i, r in enumerate(body, 2):
        if len(r) != len(header):
            raise DataError(f"{path}:{i}: expected {len(header)} fields, got {len(r)}")
    return header, body


def csv_kind(header: Sequence[str]) -> str:
    h = list(header)
    if h == METRICS_HEADER:
        return "metrics"
    if h == CALIBRATION_HEADER:
        return "calibration"
    if h == SWEEP_HEADER:
        return "sweep"
    raise DataError(f"unrecognized CSV header: {','.join(h)}")


def _column(path, header, body, name, allow_blank=False) -> np.ndarray:
    j = header.index(name)
    out = []
    for i, r in enumerate(body, 2):
        if allow_blank and r[j] == "":
            out.append(math.nan)
            continue
        try:
            out.append(float(r[j]))
        except ValueError as exc:
            raise DataError(f"{path}:{i}: column {name!r} is not numeric: {r[j]!r}") from exc
    return np.array(out)


# --- SVG primitives -----------------------------------------------------------


def _nice_ticks(lo: float, hi: float, n: int = 5) -> list:
    if not (math.isfinite(lo) and math.isfinite(hi)):
        return []
    if hi <= lo:
        return [lo]
    raw = (hi - lo) / n
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 5, 10) if m * mag >= raw), default=raw)
    start = math.ceil(lo / step) * step
    return [start + k * step for k in range(int((hi - start) / step + 1e-9) + 1)]


def _fmt_tick(v: float) -> str:
    return f"{v:.4g}"


class _Canvas:
    def __init__(self, xlim, ylim, title, xlabel, ylabel, logx=False):
        self.logx = logx
        self.xlim = tuple(math.log10(v) for v in xlim) if logx else tuple(xlim)
        self.ylim = ylim
        self.parts = [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
            f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">',
            f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
            f'<text x="{WIDTH / 2:.1f}" y="22" text-anchor="middle" font-size="15">{escape(title)}</text>',
        ]
        self._axes(xlabel, ylabel)

    def px(self, x):
        if self.logx:
            x = math.log10(x)
        lo, hi = self.xlim
        span = hi - lo or 1.0
        return MARGIN["left"] + (x - lo) / span * (WIDTH - MARGIN["left"] - MARGIN["right"])

    def py(self, y):
        lo, hi = self.ylim
        span = hi - lo or 1.0
        return HEIGHT - MARGIN["bottom"] - (y - lo) / span * (HEIGHT - MARGIN["top"] - MARGIN["bottom"])

    def _axes(self, xlabel, ylabel):
        x0, x1 = MARGIN["left"], WIDTH - MARGIN["right"]
        y0, y1 = HEIGHT - MARGIN["bottom"], MARGIN["top"]
        p = self.parts
        p.append(f'<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/>')
        p.append(f'<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>')
        if self.logx:
            xt = [10.0 ** k for k in range(math.ceil(self.xlim[0] - 1e-9), math.floor(self.xlim[1] + 1e-9) + 1)]
        else:
            xt = _nice_ticks(*self.xlim)
        for v in xt:
            x = self.px(v)
            p.append(f'<line x1="{x:.1f}" y1="{y0}" x2="{x:.1f}" y2="{y0 + 5}" stroke="black"/>')
            p.append(f'<text x="{x:.1f}" y="{y0 + 18}" text-anchor="middle">{_fmt_tick(v)}</text>')
        for v in _nice_ticks(*self.ylim):
            y = self.py(v)
            p.append(f'<line x1="{x0 - 5}" y1="{y:.1f}" x2="{x0}" y2="{y:.1f}" stroke="black"/>')
            p.append(f'<text x="{x0 - 8}" y="{y + 4:.1f}" text-anchor="end">{_fmt_tick(v)}</text>')
        p.append(f'<text x="{(x0 + x1) / 2:.1f}" y="{HEIGHT - 15}" text-anchor="middle">{escape(xlabel)}</text>')
        ym = (y0 + y1) / 2
        p.append(f'<text x="18" y="{ym:.1f}" text-anchor="middle" '
                 f'transform="rotate(-90 18 {ym:.1f})">{escape(ylabel)}</text>')

    def polyline(self, xs, ys, color, dashed=False):
        pts = " ".join(f"{self.px(x):.2f},{self.py(y):.2f}" for x, y in zip(xs, ys))
        dash = ' stroke-dasharray="6,4"' if dashed else ""
        self.parts.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="2"{dash}/>')

    def band(self, xs, lo, hi, color):
        pts = [(self.px(x), self.py(y)) for x, y in zip(xs, hi)]
        pts += [(self.px(x), self.py(y)) for x, y in zip(reversed(xs), reversed(lo))]
        s = " ".join(f"{a:.2f},{b:.2f}" for a, b in pts)
        self.parts.append(f'<polygon points="{s}" fill="{color}" fill-opacity="0.25" stroke="none"/>')

    def points(self, xs, ys, color):
        for x, y in zip(xs, ys):
            self.parts.append(f'<circle cx="{self.px(x):.2f}" cy="{self.py(y):.2f}" r="4" fill="{color}"/>')

    def legend(self, items):
        x = WIDTH - MARGIN["right"] - 150
        for k, (label, color) in enumerate(items):
            y = MARGIN["top"] + 12 + 16 * k
            self.parts.append(f'<rect x="{x}" y="{y - 9}" width="12" height="10" fill="{color}"/>')
            self.parts.append(f'<text x="{x + 18}" y="{y}">{escape(label)}</text>')

    def svg(self) -> str:
        return "\n".join(self.parts + ["</svg>"]) + "\n"


def _limits(values, pad=0.05):
    v = np.asarray([x for x in np.ravel(values) if math.isfinite(x)])
    if v.size == 0:
        return (0.0, 1.0)
    lo, hi = float(v.min()), float(v.max())
    if hi == lo:
        lo, hi = lo - 0.5, hi + 0.5
    d = (hi - lo) * pad
    return (lo - d, hi + d)


# --- charts --------------------------------------------------------------------


def learning_curve_svg(paths: Sequence) -> str:
    """Mean true return over runs with a shaded band of one standard deviation."""
    curves = []
    for path in paths:
        header, body = read_csv(path)
        if csv_kind(header) != "metrics":
            raise DataError(f"{path}: not a metrics CSV")
        curves.append((_column(path, header, body, "step"),
                       _column(path, header, body, "true_return_mean")))
    steps = curves[0][0]
    if any(len(s) != len(steps) or not np.array_equal(s, steps) for s, _ in curves):
        raise DataError("metrics CSVs disagree on evaluation steps")
    Y = np.vstack([y for _, y in curves])
    mean, std = Y.mean(axis=0), Y.std(axis=0)
    c = _Canvas(_limits(steps, 0.0), _limits([mean - std, mean + std]),
                f"learning curve ({len(curves)} run{'s' if len(curves) > 1 else ''})",
                "step", "true_return_mean")
    if len(curves) > 1:
        c.band(steps, mean - std, mean + std, COLORS[0])
    c.polyline(steps, mean, COLORS[0])
    return c.svg()


def calibration_svg(path) -> str:
    header, body = read_csv(path)
    x = _column(path, header, body, "true_return_mean")
    y = _column(path, header, body, "proxy_return_mean")
    c = _Canvas(_limits(x), _limits(y), "proxy vs true return", "true_return_mean", "proxy_return_mean")
    c.points(x, y, COLORS[0])
    return c.svg()


def sweep_svg(path) -> str:
    header, body = read_csv(path)
    solver = [r[header.index("solver")] for r in body]
    lam = _column(path, header, body, "lambda", allow_blank=True)
    dist = _column(path, header, body, "mean_distance")
    sk = [i for i, s in enumerate(solver) if s == "sinkhorn" and math.isfinite(lam[i]) and lam[i] > 0]
    refs = [(s, dist[i]) for i, s in enumerate(solver) if s != "sinkhorn"]
    if sk:
        xlim = (float(lam[sk].min()), float(lam[sk].max()))
        if xlim[0] == xlim[1]:
            xlim = (xlim[0] / 10, xlim[1] * 10)
    else:
        xlim = (1e-3, 1.0)
    c = _Canvas(xlim, _limits(dist), "transport cost by solver", "lambda", "mean_distance", logx=True)
    legend = []
    if sk:
        order = sorted(sk, key=lambda i: lam[i])
        c.polyline(lam[order], dist[order], COLORS[0])
        legend.append(("sinkhorn", COLORS[0]))
    for k, (name, v) in enumerate(refs, 1):
        color = COLORS[k % len(COLORS)]
        c.polyline(list(xlim), [v, v], color, dashed=True)
        legend.append((name, color))
    c.legend(legend)
    return c.svg()


def plot_files(paths: Sequence, out_dir) -> list:
    """Render every CSV; all metrics files share one learning-curve chart."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    metrics, written = [], []
    for path in paths:
        header, _ = read_csv(path)
        kind = csv_kind(header)
        if kind == "metrics":
            metrics.append(path)
            continue
        svg = calibration_svg(path) if kind == "calibration" else sweep_svg(path)
        target = out_dir / f"{Path(path).stem}_{kind}.svg"
        target.write_text(svg, encoding="utf-8")
        written.append(target)
    if metrics:
        target = out_dir / "learning_curve.svg"
        target.write_text(learning_curve_svg(metrics), encoding="utf-8")
        written.append(target)
    return written
