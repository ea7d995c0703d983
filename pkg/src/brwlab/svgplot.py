"""Dependency-free SVG line/scatter plots.

Plots are standalone SVG documents with axes, tick labels, an optional
legend, and an embedded provenance comment carrying the config hash and
seed, so every figure is traceable to the run that produced it.
"""

from __future__ import annotations

from dataclasses import dataclass, field

_WIDTH, _HEIGHT = 640, 420
_MARGIN = {"left": 64, "right": 24, "top": 32, "bottom": 48}
_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


@dataclass
class Series:
    x: list
    y: list
    label: str = ""

    def __post_init__(self):
        if len(self.x) != len(self.y):
            raise ValueError("series coordinates must have equal length")
        if not self.x:
            raise ValueError("series must be non-empty")


@dataclass
class PlotSpec:
    series: list = field(default_factory=list)
    kind: str = "line"  # or "scatter"
    title: str = ""
    x_label: str = ""
    y_label: str = ""
    provenance: dict = field(default_factory=dict)


def _ticks(lo: float, hi: float, n: int = 5) -> list:
    if hi == lo:
        hi = lo + 1.0
    span = hi - lo
    step = span / (n - 1)
    return [lo + i * step for i in range(n)]


def _fmt(v: float) -> str:
    if v == int(v) and abs(v) < 1e7:
        return str(int(v))
    return f"{v:.4g}"


def render(spec: PlotSpec) -> str:
    if not spec.series:
        raise ValueError("plot needs at least one series")
    xs = [v for s in spec.series for v in s.x]
    ys = [v for s in spec.series for v in s.y]
    x_lo, x_hi = min(xs), max(xs)
    y_lo, y_hi = min(ys), max(ys)
    if x_hi == x_lo:
        x_lo, x_hi = x_lo - 0.5, x_hi + 0.5
    if y_hi == y_lo:
        y_lo, y_hi = y_lo - 0.5, y_hi + 0.5
    pad_y = 0.05 * (y_hi - y_lo)
    y_lo, y_hi = y_lo - pad_y, y_hi + pad_y

    plot_w = _WIDTH - _MARGIN["left"] - _MARGIN["right"]
    plot_h = _HEIGHT - _MARGIN["top"] - _MARGIN["bottom"]

    def sx(v):
        return _MARGIN["left"] + (v - x_lo) / (x_hi - x_lo) * plot_w

    def sy(v):
        return _MARGIN["top"] + (y_hi - v) / (y_hi - y_lo) * plot_h

    prov = " ".join(f"{k}={v}" for k, v in sorted(spec.provenance.items()))
    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f"<!-- provenance: {prov} -->",
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_WIDTH}" height="{_HEIGHT}" '
        f'viewBox="0 0 {_WIDTH} {_HEIGHT}" font-family="sans-serif" font-size="12">',
        f'<rect width="{_WIDTH}" height="{_HEIGHT}" fill="white"/>',
    ]
    # axes
    x0, y0 = _MARGIN["left"], _MARGIN["top"] + plot_h
    out.append(
        f'<line x1="{x0}" y1="{y0}" x2="{x0 + plot_w}" y2="{y0}" stroke="black"/>'
    )
    out.append(
        f'<line x1="{x0}" y1="{_MARGIN["top"]}" x2="{x0}" y2="{y0}" stroke="black"/>'
    )
    for t in _ticks(x_lo, x_hi):
        px = sx(t)
        out.append(f'<line x1="{px:.2f}" y1="{y0}" x2="{px:.2f}" y2="{y0 + 5}" stroke="black"/>')
        out.append(
            f'<text x="{px:.2f}" y="{y0 + 18}" text-anchor="middle">{_fmt(t)}</text>'
        )
    for t in _ticks(y_lo, y_hi):
        py = sy(t)
        out.append(f'<line x1="{x0 - 5}" y1="{py:.2f}" x2="{x0}" y2="{py:.2f}" stroke="black"/>')
        out.append(
            f'<text x="{x0 - 8}" y="{py + 4:.2f}" text-anchor="end">{_fmt(t)}</text>'
        )
    if spec.title:
        out.append(
            f'<text x="{_WIDTH / 2}" y="20" text-anchor="middle" font-size="14">{spec.title}</text>'
        )
    if spec.x_label:
        out.append(
            f'<text x="{x0 + plot_w / 2}" y="{_HEIGHT - 10}" text-anchor="middle">{spec.x_label}</text>'
        )
    if spec.y_label:
        out.append(
            f'<text x="16" y="{_MARGIN["top"] + plot_h / 2}" text-anchor="middle" '
            f'transform="rotate(-90 16 {_MARGIN["top"] + plot_h / 2})">{spec.y_label}</text>'
        )

    for i, s in enumerate(spec.series):
        color = _COLORS[i % len(_COLORS)]
        pts = [(sx(a), sy(b)) for a, b in zip(s.x, s.y)]
        if spec.kind == "line" and len(pts) > 1:
            d = "M " + " L ".join(f"{a:.2f} {b:.2f}" for a, b in pts)
            out.append(f'<path d="{d}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        for a, b in pts:
            out.append(f'<circle cx="{a:.2f}" cy="{b:.2f}" r="3" fill="{color}"/>')

    labeled = [s for s in spec.series if s.label]
    if labeled:
        lx, ly = x0 + plot_w - 150, _MARGIN["top"] + 8
        out.append(f'<g class="legend">')
        for i, s in enumerate(spec.series):
            if not s.label:
                continue
            color = _COLORS[i % len(_COLORS)]
            out.append(
                f'<line x1="{lx}" y1="{ly}" x2="{lx + 20}" y2="{ly}" stroke="{color}" stroke-width="2"/>'
            )
            out.append(f'<text x="{lx + 26}" y="{ly + 4}">{s.label}</text>')
            ly += 18
        out.append("</g>")
    out.append("</svg>")
    return "\n".join(out)


def emit_plot(series, kind: str, path, **meta) -> None:
    """Write a line or scatter plot of one or more (x, y, label) series."""
    if isinstance(series, Series):
        series = [series]
    spec = PlotSpec(
        series=list(series),
        kind=kind,
        title=meta.pop("title", ""),
        x_label=meta.pop("x_label", ""),
        y_label=meta.pop("y_label", ""),
        provenance=meta,
    )
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(render(spec))
