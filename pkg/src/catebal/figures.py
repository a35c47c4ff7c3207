"""Minimal SVG figure writer.

Two plot kinds, line-with-error-band and scatter-with-overlay, written as
standalone SVG with every data series also embedded as an XML comment so the
underlying numbers stay diffable inside the figure file itself.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

_COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"]

WIDTH, HEIGHT = 640, 440
MARGIN_L, MARGIN_R, MARGIN_T, MARGIN_B = 70, 20, 40, 55


@dataclass
class Series:
    name: str
    x: list[float]
    y: list[float]
    band: Optional[list[float]] = None  # symmetric half-width around y
    points_only: bool = False
    dashed: bool = False

    def __post_init__(self):
        if len(self.x) != len(self.y):
            raise ValueError(f"series {self.name!r}: x/y lengths differ")
        if self.band is not None and len(self.band) != len(self.y):
            raise ValueError(f"series {self.name!r}: band length differs")


@dataclass
class FigureSpec:
    title: str
    xlabel: str
    ylabel: str
    series: list[Series] = field(default_factory=list)


def _ticks(lo, hi, n=5):
    if hi <= lo:
        hi = lo + 1.0
    step = (hi - lo) / (n - 1)
    return [lo + i * step for i in range(n)]


def _fmt(v):
    return f"{v:.4g}"


def render_svg(spec: FigureSpec) -> str:
    xs = [v for s in spec.series for v in s.x]
    ys = [
        v + (b if b else 0.0) * sgn
        for s in spec.series
        for v, b in zip(s.y, s.band or [0.0] * len(s.y))
        for sgn in (-1, 1)
    ]
    if not xs:
        xs, ys = [0.0, 1.0], [0.0, 1.0]
    x_lo, x_hi = min(xs), max(xs)
    y_lo, y_hi = min(ys), max(ys)
    if x_hi == x_lo:
        x_hi = x_lo + 1.0
    if y_hi == y_lo:
        y_hi = y_lo + 1.0
    pad = 0.05 * (y_hi - y_lo)
    y_lo, y_hi = y_lo - pad, y_hi + pad

    def px(x):
        return MARGIN_L + (x - x_lo) / (x_hi - x_lo) * (WIDTH - MARGIN_L - MARGIN_R)

    def py(y):
        return HEIGHT - MARGIN_B - (y - y_lo) / (y_hi - y_lo) * (HEIGHT - MARGIN_T - MARGIN_B)

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">',
        f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text x="{WIDTH / 2}" y="22" text-anchor="middle" font-size="15">{spec.title}</text>',
    ]
    for s in spec.series:
        out.append(
            f"<!-- data: {s.name} x={[_fmt(v) for v in s.x]} y={[_fmt(v) for v in s.y]}"
            + (f" band={[_fmt(v) for v in s.band]}" if s.band else "")
            + " -->"
        )
    # axes and ticks
    out.append(
        f'<line x1="{MARGIN_L}" y1="{py(y_lo)}" x2="{MARGIN_L}" y2="{py(y_hi)}" stroke="black"/>'
    )
    out.append(
        f'<line x1="{px(x_lo)}" y1="{HEIGHT - MARGIN_B}" x2="{px(x_hi)}" '
        f'y2="{HEIGHT - MARGIN_B}" stroke="black"/>'
    )
    for tx in _ticks(x_lo, x_hi):
        out.append(
            f'<text x="{px(tx):.1f}" y="{HEIGHT - MARGIN_B + 18}" text-anchor="middle">{_fmt(tx)}</text>'
        )
    for ty in _ticks(y_lo, y_hi):
        out.append(
            f'<text x="{MARGIN_L - 8}" y="{py(ty) + 4:.1f}" text-anchor="end">{_fmt(ty)}</text>'
        )
    out.append(
        f'<text x="{WIDTH / 2}" y="{HEIGHT - 12}" text-anchor="middle">{spec.xlabel}</text>'
    )
    out.append(
        f'<text x="16" y="{HEIGHT / 2}" text-anchor="middle" '
        f'transform="rotate(-90 16 {HEIGHT / 2})">{spec.ylabel}</text>'
    )
    # series
    for i, s in enumerate(spec.series):
        color = _COLORS[i % len(_COLORS)]
        if s.band is not None:
            upper = [(px(x), py(y + b)) for x, y, b in zip(s.x, s.y, s.band)]
            lower = [(px(x), py(y - b)) for x, y, b in zip(s.x, s.y, s.band)]
            pts = " ".join(f"{a:.1f},{b:.1f}" for a, b in upper + lower[::-1])
            out.append(f'<polygon points="{pts}" fill="{color}" opacity="0.15"/>')
        if s.points_only:
            for x, y in zip(s.x, s.y):
                out.append(
                    f'<circle cx="{px(x):.1f}" cy="{py(y):.1f}" r="2" fill="{color}" opacity="0.6"/>'
                )
        else:
            pts = " ".join(f"{px(x):.1f},{py(y):.1f}" for x, y in zip(s.x, s.y))
            dash = ' stroke-dasharray="6,4"' if s.dashed else ""
            out.append(
                f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.8"{dash}/>'
            )
        ly = MARGIN_T + 16 * i
        out.append(
            f'<line x1="{WIDTH - 160}" y1="{ly}" x2="{WIDTH - 140}" y2="{ly}" '
            f'stroke="{color}" stroke-width="2"/>'
        )
        out.append(f'<text x="{WIDTH - 134}" y="{ly + 4}">{s.name}</text>')
    out.append("</svg>")
    return "\n".join(out)


def write_svg(path, spec: FigureSpec):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(render_svg(spec))
