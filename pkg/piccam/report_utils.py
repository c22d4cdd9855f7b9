"""
Static RD reports: an SVG plot (one polyline per curve, axes, legend) and a
tab-separated table with one row per RD point.
"""

import logging
from pathlib import Path
from typing import Dict, List, Sequence, Tuple
from xml.sax.saxutils import escape

from datasci import Tents

from piccam.bd_metrics import RDPoint
from piccam.errors import EmptyInput
from piccam.metrics import compression_rate_percent

logger = logging.getLogger(__name__)

CurvePoints = Dict[str, List[RDPoint]]

PLOT_WIDTH = 640
PLOT_HEIGHT = 480
MARGIN = 60
NUM_TICKS = 5
PALETTE = (
    "#1f77b4",
    "#d62728",
    "#2ca02c",
    "#ff7f0e",
    "#9467bd",
    "#8c564b",
    "#e377c2",
    "#7f7f7f",
)
TABLE_HEADER = ["curve", "bpp", "psnr", "compression_rate_percent"]


def check_curves(curves: CurvePoints) -> None:
    if len(curves) == 0 or all(len(points) == 0 for points in curves.values()):
        raise EmptyInput("Nothing to report: no RD points given")


def _padded_span(values: Sequence[float]) -> Tuple[float, float]:
    lo, hi = min(values), max(values)
    if hi == lo:
        lo, hi = lo - 0.5, hi + 0.5
    pad = 0.05 * (hi - lo)
    return lo - pad, hi + pad


def render_svg(curves: CurvePoints, title: str = "Rate-distortion") -> str:
    check_curves(curves)
    all_points = [p for points in curves.values() for p in points]
    x_lo, x_hi = _padded_span([p.bpp for p in all_points])
    y_lo, y_hi = _padded_span([p.psnr for p in all_points])
    inner_w = PLOT_WIDTH - 2 * MARGIN
    inner_h = PLOT_HEIGHT - 2 * MARGIN

    def to_x(value: float) -> float:
        return MARGIN + (value - x_lo) / (x_hi - x_lo) * inner_w

    def to_y(value: float) -> float:
        return PLOT_HEIGHT - MARGIN - (value - y_lo) / (y_hi - y_lo) * inner_h

    elements = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{PLOT_WIDTH}" '
        f'height="{PLOT_HEIGHT}" font-family="sans-serif" font-size="12">',
        f'<rect width="{PLOT_WIDTH}" height="{PLOT_HEIGHT}" fill="white"/>',
        f'<text x="{PLOT_WIDTH / 2}" y="{MARGIN / 2}" text-anchor="middle" '
        f'font-size="16">{escape(title)}</text>',
        # Axes
        f'<line class="axis" x1="{MARGIN}" y1="{PLOT_HEIGHT - MARGIN}" '
        f'x2="{PLOT_WIDTH - MARGIN}" y2="{PLOT_HEIGHT - MARGIN}" stroke="black"/>',
        f'<line class="axis" x1="{MARGIN}" y1="{MARGIN}" x2="{MARGIN}" '
        f'y2="{PLOT_HEIGHT - MARGIN}" stroke="black"/>',
        f'<text x="{PLOT_WIDTH / 2}" y="{PLOT_HEIGHT - 15}" '
        f'text-anchor="middle">BPP</text>',
        f'<text x="15" y="{PLOT_HEIGHT / 2}" text-anchor="middle" '
        f'transform="rotate(-90 15 {PLOT_HEIGHT / 2})">Weighted YUV PSNR (dB)</text>',
    ]
    for i in range(NUM_TICKS + 1):
        x_value = x_lo + i * (x_hi - x_lo) / NUM_TICKS
        y_value = y_lo + i * (y_hi - y_lo) / NUM_TICKS
        x, y = to_x(x_value), to_y(y_value)
        elements.append(
            f'<text x="{x:.1f}" y="{PLOT_HEIGHT - MARGIN + 18}" '
            f'text-anchor="middle">{x_value:.3g}</text>'
        )
        elements.append(
            f'<text x="{MARGIN - 6}" y="{y + 4:.1f}" text-anchor="end">{y_value:.1f}</text>'
        )

    for i, (name, points) in enumerate(curves.items()):
        colour = PALETTE[i % len(PALETTE)]
        ordered = sorted(points, key=lambda p: p.bpp)
        coordinates = " ".join(f"{to_x(p.bpp):.2f},{to_y(p.psnr):.2f}" for p in ordered)
        elements.append(
            f'<polyline class="curve" points="{coordinates}" fill="none" '
            f'stroke="{colour}" stroke-width="2"/>'
        )
        for p in ordered:
            elements.append(
                f'<circle cx="{to_x(p.bpp):.2f}" cy="{to_y(p.psnr):.2f}" r="3" '
                f'fill="{colour}"/>'
            )
        legend_y = MARGIN + 10 + 18 * i
        legend_x = PLOT_WIDTH - MARGIN - 150
        elements.append(
            f'<g class="legend"><line x1="{legend_x}" y1="{legend_y}" '
            f'x2="{legend_x + 20}" y2="{legend_y}" stroke="{colour}" stroke-width="2"/>'
            f'<text x="{legend_x + 26}" y="{legend_y + 4}">{escape(name)}</text></g>'
        )
    elements.append("</svg>")
    return "\n".join(elements) + "\n"


def setup_rd_tents() -> Tents:
    return Tents(header=TABLE_HEADER, required_header=TABLE_HEADER[:3], unset_value=0)


def rd_table(curves: CurvePoints) -> Tents:
    check_curves(curves)
    table = setup_rd_tents()
    for name, points in curves.items():
        for point in sorted(points, key=lambda p: p.bpp):
            row = table.new()
            row.update(
                curve=name,
                bpp=point.bpp,
                psnr=point.psnr,
                compression_rate_percent=compression_rate_percent(point.bpp),
            )
            table.add(row)
    return table


def write_report(curves: CurvePoints, svg_fname, table_fname) -> None:
    svg = render_svg(curves)
    table = rd_table(curves)
    Path(svg_fname).write_text(svg)
    with open(table_fname, "w") as ofstream:
        print(table, file=ofstream)
    logger.info(
        f"Wrote {sum(len(p) for p in curves.values())} RD points of {len(curves)} "
        f"curves to {svg_fname} and {table_fname}"
    )
