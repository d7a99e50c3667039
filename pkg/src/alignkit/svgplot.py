"""Minimal static SVG emission for MDS scatters and spectrum plots.

Plots are convenience artifacts; every plotted series is also written as
CSV, so nothing downstream depends on these files.
"""

from __future__ import annotations

import numpy as np

from .fileio import atomic_write_text

WIDTH, HEIGHT, MARGIN = 640, 480, 50

MODALITY_COLORS = {"A": "#1f77d0", "B": "#d02020"}  # blue / red diamonds
PAIR_LINK_COLOR = "#e8c000"  # yellow connector between paired samples


def _svg(body: list[str], title: str) -> str:
    head = (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}">\n'
        f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>\n'
        f'<text x="{WIDTH / 2:.1f}" y="24" text-anchor="middle" '
        f'font-family="sans-serif" font-size="15">{title}</text>\n'
    )
    return head + "\n".join(body) + "\n</svg>\n"


def _scale(values, lo_px, hi_px):
    vmin, vmax = float(np.min(values)), float(np.max(values))
    if vmax == vmin:
        vmax = vmin + 1.0
    span = vmax - vmin

    def to_px(v):
        return lo_px + (v - vmin) / span * (hi_px - lo_px)

    return to_px


def scatter_svg(path, points, modality, pair_id, title="embedding scatter") -> None:
    """Diamond scatter colored by modality, paired samples linked."""
    pts = np.asarray(points, dtype=np.float64)
    sx = _scale(pts[:, 0], MARGIN, WIDTH - MARGIN)
    sy = _scale(pts[:, 1], HEIGHT - MARGIN, MARGIN)
    body = []
    by_pair: dict = {}
    for i, pid in enumerate(pair_id):
        by_pair.setdefault(pid, []).append(i)
    for members in by_pair.values():
        if len(members) == 2:
            i, j = members
            body.append(
                f'<line x1="{sx(pts[i, 0]):.2f}" y1="{sy(pts[i, 1]):.2f}" '
                f'x2="{sx(pts[j, 0]):.2f}" y2="{sy(pts[j, 1]):.2f}" '
                f'stroke="{PAIR_LINK_COLOR}" stroke-width="1"/>'
            )
    for i, mod in enumerate(modality):
        x, y = sx(pts[i, 0]), sy(pts[i, 1])
        color = MODALITY_COLORS.get(mod, "#444444")
        body.append(
            f'<path d="M {x:.2f} {y - 5:.2f} L {x + 5:.2f} {y:.2f} '
            f'L {x:.2f} {y + 5:.2f} L {x - 5:.2f} {y:.2f} Z" fill="{color}"/>'
        )
    atomic_write_text(path, _svg(body, title))


def spectrum_svg(path, values, title="singular value spectrum", floor=1e-16) -> None:
    """Log-scale line plot of a sorted spectrum."""
    vals = np.asarray(values, dtype=np.float64)
    logs = np.log10(np.maximum(vals, floor))
    sx = _scale(np.arange(vals.size), MARGIN, WIDTH - MARGIN)
    sy = _scale(logs, HEIGHT - MARGIN, MARGIN)
    pts = " ".join(f"{sx(i):.2f},{sy(l):.2f}" for i, l in enumerate(logs))
    body = [
        f'<polyline points="{pts}" fill="none" stroke="#1f77d0" stroke-width="2"/>',
        f'<text x="{MARGIN}" y="{HEIGHT - 12}" font-family="sans-serif" font-size="12">'
        f"index 0..{vals.size - 1}, log10 range [{logs.min():.2f}, {logs.max():.2f}]</text>",
    ]
    for i, l in enumerate(logs):
        body.append(f'<circle cx="{sx(i):.2f}" cy="{sy(l):.2f}" r="3" fill="#1f77d0"/>')
    atomic_write_text(path, _svg(body, title))
