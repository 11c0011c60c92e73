"""SVG rendering of road networks: one path per lane boundary, solid or
dashed strokes, socket ticks, and a destination marker."""

from __future__ import annotations

import math

from .blocks import Boundary
from .geometry import CircularArc, StraightSegment, unit
from .pgmap import RoadNetwork

_MARGIN = 6.0


def _fmt(v: float) -> str:
    return f"{v:.3f}"


def _arc_path(arc: CircularArc, move: bool) -> str:
    """SVG path commands for an arc; full turns are split in two."""
    parts = []
    remaining = arc.sweep
    a0 = arc.start_angle
    start = arc.center + unit(a0).scaled(arc.radius)
    if move:
        parts.append(f"M {_fmt(start.x)} {_fmt(start.y)}")
    while abs(remaining) > 1e-12:
        step = max(-math.pi, min(math.pi, remaining))
        a1 = a0 + step
        end = arc.center + unit(a1).scaled(arc.radius)
        large = 0
        sweep_flag = 1 if step > 0 else 0
        r = _fmt(arc.radius)
        parts.append(f"A {r} {r} 0 {large} {sweep_flag} {_fmt(end.x)} {_fmt(end.y)}")
        a0 = a1
        remaining -= step
    return " ".join(parts)


def _boundary_path(boundary: Boundary) -> str:
    parts = []
    for k, prim in enumerate(boundary.chain):
        if isinstance(prim, StraightSegment):
            if k == 0:
                parts.append(f"M {_fmt(prim.start.x)} {_fmt(prim.start.y)}")
            parts.append(f"L {_fmt(prim.end.x)} {_fmt(prim.end.y)}")
        else:
            parts.append(_arc_path(prim, move=(k == 0)))
    return " ".join(parts)


def render_svg(net: RoadNetwork) -> str:
    """Standalone SVG document for a network."""
    if net.blocks:
        boxes = [b.bbox() for b in net.blocks]
        min_x = min(b[0] for b in boxes) - _MARGIN
        min_y = min(b[1] for b in boxes) - _MARGIN
        max_x = max(b[2] for b in boxes) + _MARGIN
        max_y = max(b[3] for b in boxes) + _MARGIN
    else:
        min_x = min_y = -10.0
        max_x = max_y = 10.0
    width = max_x - min_x
    height = max_y - min_y

    lines = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" '
        f'viewBox="{_fmt(min_x)} {_fmt(-max_y)} {_fmt(width)} {_fmt(height)}">',
        # Flip y so north is up on screen.
        '<g transform="scale(1,-1)" fill="none" stroke-linecap="round">',
    ]
    for block in net.blocks:
        lines.append(f'<g class="block" data-kind="{block.kind.value}">')
        for boundary in block.boundaries:
            dash = ' stroke-dasharray="3 3"' if boundary.style == "broken" else ""
            color = "#333333" if boundary.is_edge else "#999999"
            lines.append(
                f'<path class="lane-boundary" stroke="{color}" stroke-width="0.3"{dash} '
                f'd="{_boundary_path(boundary)}"/>'
            )
        lines.append("</g>")
    for block in net.blocks:
        for sock in block.sockets:
            p = sock.pose.position
            left = sock.pose.left()
            half = sock.lanes * block.lane_width / 2.0
            a = p + left.scaled(half)
            b = p - left.scaled(half)
            lines.append(
                f'<line class="socket" stroke="#cc3333" stroke-width="0.5" '
                f'x1="{_fmt(a.x)}" y1="{_fmt(a.y)}" x2="{_fmt(b.x)}" y2="{_fmt(b.y)}"/>'
            )
    dest = net.destination
    if dest is not None:
        p = dest.pose.position
        lines.append(
            f'<circle class="destination" cx="{_fmt(p.x)}" cy="{_fmt(p.y)}" r="2.5" '
            f'fill="#33aa33"/>'
        )
    lines.append("</g>")
    lines.append("</svg>")
    return "\n".join(lines)
