"""Independent reference implementations used to check the package.

Everything here is deliberately written the slow, obvious way (or delegated
to shapely) so a bug in the library cannot hide in its own test.
"""

from __future__ import annotations

import heapq
import itertools
import math

from shapely.geometry import LineString, MultiLineString, MultiPoint, Point, Polygon


def segments_cross_shapely(a1, a2, b1, b2) -> bool:
    """True iff the two segments' interiors intersect.

    DE-9IM pattern 'T********' means interior-interior intersection is
    nonempty, which excludes pure endpoint or T-style touches.
    """
    la = LineString([(a1.x, a1.y), (a2.x, a2.y)])
    lb = LineString([(b1.x, b1.y), (b2.x, b2.y)])
    return la.relate_pattern(lb, "T********")


def rects_overlap_shapely(corners_a, corners_b) -> bool:
    pa = Polygon([(float(p[0]), float(p[1])) for p in corners_a])
    pb = Polygon([(float(p[0]), float(p[1])) for p in corners_b])
    return pa.intersects(pb) and not pa.touches(pb)


class _P:
    __slots__ = ("x", "y")

    def __init__(self, x, y):
        self.x, self.y = float(x), float(y)


def _wall_collection(block):
    segs = block.footprint_segments()
    lines = [LineString([(s[0], s[1]), (s[2], s[3])]) for s in segs]
    ends = [(s[0], s[1]) for s in segs] + [(s[2], s[3]) for s in segs]
    return MultiLineString(lines), ends


def footprints_overlap_shapely(block_a, block_b, eps=1e-6) -> bool:
    """Overlap test on two placed blocks' wall sets.

    A hit is either a shared stretch of wall longer than eps, or a crossing
    point in the interior of walls from both blocks, i.e. farther than eps
    from every wall endpoint. Docked seams only ever touch at endpoints and
    therefore never count, even when the two transform chains disagree in
    the last few ulps.
    """
    mls_a, ends_a = _wall_collection(block_a)
    mls_b, ends_b = _wall_collection(block_b)
    inter = mls_a.intersection(mls_b)
    if inter.is_empty:
        return False
    parts = getattr(inter, "geoms", [inter])
    endpoints = MultiPoint(ends_a + ends_b)
    for part in parts:
        if isinstance(part, LineString):
            if part.length > eps:
                return True
        elif isinstance(part, Point):
            if part.distance(endpoints) > eps:
                return True
    return False


def network_overlap_pairs(net) -> list[tuple[int, int]]:
    """All-pairs footprint check, independent of the library's predicate."""
    pairs = []
    blocks = net.blocks
    for i, j in itertools.combinations(range(len(blocks)), 2):
        if footprints_overlap_shapely(blocks[i], blocks[j]):
            pairs.append((i, j))
    return pairs


def idm_accel_reference(v, v_lead, gap, v0, s0, t_headway, a_max, b_decel, delta=4.0):
    """Direct transcription of the car-following acceleration formula."""
    dv = v - v_lead
    s_star = s0 + v * t_headway + v * dv / (2.0 * math.sqrt(a_max * b_decel))
    return a_max * (1.0 - (v / v0) ** delta - (s_star / gap) ** 2)


def shortest_path_exhaustive(adj, src, dst):
    """Minimum-length path by enumerating every simple path.

    adj: {node: [(next_node, edge_len, edge_id), ...]}.  Only usable on tiny
    graphs; that is the point.
    """
    best = (math.inf, None)
    stack = [(src, 0.0, [src])]
    while stack:
        node, dist, path = stack.pop()
        if node == dst:
            if dist < best[0]:
                best = (dist, path)
            continue
        for nxt, w, _ in adj.get(node, ()):
            if nxt in path:
                continue
            stack.append((nxt, dist + w, path + [nxt]))
    return best


def dijkstra_reference(adj, src, dst):
    dist = {src: 0.0}
    prev = {}
    heap = [(0.0, src)]
    seen = set()
    while heap:
        d, node = heapq.heappop(heap)
        if node in seen:
            continue
        seen.add(node)
        if node == dst:
            break
        for nxt, w, _ in adj.get(node, ()):
            nd = d + w
            if nd < dist.get(nxt, math.inf):
                dist[nxt] = nd
                prev[nxt] = node
                heapq.heappush(heap, (nd, nxt))
    if dst not in dist:
        return math.inf, None
    path = [dst]
    while path[-1] != src:
        path.append(prev[path[-1]])
    return dist[dst], path[::-1]


def bicycle_circle_reference(wheelbase, speed, steer_rad):
    """Turning-circle radius of an ideal bicycle at fixed steer angle."""
    del speed
    return wheelbase / math.tan(steer_rad)


def integrate_unicycle_fine(x, y, heading, speed, steer, wheelbase, duration, n_steps):
    """Very fine forward-Euler roll-out used as a ground-truth trajectory."""
    dt = duration / n_steps
    for _ in range(n_steps):
        x += speed * math.cos(heading) * dt
        y += speed * math.sin(heading) * dt
        heading += speed * math.tan(steer) / wheelbase * dt
    return x, y, heading


def ray_rect_hit_distance(ox, oy, angle, cx, cy, ch, length, width):
    """Smallest positive ray-parameter hit on an oriented rectangle's edges."""
    dx, dy = math.cos(angle), math.sin(angle)
    hw, hl = width / 2.0, length / 2.0
    cosr, sinr = math.cos(ch), math.sin(ch)
    corners = []
    for sx, sy in ((hl, hw), (-hl, hw), (-hl, -hw), (hl, -hw)):
        corners.append((cx + sx * cosr - sy * sinr, cy + sx * sinr + sy * cosr))
    best = math.inf
    for k in range(4):
        x1, y1 = corners[k]
        x2, y2 = corners[(k + 1) % 4]
        ex, ey = x2 - x1, y2 - y1
        denom = dx * ey - dy * ex
        if abs(denom) < 1e-14:
            continue
        t = ((x1 - ox) * ey - (y1 - oy) * ex) / denom
        u = ((x1 - ox) * dy - (y1 - oy) * dx) / denom
        if t > 1e-12 and -1e-12 <= u <= 1 + 1e-12:
            best = min(best, t)
    return best
