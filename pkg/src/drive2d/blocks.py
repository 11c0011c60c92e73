"""Road block catalog.

A block is a rigid piece of road network built in a local frame (entered at
the origin heading +x) and placed into the world by docking its entry socket
onto an anchor socket: positions coincide and headings differ by pi. Each
block exposes lanes (directed centerline geometry between named nodes),
sockets where further blocks may dock, boundary lines for rendering and
collision walls, and traffic spawn points every 10 m of lane.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .geometry import (
    TAU,
    CircularArc,
    LaneGeometry,
    Pose,
    StraightSegment,
    Vec2,
    discretize,
    lane_length,
    normalize_angle,
    polyline_segments,
    segment_sets_cross,
    unit,
)

DEFAULT_LANE_WIDTH = 3.5
SOCKET_STUB = 5.0
SPAWN_SPACING = 10.0

# Fillet radius and approach length for roundabout ports.
_RB_FILLET = 10.0
_RB_APPROACH = 10.0
_ARM_LEN = 10.0  # intersection arm length


class BlockType(str, Enum):
    STRAIGHT = "straight"
    CURVE = "curve"
    RAMP = "ramp"
    FORK = "fork"
    ROUNDABOUT = "roundabout"
    T_INTERSECTION = "t_intersection"
    INTERSECTION = "intersection"


# Sampling bounds per block type; lanes always draw from {1..4} and angles
# are in degrees. Kept importable so tests can check sampled censuses.
PARAM_SPACES: dict[BlockType, dict[str, tuple[float, float]]] = {
    BlockType.STRAIGHT: {"length": (20.0, 100.0)},
    BlockType.CURVE: {"length": (20.0, 60.0), "radius": (10.0, 50.0), "angle": (30.0, 120.0)},
    BlockType.RAMP: {"length": (40.0, 100.0)},
    BlockType.FORK: {"length": (40.0, 80.0)},
    BlockType.ROUNDABOUT: {"radius": (15.0, 40.0)},
    BlockType.T_INTERSECTION: {"radius": (10.0, 20.0)},
    BlockType.INTERSECTION: {"radius": (10.0, 20.0)},
}

LANE_COUNTS = (1, 2, 3, 4)


class LaneCountMismatchError(ValueError):
    """Anchor socket and block entry disagree on lane count."""


@dataclass(frozen=True)
class Socket:
    """Docking interface: an outward-facing pose at the end of a short
    straight socket road, plus the per-lane junction nodes living there."""

    id: str
    pose: Pose
    lanes: int
    lane_nodes: tuple[str, ...]
    stub_length: float = SOCKET_STUB


@dataclass(frozen=True)
class Lane:
    """One directed lane edge between two junction nodes."""

    id: str
    geom: LaneGeometry
    start_node: str
    end_node: str
    group: str
    index: int
    road_offset: float
    group_lanes: int
    junction: bool = False

    @property
    def length(self) -> float:
        return lane_length(self.geom)


@dataclass(frozen=True)
class Boundary:
    """A lane boundary line: a chain of straight/arc primitives.

    is_edge marks physical pavement limits (collision walls); interior lane
    lines are paint only and differ just in stroke style.
    """

    chain: tuple[LaneGeometry, ...]
    style: str  # "solid" | "broken"
    is_edge: bool


@dataclass(frozen=True)
class SpawnPoint:
    lane_id: str
    s: float


@dataclass
class Block:
    kind: BlockType
    params: dict
    index: int
    origin: Pose
    lanes: list[Lane]
    sockets: list[Socket]
    boundaries: list[Boundary]
    nodes: dict[str, Vec2]
    spawn_points: list[SpawnPoint]
    _footprint: np.ndarray | None = field(default=None, repr=False, compare=False)
    _bbox: tuple | None = field(default=None, repr=False, compare=False)

    @property
    def entry_socket(self) -> Socket:
        return self.sockets[0]

    @property
    def exit_sockets(self) -> list[Socket]:
        return self.sockets[1:]

    @property
    def lane_width(self) -> float:
        return float(self.params["lane_width"])

    def footprint_segments(self) -> np.ndarray:
        """Wall segments of the block outline, discretized from the edges."""
        if self._footprint is None:
            parts = []
            for boundary in self.boundaries:
                if not boundary.is_edge:
                    continue
                for prim in boundary.chain:
                    parts.append(polyline_segments(discretize(prim)))
            self._footprint = (
                np.concatenate(parts, axis=0) if parts else np.empty((0, 4))
            )
        return self._footprint

    def bbox(self) -> tuple[float, float, float, float]:
        """(min_x, min_y, max_x, max_y) over the footprint walls."""
        if self._bbox is None:
            segs = self.footprint_segments()
            xs = np.concatenate([segs[:, 0], segs[:, 2]])
            ys = np.concatenate([segs[:, 1], segs[:, 3]])
            self._bbox = (float(xs.min()), float(ys.min()), float(xs.max()), float(ys.max()))
        return self._bbox


def block_footprints_overlap(a: Block, b: Block) -> bool:
    """True iff the footprints of two placed blocks overlap.

    Boundary chains are discretized (chord error well under 0.5 m) and tested
    pairwise; docked end-to-end contact does not count as overlap.
    """
    ax0, ay0, ax1, ay1 = a.bbox()
    bx0, by0, bx1, by1 = b.bbox()
    if ax1 < bx0 or bx1 < ax0 or ay1 < by0 or by1 < ay0:
        return False
    return segment_sets_cross(a.footprint_segments(), b.footprint_segments())


def origin_socket(lanes: int, lane_width: float = DEFAULT_LANE_WIDTH) -> Socket:
    """Virtual socket the first block docks onto; sits at the world origin
    pointing backward so the first block extends along +x."""
    del lane_width
    return Socket(id="origin", pose=Pose(Vec2(0.0, 0.0), 0.0), lanes=lanes, lane_nodes=())


def sample_params(
    kind: BlockType,
    rng: np.random.Generator,
    lanes: int | None = None,
    lane_width: float = DEFAULT_LANE_WIDTH,
) -> dict:
    """Draw block parameters uniformly from the type's parameter space.

    The draw order is fixed (lanes, then type parameters in a set order) so a
    given rng state always yields the same parameters.
    """
    from .rng import rand_choice, rand_int, rand_uniform

    if lanes is None:
        lanes = LANE_COUNTS[rand_int(rng, 0, len(LANE_COUNTS) - 1)]
    params: dict = {"lanes": int(lanes), "lane_width": float(lane_width)}
    space = PARAM_SPACES[kind]
    if kind is BlockType.STRAIGHT:
        params["length"] = rand_uniform(rng, *space["length"])
        params["line_type"] = rand_choice(rng, ("broken", "solid"))
    elif kind is BlockType.CURVE:
        params["length"] = rand_uniform(rng, *space["length"])
        params["radius"] = rand_uniform(rng, *space["radius"])
        params["angle"] = rand_uniform(rng, *space["angle"])
        params["direction"] = rand_choice(rng, (1, -1))
    elif kind is BlockType.RAMP:
        params["length"] = rand_uniform(rng, *space["length"])
        params["variant"] = rand_choice(rng, ("on", "off"))
    elif kind is BlockType.FORK:
        params["length"] = rand_uniform(rng, *space["length"])
        feasible = [d for d in (1, -1) if 1 <= lanes + d <= 4]
        params["delta"] = rand_choice(rng, feasible)
    elif kind is BlockType.ROUNDABOUT:
        params["radius"] = rand_uniform(rng, *space["radius"])
    elif kind is BlockType.T_INTERSECTION:
        params["radius"] = rand_uniform(rng, *space["radius"])
        params["turn"] = rand_choice(rng, (1, -1))
    elif kind is BlockType.INTERSECTION:
        params["radius"] = rand_uniform(rng, *space["radius"])
    else:  # pragma: no cover
        raise ValueError(f"unknown block type {kind}")
    return params


class _Builder:
    """Accumulates block parts in the local frame, then rigid-transforms
    everything onto the anchor socket."""

    def __init__(self, kind: BlockType, params: dict):
        self.kind = kind
        self.params = params
        self.width = float(params["lane_width"])
        self.nodes: dict[str, Vec2] = {}
        self.lanes: list[dict] = []
        self.boundaries: list[Boundary] = []
        self.sockets: list[dict] = []
        self.entry_nodes: tuple[str, ...] = ()

    # -- nodes ---------------------------------------------------------

    def node(self, name: str, pos: Vec2) -> str:
        existing = self.nodes.get(name)
        if existing is None:
            self.nodes[name] = pos
        return name

    # -- lanes ---------------------------------------------------------

    def lane(
        self,
        geom: LaneGeometry,
        start_node: str,
        end_node: str,
        group: str,
        index: int,
        road_offset: float,
        group_lanes: int,
        junction: bool = False,
    ) -> None:
        self.lanes.append(
            dict(
                geom=geom,
                start_node=start_node,
                end_node=end_node,
                group=group,
                index=index,
                road_offset=road_offset,
                group_lanes=group_lanes,
                junction=junction,
            )
        )

    def boundary(self, chain, style: str, is_edge: bool) -> None:
        self.boundaries.append(Boundary(tuple(chain), style, is_edge))

    def socket(self, pose: Pose, lanes: int, lane_nodes) -> None:
        self.sockets.append(dict(pose=pose, lanes=lanes, lane_nodes=tuple(lane_nodes)))

    # -- roads ---------------------------------------------------------

    def straight_road(
        self,
        group: str,
        start: Pose,
        length: float,
        lanes: int,
        start_nodes=None,
        inner: str = "broken",
        left_edge: bool = True,
        right_edge: bool = True,
        boundaries: bool = True,
    ):
        """X parallel straight lanes plus X+1 boundary lines.

        Returns (end_pose, end_node_names). start_nodes chains this road onto
        existing per-lane nodes.
        """
        w = self.width
        fwd = start.forward()
        left = start.left()
        end_center = start.position + fwd.scaled(length)
        end_nodes = []
        for i in range(lanes):
            off = ((lanes - 1) / 2.0 - i) * w
            p0 = start.position + left.scaled(off)
            p1 = end_center + left.scaled(off)
            sn = (
                start_nodes[i]
                if start_nodes is not None and start_nodes[i] is not None
                else self.node(f"{group}.s{i}", p0)
            )
            en = self.node(f"{group}.e{i}", p1)
            self.lane(StraightSegment(p0, p1, w), sn, en, group, i, off, lanes)
            end_nodes.append(en)
        if boundaries:
            for j in range(lanes + 1):
                off = (lanes / 2.0 - j) * w
                edge = j == 0 or j == lanes
                if (j == 0 and not left_edge) or (j == lanes and not right_edge):
                    continue
                chain = [
                    StraightSegment(
                        start.position + left.scaled(off), end_center + left.scaled(off), w
                    )
                ]
                self.boundary(chain, "solid" if edge else inner, edge)
        return Pose(end_center, start.heading), end_nodes

    def arc_road(
        self,
        group: str,
        start: Pose,
        radius: float,
        sweep: float,
        lanes: int,
        start_nodes=None,
        inner: str = "broken",
        left_edge: bool = True,
        right_edge: bool = True,
    ):
        """X concentric arc lanes (radius measured at the road center)."""
        w = self.width
        ccw = sweep >= 0
        side = 1.0 if ccw else -1.0
        center = start.position + unit(start.heading + side * math.pi / 2).scaled(radius)
        a0 = (start.position - center).angle()
        end_nodes = []
        for i in range(lanes):
            off = ((lanes - 1) / 2.0 - i) * w
            r_i = radius - side * off
            geom = CircularArc(center, r_i, a0, sweep, w)
            p0 = center + unit(a0).scaled(r_i)
            p1 = center + unit(a0 + sweep).scaled(r_i)
            sn = (
                start_nodes[i]
                if start_nodes is not None and start_nodes[i] is not None
                else self.node(f"{group}.s{i}", p0)
            )
            en = self.node(f"{group}.e{i}", p1)
            self.lane(geom, sn, en, group, i, off, lanes)
            end_nodes.append(en)
        for j in range(lanes + 1):
            off = (lanes / 2.0 - j) * w
            edge = j == 0 or j == lanes
            if (j == 0 and not left_edge) or (j == lanes and not right_edge):
                continue
            chain = [CircularArc(center, radius - side * off, a0, sweep, w)]
            self.boundary(chain, "solid" if edge else inner, edge)
        end_pose = Pose(center + unit(a0 + sweep).scaled(radius), start.heading + sweep)
        return end_pose, end_nodes

    # -- finalize ------------------------------------------------------

    def finalize(self, anchor: Socket, index: int) -> Block:
        tag = f"b{index:03d}"
        place = anchor.pose

        def gname(local: str) -> str:
            return f"{tag}:{local}"

        referenced = {ln["start_node"] for ln in self.lanes}
        referenced.update(ln["end_node"] for ln in self.lanes)
        referenced.update(self.entry_nodes)
        for sk in self.sockets:
            referenced.update(sk["lane_nodes"])
        nodes = {gname(n): place.to_world(p) for n, p in self.nodes.items() if n in referenced}
        lanes = [
            Lane(
                id=f"{tag}:{ln['group']}:{ln['index']}",
                geom=ln["geom"].transformed(place),
                start_node=gname(ln["start_node"]),
                end_node=gname(ln["end_node"]),
                group=ln["group"],
                index=ln["index"],
                road_offset=ln["road_offset"],
                group_lanes=ln["group_lanes"],
                junction=ln.get("junction", False),
            )
            for ln in self.lanes
        ]
        boundaries = [
            Boundary(tuple(prim.transformed(place) for prim in b.chain), b.style, b.is_edge)
            for b in self.boundaries
        ]
        sockets = [
            Socket(
                id=f"{tag}.s0",
                pose=Pose(place.position, place.heading + math.pi),
                lanes=anchor.lanes,
                lane_nodes=tuple(gname(n) for n in self.entry_nodes),
            )
        ]
        for k, sk in enumerate(self.sockets, start=1):
            pose = Pose(place.to_world(sk["pose"].position), sk["pose"].heading + place.heading)
            sockets.append(
                Socket(
                    id=f"{tag}.s{k}",
                    pose=pose,
                    lanes=sk["lanes"],
                    lane_nodes=tuple(gname(n) for n in sk["lane_nodes"]),
                )
            )
        spawns = []
        for lane in lanes:
            count = int(lane.length // SPAWN_SPACING)
            for k in range(count):
                spawns.append(SpawnPoint(lane.id, 5.0 + SPAWN_SPACING * k))
        return Block(
            kind=self.kind,
            params=dict(self.params),
            index=index,
            origin=place,
            lanes=lanes,
            sockets=sockets,
            boundaries=boundaries,
            nodes=nodes,
            spawn_points=spawns,
        )


def _arc_between(center: Vec2, start_pt: Vec2, end_pt: Vec2, ccw: bool, width: float) -> CircularArc:
    """Arc about center from start_pt to end_pt in the given direction."""
    r = (start_pt - center).norm()
    a0 = (start_pt - center).angle()
    a1 = (end_pt - center).angle()
    if ccw:
        sweep = (a1 - a0) % TAU
    else:
        sweep = -((a0 - a1) % TAU)
    return CircularArc(center, r, a0, sweep, width)


# ---------------------------------------------------------------------------
# block type builders (local frame: entry at origin, road entering along +x)
# ---------------------------------------------------------------------------


def _build_straight(b: _Builder) -> None:
    lanes = int(b.params["lanes"])
    length = float(b.params["length"])
    inner = b.params.get("line_type", "broken")
    end_pose, end_nodes = b.straight_road("main", Pose(Vec2(0, 0), 0.0), length, lanes, inner=inner)
    b.entry_nodes = tuple(f"main.s{i}" for i in range(lanes))
    b.socket(end_pose, lanes, end_nodes)


def _build_curve(b: _Builder) -> None:
    lanes = int(b.params["lanes"])
    length = float(b.params["length"])
    radius = float(b.params["radius"])
    sweep = math.radians(float(b.params["angle"])) * float(b.params["direction"])
    pose, nodes = b.straight_road("approach", Pose(Vec2(0, 0), 0.0), length, lanes)
    b.entry_nodes = tuple(f"approach.s{i}" for i in range(lanes))
    pose, nodes = b.arc_road("bend", pose, radius, sweep, lanes, start_nodes=nodes)
    pose, nodes = b.straight_road("out", pose, SOCKET_STUB, lanes, start_nodes=nodes)
    b.socket(pose, lanes, nodes)


def _aux_lane_window(b: _Builder, lanes: int, length: float, window: tuple[float, float]):
    """Auxiliary lane attached right of the rightmost main lane."""
    w = b.width
    half = lanes * w / 2.0
    off_main_right = ((lanes - 1) / 2.0 - (lanes - 1)) * w  # rightmost lane center
    y_aux = off_main_right - w
    x0, x1 = window
    p0, p1 = Vec2(x0, y_aux), Vec2(x1, y_aux)
    sn = b.node("aux.s0", p0)
    en = b.node("aux.e0", p1)
    b.lane(StraightSegment(p0, p1, w), sn, en, "aux", 0, 0.0, 1)
    # Divider between main rightmost lane and the aux lane is crossable.
    b.boundary([StraightSegment(Vec2(x0, -half), Vec2(x1, -half), w)], "broken", False)
    # Outer edge: main edge pieces, tapers, and the aux window edge.
    y_out = -half - w
    taper = SOCKET_STUB
    b.boundary([StraightSegment(Vec2(0, -half), Vec2(x0 - taper, -half), w)], "solid", True)
    b.boundary([StraightSegment(Vec2(x0 - taper, -half), Vec2(x0, y_out), w)], "solid", True)
    b.boundary([StraightSegment(Vec2(x0, y_out), Vec2(x1, y_out), w)], "solid", True)
    b.boundary([StraightSegment(Vec2(x1, y_out), Vec2(x1 + taper, -half), w)], "solid", True)
    b.boundary([StraightSegment(Vec2(x1 + taper, -half), Vec2(length, -half), w)], "solid", True)
    return sn, en


def _build_ramp(b: _Builder) -> None:
    lanes = int(b.params["lanes"])
    length = float(b.params["length"])
    pose, nodes = b.straight_road("main", Pose(Vec2(0, 0), 0.0), length, lanes, right_edge=False)
    b.entry_nodes = tuple(f"main.s{i}" for i in range(lanes))
    b.socket(pose, lanes, nodes)
    window = (0.3 * length, 0.7 * length)
    _aux_lane_window(b, lanes, length, window)


def _build_fork(b: _Builder) -> None:
    lanes = int(b.params["lanes"])
    delta = int(b.params["delta"])
    length = float(b.params["length"])
    w = b.width
    out_lanes = max(1, min(4, lanes + delta))
    half_in = lanes * w / 2.0
    mid = length / 2.0
    if out_lanes == lanes:
        # Clamped to a plain straight.
        pose, nodes = b.straight_road("a", Pose(Vec2(0, 0), 0.0), length, lanes)
        b.entry_nodes = tuple(f"a.s{i}" for i in range(lanes))
        b.socket(pose, lanes, nodes)
        return
    if out_lanes > lanes:
        # Split: one lane appears on the right over the second half.
        pose, nodes = b.straight_road(
            "a", Pose(Vec2(0, 0), 0.0), mid, lanes, right_edge=False
        )
        start_b = Pose(Vec2(mid, -w / 2.0), 0.0)
        chain = list(nodes) + [None]
        pose, nodes_b = b.straight_road(
            "b", start_b, length - mid, out_lanes, start_nodes=chain, right_edge=False
        )
        b.entry_nodes = tuple(f"a.s{i}" for i in range(lanes))
        b.socket(pose, out_lanes, nodes_b)
        y_out = -half_in - w
        taper = SOCKET_STUB
        b.boundary([StraightSegment(Vec2(0, -half_in), Vec2(mid - taper, -half_in), w)], "solid", True)
        b.boundary([StraightSegment(Vec2(mid - taper, -half_in), Vec2(mid, y_out), w)], "solid", True)
        b.boundary([StraightSegment(Vec2(mid, y_out), Vec2(length, y_out), w)], "solid", True)
    else:
        # Merge: the rightmost lane dies at mid-block.
        pose_a, nodes_a = b.straight_road(
            "a", Pose(Vec2(0, 0), 0.0), mid, lanes, right_edge=False
        )
        start_b = Pose(Vec2(mid, w / 2.0), 0.0)
        chain = nodes_a[:out_lanes]
        pose, nodes_b = b.straight_road(
            "b", start_b, length - mid, out_lanes, start_nodes=chain, right_edge=False
        )
        b.entry_nodes = tuple(f"a.s{i}" for i in range(lanes))
        b.socket(pose, out_lanes, nodes_b)
        y_out = -half_in + w
        taper = SOCKET_STUB
        b.boundary([StraightSegment(Vec2(0, -half_in), Vec2(mid, -half_in), w)], "solid", True)
        b.boundary([StraightSegment(Vec2(mid, -half_in), Vec2(mid + taper, y_out), w)], "solid", True)
        b.boundary([StraightSegment(Vec2(mid + taper, y_out), Vec2(length, y_out), w)], "solid", True)


def _build_roundabout(b: _Builder) -> None:
    lanes = int(b.params["lanes"])
    radius = float(b.params["radius"])
    w = b.width
    half = lanes * w / 2.0
    r_f = _RB_FILLET
    socket_dist = radius + _RB_APPROACH + SOCKET_STUB
    center = Vec2(socket_dist, 0.0)
    delta = math.asin(r_f / (radius + r_f))
    eps = math.asin(half / (radius + half))
    t1_dist = (radius + r_f) * math.cos(delta)

    entry_angle = math.pi
    exit_angles = [-math.pi / 2.0, 0.0, math.pi / 2.0]  # S, E, N in travel order

    # Ring junction angles, one per port tangency, counter-clockwise.
    events = sorted(
        [(entry_angle + delta) % TAU] + [(g - delta) % TAU for g in exit_angles]
    )
    ring_nodes = []
    for k, ang in enumerate(events):
        names = []
        for i in range(lanes):
            off = ((lanes - 1) / 2.0 - i) * w
            p = center + unit(ang).scaled(radius - off)
            names.append(b.node(f"ring{k}.n{i}", p))
        ring_nodes.append(names)

    # Ring arc roads between consecutive junctions (counter-clockwise).
    for k in range(len(events)):
        a0 = events[k]
        a1 = events[(k + 1) % len(events)]
        sweep = (a1 - a0) % TAU
        start = Pose(center + unit(a0).scaled(radius), a0 + math.pi / 2.0)
        b.arc_road(
            f"ring{k}",
            start,
            radius,
            sweep,
            lanes,
            start_nodes=ring_nodes[k],
            left_edge=False,
            right_edge=False,
        )
        # arc_road created fresh end nodes; rebind lanes onto the shared ring
        # junction nodes instead.
        for ln in b.lanes[-lanes:]:
            ln["end_node"] = ring_nodes[(k + 1) % len(events)][ln["index"]]

    def port_walls(port_angle: float, inbound: bool, fillet_center: Vec2) -> None:
        """Solid walls of one port: right-side line+fillet, left-side line."""
        sock = center + unit(port_angle).scaled(socket_dist)
        inward = port_angle + math.pi
        travel = inward if inbound else port_angle
        right_dir = unit(travel - math.pi / 2.0)
        left_dir = unit(travel + math.pi / 2.0)
        # Right side: line from socket to the fillet foot, then fillet arc to
        # tangency with the outer circle.
        line_pt = sock + right_dir.scaled(half)
        rad_dir = unit(inward)
        foot = line_pt + rad_dir.scaled(
            (fillet_center - line_pt).dot(rad_dir)
        )
        q_outer = center + (fillet_center - center).scaled(
            (radius + half) / (radius + r_f)
        )
        b.boundary([StraightSegment(sock + right_dir.scaled(half), foot, w)], "solid", True)
        b.boundary(
            [_arc_between(fillet_center, foot, q_outer, ccw=not inbound, width=w)],
            "solid",
            True,
        )
        # Left side: straight wall from the socket to the outer circle.
        lp0 = sock + left_dir.scaled(half)
        sign = -1.0 if inbound else 1.0
        cross_angle = port_angle + sign * eps
        lp1 = center + unit(cross_angle).scaled(radius + half)
        b.boundary([StraightSegment(lp0, lp1, w)], "solid", True)

    # Entry port: approach road + one fillet per lane onto the ring.
    entry_fillet_center = center + unit(entry_angle + delta).scaled(radius + r_f)
    approach_len = socket_dist - t1_dist
    pose, nodes = b.straight_road(
        "in0",
        Pose(Vec2(0, 0), 0.0),
        approach_len,
        lanes,
        left_edge=False,
        right_edge=False,
    )
    b.entry_nodes = tuple(f"in0.s{i}" for i in range(lanes))
    entry_ring_idx = events.index((entry_angle + delta) % TAU)
    for i in range(lanes):
        off = ((lanes - 1) / 2.0 - i) * w
        p_start = b.nodes[nodes[i]]
        q = center + (entry_fillet_center - center).scaled(
            (radius - off) / (radius + r_f)
        )
        geom = _arc_between(entry_fillet_center, p_start, q, ccw=False, width=w)
        b.lane(geom, nodes[i], ring_nodes[entry_ring_idx][i], "fin0", i, off, lanes, junction=True)
    port_walls(entry_angle, inbound=True, fillet_center=entry_fillet_center)

    # Exit ports: fillet off the ring, then an outbound road to the socket.
    for k, gamma in enumerate(exit_angles, start=1):
        fillet_center = center + unit(gamma - delta).scaled(radius + r_f)
        ring_idx = events.index((gamma - delta) % TAU)
        out_start_center = center + unit(gamma).scaled(t1_dist)
        out_start = Pose(out_start_center, gamma)
        left = out_start.left()
        start_names = []
        for i in range(lanes):
            off = ((lanes - 1) / 2.0 - i) * w
            q = center + (fillet_center - center).scaled((radius - off) / (radius + r_f))
            p_end = out_start_center + left.scaled(off)
            name = b.node(f"fout{k}.e{i}", p_end)
            geom = _arc_between(fillet_center, q, p_end, ccw=False, width=w)
            b.lane(geom, ring_nodes[ring_idx][i], name, f"fout{k}", i, off, lanes, junction=True)
            start_names.append(name)
        pose, nodes_out = b.straight_road(
            f"out{k}",
            out_start,
            socket_dist - t1_dist,
            lanes,
            start_nodes=start_names,
            left_edge=False,
            right_edge=False,
        )
        b.socket(pose, lanes, nodes_out)
        port_walls(gamma, inbound=False, fillet_center=fillet_center)

    # Center island curb: a full circle wall.
    b.boundary(
        [CircularArc(center, radius - half, 0.0, TAU, w)], "solid", True
    )
    # Outer circle walls between port openings (entry opens [a-eps, a+delta],
    # exits open [g-delta, g+eps]).
    openings = [((entry_angle - eps) % TAU, (entry_angle + delta) % TAU)]
    for gamma in exit_angles:
        openings.append(((gamma - delta) % TAU, (gamma + eps) % TAU))
    openings.sort()
    for k in range(len(openings)):
        wall_from = openings[k][1]
        wall_to = openings[(k + 1) % len(openings)][0]
        sweep = (wall_to - wall_from) % TAU
        b.boundary(
            [CircularArc(center, radius + half, wall_from, sweep, w)], "solid", True
        )


def _junction_connectors(b: _Builder, lanes: int, h: float, in_nodes, movements) -> dict:
    """Quarter-circle connectors from the inbound arm through the box.

    The box is the square [arm, arm+2h] x [-h, h]; the inbound arm runs from
    the entry socket at the origin to the box's west edge. movements is a
    subset of {"straight", "left", "right"}; returns per movement the list of
    exit-side node names (lane index preserved).
    """
    w = b.width
    arm = _ARM_LEN
    cx = arm + h  # box center x
    out_nodes: dict[str, list[str]] = {m: [] for m in movements}
    for i in range(lanes):
        off = ((lanes - 1) / 2.0 - i) * w
        p_in = Vec2(arm, off)
        if "straight" in movements:
            p_out = Vec2(arm + 2 * h, off)
            en = b.node(f"mid_s.e{i}", p_out)
            b.lane(
                StraightSegment(p_in, p_out, w),
                in_nodes[i], en, "mid_s", i, off, lanes, junction=True,
            )
            out_nodes["straight"].append(en)
        if "left" in movements:
            ctr = Vec2(arm, h)
            geom = CircularArc(ctr, h - off, -math.pi / 2.0, math.pi / 2.0, w)
            p_out = Vec2(cx - off, h)
            en = b.node(f"mid_l.e{i}", p_out)
            b.lane(geom, in_nodes[i], en, "mid_l", i, off, lanes, junction=True)
            out_nodes["left"].append(en)
        if "right" in movements:
            ctr = Vec2(arm, -h)
            geom = CircularArc(ctr, h + off, math.pi / 2.0, -math.pi / 2.0, w)
            p_out = Vec2(cx + off, -h)
            en = b.node(f"mid_r.e{i}", p_out)
            b.lane(geom, in_nodes[i], en, "mid_r", i, off, lanes, junction=True)
            out_nodes["right"].append(en)
    return out_nodes


def _corner_curb(b: _Builder, corner: Vec2, p_from: Vec2, p_to: Vec2) -> None:
    b.boundary([_arc_between(corner, p_from, p_to, ccw=True, width=b.width)], "solid", True)


def _build_t_intersection(b: _Builder) -> None:
    lanes = int(b.params["lanes"])
    h = float(b.params["radius"])
    turn = int(b.params.get("turn", 1))
    w = b.width
    half = lanes * w / 2.0
    arm = _ARM_LEN
    cx = arm + h
    xr = arm + 2 * h

    _, in_nodes = b.straight_road(
        "in", Pose(Vec2(0, 0), 0.0), arm, lanes, left_edge=False, right_edge=False
    )
    b.entry_nodes = tuple(f"in.s{i}" for i in range(lanes))
    moves = {"straight", "left" if turn > 0 else "right"}
    outs = _junction_connectors(b, lanes, h, in_nodes, moves)

    pose_e, nodes_e = b.straight_road(
        "outE",
        Pose(Vec2(xr, 0), 0.0),
        arm,
        lanes,
        start_nodes=outs["straight"],
        left_edge=False,
        right_edge=False,
    )
    b.socket(pose_e, lanes, nodes_e)
    if turn > 0:
        pose_t, nodes_t = b.straight_road(
            "outN",
            Pose(Vec2(cx, h), math.pi / 2.0),
            arm,
            lanes,
            start_nodes=outs["left"],
            left_edge=False,
            right_edge=False,
        )
    else:
        pose_t, nodes_t = b.straight_road(
            "outS",
            Pose(Vec2(cx, -h), -math.pi / 2.0),
            arm,
            lanes,
            start_nodes=outs["right"],
            left_edge=False,
            right_edge=False,
        )
    b.socket(pose_t, lanes, nodes_t)

    y = 1.0 if turn > 0 else -1.0  # stem side
    # Flat edge along the bar on the stem-free side.
    b.boundary(
        [StraightSegment(Vec2(0, -y * half), Vec2(xr + arm, -y * half), w)],
        "solid",
        True,
    )
    # Stem-side edges with corner curbs.
    b.boundary(
        [StraightSegment(Vec2(0, y * half), Vec2(arm, y * half), w)], "solid", True
    )
    _corner_curb(
        b,
        Vec2(arm, y * h),
        Vec2(arm, y * half) if turn > 0 else Vec2(cx - half, y * h),
        Vec2(cx - half, y * h) if turn > 0 else Vec2(arm, y * half),
    )
    b.boundary(
        [StraightSegment(Vec2(cx - half, y * h), Vec2(cx - half, y * (h + arm)), w)],
        "solid",
        True,
    )
    b.boundary(
        [StraightSegment(Vec2(cx + half, y * (h + arm)), Vec2(cx + half, y * h), w)],
        "solid",
        True,
    )
    _corner_curb(
        b,
        Vec2(xr, y * h),
        Vec2(cx + half, y * h) if turn > 0 else Vec2(xr, y * half),
        Vec2(xr, y * half) if turn > 0 else Vec2(cx + half, y * h),
    )
    b.boundary(
        [StraightSegment(Vec2(xr, y * half), Vec2(xr + arm, y * half), w)], "solid", True
    )


def _build_intersection(b: _Builder) -> None:
    lanes = int(b.params["lanes"])
    h = float(b.params["radius"])
    w = b.width
    half = lanes * w / 2.0
    arm = _ARM_LEN
    cx = arm + h
    xr = arm + 2 * h

    _, in_nodes = b.straight_road(
        "in", Pose(Vec2(0, 0), 0.0), arm, lanes, left_edge=False, right_edge=False
    )
    b.entry_nodes = tuple(f"in.s{i}" for i in range(lanes))
    outs = _junction_connectors(b, lanes, h, in_nodes, {"straight", "left", "right"})

    pose, nodes = b.straight_road(
        "outE", Pose(Vec2(xr, 0), 0.0), arm, lanes,
        start_nodes=outs["straight"], left_edge=False, right_edge=False,
    )
    b.socket(pose, lanes, nodes)
    pose, nodes = b.straight_road(
        "outN", Pose(Vec2(cx, h), math.pi / 2.0), arm, lanes,
        start_nodes=outs["left"], left_edge=False, right_edge=False,
    )
    b.socket(pose, lanes, nodes)
    pose, nodes = b.straight_road(
        "outS", Pose(Vec2(cx, -h), -math.pi / 2.0), arm, lanes,
        start_nodes=outs["right"], left_edge=False, right_edge=False,
    )
    b.socket(pose, lanes, nodes)

    # Arm edges plus four corner curbs.
    b.boundary([StraightSegment(Vec2(0, half), Vec2(arm, half), w)], "solid", True)
    _corner_curb(b, Vec2(arm, h), Vec2(arm, half), Vec2(cx - half, h))
    b.boundary([StraightSegment(Vec2(cx - half, h), Vec2(cx - half, h + arm), w)], "solid", True)
    b.boundary([StraightSegment(Vec2(cx + half, h + arm), Vec2(cx + half, h), w)], "solid", True)
    _corner_curb(b, Vec2(xr, h), Vec2(cx + half, h), Vec2(xr, half))
    b.boundary([StraightSegment(Vec2(xr, half), Vec2(xr + arm, half), w)], "solid", True)
    b.boundary([StraightSegment(Vec2(xr + arm, -half), Vec2(xr, -half), w)], "solid", True)
    _corner_curb(b, Vec2(xr, -h), Vec2(xr, -half), Vec2(cx + half, -h))
    b.boundary([StraightSegment(Vec2(cx + half, -h), Vec2(cx + half, -(h + arm)), w)], "solid", True)
    b.boundary([StraightSegment(Vec2(cx - half, -(h + arm)), Vec2(cx - half, -h), w)], "solid", True)
    _corner_curb(b, Vec2(arm, -h), Vec2(cx - half, -h), Vec2(arm, -half))
    b.boundary([StraightSegment(Vec2(arm, -half), Vec2(0, -half), w)], "solid", True)


_BUILDERS = {
    BlockType.STRAIGHT: _build_straight,
    BlockType.CURVE: _build_curve,
    BlockType.RAMP: _build_ramp,
    BlockType.FORK: _build_fork,
    BlockType.ROUNDABOUT: _build_roundabout,
    BlockType.T_INTERSECTION: _build_t_intersection,
    BlockType.INTERSECTION: _build_intersection,
}


def instantiate(kind: BlockType, params: dict, anchor: Socket, index: int = 0) -> Block:
    """Build a block docked onto the anchor socket.

    The block's entry lane count must match the anchor (Fork adapts by
    construction; every other type raises).
    """
    lanes = int(params["lanes"])
    if lanes != anchor.lanes:
        if kind is BlockType.FORK:
            params = dict(params, lanes=anchor.lanes)
            feasible = [d for d in (1, -1) if 1 <= anchor.lanes + d <= 4]
            if int(params.get("delta", 0)) not in feasible:
                params["delta"] = feasible[0]
        else:
            raise LaneCountMismatchError(
                f"{kind.value} entry has {lanes} lanes, anchor {anchor.id} has {anchor.lanes}"
            )
    builder = _Builder(kind, params)
    _BUILDERS[kind](builder)
    return builder.finalize(anchor, index)


def free_sockets(blocks: list[Block], dockings: list[dict]) -> list[Socket]:
    """Sockets with nothing docked, in (block, socket) order.

    The first block's entry is consumed by the episode origin and never
    counts as free.
    """
    used = {(d["from_block"], d["from_socket"]) for d in dockings}
    out = []
    for blk in blocks:
        for k, sock in enumerate(blk.sockets):
            if k == 0:
                continue
            if (blk.index, k) not in used:
                out.append(sock)
    return out
