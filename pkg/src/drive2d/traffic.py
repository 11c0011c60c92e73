"""Traffic: density-based allocation, IDM car following, gap-checked lane
changes, and A* routing over the lane graph.

Vehicles advance in lane (Frenet) coordinates. A lane change moves the
vehicle to the target lane immediately for bookkeeping, while its drawn
position eases from the old centerline to the new one over a fixed blend
time, so rendered motion and lidar returns stay smooth.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field

import numpy as np

from . import rng as rngmod
from .geometry import (
    Pose,
    Vec2,
    frenet_project,
    lane_curvature,
    lane_heading_at,
    lane_point_at,
)
from .pgmap import RoadNetwork

IDM_DELTA = 4.0
LANE_CHANGE_TIME = 1.5  # s
LANE_CHANGE_GAIN = 0.2  # m/s^2 incentive threshold
DEAD_END_URGENCY = 40.0  # m; forced-merge window before a lane dies
LOOKAHEAD = 80.0  # m; how far ahead a leader is searched
SPEED_CAP = 120.0 / 3.6
CONFLICT_CLEARANCE = 3.4  # m; centerline proximity that marks crossing movements
CONFLICT_ZONE = 4.0  # m; radius around the crossing treated as contested
TTC_HORIZON = 4.5  # s; a body this close in time to a crossing blocks entry
YIELD_WINDOW = 35.0  # m; distance before a guarded entry at which yielding starts
MERGE_WINDOW = 12.0  # m; contested zone around a shared entry node
STOP_MARGIN = 3.0  # m; gap held back from a guarded entry
CHANGE_LOCKOUT = 15.0  # m; no lane hopping right before a junction entry
FORK_CLEAR = 8.0  # m; how far past a fork a diverging body still blocks it
STALL_RELEASE = 8.0  # s; a vehicle held this long by parked bodies creeps on
NODE_APRON = 8.0  # m around a shared node where proximity is expected


class UnreachableError(ValueError):
    """No path between the requested nodes."""


class InsufficientSpawnPointsError(RuntimeError):
    """Density asks for more vehicles than the map has spawn points."""


@dataclass(frozen=True)
class IDMParams:
    v0: float
    t_headway: float
    s0: float
    a_max: float
    b: float
    delta: float = IDM_DELTA


def conservative_idm(speed_limit: float) -> IDMParams:
    return IDMParams(v0=0.75 * speed_limit, t_headway=2.0, s0=3.0, a_max=1.5, b=1.67)


def aggressive_idm(speed_limit: float) -> IDMParams:
    return IDMParams(v0=1.0 * speed_limit, t_headway=1.0, s0=2.0, a_max=2.5, b=2.5)


@dataclass(frozen=True)
class TrafficConfig:
    density: float = 0.1  # vehicles per lane per 10 m
    aggressive_fraction: float = 0.5
    speed_limit_range: tuple[float, float] = (10.0, 15.0)  # m/s

    def __post_init__(self):
        if not 0.0 <= self.density <= 1.0:
            raise ValueError(f"density must be in [0, 1], got {self.density}")
        if not 0.0 <= self.aggressive_fraction <= 1.0:
            raise ValueError("aggressive_fraction must be in [0, 1]")


def idm_accel(v: float, v_lead: float, gap: float, p: IDMParams) -> float:
    """Car-following acceleration; emergency-clamped at -2b.

    A nonpositive gap means the follower has closed onto its leader and
    returns the clamp value directly.
    """
    if gap <= 0.0:
        return -2.0 * p.b
    dv = v - v_lead
    s_star = p.s0 + v * p.t_headway + v * dv / (2.0 * math.sqrt(p.a_max * p.b))
    a = p.a_max * (1.0 - (v / p.v0) ** p.delta - (s_star / gap) ** 2)
    return max(a, -2.0 * p.b)


# ---------------------------------------------------------------------------
# routing
# ---------------------------------------------------------------------------


def route(net: RoadNetwork, src: str, dst: str) -> tuple[list[str], list[str]]:
    """A* over the lane graph; returns (node path, lane ids per hop).

    Cost is lane length, the heuristic is straight-line distance (admissible
    since every lane is at least as long as its chord), and ties break on
    node id so equal-length alternatives resolve deterministically.
    """
    src = net.resolve(src)
    dst = net.resolve(dst)
    if src == dst:
        return [src], []
    graph = net.graph()
    goal = net.node_position(dst)

    def h(node: str) -> float:
        return net.node_position(node).dist(goal)

    g_score: dict[str, float] = {src: 0.0}
    came: dict[str, tuple[str, str]] = {}
    heap: list[tuple[float, str]] = [(h(src), src)]
    closed: set[str] = set()
    while heap:
        f, node = heapq.heappop(heap)
        if node in closed:
            continue
        if node == dst:
            nodes = [node]
            lanes: list[str] = []
            while nodes[-1] in came:
                prev, lane_id = came[nodes[-1]]
                nodes.append(prev)
                lanes.append(lane_id)
            return nodes[::-1], lanes[::-1]
        closed.add(node)
        for lane in graph.get(node, ()):  # sorted by lane id already
            nxt = net.resolve(lane.end_node)
            cand = g_score[node] + lane.length
            if cand < g_score.get(nxt, math.inf) - 1e-12:
                g_score[nxt] = cand
                came[nxt] = (node, lane.id)
                heapq.heappush(heap, (cand + h(nxt), nxt))
    raise UnreachableError(f"no path from {src} to {dst}")


def route_length(net: RoadNetwork, lanes: list[str]) -> float:
    return sum(net.lane(lid).length for lid in lanes)


def _reachable_nodes(net: RoadNetwork, start: str) -> set[str]:
    graph = net.graph()
    seen = {net.resolve(start)}
    stack = [net.resolve(start)]
    while stack:
        node = stack.pop()
        for lane in graph.get(node, ()):
            nxt = net.resolve(lane.end_node)
            if nxt not in seen:
                seen.add(nxt)
                stack.append(nxt)
    return seen


# ---------------------------------------------------------------------------
# vehicles
# ---------------------------------------------------------------------------


@dataclass
class TrafficVehicle:
    uid: int
    lane_id: str
    s: float
    speed: float
    idm: IDMParams
    behavior: str
    dest_node: str | None
    lane_plan: list[str] = field(default_factory=list)
    length: float = 4.5
    width: float = 2.0
    blend_offset: float = 0.0
    blend_t: float = LANE_CHANGE_TIME
    emergency: bool = False
    hold_time: float = 0.0

    @property
    def half_length(self) -> float:
        return self.length / 2.0

    def lateral_offset(self) -> float:
        if self.blend_t >= LANE_CHANGE_TIME:
            return 0.0
        u = self.blend_t / LANE_CHANGE_TIME
        ease = u * u * (3.0 - 2.0 * u)
        return self.blend_offset * (1.0 - ease)

    def pose(self, net: RoadNetwork) -> Pose:
        lane = net.lane(self.lane_id)
        s = min(self.s, lane.length)
        pos = lane_point_at(lane.geom, s, self.lateral_offset())
        return Pose(pos, lane_heading_at(lane.geom, s))


@dataclass(frozen=True)
class _Occupant:
    s: float
    speed: float
    half_length: float
    uid: int  # traffic uid, or -1 for an external body such as the target


class TrafficManager:
    """Owns all traffic vehicles on one network; stepped by the environment."""

    def __init__(
        self,
        net: RoadNetwork,
        cfg: TrafficConfig,
        rng: np.random.Generator,
        exclude: tuple = (),
    ):
        self.net = net
        self.cfg = cfg
        self.rng = rng
        self.exclude = tuple(exclude)
        self._dest_pool = self._destination_nodes()
        self._preds: dict[str, list] = {}
        for lane in net.lanes():
            self._preds.setdefault(net.resolve(lane.end_node), []).append(lane)
        self._conflicts = self._build_conflicts()
        self._externals: tuple = ()
        self.vehicles: list[TrafficVehicle] = []
        self._allocate()

    # -- setup ------------------------------------------------------------

    def _destination_nodes(self) -> list[str]:
        nodes = []
        for sock in self.net.free_sockets():
            nodes.extend(self.net.resolve(n) for n in sock.lane_nodes)
        return sorted(set(nodes))

    def expected_count(self) -> int:
        return int(self.cfg.density * self.net.total_lane_length / 10.0)

    def _spawn_pool(self):
        """Spawn points outside junction boxes and excluded zones."""
        return [
            pt
            for pt in self.net.spawn_points()
            if not self.net.lane(pt.lane_id).junction
            and not any(
                pt.lane_id == lane and abs(pt.s - s) < radius
                for lane, s, radius in self.exclude
            )
        ]

    def _build_conflicts(self) -> dict[str, dict[str, tuple[float, float]]]:
        """Map lane id -> rival lane id -> (lo, hi) s-interval on the rival
        where the two centerlines pass within the crossing zone.

        Only pairs involving a junction lane count. Proximity right around
        a diverging fan or a seam handoff node is the lanes meeting by
        design, ordered by the leader scans, so it is blanked out; genuine
        crossings elsewhere (a left turn over the opposing straight, a tight
        loop closing on itself) survive. Two lanes converging on a shared
        end node keep the full interval: their streams interleave all the
        way in and need the same distance-ordered yielding as a crossing.
        The zone bounds let the yield trigger only while a body is in or
        about to reach the crossing, not anywhere on a long rival lane.
        """
        step = 0.5
        pairs: dict[str, dict[str, tuple[float, float]]] = {}
        for block in self.net.blocks:
            if not any(ln.junction for ln in block.lanes):
                continue
            svals = {
                ln.id: np.linspace(0.0, ln.length, max(int(ln.length / step), 2))
                for ln in block.lanes
            }
            pts = {
                ln.id: np.array(
                    [
                        (p.x, p.y)
                        for s in svals[ln.id]
                        for p in (lane_point_at(ln.geom, float(s)),)
                    ]
                )
                for ln in block.lanes
            }
            for i, a in enumerate(block.lanes):
                ends_a = {
                    self.net.resolve(a.start_node),
                    self.net.resolve(a.end_node),
                }
                for b in block.lanes[i + 1 :]:
                    if not (a.junction or b.junction):
                        continue
                    ends_b = {
                        self.net.resolve(b.start_node),
                        self.net.resolve(b.end_node),
                    }
                    d2 = ((pts[a.id][:, None, :] - pts[b.id][None, :, :]) ** 2).sum(
                        axis=2
                    )
                    # proximity right around a shared seam or fan node is just
                    # the two lanes meeting as designed; blank it out so only
                    # genuine mid-lane crossings remain (a tight loop can both
                    # share a node and cross elsewhere). A shared end node is
                    # different: two streams converging there must be ordered
                    # all the way in, so the zone keeps the node neighborhood.
                    for node in ends_a & ends_b:
                        if (
                            self.net.resolve(a.end_node) == node
                            and self.net.resolve(b.end_node) == node
                        ):
                            continue
                        for ln in (a, b):
                            for nd, send in (
                                (ln.start_node, 0.0),
                                (ln.end_node, ln.length),
                            ):
                                if self.net.resolve(nd) != node:
                                    continue
                                p = lane_point_at(ln.geom, send)
                                da = np.hypot(
                                    pts[a.id][:, 0] - p.x, pts[a.id][:, 1] - p.y
                                )
                                db = np.hypot(
                                    pts[b.id][:, 0] - p.x, pts[b.id][:, 1] - p.y
                                )
                                d2[np.ix_(da < NODE_APRON, db < NODE_APRON)] = (
                                    math.inf
                                )
                    if math.sqrt(float(d2.min())) >= CONFLICT_CLEARANCE:
                        continue
                    near = d2 < CONFLICT_ZONE**2
                    on_a = svals[a.id][near.any(axis=1)]
                    on_b = svals[b.id][near.any(axis=0)]
                    pairs.setdefault(a.id, {})[b.id] = (
                        float(on_b.min()),
                        float(on_b.max()),
                    )
                    pairs.setdefault(b.id, {})[a.id] = (
                        float(on_a.min()),
                        float(on_a.max()),
                    )
        return pairs

    def _allocate(self) -> None:
        count = self.expected_count()
        if count == 0:
            return
        points = self._spawn_pool()
        if count > len(points):
            raise InsufficientSpawnPointsError(
                f"need {count} spawn points, map offers {len(points)}"
            )
        order = self.rng.permutation(len(points))
        for uid in range(count):
            pt = points[int(order[uid])]
            limit = rngmod.rand_uniform(self.rng, *self.cfg.speed_limit_range)
            aggressive = (
                rngmod.rand_uniform(self.rng, 0.0, 1.0) < self.cfg.aggressive_fraction
            )
            idm = aggressive_idm(limit) if aggressive else conservative_idm(limit)
            veh = TrafficVehicle(
                uid=uid,
                lane_id=pt.lane_id,
                s=pt.s,
                speed=0.0,
                idm=idm,
                behavior="aggressive" if aggressive else "conservative",
                dest_node=None,
            )
            self._assign_route(veh)
            self.vehicles.append(veh)

    def _assign_route(self, veh: TrafficVehicle) -> None:
        lane = self.net.lane(veh.lane_id)
        start = self.net.resolve(lane.end_node)
        reachable = _reachable_nodes(self.net, start)
        options = [n for n in self._dest_pool if n in reachable]
        if not options:
            # stranded on a dying lane: no destination, merge out when possible
            veh.dest_node = None
            veh.lane_plan = []
            return
        dest = rngmod.rand_choice(self.rng, options)
        _, lanes = route(self.net, start, dest)
        veh.dest_node = dest
        veh.lane_plan = lanes

    # -- per-step bookkeeping ----------------------------------------------

    def _occupancy(self, externals) -> dict[str, list[_Occupant]]:
        occ: dict[str, list[_Occupant]] = {}
        for v in self.vehicles:
            occ.setdefault(v.lane_id, []).append(
                _Occupant(v.s, v.speed, v.half_length, v.uid)
            )
        for lane_id, s, speed, half_len in externals:
            if lane_id is not None:
                occ.setdefault(lane_id, []).append(_Occupant(s, speed, half_len, -1))
        for entries in occ.values():
            entries.sort(key=lambda o: o.s)
        return occ

    def _sole_successor(self, lane_id: str) -> str | None:
        lane = self.net.lane(lane_id)
        options = self.net.graph().get(self.net.resolve(lane.end_node), [])
        return options[0].id if len(options) == 1 else None

    def _scan_front(self, lane_id, s, half_len, uid, occ, plan=()) -> tuple[float, float]:
        """(gap, speed) of the nearest body ahead, walking into following
        lanes (preferring the given plan) up to the lookahead horizon."""
        lane = self.net.lane(lane_id)
        ahead = [o for o in occ.get(lane_id, ()) if o.s > s and o.uid != uid]
        if ahead:
            lead = ahead[0]
            return lead.s - s - lead.half_length - half_len, lead.speed
        dist = lane.length - s
        cur = lane_id
        plan = list(plan)
        best = (math.inf, 0.0)
        while dist <= LOOKAHEAD:
            options = self.net.graph().get(
                self.net.resolve(self.net.lane(cur).end_node), []
            )
            if plan:
                nxt = plan.pop(0)
            elif options:
                nxt = options[0].id
            else:
                break
            # a body just past the fork on a diverging branch still overlaps
            # the shared mouth; respect it until it has pulled clear
            for sib in options:
                if sib.id == nxt:
                    continue
                sib_occ = occ.get(sib.id, ())
                if sib_occ and sib_occ[0].s < FORK_CLEAR:
                    o = sib_occ[0]
                    g = dist + o.s - half_len - o.half_length
                    if g < best[0]:
                        best = (g, o.speed)
            entries = occ.get(nxt, ())
            if entries:
                lead = entries[0]
                g = dist + lead.s - half_len - lead.half_length
                if g < best[0]:
                    best = (g, lead.speed)
                return best
            dist += self.net.lane(nxt).length
            cur = nxt
        return best

    def _scan_rear(self, lane_id, s, half_len, uid, occ) -> tuple[float, float]:
        """(gap, speed) of the nearest body behind, walking into predecessor
        lanes so a changer cannot cut in just past a block seam."""
        behind = [o for o in occ.get(lane_id, ()) if o.s <= s and o.uid != uid]
        if behind:
            rear = behind[-1]
            return s - rear.s - rear.half_length - half_len, rear.speed
        best_gap, best_v = math.inf, 0.0
        stack = [(lane_id, s)]
        visited = {lane_id}
        while stack:
            lid, dist = stack.pop()
            if dist > LOOKAHEAD:
                continue
            start = self.net.resolve(self.net.lane(lid).start_node)
            for pred in self._preds.get(start, ()):
                if pred.id in visited:
                    continue
                visited.add(pred.id)
                entries = occ.get(pred.id, ())
                if entries:
                    rear = entries[-1]
                    g = dist + (pred.length - rear.s) - half_len - rear.half_length
                    if g < best_gap:
                        best_gap, best_v = g, rear.speed
                else:
                    stack.append((pred.id, dist + pred.length))
        return best_gap, best_v

    def _leader(self, veh: TrafficVehicle, occ) -> tuple[float, float]:
        """(gap, leader speed) ahead along the plan, or a virtual stopped
        leader at a dead end; (inf, 0) when the road is clear."""
        gap, v_lead = self._scan_front(
            veh.lane_id, veh.s, veh.half_length, veh.uid, occ, veh.lane_plan
        )
        if math.isinf(gap) and self._is_dead_end(veh):
            lane = self.net.lane(veh.lane_id)
            return lane.length - veh.s - veh.half_length, 0.0
        return gap, v_lead

    def _is_dead_end(self, veh: TrafficVehicle) -> bool:
        if veh.lane_plan:
            return False
        lane = self.net.lane(veh.lane_id)
        end = self.net.resolve(lane.end_node)
        if veh.dest_node is not None and end == veh.dest_node:
            return False
        return not self.net.graph().get(end, [])

    def _next_lane(self, veh: TrafficVehicle) -> str | None:
        """The lane the vehicle will actually take at its current lane's end,
        mirroring the branch choice in _advance_lane."""
        if veh.lane_plan:
            return veh.lane_plan[0]
        lane = self.net.lane(veh.lane_id)
        end = self.net.resolve(lane.end_node)
        if veh.dest_node is not None and end == veh.dest_node:
            return None
        options = self.net.graph().get(end, [])
        return options[0].id if options else None

    def _approach_zones(
        self, lane_id: str, s: float, plan, dest_node: str | None = None
    ) -> list[tuple[float, str, str]]:
        """(distance, lane id, rival lane id) for every crossing zone ahead
        on the path within the yield window, nearest first.

        Distance is measured to the zone's near edge, so a vehicle already
        deep on a long lane is still caught before a crossing far down it;
        zones the vehicle is already inside are omitted (committed)."""
        out: list[tuple[float, str, str]] = []
        offset = -s
        cur = lane_id
        plan = list(plan)
        while True:
            for rival in self._conflicts.get(cur, {}):
                lo, _hi = self._conflicts[rival][cur]
                d = offset + lo
                if 0.0 < d <= YIELD_WINDOW:
                    out.append((d, cur, rival))
            offset += self.net.lane(cur).length
            if offset > YIELD_WINDOW:
                break
            if plan:
                cur = plan.pop(0)
                continue
            end = self.net.resolve(self.net.lane(cur).end_node)
            if dest_node is not None and end == dest_node:
                break
            options = self.net.graph().get(end, [])
            if not options:
                break
            cur = options[0].id
        out.sort()
        return out

    def _veh_zones(self, veh: TrafficVehicle) -> list[tuple[float, str, str]]:
        return self._approach_zones(
            veh.lane_id, veh.s, veh.lane_plan, veh.dest_node
        )

    def _zones_on(self, lane_id: str) -> list[tuple[float, float]]:
        """Crossing-zone s-intervals lying on the given lane."""
        zones = []
        for rival in self._conflicts.get(lane_id, {}):
            z = self._conflicts.get(rival, {}).get(lane_id)
            if z is not None:
                zones.append(z)
        return zones

    def _zone_threatened(
        self, rival_id: str, lo: float, hi: float, occ, uid: int | None = None
    ) -> tuple[bool, bool]:
        """(threatened, by a moving body) for the [lo, hi] stretch of the
        rival lane: a body inside it, or close enough in time to reach it,
        makes the crossing unsafe."""
        threat, moving = False, False
        for o in occ.get(rival_id, ()):
            if o.uid == uid or o.s > hi + 1.0:
                continue
            if o.s >= lo - 1.0 or lo - o.s < o.speed * TTC_HORIZON + 2.0:
                threat = True
                moving = moving or o.speed > 0.3
        start = self.net.resolve(self.net.lane(rival_id).start_node)
        for pred in self._preds.get(start, ()):
            for o in occ.get(pred.id, ()):
                if o.uid == uid:
                    continue
                if (pred.length - o.s) + lo < o.speed * TTC_HORIZON + 2.0:
                    threat = True
                    moving = moving or o.speed > 0.3
        return threat, moving

    def _zone_occupied(self, rival_id, lo, hi, occ, uid) -> bool:
        """A body is physically inside the [lo, hi] stretch of the rival."""
        return any(
            o.uid != uid and lo - 1.0 <= o.s <= hi + 1.0
            for o in occ.get(rival_id, ())
        )

    def _sweep_blocked(self, veh, target_id, land_s, bodies) -> bool:
        """A body sits in, or will close on, the corridor the vehicle sweeps
        while blending over to the target lane.

        Frenet gap checks on the two lanes cannot see a body that is between
        lanes mid-blend, braking hard on a third lane, or parked askew, so
        the commit does one physical pass: anything inside the swept strip,
        longitudinally within the distance the speed difference closes over
        a blend, vetoes the change. The leader being overtaken counts too:
        it may brake mid-blend, and the diagonal cut leaves no margin."""
        me = veh.pose(self.net)
        hx, hy = math.cos(me.heading), math.sin(me.heading)
        land = lane_point_at(self.net.lane(target_id).geom, land_s)
        lat_t = (land.x - me.position.x) * -hy + (land.y - me.position.y) * hx
        lat_lo = min(0.0, lat_t) - 2.8
        lat_hi = max(0.0, lat_t) + 2.8
        kappa = lane_curvature(self.net.lane(veh.lane_id).geom)
        for uid, bx, by, speed in bodies:
            if uid == veh.uid:
                continue
            dx = bx - me.position.x
            dy = by - me.position.y
            lon = dx * hx + dy * hy
            # measure laterals against the road arc, not the straight
            # tangent, or bodies ahead on a bend drift out of the strip
            lat = dx * -hy + dy * hx - 0.5 * kappa * lon * lon
            ahead = 5.5 + LANE_CHANGE_TIME * max(veh.speed - speed, 0.0)
            behind = 5.5 + LANE_CHANGE_TIME * max(speed - veh.speed, 0.0)
            if -behind <= lon <= ahead and lat_lo <= lat <= lat_hi:
                return True
        return False

    def _merge_hold(self, lane_id, s, next_lane, uid, occ) -> float | None:
        """Stop gap before a shared entry node when a higher-priority body
        (closer to the node, then lower uid) approaches on a sibling lane."""
        lane = self.net.lane(lane_id)
        remaining = lane.length - s
        if remaining > MERGE_WINDOW:
            return None
        node = self.net.resolve(self.net.lane(next_lane).start_node)
        for pred in self._preds.get(node, ()):
            if pred.id == lane_id:
                continue
            for o in occ.get(pred.id, ()):
                o_rem = pred.length - o.s
                if o_rem <= MERGE_WINDOW and (o_rem, o.uid) < (remaining, uid):
                    return remaining - STOP_MARGIN
        return None

    def _junction_guards(self, occ) -> dict[int, float]:
        """Virtual stopped-leader gaps, keyed by uid, for vehicles that must
        wait before a guarded junction entry or a contested merge node.

        A vehicle on a junction lane is committed and never holds; clearing
        the box beats stopping inside it. Among vehicles approaching
        crossing movements, the one closest to its entry proceeds and the
        rest wait, so the ordering is total and cannot deadlock.
        """
        guards: dict[int, float] = {}
        entries = []
        for veh in self.vehicles:
            nxt = self._next_lane(veh)
            if nxt is not None:
                merge = self._merge_hold(veh.lane_id, veh.s, nxt, veh.uid, occ)
                if merge is not None:
                    guards[veh.uid] = merge
            for d, lid, rival in self._veh_zones(veh):
                entries.append((d, veh.uid, veh, lid, rival))
        entries.sort(key=lambda t: (t[0], t[1]))
        for rank, (d, uid, veh, lid, rival) in enumerate(entries):
            lo, hi = self._conflicts[lid][rival]
            # Past the point of no return a hold would strand the vehicle
            # inside the crossing; let it clear (others still rank behind it),
            # unless a body already sits in the box, where a hard stop short
            # of it beats driving in.
            if d - STOP_MARGIN < veh.speed**2 / (5.0 * veh.idm.b):
                if not self._zone_occupied(rival, lo, hi, occ, uid):
                    continue
                g = d - STOP_MARGIN
                if uid not in guards or g < guards[uid]:
                    guards[uid] = g
                continue
            hold, moving = self._zone_threatened(rival, lo, hi, occ, uid)
            if (
                hold
                and veh.hold_time > STALL_RELEASE
                and not moving
                and not self._zone_occupied(rival, lo, hi, occ, uid)
            ):
                # everyone involved is parked short of the box; creep through
                # rather than gridlock, the leader scans still cover stopped
                # bodies (a body parked inside the box stays a hard blocker)
                hold = False
            if not hold:
                pair = frozenset((lid, rival))
                hold = any(
                    frozenset((l2, r2)) == pair
                    for _, uid2, _, l2, r2 in entries[:rank]
                    if uid2 != uid
                )
            if hold:
                g = d - STOP_MARGIN
                if uid not in guards or g < guards[uid]:
                    guards[uid] = g
        return guards

    def junction_hold(self, lane_id, s, plan) -> float | None:
        """Stop gap for an outside driver on lane_id at s with the given
        upcoming lanes, or None when the way is clear.

        Mirrors the managed vehicles' yielding so a driver using it meshes
        with traffic: wait while a crossing zone ahead is occupied or
        imminently reached by a body, or while a managed vehicle is nearer
        to the same crossing, and give way at shared merge nodes. Uid -1
        wins ties, so the caller has priority over a managed vehicle at
        exactly equal distance.
        """
        plan = [lid for lid in plan if lid is not None]
        occ = self._occupancy(())
        holds = []
        if plan:
            merge = self._merge_hold(lane_id, s, plan[0], -1, occ)
            if merge is not None:
                holds.append(merge)
        for d, lid, rival in self._approach_zones(lane_id, s, plan):
            lo, hi = self._conflicts[lid][rival]
            hold, _moving = self._zone_threatened(rival, lo, hi, occ)
            if not hold:
                pair = frozenset((lid, rival))
                for veh in self.vehicles:
                    for d2, l2, r2 in self._veh_zones(veh):
                        if frozenset((l2, r2)) == pair and (d2, veh.uid) < (d, -1):
                            hold = True
                            break
                    if hold:
                        break
            if hold:
                holds.append(d - STOP_MARGIN)
                break
        return min(holds) if holds else None

    def _lane_change_decision(
        self,
        veh: TrafficVehicle,
        occ,
        a_here: float,
        gap_here: float,
        v_lead_here: float,
    ) -> str | None:
        """Return the target lane id, or None to stay."""
        if veh.blend_t < LANE_CHANGE_TIME:
            return None
        lane = self.net.lane(veh.lane_id)
        if lane.junction:
            return None
        forced = (
            self._is_dead_end(veh)
            and lane.length - veh.s < DEAD_END_URGENCY
        )
        if not forced:
            zones = self._veh_zones(veh)
            if zones and zones[0][0] < CHANGE_LOCKOUT:
                return None
            # the body sweeps diagonally for the whole blend; keep clear of
            # the old lane fore and aft before pulling out
            closure = max(veh.speed - v_lead_here, 0.0)
            if gap_here <= closure * 0.75 + 1.0:
                return None
            rear_here, rear_here_v = self._scan_rear(
                veh.lane_id, veh.s, veh.half_length, veh.uid, occ
            )
            margin = (rear_here_v - veh.speed) * LANE_CHANGE_TIME + 1.0
            if rear_here <= max(margin, 1.0):
                return None
        neighbors = self.net.lane_neighbors(veh.lane_id)
        best: tuple[float, str] | None = None
        for side in ("left", "right"):
            target_id = neighbors.get(side)
            if target_id is None:
                continue
            target = self.net.lane(target_id)
            if target.junction:
                continue
            pos = lane_point_at(lane.geom, veh.s)
            fr = frenet_project(target.geom, pos)
            if not 0.5 < fr.s < target.length - 0.5:
                continue
            # never land in or just before a crossing zone; the entry guard
            # cannot see a body that appears there mid-blend
            if any(
                lo - CHANGE_LOCKOUT < fr.s < hi + 5.0
                for lo, hi in self._zones_on(target_id)
            ):
                continue
            front_gap, front_v = self._scan_front(
                target_id, fr.s, veh.half_length, veh.uid, occ
            )
            rear_gap, rear_v = self._scan_rear(
                target_id, fr.s, veh.half_length, veh.uid, occ
            )
            if front_gap <= veh.idm.s0 + veh.speed * veh.idm.t_headway:
                continue
            if rear_gap <= veh.idm.s0 + rear_v * veh.idm.t_headway:
                continue
            a_there = idm_accel(veh.speed, front_v, min(front_gap, 1e9), veh.idm)
            gain = a_there - a_here
            if forced or gain >= LANE_CHANGE_GAIN:
                score = math.inf if forced else gain
                if best is None or score > best[0]:
                    best = (score, target_id)
        return best[1] if best else None

    # -- stepping ----------------------------------------------------------

    def step(self, dt: float = 0.1, externals=()) -> None:
        self._externals = tuple(externals)
        occ = self._occupancy(externals)
        guards = self._junction_guards(occ)
        accels: list[float] = []
        changes: list[str | None] = []
        for veh in self.vehicles:
            gap, v_lead = self._leader(veh, occ)
            veh.emergency = gap <= 0.0
            if math.isinf(gap):
                a = idm_accel(veh.speed, 0.0, 1e9, veh.idm)
            else:
                a = idm_accel(veh.speed, v_lead, gap, veh.idm)
            changes.append(self._lane_change_decision(veh, occ, a, gap, v_lead))
            hold = guards.get(veh.uid)
            if hold is not None and hold < gap:
                a = idm_accel(veh.speed, 0.0, hold, veh.idm)
            if hold is not None and veh.speed < 0.3:
                veh.hold_time += dt
            else:
                veh.hold_time = 0.0
            accels.append(a)
        landed: list[tuple[str, float]] = []
        bodies: list[tuple[int, float, float, float]] | None = None
        for veh, a, target in zip(self.vehicles, accels, changes):
            if target is not None:
                if bodies is None:
                    bodies = [
                        (v.uid, p.position.x, p.position.y, v.speed)
                        for v in self.vehicles
                        for p in (v.pose(self.net),)
                    ]
                    for lane_id, es, espeed, _hl in externals:
                        if lane_id is None:
                            continue
                        geom = self.net.lane(lane_id).geom
                        ep = lane_point_at(geom, es)
                        bodies.append((-1, ep.x, ep.y, espeed))
                # decisions were made from the same snapshot; drop a change
                # that would land on top of one committed earlier this tick
                pos = lane_point_at(self.net.lane(veh.lane_id).geom, veh.s)
                fr = frenet_project(self.net.lane(target).geom, pos)
                crowded = any(
                    lid == target and abs(s - fr.s) < 4.0 * veh.half_length
                    for lid, s in landed
                )
                if not crowded and not self._sweep_blocked(veh, target, fr.s, bodies):
                    landed.append((target, fr.s))
                    self._begin_lane_change(veh, target)
            veh.speed = min(max(veh.speed + a * dt, 0.0), SPEED_CAP)
            veh.s += veh.speed * dt
            veh.blend_t = min(veh.blend_t + dt, LANE_CHANGE_TIME)
            self._advance_lane(veh)

    def _begin_lane_change(self, veh: TrafficVehicle, target_id: str) -> None:
        lane = self.net.lane(veh.lane_id)
        target = self.net.lane(target_id)
        pos = lane_point_at(lane.geom, veh.s)
        fr = frenet_project(target.geom, pos)
        veh.lane_id = target_id
        veh.s = fr.s
        veh.blend_offset = fr.d
        veh.blend_t = 0.0
        self._replan_from(veh)

    def _replan_from(self, veh: TrafficVehicle) -> None:
        lane = self.net.lane(veh.lane_id)
        start = self.net.resolve(lane.end_node)
        if veh.dest_node is not None:
            try:
                _, lanes = route(self.net, start, veh.dest_node)
                veh.lane_plan = lanes
                return
            except UnreachableError:
                pass
        self._assign_route(veh)

    def _advance_lane(self, veh: TrafficVehicle) -> None:
        lane = self.net.lane(veh.lane_id)
        while veh.s >= lane.length:
            end = self.net.resolve(lane.end_node)
            if veh.lane_plan:
                veh.s -= lane.length
                veh.lane_id = veh.lane_plan.pop(0)
                lane = self.net.lane(veh.lane_id)
                continue
            if end == veh.dest_node or not self.net.graph().get(end, []):
                if end == veh.dest_node:
                    self._respawn(veh)
                    return
                veh.s = lane.length  # dead end: hold at the stub end
                veh.speed = 0.0
                return
            nxt = self._sole_successor(veh.lane_id)
            if nxt is None:
                # unplanned branching: pick deterministically smallest lane id
                options = self.net.graph()[end]
                nxt = options[0].id
            veh.s -= lane.length
            veh.lane_id = nxt
            lane = self.net.lane(veh.lane_id)

    def _respawn(self, veh: TrafficVehicle) -> None:
        """Move an arrived vehicle to a clear spawn point, keeping the count.

        A point is clear when the body ahead leaves the minimum standstill
        gap and anything approaching from behind has room to brake; if every
        point is crowded the vehicle waits at the destination mouth and
        retries next step.
        """
        points = self._spawn_pool()
        occ = self._occupancy(self._externals)
        bodies = [
            (other.pose(self.net).position, other.speed)
            for other in self.vehicles
            if other.uid != veh.uid
        ]
        for lane_id, es, espeed, _hl in self._externals:
            if lane_id is not None:
                geom = self.net.lane(lane_id).geom
                bodies.append((lane_point_at(geom, es), espeed))
        order = self.rng.permutation(len(points))
        for k in order:
            pt = points[int(k)]
            front_gap, _ = self._scan_front(
                pt.lane_id, pt.s, veh.half_length, veh.uid, occ
            )
            rear_gap, rear_v = self._scan_rear(
                pt.lane_id, pt.s, veh.half_length, veh.uid, occ
            )
            if front_gap <= veh.idm.s0 or rear_gap <= veh.idm.s0 + 2.0 * rear_v:
                continue
            # lane occupancy misses bodies mid-blend; check drawn positions,
            # leaving movers room to brake before a body appearing at rest
            pos = lane_point_at(self.net.lane(pt.lane_id).geom, pt.s)
            if any(pos.dist(b) < 7.0 + 1.5 * bv for b, bv in bodies):
                continue
            veh.lane_id = pt.lane_id
            veh.s = pt.s
            veh.speed = 0.0
            veh.blend_t = LANE_CHANGE_TIME
            self._assign_route(veh)
            return
        lane = self.net.lane(veh.lane_id)
        veh.s = lane.length
        veh.speed = 0.0

    # -- queries ------------------------------------------------------------

    def poses(self) -> list[tuple[Pose, float]]:
        """(pose, speed) per vehicle, for sensing and rendering."""
        return [(v.pose(self.net), v.speed) for v in self.vehicles]
