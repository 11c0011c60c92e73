"""Procedural map assembly.

Maps grow block by block: each try draws a block type, a free socket on the
current network, and block parameters, then docks the block if its footprint
does not overlap anything already placed. Dead ends backtrack by popping the
last block. A map either reaches the requested block count (success) or
exhausts the per-level try budget everywhere (failure, partial network
returned).
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import rng as rngmod
from .blocks import (
    Block,
    BlockType,
    Boundary,
    Lane,
    Socket,
    SpawnPoint,
    block_footprints_overlap,
    free_sockets,
    instantiate,
    origin_socket,
    sample_params,
)
from .geometry import (
    CircularArc,
    FrenetCoord,
    LaneGeometry,
    Pose,
    StraightSegment,
    Vec2,
    frenet_project,
)

MAP_FORMAT_VERSION = 1


@dataclass(frozen=True)
class MapConfig:
    n_blocks: int = 3
    max_tries: int = 40
    lanes: int = 3
    lane_width: float = 3.5


class MapGenerationError(RuntimeError):
    """Raised when a map cannot be generated for a requested seed."""


class RoadNetwork:
    """Blocks plus docking records, with derived routing structures."""

    def __init__(self, config: MapConfig, seed: int | None = None):
        self.config = config
        self.seed = seed
        self.blocks: list[Block] = []
        self.dockings: list[dict] = []
        self._alias: dict[str, str] = {}
        self._invalidate()

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, RoadNetwork)
            and self.config == other.config
            and self.seed == other.seed
            and self.blocks == other.blocks
            and self.dockings == other.dockings
        )

    def _invalidate(self) -> None:
        self._graph: dict[str, list[Lane]] | None = None
        self._lanes_by_id: dict[str, Lane] | None = None
        self._node_pos: dict[str, Vec2] | None = None
        self._neighbors: dict[str, dict[str, str | None]] | None = None

    # -- construction ----------------------------------------------------

    def push(self, block: Block, anchor: Socket) -> None:
        self.blocks.append(block)
        if anchor.id != "origin":
            fb, fs = _parse_socket_id(anchor.id)
            self.dockings.append(
                {"from_block": fb, "from_socket": fs, "to_block": block.index}
            )
            for new, old in zip(block.entry_socket.lane_nodes, anchor.lane_nodes):
                self._alias[new] = self.resolve(old)
        self._invalidate()

    def pop(self) -> Block:
        block = self.blocks.pop()
        if self.dockings and self.dockings[-1]["to_block"] == block.index:
            self.dockings.pop()
        for node in block.entry_socket.lane_nodes:
            self._alias.pop(node, None)
        self._invalidate()
        return block

    def overlaps(self, block: Block) -> bool:
        return any(block_footprints_overlap(block, other) for other in self.blocks)

    # -- lookups -----------------------------------------------------------

    def resolve(self, node: str) -> str:
        return self._alias.get(node, node)

    def free_sockets(self) -> list[Socket]:
        return free_sockets(self.blocks, self.dockings)

    @property
    def destination(self) -> Socket | None:
        free = self.free_sockets()
        if not free:
            return None
        return max(free, key=lambda s: s.id)

    def lanes(self):
        for block in self.blocks:
            yield from block.lanes

    def lane(self, lane_id: str) -> Lane:
        if self._lanes_by_id is None:
            self._lanes_by_id = {ln.id: ln for ln in self.lanes()}
        return self._lanes_by_id[lane_id]

    def graph(self) -> dict[str, list[Lane]]:
        """Adjacency: resolved start node -> outgoing lane edges."""
        if self._graph is None:
            adj: dict[str, list[Lane]] = {}
            for lane in self.lanes():
                adj.setdefault(self.resolve(lane.start_node), []).append(lane)
            for edges in adj.values():
                edges.sort(key=lambda ln: ln.id)
            self._graph = adj
        return self._graph

    def node_position(self, node: str) -> Vec2:
        if self._node_pos is None:
            pos = {}
            for block in self.blocks:
                for name, p in block.nodes.items():
                    pos[self.resolve(name)] = p
            self._node_pos = pos
        return self._node_pos[self.resolve(node)]

    def lane_neighbors(self, lane_id: str) -> dict[str, str | None]:
        """Adjacent parallel lanes, {"left": id|None, "right": id|None}."""
        if self._neighbors is None:
            self._neighbors = {}
            by_block: dict[int, list[Lane]] = {}
            for block in self.blocks:
                by_block[block.index] = block.lanes
            for block in self.blocks:
                w = block.lane_width
                for lane in block.lanes:
                    found: dict[str, str | None] = {"left": None, "right": None}
                    length = lane.length
                    for other in block.lanes:
                        if other.id == lane.id:
                            continue
                        ok_side = None
                        for frac in (0.3, 0.5, 0.7):
                            p = _lane_point(lane, frac * length)
                            try:
                                fr = frenet_project(other.geom, p)
                            except Exception:
                                ok_side = None
                                break
                            side = None
                            if abs(fr.d + w) < 0.2:
                                side = "left"
                            elif abs(fr.d - w) < 0.2:
                                side = "right"
                            if side is None or not (0.5 < fr.s < other.length - 0.5):
                                ok_side = None
                                break
                            if ok_side is None:
                                ok_side = side
                            elif ok_side != side:
                                ok_side = None
                                break
                        if ok_side is not None:
                            found[ok_side] = other.id
                    self._neighbors[lane.id] = found
        return self._neighbors[lane_id]

    # -- aggregates --------------------------------------------------------

    @property
    def total_lane_length(self) -> float:
        return sum(ln.length for ln in self.lanes())

    @property
    def main_length(self) -> float:
        """Network length along the road (lane length divided out per block)."""
        return sum(
            sum(ln.length for ln in b.lanes) / float(b.params["lanes"]) for b in self.blocks
        )

    @property
    def avg_lanes(self) -> float:
        main = self.main_length
        return self.total_lane_length / main if main > 0 else 0.0

    def spawn_points(self) -> list[SpawnPoint]:
        out = []
        for block in self.blocks:
            out.extend(block.spawn_points)
        return out


def _lane_point(lane: Lane, s: float) -> Vec2:
    from .geometry import lane_point_at

    return lane_point_at(lane.geom, s)


def _parse_socket_id(socket_id: str) -> tuple[int, int]:
    blk, sk = socket_id.split(".")
    return int(blk[1:]), int(sk[1:])


# ---------------------------------------------------------------------------
# generation
# ---------------------------------------------------------------------------

_ALL_TYPES = list(BlockType)


def big(config: MapConfig, rng: np.random.Generator) -> tuple[RoadNetwork, bool]:
    """Grow a network to config.n_blocks via backtracking search.

    Returns (network, success). On failure the partial network built so far
    is returned with success False.
    """
    net = RoadNetwork(config)
    ok = _grow(net, config, rng)
    return net, ok


def _grow(net: RoadNetwork, config: MapConfig, rng: np.random.Generator) -> bool:
    if len(net.blocks) >= config.n_blocks:
        return True
    for _ in range(config.max_tries):
        kind = rngmod.rand_choice(rng, _ALL_TYPES)
        free = net.free_sockets()
        anchor = rngmod.rand_choice(rng, free) if free else origin_socket(
            config.lanes, config.lane_width
        )
        params = sample_params(kind, rng, lanes=anchor.lanes, lane_width=config.lane_width)
        block = instantiate(kind, params, anchor, index=len(net.blocks))
        if net.overlaps(block):
            continue
        net.push(block, anchor)
        if _grow(net, config, rng):
            return True
        net.pop()
    return False


def big_from_seed(config: MapConfig, seed: int) -> tuple[RoadNetwork, bool]:
    rng = rngmod.make_rng(seed, rngmod.MAP_STREAM)
    net, ok = big(config, rng)
    net.seed = seed
    return net, ok


def generate_map(config: MapConfig, seed: int) -> RoadNetwork:
    net, ok = big_from_seed(config, seed)
    if not ok:
        raise MapGenerationError(f"map generation failed for seed {seed}")
    return net


def generate_maps(config: MapConfig, count: int, base_seed: int = 0) -> list[RoadNetwork]:
    """First `count` successful maps scanning seeds upward from base_seed."""
    maps: list[RoadNetwork] = []
    seed = base_seed
    while len(maps) < count:
        net, ok = big_from_seed(config, seed)
        if ok:
            maps.append(net)
        seed += 1
    return maps


def validate(net: RoadNetwork) -> None:
    """Raise if the network is disconnected, overlapping, or miswired."""
    if not net.blocks:
        return
    for d in net.dockings:
        anchor = net.blocks[d["from_block"]].sockets[d["from_socket"]]
        entry = net.blocks[d["to_block"]].entry_socket
        if anchor.lanes != entry.lanes:
            raise ValueError(f"lane count mismatch at {anchor.id}")
    for i, a in enumerate(net.blocks):
        for b in net.blocks[i + 1 :]:
            if block_footprints_overlap(a, b):
                raise ValueError(f"blocks {a.index} and {b.index} overlap")
    reached = {0}
    seen_nodes = set()
    stack = [net.resolve(n) for n in net.blocks[0].entry_socket.lane_nodes]
    graph = net.graph()
    while stack:
        node = stack.pop()
        if node in seen_nodes:
            continue
        seen_nodes.add(node)
        for lane in graph.get(node, []):
            reached.add(int(lane.id.split(":")[0][1:]))
            stack.append(net.resolve(lane.end_node))
    if reached != {b.index for b in net.blocks}:
        missing = sorted({b.index for b in net.blocks} - reached)
        raise ValueError(f"blocks unreachable from entry: {missing}")


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------


def _geom_to_obj(g: LaneGeometry) -> dict:
    if isinstance(g, StraightSegment):
        return {
            "kind": "straight",
            "x1": g.start.x,
            "y1": g.start.y,
            "x2": g.end.x,
            "y2": g.end.y,
            "width": g.width,
        }
    return {
        "kind": "arc",
        "cx": g.center.x,
        "cy": g.center.y,
        "radius": g.radius,
        "start_angle": g.start_angle,
        "sweep": g.sweep,
        "width": g.width,
    }


def _geom_from_obj(o: dict) -> LaneGeometry:
    if o["kind"] == "straight":
        return StraightSegment(Vec2(o["x1"], o["y1"]), Vec2(o["x2"], o["y2"]), o["width"])
    return CircularArc(
        Vec2(o["cx"], o["cy"]), o["radius"], o["start_angle"], o["sweep"], o["width"]
    )


def _pose_to_obj(p: Pose) -> dict:
    return {"x": p.position.x, "y": p.position.y, "heading": p.heading}


def _pose_from_obj(o: dict) -> Pose:
    return Pose(Vec2(o["x"], o["y"]), o["heading"])


def _block_to_obj(b: Block) -> dict:
    return {
        "type": b.kind.value,
        "params": b.params,
        "index": b.index,
        "pose": _pose_to_obj(b.origin),
        "nodes": {k: [v.x, v.y] for k, v in sorted(b.nodes.items())},
        "lanes": [
            {
                "id": ln.id,
                "geometry": _geom_to_obj(ln.geom),
                "start_node": ln.start_node,
                "end_node": ln.end_node,
                "group": ln.group,
                "lane_index": ln.index,
                "road_offset": ln.road_offset,
                "group_lanes": ln.group_lanes,
                "junction": ln.junction,
            }
            for ln in b.lanes
        ],
        "sockets": [
            {
                "id": s.id,
                "pose": _pose_to_obj(s.pose),
                "lanes": s.lanes,
                "lane_nodes": list(s.lane_nodes),
                "stub_length": s.stub_length,
            }
            for s in b.sockets
        ],
        "boundaries": [
            {
                "chain": [_geom_to_obj(g) for g in bd.chain],
                "style": bd.style,
                "is_edge": bd.is_edge,
            }
            for bd in b.boundaries
        ],
        "spawn_points": [{"lane_id": sp.lane_id, "s": sp.s} for sp in b.spawn_points],
    }


def _block_from_obj(o: dict) -> Block:
    return Block(
        kind=BlockType(o["type"]),
        params=dict(o["params"]),
        index=o["index"],
        origin=_pose_from_obj(o["pose"]),
        lanes=[
            Lane(
                id=ln["id"],
                geom=_geom_from_obj(ln["geometry"]),
                start_node=ln["start_node"],
                end_node=ln["end_node"],
                group=ln["group"],
                index=ln["lane_index"],
                road_offset=ln["road_offset"],
                group_lanes=ln["group_lanes"],
                junction=ln.get("junction", False),
            )
            for ln in o["lanes"]
        ],
        sockets=[
            Socket(
                id=s["id"],
                pose=_pose_from_obj(s["pose"]),
                lanes=s["lanes"],
                lane_nodes=tuple(s["lane_nodes"]),
                stub_length=s["stub_length"],
            )
            for s in o["sockets"]
        ],
        boundaries=[
            Boundary(
                chain=tuple(_geom_from_obj(g) for g in bd["chain"]),
                style=bd["style"],
                is_edge=bd["is_edge"],
            )
            for bd in o["boundaries"]
        ],
        nodes={k: Vec2(v[0], v[1]) for k, v in o["nodes"].items()},
        spawn_points=[SpawnPoint(sp["lane_id"], sp["s"]) for sp in o["spawn_points"]],
    )


def serialize(net: RoadNetwork) -> str:
    """Canonical JSON for a network: sorted keys, shortest-round-trip floats.

    Equal networks serialize to identical bytes.
    """
    dest = net.destination
    obj = {
        "version": MAP_FORMAT_VERSION,
        "seed": net.seed,
        "config": {
            "n": net.config.n_blocks,
            "T": net.config.max_tries,
            "lanes": net.config.lanes,
            "lane_width": net.config.lane_width,
        },
        "blocks": [_block_to_obj(b) for b in net.blocks],
        "dockings": net.dockings,
        "destination": dest.id if dest else None,
    }
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def deserialize(text: str) -> RoadNetwork:
    obj = json.loads(text)
    if obj.get("version") != MAP_FORMAT_VERSION:
        raise ValueError(f"unsupported map format version {obj.get('version')!r}")
    cfg = MapConfig(
        n_blocks=obj["config"]["n"],
        max_tries=obj["config"]["T"],
        lanes=obj["config"]["lanes"],
        lane_width=obj["config"]["lane_width"],
    )
    net = RoadNetwork(cfg, seed=obj["seed"])
    net.blocks = [_block_from_obj(b) for b in obj["blocks"]]
    net.dockings = [dict(d) for d in obj["dockings"]]
    for d in net.dockings:
        anchor = net.blocks[d["from_block"]].sockets[d["from_socket"]]
        entry = net.blocks[d["to_block"]].entry_socket
        for new, old in zip(entry.lane_nodes, anchor.lane_nodes):
            net._alias[new] = net.resolve(old)
    net._invalidate()
    return net
