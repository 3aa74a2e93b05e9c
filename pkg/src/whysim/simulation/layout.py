"""Road network model: roads, lanes, junctions, obstacles and the routing graph.

Lane convention: a road's centerline is its geometric centre. With ``n``
lanes total (forward + backward), lane slots are laid out left to right when
looking along the polyline, each ``lane_width`` wide. Backward lanes occupy
the leftmost slots so that traffic keeps to the right. Within a travel
direction, lanes are indexed 0..count-1 from left to right as seen by the
driver.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import networkx as nx
import numpy as np

from ..geometry import Polyline, quadratic_bezier, ray_intersection, unit


class LayoutError(ValueError):
    """Raised when a road layout violates a structural invariant."""


JUNCTION_KINDS = ("t-junction", "crossroads", "roundabout")


@dataclass
class Road:
    road_id: int
    centerline: np.ndarray
    lanes_forward: int
    lanes_backward: int
    lane_width: float
    priority: int = 0
    speed_limit: float = 10.0
    name: str = ""

    def __post_init__(self) -> None:
        self.centerline = np.asarray(self.centerline, dtype=float)
        if self.centerline.ndim != 2 or self.centerline.shape[0] < 2:
            raise LayoutError(f"road {self.road_id}: centerline needs >= 2 points")
        if self.lane_width <= 0:
            raise LayoutError(f"road {self.road_id}: lane width must be positive")
        if self.lanes_forward + self.lanes_backward < 1:
            raise LayoutError(f"road {self.road_id}: needs at least one lane")
        self.center = Polyline(self.centerline)

    @property
    def num_lanes(self) -> int:
        return self.lanes_forward + self.lanes_backward

    def lane_count(self, direction: int) -> int:
        return self.lanes_forward if direction > 0 else self.lanes_backward

    def slot_of(self, direction: int, lane_pos: int) -> int:
        """Cross-section slot (0 = leftmost looking along the polyline)."""
        if direction > 0:
            return self.lanes_backward + lane_pos
        return self.lanes_backward - 1 - lane_pos

    def slot_offset(self, slot: int) -> float:
        """Signed lateral offset of a slot centre from the road centerline."""
        return ((self.num_lanes - 1) / 2.0 - slot) * self.lane_width


@dataclass
class Junction:
    junction_id: int
    roads: list[int]
    kind: str
    center: np.ndarray
    radius: float = 10.0

    def __post_init__(self) -> None:
        self.center = np.asarray(self.center, dtype=float)
        if self.kind not in JUNCTION_KINDS:
            raise LayoutError(f"junction {self.junction_id}: unknown kind {self.kind!r}")
        if len(self.roads) < 2:
            raise LayoutError(f"junction {self.junction_id}: must connect >= 2 roads")


@dataclass(frozen=True)
class LaneRef:
    """Address of one lane: road, travel direction (+1 along polyline), index."""

    road_id: int
    direction: int
    lane_pos: int


@dataclass
class RoadLayout:
    roads: list[Road]
    junctions: list[Junction] = field(default_factory=list)
    obstacles: list[tuple[float, float, float, float]] = field(default_factory=list)
    summary: str = ""

    def __post_init__(self) -> None:
        ids = [r.road_id for r in self.roads]
        if len(set(ids)) != len(ids):
            raise LayoutError("road ids must be unique")
        self._roads = {r.road_id: r for r in self.roads}
        for j in self.junctions:
            for rid in j.roads:
                if rid not in self._roads:
                    raise LayoutError(f"junction {j.junction_id} references unknown road {rid}")
        self.obstacles = [tuple(float(v) for v in rect) for rect in self.obstacles]
        self._lane_cache: dict[LaneRef, Polyline] = {}
        self._graph: nx.DiGraph | None = None

    def road(self, road_id: int) -> Road:
        return self._roads[road_id]

    def lanes(self):
        for r in self.roads:
            for direction in (1, -1):
                for pos in range(r.lane_count(direction)):
                    yield LaneRef(r.road_id, direction, pos)

    def lane_center(self, lane: LaneRef) -> Polyline:
        """Centerline of one lane, oriented along its travel direction."""
        cached = self._lane_cache.get(lane)
        if cached is not None:
            return cached
        road = self.road(lane.road_id)
        offset = road.slot_offset(road.slot_of(lane.direction, lane.lane_pos))
        line = road.center.offset(offset)
        pts = line.points if lane.direction > 0 else line.points[::-1]
        poly = Polyline(pts)
        self._lane_cache[lane] = poly
        return poly

    def locate(self, point) -> tuple[LaneRef, float, float]:
        """Best (lane, arclength s, lateral offset) for a world point.

        Candidates are ranked by true distance to the lane centreline, so
        points beyond a road's end do not spuriously match that road.
        """
        best: tuple[LaneRef, float, float] | None = None
        best_d = math.inf
        point = np.asarray(point, dtype=float)
        for road in self.roads:
            s, d = road.center.project(point)
            # Slot index from the signed centerline offset.
            slot = int(round((road.num_lanes - 1) / 2.0 - d / road.lane_width))
            slot = min(max(slot, 0), road.num_lanes - 1)
            if slot >= road.lanes_backward:
                lane = LaneRef(road.road_id, 1, slot - road.lanes_backward)
            else:
                lane = LaneRef(road.road_id, -1, road.lanes_backward - 1 - slot)
            lane_line = self.lane_center(lane)
            ls, ld = lane_line.project(point)
            score = float(np.linalg.norm(point - lane_line.point_at(ls)))
            if score < best_d:
                best_d = score
                best = (lane, ls, ld)
        if best is None:
            raise LayoutError("layout has no roads")
        return best

    def junction_at(self, point) -> Junction | None:
        point = np.asarray(point, dtype=float)
        for j in self.junctions:
            if float(np.linalg.norm(point - j.center)) <= j.radius:
                return j
        return None

    def junctions_of_road(self, road_id: int) -> list[Junction]:
        return [j for j in self.junctions if road_id in j.roads]

    def bounding_box(self, margin: float = 5.0) -> tuple[float, float, float, float]:
        pts = np.vstack([r.centerline for r in self.roads])
        return (
            float(pts[:, 0].min() - margin),
            float(pts[:, 1].min() - margin),
            float(pts[:, 0].max() + margin),
            float(pts[:, 1].max() + margin),
        )

    # -- routing graph -------------------------------------------------

    def graph(self) -> nx.DiGraph:
        """Lane-level routing graph; built lazily and cached on the layout."""
        if self._graph is None:
            self._graph = _build_lane_graph(self)
        return self._graph

    def connector(self, lane_from: LaneRef, lane_to: LaneRef) -> Polyline | None:
        g = self.graph()
        data = g.get_edge_data(lane_from, lane_to)
        if data is None:
            return None
        return data.get("connector")


LANE_CHANGE_COST = 8.0
TURN_COST = 4.0


def _lane_endpoints(layout: RoadLayout, lane: LaneRef):
    line = layout.lane_center(lane)
    return line.points[0], line.points[-1], line


def _build_lane_graph(layout: RoadLayout) -> nx.DiGraph:
    g = nx.DiGraph()
    lanes = list(layout.lanes())
    for lane in lanes:
        g.add_node(lane, length=layout.lane_center(lane).length)

    # Lane-change edges between adjacent same-direction lanes on a road.
    for lane in lanes:
        road = layout.road(lane.road_id)
        for delta in (-1, 1):
            other_pos = lane.lane_pos + delta
            if 0 <= other_pos < road.lane_count(lane.direction):
                other = LaneRef(lane.road_id, lane.direction, other_pos)
                g.add_edge(
                    lane,
                    other,
                    weight=layout.lane_center(lane).length + LANE_CHANGE_COST,
                    kind="lane-change",
                    connector=None,
                )

    # Junction connector edges between lane ends that meet at a junction.
    for j in layout.junctions:
        ends = []  # lanes terminating in this junction
        starts = []  # lanes beginning in this junction
        for lane in lanes:
            if lane.road_id not in j.roads:
                continue
            p_start, p_end, _ = _lane_endpoints(layout, lane)
            if float(np.linalg.norm(p_end - j.center)) <= j.radius + 1.0:
                ends.append(lane)
            if float(np.linalg.norm(p_start - j.center)) <= j.radius + 1.0:
                starts.append(lane)
        for src in ends:
            for dst in starts:
                if src.road_id == dst.road_id:
                    # U-turns within a junction are not modelled.
                    continue
                if not _transition_allowed(layout, src, dst):
                    continue
                connector = _make_connector(layout, src, dst)
                g.add_edge(
                    src,
                    dst,
                    weight=connector.length + TURN_COST,
                    kind="junction",
                    junction_id=j.junction_id,
                    connector=connector,
                )
    return g


def _transition_allowed(layout: RoadLayout, src: LaneRef, dst: LaneRef) -> bool:
    """Lane gating at junctions: turns start from the kerbside lane.

    Right turns leave from the rightmost lane, left turns from the leftmost,
    and straight-through connections preserve the lane index.
    """
    src_count = layout.road(src.road_id).lane_count(src.direction)
    dst_count = layout.road(dst.road_id).lane_count(dst.direction)
    direction = turn_direction(layout, src, dst)
    if direction == "straight":
        return dst.lane_pos == min(src.lane_pos, dst_count - 1)
    if direction == "right":
        return src.lane_pos == src_count - 1
    return src.lane_pos == 0


def _make_connector(layout: RoadLayout, src: LaneRef, dst: LaneRef) -> Polyline:
    src_line = layout.lane_center(src)
    dst_line = layout.lane_center(dst)
    p0 = src_line.points[-1]
    p2 = dst_line.points[0]
    h0 = src_line.heading_at(src_line.length)
    h2 = dst_line.heading_at(0.0)
    ctrl = ray_intersection(p0, unit(h0), p2, -unit(h2))
    if ctrl is None or float(np.linalg.norm(ctrl - p0)) > 40.0:
        ctrl = (p0 + p2) / 2.0
    return Polyline(quadratic_bezier(p0, ctrl, p2, n=14))


def turn_direction(layout: RoadLayout, src: LaneRef, dst: LaneRef) -> str:
    """Classify a junction transition as left / right / straight by heading change."""
    src_line = layout.lane_center(src)
    dst_line = layout.lane_center(dst)
    h0 = src_line.heading_at(src_line.length)
    h1 = dst_line.heading_at(0.0)
    delta = math.atan2(math.sin(h1 - h0), math.cos(h1 - h0))
    if delta > math.pi / 6:
        return "left"
    if delta < -math.pi / 6:
        return "right"
    return "straight"
