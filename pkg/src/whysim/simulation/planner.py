"""Rule-based driving policy: lane-graph A* routing plus reactive rules.

The policy is a pure function of the joint state (route memoisation only
caches results of deterministic computations), which keeps rollouts
reproducible and safe to run concurrently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import networkx as nx
import numpy as np

from ..geometry import Polyline, angle_diff, normalize_angle
from .layout import LaneRef, RoadLayout
from .physics import ACCEL_MAX, ACCEL_MIN, WHEELBASE, clamp_action
from .state import AgentState, Goal, ScenarioState

HEADWAY_S = 1.5
MIN_GAP = 7.0  # centre-to-centre; vehicles are 4.5 m long
COMFORT_DECEL = 3.0
COMFORT_ACCEL = 2.5
LATERAL_ACCEL_MAX = 2.2
GIVEWAY_LOOKOUT = 20.0
CONFLICT_RADIUS = 3.0
CONFLICT_HORIZON_S = 4.0
LANE_PREP_DISTANCE = 65.0
OVERTAKE_TRIGGER_GAP = 28.0
STOP_MARGIN = 3.0


@dataclass
class PathPlan:
    """Reference path for one agent at one tick."""

    line: Polyline
    s_self: float
    lateral: float
    junction_entry_s: float | None
    junction_id: int | None
    target_speed: float


def pure_pursuit_steer(agent: AgentState, line: Polyline, s_on_line: float) -> float:
    lookahead = max(4.0, 0.7 * agent.speed)
    target = line.point_at(min(s_on_line + lookahead, line.length))
    dx = target[0] - agent.position[0]
    dy = target[1] - agent.position[1]
    alpha = normalize_angle(math.atan2(dy, dx) - agent.bearing)
    dist = max(math.hypot(dx, dy), 1e-6)
    return math.atan2(2.0 * WHEELBASE * math.sin(alpha), dist)


def idm_accel(speed: float, target_speed: float, gap: float | None, leader_speed: float) -> float:
    """Intelligent-driver-model style longitudinal control."""
    v0 = max(target_speed, 0.1)
    free = COMFORT_ACCEL * (1.0 - (speed / v0) ** 4)
    if gap is None:
        return free
    dv = speed - leader_speed
    s_star = MIN_GAP + speed * HEADWAY_S + speed * dv / (2.0 * math.sqrt(COMFORT_ACCEL * COMFORT_DECEL))
    return COMFORT_ACCEL * (1.0 - (speed / v0) ** 4 - (max(s_star, 0.0) / max(gap, 0.5)) ** 2)


def stopping_accel(speed: float, distance: float) -> float:
    """Deceleration that brings the vehicle to rest ``distance`` metres ahead."""
    if distance <= 0.3:
        return ACCEL_MIN
    if distance < 4.0 and speed < 1.5:
        return -3.0  # finish the stop instead of crawling asymptotically
    return min(-(speed * speed) / (2.0 * distance), 0.0)


class RoutePlanner:
    """Shared per-layout routing helper with memoised lane-graph searches."""

    def __init__(self, layout: RoadLayout):
        self.layout = layout
        self._route_cache: dict = {}
        self._goal_lane_cache: dict = {}
        self._path_cache: dict = {}

    # -- routing ---------------------------------------------------------

    def goal_lanes(self, goal: Goal) -> list[tuple[LaneRef, float]]:
        key = goal.region
        cached = self._goal_lane_cache.get(key)
        if cached is not None:
            return cached
        xmin, ymin, xmax, ymax = goal.region
        out = []
        for lane in self.layout.lanes():
            line = self.layout.lane_center(lane)
            n = max(int(line.length), 2)
            for s in np.linspace(0.0, line.length, n):
                p = line.point_at(float(s))
                if xmin <= p[0] <= xmax and ymin <= p[1] <= ymax:
                    out.append((lane, float(s)))
                    break
        self._goal_lane_cache[key] = out
        return out

    def route_nodes(self, start: LaneRef, goal: Goal) -> list[LaneRef] | None:
        key = (start, goal.region)
        if key in self._route_cache:
            return self._route_cache[key]
        graph = self.layout.graph()
        targets = self.goal_lanes(goal)
        best: list[LaneRef] | None = None
        best_cost = math.inf
        for lane, _s in targets:
            try:
                cost, path = nx.single_source_dijkstra(graph, start, lane, weight="weight")
            except (nx.NetworkXNoPath, nx.NodeNotFound):
                continue
            if cost < best_cost:
                best_cost = cost
                best = path
        self._route_cache[key] = best
        return best

    # -- reference path ----------------------------------------------------

    def desired_lane(self, state: ScenarioState, agent: AgentState, goal: Goal) -> LaneRef:
        """Lane the agent should currently occupy, including overtake moves."""
        lane, s, lat = self.layout.locate(agent.position)
        # Commit to a lane change already in progress: while still departing
        # the old centreline (offset and lateral velocity agree), finish the
        # manoeuvre rather than swerving back.
        if abs(lat) > 0.8 and self.layout.junction_at(agent.position) is None:
            line = self.layout.lane_center(lane)
            heading = line.heading_at(s)
            v_lat = math.cos(heading) * agent.velocity[1] - math.sin(heading) * agent.velocity[0]
            if lat * v_lat > 0:
                step = -1 if lat > 0 else 1
                pos = lane.lane_pos + step
                road = self.layout.road(lane.road_id)
                if 0 <= pos < road.lane_count(lane.direction):
                    cand = LaneRef(lane.road_id, lane.direction, pos)
                    if self.route_nodes(cand, goal) is not None:
                        return cand
        nodes = self.route_nodes(lane, goal)
        if not nodes:
            return lane
        desired = lane
        # Prepare for the lane required at the next junction turn (or at the
        # goal) once it is close enough.
        required = self._required_lane(nodes)
        if required is not None and required.lane_pos != lane.lane_pos:
            dist_left = self.layout.lane_center(lane).length - s
            if dist_left < LANE_PREP_DISTANCE:
                step = 1 if required.lane_pos > lane.lane_pos else -1
                desired = LaneRef(lane.road_id, lane.direction, lane.lane_pos + step)
        if desired == lane:
            overtake = self._overtake_lane(state, agent, lane, s, goal)
            if overtake is not None:
                desired = overtake
        return desired

    def _required_lane(self, nodes: list[LaneRef]) -> LaneRef | None:
        if not nodes:
            return None
        graph = self.layout.graph()
        first = nodes[0]
        for a, b in zip(nodes, nodes[1:]):
            if a.road_id != first.road_id or a.direction != first.direction:
                break
            kind = graph.edges[a, b]["kind"]
            if kind == "junction":
                return a
        # No junction ahead on this road: head for the route's last lane on it.
        last_on_road = first
        for node in nodes:
            if node.road_id == first.road_id and node.direction == first.direction:
                last_on_road = node
            else:
                break
        return last_on_road

    def _overtake_lane(
        self,
        state: ScenarioState,
        agent: AgentState,
        lane: LaneRef,
        s: float,
        goal: Goal,
    ) -> LaneRef | None:
        road = self.layout.road(lane.road_id)
        line = self.layout.lane_center(lane)
        if line.length - s < 28.0:
            return None  # too close to the road end to weave
        leader = self._leader_in_lane(state, agent, lane, s)
        if leader is None:
            return None
        gap, leader_speed = leader
        if gap > OVERTAKE_TRIGGER_GAP or leader_speed > 0.5 * road.speed_limit:
            return None
        for step in (-1, 1):  # prefer moving left
            pos = lane.lane_pos + step
            if not (0 <= pos < road.lane_count(lane.direction)):
                continue
            cand = LaneRef(lane.road_id, lane.direction, pos)
            if self.route_nodes(cand, goal) is None:
                continue
            cand_leader = self._leader_in_lane(state, agent, cand, s)
            if cand_leader is None or cand_leader[0] > gap + 12.0:
                return cand
        return None

    def _leader_in_lane(
        self, state: ScenarioState, agent: AgentState, lane: LaneRef, s: float
    ) -> tuple[float, float] | None:
        line = self.layout.lane_center(lane)
        best: tuple[float, float] | None = None
        for other in state.agents:
            if other.agent_id == agent.agent_id:
                continue
            os, od = line.project(other.position)
            if abs(od) > 1.7:
                continue
            gap = os - s
            if 0.0 < gap < 60.0 and (best is None or gap < best[0]):
                best = (gap, other.speed)
        return best

    def build_path(self, agent: AgentState, desired: LaneRef, goal: Goal) -> PathPlan:
        """Reference polyline along the desired lane and onward to the goal.

        Paths are position-independent, so they are assembled once per
        (lane, goal) and the agent is located on them by projection.
        """
        line, entry_s, junction_id, target_speed = self._assembled_path(desired, goal)
        s_self, lateral = line.project(agent.position)
        return PathPlan(
            line=line,
            s_self=s_self,
            lateral=lateral,
            junction_entry_s=entry_s,
            junction_id=junction_id,
            target_speed=target_speed,
        )

    def _assembled_path(self, desired: LaneRef, goal: Goal):
        key = (desired, goal.region)
        cached = self._path_cache.get(key)
        if cached is not None:
            return cached
        layout = self.layout
        line = layout.lane_center(desired)
        pts = [line.point_at(s) for s in np.arange(0.0, line.length, 2.0)]
        pts.append(line.point_at(line.length))
        junction_entry_s: float | None = None
        junction_id: int | None = None
        target_speed = layout.road(desired.road_id).speed_limit

        nodes = self.route_nodes(desired, goal)
        accumulated = line.length
        if nodes:
            graph = layout.graph()
            idx = 0
            while idx < len(nodes) - 1 and accumulated < line.length + 90.0:
                nxt = nodes[idx + 1]
                edge = graph.edges[nodes[idx], nxt]
                if edge["kind"] != "junction":
                    # Lane changes beyond the current one are handled by
                    # replanning on later ticks.
                    break
                connector: Polyline = edge["connector"]
                if junction_entry_s is None:
                    junction_entry_s = accumulated
                    junction_id = edge["junction_id"]
                pts.extend(connector.points[1:])
                accumulated += connector.length
                nxt_line = layout.lane_center(nxt)
                pts.extend(nxt_line.point_at(s) for s in np.arange(2.0, nxt_line.length, 2.0))
                accumulated += nxt_line.length
                idx += 1
        path = Polyline(np.array(pts)) if len(pts) >= 2 else line
        cached = (path, junction_entry_s, junction_id, target_speed)
        self._path_cache[key] = cached
        return cached

    # -- hazard checks -----------------------------------------------------

    def leader_on_path(
        self, state: ScenarioState, agent: AgentState, plan: PathPlan
    ) -> tuple[float, float] | None:
        best: tuple[float, float] | None = None
        for other in state.agents:
            if other.agent_id == agent.agent_id:
                continue
            os, od = plan.line.project(other.position)
            if abs(od) > 1.7:
                continue
            gap = os - plan.s_self
            if 0.5 < gap < 60.0 and (best is None or gap < best[0]):
                best = (gap, other.speed)
        return best

    def crossing_conflict(
        self, state: ScenarioState, agent: AgentState, plan: PathPlan
    ) -> bool:
        """Gap-acceptance test at a junction entry.

        Conservative path sweep: a conflict exists when any prioritised moving
        vehicle's constant-velocity extrapolation passes near the agent's
        planned path through the junction within the lookahead horizon.
        """
        if plan.junction_id is None or plan.junction_entry_s is None:
            return False
        layout = self.layout
        junction = next(j for j in layout.junctions if j.junction_id == plan.junction_id)
        my_lane, _, _ = layout.locate(agent.position)
        my_priority = layout.road(my_lane.road_id).priority
        reach = max(agent.speed, 3.0) * CONFLICT_HORIZON_S + 10.0
        my_points = np.array([
            plan.line.point_at(min(plan.s_self + d, plan.line.length))
            for d in np.arange(0.0, reach, 2.0)
        ])
        steps = int(CONFLICT_HORIZON_S / state.dt)
        for other in state.agents:
            if other.agent_id == agent.agent_id:
                continue
            if other.speed < 1.0:
                continue  # (near-)stationary traffic never claims the junction
            other_lane, _, _ = layout.locate(other.position)
            other_priority = layout.road(other_lane.road_id).priority
            inside = layout.junction_at(other.position) is not None
            if other_priority < my_priority and not inside:
                continue
            op = np.array(other.position)
            ov = np.array(other.velocity)
            for k in range(0, steps, 3):
                theirs = op + ov * (k * state.dt)
                if float(np.linalg.norm(theirs - junction.center)) > junction.radius + 8.0:
                    continue
                d2 = np.einsum("ij,ij->i", my_points - theirs, my_points - theirs)
                if float(d2.min()) < CONFLICT_RADIUS**2:
                    return True
        return False


class PlannerPolicy:
    """Per-scenario action provider for all planner-driven agents."""

    def __init__(self, layout: RoadLayout):
        self.routes = RoutePlanner(layout)

    def action(self, state: ScenarioState, agent_id: int) -> tuple[float, float]:
        agent = state.agent(agent_id)
        goal = state.goal(agent_id)
        layout = self.routes.layout

        # Hold position once the goal region is reached.
        if goal.contains(agent) or (
            float(np.linalg.norm(agent.pos - goal.center)) < 2.0 and goal.stop_required
        ):
            return clamp_action(-agent.speed / state.dt, 0.0)

        desired = self.routes.desired_lane(state, agent, goal)
        plan = self.routes.build_path(agent, desired, goal)
        steer = pure_pursuit_steer(agent, plan.line, plan.s_self)

        # Curvature-limited target speed over the next stretch.
        target = plan.target_speed
        h0 = plan.line.heading_at(plan.s_self)
        for probe in (8.0, 16.0):
            h1 = plan.line.heading_at(min(plan.s_self + probe, plan.line.length))
            curvature = abs(angle_diff(h1, h0)) / probe
            if curvature > 1e-3:
                target = min(target, math.sqrt(LATERAL_ACCEL_MAX / curvature))

        leader = self.routes.leader_on_path(state, agent, plan)
        accel = idm_accel(agent.speed, target, leader[0] if leader else None,
                          leader[1] if leader else 0.0)

        # Give way before entering a junction when prioritised traffic
        # conflicts with the planned path. Once inside, the agent is
        # committed and does not re-check.
        if plan.junction_entry_s is not None:
            dist_entry = plan.junction_entry_s - plan.s_self
            inside = layout.junction_at(agent.position) is not None
            if not inside and -2.0 < dist_entry < GIVEWAY_LOOKOUT:
                if self.routes.crossing_conflict(state, agent, plan):
                    accel = min(accel, stopping_accel(agent.speed, dist_entry - STOP_MARGIN))

        # Stop inside the goal region when required.
        if goal.stop_required:
            gs, _ = plan.line.project(goal.center)
            dist_goal = gs - plan.s_self
            if 0.0 < dist_goal < 40.0:
                accel = min(accel, stopping_accel(agent.speed, dist_goal))

        return clamp_action(min(max(accel, ACCEL_MIN), ACCEL_MAX), steer)
