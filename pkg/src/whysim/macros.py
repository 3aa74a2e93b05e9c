"""Two-level macro action vocabulary: expansion controllers and wrapping.

Low-level macros are sign partitions of the raw control channels. High-level
macros are hand-engineered manoeuvres with applicability and termination
conditions; expanding one simulates the world forward with the target agent
driven by the macro's controller while everyone else follows the planner.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from importlib import resources

import numpy as np
import yaml

from .geometry import Polyline, angle_diff
from .simulation.layout import LaneRef, RoadLayout, turn_direction
from .simulation.planner import (
    PlannerPolicy,
    idm_accel,
    pure_pursuit_steer,
    stopping_accel,
)
from .simulation.state import InvalidAgent, ScenarioState, Trajectory
from .simulation.world import apply_actions, plan_actions

CRUISE_DEADBAND = 0.05  # m/s^2; below this an acceleration counts as cruise
STRAIGHT_DEADBAND = 0.01  # rad; below this a steering angle counts as straight

H_MACRO_ORDER = (
    "turn-left",
    "turn-right",
    "exit-left",
    "exit-right",
    "change-lane-left",
    "change-lane-right",
    "give-way",
    "stop",
    "continue-lane",
)

MACRO_ALIASES = {
    "turn": ("turn-right", "turn-left", "exit-right", "exit-left"),
    "change-lane": ("change-lane-left", "change-lane-right"),
    "exit": ("exit-right", "exit-left"),
    "slow-down": ("stop",),
}


class MacroNotApplicable(ValueError):
    def __init__(self, macro_name: str, reason: str):
        super().__init__(f"{macro_name}: {reason}")
        self.macro_name = macro_name
        self.reason = reason


class UnknownMacro(KeyError):
    pass


class UnwrappableSpan(ValueError):
    pass


@dataclass(frozen=True)
class MacroSegment:
    macro_name: str
    agent_id: int
    start_tick: int
    end_tick: int
    fallback: bool = False

    def __post_init__(self) -> None:
        if self.start_tick >= self.end_tick:
            raise ValueError("segment must span at least one tick")


# ---------------------------------------------------------------------------
# L-Macros: sign partition of the control channels
# ---------------------------------------------------------------------------


def _sign_label(value: float, deadband: float, neg: str, zero: str, pos: str) -> str:
    if value > deadband:
        return pos
    if value < -deadband:
        return neg
    return zero


def _runs(labels: list[str]) -> list[tuple[str, int, int]]:
    out = []
    start = 0
    for i in range(1, len(labels) + 1):
        if i == len(labels) or labels[i] != labels[start]:
            out.append((labels[start], start, i))
            start = i
    return out


def wrap_low(
    actions: list[tuple[float, float]], agent_id: int = 0
) -> tuple[list[MacroSegment], list[MacroSegment]]:
    """Partition raw (accel, steer) rows into longitudinal and lateral runs."""
    if not actions:
        raise ValueError("cannot wrap an empty action sequence")
    lon_labels = [
        _sign_label(a, CRUISE_DEADBAND, "decelerate", "cruise", "accelerate")
        for a, _ in actions
    ]
    lat_labels = [
        _sign_label(d, STRAIGHT_DEADBAND, "turn-right", "straight", "turn-left")
        for _, d in actions
    ]
    lon = [MacroSegment(lbl, agent_id, s, e) for lbl, s, e in _runs(lon_labels)]
    lat = [MacroSegment(lbl, agent_id, s, e) for lbl, s, e in _runs(lat_labels)]
    return lon, lat


# ---------------------------------------------------------------------------
# H-Macro controllers
# ---------------------------------------------------------------------------


class Controller:
    """Stateful executor for one high-level macro on one agent."""

    def action(self, state: ScenarioState) -> tuple[float, float]:
        raise NotImplementedError

    def done(self, state: ScenarioState) -> bool:
        raise NotImplementedError


def straight_path(layout: RoadLayout, lane: LaneRef) -> Polyline:
    """Lane centre extended through the next junction's straightest continuation."""
    line = layout.lane_center(lane)
    graph = layout.graph()
    best = None
    best_delta = math.pi / 5
    for _, dst, data in graph.out_edges(lane, data=True):
        if data["kind"] != "junction":
            continue
        dst_line = layout.lane_center(dst)
        delta = abs(angle_diff(dst_line.heading_at(0.0), line.heading_at(line.length)))
        if delta < best_delta:
            best_delta = delta
            best = (data["connector"], dst_line)
    if best is None:
        return line
    connector, dst_line = best
    pts = list(line.points)
    pts.extend(connector.points[1:])
    pts.extend(dst_line.points[1:])
    return Polyline(np.array(pts))


class _StopController(Controller):
    """Brake to a standstill while holding the lane captured at start."""

    def __init__(self, agent_id: int, decel: float, path: Polyline):
        self.agent_id = agent_id
        self.decel = decel
        self.path = path

    def done(self, state: ScenarioState) -> bool:
        return state.agent(self.agent_id).speed <= 1e-9

    def action(self, state: ScenarioState) -> tuple[float, float]:
        agent = state.agent(self.agent_id)
        s, _ = self.path.project(agent.position)
        return (-self.decel, pure_pursuit_steer(agent, self.path, s))


class _ContinueLaneController(Controller):
    """Follow the lane captured at start, straight through any junction."""

    def __init__(self, agent_id: int, duration_ticks: int, path: Polyline, target_speed: float):
        self.agent_id = agent_id
        self.remaining = duration_ticks
        self.path = path
        self.target_speed = target_speed

    def done(self, state: ScenarioState) -> bool:
        return self.remaining <= 0

    def action(self, state: ScenarioState) -> tuple[float, float]:
        self.remaining -= 1
        agent = state.agent(self.agent_id)
        s, _ = self.path.project(agent.position)
        steer = pure_pursuit_steer(agent, self.path, s)
        return (idm_accel(agent.speed, self.target_speed, None, 0.0), steer)


class _ChangeLaneController(Controller):
    def __init__(self, agent_id: int, target: LaneRef, hold_speed: float):
        self.agent_id = agent_id
        self.target = target
        self.hold_speed = max(hold_speed, 2.0)

    def done(self, state: ScenarioState) -> bool:
        agent = state.agent(self.agent_id)
        line = state.layout.lane_center(self.target)
        s, lat = line.project(agent.position)
        return abs(lat) < 0.2 and abs(angle_diff(agent.bearing, line.heading_at(s))) < 0.08

    def action(self, state: ScenarioState) -> tuple[float, float]:
        agent = state.agent(self.agent_id)
        line = state.layout.lane_center(self.target)
        s, _ = line.project(agent.position)
        steer = pure_pursuit_steer(agent, line, s)
        accel = idm_accel(agent.speed, self.hold_speed, None, 0.0)
        return (accel, steer)


class _TurnController(Controller):
    """Follow lane -> junction connector -> target lane for a short settle span."""

    def __init__(self, agent_id: int, path, settle_s: float, turn_speed: float):
        self.agent_id = agent_id
        self.path = path
        self.end_s = path.length - settle_s
        self.turn_speed = turn_speed

    def done(self, state: ScenarioState) -> bool:
        agent = state.agent(self.agent_id)
        s, lat = self.path.project(agent.position)
        return s >= self.end_s and abs(lat) < 0.6

    def action(self, state: ScenarioState) -> tuple[float, float]:
        agent = state.agent(self.agent_id)
        s, _ = self.path.project(agent.position)
        steer = pure_pursuit_steer(agent, self.path, s)
        accel = idm_accel(agent.speed, self.turn_speed, None, 0.0)
        return (accel, steer)


class _GiveWayController(Controller):
    def __init__(self, agent_id: int, policy: PlannerPolicy):
        self.agent_id = agent_id
        self.policy = policy

    def _plan(self, state: ScenarioState):
        agent = state.agent(self.agent_id)
        goal = state.goal(self.agent_id)
        desired = self.policy.routes.desired_lane(state, agent, goal)
        return agent, self.policy.routes.build_path(agent, desired, goal)

    def done(self, state: ScenarioState) -> bool:
        agent, plan = self._plan(state)
        if plan.junction_entry_s is None:
            return True
        if plan.junction_entry_s - plan.s_self < -1.0:
            return True  # already past the entry
        return not self.policy.routes.crossing_conflict(state, agent, plan)

    def action(self, state: ScenarioState) -> tuple[float, float]:
        agent, plan = self._plan(state)
        steer = pure_pursuit_steer(agent, plan.line, plan.s_self)
        if plan.junction_entry_s is None:
            return (stopping_accel(agent.speed, 2.0), steer)
        dist = plan.junction_entry_s - plan.s_self - 3.0
        return (stopping_accel(agent.speed, max(dist, 0.1)), steer)


# ---------------------------------------------------------------------------
# Macro definitions
# ---------------------------------------------------------------------------


@dataclass
class MacroAction:
    name: str
    level: str  # "low" | "high"
    params: dict = field(default_factory=dict)

    def applicable(self, state: ScenarioState, agent_id: int) -> tuple[bool, str]:
        return _APPLICABILITY[self.name](state, agent_id, self.params)

    def start(self, state: ScenarioState, agent_id: int, policy: PlannerPolicy) -> Controller:
        ok, reason = self.applicable(state, agent_id)
        if not ok:
            raise MacroNotApplicable(self.name, reason)
        return _STARTERS[self.name](state, agent_id, self.params, policy)


def _adjacent_lane(state: ScenarioState, agent_id: int, step: int) -> LaneRef | None:
    lane, _, _ = state.layout.locate(state.agent(agent_id).position)
    road = state.layout.road(lane.road_id)
    pos = lane.lane_pos + step
    if 0 <= pos < road.lane_count(lane.direction):
        return LaneRef(lane.road_id, lane.direction, pos)
    return None


def _junction_transition(
    state: ScenarioState, agent_id: int, direction: str, kinds: tuple[str, ...]
) -> tuple[LaneRef, LaneRef] | None:
    """Closest upcoming junction edge from the agent's lane matching a turn direction."""
    layout = state.layout
    lane, s, _ = layout.locate(state.agent(agent_id).position)
    if kinds == ("roundabout",) and lane.road_id not in _circulating_roads(layout):
        return None  # exits only apply to vehicles on the circulating carriageway
    line = layout.lane_center(lane)
    if line.length - s > 60.0:
        return None
    graph = layout.graph()
    for _, dst, data in sorted(
        graph.out_edges(lane, data=True),
        key=lambda e: (e[1].road_id, e[1].direction, e[1].lane_pos),
    ):
        if data["kind"] != "junction":
            continue
        junction = next(j for j in layout.junctions if j.junction_id == data["junction_id"])
        if junction.kind not in kinds:
            continue
        if turn_direction(layout, lane, dst) == direction:
            return lane, dst
    return None


def _applicable_stop(state, agent_id, params):
    if state.agent(agent_id).speed <= 1e-9:
        return False, "already stationary"
    return True, ""


def _applicable_continue(state, agent_id, params):
    return True, ""


def _applicable_change(step):
    side = "left" if step < 0 else "right"

    def check(state, agent_id, params):
        if _adjacent_lane(state, agent_id, step) is None:
            return False, f"no lane to the {side}"
        return True, ""

    return check


def _applicable_turn(direction, kinds):
    def check(state, agent_id, params):
        if _junction_transition(state, agent_id, direction, kinds) is None:
            return False, f"no {direction}ward junction connection ahead"
        return True, ""

    return check


def _applicable_give_way(state, agent_id, params):
    agent = state.agent(agent_id)
    lane, s, _ = state.layout.locate(agent.position)
    line = state.layout.lane_center(lane)
    near_junction = line.length - s < 40.0 or state.layout.junction_at(agent.position)
    if not near_junction:
        return False, "no junction entry ahead"
    return True, ""


def _start_stop(state, agent_id, params, policy):
    lane, _, _ = state.layout.locate(state.agent(agent_id).position)
    return _StopController(
        agent_id,
        decel=float(params.get("decel", 4.0)),
        path=straight_path(state.layout, lane),
    )


def _start_continue(state, agent_id, params, policy):
    lane, _, _ = state.layout.locate(state.agent(agent_id).position)
    default_speed = state.layout.road(lane.road_id).speed_limit
    return _ContinueLaneController(
        agent_id,
        duration_ticks=int(params.get("duration_ticks", 20)),
        path=straight_path(state.layout, lane),
        target_speed=float(params.get("target_speed", default_speed)),
    )


def _start_change(step):
    def start(state, agent_id, params, policy):
        target = _adjacent_lane(state, agent_id, step)
        return _ChangeLaneController(agent_id, target, hold_speed=state.agent(agent_id).speed)

    return start


def _start_turn(direction, kinds):
    def start(state, agent_id, params, policy):
        src, dst = _junction_transition(state, agent_id, direction, kinds)
        layout = state.layout
        agent = state.agent(agent_id)
        src_line = layout.lane_center(src)
        s, _ = src_line.project(agent.position)
        connector = layout.connector(src, dst)
        dst_line = layout.lane_center(dst)
        pts = [src_line.point_at(v) for v in np.arange(s, src_line.length, 2.0)]
        pts.extend(connector.points)
        settle = min(12.0, dst_line.length)
        pts.extend(dst_line.point_at(v) for v in np.arange(1.0, settle, 1.0))
        pts.append(dst_line.point_at(settle))
        return _TurnController(
            agent_id,
            Polyline(np.array(pts)),
            settle_s=2.0,
            turn_speed=float(params.get("turn_speed", 5.0)),
        )

    return start


def _start_give_way(state, agent_id, params, policy):
    return _GiveWayController(agent_id, policy)


_APPLICABILITY = {
    "stop": _applicable_stop,
    "continue-lane": _applicable_continue,
    "change-lane-left": _applicable_change(-1),
    "change-lane-right": _applicable_change(1),
    "turn-left": _applicable_turn("left", ("t-junction", "crossroads")),
    "turn-right": _applicable_turn("right", ("t-junction", "crossroads")),
    "exit-left": _applicable_turn("left", ("roundabout",)),
    "exit-right": _applicable_turn("right", ("roundabout",)),
    "give-way": _applicable_give_way,
}

_STARTERS = {
    "stop": _start_stop,
    "continue-lane": _start_continue,
    "change-lane-left": _start_change(-1),
    "change-lane-right": _start_change(1),
    "turn-left": _start_turn("left", ("t-junction", "crossroads")),
    "turn-right": _start_turn("right", ("t-junction", "crossroads")),
    "exit-left": _start_turn("left", ("roundabout",)),
    "exit-right": _start_turn("right", ("roundabout",)),
    "give-way": _start_give_way,
}


class MacroLibrary:
    """Named macro vocabulary, loadable from the packaged data file."""

    def __init__(self, macros: list[MacroAction], aliases: dict[str, tuple[str, ...]] | None = None):
        self.macros = {m.name: m for m in macros}
        self.aliases = dict(MACRO_ALIASES if aliases is None else aliases)

    def __contains__(self, name: str) -> bool:
        return name in self.macros or name in self.aliases

    def names(self) -> list[str]:
        return list(self.macros)

    def get(self, name: str) -> MacroAction:
        if name not in self.macros:
            raise UnknownMacro(name)
        return self.macros[name]

    def resolve(self, name: str, state: ScenarioState, agent_id: int) -> MacroAction:
        """Resolve a (possibly generic) macro name against the current state."""
        if name in self.macros:
            return self.macros[name]
        if name in self.aliases:
            reasons = []
            for concrete in self.aliases[name]:
                macro = self.macros.get(concrete)
                if macro is None:
                    continue
                ok, reason = macro.applicable(state, agent_id)
                if ok:
                    return macro
                reasons.append(f"{concrete}: {reason}")
            raise MacroNotApplicable(name, "; ".join(reasons) or "no concrete macro available")
        raise UnknownMacro(name)

    def restricted(self, names: list[str]) -> "MacroLibrary":
        macros = [self.macros[n] for n in names if n in self.macros]
        aliases = {
            a: tuple(c for c in cs if c in names) for a, cs in self.aliases.items()
        }
        aliases = {a: cs for a, cs in aliases.items() if cs}
        return MacroLibrary(macros, aliases)


def load_library() -> MacroLibrary:
    text = resources.files("whysim").joinpath("data/macros.yaml").read_text()
    spec = yaml.safe_load(text)
    macros = [
        MacroAction(name=m["name"], level=m["level"], params=m.get("params") or {})
        for m in spec["macros"]
    ]
    aliases = {a: tuple(cs) for a, cs in (spec.get("aliases") or {}).items()}
    return MacroLibrary(macros, aliases or None)


# ---------------------------------------------------------------------------
# Expansion
# ---------------------------------------------------------------------------

MAX_EXPANSION_TICKS = 400


def expand(
    macro_name: str,
    state: ScenarioState,
    agent_id: int,
    library: MacroLibrary | None = None,
    policy: PlannerPolicy | None = None,
) -> list[tuple[float, float]]:
    """Expand one macro into the per-tick actions it would execute from ``state``.

    Other agents evolve under the planner during expansion, so termination
    conditions see a live world.
    """
    library = library or load_library()
    policy = policy or PlannerPolicy(state.layout)
    if not state.has_agent(agent_id):
        raise InvalidAgent(f"unknown agent {agent_id}")
    macro = library.resolve(macro_name, state, agent_id)
    controller = macro.start(state, agent_id, policy)
    cur = state
    out: list[tuple[float, float]] = []
    while not controller.done(cur):
        if len(out) >= MAX_EXPANSION_TICKS:
            raise MacroNotApplicable(macro.name, "termination not reached within bound")
        action = controller.action(cur)
        actions = plan_actions(cur, policy, overrides={agent_id: action})
        recorded = actions[agent_id]
        out.append(recorded)
        cur = apply_actions(cur, actions)
    if not out:
        raise MacroNotApplicable(macro.name, "terminated immediately")
    return out


# ---------------------------------------------------------------------------
# H-Macro wrapping
# ---------------------------------------------------------------------------


@dataclass
class _TickInfo:
    road_id: int
    direction: int
    lane_pos: int
    lateral: float
    speed: float
    junction_id: int | None
    junction_kind: str | None
    heading: float


def _lane_infos(trajectory: Trajectory, agent_id: int, layout: RoadLayout) -> list[_TickInfo]:
    infos = []
    for s in trajectory.states:
        agent = s.agent(agent_id)
        lane, _, lat = layout.locate(agent.position)
        junction = layout.junction_at(agent.position)
        infos.append(
            _TickInfo(
                road_id=lane.road_id,
                direction=lane.direction,
                lane_pos=lane.lane_pos,
                lateral=lat,
                speed=agent.speed,
                junction_id=junction.junction_id if junction else None,
                junction_kind=junction.kind if junction else None,
                heading=agent.bearing,
            )
        )
    return infos


STANDSTILL = 0.3
MOVING = 1.0
NEAR_JUNCTION_M = 18.0


def _match_turnlike(infos, i, direction, kinds, circulating=None):
    n = len(infos)
    # The agent must enter a junction of the right kind soon, without
    # stopping first, and leave it on a different road.
    entry = None
    for k in range(i, min(i + 30, n)):
        if infos[k].speed < STANDSTILL:
            return None
        if infos[k].junction_kind in kinds:
            entry = k
            break
        if infos[k].road_id != infos[i].road_id:
            return None
    if entry is None:
        return None
    if circulating is not None and infos[i].road_id not in circulating:
        return None  # exits leave the ring; ring entries are not exits
    exit_tick = entry
    while exit_tick < n and infos[exit_tick].junction_id is not None:
        exit_tick += 1
    if exit_tick >= n:
        return None  # still inside the junction at the end
    if infos[exit_tick].road_id == infos[i].road_id:
        return None  # went straight through
    delta = angle_diff(infos[min(exit_tick + 4, n - 1)].heading, infos[i].heading)
    observed = "left" if delta > math.pi / 6 else "right" if delta < -math.pi / 6 else "straight"
    if observed != direction:
        return None
    # Settle a few ticks onto the new road.
    end = exit_tick
    while end < n and end < exit_tick + 20 and abs(infos[end].lateral) > 1.0:
        end += 1
    return min(max(end, i + 1), n)


def _match_turn(direction):
    kinds = ("t-junction", "crossroads")
    return lambda infos, i: _match_turnlike(infos, i, direction, kinds)


def _circulating_roads(layout: RoadLayout) -> set[int]:
    """Roads forming a roundabout carriageway (linked by >= 2 ring junctions)."""
    counts: dict[int, int] = {}
    for j in layout.junctions:
        if j.kind != "roundabout":
            continue
        for rid in j.roads:
            counts[rid] = counts.get(rid, 0) + 1
    return {rid for rid, c in counts.items() if c >= 2}


def _match_exit(direction, circulating):
    kinds = ("roundabout",)
    return lambda infos, i: _match_turnlike(infos, i, direction, kinds, circulating)


def _match_change(step):
    def match(infos, i):
        n = len(infos)
        base = infos[i]
        flip = None
        for k in range(i + 1, min(i + 45, n)):
            cur = infos[k]
            if cur.road_id != base.road_id or cur.direction != base.direction:
                return None
            if cur.lane_pos == base.lane_pos + step:
                flip = k
                break
            if cur.lane_pos != base.lane_pos:
                return None  # moved the other way
        if flip is None:
            return None
        # Require the drift to start promptly, otherwise the straight prefix
        # belongs to continue-lane.
        probe = min(i + 8, flip)
        if abs(infos[probe].lateral) < max(abs(base.lateral), 0.25):
            return None
        end = flip
        while end < n and end < flip + 40 and abs(infos[end].lateral) > 0.25:
            end += 1
        return min(max(end, i + 1), n)

    return match


def _stationary_end(infos, i):
    n = len(infos)
    if infos[i].speed >= STANDSTILL:
        # A stopping manoeuvre must brake actively from its first ticks;
        # a long cruise that eventually halts is not one long stop.
        probe = min(i + 4, n - 1)
        if infos[probe].speed > infos[i].speed - 0.1:
            return None
    k = i
    while k < n and infos[k].speed >= STANDSTILL:
        if infos[k].speed > infos[max(k - 1, 0)].speed + 0.02:
            return None  # speeding up, not a stopping manoeuvre
        k += 1
    if k >= n:
        return None  # never reached standstill
    halt = k
    end = halt
    while end < n and infos[end].speed <= MOVING:
        end += 1
    return halt, max(end, i + 1)


def _near_junction(infos, layout, trajectory, agent_id, tick):
    state = trajectory.states[tick]
    agent = state.agent(agent_id)
    for j in layout.junctions:
        if float(np.linalg.norm(agent.pos - j.center)) < j.radius + NEAR_JUNCTION_M:
            return True
    return False


def _match_give_way(layout, trajectory, agent_id):
    def match(infos, i):
        res = _stationary_end(infos, i)
        if res is None:
            return None
        halt, end = res
        if halt >= len(infos):
            halt = len(infos) - 1
        if not _near_junction(infos, layout, trajectory, agent_id, halt):
            return None
        return end

    return match


def _match_stop(infos, i):
    res = _stationary_end(infos, i)
    if res is None:
        return None
    return res[1]


def _match_continue(infos, i):
    n = len(infos)
    base = infos[i]
    end = i
    while end < n:
        cur = infos[end]
        if cur.junction_id is not None:
            # Transit a junction only when the agent goes straight through;
            # a heading change there belongs to a turn/exit macro.
            k = end
            while k < n and infos[k].junction_id is not None:
                k += 1
            if k < n:
                delta = abs(angle_diff(infos[k].heading, infos[max(end - 1, i)].heading))
                if delta > math.pi / 6:
                    break
                base = infos[k]
            end = k
            continue
        same_lane = (
            cur.road_id == base.road_id
            and cur.direction == base.direction
            and cur.lane_pos == base.lane_pos
        )
        if not same_lane:
            break
        if abs(cur.lateral) > 1.2:
            break
        if cur.speed < STANDSTILL:
            break
        end += 1
    return None if end == i else end


def wrap_high(
    trajectory: Trajectory, agent_id: int, library: MacroLibrary | None = None
) -> list[MacroSegment]:
    """Greedy left-to-right segmentation of a trajectory into H-macro spans."""
    if not trajectory.states:
        raise ValueError("empty trajectory")
    if not all(s.has_agent(agent_id) for s in trajectory.states):
        raise InvalidAgent(f"agent {agent_id} not present throughout")
    layout = trajectory.states[0].layout
    infos = _lane_infos(trajectory, agent_id, layout)
    circulating = _circulating_roads(layout)
    matchers = {
        "turn-left": _match_turn("left"),
        "turn-right": _match_turn("right"),
        "exit-left": _match_exit("left", circulating),
        "exit-right": _match_exit("right", circulating),
        "change-lane-left": _match_change(-1),
        "change-lane-right": _match_change(1),
        "give-way": _match_give_way(layout, trajectory, agent_id),
        "stop": _match_stop,
        "continue-lane": _match_continue,
    }
    order = [n for n in H_MACRO_ORDER if library is None or n in library.macros]
    n = len(infos)
    base_tick = trajectory.start_tick
    segments: list[MacroSegment] = []
    i = 0
    while i < n:
        claimed = None
        for name in order:
            end = matchers[name](infos, i)
            if end is not None and end > i:
                claimed = MacroSegment(name, agent_id, base_tick + i, base_tick + end)
                break
        if claimed is None:
            claimed = MacroSegment("continue-lane", agent_id, base_tick + i, base_tick + i + 1,
                                   fallback=True)
        # Merge adjacent identical fallback spans.
        if segments and claimed.fallback and segments[-1].fallback:
            prev = segments.pop()
            claimed = MacroSegment(prev.macro_name, agent_id, prev.start_tick,
                                   claimed.end_tick, fallback=True)
        segments.append(claimed)
        i = claimed.end_tick - base_tick
    return segments
