"""Rollout engine: baseline simulation, counterfactual queries, rewards.

All rollouts re-simulate deterministically from the scenario's initial state,
so a counterfactual prefix is bit-identical to the factual trajectory up to
the intervention time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from ..geometry import cross2
from ..macros import Controller, MacroAction, MacroLibrary, MacroNotApplicable, load_library
from ..queries import Query
from .layout import RoadLayout
from .planner import PlannerPolicy
from .state import (
    AgentState,
    CollisionEvent,
    DEFAULT_REWARD_WEIGHTS,
    Goal,
    InvalidAgent,
    InvalidInput,
    JointAction,
    RewardBreakdown,
    ScenarioState,
    Trajectory,
)
from .world import plan_actions, apply_actions, find_collision, visible_agents


class TimeOutOfRange(ValueError):
    pass


def reach(trajectory: Trajectory, goal: Goal) -> int | None:
    """First tick at which the agent's state enters the goal region, if any."""
    if not trajectory.states:
        raise InvalidInput("empty trajectory")
    if not any(s.has_agent(goal.agent_id) for s in trajectory.states):
        raise InvalidAgent(f"agent {goal.agent_id} absent from trajectory")
    for state in trajectory.states:
        if state.has_agent(goal.agent_id) and goal.contains(state.agent(goal.agent_id)):
            return state.t
    return None


def compute_reward(
    trajectory: Trajectory,
    agent_id: int,
    weights: dict[str, float] | None = None,
) -> RewardBreakdown:
    """Reward components for one agent over a full trajectory."""
    if not trajectory.states:
        raise InvalidInput("empty trajectory")
    dt = trajectory.dt
    if dt <= 0:
        raise InvalidInput("dt must be positive")
    weights = dict(DEFAULT_REWARD_WEIGHTS if weights is None else weights)
    states = trajectory.agent_states(agent_id)
    if len(states) != len(trajectory):
        raise InvalidAgent(f"agent {agent_id} not present in all states")
    goal = trajectory.states[0].goal(agent_id)

    reached_tick = reach(trajectory, goal)
    duration = (trajectory.end_tick - trajectory.start_tick) * dt
    time_to_goal = (reached_tick - trajectory.start_tick) * dt if reached_tick is not None else duration

    velocities = np.array([s.velocity for s in states])
    accels = np.diff(velocities, axis=0) / dt
    lateral = 0.0
    for k in range(len(accels)):
        speed = float(np.linalg.norm(velocities[k]))
        if speed > 1e-9:
            heading = velocities[k] / speed
        else:
            heading = np.array([math.cos(states[k].bearing), math.sin(states[k].bearing)])
        lateral += abs(cross2(heading, accels[k]))
    jerk = 0.0
    if len(accels) >= 2:
        diffs = np.diff(accels, axis=0) / dt
        jerk = float(np.sum(np.hypot(diffs[:, 0], diffs[:, 1])))

    collided = trajectory.collision is not None and agent_id in (
        trajectory.collision.agent_a,
        trajectory.collision.agent_b,
    )
    components = {
        "time_to_goal": time_to_goal,
        "cumulative_lateral_acceleration": lateral,
        "cumulative_jerk": jerk,
        "collision_penalty": 1.0 if collided else 0.0,
        "goal_reached": 1.0 if reached_tick is not None else 0.0,
    }
    return RewardBreakdown(components=components, weights=weights)


@dataclass
class ScheduledMacros:
    """Forced macro sequence for one agent starting at a fixed tick.

    Entries are macro names or ``{"name": ..., "params": {...}}`` mappings;
    parameters override the library defaults for that invocation only.
    """

    agent_id: int
    at_tick: int
    macros: list


@dataclass
class _Intervention:
    remove_ids: set[int] = field(default_factory=set)
    add_agent: tuple[int, AgentState, Goal] | None = None  # (tick, agent, goal)
    whatif: tuple[int, int, list[str]] | None = None  # (tick, agent, macros)


class Simulator:
    """Deterministic scenario simulator with counterfactual query support."""

    def __init__(
        self,
        initial_state: ScenarioState,
        *,
        ego_id: int = 0,
        horizon: int = 800,
        schedule: list[ScheduledMacros] | None = None,
        vehicle_occlusion: bool = False,
        macro_library: MacroLibrary | None = None,
        reward_weights: dict[str, float] | None = None,
        seed: int = 0,
    ):
        self.initial_state = initial_state
        self.ego_id = ego_id
        self.horizon = horizon
        self.schedule = sorted(schedule or [], key=lambda s: (s.at_tick, s.agent_id))
        self.vehicle_occlusion = vehicle_occlusion
        self.library = macro_library or load_library()
        self.reward_weights = dict(DEFAULT_REWARD_WEIGHTS if reward_weights is None else reward_weights)
        self.seed = seed
        self.policy = PlannerPolicy(initial_state.layout)

    @property
    def layout(self) -> RoadLayout:
        return self.initial_state.layout

    def observe(self, state: ScenarioState) -> list[AgentState]:
        """Ego observation: own state plus all visible other agents, by id."""
        if not state.has_agent(self.ego_id):
            return []
        others = visible_agents(state, self.ego_id, vehicle_occlusion=self.vehicle_occlusion)
        out = [state.agent(self.ego_id)] + others
        return sorted((a.copy() for a in out), key=lambda a: a.agent_id)

    # -- rollout --------------------------------------------------------

    def rollout(
        self,
        max_tick: int | None = None,
        intervention: _Intervention | None = None,
    ) -> Trajectory:
        """Simulate from tick 0 until all goals reached, collision or horizon."""
        iv = intervention or _Intervention()
        horizon = self.horizon if max_tick is None else min(max_tick, self.horizon)
        state = self.initial_state.copy()
        if iv.remove_ids:
            state = _without_agents(state, iv.remove_ids)
        if iv.add_agent and iv.add_agent[0] == 0:
            state = _with_agent(state, iv.add_agent[1], iv.add_agent[2])

        schedule = [s for s in self.schedule if s.agent_id not in iv.remove_ids]
        if iv.whatif is not None:
            w_tick, w_agent, _ = iv.whatif
            schedule = [
                s for s in schedule if not (s.agent_id == w_agent and s.at_tick >= w_tick)
            ]

        controllers: dict[int, Controller] = {}
        queues: dict[int, list[str]] = {}

        states = [state]
        observations = [self.observe(state)]
        actions_log: list[list[JointAction]] = []
        collision: CollisionEvent | None = None
        reached: set[int] = set()
        self._update_reached(state, reached)

        while True:
            cur = states[-1]
            if cur.t >= horizon:
                break
            if reached and reached == {a.agent_id for a in cur.agents}:
                break
            if iv.add_agent and iv.add_agent[0] == cur.t and not cur.has_agent(iv.add_agent[1].agent_id):
                cur = _with_agent(cur, iv.add_agent[1], iv.add_agent[2])
                states[-1] = cur
                observations[-1] = self.observe(cur)
            self._start_scheduled(cur, schedule, controllers, queues)
            if iv.whatif is not None and iv.whatif[0] == cur.t:
                _, w_agent, w_macros = iv.whatif
                controllers.pop(w_agent, None)
                queues[w_agent] = list(w_macros)
            overrides = self._controller_actions(cur, controllers, queues)
            actions = plan_actions(cur, self.policy, overrides)
            actions_log.append(
                [JointAction(aid, a, d) for aid, (a, d) in sorted(actions.items())]
            )
            nxt = apply_actions(cur, actions)
            states.append(nxt)
            observations.append(self.observe(nxt))
            pair = find_collision(nxt)
            self._update_reached(nxt, reached)
            if pair is not None:
                collision = CollisionEvent(tick=nxt.t, agent_a=pair[0], agent_b=pair[1])
                break

        actions_log.append(
            [JointAction(a.agent_id, 0.0, 0.0) for a in sorted(states[-1].agents, key=lambda x: x.agent_id)]
        )
        return Trajectory(
            states=states,
            ego_observations=observations,
            joint_actions=actions_log,
            ego_id=self.ego_id,
            collision=collision,
        )

    def _update_reached(self, state: ScenarioState, reached: set[int]) -> None:
        for agent in state.agents:
            if agent.agent_id in reached:
                continue
            if state.goal(agent.agent_id).contains(agent):
                reached.add(agent.agent_id)

    def _start_scheduled(self, state, schedule, controllers, queues) -> None:
        for entry in schedule:
            if entry.at_tick == state.t and state.has_agent(entry.agent_id):
                controllers.pop(entry.agent_id, None)
                queues[entry.agent_id] = list(entry.macros)

    def _controller_actions(self, state, controllers, queues) -> dict[int, tuple[float, float]]:
        overrides: dict[int, tuple[float, float]] = {}
        for agent_id in sorted(set(controllers) | set(queues)):
            if not state.has_agent(agent_id):
                controllers.pop(agent_id, None)
                queues.pop(agent_id, None)
                continue
            ctrl = controllers.get(agent_id)
            while ctrl is None or ctrl.done(state):
                pending = queues.get(agent_id)
                if not pending:
                    ctrl = None
                    break
                entry = pending.pop(0)
                if isinstance(entry, dict):
                    base = self.library.resolve(entry["name"], state, agent_id)
                    macro = MacroAction(
                        name=base.name,
                        level=base.level,
                        params={**base.params, **(entry.get("params") or {})},
                    )
                else:
                    macro = self.library.resolve(entry, state, agent_id)
                ctrl = macro.start(state, agent_id, self.policy)
            if ctrl is None:
                controllers.pop(agent_id, None)
                queues.pop(agent_id, None)
                continue
            controllers[agent_id] = ctrl
            overrides[agent_id] = ctrl.action(state)
        return overrides

    # -- queries ----------------------------------------------------------

    def baseline(self, max_tick: int | None = None) -> Trajectory:
        return self.rollout(max_tick=max_tick)

    def run_query(
        self,
        trajectory_so_far: Trajectory,
        query: Query,
        horizon: int | None = None,
    ) -> tuple[Trajectory, RewardBreakdown]:
        """Apply one interrogation query and return (rollout from tau, ego reward)."""
        horizon = self.horizon if horizon is None else min(horizon, self.horizon)
        tau = getattr(query, "time", None)
        if tau is not None and not 0 <= tau <= horizon:
            raise TimeOutOfRange(f"time {tau} outside [0, {horizon}]")

        if query.variant == "what":
            if trajectory_so_far.end_tick >= tau >= trajectory_so_far.start_tick:
                base = trajectory_so_far
            else:
                base = self.rollout(max_tick=max(tau, trajectory_so_far.end_tick))
            tick = min(tau, base.end_tick)
            slice_ = base.truncated(tick).slice_from(tick)
            reward = compute_reward(base.truncated(tick), self.ego_id, self.reward_weights)
            return slice_, reward

        if query.variant == "remove":
            if not self.initial_state.has_agent(query.agent):
                raise InvalidAgent(f"unknown agent {query.agent}")
            if query.agent == self.ego_id:
                raise InvalidAgent("cannot remove the ego agent")
            result = self.rollout(
                max_tick=horizon, intervention=_Intervention(remove_ids={query.agent})
            )
            return result, compute_reward(result, self.ego_id, self.reward_weights)

        if query.variant == "whatif":
            if not self.initial_state.has_agent(query.agent):
                raise InvalidAgent(f"unknown agent {query.agent}")
            iv = _Intervention(whatif=(tau, query.agent, list(query.macros)))
            result = self.rollout(max_tick=horizon, intervention=iv)
            if result.end_tick < tau:
                raise TimeOutOfRange(
                    f"baseline ends at tick {result.end_tick} before time {tau}"
                )
            out = result.slice_from(tau)
            return out, compute_reward(out, self.ego_id, self.reward_weights)

        if query.variant == "add":
            agent, goal = self._snapped_agent(query.start, query.goal)
            tau = tau or 0
            iv = _Intervention(add_agent=(tau, agent, goal))
            result = self.rollout(max_tick=horizon, intervention=iv)
            if result.end_tick < tau:
                raise TimeOutOfRange(
                    f"baseline ends at tick {result.end_tick} before time {tau}"
                )
            out = result.slice_from(tau)
            return out, compute_reward(out, self.ego_id, self.reward_weights)

        raise InvalidInput(f"query variant {query.variant!r} is not simulatable")

    def _snapped_agent(self, start, goal_point) -> tuple[AgentState, Goal]:
        """Snap raw add-query coordinates to the nearest lane centrelines."""
        layout = self.layout
        lane, s, _ = layout.locate(np.asarray(start, dtype=float))
        line = layout.lane_center(lane)
        pos = line.point_at(s)
        bearing = line.heading_at(s)
        speed = min(8.0, layout.road(lane.road_id).speed_limit)
        new_id = max((a.agent_id for a in self.initial_state.agents), default=-1) + 1
        agent = AgentState(
            agent_id=new_id,
            position=(float(pos[0]), float(pos[1])),
            velocity=(speed * math.cos(bearing), speed * math.sin(bearing)),
            bearing=bearing,
        )
        g_lane, g_s, _ = layout.locate(np.asarray(goal_point, dtype=float))
        g_pos = layout.lane_center(g_lane).point_at(g_s)
        region = (float(g_pos[0]) - 2.0, float(g_pos[1]) - 2.0,
                  float(g_pos[0]) + 2.0, float(g_pos[1]) + 2.0)
        return agent, Goal(agent_id=new_id, region=region)


def _without_agents(state: ScenarioState, ids: set[int]) -> ScenarioState:
    for agent_id in ids:
        if not state.has_agent(agent_id):
            raise InvalidAgent(f"unknown agent {agent_id}")
    return ScenarioState(
        layout=state.layout,
        agents=[a.copy() for a in state.agents if a.agent_id not in ids],
        goals=[g for g in state.goals if g.agent_id not in ids],
        t=state.t,
        dt=state.dt,
    )


def _with_agent(state: ScenarioState, agent: AgentState, goal: Goal) -> ScenarioState:
    if state.has_agent(agent.agent_id):
        raise InvalidAgent(f"agent {agent.agent_id} already exists")
    return ScenarioState(
        layout=state.layout,
        agents=[a.copy() for a in state.agents] + [agent.copy()],
        goals=list(state.goals) + [replace(goal)],
        t=state.t,
        dt=state.dt,
    )
