"""Core simulation state types: agents, goals, joint states, trajectories, rewards."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from ..geometry import normalize_angle, oriented_box_corners
from .layout import RoadLayout

TICK_RATE_HZ = 20
DT = 1.0 / TICK_RATE_HZ

VEHICLE_LENGTH = 4.5
VEHICLE_WIDTH = 1.8

DEFAULT_REWARD_WEIGHTS = {
    "time_to_goal": -1.0,
    "cumulative_lateral_acceleration": -0.1,
    "cumulative_jerk": -0.01,
    "collision_penalty": -100.0,
    "goal_reached": 10.0,
}

REWARD_COMPONENT_ORDER = (
    "time_to_goal",
    "cumulative_lateral_acceleration",
    "cumulative_jerk",
    "collision_penalty",
    "goal_reached",
)


class InvalidAgent(ValueError):
    """An operation referenced an agent id that does not exist."""


class InvalidInput(ValueError):
    """An operation received structurally invalid input."""


@dataclass
class AgentState:
    agent_id: int
    position: tuple[float, float]
    velocity: tuple[float, float]
    bearing: float
    acceleration: float = 0.0
    steering: float = 0.0

    def __post_init__(self) -> None:
        if self.agent_id < 0:
            raise InvalidInput("agent_id must be non-negative")
        self.position = (float(self.position[0]), float(self.position[1]))
        self.velocity = (float(self.velocity[0]), float(self.velocity[1]))
        self.bearing = normalize_angle(float(self.bearing))

    @property
    def speed(self) -> float:
        return math.hypot(*self.velocity)

    @property
    def pos(self) -> np.ndarray:
        return np.array(self.position)

    def footprint(self) -> np.ndarray:
        return oriented_box_corners(self.position, self.bearing, VEHICLE_LENGTH, VEHICLE_WIDTH)

    def copy(self) -> "AgentState":
        return replace(self)


@dataclass
class Goal:
    agent_id: int
    region: tuple[float, float, float, float]
    stop_required: bool = False

    def __post_init__(self) -> None:
        xmin, ymin, xmax, ymax = (float(v) for v in self.region)
        if xmax <= xmin or ymax <= ymin:
            raise InvalidInput(f"goal region for agent {self.agent_id} has no area")
        self.region = (xmin, ymin, xmax, ymax)

    def contains(self, state: AgentState) -> bool:
        x, y = state.position
        xmin, ymin, xmax, ymax = self.region
        inside = xmin <= x <= xmax and ymin <= y <= ymax
        if inside and self.stop_required:
            return state.speed < 0.1
        return inside

    @property
    def center(self) -> np.ndarray:
        xmin, ymin, xmax, ymax = self.region
        return np.array([(xmin + xmax) / 2.0, (ymin + ymax) / 2.0])


@dataclass
class ScenarioState:
    layout: RoadLayout
    agents: list[AgentState]
    goals: list[Goal]
    t: int = 0
    dt: float = DT

    def __post_init__(self) -> None:
        if self.t < 0:
            raise InvalidInput("time index must be non-negative")
        ids = [a.agent_id for a in self.agents]
        if len(set(ids)) != len(ids):
            raise InvalidInput("agent ids must be unique")
        goal_ids = {g.agent_id for g in self.goals}
        if goal_ids != set(ids):
            raise InvalidInput("every agent must have exactly one goal")

    def agent(self, agent_id: int) -> AgentState:
        for a in self.agents:
            if a.agent_id == agent_id:
                return a
        raise InvalidAgent(f"unknown agent {agent_id}")

    def goal(self, agent_id: int) -> Goal:
        for g in self.goals:
            if g.agent_id == agent_id:
                return g
        raise InvalidAgent(f"no goal for agent {agent_id}")

    def has_agent(self, agent_id: int) -> bool:
        return any(a.agent_id == agent_id for a in self.agents)

    def copy(self) -> "ScenarioState":
        return ScenarioState(
            layout=self.layout,
            agents=[a.copy() for a in self.agents],
            goals=list(self.goals),
            t=self.t,
            dt=self.dt,
        )


@dataclass
class JointAction:
    agent_id: int
    acceleration: float
    steering: float


@dataclass
class CollisionEvent:
    tick: int
    agent_a: int
    agent_b: int


@dataclass
class Trajectory:
    """Time-ordered record of a rollout.

    ``states``, ``ego_observations`` and ``joint_actions`` always share
    length; entry k describes tick ``states[k].t``.
    """

    states: list[ScenarioState]
    ego_observations: list[list[AgentState]]
    joint_actions: list[list[JointAction]]
    ego_id: int = 0
    collision: CollisionEvent | None = None

    def __post_init__(self) -> None:
        n = len(self.states)
        if len(self.ego_observations) != n or len(self.joint_actions) != n:
            raise InvalidInput("trajectory sequences must share length")
        for prev, cur in zip(self.states, self.states[1:]):
            if cur.t != prev.t + 1:
                raise InvalidInput("tick indices must increase by exactly 1")

    def __len__(self) -> int:
        return len(self.states)

    @property
    def dt(self) -> float:
        return self.states[0].dt if self.states else DT

    @property
    def start_tick(self) -> int:
        return self.states[0].t if self.states else 0

    @property
    def end_tick(self) -> int:
        return self.states[-1].t if self.states else 0

    def state_at(self, tick: int) -> ScenarioState:
        if not self.states or not (self.start_tick <= tick <= self.end_tick):
            raise InvalidInput(f"tick {tick} outside trajectory range")
        return self.states[tick - self.start_tick]

    def agent_ids(self) -> list[int]:
        seen: dict[int, None] = {}
        for s in self.states:
            for a in s.agents:
                seen.setdefault(a.agent_id, None)
        return list(seen)

    def agent_states(self, agent_id: int) -> list[AgentState]:
        out = []
        for s in self.states:
            if s.has_agent(agent_id):
                out.append(s.agent(agent_id))
        if not out:
            raise InvalidAgent(f"agent {agent_id} absent from trajectory")
        return out

    def actions_of(self, agent_id: int) -> list[tuple[float, float]]:
        out = []
        for row in self.joint_actions:
            for act in row:
                if act.agent_id == agent_id:
                    out.append((act.acceleration, act.steering))
        return out

    def slice_from(self, tick: int) -> "Trajectory":
        if tick < self.start_tick or tick > self.end_tick:
            raise InvalidInput(f"tick {tick} outside trajectory range")
        k = tick - self.start_tick
        collision = self.collision
        if collision is not None and collision.tick < tick:
            collision = None
        return Trajectory(
            states=self.states[k:],
            ego_observations=self.ego_observations[k:],
            joint_actions=self.joint_actions[k:],
            ego_id=self.ego_id,
            collision=collision,
        )

    def truncated(self, tick: int) -> "Trajectory":
        if tick < self.start_tick:
            raise InvalidInput(f"tick {tick} before trajectory start")
        tick = min(tick, self.end_tick)
        k = tick - self.start_tick + 1
        collision = self.collision
        if collision is not None and collision.tick > tick:
            collision = None
        return Trajectory(
            states=self.states[:k],
            ego_observations=self.ego_observations[:k],
            joint_actions=self.joint_actions[:k],
            ego_id=self.ego_id,
            collision=collision,
        )


@dataclass
class RewardBreakdown:
    components: dict[str, float]
    weights: dict[str, float]
    total: float = field(init=False)

    def __post_init__(self) -> None:
        self.total = sum(self.weights.get(k, 0.0) * v for k, v in self.components.items())

    def ordered_components(self) -> list[tuple[str, float]]:
        known = [(k, self.components[k]) for k in REWARD_COMPONENT_ORDER if k in self.components]
        extra = sorted(
            (k, v) for k, v in self.components.items() if k not in REWARD_COMPONENT_ORDER
        )
        return known + extra


def export_trajectory(trajectory: Trajectory) -> str:
    """Line-delimited trajectory records for the UI and golden tests."""
    lines = ["tick,agent_id,x,y,vx,vy,bearing,accel,steer"]
    for state, actions in zip(trajectory.states, trajectory.joint_actions):
        acts = {a.agent_id: a for a in actions}
        for agent in sorted(state.agents, key=lambda a: a.agent_id):
            act = acts.get(agent.agent_id)
            accel = act.acceleration if act else 0.0
            steer = act.steering if act else 0.0
            lines.append(
                f"{state.t},{agent.agent_id},"
                f"{agent.position[0]:.6f},{agent.position[1]:.6f},"
                f"{agent.velocity[0]:.6f},{agent.velocity[1]:.6f},"
                f"{agent.bearing:.6f},{accel:.6f},{steer:.6f}"
            )
    return "\n".join(lines) + "\n"
