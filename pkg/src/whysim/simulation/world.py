"""Joint world stepping: planner policies, action overrides, collision checks."""

from __future__ import annotations

from dataclasses import dataclass, field

from ..geometry import boxes_overlap, segment_intersects_aabb, segment_intersects_box
from .physics import clamp_action, integrate
from .planner import PlannerPolicy
from .state import AgentState, InvalidAgent, ScenarioState


@dataclass
class StepResult:
    state: ScenarioState
    actions: dict[int, tuple[float, float]]
    collision: tuple[int, int] | None = None


def plan_actions(
    state: ScenarioState,
    policy: PlannerPolicy,
    overrides: dict[int, tuple[float, float]] | None = None,
) -> dict[int, tuple[float, float]]:
    """Choose one (acceleration, steering) per agent, override-aware."""
    overrides = overrides or {}
    for agent_id in overrides:
        if not state.has_agent(agent_id):
            raise InvalidAgent(f"override for unknown agent {agent_id}")
    actions: dict[int, tuple[float, float]] = {}
    for agent in sorted(state.agents, key=lambda a: a.agent_id):
        if agent.agent_id in overrides:
            actions[agent.agent_id] = clamp_action(*overrides[agent.agent_id])
        else:
            actions[agent.agent_id] = clamp_action(*policy.action(state, agent.agent_id))
    return actions


def apply_actions(state: ScenarioState, actions: dict[int, tuple[float, float]]) -> ScenarioState:
    agents = []
    for agent in state.agents:
        accel, steer = actions.get(agent.agent_id, (0.0, 0.0))
        agents.append(integrate(agent, accel, steer, state.dt))
    return ScenarioState(
        layout=state.layout,
        agents=agents,
        goals=list(state.goals),
        t=state.t + 1,
        dt=state.dt,
    )


def step(
    state: ScenarioState,
    policy: PlannerPolicy,
    overrides: dict[int, tuple[float, float]] | None = None,
) -> StepResult:
    """Advance the joint state one tick; detects collisions in the new state."""
    actions = plan_actions(state, policy, overrides)
    new_state = apply_actions(state, actions)
    return StepResult(state=new_state, actions=actions, collision=find_collision(new_state))


def find_collision(state: ScenarioState) -> tuple[int, int] | None:
    agents = sorted(state.agents, key=lambda a: a.agent_id)
    boxes = [(a.agent_id, a.footprint()) for a in agents]
    for i in range(len(boxes)):
        for j in range(i + 1, len(boxes)):
            if boxes_overlap(boxes[i][1], boxes[j][1]):
                return (boxes[i][0], boxes[j][0])
    return None


def visible_agents(
    state: ScenarioState, observer: int, *, vehicle_occlusion: bool = False
) -> list[AgentState]:
    """All agents the observer can see; occluded and self entries excluded.

    Line of sight runs from the observer's centre to each target's centre and
    is blocked by the layout's obstacle rectangles. With ``vehicle_occlusion``
    other vehicles' bodies also block sight lines.
    """
    me = state.agent(observer)
    out = []
    for other in sorted(state.agents, key=lambda a: a.agent_id):
        if other.agent_id == observer:
            continue
        blocked = any(
            segment_intersects_aabb(me.position, other.position, rect)
            for rect in state.layout.obstacles
        )
        if not blocked and vehicle_occlusion:
            for mid in state.agents:
                if mid.agent_id in (observer, other.agent_id):
                    continue
                if segment_intersects_box(me.position, other.position, mid.footprint()):
                    blocked = True
                    break
        if not blocked:
            out.append(other)
    return out


@dataclass
class WorldConfig:
    """Rollout bookkeeping shared by the engine and macro expansion."""

    ego_id: int = 0
    vehicle_occlusion: bool = False
    horizon: int = 800
    seed: int = 0
    goal_ticks: dict[int, int] = field(default_factory=dict)
