"""Scenario library: ten scripted driving situations as loadable data.

Scenarios 1-5 show rational behaviour, 6-7 contain an irrational vehicle and
8-10 contain occluded vehicles. Each scenario file carries the road layout,
initial agents and goals, scripted macro overrides, user prompts, the expert
reference description used by the correctness metric, and the goal/action
multiple-choice options (artifact-authored distractors).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from importlib import resources

import yaml

from ..macros import load_library
from ..simulation.engine import ScheduledMacros, Simulator
from ..simulation.layout import Junction, Road, RoadLayout
from ..simulation.state import AgentState, DEFAULT_REWARD_WEIGHTS, Goal, ScenarioState, Trajectory

SCENARIO_IDS = tuple(range(1, 11))

CATEGORY_BY_ID = {
    **{i: "rational" for i in (1, 2, 3, 4, 5)},
    **{i: "irrational" for i in (6, 7)},
    **{i: "occlusion" for i in (8, 9, 10)},
}


class UnknownScenario(KeyError):
    pass


class ValidationFailed(ValueError):
    pass


@dataclass
class UserPrompt:
    text: str
    time: int
    ego_id: int = 0


@dataclass
class McqTask:
    options: list[str]
    correct: int

    def __post_init__(self) -> None:
        if len(self.options) != 4 or len(set(self.options)) != 4:
            raise ValidationFailed("MCQ tasks need exactly 4 distinct options")
        if not 0 <= self.correct < 4:
            raise ValidationFailed("MCQ correct index out of range")


@dataclass
class ScenarioSpec:
    scenario_id: int
    name: str
    category: str
    summary: str
    layout: RoadLayout
    agents: list[AgentState]
    goals: list[Goal]
    overrides: list[ScheduledMacros]
    user_prompts: list[UserPrompt]
    expert_description: str
    goal_task: McqTask
    action_task: McqTask
    ego_id: int = 0
    horizon: int = 600
    vehicle_occlusion: bool = False
    reward_weights: dict[str, float] = field(default_factory=lambda: dict(DEFAULT_REWARD_WEIGHTS))
    macro_names: list[str] | None = None

    def initial_state(self) -> ScenarioState:
        return ScenarioState(
            layout=self.layout,
            agents=[a.copy() for a in self.agents],
            goals=list(self.goals),
            t=0,
        )

    def has_agent(self, agent_id: int) -> bool:
        return any(a.agent_id == agent_id for a in self.agents)


def _data_text(filename: str) -> str:
    return resources.files("whysim").joinpath(f"scenarios/data/{filename}").read_text()


def _parse_layout(doc: dict) -> RoadLayout:
    roads = [
        Road(
            road_id=r["id"],
            centerline=r["centerline"],
            lanes_forward=r.get("lanes_forward", 1),
            lanes_backward=r.get("lanes_backward", 0),
            lane_width=r.get("lane_width", 3.5),
            priority=r.get("priority", 1),
            speed_limit=r.get("speed_limit", 10.0),
            name=r.get("name", ""),
        )
        for r in doc["roads"]
    ]
    junctions = [
        Junction(
            junction_id=j["id"],
            roads=j["roads"],
            kind=j["kind"],
            center=j["center"],
            radius=j.get("radius", 10.0),
        )
        for j in doc.get("junctions", [])
    ]
    obstacles = [tuple(rect) for rect in doc.get("obstacles", [])]
    return RoadLayout(
        roads=roads, junctions=junctions, obstacles=obstacles, summary=doc.get("summary", "")
    )


def _parse_spec(doc: dict) -> ScenarioSpec:
    import math

    agents = []
    goals = []
    for a in doc["agents"]:
        bearing = float(a.get("bearing", 0.0))
        speed = float(a.get("speed", 0.0))
        agents.append(
            AgentState(
                agent_id=a["id"],
                position=tuple(a["position"]),
                velocity=(speed * math.cos(bearing), speed * math.sin(bearing)),
                bearing=bearing,
            )
        )
        goals.append(
            Goal(
                agent_id=a["id"],
                region=tuple(a["goal"]),
                stop_required=bool(a.get("stop_required", False)),
            )
        )
    overrides = [
        ScheduledMacros(agent_id=o["agent"], at_tick=o["at_tick"], macros=list(o["macros"]))
        for o in doc.get("overrides", [])
    ]
    prompts = [
        UserPrompt(text=p["text"], time=p["time"], ego_id=p.get("ego", doc.get("ego_id", 0)))
        for p in doc["user_prompts"]
    ]
    layout = _parse_layout(doc["layout"])
    layout.summary = doc.get("summary", layout.summary)
    weights = dict(DEFAULT_REWARD_WEIGHTS)
    weights.update(doc.get("reward_weights", {}))
    return ScenarioSpec(
        scenario_id=doc["id"],
        name=doc.get("name", f"scenario-{doc['id']}"),
        category=doc["category"],
        summary=doc.get("summary", ""),
        layout=layout,
        agents=agents,
        goals=goals,
        overrides=overrides,
        user_prompts=prompts,
        expert_description=doc["expert_description"].strip(),
        goal_task=McqTask(**doc["mcq"]["goal"]),
        action_task=McqTask(**doc["mcq"]["action"]),
        ego_id=doc.get("ego_id", 0),
        horizon=doc.get("horizon", 600),
        vehicle_occlusion=bool(doc.get("vehicle_occlusion", False)),
        reward_weights=weights,
        macro_names=doc.get("macros"),
    )


def _validate(spec: ScenarioSpec) -> None:
    expected = CATEGORY_BY_ID.get(spec.scenario_id)
    if expected and spec.category != expected:
        raise ValidationFailed(
            f"scenario {spec.scenario_id}: category {spec.category!r}, expected {expected!r}"
        )
    if spec.category == "irrational" and not spec.overrides:
        raise ValidationFailed(
            f"scenario {spec.scenario_id}: irrational scenarios need a behaviour override"
        )
    ids = {a.agent_id for a in spec.agents}
    for prompt in spec.user_prompts:
        if prompt.time > spec.horizon:
            raise ValidationFailed(f"prompt time {prompt.time} beyond horizon {spec.horizon}")
        if prompt.ego_id not in ids:
            raise ValidationFailed(f"prompt ego {prompt.ego_id} does not exist")
        for ref in _referenced_vehicles(prompt.text):
            if ref not in ids:
                raise ValidationFailed(
                    f"prompt {prompt.text!r} references unknown vehicle {ref}"
                )
    for override in spec.overrides:
        if override.agent_id not in ids:
            raise ValidationFailed(f"override references unknown agent {override.agent_id}")


def _referenced_vehicles(text: str) -> list[int]:
    import re

    return [int(m) for m in re.findall(r"[Vv]ehicle\s+(\d+)", text)]


def load(scenario_id: int) -> ScenarioSpec:
    """Load and validate one scenario by id (1..10)."""
    if scenario_id not in SCENARIO_IDS:
        raise UnknownScenario(f"scenario id must be in 1..10, got {scenario_id}")
    doc = yaml.safe_load(_data_text(f"scenario_{scenario_id:02d}.yaml"))
    spec = _parse_spec(doc)
    if spec.scenario_id != scenario_id:
        raise ValidationFailed(f"file for {scenario_id} declares id {spec.scenario_id}")
    _validate(spec)
    return spec


def load_all() -> list[ScenarioSpec]:
    return [load(i) for i in SCENARIO_IDS]


def build_simulator(spec: ScenarioSpec, seed: int = 0) -> Simulator:
    library = load_library()
    if spec.macro_names:
        library = library.restricted(spec.macro_names)
    return Simulator(
        spec.initial_state(),
        ego_id=spec.ego_id,
        horizon=spec.horizon,
        schedule=spec.overrides,
        vehicle_occlusion=spec.vehicle_occlusion,
        macro_library=library,
        reward_weights=spec.reward_weights,
        seed=seed,
    )


def baseline_run(scenario_id: int, seed: int = 0) -> Trajectory:
    """Simulate the scripted scenario to its horizon or terminal event."""
    spec = load(scenario_id)
    return build_simulator(spec, seed=seed).baseline()
