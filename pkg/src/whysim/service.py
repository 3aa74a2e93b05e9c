"""HTTP service for the analyst console: scenarios, queries, sessions, events.

The UI never recomputes simulation truth; every trajectory, reward and score
it shows comes from these endpoints.
"""

from __future__ import annotations

import json
import threading
import uuid
from dataclasses import dataclass, field
from pathlib import Path

from fastapi import FastAPI, HTTPException
from fastapi.responses import PlainTextResponse, StreamingResponse
from pydantic import BaseModel

from .llm import ProviderConfig
from .orchestrator import CONTEXT_FEATURES, SessionConfig
from .pipeline import run_session
from .queries import QueryError, parse, render, validate
from .scenarios import SCENARIO_IDS, ScenarioSpec, build_simulator, load
from .simulation.engine import TimeOutOfRange
from .simulation.state import InvalidAgent, Trajectory
from .macros import MacroNotApplicable

GRAMMAR_PATH = Path(__file__).resolve().parent.parent.parent / "docs" / "query_grammar.ebnf"


def layout_payload(spec: ScenarioSpec) -> dict:
    layout = spec.layout
    lanes = []
    for lane in layout.lanes():
        line = layout.lane_center(lane).resample(2.0)
        lanes.append({
            "road_id": lane.road_id,
            "direction": lane.direction,
            "lane_pos": lane.lane_pos,
            "points": [[round(float(x), 3), round(float(y), 3)] for x, y in line.points],
        })
    return {
        "summary": layout.summary,
        "roads": [
            {
                "id": road.road_id,
                "name": road.name,
                "centerline": [[float(x), float(y)] for x, y in road.centerline],
                "lanes_forward": road.lanes_forward,
                "lanes_backward": road.lanes_backward,
                "lane_width": road.lane_width,
                "priority": road.priority,
            }
            for road in layout.roads
        ],
        "lanes": lanes,
        "junctions": [
            {"id": j.junction_id, "roads": list(j.roads), "kind": j.kind,
             "center": [float(j.center[0]), float(j.center[1])], "radius": j.radius}
            for j in layout.junctions
        ],
        "obstacles": [list(rect) for rect in layout.obstacles],
        "bbox": list(layout.bounding_box()),
    }


def trajectory_payload(trajectory: Trajectory) -> dict:
    frames = []
    for state, observation in zip(trajectory.states, trajectory.ego_observations):
        visible = [a.agent_id for a in observation]
        frames.append({
            "tick": state.t,
            "time_s": round(state.t * state.dt, 3),
            "agents": [
                {
                    "id": a.agent_id,
                    "x": round(a.position[0], 3),
                    "y": round(a.position[1], 3),
                    "vx": round(a.velocity[0], 3),
                    "vy": round(a.velocity[1], 3),
                    "bearing": round(a.bearing, 4),
                    "speed": round(a.speed, 3),
                }
                for a in sorted(state.agents, key=lambda a: a.agent_id)
            ],
            "visible_to_ego": visible,
        })
    return {
        "ego_id": trajectory.ego_id,
        "start_tick": trajectory.start_tick,
        "end_tick": trajectory.end_tick,
        "dt": trajectory.dt,
        "collision": (
            None if trajectory.collision is None else {
                "tick": trajectory.collision.tick,
                "agents": [trajectory.collision.agent_a, trajectory.collision.agent_b],
            }
        ),
        "frames": frames,
    }


class QueryRequest(BaseModel):
    text: str
    horizon: int | None = None


class SessionRequest(BaseModel):
    scenario_id: int
    prompt_index: int = 0
    provider: str = "stub"
    script: list[str] | None = None
    model: str = ""
    endpoint: str = ""
    credential_env: str = "WHYSIM_API_KEY"
    n_max: int = 10
    complexity: str = "complex"
    features: dict[str, bool] | None = None
    seed: int = 0


@dataclass
class SessionJob:
    session_id: str
    request: SessionRequest
    status: str = "running"
    error: str = ""
    events: list[dict] = field(default_factory=list)
    record: dict | None = None
    scores: dict | None = None
    condition: threading.Condition = field(default_factory=threading.Condition)

    def emit(self, kind: str, payload: dict) -> None:
        with self.condition:
            self.events.append({"kind": kind, **payload})
            self.condition.notify_all()

    def finish(self, status: str, record: dict | None = None, error: str = "") -> None:
        with self.condition:
            self.status = status
            self.record = record
            self.error = error
            self.events.append({"kind": "status", "status": status, "error": error})
            self.condition.notify_all()


class SessionManager:
    def __init__(self):
        self.jobs: dict[str, SessionJob] = {}
        self._lock = threading.Lock()

    def create(self, request: SessionRequest) -> SessionJob:
        job = SessionJob(session_id=uuid.uuid4().hex[:12], request=request)
        with self._lock:
            self.jobs[job.session_id] = job
        thread = threading.Thread(target=self._run, args=(job,), daemon=True)
        thread.start()
        return job

    def get(self, session_id: str) -> SessionJob:
        job = self.jobs.get(session_id)
        if job is None:
            raise KeyError(session_id)
        return job

    def _run(self, job: SessionJob) -> None:
        request = job.request
        try:
            spec = load(request.scenario_id)
            features = {name: True for name in CONTEXT_FEATURES}
            if request.features:
                features.update(request.features)
            config = SessionConfig(
                n_max=request.n_max,
                complexity=request.complexity,
                features=features,
                seed=request.seed,
            )
            provider_cfg = ProviderConfig(
                provider=request.provider,
                model=request.model,
                endpoint=request.endpoint,
                credential_env=request.credential_env,
                script=request.script,
            )
            record = run_session(
                spec, request.prompt_index, provider_cfg, config,
                on_event=lambda kind, payload: job.emit(kind, payload),
            )
            job.finish("done", record=record.to_dict())
        except Exception as exc:  # noqa: BLE001 - surfaced to the client
            job.finish("error", error=f"{type(exc).__name__}: {exc}")


def create_app() -> FastAPI:
    app = FastAPI(title="whysim", version="0.1.0")
    manager = SessionManager()
    simulators = {}
    baselines = {}

    def simulator_for(scenario_id: int):
        if scenario_id not in SCENARIO_IDS:
            raise HTTPException(404, f"unknown scenario {scenario_id}")
        if scenario_id not in simulators:
            spec = load(scenario_id)
            simulators[scenario_id] = (spec, build_simulator(spec))
        return simulators[scenario_id]

    def baseline_for(scenario_id: int) -> Trajectory:
        if scenario_id not in baselines:
            _, sim = simulator_for(scenario_id)
            baselines[scenario_id] = sim.baseline()
        return baselines[scenario_id]

    @app.get("/scenarios")
    def list_scenarios():
        out = []
        for scenario_id in SCENARIO_IDS:
            spec = load(scenario_id)
            out.append({
                "id": spec.scenario_id,
                "name": spec.name,
                "category": spec.category,
                "summary": spec.summary,
                "agents": len(spec.agents),
                "prompts": [
                    {"text": p.text, "time": p.time, "ego": p.ego_id}
                    for p in spec.user_prompts
                ],
            })
        return out

    @app.get("/scenarios/{scenario_id}")
    def get_scenario(scenario_id: int):
        spec, _ = simulator_for(scenario_id)
        return {
            "id": spec.scenario_id,
            "name": spec.name,
            "category": spec.category,
            "summary": spec.summary,
            "ego_id": spec.ego_id,
            "horizon": spec.horizon,
            "layout": layout_payload(spec),
            "agents": [
                {
                    "id": a.agent_id,
                    "x": a.position[0], "y": a.position[1],
                    "speed": a.speed, "bearing": a.bearing,
                }
                for a in spec.agents
            ],
            "goals": [
                {"agent_id": g.agent_id, "region": list(g.region),
                 "stop_required": g.stop_required}
                for g in spec.goals
            ],
            "prompts": [
                {"text": p.text, "time": p.time, "ego": p.ego_id} for p in spec.user_prompts
            ],
        }

    @app.get("/scenarios/{scenario_id}/trajectory")
    def get_trajectory(scenario_id: int):
        simulator_for(scenario_id)
        return trajectory_payload(baseline_for(scenario_id))

    @app.post("/scenarios/{scenario_id}/query")
    def run_manual_query(scenario_id: int, request: QueryRequest):
        spec, simulator = simulator_for(scenario_id)
        try:
            query = parse(request.text)
        except QueryError as exc:
            return {"ok": False, "stage": "parse", "error": str(exc)}
        if query.variant == "done":
            return {"ok": False, "stage": "parse", "error": "DONE is not a simulation query"}
        violations = validate(query, spec.initial_state(), simulator.library,
                              horizon=simulator.horizon)
        if violations:
            return {"ok": False, "stage": "validate", "query": render(query),
                    "violations": [str(v) for v in violations]}
        try:
            trajectory, reward = simulator.run_query(
                baseline_for(scenario_id), query, horizon=request.horizon
            )
        except (MacroNotApplicable, TimeOutOfRange, InvalidAgent) as exc:
            return {"ok": False, "stage": "simulate", "query": render(query),
                    "error": str(exc)}
        baseline_reward = None
        try:
            from .simulation.engine import compute_reward

            baseline_reward = compute_reward(
                baseline_for(scenario_id), simulator.ego_id, simulator.reward_weights
            )
        except InvalidAgent:
            pass
        return {
            "ok": True,
            "query": render(query),
            "trajectory": trajectory_payload(trajectory),
            "reward": {
                "components": dict(reward.components),
                "weights": dict(reward.weights),
                "total": reward.total,
            },
            "baseline_reward": None if baseline_reward is None else {
                "components": dict(baseline_reward.components),
                "weights": dict(baseline_reward.weights),
                "total": baseline_reward.total,
            },
        }

    @app.post("/sessions")
    def create_session(request: SessionRequest):
        if request.scenario_id not in SCENARIO_IDS:
            raise HTTPException(404, f"unknown scenario {request.scenario_id}")
        job = manager.create(request)
        return {"session_id": job.session_id, "status": job.status}

    @app.get("/sessions")
    def list_sessions():
        return [
            {"session_id": job.session_id, "status": job.status,
             "scenario_id": job.request.scenario_id,
             "prompt_index": job.request.prompt_index}
            for job in manager.jobs.values()
        ]

    @app.get("/sessions/{session_id}")
    def get_session(session_id: str):
        try:
            job = manager.get(session_id)
        except KeyError:
            raise HTTPException(404, f"unknown session {session_id}")
        return {
            "session_id": job.session_id,
            "status": job.status,
            "error": job.error,
            "events": list(job.events),
            "record": job.record,
        }

    @app.get("/sessions/{session_id}/events")
    def stream_events(session_id: str):
        try:
            job = manager.get(session_id)
        except KeyError:
            raise HTTPException(404, f"unknown session {session_id}")

        def generator():
            index = 0
            while True:
                with job.condition:
                    while index >= len(job.events) and job.status == "running":
                        job.condition.wait(timeout=10.0)
                    batch = job.events[index:]
                    index += len(batch)
                    status = job.status
                for event in batch:
                    yield f"data: {json.dumps(event, sort_keys=True)}\n\n"
                if status != "running" and index >= len(job.events):
                    return

        return StreamingResponse(generator(), media_type="text/event-stream")

    @app.get("/grammar", response_class=PlainTextResponse)
    def get_grammar():
        if GRAMMAR_PATH.exists():
            return GRAMMAR_PATH.read_text()
        raise HTTPException(404, "grammar file not found")

    return app


app = create_app()
