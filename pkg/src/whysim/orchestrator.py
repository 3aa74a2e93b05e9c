"""Interrogation session orchestration.

Runs the multi-round loop: verbalise context, prompt for a query, simulate
it, verbalise the results, prompt for an intermediate explanation, and after
the final round (or an early DONE) synthesise the final explanation from the
whole episodic memory.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field
from importlib import resources

from .llm import ChatMessage, Completion, Gateway, GatewayError
from .macros import MacroNotApplicable, wrap_high, wrap_low
from .queries import (
    Query,
    QueryError,
    QUERY_DESCRIPTION,
    QUERY_TYPE_DESCRIPTION,
    parse,
    render,
    validate,
)
from .simulation.engine import Simulator, TimeOutOfRange
from .simulation.state import InvalidAgent, RewardBreakdown, Trajectory
from .verbalize import (
    verbalise_layout,
    verbalise_macros,
    verbalise_observations,
    verbalise_rewards,
)

logger = logging.getLogger(__name__)

TEMPLATE_KINDS = ("system", "context", "interrogation", "explanation", "final")

SESSION_PLACEHOLDERS = frozenset({
    "CONTEXT", "OCCLUSIONS", "N_MAX", "N", "QUERY_DESCRIPTION",
    "QUERY_TYPE_DESCRIPTION", "USER_PROMPT", "EXPLANATION_STYLE", "COMPLEXITY",
})
EVAL_PLACEHOLDERS = frozenset({
    "SCENARIO", "DESCRIPTION", "QUESTION", "EXPLANATION", "GOALS", "MANEUVERS",
})

_PLACEHOLDER_RE = re.compile(r"<([A-Z_]+)>")

DEFAULT_EXPLANATION_STYLE = (
    "Do not include raw state or action arrays. Do not include explicit "
    "references to road, lane, and intersection IDs. Refer to causal "
    "relationships."
)
COMPLEXITY_TEXT = {
    "concise": (
        "Your response must be as short and concise as possible. "
        "You can only include the absolute most important information."
    ),
    "complex": "Your response must be concise and clear. Include only important information.",
}
OCCLUSION_NOTE = (
    "Note, the context observations and actions may be incomplete as the "
    "scenario could potentially contain occluded vehicles."
)

CONTEXT_FEATURES = ("layout", "observations", "low_macros", "high_macros")


class TemplateError(ValueError):
    pass


class MissingBinding(TemplateError):
    def __init__(self, name: str):
        super().__init__(f"no binding for placeholder <{name}>")
        self.name = name


class UnknownPlaceholder(TemplateError):
    def __init__(self, name: str):
        super().__init__(f"placeholder <{name}> is not in the allowed set")
        self.name = name


class AllFeaturesDisabled(ValueError):
    pass


class SessionAborted(RuntimeError):
    def __init__(self, message: str, memory: "EpisodicMemory"):
        super().__init__(message)
        self.memory = memory


@dataclass
class PromptTemplate:
    kind: str
    body: str
    allowed: frozenset = SESSION_PLACEHOLDERS

    def __post_init__(self) -> None:
        for name in self.placeholders():
            if name not in self.allowed:
                raise UnknownPlaceholder(name)

    def placeholders(self) -> list[str]:
        return _PLACEHOLDER_RE.findall(self.body)

    def fill(self, bindings: dict[str, str]) -> str:
        text = self.body
        for name in self.placeholders():
            if name not in bindings:
                raise MissingBinding(name)
            text = text.replace(f"<{name}>", str(bindings[name]))
        return text


def load_template(kind: str, allowed: frozenset = SESSION_PLACEHOLDERS) -> PromptTemplate:
    body = resources.files("whysim").joinpath(f"prompts/{kind}.txt").read_text()
    return PromptTemplate(kind=kind, body=body, allowed=allowed)


def fill_template(template: PromptTemplate, bindings: dict[str, str]) -> str:
    return template.fill(bindings)


def load_session_templates() -> dict[str, PromptTemplate]:
    return {kind: load_template(kind) for kind in TEMPLATE_KINDS}


# ---------------------------------------------------------------------------
# Memories
# ---------------------------------------------------------------------------


@dataclass
class ObservationMemory:
    """Append-only factual trajectory for one ego agent."""

    ego_id: int
    trajectory: Trajectory

    def extend(self, more: Trajectory) -> None:
        if more.start_tick != self.trajectory.end_tick + 1:
            raise ValueError("observation memory ticks must grow monotonically")
        self.trajectory.states.extend(more.states)
        self.trajectory.ego_observations.extend(more.ego_observations)
        self.trajectory.joint_actions.extend(more.joint_actions)

    def snapshot_up_to(self, tick: int) -> Trajectory:
        tick = min(tick, self.trajectory.end_tick)
        return self.trajectory.truncated(tick)


@dataclass
class MemoryEntry:
    role: str  # system | user | assistant | simulation
    round: int
    text: str


@dataclass
class EpisodicMemory:
    entries: list[MemoryEntry] = field(default_factory=list)

    def append(self, role: str, round_no: int, text: str) -> None:
        if role not in ("system", "user", "assistant", "simulation"):
            raise ValueError(f"unknown memory role {role!r}")
        if not self.entries and role != "system":
            raise ValueError("memory must begin with the system entry")
        if self.entries and role == "system":
            raise ValueError("memory holds exactly one system entry")
        if self.entries and round_no < self.entries[-1].round:
            raise ValueError("round numbers must be non-decreasing")
        self.entries.append(MemoryEntry(role=role, round=round_no, text=text))

    def to_messages(self) -> list[ChatMessage]:
        """Chat form of the memory; simulation records are embedded in the
        following explanation prompt, so they are not sent twice."""
        return [
            ChatMessage(role=e.role, text=e.text)
            for e in self.entries
            if e.role != "simulation"
        ]

    def simulation_entries(self) -> list[MemoryEntry]:
        return [e for e in self.entries if e.role == "simulation"]

    def to_dict(self) -> dict:
        return {"entries": [{"role": e.role, "round": e.round, "text": e.text}
                            for e in self.entries]}

    @classmethod
    def from_dict(cls, doc: dict) -> "EpisodicMemory":
        memory = cls()
        for e in doc["entries"]:
            memory.append(e["role"], e["round"], e["text"])
        return memory


# ---------------------------------------------------------------------------
# Session configuration
# ---------------------------------------------------------------------------


@dataclass
class SessionConfig:
    n_max: int = 10
    complexity: str = "complex"  # concise | complex
    features: dict[str, bool] = field(
        default_factory=lambda: {name: True for name in CONTEXT_FEATURES}
    )
    explanation_style: str = DEFAULT_EXPLANATION_STYLE
    horizon: int = 800
    seed: int = 0
    occlusions_possible: bool = False

    def __post_init__(self) -> None:
        if self.n_max < 1:
            raise ValueError("n_max must be >= 1")
        if self.complexity not in COMPLEXITY_TEXT:
            raise ValueError(f"unknown complexity {self.complexity!r}")
        features = {name: False for name in CONTEXT_FEATURES}
        features.update(self.features)
        self.features = features

    def to_dict(self) -> dict:
        return {
            "n_max": self.n_max,
            "complexity": self.complexity,
            "features": dict(self.features),
            "explanation_style": self.explanation_style,
            "horizon": self.horizon,
            "seed": self.seed,
            "occlusions_possible": self.occlusions_possible,
        }


@dataclass
class UserQuestion:
    text: str
    t: int
    ego_id: int


@dataclass
class RoundRecord:
    round: int
    query: str
    verbalised_result: str
    intermediate_explanation: str


@dataclass
class SessionResult:
    final_explanation: str
    memory: EpisodicMemory
    rounds: list[RoundRecord]
    config: SessionConfig
    question: UserQuestion

    def to_dict(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "question": {"text": self.question.text, "t": self.question.t,
                         "ego_id": self.question.ego_id},
            "memory": self.memory.to_dict(),
            "rounds": [
                {"round": r.round, "query": r.query,
                 "verbalised_result": r.verbalised_result,
                 "intermediate_explanation": r.intermediate_explanation}
                for r in self.rounds
            ],
            "final_explanation": self.final_explanation,
        }


# ---------------------------------------------------------------------------
# Context verbalisation
# ---------------------------------------------------------------------------


def _visible_sub_trajectory(trajectory: Trajectory, agent_id: int) -> Trajectory | None:
    """Contiguous span of the trajectory from first to last ego-visible tick."""
    seen = [
        k for k, obs in enumerate(trajectory.ego_observations)
        if any(a.agent_id == agent_id for a in obs)
    ]
    if not seen:
        return None
    start = trajectory.start_tick + seen[0]
    end = trajectory.start_tick + seen[-1]
    sub = trajectory.truncated(end).slice_from(start)
    if not all(s.has_agent(agent_id) for s in sub.states):
        return None
    return sub


def _observed_agent_ids(trajectory: Trajectory) -> list[int]:
    seen: dict[int, None] = {}
    for obs in trajectory.ego_observations:
        for agent in obs:
            seen.setdefault(agent.agent_id, None)
    return sorted(seen)


def verbalise_low_macros(trajectory: Trajectory) -> str:
    lines = ["Low-level actions (sign of acceleration / steering):"]
    dt = trajectory.dt
    for agent_id in _observed_agent_ids(trajectory):
        sub = _visible_sub_trajectory(trajectory, agent_id)
        if sub is None:
            continue
        actions = sub.actions_of(agent_id)
        if not actions:
            continue
        lon, lat = wrap_low(actions, agent_id)
        base = sub.start_tick
        parts = [
            f"{seg.macro_name} {(base + seg.start_tick) * dt:.1f}-{(base + seg.end_tick) * dt:.1f}s"
            for seg in (lon + lat)
        ]
        lines.append(f"  Vehicle {agent_id}: " + "; ".join(parts))
    if len(lines) == 1:
        lines.append("  no actions observed")
    return "\n".join(lines)


def verbalise_high_macros(trajectory: Trajectory) -> str:
    segments = []
    for agent_id in _observed_agent_ids(trajectory):
        sub = _visible_sub_trajectory(trajectory, agent_id)
        if sub is None:
            continue
        segments.extend(wrap_high(sub, agent_id))
    return verbalise_macros(segments, dt=trajectory.dt)


def select_context_features(config: SessionConfig, trajectory: Trajectory) -> str:
    """Concatenate the enabled context blocks in fixed order."""
    if not any(config.features.get(name) for name in CONTEXT_FEATURES):
        raise AllFeaturesDisabled("at least one context feature must be enabled")
    blocks = []
    if config.features.get("layout"):
        blocks.append(verbalise_layout(trajectory.states[0].layout))
    if config.features.get("observations"):
        blocks.append(verbalise_observations(trajectory))
    if config.features.get("low_macros"):
        blocks.append(verbalise_low_macros(trajectory))
    if config.features.get("high_macros"):
        blocks.append(verbalise_high_macros(trajectory))
    return "\n\n".join(blocks)


def _context_or_empty(config: SessionConfig, trajectory: Trajectory) -> str:
    if not any(config.features.get(name) for name in CONTEXT_FEATURES):
        return ""
    return select_context_features(config, trajectory)


def verbalise_query_result(
    config: SessionConfig,
    query: Query,
    trajectory: Trajectory,
    reward: RewardBreakdown,
) -> str:
    blocks = [f"Results of query {render(query)}:"]
    if config.features.get("observations"):
        blocks.append(verbalise_observations(trajectory))
    if config.features.get("low_macros"):
        blocks.append(verbalise_low_macros(trajectory))
    if config.features.get("high_macros"):
        blocks.append(verbalise_high_macros(trajectory))
    blocks.append(verbalise_rewards(reward))
    return "\n\n".join(blocks)


# ---------------------------------------------------------------------------
# The session loop
# ---------------------------------------------------------------------------


@dataclass
class Orchestrator:
    simulator: Simulator
    observation_memory: ObservationMemory
    gateway: Gateway
    templates: dict[str, PromptTemplate] = field(default_factory=load_session_templates)
    on_event: object = None  # optional callable(kind: str, payload: dict)

    def _emit(self, kind: str, **payload) -> None:
        if self.on_event is not None:
            self.on_event(kind, payload)

    def _llm(self, memory: EpisodicMemory) -> Completion:
        return self.gateway.complete(memory.to_messages())

    def explain(self, question: UserQuestion, config: SessionConfig) -> SessionResult:
        memory = EpisodicMemory()
        rounds: list[RoundRecord] = []
        bindings_common = {
            "N_MAX": str(config.n_max),
            "EXPLANATION_STYLE": config.explanation_style,
            "COMPLEXITY": COMPLEXITY_TEXT[config.complexity],
            "OCCLUSIONS": OCCLUSION_NOTE if config.occlusions_possible else "",
            "USER_PROMPT": question.text,
            "QUERY_DESCRIPTION": QUERY_DESCRIPTION,
            "QUERY_TYPE_DESCRIPTION": QUERY_TYPE_DESCRIPTION,
        }
        memory.append("system", 0, self.templates["system"].fill(bindings_common))

        # Factual context: observations up to the prompt time (clamped to the
        # end of the episode for scenarios that terminate early).
        factual = self.observation_memory.snapshot_up_to(question.t)
        context = _context_or_empty(config, factual)
        memory.append(
            "user", 0,
            self.templates["context"].fill({**bindings_common, "CONTEXT": context}),
        )
        self._emit("context", text=context)

        try:
            final = self._run_rounds(question, config, memory, rounds, bindings_common, factual)
        except GatewayError as exc:
            raise SessionAborted(str(exc), memory) from exc
        return SessionResult(
            final_explanation=final,
            memory=memory,
            rounds=rounds,
            config=config,
            question=question,
        )

    def _run_rounds(self, question, config, memory, rounds, bindings_common, factual) -> str:
        for n in range(1, config.n_max + 1):
            memory.append(
                "user", n,
                self.templates["interrogation"].fill({**bindings_common, "N": str(n)}),
            )
            reply = self._llm(memory).text
            memory.append("assistant", n, reply)
            query = self._parse_with_reprompt(reply, memory, n)
            if query is None:
                continue  # unusable round
            if query.variant == "done":
                self._emit("done", round=n)
                break
            self._emit("query", round=n, query=render(query))

            try:
                result, reward = self.simulator.run_query(
                    self.observation_memory.trajectory, query, horizon=config.horizon
                )
                result_text = verbalise_query_result(config, query, result, reward)
            except (MacroNotApplicable, TimeOutOfRange, InvalidAgent) as exc:
                result_text = f"Simulation of {render(query)} failed: {exc}"
            memory.append("simulation", n, result_text)
            self._emit("simulation", round=n, text=result_text)

            memory.append(
                "user", n,
                self.templates["explanation"].fill(
                    {**bindings_common, "N": str(n), "CONTEXT": result_text}
                ),
            )
            explanation = self._llm(memory).text
            memory.append("assistant", n, explanation)
            rounds.append(RoundRecord(
                round=n,
                query=render(query),
                verbalised_result=result_text,
                intermediate_explanation=explanation,
            ))
            self._emit("explanation", round=n, text=explanation)

        final_round = memory.entries[-1].round + 1 if memory.entries else 1
        memory.append("user", final_round, self.templates["final"].fill(bindings_common))
        final = self._llm(memory).text
        memory.append("assistant", final_round, final)
        self._emit("final", text=final)
        return final

    def _parse_with_reprompt(self, reply: str, memory: EpisodicMemory, n: int) -> Query | None:
        """Parse and validate; on failure reprompt once, then skip the round."""
        for attempt in range(2):
            try:
                query = parse(reply)
            except QueryError as exc:
                problem = f"Your reply did not contain a valid query: {exc}"
                query = None
            else:
                violations = validate(
                    query,
                    self.simulator.initial_state,
                    self.simulator.library,
                    horizon=self.simulator.horizon,
                )
                if not violations:
                    return query
                listing = "; ".join(str(v) for v in violations)
                problem = f"Your query {render(query)} is invalid: {listing}"
            if attempt == 1:
                logger.warning("round %d skipped: %s", n, problem)
                return None
            memory.append(
                "user", n,
                problem + " Reply with exactly one corrected query, or DONE.",
            )
            reply = self._llm(memory).text
            memory.append("assistant", n, reply)
        return None
