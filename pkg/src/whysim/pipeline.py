"""End-to-end wiring: run sessions, persist records, score them, Shapley runs.

A session record is the durable JSON artifact consumed by the evaluation
commands and the web UI.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path

from .evaluation import (
    CorrectnessScore,
    EvalRecord,
    PredictionTask,
    PreferenceScore,
    SHAPLEY_FEATURES,
    ShapleyResult,
    best_round,
    check_judge_distinct,
    score_correctness,
    score_prediction,
    score_preference,
    shapley,
)
from .llm import Gateway, ProviderConfig, make_provider
from .orchestrator import (
    EpisodicMemory,
    ObservationMemory,
    Orchestrator,
    SessionConfig,
    SessionResult,
    UserQuestion,
    select_context_features,
)
from .scenarios import ScenarioSpec, build_simulator, load

logger = logging.getLogger(__name__)


@dataclass
class SessionRecord:
    scenario_id: int
    prompt_index: int
    provider: str
    model: str
    mode: str  # "interrogation" | "model_only"
    result: SessionResult

    def to_dict(self) -> dict:
        doc = self.result.to_dict()
        doc.update({
            "scenario_id": self.scenario_id,
            "prompt_index": self.prompt_index,
            "provider": self.provider,
            "model": self.model,
            "mode": self.mode,
        })
        return doc

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def save(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_json())
        return path


def load_session_record(path: str | Path) -> dict:
    return json.loads(Path(path).read_text())


def session_id_for(scenario_id: int, prompt_index: int, mode: str, seed: int) -> str:
    return f"s{scenario_id:02d}p{prompt_index}-{mode}-seed{seed}"


def run_session(
    spec: ScenarioSpec,
    prompt_index: int,
    provider_config: ProviderConfig,
    config: SessionConfig | None = None,
    on_event=None,
) -> SessionRecord:
    """Run one interrogation session against a scenario prompt."""
    if not 0 <= prompt_index < len(spec.user_prompts):
        raise IndexError(f"scenario {spec.scenario_id} has no prompt {prompt_index}")
    prompt = spec.user_prompts[prompt_index]
    config = config or SessionConfig()
    config.horizon = min(config.horizon, spec.horizon)
    config.occlusions_possible = spec.category == "occlusion"

    simulator = build_simulator(spec, seed=config.seed)
    baseline = simulator.baseline()
    memory = ObservationMemory(ego_id=spec.ego_id, trajectory=baseline)
    gateway = Gateway(
        make_provider(provider_config),
        provider_config,
        session_id=session_id_for(spec.scenario_id, prompt_index, "interrogation", config.seed),
    )
    orchestrator = Orchestrator(
        simulator=simulator, observation_memory=memory, gateway=gateway, on_event=on_event
    )
    question = UserQuestion(text=prompt.text, t=prompt.time, ego_id=prompt.ego_id)
    result = orchestrator.explain(question, config)
    return SessionRecord(
        scenario_id=spec.scenario_id,
        prompt_index=prompt_index,
        provider=provider_config.provider,
        model=provider_config.model,
        mode="interrogation",
        result=result,
    )


def run_model_only(
    spec: ScenarioSpec,
    prompt_index: int,
    provider_config: ProviderConfig,
    config: SessionConfig | None = None,
) -> SessionRecord:
    """Baseline: full initial context, one direct explanation, no simulation."""
    config = config or SessionConfig()
    config.horizon = min(config.horizon, spec.horizon)
    config.occlusions_possible = spec.category == "occlusion"
    config.n_max = 1
    prompt = spec.user_prompts[prompt_index]
    provider = make_provider(provider_config)
    # One-round budget; providers reply DONE then the explanation, so no
    # simulation happens and the model answers from the initial context.
    simulator = build_simulator(spec, seed=config.seed)
    baseline = simulator.baseline()
    memory = ObservationMemory(ego_id=spec.ego_id, trajectory=baseline)
    gateway = Gateway(
        provider, provider_config,
        session_id=session_id_for(spec.scenario_id, prompt_index, "model_only", config.seed),
    )
    orchestrator = Orchestrator(simulator=simulator, observation_memory=memory, gateway=gateway)
    question = UserQuestion(text=prompt.text, t=prompt.time, ego_id=prompt.ego_id)
    result = orchestrator.explain(question, config)
    return SessionRecord(
        scenario_id=spec.scenario_id,
        prompt_index=prompt_index,
        provider=provider_config.provider,
        model=provider_config.model,
        mode="model_only",
        result=result,
    )


def scenario_context_text(spec: ScenarioSpec, up_to_tick: int | None = None) -> str:
    """Full-feature verbalisation of the factual trajectory, for judges."""
    simulator = build_simulator(spec)
    baseline = simulator.baseline()
    if up_to_tick is not None:
        baseline = baseline.truncated(min(up_to_tick, baseline.end_tick))
    return select_context_features(SessionConfig(), baseline)


def prediction_tasks(spec: ScenarioSpec) -> tuple[PredictionTask, PredictionTask]:
    goal = PredictionTask(kind="goal", options=list(spec.goal_task.options),
                          correct_index=spec.goal_task.correct)
    action = PredictionTask(kind="action", options=list(spec.action_task.options),
                            correct_index=spec.action_task.correct)
    return goal, action


@dataclass
class SessionEvaluation:
    records: list[EvalRecord]
    best_round_index: int | None
    exclusions: int

    def best_records(self) -> list[EvalRecord]:
        return [r for r in self.records if r.round_index is None]


def evaluate_session_doc(
    doc: dict,
    judge: Gateway,
    seed: int = 0,
    scenario_text: str | None = None,
) -> SessionEvaluation:
    """Score one stored session: per-round scores, best round, predictions."""
    spec = load(doc["scenario_id"])
    question = doc["question"]["text"]
    prompt_time = doc["question"]["t"]
    mode = doc.get("mode", "interrogation")
    label = mode
    scenario_text = scenario_text or scenario_context_text(spec, up_to_tick=prompt_time)
    exclusions = 0

    round_scores: list[tuple[PreferenceScore, CorrectnessScore]] = []
    records: list[EvalRecord] = []
    for r in doc.get("rounds", []):
        expl = r.get("intermediate_explanation", "")
        if not expl:
            continue
        pref = score_preference(scenario_text, question, expl, judge)
        corr = score_correctness(scenario_text, spec.expert_description, question, expl, judge)
        if pref is None or corr is None:
            exclusions += 1
            continue
        round_scores.append((pref, corr))
        records.append(EvalRecord(
            scenario_id=spec.scenario_id,
            prompt_index=doc["prompt_index"],
            system=label,
            round_index=r["round"],
            preference=pref,
            correctness=corr,
        ))

    final_expl = doc.get("final_explanation", "")
    final_pref = final_corr = None
    if final_expl:
        final_pref = score_preference(scenario_text, question, final_expl, judge)
        final_corr = score_correctness(
            scenario_text, spec.expert_description, question, final_expl, judge
        )
        if final_pref is None or final_corr is None:
            exclusions += 1

    best_idx = None
    if round_scores:
        best_idx = best_round(round_scores)

    # Best-round explanation (falls back to the final synthesis) drives the
    # headline record, including the downstream prediction tasks.
    headline_pref, headline_corr = final_pref, final_corr
    if best_idx is not None:
        cand_pref, cand_corr = round_scores[best_idx]
        if headline_corr is None or _round_score(cand_pref, cand_corr) >= _round_score(
            headline_pref, headline_corr
        ):
            headline_pref, headline_corr = cand_pref, cand_corr

    goal_task, action_task = prediction_tasks(spec)
    expl_for_tasks = final_expl or None
    goal_outcome = score_prediction(scenario_text, expl_for_tasks, goal_task, judge, seed)
    action_outcome = score_prediction(scenario_text, expl_for_tasks, action_task, judge, seed + 1)

    records.append(EvalRecord(
        scenario_id=spec.scenario_id,
        prompt_index=doc["prompt_index"],
        system=label,
        round_index=None,
        preference=headline_pref,
        correctness=headline_corr,
        goal_correct=goal_outcome.correct,
        action_correct=action_outcome.correct,
    ))
    return SessionEvaluation(records=records, best_round_index=best_idx, exclusions=exclusions)


def _round_score(pref, corr) -> float:
    if pref is None or corr is None:
        return -1.0
    return math.sqrt(pref.combined * corr.value)


def evaluate_noexp(
    spec: ScenarioSpec, prompt_index: int, judge: Gateway, seed: int = 0
) -> EvalRecord:
    """Prediction-only baseline: no explanation is shown to the judge."""
    prompt = spec.user_prompts[prompt_index]
    scenario_text = scenario_context_text(spec, up_to_tick=prompt.time)
    goal_task, action_task = prediction_tasks(spec)
    goal_outcome = score_prediction(scenario_text, None, goal_task, judge, seed)
    action_outcome = score_prediction(scenario_text, None, action_task, judge, seed + 1)
    return EvalRecord(
        scenario_id=spec.scenario_id,
        prompt_index=prompt_index,
        system="noexp",
        round_index=None,
        goal_correct=goal_outcome.correct,
        action_correct=action_outcome.correct,
    )


# ---------------------------------------------------------------------------
# Shapley runs
# ---------------------------------------------------------------------------


def subset_session_config(subset: frozenset, base: SessionConfig | None = None) -> SessionConfig:
    """Session configuration for one Shapley feature subset."""
    base = base or SessionConfig()
    features = {
        "layout": "road_layout" in subset,
        "observations": "observations" in subset,
        "low_macros": "low_macros" in subset,
        "high_macros": "high_macros" in subset,
    }
    return SessionConfig(
        n_max=base.n_max,
        complexity="complex" if "complexity" in subset else "concise",
        features=features,
        explanation_style=base.explanation_style,
        horizon=base.horizon,
        seed=base.seed,
        occlusions_possible=base.occlusions_possible,
    )


def run_shapley_analysis(
    scenario_id: int,
    prompt_index: int,
    provider_factory,
    judge: Gateway,
    base_config: SessionConfig | None = None,
    on_subset=None,
) -> tuple[ShapleyResult, int]:
    """Shapley attribution of mean correctness to the five context features.

    ``provider_factory`` builds a fresh ProviderConfig per subset run so
    scripted providers replay from the start.
    """
    spec = load(scenario_id)
    prompt = spec.user_prompts[prompt_index]
    scenario_text = scenario_context_text(spec, up_to_tick=prompt.time)
    sessions_run = 0

    def value_fn(subset: frozenset) -> float:
        nonlocal sessions_run
        config = subset_session_config(subset, base_config)
        record = run_session(spec, prompt_index, provider_factory(subset), config)
        sessions_run += 1
        corr = score_correctness(
            scenario_text,
            spec.expert_description,
            prompt.text,
            record.result.final_explanation or "(no explanation)",
            judge,
        )
        if on_subset is not None:
            on_subset(subset, corr)
        if corr is None:
            raise RuntimeError(f"judge failed on subset {sorted(subset)}")
        return float(corr.value)

    result = shapley(SHAPLEY_FEATURES, value_fn)
    return result, sessions_run
