"""Explanation scoring: judge-based metrics, aggregation, Shapley analysis.

Three metrics mirror the evaluation protocol: subjective preference on four
Likert axes (combined by geometric mean), perceived correctness against an
expert reference description, and goal/action multiple-choice prediction
accuracy. A Shapley analysis attributes correctness to context features by
exact enumeration over all feature subsets.
"""

from __future__ import annotations

import itertools
import logging
import math
import random
import re
from dataclasses import dataclass, field

from .llm import ChatMessage, Gateway, ProviderConfig
from .orchestrator import EVAL_PLACEHOLDERS, PromptTemplate, load_template

logger = logging.getLogger(__name__)

PREFERENCE_AXES = ("completeness", "satisfaction", "trustworthiness", "sufficient_detail")

SHAPLEY_FEATURES = (
    "road_layout",
    "observations",
    "low_macros",
    "high_macros",
    "complexity",
)


class JudgeParseError(ValueError):
    pass


class JudgeConfigError(ValueError):
    pass


def check_judge_distinct(generator: ProviderConfig, judge: ProviderConfig) -> None:
    """The judge must not be the generator model (self-grading bias)."""
    if generator.provider == "http" and judge.provider == "http":
        if generator.model == judge.model:
            raise JudgeConfigError(
                f"judge model {judge.model!r} must differ from the generator model"
            )


# ---------------------------------------------------------------------------
# Score types
# ---------------------------------------------------------------------------


@dataclass
class PreferenceScore:
    completeness: int
    satisfaction: int
    trustworthiness: int
    sufficient_detail: int
    combined: float = field(init=False)

    def __post_init__(self) -> None:
        values = self.axes()
        for v in values:
            if not 1 <= v <= 5:
                raise ValueError(f"preference axis value {v} outside 1..5")
        self.combined = math.prod(values) ** (1.0 / len(values))

    def axes(self) -> tuple[int, int, int, int]:
        return (self.completeness, self.satisfaction,
                self.trustworthiness, self.sufficient_detail)


@dataclass
class CorrectnessScore:
    value: int
    rationale: str = ""

    def __post_init__(self) -> None:
        if not 1 <= self.value <= 5:
            raise ValueError(f"correctness value {self.value} outside 1..5")


@dataclass
class PredictionTask:
    kind: str  # goal | action
    options: list[str]
    correct_index: int

    def __post_init__(self) -> None:
        if self.kind not in ("goal", "action"):
            raise ValueError(f"unknown prediction kind {self.kind!r}")
        if len(self.options) != 4 or len(set(self.options)) != 4:
            raise ValueError("prediction tasks need exactly 4 distinct options")
        if not 0 <= self.correct_index < 4:
            raise ValueError("correct_index out of range")


@dataclass
class PredictionOutcome:
    presented_order: list[int]
    judge_choice: int  # original option index the judge picked, -1 if missing
    correct: int  # 0 or 1


@dataclass
class EvalRecord:
    scenario_id: int
    prompt_index: int
    system: str  # e.g. "interrogation", "model_only", "noexp"
    round_index: int | None = None
    preference: PreferenceScore | None = None
    correctness: CorrectnessScore | None = None
    goal_correct: int | None = None
    action_correct: int | None = None

    def metric(self, name: str):
        if name == "preference":
            return self.preference.combined if self.preference else None
        if name == "correctness":
            return float(self.correctness.value) if self.correctness else None
        if name == "goal_acc":
            return float(self.goal_correct) if self.goal_correct is not None else None
        if name == "action_acc":
            return float(self.action_correct) if self.action_correct is not None else None
        raise KeyError(name)


METRICS = ("preference", "correctness", "goal_acc", "action_acc")


# ---------------------------------------------------------------------------
# Judge interaction
# ---------------------------------------------------------------------------

_ANSWER_RE = re.compile(r"^\s*ANSWER\s*:\s*(.+?)\s*$", re.IGNORECASE | re.MULTILINE)

_REPROMPT = (
    "Your reply did not contain a valid final answer line. Reply again, "
    "ending with a single line of the form ANSWER: <value(s)> as instructed."
)

JUDGE_SYSTEM_PROMPT = (
    "You are a careful evaluator of explanations about vehicle behaviour in "
    "driving scenarios. Follow the scoring instructions exactly and always "
    "finish with the requested ANSWER line."
)


def _answer_line(text: str) -> str:
    matches = _ANSWER_RE.findall(text or "")
    if not matches:
        raise JudgeParseError("no ANSWER line found")
    return matches[-1]


def _ask_judge(judge: Gateway, prompt: str, parse_fn):
    """One judge call with a single reprompt on unparseable output."""
    messages = [
        ChatMessage(role="system", text=JUDGE_SYSTEM_PROMPT),
        ChatMessage(role="user", text=prompt),
    ]
    reply = judge.complete(messages).text
    for attempt in range(2):
        try:
            return parse_fn(reply), reply
        except (JudgeParseError, ValueError) as exc:
            if attempt == 1:
                logger.warning("judge output unparseable after reprompt: %s", exc)
                return None, reply
            messages.append(ChatMessage(role="assistant", text=reply or "(empty)"))
            messages.append(ChatMessage(role="user", text=_REPROMPT))
            reply = judge.complete(messages).text
    return None, reply


def _parse_preference(reply: str) -> PreferenceScore:
    raw = _answer_line(reply)
    numbers = re.findall(r"[1-5]", raw)
    if len(numbers) < 4:
        raise JudgeParseError(f"expected four 1-5 values, got {raw!r}")
    a, b, c, d = (int(v) for v in numbers[:4])
    return PreferenceScore(a, b, c, d)


def _parse_correctness(reply: str) -> CorrectnessScore:
    raw = _answer_line(reply)
    numbers = re.findall(r"[1-5]", raw)
    if not numbers:
        raise JudgeParseError(f"expected a 1-5 value, got {raw!r}")
    return CorrectnessScore(value=int(numbers[0]), rationale=reply.strip())


def _parse_choice(reply: str) -> int:
    raw = _answer_line(reply)
    m = re.search(r"\b([A-Da-d])\b", raw)
    if not m:
        raise JudgeParseError(f"expected a letter A-D, got {raw!r}")
    return ord(m.group(1).upper()) - ord("A")


def score_preference(
    scenario_text: str,
    question: str,
    explanation: str,
    judge: Gateway,
    template: PromptTemplate | None = None,
) -> PreferenceScore | None:
    if not explanation:
        raise ValueError("explanation must be non-empty")
    template = template or load_template("eval_preferences", EVAL_PLACEHOLDERS)
    prompt = template.fill({
        "SCENARIO": scenario_text,
        "QUESTION": question,
        "EXPLANATION": explanation,
    })
    score, _ = _ask_judge(judge, prompt, _parse_preference)
    return score


def score_correctness(
    scenario_text: str,
    expert_description: str,
    question: str,
    explanation: str,
    judge: Gateway,
    template: PromptTemplate | None = None,
) -> CorrectnessScore | None:
    if not explanation:
        raise ValueError("explanation must be non-empty")
    if not expert_description:
        raise ValueError("an expert description is required for correctness scoring")
    template = template or load_template("eval_correctness", EVAL_PLACEHOLDERS)
    prompt = template.fill({
        "SCENARIO": scenario_text,
        "DESCRIPTION": expert_description,
        "QUESTION": question,
        "EXPLANATION": explanation,
    })
    score, _ = _ask_judge(judge, prompt, _parse_correctness)
    return score


GOAL_TASK_QUESTION = "Which overall goal is vehicle 0 most likely pursuing?"
ACTION_TASK_QUESTION = "Which immediate next action will vehicle 0 most likely take?"


def build_prediction_prompt(
    scenario_text: str,
    explanation: str | None,
    task: PredictionTask,
    presented_order: list[int],
    template: PromptTemplate | None = None,
) -> str:
    template = template or load_template("eval_actionability", EVAL_PLACEHOLDERS)
    letters = "ABCD"
    question = GOAL_TASK_QUESTION if task.kind == "goal" else ACTION_TASK_QUESTION
    listing = "\n".join(
        f"{letters[pos]}. {task.options[orig]}" for pos, orig in enumerate(presented_order)
    )
    block = f"{question}\n{listing}"
    explanation_block = ""
    if explanation:
        explanation_block = (
            "\nThe following explanation of vehicle 0's behaviour was provided:\n"
            f"{explanation}\n"
        )
    return template.fill({
        "SCENARIO": scenario_text,
        "EXPLANATION": explanation_block,
        "GOALS": block if task.kind == "goal" else "",
        "MANEUVERS": block if task.kind == "action" else "",
    })


def score_prediction(
    scenario_text: str,
    explanation: str | None,
    task: PredictionTask,
    judge: Gateway,
    seed: int,
    template: PromptTemplate | None = None,
) -> PredictionOutcome:
    presented_order = shuffle_options(seed)
    prompt = build_prediction_prompt(scenario_text, explanation, task, presented_order, template)
    position, _ = _ask_judge(judge, prompt, _parse_choice)
    if position is None:
        return PredictionOutcome(presented_order=presented_order, judge_choice=-1, correct=0)
    choice = presented_order[position]
    return PredictionOutcome(
        presented_order=presented_order,
        judge_choice=choice,
        correct=int(choice == task.correct_index),
    )


def shuffle_options(seed: int, n: int = 4) -> list[int]:
    """Seeded permutation: presented position -> original option index."""
    order = list(range(n))
    random.Random(seed).shuffle(order)
    return order


# ---------------------------------------------------------------------------
# Aggregation
# ---------------------------------------------------------------------------


def best_round(rounds: list[tuple[PreferenceScore, CorrectnessScore]]) -> int:
    """Round with the highest geometric mean of preference and correctness."""
    if not rounds:
        raise ValueError("no rounds to select from")
    best_idx = 0
    best_score = -1.0
    for i, (pref, corr) in enumerate(rounds):
        score = math.sqrt(pref.combined * corr.value)
        if score > best_score + 1e-12:
            best_score = score
            best_idx = i
    return best_idx


def mean_sem(values: list[float]) -> tuple[float, float, bool]:
    """(mean, standard error of the mean, single-sample flag)."""
    n = len(values)
    if n == 0:
        raise ValueError("no values")
    mean = sum(values) / n
    if n == 1:
        return mean, 0.0, True
    var = sum((v - mean) ** 2 for v in values) / (n - 1)
    return mean, math.sqrt(var) / math.sqrt(n), False


@dataclass
class AggregateCell:
    mean: float
    sem: float
    n: int
    single_sample: bool = False


def aggregate(
    records: list[EvalRecord], group_by: tuple[str, ...] = ("system",)
) -> dict[tuple, dict[str, AggregateCell]]:
    """Mean and SEM per metric per group; missing scores are excluded."""
    groups: dict[tuple, list[EvalRecord]] = {}
    for record in records:
        key = tuple(getattr(record, k) for k in group_by)
        groups.setdefault(key, []).append(record)
    table: dict[tuple, dict[str, AggregateCell]] = {}
    for key in sorted(groups):
        row: dict[str, AggregateCell] = {}
        for metric in METRICS:
            values = [record.metric(metric) for record in groups[key]]
            values = [v for v in values if v is not None]
            if not values:
                continue
            mean, sem, single = mean_sem(values)
            row[metric] = AggregateCell(mean=mean, sem=sem, n=len(values), single_sample=single)
        table[key] = row
    return table


def format_table(
    table: dict[tuple, dict[str, AggregateCell]], group_by: tuple[str, ...] = ("system",)
) -> str:
    """Flat text table with the Preference/Correctness/Goal/Action columns."""
    headers = [*group_by, "Preference", "Correctness", "Goal Acc.", "Action Acc."]
    rows = [headers]
    for key, cells in table.items():
        row = [str(v) for v in key]
        for metric in METRICS:
            cell = cells.get(metric)
            row.append("N/A" if cell is None else f"{cell.mean:.2f}±{cell.sem:.2f}")
        rows.append(row)
    widths = [max(len(r[i]) for r in rows) for i in range(len(headers))]
    lines = ["  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)) for row in rows]
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# Shapley analysis
# ---------------------------------------------------------------------------


@dataclass
class ShapleyResult:
    features: tuple[str, ...]
    values: dict[str, float]
    grand_value: float
    null_value: float

    def efficiency_gap(self) -> float:
        return abs(sum(self.values.values()) - (self.grand_value - self.null_value))


def shapley(features: tuple[str, ...], value_fn) -> ShapleyResult:
    """Exact Shapley values by full subset enumeration.

    ``value_fn`` maps a frozenset of feature names to a real value; it is
    memoised so each of the 2^n subsets is evaluated exactly once.
    """
    features = tuple(features)
    n = len(features)
    cache: dict[frozenset, float] = {}

    def value(subset: frozenset) -> float:
        if subset not in cache:
            cache[subset] = float(value_fn(subset))
        return cache[subset]

    factorial = math.factorial
    values: dict[str, float] = {}
    for feature in features:
        others = [f for f in features if f != feature]
        total = 0.0
        for r in range(len(others) + 1):
            weight = factorial(r) * factorial(n - r - 1) / factorial(n)
            for combo in itertools.combinations(others, r):
                s = frozenset(combo)
                total += weight * (value(s | {feature}) - value(s))
        values[feature] = total
    result = ShapleyResult(
        features=features,
        values=values,
        grand_value=value(frozenset(features)),
        null_value=value(frozenset()),
    )
    gap = result.efficiency_gap()
    if gap > 1e-9:
        raise ArithmeticError(f"Shapley efficiency violated by {gap}")
    return result


def feature_subsets(features: tuple[str, ...] = SHAPLEY_FEATURES):
    for r in range(len(features) + 1):
        for combo in itertools.combinations(features, r):
            yield frozenset(combo)
