"""Acceptance suite: one test per release criterion, tolerances pinned.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the PASS lines.
"""

import difflib
import itertools
import json
import math
import os
import random
import time
from pathlib import Path

import pytest

from whysim.evaluation import (
    CorrectnessScore,
    EvalRecord,
    PredictionTask,
    PreferenceScore,
    SHAPLEY_FEATURES,
    aggregate,
    best_round,
    build_prediction_prompt,
    mean_sem,
    shapley,
    shuffle_options,
)
from whysim.llm import Gateway, ProviderConfig, ScriptedProvider
from whysim.macros import expand, wrap_high, wrap_low
from whysim.orchestrator import ObservationMemory, Orchestrator, SessionConfig, UserQuestion
from whysim.queries import Query, parse, render
from whysim.scenarios import SCENARIO_IDS, build_simulator, load
from whysim.simulation.engine import ScheduledMacros, Simulator
from whysim.simulation.physics import integrate
from whysim.simulation.state import AgentState, Goal, ScenarioState

GOLDEN = Path(__file__).parent / "golden" / "scenario1_session.json"


def report(name: str) -> None:
    print(f"[PASS] {name}")


# -- 1. golden transcript -----------------------------------------------------

SESSION_SCRIPT = [
    "Let me test whether vehicle 1 matters here. whatif(1, [stop], 40)",
    "Vehicle 0 still changes lanes right and takes the exit even when vehicle 1 "
    "brakes, so vehicle 1 is not forcing the manoeuvre.",
    "remove(1)",
    "With vehicle 1 removed entirely, vehicle 0 still changes lanes right before "
    "the junction, confirming the lane change serves its own route.",
    "DONE",
    "Vehicle 0 changed lanes right because its route requires the right lane to "
    "take the exit at the T-junction; the counterfactual tests show vehicle 1 "
    "had no influence on the decision.",
]


def test_golden_transcript_reproduced_quickly():
    start = time.perf_counter()
    spec = load(1)
    simulator = build_simulator(spec)
    memory = ObservationMemory(ego_id=0, trajectory=simulator.baseline())
    gateway = Gateway(ScriptedProvider(SESSION_SCRIPT),
                      ProviderConfig(provider="stub", script=SESSION_SCRIPT), "golden")
    orchestrator = Orchestrator(simulator=simulator, observation_memory=memory,
                                gateway=gateway)
    prompt = spec.user_prompts[0]
    result = orchestrator.explain(
        UserQuestion(prompt.text, prompt.time, prompt.ego_id),
        SessionConfig(seed=0, horizon=spec.horizon),
    )
    elapsed = time.perf_counter() - start
    produced = json.dumps(result.memory.to_dict(), indent=2, sort_keys=True) + "\n"
    assert produced == GOLDEN.read_text(), "episodic memory differs from golden"
    assert elapsed < 5.0, f"golden session took {elapsed:.2f}s (budget 5s)"
    report(f"golden transcript byte-for-byte in {elapsed:.2f}s")


# -- 2. DSL round trip ---------------------------------------------------------


def random_query(rng: random.Random) -> Query:
    variant = rng.choice(["add", "remove", "whatif", "what", "done"])
    if variant == "done":
        return Query(variant="done")
    if variant == "add":
        def pt():
            return (round(rng.uniform(-300, 300), 2), round(rng.uniform(-300, 300), 2))
        return Query(variant="add", start=pt(), goal=pt())
    if variant == "remove":
        return Query(variant="remove", agent=rng.randrange(100))
    names = ["stop", "turn", "change-lane-left", "give-way", "exit-right", "slow-down"]
    if variant == "whatif":
        macros = tuple(rng.choice(names) for _ in range(rng.randint(1, 4)))
        return Query(variant="whatif", agent=rng.randrange(100), macros=macros,
                     time=rng.randrange(2000))
    return Query(variant="what", agent=rng.randrange(100), time=rng.randrange(2000))


def test_dsl_round_trip_thousand_queries():
    rng = random.Random(2024)
    start = time.perf_counter()
    for _ in range(1000):
        q = random_query(rng)
        assert parse(render(q)) == q
    # The documented query strings parse to their documented structures.
    assert parse("whatif(1 [turn], 40)") == Query(variant="whatif", agent=1,
                                                  macros=("turn",), time=40)
    assert parse("add([2,68], [-3,14])") == Query(variant="add", start=(2.0, 68.0),
                                                  goal=(-3.0, 14.0))
    assert parse("remove(1)") == Query(variant="remove", agent=1)
    assert parse("what(1, 40)") == Query(variant="what", agent=1, time=40)
    assert parse("DONE").variant == "done"
    elapsed = time.perf_counter() - start
    assert elapsed < 1.0, f"round trip took {elapsed:.2f}s (budget 1s)"
    report(f"DSL round trip (1000 queries + documented forms) in {elapsed:.2f}s")


# -- 3. Shapley suite -----------------------------------------------------------


def test_shapley_suite():
    start = time.perf_counter()
    rng = random.Random(99)
    for _ in range(100):
        table = {
            frozenset(c): rng.uniform(-10, 10)
            for r in range(6)
            for c in itertools.combinations(SHAPLEY_FEATURES, r)
        }
        result = shapley(SHAPLEY_FEATURES, table.__getitem__)
        assert result.efficiency_gap() <= 1e-9

    def dummy_game(subset):
        return 3.0 * ("road_layout" in subset) - 1.5 * ("observations" in subset)

    result = shapley(SHAPLEY_FEATURES, dummy_game)
    for name in ("low_macros", "high_macros", "complexity"):
        assert result.values[name] == 0.0

    sym = shapley(SHAPLEY_FEATURES, lambda s: float(len(s)) ** 1.5)
    values = list(sym.values.values())
    assert all(abs(v - values[0]) < 1e-12 for v in values)

    worked = shapley(("A", "B"), {
        frozenset(): 0.0, frozenset({"A"}): 1.0,
        frozenset({"B"}): 2.0, frozenset({"A", "B"}): 4.0,
    }.__getitem__)
    assert worked.values["A"] == pytest.approx(1.5, abs=1e-12)
    assert worked.values["B"] == pytest.approx(2.5, abs=1e-12)
    elapsed = time.perf_counter() - start
    assert elapsed < 1.0, f"shapley suite took {elapsed:.2f}s (budget 1s)"
    report(f"Shapley efficiency/dummy/symmetry/worked example in {elapsed:.2f}s")


# -- 4. metric arithmetic ----------------------------------------------------------


def test_metric_arithmetic():
    assert PreferenceScore(4, 4, 4, 4).combined == pytest.approx(4.0, abs=1e-4)
    assert PreferenceScore(1, 1, 1, 1).combined == pytest.approx(1.0, abs=1e-4)
    assert PreferenceScore(2, 4, 2, 4).combined == pytest.approx(2.8284, abs=1e-4)
    _, sem, _ = mean_sem([1, 2, 3])
    assert sem == pytest.approx(0.5774, abs=1e-4)

    def uniform(v):
        return PreferenceScore(v, v, v, v)

    rounds = [(uniform(2), CorrectnessScore(3)), (uniform(4), CorrectnessScore(4)),
              (uniform(3), CorrectnessScore(5))]
    assert best_round(rounds) == 1
    report("metric arithmetic (geometric means, SEM, best round)")


# -- 5. simulator determinism & physics ----------------------------------------------


def snapshot(trajectory):
    return [
        (s.t, tuple((a.agent_id, a.position, a.velocity, a.bearing) for a in s.agents))
        for s in trajectory.states
    ]


def test_simulator_determinism_and_physics():
    start = time.perf_counter()
    first = {sid: build_simulator(load(sid), seed=0).baseline() for sid in SCENARIO_IDS}
    sweep_elapsed = time.perf_counter() - start
    second = {sid: build_simulator(load(sid), seed=0).baseline() for sid in SCENARIO_IDS}
    for sid in SCENARIO_IDS:
        assert snapshot(first[sid]) == snapshot(second[sid]), f"scenario {sid} not bit-identical"

    # Closed-form single-agent checks at 1e-9.
    agent = AgentState(agent_id=0, position=(0, 0), velocity=(3.0, 0.0), bearing=0.0)
    cur = agent
    for _ in range(100):
        cur = integrate(cur, 0.0, 0.0, 0.05)
    assert cur.position[0] == pytest.approx(3.0 * 100 * 0.05, abs=1e-9)

    cur = AgentState(agent_id=0, position=(0, 0), velocity=(2.0, 0.0), bearing=0.0)
    a, dt, n = 1.5, 0.05, 100
    for _ in range(n):
        cur = integrate(cur, a, 0.0, dt)
    assert cur.speed == pytest.approx(2.0 + a * n * dt, abs=1e-9)
    assert cur.position[0] == pytest.approx(2.0 * n * dt + a * dt * dt * n * (n - 1) / 2,
                                            abs=1e-9)

    assert first[6].collision is not None, "scenario 6 must end in a collision"

    for sid in (8, 9, 10):
        spec = load(sid)
        ids = {ag.agent_id for ag in spec.agents}
        hidden = sum(
            1 for obs in first[sid].ego_observations
            if ids - {a.agent_id for a in obs}
        )
        assert hidden >= 1, f"scenario {sid} shows no occlusion"

    assert sweep_elapsed < 30.0, f"sweep took {sweep_elapsed:.1f}s (budget 30s)"
    report(f"determinism + physics + collision + occlusion; sweep {sweep_elapsed:.1f}s")


# -- 6. wrap properties ----------------------------------------------------------------


def test_wrap_properties():
    rng = random.Random(3)
    for _ in range(500):
        n = rng.randint(1, 60)
        actions = [(rng.uniform(-4, 3), rng.uniform(-0.5, 0.5)) for _ in range(n)]
        lon, lat = wrap_low(actions)
        for segments in (lon, lat):
            assert segments[0].start_tick == 0
            assert segments[-1].end_tick == n
            for a, b in zip(segments, segments[1:]):
                assert a.end_tick == b.start_tick

    # expand -> wrap_high round trip on each library macro's fixture
    from test_macros import expansion_fixture
    from whysim.macros import H_MACRO_ORDER

    for name in H_MACRO_ORDER:
        state = expansion_fixture(name)
        actions = expand(name, state, 0)
        sim = Simulator(state, ego_id=0, horizon=len(actions),
                        schedule=[ScheduledMacros(agent_id=0, at_tick=0, macros=[name])])
        segments = wrap_high(sim.rollout(), 0)
        assert segments[0].macro_name == name, (name, [s.macro_name for s in segments])

    # change-lane expansion lands one lane width over (±0.2 m)
    from test_macros import expansion_fixture as fixture

    state = fixture("change-lane-right")
    actions = expand("change-lane-right", state, 0)
    agent = state.agents[0]
    for accel, steer in actions:
        agent = integrate(agent, accel, steer, state.dt)
    assert abs(state.agents[0].position[1] - agent.position[1]) == pytest.approx(3.5, abs=0.2)
    report("wrap tiling (500 sequences), expand/wrap round trips, lane-change offset")


# -- 7. query semantics ------------------------------------------------------------------


def test_query_semantics():
    sim = build_simulator(load(2))
    baseline = sim.baseline()

    # `what` at tau <= t returns the stored prefix state exactly.
    for tau in (0, 50, 150):
        result, _ = sim.run_query(baseline, Query(variant="what", agent=0, time=tau))
        stored = baseline.state_at(tau)
        got = result.states[0]
        assert got.t == stored.t
        assert [(a.agent_id, a.position, a.velocity) for a in got.agents] == \
            [(a.agent_id, a.position, a.velocity) for a in stored.agents]

    # remove(i) leaves no record of agent i anywhere.
    removed, _ = sim.run_query(baseline, Query(variant="remove", agent=1))
    assert all(not s.has_agent(1) for s in removed.states)
    assert all(all(a.agent_id != 1 for a in row) for row in removed.joint_actions)
    assert all(all(a.agent_id != 1 for a in obs) for obs in removed.ego_observations)

    # whatif recorded actions equal the macro expansion from tau.
    tau = 60
    cf, _ = sim.run_query(baseline, Query(variant="whatif", agent=1,
                                          macros=("stop",), time=tau))
    expansion = expand("stop", baseline.state_at(tau), 1,
                       library=sim.library, policy=sim.policy)
    assert cf.actions_of(1)[: len(expansion)] == expansion
    report("query semantics: what prefix, remove trace-free, whatif expansion")


# -- 8. evaluation wiring -------------------------------------------------------------------


def test_evaluation_wiring_exact_table():
    from whysim.pipeline import evaluate_session_doc, run_session

    spec = load(1)

    def session(script):
        cfg = ProviderConfig(provider="stub", script=script)
        return run_session(spec, 0, cfg, SessionConfig(horizon=spec.horizon)).to_dict()

    doc_a = session(["whatif(1, [stop], 40)", "round expl A", "DONE", "final A"])
    doc_b = session(["remove(1)", "round expl B", "DONE", "final B"])

    # Judge scripts: per-round (pref, corr), final (pref, corr), goal, action.
    judge_a = Gateway(ScriptedProvider([
        "ANSWER: 3,3,3,3", "ANSWER: 3",
        "ANSWER: 4,4,4,4", "ANSWER: 4",
        "ANSWER: A", "ANSWER: A",
    ]), ProviderConfig(provider="stub", script=[]), "ja")
    judge_b = Gateway(ScriptedProvider([
        "ANSWER: 2,2,2,2", "ANSWER: 2",
        "ANSWER: 3,3,3,3", "ANSWER: 5",
        "ANSWER: B", "ANSWER: B",
    ]), ProviderConfig(provider="stub", script=[]), "jb")

    records = []
    records.extend(evaluate_session_doc(doc_a, judge_a, seed=0).records)
    records.extend(evaluate_session_doc(doc_b, judge_b, seed=0).records)
    headline = [r for r in records if r.round_index is None]
    table = aggregate(headline, group_by=("system",))
    cells = table[("interrogation",)]
    # Hand-computed: headline preferences are the finals (4.0 and 3.0):
    # mean 3.5, sample std sqrt(0.5), SEM 0.5. Correctness 4 and 5: mean 4.5.
    assert cells["preference"].mean == pytest.approx(3.5, abs=1e-12)
    assert cells["preference"].sem == pytest.approx(0.5, abs=1e-12)
    assert cells["correctness"].mean == pytest.approx(4.5, abs=1e-12)
    assert cells["correctness"].sem == pytest.approx(0.5, abs=1e-12)
    assert cells["preference"].n == 2

    # NoExp prompts differ from explained prompts only by the explanation block.
    task = PredictionTask(kind="goal", options=list(spec.goal_task.options),
                          correct_index=spec.goal_task.correct)
    order = shuffle_options(7)
    explained = build_prediction_prompt("scenario text", "an explanation", task, order)
    bare = build_prediction_prompt("scenario text", None, task, order)
    diff = [line for line in difflib.ndiff(bare.splitlines(), explained.splitlines())
            if line.startswith(("+", "-"))]
    assert diff, "prompts should differ"
    assert all(line.startswith("+") for line in diff), "only additions allowed"
    report("evaluation wiring: exact hand-computed table, NoExp diff is the block")


# -- 9. optional live smoke (network gated, non-blocking) -----------------------------------


def test_live_smoke_optional():
    endpoint = os.environ.get("WHYSIM_ENDPOINT", "")
    model = os.environ.get("WHYSIM_MODEL", "")
    if os.environ.get("WHYSIM_LIVE_SMOKE") != "1" or not endpoint or not model:
        pytest.skip("live smoke disabled (set WHYSIM_LIVE_SMOKE=1, WHYSIM_ENDPOINT, "
                    "WHYSIM_MODEL, WHYSIM_API_KEY)")
    from whysim.pipeline import run_session

    spec = load(2)
    cfg = ProviderConfig(provider="http", model=model, endpoint=endpoint,
                         credential_env="WHYSIM_API_KEY")
    record = run_session(spec, 0, cfg, SessionConfig(horizon=spec.horizon))
    result = record.result
    assert len(result.rounds) <= SessionConfig().n_max
    queries = [r.query for r in result.rounds]
    assert any(q.startswith(("whatif", "remove")) for q in queries), queries
    assert result.final_explanation.strip()
    report("live smoke: session completed with counterfactual queries")
