"""Regenerate the checked-in golden test assets.

Run from the repository root after an intentional behaviour change, inspect
the diff, and commit. Tests compare byte-for-byte against these files.
"""

from pathlib import Path

from whysim.llm import Gateway, ProviderConfig, ScriptedProvider
from whysim.macros import wrap_high
from whysim.orchestrator import ObservationMemory, Orchestrator, SessionConfig, UserQuestion
from whysim.scenarios import build_simulator, load
from whysim.simulation.state import export_trajectory
from whysim.verbalize import verbalise_macros

GOLDEN_DIR = Path(__file__).resolve().parent.parent / "tests" / "golden"

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


def scenario2_macros() -> str:
    spec = load(2)
    trajectory = build_simulator(spec).baseline()
    segments = []
    for agent_id in (0, 1, 2):
        segments.extend(wrap_high(trajectory, agent_id))
    return verbalise_macros(segments, dt=trajectory.dt) + "\n"


def scenario1_session() -> str:
    spec = load(1)
    simulator = build_simulator(spec)
    memory = ObservationMemory(ego_id=0, trajectory=simulator.baseline())
    gateway = Gateway(
        ScriptedProvider(SESSION_SCRIPT),
        ProviderConfig(provider="stub", script=SESSION_SCRIPT),
        session_id="golden-s1",
    )
    orchestrator = Orchestrator(simulator=simulator, observation_memory=memory,
                                gateway=gateway)
    prompt = spec.user_prompts[0]
    result = orchestrator.explain(
        UserQuestion(text=prompt.text, t=prompt.time, ego_id=prompt.ego_id),
        SessionConfig(seed=0, horizon=spec.horizon),
    )
    import json

    return json.dumps(result.memory.to_dict(), indent=2, sort_keys=True) + "\n"


def scenario1_trajectory() -> str:
    return export_trajectory(build_simulator(load(1)).baseline())


def main() -> None:
    GOLDEN_DIR.mkdir(parents=True, exist_ok=True)
    targets = {
        "scenario2_macros.txt": scenario2_macros,
        "scenario1_session.json": scenario1_session,
        "scenario1_trajectory.csv": scenario1_trajectory,
    }
    for name, builder in targets.items():
        path = GOLDEN_DIR / name
        path.write_text(builder())
        print(f"wrote {path}")


if __name__ == "__main__":
    main()
