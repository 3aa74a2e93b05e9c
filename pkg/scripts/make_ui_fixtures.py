"""Export backend-truth fixtures consumed by the web console's tests."""

import json
from pathlib import Path

from whysim.queries import parse
from whysim.scenarios import build_simulator, load
from whysim.service import layout_payload, trajectory_payload

OUT = Path(__file__).resolve().parent.parent / "tests" / "data"


def main() -> None:
    OUT.mkdir(parents=True, exist_ok=True)
    spec = load(2)
    simulator = build_simulator(spec)
    baseline = simulator.baseline()

    (OUT / "ui_scenario2.json").write_text(json.dumps({
        "id": spec.scenario_id,
        "ego_id": spec.ego_id,
        "layout": layout_payload(spec),
        "goals": [
            {"agent_id": g.agent_id, "region": list(g.region),
             "stop_required": g.stop_required}
            for g in spec.goals
        ],
    }, indent=2, sort_keys=True) + "\n")

    (OUT / "ui_scenario2_trajectory.json").write_text(
        json.dumps(trajectory_payload(baseline), indent=2, sort_keys=True) + "\n"
    )

    counterfactual, reward = simulator.run_query(baseline, parse("remove(1)"))
    (OUT / "ui_scenario2_remove1.json").write_text(json.dumps({
        "ok": True,
        "query": "remove(1)",
        "trajectory": trajectory_payload(counterfactual),
        "reward": {"components": dict(reward.components),
                   "weights": dict(reward.weights), "total": reward.total},
    }, indent=2, sort_keys=True) + "\n")

    # Collision marker fixture from the irrational scenario.
    collision_traj = build_simulator(load(6)).baseline()
    (OUT / "ui_scenario6_trajectory.json").write_text(
        json.dumps(trajectory_payload(collision_traj), indent=2, sort_keys=True) + "\n"
    )
    for name in ("ui_scenario2.json", "ui_scenario2_trajectory.json",
                 "ui_scenario2_remove1.json", "ui_scenario6_trajectory.json"):
        print(f"wrote {OUT / name}")


if __name__ == "__main__":
    main()
