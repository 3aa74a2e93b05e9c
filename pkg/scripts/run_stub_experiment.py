"""Offline end-to-end experiment: sessions + judging + tables + plots.

Runs fully deterministic stubbed sessions for every scenario prompt, scores
them with a scripted judge, and writes the aggregate table plus the
evolution and query-mix charts into ``out/stub_experiment``. Useful as a
smoke harness and as a template for live-provider experiments.
"""

import argparse
import json
from pathlib import Path

from whysim.evaluation import aggregate, format_table
from whysim.llm import CallableProvider, Gateway, ProviderConfig
from whysim.orchestrator import SessionConfig
from whysim.pipeline import (
    evaluate_noexp,
    evaluate_session_doc,
    run_session,
)
from whysim.plots import plot_query_mix, plot_round_evolution
from whysim.scenarios import SCENARIO_IDS, load

SESSION_SCRIPT = [
    "whatif(1, [stop], 40)",
    "If vehicle 1 brakes, the ego vehicle keeps its manoeuvre, so vehicle 1 is "
    "not the cause.",
    "remove(1)",
    "Removing vehicle 1 leaves the ego behaviour unchanged, pointing to the "
    "route as the cause.",
    "DONE",
    "The ego vehicle acted to serve its own route; the counterfactual rollouts "
    "show the questioned behaviour persists without the other vehicles.",
]


def scripted_judge() -> Gateway:
    """Deterministic judge: scores keyed on the explanation round markers."""
    state = {"calls": 0}

    def reply(messages):
        state["calls"] += 1
        prompt = messages[-1].text
        if "Rate the explanation" in prompt:
            return "ANSWER: 3, 4, 3, 4"
        if "Score how correct" in prompt:
            return "ANSWER: 4"
        return "ANSWER: A"

    return Gateway(CallableProvider(reply), ProviderConfig(provider="echo"), "judge")


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="out/stub_experiment")
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    out_dir = Path(args.out)
    session_dir = out_dir / "sessions"
    session_dir.mkdir(parents=True, exist_ok=True)

    records = []
    queries = []
    judge = scripted_judge()
    for scenario_id in SCENARIO_IDS:
        spec = load(scenario_id)
        for prompt_index in range(len(spec.user_prompts)):
            provider = ProviderConfig(provider="stub", script=list(SESSION_SCRIPT))
            record = run_session(spec, prompt_index, provider,
                                 SessionConfig(seed=args.seed, horizon=spec.horizon))
            path = record.save(session_dir / f"s{scenario_id:02d}p{prompt_index}.json")
            doc = json.loads(path.read_text())
            queries.extend(r["query"] for r in doc["rounds"])
            evaluation = evaluate_session_doc(doc, judge, seed=args.seed)
            records.extend(evaluation.records)
            records.append(evaluate_noexp(spec, prompt_index, judge, seed=args.seed))
        print(f"scenario {scenario_id}: {len(spec.user_prompts)} prompt(s) done")

    headline = [r for r in records if r.round_index is None]
    table = format_table(aggregate(headline, group_by=("system",)))
    (out_dir / "table.txt").write_text(table + "\n")
    print(table)

    plot_round_evolution(records, out_dir / "evolution.png")
    plot_query_mix(queries, out_dir / "query_mix.png")
    print(f"artifacts in {out_dir}")


if __name__ == "__main__":
    main()
