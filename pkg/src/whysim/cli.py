"""Operator command line: run scenarios, explain, evaluate, Shapley, replay, plot.

Configuration precedence is file < environment < flag; credentials are only
ever referenced by environment variable name.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import __version__
from .evaluation import EvalRecord, aggregate, check_judge_distinct, format_table
from .llm import Gateway, ProviderConfig, make_provider
from .orchestrator import CONTEXT_FEATURES, SessionConfig
from .pipeline import (
    evaluate_noexp,
    evaluate_session_doc,
    load_session_record,
    run_model_only,
    run_session,
    run_shapley_analysis,
    session_id_for,
)
from .plots import plot_query_mix, plot_round_evolution, plot_shapley
from .scenarios import SCENARIO_IDS, baseline_run, load
from .simulation.engine import reach
from .simulation.state import export_trajectory


class CliError(RuntimeError):
    pass


def _provider_config(args, prefix: str = "provider") -> ProviderConfig:
    name = getattr(args, prefix)
    script_path = getattr(args, f"{prefix}_script", "") or ""
    if name not in ("stub", "echo", "http"):
        raise CliError(f"unknown provider {name!r}")
    if name == "stub" and not script_path:
        raise CliError(f"--{prefix.replace('_', '-')}-script is required for the stub provider")
    return ProviderConfig(
        provider=name,
        model=getattr(args, f"{prefix}_model", "") or os.environ.get("WHYSIM_MODEL", ""),
        endpoint=getattr(args, f"{prefix}_endpoint", "")
        or os.environ.get("WHYSIM_ENDPOINT", ""),
        credential_env=getattr(args, f"{prefix}_key_env", "") or "WHYSIM_API_KEY",
        max_output_tokens=args.max_output_tokens,
        script_path=script_path,
    )


def _session_config(args, spec) -> SessionConfig:
    features = {name: True for name in CONTEXT_FEATURES}
    if args.features:
        wanted = {f.strip() for f in args.features.split(",") if f.strip()}
        unknown = wanted - set(CONTEXT_FEATURES)
        if unknown:
            raise CliError(f"unknown features: {sorted(unknown)}")
        features = {name: name in wanted for name in CONTEXT_FEATURES}
    return SessionConfig(
        n_max=args.n_max,
        complexity=args.complexity,
        features=features,
        horizon=min(args.horizon, spec.horizon),
        seed=args.seed,
    )


def _echo_config(args, extra: dict | None = None) -> None:
    doc = {"command": args.command, "version": __version__, "seed": getattr(args, "seed", 0)}
    if extra:
        doc.update(extra)
    print(f"# config: {json.dumps(doc, sort_keys=True)}")


def cmd_run(args) -> int:
    spec = load(args.scenario)
    trajectory = baseline_run(args.scenario, seed=args.seed)
    _echo_config(args, {"scenario": args.scenario})
    print(f"scenario {spec.scenario_id} ({spec.name}): {len(trajectory)} ticks, "
          f"{len(spec.agents)} agents, collision={trajectory.collision is not None}")
    for goal in spec.goals:
        tick = reach(trajectory, goal)
        when = "never" if tick is None else f"tick {tick} ({tick * trajectory.dt:.1f} s)"
        print(f"  agent {goal.agent_id}: goal reached {when}")
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(export_trajectory(trajectory))
        print(f"trajectory written to {args.out}")
    return 0


def cmd_explain(args) -> int:
    spec = load(args.scenario)
    provider_cfg = _provider_config(args)
    config = _session_config(args, spec)
    _echo_config(args, {"scenario": args.scenario, "prompt": args.prompt,
                        "provider": provider_cfg.provider, "model": provider_cfg.model,
                        "features": config.features, "complexity": config.complexity,
                        "n_max": config.n_max})
    if args.mode == "model_only":
        record = run_model_only(spec, args.prompt, provider_cfg, config)
    else:
        record = run_session(spec, args.prompt, provider_cfg, config)
    out_dir = Path(args.out)
    sid = session_id_for(spec.scenario_id, args.prompt, record.mode, config.seed)
    path = record.save(out_dir / f"{sid}.json")
    print(record.result.final_explanation)
    print(f"# session saved to {path}")
    return 0


def cmd_evaluate(args) -> int:
    if not args.sessions and not args.noexp:
        raise CliError("no sessions given")
    judge_cfg = _provider_config(args, "judge")
    judge = Gateway(make_provider(judge_cfg), judge_cfg, session_id="judge")
    records: list[EvalRecord] = []
    exclusions = 0
    _echo_config(args, {"judge": judge_cfg.provider, "judge_model": judge_cfg.model})
    for path in args.sessions:
        doc = load_session_record(path)
        generator_cfg = ProviderConfig(provider=doc.get("provider", "stub"),
                                       model=doc.get("model", ""))
        check_judge_distinct(generator_cfg, judge_cfg)
        evaluation = evaluate_session_doc(doc, judge, seed=args.seed)
        records.extend(evaluation.records)
        exclusions += evaluation.exclusions
        if evaluation.best_round_index is not None:
            print(f"# {path}: best round index {evaluation.best_round_index}")
    if args.noexp:
        for scenario_id in args.noexp:
            spec = load(scenario_id)
            for prompt_index in range(len(spec.user_prompts)):
                records.append(evaluate_noexp(spec, prompt_index, judge, seed=args.seed))
    headline = [r for r in records if r.round_index is None]
    table = aggregate(headline, group_by=("system",))
    text = format_table(table, group_by=("system",))
    print(text)
    if exclusions:
        print(f"# {exclusions} scores excluded (judge output unparseable)")
    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        payload = {
            "records": [
                {
                    "scenario_id": r.scenario_id,
                    "prompt_index": r.prompt_index,
                    "system": r.system,
                    "round_index": r.round_index,
                    "preference": r.preference.combined if r.preference else None,
                    "correctness": r.correctness.value if r.correctness else None,
                    "goal_correct": r.goal_correct,
                    "action_correct": r.action_correct,
                }
                for r in records
            ],
            "exclusions": exclusions,
            "table": text,
        }
        out.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
        print(f"# results written to {out}")
    return 0


def cmd_shapley(args) -> int:
    provider_cfg = _provider_config(args)
    judge_cfg = _provider_config(args, "judge")
    check_judge_distinct(provider_cfg, judge_cfg)
    judge = Gateway(make_provider(judge_cfg), judge_cfg, session_id="judge")
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    _echo_config(args, {"scenarios": args.scenarios})

    def provider_factory(_subset):
        return _provider_config(args)

    for scenario_id in args.scenarios:
        result, sessions = run_shapley_analysis(
            scenario_id, args.prompt, provider_factory, judge,
            base_config=SessionConfig(n_max=args.n_max, seed=args.seed),
        )
        gap = result.efficiency_gap()
        print(f"scenario {scenario_id}: {sessions} sessions, efficiency gap {gap:.2e}")
        for name in result.features:
            print(f"  {name}: {result.values[name]:+.4f}")
        payload = {
            "scenario_id": scenario_id,
            "values": result.values,
            "grand_value": result.grand_value,
            "null_value": result.null_value,
            "sessions": sessions,
        }
        (out_dir / f"shapley_s{scenario_id:02d}.json").write_text(
            json.dumps(payload, indent=2, sort_keys=True) + "\n"
        )
        plot_shapley(result, out_dir / f"shapley_s{scenario_id:02d}.png",
                     title=f"Scenario {scenario_id}")
    return 0


def cmd_replay(args) -> int:
    doc = load_session_record(args.session)
    print(f"# scenario {doc['scenario_id']} prompt {doc['prompt_index']} "
          f"provider {doc['provider']} mode {doc.get('mode')}")
    for entry in doc["memory"]["entries"]:
        print(f"--- [{entry['role']} round {entry['round']}]")
        print(entry["text"])
    return 0


def cmd_plot(args) -> int:
    doc = json.loads(Path(args.results).read_text())
    records = [
        EvalRecord(
            scenario_id=r["scenario_id"],
            prompt_index=r["prompt_index"],
            system=r["system"],
            round_index=r["round_index"],
            preference=None,
            correctness=None,
            goal_correct=r["goal_correct"],
            action_correct=r["action_correct"],
        )
        for r in doc["records"]
    ]
    # Numeric metrics were flattened on export; rebuild lightweight carriers.
    for record, raw in zip(records, doc["records"]):
        if raw["preference"] is not None:
            record.preference = type("P", (), {"combined": raw["preference"]})()
        if raw["correctness"] is not None:
            record.correctness = type("C", (), {"value": raw["correctness"]})()
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    evo = plot_round_evolution(records, out_dir / "evolution.png")
    print(f"# wrote {evo}")
    if args.sessions:
        queries = []
        for path in args.sessions:
            sdoc = load_session_record(path)
            queries.extend(r["query"] for r in sdoc.get("rounds", []))
        mix = plot_query_mix(queries, out_dir / "query_mix.png")
        print(f"# wrote {mix}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="whysim",
                                     description="Counterfactual what-if interrogation engine")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--seed", type=int, default=0)

    p_run = sub.add_parser("run", help="simulate a scenario and export the trajectory")
    p_run.add_argument("--scenario", type=int, required=True, choices=SCENARIO_IDS)
    p_run.add_argument("--out", default="")
    common(p_run)

    def provider_flags(p, prefix="provider"):
        flag = prefix.replace("_", "-")
        p.add_argument(f"--{flag}", default="stub", choices=("stub", "echo", "http"))
        p.add_argument(f"--{flag}-script", dest=f"{prefix}_script", default="")
        p.add_argument(f"--{flag}-model", dest=f"{prefix}_model", default="")
        p.add_argument(f"--{flag}-endpoint", dest=f"{prefix}_endpoint", default="")
        p.add_argument(f"--{flag}-key-env", dest=f"{prefix}_key_env", default="")

    p_explain = sub.add_parser("explain", help="generate an explanation for a scenario prompt")
    p_explain.add_argument("--scenario", type=int, required=True, choices=SCENARIO_IDS)
    p_explain.add_argument("--prompt", type=int, default=0)
    p_explain.add_argument("--mode", default="interrogation",
                           choices=("interrogation", "model_only"))
    provider_flags(p_explain)
    p_explain.add_argument("--n-max", dest="n_max", type=int, default=10)
    p_explain.add_argument("--features", default="")
    p_explain.add_argument("--complexity", default="complex", choices=("concise", "complex"))
    p_explain.add_argument("--horizon", type=int, default=800)
    p_explain.add_argument("--max-output-tokens", dest="max_output_tokens",
                           type=int, default=512)
    p_explain.add_argument("--out", default="sessions")
    common(p_explain)

    p_eval = sub.add_parser("evaluate", help="score stored sessions with a judge")
    p_eval.add_argument("--sessions", nargs="*", default=[])
    p_eval.add_argument("--noexp", nargs="*", type=int, default=[],
                        help="scenario ids for the no-explanation baseline")
    provider_flags(p_eval, "judge")
    p_eval.add_argument("--max-output-tokens", dest="max_output_tokens",
                        type=int, default=512)
    p_eval.add_argument("--out", default="")
    common(p_eval)

    p_shap = sub.add_parser("shapley", help="exact Shapley analysis of context features")
    p_shap.add_argument("--scenarios", nargs="+", type=int, required=True)
    p_shap.add_argument("--prompt", type=int, default=0)
    provider_flags(p_shap)
    provider_flags(p_shap, "judge")
    p_shap.add_argument("--n-max", dest="n_max", type=int, default=2)
    p_shap.add_argument("--max-output-tokens", dest="max_output_tokens",
                        type=int, default=512)
    p_shap.add_argument("--out", default="shapley")
    common(p_shap)

    p_replay = sub.add_parser("replay", help="print a stored session transcript")
    p_replay.add_argument("--session", required=True)
    common(p_replay)

    p_plot = sub.add_parser("plot", help="emit evolution and query-mix charts")
    p_plot.add_argument("--results", required=True)
    p_plot.add_argument("--sessions", nargs="*", default=[])
    p_plot.add_argument("--out", default="plots")
    common(p_plot)

    return parser


COMMANDS = {
    "run": cmd_run,
    "explain": cmd_explain,
    "evaluate": cmd_evaluate,
    "shapley": cmd_shapley,
    "replay": cmd_replay,
    "plot": cmd_plot,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except CliError as exc:
        print(json.dumps({"error": str(exc)}), file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - machine-readable failure contract
        print(json.dumps({"error": f"{type(exc).__name__}: {exc}"}), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
