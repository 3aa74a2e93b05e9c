"""Chart emission for evaluation results (evolution, query mix, Shapley)."""

from __future__ import annotations

from collections import Counter
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .evaluation import EvalRecord, METRICS, ShapleyResult, mean_sem  # noqa: E402


def plot_round_evolution(records: list[EvalRecord], out_path: str | Path) -> Path:
    """Mean score per interrogation round with SEM error bars."""
    per_round: dict[int, list[EvalRecord]] = {}
    for record in records:
        if record.round_index is not None:
            per_round.setdefault(record.round_index, []).append(record)
    fig, axes = plt.subplots(1, 2, figsize=(10, 4))
    rounds = sorted(per_round)
    for ax, metrics in zip(axes, (("preference", "correctness"), ("goal_acc", "action_acc"))):
        for metric in metrics:
            xs, ys, errs = [], [], []
            for n in rounds:
                values = [r.metric(metric) for r in per_round[n]]
                values = [v for v in values if v is not None]
                if not values:
                    continue
                mean, sem, _ = mean_sem(values)
                xs.append(n)
                ys.append(mean)
                errs.append(sem)
            if xs:
                ax.errorbar(xs, ys, yerr=errs, marker="o", capsize=3, label=metric)
        ax.set_xlabel("interrogation round")
        ax.legend()
        ax.grid(alpha=0.3)
    axes[0].set_ylabel("score (1-5)")
    axes[1].set_ylabel("accuracy")
    fig.suptitle("Intermediate explanation scores by round")
    fig.tight_layout()
    out_path = Path(out_path)
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
    return out_path


def plot_query_mix(query_texts: list[str], out_path: str | Path) -> Path:
    """Proportion of query keywords issued across sessions."""
    counts = Counter()
    for text in query_texts:
        keyword = text.split("(")[0].strip().lower() if "(" in text else text.strip().lower()
        counts[keyword] += 1
    total = max(sum(counts.values()), 1)
    kinds = ["add", "remove", "whatif", "what", "done"]
    values = [counts.get(k, 0) / total for k in kinds]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.bar(kinds, values, color="#4878d0")
    ax.set_ylabel("proportion of queries")
    ax.set_title("Interrogation query mix")
    ax.grid(axis="y", alpha=0.3)
    fig.tight_layout()
    out_path = Path(out_path)
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
    return out_path


def plot_shapley(result: ShapleyResult, out_path: str | Path, title: str = "") -> Path:
    """Horizontal bar chart of per-feature Shapley values."""
    names = list(result.features)
    values = [result.values[name] for name in names]
    fig, ax = plt.subplots(figsize=(6, 4))
    colors = ["#d65f5f" if v < 0 else "#6acc64" for v in values]
    ax.barh(names, values, color=colors)
    ax.axvline(0.0, color="black", linewidth=0.8)
    ax.set_xlabel("Shapley value (contribution to correctness)")
    if title:
        ax.set_title(title)
    fig.tight_layout()
    out_path = Path(out_path)
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
    return out_path
