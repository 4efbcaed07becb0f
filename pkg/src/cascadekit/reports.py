"""Machine-readable report and plot-data writers (JSON / CSV).

Every report embeds the configuration that produced it, so a run can be
replayed exactly. No plotting lives here; the CSVs feed external tools.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

from .engine import CascadeEvaluation, CascadeSpec


def committee_notation(model_ids) -> str:
    """`+`-joined ids, e.g. "b3+b5+b5"."""
    return "+".join(model_ids)


def evaluation_report(spec: CascadeSpec, evaluation: CascadeEvaluation,
                      config: dict | None = None) -> dict:
    report = {
        "accuracy": evaluation.accuracy,
        "avg_cost": evaluation.avg_cost,
        "worst_case_cost": evaluation.worst_case_cost,
        "exit_ratios": list(evaluation.exit_ratios),
        "n": spec.num_models,
        "model_ids": list(spec.model_ids),
        "thresholds": list(spec.thresholds),
        "metric": spec.metric.value,
        "aggregation": spec.aggregation.value,
    }
    if config is not None:
        report["config"] = config
    return report


def write_json(path, payload: dict):
    Path(path).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")


def write_trace_csv(path, evaluation: CascadeEvaluation, labels):
    """Per-example exit trace: example,exit_stage,predicted,label,confidence_at_exit."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["example", "exit_stage", "predicted", "label", "confidence_at_exit"])
        for i in range(len(evaluation.exit_stage)):
            writer.writerow([
                i,
                int(evaluation.exit_stage[i]),
                int(evaluation.predicted_labels[i]),
                int(labels[i]),
                repr(float(evaluation.confidence_at_exit[i])),
            ])


def write_sweep_csv(path, rows):
    """Threshold sweep rows: t,accuracy,avg_cost."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "accuracy", "avg_cost"])
        for t, acc, cost in rows:
            writer.writerow([repr(t), repr(acc), repr(cost)])


def write_curve_csv(path, curve):
    """Selective-accuracy curve: k,accuracy."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["k", "accuracy"])
        for k, acc in curve.points:
            writer.writerow([repr(k), repr(acc)])


def write_frontier_csv(path, frontier):
    """Pareto points: avg_cost,accuracy,worst_case_cost,models,thresholds."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["avg_cost", "accuracy", "worst_case_cost", "models", "thresholds"])
        for spec, ev in frontier.points:
            writer.writerow([
                repr(ev.avg_cost),
                repr(ev.accuracy),
                repr(ev.worst_case_cost),
                committee_notation(spec.model_ids),
                "|".join(repr(t) for t in spec.thresholds),
            ])


def format_exit_table(spec: CascadeSpec, evaluation: CascadeEvaluation) -> str:
    """Human-readable summary: committee, accuracy, cost, exit percentages."""
    lines = [
        f"cascade:     {committee_notation(spec.model_ids)}",
        f"thresholds:  {', '.join(f'{t:.6g}' for t in spec.thresholds) or '(none)'}",
        f"accuracy:    {evaluation.accuracy:.4f}",
        f"avg cost:    {evaluation.avg_cost:.6g}",
        f"worst cost:  {evaluation.worst_case_cost:.6g}",
        "exit ratios: " + ", ".join(
            f"stage {i + 1}: {r * 100:.1f}%" for i, r in enumerate(evaluation.exit_ratios)
        ),
    ]
    return "\n".join(lines)
