from __future__ import annotations

import json
from dataclasses import asdict
from typing import Any, Dict, List, Optional, Sequence, Tuple

from .assembly import WorkflowGraph
from .evaluation import AXES, RankedRow
from .models import Matching, MetricReport, PathResult
from .wkg import GraphSummary

RULE = "=" * 72


def format_summary(summary: GraphSummary) -> str:
    return (
        f"WKG: {summary.nodes} tasks, {summary.edges} edges, "
        f"{summary.pair_count_total} consecutive implementation pairs"
    )


def format_path(result: PathResult, wfg: Optional[WorkflowGraph] = None) -> str:
    lines: List[str] = [RULE, "Optimal task path", RULE]
    interior = [node_id for node_id in result.node_ids if wfg is None or not wfg.is_terminal(node_id)]
    if wfg is not None and not interior:
        lines.append("(direct input -> output, no tasks)")
    for step, (node_id, cost) in enumerate(zip(interior, result.per_task), start=1):
        task = wfg.task(node_id) if wfg is not None else None
        title = f" {task.title}" if task is not None else ""
        line = f"{step:>2}. {node_id}{title} (cost {cost.combined:.4g})"
        if cost.success_rate is not None:
            line += f", success {cost.success_rate:.0%}"
        lines.append(line)
    lines.append(f"Total cost: {result.total_cost:.6g}")
    return "\n".join(lines)


def path_to_payload(result: PathResult) -> Dict[str, Any]:
    return {
        "node_ids": list(result.node_ids),
        "total_cost": result.total_cost,
        "per_task": [asdict(cost) for cost in result.per_task],
    }


def radar(report: MetricReport) -> Dict[str, float]:
    return dict(zip(AXES, report.headline()))


def format_metric_report(report: MetricReport, label: Optional[str] = None) -> str:
    lines: List[str] = [RULE, f"Evaluation{f' of {label}' if label else ''} ({report.trials} trials)", RULE]
    lines.append(f"Coverage:        {report.coverage:.3f}")
    lines.append(f"Kendall tau:     {report.kendall:.3f} (raw {report.kendall_raw:.3f})")
    lines.append(f"DTW:             {report.dtw:.3f}")
    lines.append(f"Cosine:          {report.cosine:.3f}")
    lines.append(f"BLEU:            {report.bleu:.3f}")
    lines.append(f"Pentagon area:   {report.pentagon_area:.3f}")
    return "\n".join(lines)


def matching_to_payload(matching: Matching) -> Dict[str, Any]:
    return {
        "pairs": [asdict(pair) for pair in matching.pairs],
        "unmatched_generated": list(matching.unmatched_generated),
    }


def eval_report_payload(
    trials: Sequence[Tuple[str, MetricReport, Matching]],
    averaged: MetricReport,
) -> Dict[str, Any]:
    return {
        "trials": [
            {"source": source, "metrics": asdict(report), "matching": matching_to_payload(matching)}
            for source, report, matching in trials
        ],
        "average": asdict(averaged),
        "radar": radar(averaged),
    }


def format_ranking(rows: Sequence[RankedRow], baseline: Optional[str] = None) -> str:
    if not rows:
        return "No reports were ranked."
    width = max(len(row.name) for row in rows)
    lines: List[str] = [RULE, "Pentagon-area ranking", RULE]
    for position, row in enumerate(rows, start=1):
        line = f"{position:>2}. {row.name:<{width}}  area {row.report.pentagon_area:.3f}  mean {row.mean:.4f}"
        if row.delta is not None:
            line += f"  delta {row.delta:+.4f}"
        lines.append(line)
    if baseline:
        lines.append(f"Deltas are mean differences against {baseline}.")
    return "\n".join(lines)


def ranking_to_payload(rows: Sequence[RankedRow]) -> List[Dict[str, Any]]:
    return [
        {
            "name": row.name,
            "pentagon_area": row.report.pentagon_area,
            "mean": row.mean,
            "delta": row.delta,
            "radar": radar(row.report),
        }
        for row in rows
    ]


def to_json(payload: Any) -> str:
    return json.dumps(payload, indent=2, sort_keys=True, ensure_ascii=False, default=str)
