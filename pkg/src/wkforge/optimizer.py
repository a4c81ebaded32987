from __future__ import annotations

import heapq
import logging
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

from .assembly import WorkflowGraph
from .errors import InvalidInput, InvalidPath, NoPath
from .models import CostStats, CostWeights, DefaultCosts, GeneratedTask, PathResult, TaskCost


LOGGER = logging.getLogger(__name__)

TERMINAL_COST = TaskCost(0.0, 0.0, 0.0, 0.0)


def task_cost(
    task: Optional[GeneratedTask],
    history: Mapping[str, CostStats],
    weights: CostWeights,
    defaults: DefaultCosts = DefaultCosts(),
) -> TaskCost:
    """Linear cost of one task; ``None`` stands for a virtual terminal."""
    if task is None:
        return TERMINAL_COST
    stats = history.get(task.wkg_node_id) if task.wkg_node_id is not None else None
    if stats is not None:
        compute, elapsed, model, success_rate = stats.c_compute, stats.c_time, stats.c_model, stats.success_rate
    else:
        compute, elapsed, model, success_rate = defaults.c_compute, defaults.c_time, defaults.c_model, None
    if min(compute, elapsed, model) < 0:
        raise InvalidInput(f"task {task.local_id!r} has a negative cost")
    combined = weights.w_compute * compute + weights.w_time * elapsed + weights.w_model * model
    return TaskCost(compute, elapsed, model, combined, success_rate)


def _node_costs(
    wfg: WorkflowGraph,
    weights: CostWeights,
    defaults: DefaultCosts,
    history: Optional[Mapping[str, CostStats]],
) -> Dict[str, TaskCost]:
    table = history or {}
    return {node_id: task_cost(wfg.task(node_id), table, weights, defaults) for node_id in wfg.nodes}


def optimal_path(
    wfg: WorkflowGraph,
    weights: CostWeights,
    defaults: DefaultCosts = DefaultCosts(),
    history: Optional[Mapping[str, CostStats]] = None,
) -> PathResult:
    """Cheapest I -> O path where each task's cost sits on its incoming edges.

    Equal costs resolve to the lexicographically smallest node-id sequence.
    """
    if not wfg.has_terminals:
        raise InvalidInput("attach terminals before optimizing")
    costs = _node_costs(wfg, weights, defaults, history)
    digraph = wfg.digraph
    settled: Dict[str, Tuple[float, Tuple[str, ...]]] = {}
    heap: List[Tuple[float, Tuple[str, ...]]] = [(costs[wfg.entry_id].combined, (wfg.entry_id,))]
    while heap:
        dist, path = heapq.heappop(heap)
        node_id = path[-1]
        if node_id in settled:
            continue
        settled[node_id] = (dist, path)
        if node_id == wfg.exit_id:
            break
        for successor in sorted(digraph.successors(node_id)):
            if successor not in settled:
                heapq.heappush(heap, (dist + costs[successor].combined, path + (successor,)))

    if wfg.exit_id not in settled:
        raise NoPath(f"{wfg.exit_id} is unreachable from {wfg.entry_id}")
    path = settled[wfg.exit_id][1]
    per_task = tuple(costs[node_id] for node_id in path if not wfg.is_terminal(node_id))
    total = sum((cost.combined for cost in per_task), 0.0)
    LOGGER.info("Optimal path visits %s tasks at cost %.6g", len(per_task), total)
    return PathResult(node_ids=path, total_cost=total, per_task=per_task)


def path_cost(
    wfg: WorkflowGraph,
    node_ids: Sequence[str],
    weights: CostWeights,
    defaults: DefaultCosts = DefaultCosts(),
    history: Optional[Mapping[str, CostStats]] = None,
) -> float:
    if len(node_ids) < 2 or node_ids[0] != wfg.entry_id or node_ids[-1] != wfg.exit_id:
        raise InvalidPath(f"a path must run from {wfg.entry_id} to {wfg.exit_id}")
    digraph = wfg.digraph
    for src, dst in zip(node_ids, node_ids[1:]):
        if not digraph.has_edge(src, dst):
            raise InvalidPath(f"missing edge {src} -> {dst}")
    table = history or {}
    return sum(
        (
            task_cost(wfg.task(node_id), table, weights, defaults).combined
            for node_id in node_ids
            if not wfg.is_terminal(node_id)
        ),
        0.0,
    )
