from __future__ import annotations

import json
import logging
import math
import threading
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, NamedTuple, Optional, Sequence, Tuple

import networkx as nx
import numpy as np
from packaging.specifiers import SpecifierSet
from packaging.version import InvalidVersion, Version

from .errors import InvalidInput, ParseError, UnknownNode
from .models import CostStats, EdgeStat, EmbeddingVector, TaskNode, WorkflowImplementationRecord
from .providers import EmbeddingProvider


LOGGER = logging.getLogger(__name__)

DEFAULT_LAMBDA = 0.5
FORMAT_VERSION = "1.0"
SUPPORTED_FORMATS = SpecifierSet(">=1.0,<2")
# 1 - exp(-x) rounds to 1.0 for x above ~37; weights stay strictly below 1.
MAX_WEIGHT = math.nextafter(1.0, 0.0)


class GraphSummary(NamedTuple):
    nodes: int
    edges: int
    pair_count_total: int


def edge_weight(pair_count: int, lam: float) -> float:
    _check_lambda(lam)
    if pair_count < 0:
        raise InvalidInput(f"pair_count must be non-negative, got {pair_count}")
    return min(-math.expm1(-lam * pair_count), MAX_WEIGHT)


def _check_lambda(lam: float) -> None:
    if not 0 < lam <= 1:
        raise InvalidInput(f"lambda must lie in (0, 1], got {lam}")


def _check_node(node: TaskNode) -> None:
    if not node.id or not node.id.strip():
        raise InvalidInput("task id must be non-empty")
    if not node.title or not node.title.strip():
        raise InvalidInput(f"task {node.id!r} has an empty title")
    if not node.description or not node.description.strip():
        raise InvalidInput(f"task {node.id!r} has an empty description")


class WorkKnowledgeGraph:
    # Mutations hold the lock; reads are lock-free between mutations.
    def __init__(self, lam: float = DEFAULT_LAMBDA) -> None:
        _check_lambda(lam)
        self._lam = lam
        self._graph = nx.DiGraph()
        self._history: List[WorkflowImplementationRecord] = []
        self._lock = threading.RLock()

    @property
    def lam(self) -> float:
        return self._lam

    @property
    def digraph(self) -> nx.DiGraph:
        return self._graph.copy(as_view=True)

    @property
    def history(self) -> Tuple[WorkflowImplementationRecord, ...]:
        return tuple(self._history)

    @property
    def nodes(self) -> List[TaskNode]:
        return [self._graph.nodes[node_id]["task"] for node_id in self._graph.nodes]

    @property
    def edges(self) -> List[EdgeStat]:
        return [self._edge_stat(src, dst) for src, dst in sorted(self._graph.edges)]

    def __len__(self) -> int:
        return self._graph.number_of_nodes()

    def __contains__(self, node_id: object) -> bool:
        return node_id in self._graph

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, WorkKnowledgeGraph):
            return NotImplemented
        return (
            self._lam == other._lam
            and sorted(self.nodes, key=lambda node: node.id) == sorted(other.nodes, key=lambda node: node.id)
            and self.edges == other.edges
            and self._history == other._history
        )

    __hash__ = None  # type: ignore[assignment]

    def node(self, node_id: str) -> TaskNode:
        if node_id not in self._graph:
            raise UnknownNode(node_id)
        return self._graph.nodes[node_id]["task"]

    def edge(self, src: str, dst: str) -> Optional[EdgeStat]:
        if not self._graph.has_edge(src, dst):
            return None
        return self._edge_stat(src, dst)

    def has_edge(self, src: str, dst: str) -> bool:
        return self._graph.has_edge(src, dst)

    def _edge_stat(self, src: str, dst: str) -> EdgeStat:
        data = self._graph.edges[src, dst]
        return EdgeStat(src, dst, data["pair_count"], data["weight"])

    def upsert_task(self, node: TaskNode) -> str:
        _check_node(node)
        with self._lock:
            self._graph.add_node(node.id, task=node)
        return node.id

    def _set_pair_count(self, src: str, dst: str, pair_count: int) -> EdgeStat:
        self._graph.add_edge(src, dst, pair_count=pair_count, weight=edge_weight(pair_count, self._lam))
        return self._edge_stat(src, dst)

    def record_workflow_implementation(self, rec: WorkflowImplementationRecord) -> List[EdgeStat]:
        for task_id in rec.task_ids:
            if task_id not in self._graph:
                raise UnknownNode(task_id, context=f"record {rec.workflow_id!r}")
        updated: List[EdgeStat] = []
        with self._lock:
            for src, dst in zip(rec.task_ids, rec.task_ids[1:]):
                if src == dst:
                    LOGGER.warning("Skipping self-loop pair %s -> %s in record %s", src, dst, rec.workflow_id)
                    continue
                current = self._graph.edges[src, dst]["pair_count"] if self._graph.has_edge(src, dst) else 0
                updated.append(self._set_pair_count(src, dst, current + 1))
            self._history.append(rec)
        LOGGER.debug("Recorded %s: %s edge updates", rec.workflow_id, len(updated))
        return updated

    def remove_workflow_implementation(self, workflow_id: str) -> int:
        with self._lock:
            kept = [rec for rec in self._history if rec.workflow_id != workflow_id]
            dropped = len(self._history) - len(kept)
            if dropped:
                self._history = kept
                self.recompute_from_history()
        return dropped

    def recompute_from_history(self) -> None:
        counts: Dict[Tuple[str, str], int] = {}
        for rec in self._history:
            for src, dst in zip(rec.task_ids, rec.task_ids[1:]):
                if src != dst:
                    counts[(src, dst)] = counts.get((src, dst), 0) + 1
        with self._lock:
            self._graph.remove_edges_from(list(self._graph.edges))
            for (src, dst), count in sorted(counts.items()):
                self._set_pair_count(src, dst, count)

    def cost_stats(self, node_id: str) -> Optional[CostStats]:
        """Arithmetic mean of record costs over every appearance of the task."""
        compute: List[float] = []
        elapsed: List[float] = []
        model: List[float] = []
        successes = 0
        for rec in self._history:
            for task_id in rec.task_ids:
                if task_id != node_id:
                    continue
                compute.append(rec.cost_compute)
                elapsed.append(rec.cost_time)
                model.append(rec.cost_model)
                successes += int(rec.success)
        if not compute:
            return None
        return CostStats(
            c_compute=float(np.mean(compute)),
            c_time=float(np.mean(elapsed)),
            c_model=float(np.mean(model)),
            success_rate=successes / len(compute),
            appearances=len(compute),
        )

    def cost_table(self) -> Dict[str, CostStats]:
        table: Dict[str, CostStats] = {}
        for node_id in sorted(self._graph.nodes):
            stats = self.cost_stats(node_id)
            if stats is not None:
                table[node_id] = stats
        return table

    def embedding(self, node_id: str, embedder: Optional[EmbeddingProvider] = None) -> EmbeddingVector:
        node = self.node(node_id)
        if node.embedding is not None:
            return node.embedding
        if embedder is None:
            raise InvalidInput(f"embedding of task {node_id!r} has not been computed")
        vector = embedder.embed(node.semantic_text())
        with self._lock:
            self._graph.nodes[node_id]["task"] = _with_embedding(node, vector)
        return vector

    def ensure_embeddings(self, embedder: EmbeddingProvider) -> None:
        for node_id in sorted(self._graph.nodes):
            self.embedding(node_id, embedder)

    def summary(self) -> GraphSummary:
        total = sum(data["pair_count"] for _, _, data in self._graph.edges(data=True))
        return GraphSummary(self._graph.number_of_nodes(), self._graph.number_of_edges(), total)


def _with_embedding(node: TaskNode, vector: EmbeddingVector) -> TaskNode:
    return TaskNode(
        id=node.id,
        title=node.title,
        description=node.description,
        industry=node.industry,
        implementation_summaries=node.implementation_summaries,
        embedding=vector,
    )


def upsert_task(graph: WorkKnowledgeGraph, node: TaskNode) -> str:
    return graph.upsert_task(node)


def record_workflow_implementation(
    graph: WorkKnowledgeGraph, rec: WorkflowImplementationRecord
) -> List[EdgeStat]:
    return graph.record_workflow_implementation(rec)


def graph_to_payload(graph: WorkKnowledgeGraph) -> Dict[str, Any]:
    return {
        "format_version": FORMAT_VERSION,
        "lambda": graph.lam,
        "tasks": [
            {
                "id": node.id,
                "title": node.title,
                "description": node.description,
                "industry": node.industry,
                "implementation_summaries": list(node.implementation_summaries),
            }
            for node in sorted(graph.nodes, key=lambda item: item.id)
        ],
        "edges": [
            {"src": edge.src, "dst": edge.dst, "pair_count": edge.pair_count}
            for edge in graph.edges
        ],
        "history": [record_to_payload(rec) for rec in graph.history],
    }


def record_to_payload(rec: WorkflowImplementationRecord) -> Dict[str, Any]:
    return {
        "workflow_id": rec.workflow_id,
        "task_ids": list(rec.task_ids),
        "cost_compute": rec.cost_compute,
        "cost_time": rec.cost_time,
        "cost_model": rec.cost_model,
        "success": rec.success,
    }


def save_graph(graph: WorkKnowledgeGraph, path: Path) -> None:
    text = json.dumps(graph_to_payload(graph), indent=2, ensure_ascii=False)
    Path(path).write_text(text + "\n", encoding="utf-8")
    LOGGER.info("Saved WKG with %s tasks and %s edges to %s", len(graph), len(graph.edges), path)


def load_graph(path: Path) -> WorkKnowledgeGraph:
    data = read_json_file(path)
    if not isinstance(data, dict):
        raise ParseError("WKG file must contain an object", location=str(path))
    _check_format_version(data.get("format_version", FORMAT_VERSION), path)
    if "lambda" not in data:
        raise ParseError("missing field", location=str(path), field="lambda")
    lam = _number(data["lambda"], f"{path}", "lambda")
    try:
        graph = WorkKnowledgeGraph(lam)
    except InvalidInput as exc:
        raise ParseError(str(exc), location=str(path), field="lambda") from exc

    for index, item in enumerate(_array(data, "tasks", path)):
        where = f"tasks[{index}]"
        if not isinstance(item, dict):
            raise ParseError("task entry must be an object", location=where)
        node = TaskNode(
            id=_string(item, "id", where),
            title=_string(item, "title", where),
            description=_string(item, "description", where),
            industry=str(item.get("industry", "")),
            implementation_summaries=tuple(str(entry) for entry in item.get("implementation_summaries", [])),
        )
        if node.id in graph:
            raise ParseError(f"duplicate task id {node.id!r}", location=where, field="id")
        try:
            graph.upsert_task(node)
        except InvalidInput as exc:
            raise ParseError(str(exc), location=where) from exc

    for index, item in enumerate(_array(data, "edges", path)):
        where = f"edges[{index}]"
        if not isinstance(item, dict):
            raise ParseError("edge entry must be an object", location=where)
        src = _string(item, "src", where)
        dst = _string(item, "dst", where)
        for field_name, node_id in (("src", src), ("dst", dst)):
            if node_id not in graph:
                raise ParseError(f"edge references unknown task {node_id!r}", location=where, field=field_name)
        if src == dst:
            raise ParseError("self-loop edges are not allowed", location=where)
        count = item.get("pair_count")
        if not isinstance(count, int) or isinstance(count, bool) or count < 0:
            raise ParseError("pair_count must be a non-negative integer", location=where, field="pair_count")
        graph._set_pair_count(src, dst, count)

    for index, item in enumerate(data.get("history", [])):
        rec = parse_record(item, f"history[{index}]")
        for task_id in rec.task_ids:
            if task_id not in graph:
                raise ParseError(f"record references unknown task {task_id!r}", location=f"history[{index}]", field="task_ids")
        graph._history.append(rec)

    LOGGER.info("Loaded WKG from %s: %s tasks, %s edges", path, len(graph), len(graph.edges))
    return graph


def parse_record(item: Any, where: str) -> WorkflowImplementationRecord:
    if not isinstance(item, dict):
        raise ParseError("record must be an object", location=where)
    task_ids = item.get("task_ids")
    if not isinstance(task_ids, list) or not all(isinstance(entry, str) for entry in task_ids):
        raise ParseError("task_ids must be a list of strings", location=where, field="task_ids")
    try:
        return WorkflowImplementationRecord(
            workflow_id=_string(item, "workflow_id", where),
            task_ids=tuple(task_ids),
            cost_compute=_number(item.get("cost_compute", 0.0), where, "cost_compute"),
            cost_time=_number(item.get("cost_time", 0.0), where, "cost_time"),
            cost_model=_number(item.get("cost_model", 0.0), where, "cost_model"),
            success=bool(item.get("success", True)),
        )
    except InvalidInput as exc:
        raise ParseError(str(exc), location=where) from exc


def load_records(path: Path) -> List[WorkflowImplementationRecord]:
    data = read_json_file(path)
    if not isinstance(data, list):
        raise ParseError("records file must contain an array", location=str(path))
    return [parse_record(item, f"records[{index}]") for index, item in enumerate(data)]


def apply_records(graph: WorkKnowledgeGraph, records: Sequence[WorkflowImplementationRecord]) -> None:
    for index, rec in enumerate(records):
        try:
            graph.record_workflow_implementation(rec)
        except UnknownNode as exc:
            raise UnknownNode(exc.node_id, context=f"record {index}") from exc


def read_json_file(path: Path, what: str = "file") -> Any:
    path = Path(path)
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise ParseError(f"{what} not found", location=str(path)) from exc
    except UnicodeDecodeError as exc:
        raise ParseError(f"not valid UTF-8 at byte {exc.start}", location=str(path)) from exc
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}", location=str(path)) from exc
    except OSError as exc:
        raise ParseError(f"cannot read {what}: {exc.strerror or exc}", location=str(path)) from exc


def _check_format_version(raw: Any, path: Path) -> None:
    try:
        version = Version(str(raw))
    except InvalidVersion as exc:
        raise ParseError(f"invalid format_version {raw!r}", location=str(path), field="format_version") from exc
    if version not in SUPPORTED_FORMATS:
        raise ParseError(
            f"unsupported format_version {version} (supported: {SUPPORTED_FORMATS})",
            location=str(path),
            field="format_version",
        )


def _array(data: Mapping[str, Any], key: str, path: Path) -> Iterable[Any]:
    value = data.get(key, [])
    if not isinstance(value, list):
        raise ParseError("expected an array", location=str(path), field=key)
    return value


def _string(item: Mapping[str, Any], key: str, where: str) -> str:
    value = item.get(key)
    if not isinstance(value, str) or not value.strip():
        raise ParseError("expected a non-empty string", location=where, field=key)
    return value


def _number(value: Any, where: str, key: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ParseError("expected a number", location=where, field=key)
    return float(value)
