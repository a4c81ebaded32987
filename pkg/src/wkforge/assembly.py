from __future__ import annotations

import json
import logging
import math
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import networkx as nx

from .errors import CannotConnect, InvalidInput, ParseError
from .generation import load_payload, parse_task_entry, task_to_entry
from .models import EnhanceConfig, GeneratedTask, WorkflowDag
from .providers import EmbeddingProvider, cosine_similarity
from .wkg import WorkKnowledgeGraph


LOGGER = logging.getLogger(__name__)

ENTRY_ID = "I"
EXIT_ID = "O"
SIMILARITY_TOLERANCE = 1e-9


def wkg_wfg_id(wkg_node_id: str) -> str:
    return f"wkg:{wkg_node_id}"


def local_wfg_id(dag_index: int, local_id: str) -> str:
    return f"dag{dag_index}:{local_id}"


class WorkflowGraph:
    """DAG of generated and adopted tasks with optional virtual I/O terminals.

    Node attribute ``task`` holds the GeneratedTask; terminals carry ``None``.
    """

    def __init__(self, entry_id: str = ENTRY_ID, exit_id: str = EXIT_ID) -> None:
        self.entry_id = entry_id
        self.exit_id = exit_id
        self.pruned: Tuple[str, ...] = ()
        self.enhance_iterations = 0
        self._graph = nx.DiGraph()

    @property
    def digraph(self) -> nx.DiGraph:
        return self._graph.copy(as_view=True)

    @property
    def nodes(self) -> List[str]:
        return sorted(self._graph.nodes)

    @property
    def edges(self) -> List[Tuple[str, str]]:
        return sorted(self._graph.edges)

    @property
    def interior(self) -> List[str]:
        return [node_id for node_id in self.nodes if not self.is_terminal(node_id)]

    @property
    def has_terminals(self) -> bool:
        return self.entry_id in self._graph and self.exit_id in self._graph

    def __contains__(self, node_id: object) -> bool:
        return node_id in self._graph

    def __len__(self) -> int:
        return self._graph.number_of_nodes()

    def is_terminal(self, node_id: str) -> bool:
        return node_id in (self.entry_id, self.exit_id)

    def task(self, node_id: str) -> Optional[GeneratedTask]:
        return self._graph.nodes[node_id]["task"]

    def wkg_members(self) -> Dict[str, str]:
        """Map WKG node id to WFG node id for every WKG-tagged task."""
        members: Dict[str, str] = {}
        for node_id, data in self._graph.nodes(data=True):
            task = data["task"]
            if task is not None and task.wkg_node_id is not None:
                members.setdefault(task.wkg_node_id, node_id)
        return members

    def copy(self) -> "WorkflowGraph":
        clone = WorkflowGraph(self.entry_id, self.exit_id)
        clone._graph = self._graph.copy()
        clone.pruned = self.pruned
        clone.enhance_iterations = self.enhance_iterations
        return clone

    def add_task(self, node_id: str, task: Optional[GeneratedTask]) -> bool:
        if node_id in self._graph:
            return False
        self._graph.add_node(node_id, task=task)
        return True

    def add_edge_if_acyclic(self, src: str, dst: str) -> bool:
        """Add ``src -> dst`` unless it is a self-loop, a duplicate or closes a cycle."""
        if src == dst or self._graph.has_edge(src, dst):
            return False
        if nx.has_path(self._graph, dst, src):
            LOGGER.warning("Skipping edge %s -> %s: it would create a cycle", src, dst)
            return False
        self._graph.add_edge(src, dst)
        return True

    def is_acyclic(self) -> bool:
        return nx.is_directed_acyclic_graph(self._graph)

    def components(self) -> List[List[str]]:
        interior = self._graph.subgraph(self.interior)
        groups = [sorted(group) for group in nx.weakly_connected_components(interior)]
        return sorted(groups, key=lambda group: group[0])


def assemble_wfg(dags: Sequence[WorkflowDag], graph: WorkKnowledgeGraph) -> WorkflowGraph:
    """Union the generated DAGs and cross-link WKG-tagged tasks through WKG edges."""
    if not dags:
        raise InvalidInput("assembly needs at least one workflow DAG")
    wfg = WorkflowGraph()
    mapping: List[Dict[str, str]] = []
    for index, dag in enumerate(dags, start=1):
        local: Dict[str, str] = {}
        for task in dag.nodes:
            node_id = wkg_wfg_id(task.wkg_node_id) if task.wkg_node_id else local_wfg_id(index, task.local_id)
            local[task.local_id] = node_id
            wfg.add_task(node_id, task)
        for src, dst in dag.edges:
            wfg.add_edge_if_acyclic(local[src], local[dst])
        mapping.append(local)

    tagged = [sorted({task.wkg_node_id for task in dag.nodes if task.wkg_node_id}) for dag in dags]
    cross = 0
    for i, sources in enumerate(tagged):
        for v in sources:
            for j, targets in enumerate(tagged):
                if i == j:
                    continue
                for x in targets:
                    if v != x and graph.has_edge(v, x) and wfg.add_edge_if_acyclic(wkg_wfg_id(v), wkg_wfg_id(x)):
                        cross += 1
    if not wfg.is_acyclic():
        raise AssertionError("assembled workflow graph has a cycle")
    LOGGER.info("Assembled WFG from %s DAGs: %s tasks, %s cross edges", len(dags), len(wfg), cross)
    return wfg


def is_weakly_connected(wfg: WorkflowGraph) -> bool:
    interior = wfg.interior
    if len(interior) <= 1:
        return True
    return nx.is_weakly_connected(wfg.digraph.subgraph(interior))


def max_enhance_iterations(cfg: EnhanceConfig) -> int:
    return math.ceil(round((cfg.alpha_start - cfg.alpha_floor) / cfg.delta_alpha, 9))


def _adopt(wfg: WorkflowGraph, graph: WorkKnowledgeGraph, wkg_node_id: str) -> None:
    node = graph.node(wkg_node_id)
    wfg.add_task(
        wkg_wfg_id(wkg_node_id),
        GeneratedTask(local_id=wkg_node_id, title=node.title, description=node.description, wkg_node_id=wkg_node_id),
    )


def _candidates(
    members: Dict[str, str],
    graph: WorkKnowledgeGraph,
    alpha: float,
    embedder: Optional[EmbeddingProvider],
) -> List[str]:
    digraph = graph.digraph
    found = set()
    for wkg_node_id in sorted(members):
        neighbours = set(digraph.predecessors(wkg_node_id)) | set(digraph.successors(wkg_node_id))
        anchor = graph.embedding(wkg_node_id, embedder)
        for candidate in sorted(neighbours - set(members)):
            score = cosine_similarity(graph.embedding(candidate, embedder), anchor)
            if score >= alpha - SIMILARITY_TOLERANCE:
                found.add(candidate)
    return sorted(found)


def enhance_wfg(
    wfg: WorkflowGraph,
    graph: WorkKnowledgeGraph,
    cfg: EnhanceConfig,
    embedder: Optional[EmbeddingProvider] = None,
) -> WorkflowGraph:
    """Lower the similarity threshold step by step, adopting WKG neighbours until the WFG is weakly connected."""
    result = wfg.copy()
    result.enhance_iterations = 0
    if is_weakly_connected(result):
        return result

    iteration = 0
    while True:
        iteration += 1
        alpha = round(cfg.alpha_start - iteration * cfg.delta_alpha, 12)
        if alpha < cfg.alpha_floor - 1e-12:
            raise CannotConnect(result.components(), alpha)
        members = result.wkg_members()
        adopted = _candidates(members, graph, alpha, embedder)
        for wkg_node_id in adopted:
            _adopt(result, graph, wkg_node_id)
        members = result.wkg_members()
        added_edges = 0
        for edge in graph.edges:
            if edge.src in members and edge.dst in members:
                added_edges += int(result.add_edge_if_acyclic(members[edge.src], members[edge.dst]))
        result.enhance_iterations = iteration
        LOGGER.debug(
            "Enhance iteration %s at alpha %.3f: %s tasks adopted, %s edges added",
            iteration,
            alpha,
            len(adopted),
            added_edges,
        )
        if is_weakly_connected(result):
            break

    LOGGER.info("Enhanced WFG in %s iterations (alpha %.3f): %s tasks", iteration, alpha, len(result))
    return result


def attach_terminals(wfg: WorkflowGraph) -> WorkflowGraph:
    """Link I to every source and every sink to O, then prune tasks off every I -> O path."""
    result = wfg.copy()
    graph = result._graph
    graph.remove_nodes_from([result.entry_id, result.exit_id])
    interior = sorted(graph.nodes)
    sources = [node_id for node_id in interior if graph.in_degree(node_id) == 0]
    sinks = [node_id for node_id in interior if graph.out_degree(node_id) == 0]
    graph.add_node(result.entry_id, task=None)
    graph.add_node(result.exit_id, task=None)
    for node_id in sources:
        graph.add_edge(result.entry_id, node_id)
    for node_id in sinks:
        graph.add_edge(node_id, result.exit_id)
    if not interior:
        graph.add_edge(result.entry_id, result.exit_id)

    reachable = nx.descendants(graph, result.entry_id)
    productive = nx.ancestors(graph, result.exit_id)
    pruned = tuple(node_id for node_id in interior if node_id not in reachable or node_id not in productive)
    if pruned:
        LOGGER.warning("Pruning %s tasks off every I -> O path: %s", len(pruned), ", ".join(pruned))
        graph.remove_nodes_from(pruned)
    result.pruned = pruned
    if not result.is_acyclic():
        raise AssertionError("terminal attachment produced a cycle")
    return result


def wfg_to_payload(wfg: WorkflowGraph) -> Dict[str, Any]:
    return {
        "entry_id": wfg.entry_id,
        "exit_id": wfg.exit_id,
        "tasks": [task_to_entry(wfg.task(node_id), node_id) for node_id in wfg.interior],
        "edges": [[src, dst] for src, dst in wfg.edges],
    }


def save_wfg(wfg: WorkflowGraph, path: Path) -> None:
    text = json.dumps(wfg_to_payload(wfg), indent=2, ensure_ascii=False)
    Path(path).write_text(text + "\n", encoding="utf-8")
    LOGGER.info("Saved WFG with %s tasks to %s", len(wfg.interior), path)


def load_wfg(path: Path) -> WorkflowGraph:
    data = load_payload(path)
    entry_id = data.get("entry_id", ENTRY_ID)
    exit_id = data.get("exit_id", EXIT_ID)
    for key, value in (("entry_id", entry_id), ("exit_id", exit_id)):
        if not isinstance(value, str) or not value:
            raise ParseError("expected a non-empty string", location=str(path), field=key)
    wfg = WorkflowGraph(entry_id, exit_id)
    for index, item in enumerate(data["tasks"]):
        task = parse_task_entry(item, f"tasks[{index}]")
        if wfg.is_terminal(task.local_id):
            raise ParseError("task id collides with a terminal id", location=f"tasks[{index}]", field="id")
        if not wfg.add_task(task.local_id, task):
            raise ParseError(f"duplicate task id {task.local_id!r}", location=f"tasks[{index}]", field="id")
    raw_edges = data.get("edges", [])
    if not isinstance(raw_edges, list):
        raise ParseError("expected an array", location=str(path), field="edges")
    for index, item in enumerate(raw_edges):
        where = f"edges[{index}]"
        if not isinstance(item, list) or len(item) != 2 or not all(isinstance(end, str) for end in item):
            raise ParseError("edge must be a [src, dst] pair", location=where)
        for end in item:
            if end not in wfg and not wfg.is_terminal(end):
                raise ParseError(f"edge references unknown task {end!r}", location=where)
            if wfg.is_terminal(end):
                wfg.add_task(end, None)
        wfg._graph.add_edge(item[0], item[1])
    if not wfg.is_acyclic():
        raise ParseError("workflow graph edges contain a cycle", location=str(path), field="edges")
    return wfg
