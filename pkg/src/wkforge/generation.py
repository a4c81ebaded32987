from __future__ import annotations

import json
import logging
import math
import re
from pathlib import Path
from typing import Any, Dict, List, Optional, Protocol, Sequence, Set, Tuple

import networkx as nx

from .errors import InvalidAnalyzerOutput, InvalidInput, MalformedResponse, ParseError
from .models import (
    DecodedIntention,
    EmbeddingVector,
    GeneratedTask,
    ProviderConfig,
    ReferenceTask,
    ReferenceWorkflow,
    TaskSequence,
    WorkflowDag,
)
from .providers import SWKG_BLOCK_END, SWKG_BLOCK_START, ProviderSuite, complete, cosine_similarity, get_providers
from .wkg import WorkKnowledgeGraph, read_json_file


LOGGER = logging.getLogger(__name__)

TAG_SIMILARITY = 0.95
FIELD_SEPARATOR = "::"
INSTRUCTION_SEPARATOR = ";"

PROMPT_HEADER = (
    "You are a work model. Produce one workflow as an ordered sequence of tasks that "
    "turns the client input into the client output. Prefer the tasks listed under "
    "work knowledge and keep their order when it fits the intention."
)
OUTPUT_CONTRACT = 'One task per line, formatted as "title :: description".'

_BULLET = re.compile(r"^(?:[-*]|\d+[.)])\s+")


def _one_line(text: str) -> str:
    return " ".join(text.split())


def build_prompt(dec: DecodedIntention, swkg_text: str) -> str:
    fields = (dec.input_description, dec.output_description, dec.process_description)
    if not all(field.strip() for field in fields):
        raise InvalidInput("decoded intention has an empty field")
    if not swkg_text.strip():
        raise InvalidInput("work knowledge text is empty")
    return "\n".join(
        [
            PROMPT_HEADER,
            "",
            "### Intention",
            f"Input: {_one_line(dec.input_description)}",
            f"Output: {_one_line(dec.output_description)}",
            f"Process: {_one_line(dec.process_description)}",
            "",
            SWKG_BLOCK_START,
            swkg_text,
            "",
            SWKG_BLOCK_END,
            OUTPUT_CONTRACT,
        ]
    )


def parse_sequence(text: str) -> List[GeneratedTask]:
    """Parse ``title :: description[ :: step; step]`` lines, skipping anything else."""
    tasks: List[GeneratedTask] = []
    for number, raw in enumerate(text.splitlines(), start=1):
        line = _BULLET.sub("", raw.strip())
        if not line:
            continue
        if FIELD_SEPARATOR not in line:
            LOGGER.debug("Skipping line %s without %r: %r", number, FIELD_SEPARATOR, line[:60])
            continue
        parts = [part.strip() for part in line.split(FIELD_SEPARATOR, 2)]
        if not parts[0]:
            LOGGER.debug("Skipping line %s with an empty title", number)
            continue
        instructions: Tuple[str, ...] = ()
        if len(parts) == 3:
            instructions = tuple(step.strip() for step in parts[2].split(INSTRUCTION_SEPARATOR) if step.strip())
        tasks.append(
            GeneratedTask(
                local_id=f"t{len(tasks) + 1}",
                title=parts[0],
                description=parts[1],
                instructions=instructions,
            )
        )
    return tasks


def _title_index(graph: WorkKnowledgeGraph) -> Dict[str, List[str]]:
    index: Dict[str, List[str]] = {}
    for node_id in sorted(node.id for node in graph.nodes):
        index.setdefault(graph.node(node_id).title.strip().casefold(), []).append(node_id)
    return index


def _most_similar(
    vector: EmbeddingVector,
    candidates: Sequence[str],
    graph: WorkKnowledgeGraph,
    providers: ProviderSuite,
    floor: float,
) -> Optional[str]:
    best: Optional[Tuple[float, str]] = None
    for node_id in candidates:
        score = cosine_similarity(vector, graph.embedding(node_id, providers.embedder))
        if score >= floor and (best is None or score > best[0]):
            best = (score, node_id)
    return best[1] if best is not None else None


def tag_tasks(
    tasks: Sequence[GeneratedTask],
    graph: WorkKnowledgeGraph,
    cfg: ProviderConfig,
    suite: Optional[ProviderSuite] = None,
) -> List[GeneratedTask]:
    """Attach ``wkg_node_id`` by exact title, then by embedding similarity.

    A title shared by several WKG tasks goes to the most similar of them.
    """
    providers = suite or get_providers(cfg)
    titles = _title_index(graph)
    node_ids = sorted(node.id for node in graph.nodes)
    tagged: List[GeneratedTask] = []
    for task in tasks:
        same_title = titles.get(task.title.strip().casefold(), [])
        if len(same_title) == 1:
            match: Optional[str] = same_title[0]
        elif same_title:
            LOGGER.warning(
                "Title %r matches WKG tasks %s; tagging the most similar",
                task.title,
                ", ".join(same_title),
            )
            vector = providers.embedder.embed(f"{task.title}\n{task.description}")
            match = _most_similar(vector, same_title, graph, providers, -math.inf)
        elif node_ids:
            vector = providers.embedder.embed(f"{task.title}\n{task.description}")
            match = _most_similar(vector, node_ids, graph, providers, TAG_SIMILARITY)
        else:
            match = None
        tagged.append(
            GeneratedTask(task.local_id, task.title, task.description, task.instructions, match)
        )
    return tagged


def generate_sequence(
    prompt: str,
    cfg: ProviderConfig,
    graph: WorkKnowledgeGraph,
    swkg_id: str = "swkg-1",
    suite: Optional[ProviderSuite] = None,
) -> TaskSequence:
    text = complete(prompt, cfg, suite)
    tasks = parse_sequence(text)
    if not tasks:
        raise MalformedResponse(f"no 'title :: description' lines in the response for {swkg_id}")
    tagged = tag_tasks(tasks, graph, cfg, suite)
    LOGGER.info(
        "Generated %s tasks for %s (%s matched to the WKG)",
        len(tagged),
        swkg_id,
        sum(1 for task in tagged if task.wkg_node_id),
    )
    return TaskSequence(tuple(tagged), swkg_id)


def partition_by_swkg(sequence: TaskSequence) -> Tuple[Tuple[GeneratedTask, ...], Tuple[GeneratedTask, ...]]:
    """Split tasks into (known to the WKG, new from the model)."""
    known = tuple(task for task in sequence.tasks if task.wkg_node_id is not None)
    new = tuple(task for task in sequence.tasks if task.wkg_node_id is None)
    return known, new


class DependencyAnalyzer(Protocol):
    def dependencies(self, tasks: Sequence[GeneratedTask]) -> Sequence[Tuple[str, str]]:  # pragma: no cover - interface
        ...


class ChainAnalyzer:
    """Each task depends on the one before it."""

    def dependencies(self, tasks: Sequence[GeneratedTask]) -> Sequence[Tuple[str, str]]:
        return [(a.local_id, b.local_id) for a, b in zip(tasks, tasks[1:])]


class LayeredAnalyzer:
    """Chain policy where consecutive tasks of one group run in parallel.

    ``groups`` lists sets of local ids that do not depend on each other.
    Every task of a layer feeds every task of the next layer.
    """

    def __init__(self, groups: Sequence[Sequence[str]] = ()) -> None:
        self.groups = [frozenset(group) for group in groups]

    def _group_of(self, local_id: str) -> Optional[int]:
        for index, group in enumerate(self.groups):
            if local_id in group:
                return index
        return None

    def dependencies(self, tasks: Sequence[GeneratedTask]) -> Sequence[Tuple[str, str]]:
        layers: List[List[str]] = []
        previous_group: Optional[int] = None
        for task in tasks:
            group = self._group_of(task.local_id)
            if layers and group is not None and group == previous_group:
                layers[-1].append(task.local_id)
            else:
                layers.append([task.local_id])
            previous_group = group
        return [(src, dst) for upper, lower in zip(layers, layers[1:]) for src in upper for dst in lower]


def sequence_to_dag(sequence: TaskSequence, analyzer: Optional[DependencyAnalyzer] = None) -> WorkflowDag:
    tasks = sequence.tasks
    position = {task.local_id: index for index, task in enumerate(tasks)}
    if len(position) != len(tasks):
        raise InvalidInput(f"duplicate local ids in {sequence.source_swkg}")
    proposed = (analyzer or ChainAnalyzer()).dependencies(tasks)

    dag = nx.DiGraph()
    dag.add_nodes_from(position)
    for src, dst in proposed:
        if src not in position or dst not in position:
            raise InvalidAnalyzerOutput(f"dependency {src} -> {dst} references an unknown task")
        if src == dst:
            raise InvalidAnalyzerOutput(f"task {src} depends on itself")
        dag.add_edge(src, dst)
    if not nx.is_directed_acyclic_graph(dag):
        cycle = nx.find_cycle(dag)
        raise InvalidAnalyzerOutput("dependencies form a cycle: " + " -> ".join(src for src, _ in cycle))
    first = tasks[0].local_id
    unreachable = sorted(set(position) - nx.descendants(dag, first) - {first}, key=position.__getitem__)
    if unreachable:
        raise InvalidAnalyzerOutput(f"tasks not reachable from {first}: {', '.join(unreachable)}")

    edges = tuple(sorted(dag.edges, key=lambda edge: (position[edge[0]], position[edge[1]])))
    return WorkflowDag(nodes=tasks, edges=edges)


def task_to_entry(task: GeneratedTask, task_id: Optional[str] = None) -> Dict[str, Any]:
    entry: Dict[str, Any] = {
        "id": task_id or task.local_id,
        "title": task.title,
        "description": task.description,
        "instructions": list(task.instructions),
    }
    if task.wkg_node_id is not None:
        entry["wkg_node_id"] = task.wkg_node_id
    return entry


def workflow_to_payload(dag: WorkflowDag) -> Dict[str, Any]:
    return {
        "tasks": [task_to_entry(task) for task in dag.nodes],
        "edges": [[src, dst] for src, dst in dag.edges],
    }


def save_workflow(dag: WorkflowDag, path: Path) -> None:
    text = json.dumps(workflow_to_payload(dag), indent=2, ensure_ascii=False)
    Path(path).write_text(text + "\n", encoding="utf-8")


def load_payload(path: Path) -> Dict[str, Any]:
    data = read_json_file(path)
    if not isinstance(data, dict) or not isinstance(data.get("tasks"), list):
        raise ParseError("expected an object with a tasks array", location=str(path), field="tasks")
    return data


def parse_task_entry(item: Any, where: str) -> GeneratedTask:
    if not isinstance(item, dict):
        raise ParseError("task entry must be an object", location=where)
    for key in ("id", "title"):
        if not isinstance(item.get(key), str) or not item[key].strip():
            raise ParseError("expected a non-empty string", location=where, field=key)
    description = item.get("description", "")
    if not isinstance(description, str):
        raise ParseError("expected a string", location=where, field="description")
    instructions = item.get("instructions", [])
    if not isinstance(instructions, list) or not all(isinstance(step, str) for step in instructions):
        raise ParseError("expected a list of strings", location=where, field="instructions")
    wkg_node_id = item.get("wkg_node_id")
    if wkg_node_id is not None and not isinstance(wkg_node_id, str):
        raise ParseError("expected a string", location=where, field="wkg_node_id")
    return GeneratedTask(item["id"], item["title"], description, tuple(instructions), wkg_node_id)


def load_workflow(path: Path) -> WorkflowDag:
    data = load_payload(path)
    tasks = [parse_task_entry(item, f"tasks[{index}]") for index, item in enumerate(data["tasks"])]
    if not tasks:
        raise ParseError("workflow has no tasks", location=str(path), field="tasks")
    seen: Set[str] = set()
    for index, task in enumerate(tasks):
        if task.local_id in seen:
            raise ParseError(f"duplicate task id {task.local_id!r}", location=f"tasks[{index}]", field="id")
        seen.add(task.local_id)

    edges: List[Tuple[str, str]] = []
    raw_edges = data.get("edges", [])
    if not isinstance(raw_edges, list):
        raise ParseError("expected an array", location=str(path), field="edges")
    for index, item in enumerate(raw_edges):
        where = f"edges[{index}]"
        if not isinstance(item, list) or len(item) != 2 or not all(isinstance(end, str) for end in item):
            raise ParseError("edge must be a [src, dst] pair", location=where)
        for end in item:
            if end not in seen:
                raise ParseError(f"edge references unknown task {end!r}", location=where)
        edges.append((item[0], item[1]))
    check = nx.DiGraph(edges)
    if not nx.is_directed_acyclic_graph(check):
        raise ParseError("workflow edges contain a cycle", location=str(path), field="edges")
    return WorkflowDag(nodes=tuple(tasks), edges=tuple(edges))


def load_reference(path: Path) -> ReferenceWorkflow:
    """Read a workflow file whose task order is the reference order."""
    dag = load_workflow(path)
    try:
        return ReferenceWorkflow(
            tuple(ReferenceTask(task.local_id, task.title, task.description) for task in dag.nodes)
        )
    except InvalidInput as exc:
        raise ParseError(str(exc), location=str(path)) from exc
