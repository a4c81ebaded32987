from __future__ import annotations

import heapq
import itertools
import logging
from typing import Dict, FrozenSet, Iterable, List, Optional, Sequence, Set, Tuple

import networkx as nx
import numpy as np

from .errors import DisconnectedTerminals, InvalidInput, UnknownNode
from .models import EncodedIntention, RoutingConfig, SubWKG
from .providers import EmbeddingProvider, cosine_similarity
from .wkg import WorkKnowledgeGraph


LOGGER = logging.getLogger(__name__)

SIMILARITY_TOLERANCE = 1e-9
INDENT = "  "

Path = Tuple[str, ...]


def route(
    enc: EncodedIntention,
    graph: WorkKnowledgeGraph,
    cfg: RoutingConfig,
    embedder: Optional[EmbeddingProvider] = None,
) -> FrozenSet[str]:
    if len(graph) == 0:
        raise InvalidInput("cannot route over an empty WKG")
    selected: Set[str] = set()
    for node_id in sorted(node.id for node in graph.nodes):
        similarity = cosine_similarity(graph.embedding(node_id, embedder), enc.gamma)
        LOGGER.debug("route %s: cosine %.6f", node_id, similarity)
        if similarity >= cfg.similarity_threshold - SIMILARITY_TOLERANCE:
            selected.add(node_id)
    LOGGER.info("Routed %s of %s tasks at threshold %s", len(selected), len(graph), cfg.similarity_threshold)
    return frozenset(selected)


def split_neighborhoods(
    node_ids: Iterable[str],
    graph: WorkKnowledgeGraph,
    cfg: RoutingConfig,
    embedder: Optional[EmbeddingProvider] = None,
) -> List[FrozenSet[str]]:
    """Ties at the k-th similarity are all kept as neighbours."""
    ids = sorted(set(node_ids))
    if not ids:
        raise InvalidInput("cannot split an empty node set")
    if len(ids) == 1:
        return [frozenset(ids)]

    vectors = np.vstack([graph.embedding(node_id, embedder) for node_id in ids]).astype(float)
    norms = np.linalg.norm(vectors, axis=1, keepdims=True)
    norms[norms == 0.0] = 1.0
    unit = vectors / norms
    similarity = unit @ unit.T

    k = min(cfg.knn_k, len(ids) - 1)
    neighbours: List[Set[int]] = []
    for row in range(len(ids)):
        others = np.delete(similarity[row], row)
        kth = np.sort(others)[::-1][k - 1]
        chosen = {
            col
            for col in range(len(ids))
            if col != row and similarity[row, col] >= kth - SIMILARITY_TOLERANCE
        }
        neighbours.append(chosen)

    knn = nx.Graph()
    knn.add_nodes_from(range(len(ids)))
    for row, chosen in enumerate(neighbours):
        for col in chosen:
            if not cfg.mutual_knn or row in neighbours[col]:
                knn.add_edge(row, col)

    groups = [frozenset(ids[index] for index in component) for component in nx.connected_components(knn)]
    groups.sort(key=min)
    LOGGER.info("Split %s routed tasks into %s neighborhoods (k=%s)", len(ids), len(groups), k)
    return groups


def undirected_view(graph: WorkKnowledgeGraph) -> nx.Graph:
    view = nx.Graph()
    view.add_nodes_from(sorted(node.id for node in graph.nodes))
    for edge in graph.edges:
        length = 1.0 - edge.weight
        if view.has_edge(edge.src, edge.dst) and view.edges[edge.src, edge.dst]["length"] <= length:
            continue
        view.add_edge(edge.src, edge.dst, length=length, orientation=(edge.src, edge.dst))
    return view


def _shortest_paths(view: nx.Graph, source: str) -> Dict[str, Tuple[float, Path]]:
    # Keyed by (distance, path): equal distances pick the smallest path.
    settled: Dict[str, Tuple[float, Path]] = {}
    heap: List[Tuple[float, Path]] = [(0.0, (source,))]
    while heap:
        dist, path = heapq.heappop(heap)
        node = path[-1]
        if node in settled:
            continue
        settled[node] = (dist, path)
        for neighbour in sorted(view.adj[node]):
            if neighbour not in settled:
                heapq.heappush(heap, (dist + view.edges[node, neighbour]["length"], path + (neighbour,)))
    return settled


def _check_terminals(view: nx.Graph, terminals: Sequence[str]) -> None:
    groups: Dict[int, List[str]] = {}
    component_of: Dict[str, int] = {}
    for index, component in enumerate(nx.connected_components(view)):
        for node_id in component:
            component_of[node_id] = index
    for node_id in terminals:
        groups.setdefault(component_of[node_id], []).append(node_id)
    if len(groups) > 1:
        raise DisconnectedTerminals(sorted(groups.values(), key=min))


def _sorted_graph(edges: Iterable[Tuple[str, str, float]]) -> nx.Graph:
    ordered = nx.Graph()
    for src, dst, length in sorted((min(a, b), max(a, b), w) for a, b, w in edges):
        ordered.add_edge(src, dst, length=length)
    return ordered


def extract_swkg(
    terminals: Iterable[str],
    graph: WorkKnowledgeGraph,
    swkg_id: str = "swkg-1",
) -> SubWKG:
    ids = sorted(set(terminals))
    if not ids:
        raise InvalidInput("a neighborhood needs at least one task")
    for node_id in ids:
        if node_id not in graph:
            raise UnknownNode(node_id, context="extract_swkg")
    if len(ids) == 1:
        return SubWKG(frozenset(ids), (), frozenset(ids), swkg_id)

    view = undirected_view(graph)
    _check_terminals(view, ids)

    paths = {source: _shortest_paths(view, source) for source in ids}
    closure = _sorted_graph(
        (a, b, paths[a][b][0]) for a, b in itertools.combinations(ids, 2)
    )
    closure_tree = nx.minimum_spanning_tree(closure, weight="length", algorithm="kruskal")

    expanded: Dict[Tuple[str, str], float] = {}
    for a, b in sorted(tuple(sorted(edge)) for edge in closure_tree.edges):
        path = paths[a][b][1]
        for u, v in zip(path, path[1:]):
            expanded[(min(u, v), max(u, v))] = view.edges[u, v]["length"]
    subgraph = _sorted_graph((u, v, length) for (u, v), length in expanded.items())
    tree = nx.minimum_spanning_tree(subgraph, weight="length", algorithm="kruskal")

    terminal_set = set(ids)
    leaves = sorted(node for node in tree.nodes if tree.degree(node) <= 1 and node not in terminal_set)
    while leaves:
        tree.remove_nodes_from(leaves)
        leaves = sorted(node for node in tree.nodes if tree.degree(node) <= 1 and node not in terminal_set)

    edge_list = tuple(sorted(view.edges[u, v]["orientation"] for u, v in tree.edges))
    swkg = SubWKG(frozenset(tree.nodes), edge_list, frozenset(ids), swkg_id)
    LOGGER.info(
        "Extracted %s: %s terminals, %s tasks, %s edges",
        swkg_id,
        len(ids),
        len(swkg.node_ids),
        len(edge_list),
    )
    return swkg


def swkg_cost(swkg: SubWKG, graph: WorkKnowledgeGraph) -> float:
    total = 0.0
    for src, dst in swkg.edge_list:
        edge = graph.edge(src, dst)
        if edge is None:
            raise InvalidInput(f"edge {src} -> {dst} is not in the WKG")
        total += 1.0 - edge.weight
    return total


def extract_all(neighborhoods: Sequence[FrozenSet[str]], graph: WorkKnowledgeGraph) -> List[SubWKG]:
    pending: List[List[str]] = [sorted(group) for group in neighborhoods]
    extracted: List[SubWKG] = []
    while pending:
        group = pending.pop(0)
        try:
            extracted.append(extract_swkg(group, graph, f"swkg-{len(extracted) + 1}"))
        except DisconnectedTerminals as exc:
            LOGGER.info("Neighborhood %s spans %s WKG components; splitting", min(group), len(exc.components))
            pending = [list(component) for component in exc.components] + pending
    return extracted


def _clean(text: str) -> str:
    return " ".join(text.split())


def textualize_swkg(swkg: SubWKG, graph: WorkKnowledgeGraph) -> str:
    adjacency: Dict[str, Set[str]] = {node_id: set() for node_id in swkg.node_ids}
    for src, dst in swkg.edge_list:
        adjacency[src].add(dst)
        adjacency[dst].add(src)

    lines: List[str] = []
    visited: Set[str] = set()
    for root in sorted(adjacency):
        if root in visited:
            continue
        stack: List[Tuple[str, int]] = [(root, 0)]
        while stack:
            node_id, depth = stack.pop()
            if node_id in visited:
                continue
            visited.add(node_id)
            task = graph.node(node_id)
            lines.append(f"{INDENT * depth}{node_id} | {_clean(task.title)} | {_clean(task.description)}")
            for neighbour in sorted(adjacency[node_id], reverse=True):
                if neighbour not in visited:
                    stack.append((neighbour, depth + 1))
    return "\n".join(lines)
