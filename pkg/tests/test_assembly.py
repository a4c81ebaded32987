from __future__ import annotations

import itertools
import math
import random

import networkx as nx
import pytest

from conftest import make_graph
from wkforge.assembly import (
    ENTRY_ID,
    EXIT_ID,
    WorkflowGraph,
    assemble_wfg,
    attach_terminals,
    enhance_wfg,
    is_weakly_connected,
    load_wfg,
    max_enhance_iterations,
    save_wfg,
)
from wkforge.errors import CannotConnect, InvalidInput, ParseError
from wkforge.models import EnhanceConfig, GeneratedTask, WorkflowDag


def dag_of(*tags, chain=True):
    """One DAG whose i-th task carries WKG tag ``tags[i]`` (None for a new task)."""
    tasks = tuple(
        GeneratedTask(f"t{index}", f"Step {index}", f"do {index}", wkg_node_id=tag)
        for index, tag in enumerate(tags, start=1)
    )
    edges = tuple((a.local_id, b.local_id) for a, b in zip(tasks, tasks[1:])) if chain else ()
    return WorkflowDag(tasks, edges)


@pytest.fixture
def bridge_graph():
    # b has cosine 0.9 with both a and c; a and c only meet through b.
    side = math.sqrt(0.19)
    return make_graph(
        ["a", "b", "c"],
        [("a", "b", 2), ("b", "c", 2)],
        embeddings={"a": [0.9, side, 0.0], "b": [1.0, 0.0, 0.0], "c": [0.9, -side, 0.0]},
    )


def test_single_dag_keeps_its_structure(medical_wkg):
    wfg = assemble_wfg([dag_of("t04", None)], medical_wkg)
    assert wfg.nodes == ["dag1:t2", "wkg:t04"]
    assert wfg.edges == [("wkg:t04", "dag1:t2")]
    assert wfg.task("wkg:t04").wkg_node_id == "t04"


def test_disjoint_untagged_dags_stay_apart(medical_wkg):
    wfg = assemble_wfg([dag_of(None, None), dag_of(None)], medical_wkg)
    assert wfg.components() == [["dag1:t1", "dag1:t2"], ["dag2:t1"]]
    assert not is_weakly_connected(wfg)


def test_cross_edges_follow_wkg_edges(medical_wkg):
    wfg = assemble_wfg([dag_of("t01", "t04"), dag_of("t05", "t07")], medical_wkg)
    assert ("wkg:t04", "wkg:t05") in wfg.edges
    assert ("wkg:t01", "wkg:t05") not in wfg.edges
    assert is_weakly_connected(wfg)


def test_shared_wkg_task_is_merged(medical_wkg):
    wfg = assemble_wfg([dag_of("t04", None), dag_of(None, "t04")], medical_wkg)
    assert wfg.nodes.count("wkg:t04") == 1
    assert is_weakly_connected(wfg)


def test_cycle_closing_cross_edge_is_skipped(caplog):
    graph = make_graph(["x", "y"], [("x", "y", 1)])
    wfg = assemble_wfg([dag_of("y", "x"), dag_of("y")], graph)
    assert wfg.edges == [("wkg:y", "wkg:x")]
    assert wfg.is_acyclic()
    assert "cycle" in caplog.text


def test_assembly_needs_a_dag(medical_wkg):
    with pytest.raises(InvalidInput):
        assemble_wfg([], medical_wkg)


@pytest.mark.parametrize(
    ("cfg", "expected"),
    [(EnhanceConfig(), 20), (EnhanceConfig(1.0, 0.3, 0.0), 4), (EnhanceConfig(0.9, 0.1, 0.5), 4)],
)
def test_max_enhance_iterations(cfg, expected):
    assert max_enhance_iterations(cfg) == expected


def test_enhance_adopts_bridge_task(bridge_graph):
    wfg = assemble_wfg([dag_of("a"), dag_of("c")], bridge_graph)
    assert not is_weakly_connected(wfg)
    enhanced = enhance_wfg(wfg, bridge_graph, EnhanceConfig())
    assert enhanced.nodes == ["wkg:a", "wkg:b", "wkg:c"]
    assert enhanced.edges == [("wkg:a", "wkg:b"), ("wkg:b", "wkg:c")]
    assert enhanced.enhance_iterations == 2
    assert enhanced.task("wkg:b").title == "Task b"
    assert wfg.nodes == ["wkg:a", "wkg:c"]


def test_enhance_leaves_connected_graph_alone(medical_wkg):
    wfg = assemble_wfg([dag_of("t01", None, "t04")], medical_wkg)
    enhanced = enhance_wfg(wfg, medical_wkg, EnhanceConfig())
    assert enhanced is not wfg
    assert (enhanced.nodes, enhanced.edges, enhanced.enhance_iterations) == (wfg.nodes, wfg.edges, 0)


def test_enhance_reports_components_it_cannot_join():
    graph = make_graph(["a", "c"], embeddings={"a": [1.0, 0.0], "c": [0.0, 1.0]})
    wfg = assemble_wfg([dag_of("a"), dag_of("c"), dag_of(None)], graph)
    with pytest.raises(CannotConnect) as excinfo:
        enhance_wfg(wfg, graph, EnhanceConfig(1.0, 0.25, 0.0))
    assert excinfo.value.components == [["dag3:t1"], ["wkg:a"], ["wkg:c"]]
    assert excinfo.value.alpha < 0.0


def _random_wkg(rng, size):
    names = [f"n{index}" for index in range(size)]
    counts = {}
    for index in range(1, size):
        counts[(names[rng.randrange(index)], names[index])] = rng.randint(1, 4)
    for a, b in itertools.permutations(names, 2):
        if (a, b) not in counts and (b, a) not in counts and rng.random() < 0.15:
            counts[(a, b)] = rng.randint(1, 4)
    embeddings = {name: [rng.uniform(0.5, 1.0) for _ in range(4)] for name in names}
    return names, make_graph(names, [(a, b, count) for (a, b), count in counts.items()], embeddings)


def test_enhance_connects_random_instances():
    rng = random.Random(2024)
    cfg = EnhanceConfig()
    for _ in range(100):
        names, graph = _random_wkg(rng, rng.randint(4, 9))
        picks = rng.sample(names, rng.randint(2, min(4, len(names))))
        wfg = assemble_wfg([dag_of(tag) for tag in picks], graph)
        enhanced = enhance_wfg(wfg, graph, cfg)
        assert is_weakly_connected(enhanced)
        assert enhanced.is_acyclic()
        assert set(wfg.nodes) <= set(enhanced.nodes)
        assert set(wfg.edges) <= set(enhanced.edges)
        assert enhanced.enhance_iterations <= max_enhance_iterations(cfg)


def test_attach_links_sources_and_sinks(medical_wkg):
    wfg = assemble_wfg([dag_of("t01", "t02"), dag_of("t03", "t04")], medical_wkg)
    attached = attach_terminals(wfg)
    assert attached.has_terminals
    digraph = attached.digraph
    assert sorted(digraph.successors(ENTRY_ID)) == ["wkg:t01"]
    assert sorted(digraph.predecessors(EXIT_ID)) == ["wkg:t04"]
    assert attached.pruned == ()
    assert all(nx.has_path(digraph, ENTRY_ID, node) and nx.has_path(digraph, node, EXIT_ID) for node in attached.interior)


def test_attach_is_idempotent(medical_wkg):
    once = attach_terminals(assemble_wfg([dag_of("t04", None), dag_of("t12")], medical_wkg))
    twice = attach_terminals(once)
    assert (twice.nodes, twice.edges) == (once.nodes, once.edges)


def test_attach_on_empty_graph_links_entry_to_exit():
    attached = attach_terminals(WorkflowGraph())
    assert attached.edges == [(ENTRY_ID, EXIT_ID)]
    assert attached.interior == []


def test_wfg_file_round_trip(medical_wkg, tmp_path):
    wfg = attach_terminals(assemble_wfg([dag_of("t01", None, "t04"), dag_of("t05")], medical_wkg))
    target = tmp_path / "wfg.json"
    save_wfg(wfg, target)
    loaded = load_wfg(target)
    assert (loaded.nodes, loaded.edges) == (wfg.nodes, wfg.edges)
    assert loaded.task("wkg:t04").wkg_node_id == "t04"
    assert loaded.task(ENTRY_ID) is None


def test_load_wfg_rejects_terminal_ids_as_tasks(tmp_path):
    target = tmp_path / "wfg.json"
    target.write_text('{"tasks": [{"id": "I", "title": "Entry"}], "edges": []}', encoding="utf-8")
    with pytest.raises(ParseError, match="terminal"):
        load_wfg(target)
