from __future__ import annotations

import json
import math
import random
from collections import Counter

import pytest

from conftest import make_graph
from wkforge.errors import InvalidInput, ParseError, UnknownNode
from wkforge.models import TaskNode, WorkflowImplementationRecord
from wkforge.wkg import (
    MAX_WEIGHT,
    WorkKnowledgeGraph,
    apply_records,
    edge_weight,
    load_graph,
    load_records,
    record_workflow_implementation,
    save_graph,
    upsert_task,
)


@pytest.mark.parametrize(
    ("pair_count", "lam", "expected"),
    [(0, 0.5, 0.0), (1, 1.0, 0.6321206), (20, 0.5, 0.9999546), (2, 0.5, 0.6321206)],
)
def test_edge_weight_values(pair_count, lam, expected):
    assert edge_weight(pair_count, lam) == pytest.approx(expected, abs=1e-7)


def test_edge_weight_is_monotone_and_bounded():
    rng = random.Random(5)
    for _ in range(200):
        lam = rng.uniform(0.01, 1.0)
        count = rng.randint(0, 60)
        weight = edge_weight(count, lam)
        assert 0.0 <= weight < 1.0
        # Close to saturation neighbouring counts round to the same float.
        if lam * (count + 1) < 30:
            assert edge_weight(count + 1, lam) > weight
    assert edge_weight(10_000, 1.0) == MAX_WEIGHT


def _pair_counts(records):
    counts = Counter()
    for rec in records:
        counts.update((src, dst) for src, dst in zip(rec.task_ids, rec.task_ids[1:]) if src != dst)
    return counts


def _assert_edges_match(graph, counts):
    assert {(edge.src, edge.dst): edge.pair_count for edge in graph.edges} == dict(counts)
    for edge in graph.edges:
        expected = min(1 - math.exp(-graph.lam * counts[(edge.src, edge.dst)]), MAX_WEIGHT)
        assert edge.weight == pytest.approx(expected, abs=1e-12)
        assert 0.0 < edge.weight < 1.0


def test_incremental_counts_match_recount_on_random_histories():
    rng = random.Random(11)
    names = ["a", "b", "c", "d", "e"]
    for _ in range(1000):
        graph = make_graph(names, lam=rng.uniform(0.01, 1.0))
        records = []
        for step in range(rng.randint(1, 8)):
            tasks = tuple(rng.choice(names) for _ in range(rng.randint(1, 6)))
            rec = WorkflowImplementationRecord(f"W{step % 3}", tasks)
            graph.record_workflow_implementation(rec)
            records.append(rec)
            _assert_edges_match(graph, _pair_counts(records))

        graph.recompute_from_history()
        _assert_edges_match(graph, _pair_counts(records))

        dropped = rng.choice(["W0", "W1", "W2"])
        kept = [rec for rec in records if rec.workflow_id != dropped]
        assert graph.remove_workflow_implementation(dropped) == len(records) - len(kept)
        _assert_edges_match(graph, _pair_counts(kept))


@pytest.mark.parametrize(("lam", "saturated"), [(0.001, False), (1.0, True)])
def test_counts_near_ten_thousand(lam, saturated):
    graph = make_graph(["A", "B"], lam=lam)
    records = [WorkflowImplementationRecord(f"W{index}", ("A", "B")) for index in range(10_000)]
    for rec in records:
        graph.record_workflow_implementation(rec)
    _assert_edges_match(graph, _pair_counts(records))
    assert graph.edge("A", "B").pair_count == 10_000
    assert (graph.edge("A", "B").weight == MAX_WEIGHT) is saturated
    graph.remove_workflow_implementation("W0")
    assert graph.edge("A", "B").pair_count == 9_999


@pytest.mark.parametrize("lam", [0.0, -0.5, 1.5])
def test_lambda_outside_unit_interval_is_rejected(lam):
    with pytest.raises(InvalidInput):
        WorkKnowledgeGraph(lam)
    with pytest.raises(InvalidInput):
        edge_weight(1, lam)


def test_upsert_replaces_attributes_and_keeps_edges():
    graph = make_graph(["a", "b"], [("a", "b", 3)])
    replacement = TaskNode(id="a", title="Renamed", description="new text")
    assert upsert_task(graph, replacement) == "a"
    assert graph.node("a").title == "Renamed"
    assert graph.edge("a", "b").pair_count == 3


def test_upsert_rejects_empty_title():
    graph = WorkKnowledgeGraph()
    with pytest.raises(InvalidInput):
        graph.upsert_task(TaskNode(id="a", title=" ", description="x"))


def test_recording_counts_consecutive_pairs():
    graph = make_graph(["A", "B", "C"])
    rec = WorkflowImplementationRecord("W1", ("A", "B", "C"))
    updated = record_workflow_implementation(graph, rec)
    assert [(edge.src, edge.dst, edge.pair_count) for edge in updated] == [("A", "B", 1), ("B", "C", 1)]
    graph.record_workflow_implementation(WorkflowImplementationRecord("W2", ("A", "B")))
    assert graph.edge("A", "B").pair_count == 2
    assert graph.edge("A", "B").weight == pytest.approx(1 - math.exp(-1.0))
    assert graph.edge("B", "C").weight == pytest.approx(1 - math.exp(-0.5))
    assert graph.edge("A", "C") is None
    assert not graph.has_edge("B", "A")


def test_single_task_record_adds_no_edges():
    graph = make_graph(["A"])
    assert graph.record_workflow_implementation(WorkflowImplementationRecord("W", ("A",))) == []
    assert graph.edges == []
    assert len(graph.history) == 1


def test_self_loop_pairs_are_skipped(caplog):
    graph = make_graph(["A", "B"])
    graph.record_workflow_implementation(WorkflowImplementationRecord("W", ("A", "A", "B")))
    assert [(edge.src, edge.dst) for edge in graph.edges] == [("A", "B")]
    assert "self-loop" in caplog.text


def test_unknown_task_leaves_graph_untouched():
    graph = make_graph(["A", "B"])
    with pytest.raises(UnknownNode) as excinfo:
        graph.record_workflow_implementation(WorkflowImplementationRecord("W", ("A", "B", "Z")))
    assert excinfo.value.node_id == "Z"
    assert graph.edges == []
    assert graph.history == ()


def test_empty_record_is_invalid():
    with pytest.raises(InvalidInput):
        WorkflowImplementationRecord("W", ())


def test_record_ingest_on_fixture_tasks(medical_wkg, data_dir):
    bare = WorkKnowledgeGraph(medical_wkg.lam)
    for node in medical_wkg.nodes:
        bare.upsert_task(node)
    apply_records(bare, load_records(data_dir / "ingest_records.json"))
    summary = bare.summary()
    assert (summary.nodes, summary.edges, summary.pair_count_total) == (20, 9, 10)
    assert bare.edge("t01", "t02").pair_count == 2


def test_apply_records_reports_record_index(medical_wkg):
    records = [
        WorkflowImplementationRecord("ok", ("t01", "t02")),
        WorkflowImplementationRecord("bad", ("t01", "t99")),
    ]
    with pytest.raises(UnknownNode) as excinfo:
        apply_records(medical_wkg, records)
    assert "record 1" in str(excinfo.value)


def test_fixture_loads(medical_wkg):
    summary = medical_wkg.summary()
    assert (summary.nodes, summary.edges, summary.pair_count_total) == (20, 31, 61)
    assert medical_wkg.node("t04").title == "Identify Data Points"
    assert len(medical_wkg.history) == 6


def test_save_and_load_preserve_graph(medical_wkg, tmp_path):
    target = tmp_path / "wkg.json"
    save_graph(medical_wkg, target)
    reloaded = load_graph(target)
    assert reloaded == medical_wkg
    save_graph(reloaded, tmp_path / "again.json")
    assert (tmp_path / "again.json").read_text(encoding="utf-8") == target.read_text(encoding="utf-8")


def _write(tmp_path, payload):
    target = tmp_path / "wkg.json"
    target.write_text(json.dumps(payload), encoding="utf-8")
    return target


def _payload(**overrides):
    payload = {
        "format_version": "1.0",
        "lambda": 0.5,
        "tasks": [
            {"id": "a", "title": "A", "description": "first"},
            {"id": "b", "title": "B", "description": "second"},
        ],
        "edges": [{"src": "a", "dst": "b", "pair_count": 1}],
    }
    payload.update(overrides)
    return payload


@pytest.mark.parametrize(
    ("overrides", "fragment"),
    [
        ({"format_version": "2.0"}, "format_version"),
        ({"format_version": "not-a-version"}, "format_version"),
        ({"lambda": 3}, "lambda"),
        ({"edges": [{"src": "a", "dst": "z", "pair_count": 1}]}, "edges[0].dst"),
        ({"edges": [{"src": "a", "dst": "b", "pair_count": -1}]}, "edges[0].pair_count"),
        ({"edges": [{"src": "a", "dst": "a", "pair_count": 1}]}, "edges[0]"),
        ({"tasks": [{"id": "a", "title": "", "description": "x"}]}, "tasks[0].title"),
        ({"tasks": [{"id": "a", "title": "A", "description": "x"}] * 2, "edges": []}, "tasks[1].id"),
    ],
)
def test_load_graph_reports_location(tmp_path, overrides, fragment):
    with pytest.raises(ParseError) as excinfo:
        load_graph(_write(tmp_path, _payload(**overrides)))
    assert fragment in str(excinfo.value)


def test_load_graph_rejects_missing_file_and_bad_json(tmp_path):
    with pytest.raises(ParseError, match="file not found"):
        load_graph(tmp_path / "missing.json")
    broken = tmp_path / "broken.json"
    broken.write_text("{", encoding="utf-8")
    with pytest.raises(ParseError, match="invalid JSON"):
        load_graph(broken)


def test_unreadable_files_are_located_parse_errors(tmp_path):
    garbled = tmp_path / "garbled.json"
    garbled.write_bytes(b'{"lambda": "\xff"}')
    with pytest.raises(ParseError, match="UTF-8") as excinfo:
        load_graph(garbled)
    assert str(garbled) in str(excinfo.value)
    with pytest.raises(ParseError, match="cannot read"):
        load_records(tmp_path)


def test_minor_format_versions_are_accepted(tmp_path):
    graph = load_graph(_write(tmp_path, _payload(format_version="1.3")))
    assert graph.edge("a", "b").weight == pytest.approx(1 - math.exp(-0.5))


def test_cost_stats_are_means_over_appearances(medical_wkg):
    stats = medical_wkg.cost_stats("t17")
    assert stats.c_compute == pytest.approx(5.75)
    assert stats.c_time == pytest.approx(1380.0)
    assert stats.c_model == pytest.approx(2.3)
    assert stats.success_rate == pytest.approx(0.5)
    assert stats.appearances == 2
    assert medical_wkg.cost_stats("missing") is None
    assert set(medical_wkg.cost_table()) == {node.id for node in medical_wkg.nodes}


def test_cost_stats_of_multi_task_records():
    graph = make_graph(["A", "B"])
    graph.record_workflow_implementation(WorkflowImplementationRecord("W1", ("A", "B"), cost_time=2.0))
    graph.record_workflow_implementation(WorkflowImplementationRecord("W2", ("A", "B"), cost_time=4.0))
    assert graph.cost_stats("A").c_time == pytest.approx(3.0)
    assert graph.cost_stats("B").c_time == pytest.approx(3.0)
    assert graph.cost_stats("B").appearances == 2


def test_removing_a_record_recomputes_edges(medical_wkg):
    assert medical_wkg.remove_workflow_implementation("R6") == 1
    assert medical_wkg.edge("t19", "t20").pair_count == 1
    assert medical_wkg.cost_stats("t17").appearances == 1
    assert medical_wkg.cost_stats("t17").success_rate == 0.0
    before = medical_wkg.edges
    assert medical_wkg.remove_workflow_implementation("unknown") == 0
    assert medical_wkg.edges == before


def test_embeddings_are_computed_once(offline_suite):
    calls = []

    class CountingEmbedder:
        dimension = offline_suite.embedder.dimension

        def embed(self, text):
            calls.append(text)
            return offline_suite.embedder.embed(text)

    graph = make_graph(["a", "b"])
    graph.ensure_embeddings(CountingEmbedder())
    graph.ensure_embeddings(CountingEmbedder())
    assert len(calls) == 2
    with pytest.raises(InvalidInput):
        make_graph(["c"]).embedding("c")
