from __future__ import annotations

import pytest

from wkforge.errors import InvalidInput
from wkforge.evaluation import (
    bleu_score,
    cosine_score,
    coverage_ratio,
    dtw_alignment,
    dtw_score,
    evaluate_trials,
    evaluate_workflow,
    kendall_score,
    match_tasks,
    metric_mean,
    pair_bleu,
    pentagon_area,
    rank_reports,
)
from wkforge.generation import load_reference
from wkforge.models import GeneratedTask, Matching, MatchPair, ReferenceTask, ReferenceWorkflow
from wkforge.pipeline import load_metrics_table


class TableJudge:
    """Scores title pairs from a lookup table, zero otherwise."""

    def __init__(self, scores):
        self.scores = scores

    def judge(self, generated, reference):
        return self.scores.get((generated, reference), 0.0)


def generated_tasks(*titles):
    return [GeneratedTask(f"t{index}", title, "") for index, title in enumerate(titles, start=1)]


def reference_of(*titles):
    return ReferenceWorkflow(tuple(ReferenceTask(f"r{index}", title, "") for index, title in enumerate(titles, start=1)))


def matching_of(pairs, generated_count):
    matched = {g for g, _ in pairs}
    return Matching(
        tuple(MatchPair(g, r, 1.0) for g, r in sorted(pairs)),
        tuple(index for index in range(generated_count) if index not in matched),
    )


@pytest.fixture
def crossed():
    judge = TableJudge({("g0", "r0"): 0.9, ("g0", "r1"): 0.8, ("g1", "r0"): 0.85, ("g1", "r1"): 0.1})
    return generated_tasks("g0", "g1"), reference_of("r0", "r1"), judge


def test_greedy_takes_best_scores_first(crossed):
    generated, reference, judge = crossed
    matching = match_tasks(generated, reference, judge, tau=0.75)
    assert [(pair.generated, pair.reference) for pair in matching.pairs] == [(0, 0)]
    assert matching.unmatched_generated == (1,)


def test_hungarian_maximizes_total_score(crossed):
    generated, reference, judge = crossed
    matching = match_tasks(generated, reference, judge, tau=0.75, strategy="hungarian")
    assert [(pair.generated, pair.reference) for pair in matching.pairs] == [(0, 1), (1, 0)]
    assert matching.unmatched_generated == ()


def test_greedy_ties_prefer_smallest_indices():
    judge = TableJudge({(g, r): 0.8 for g in ("a", "b") for r in ("x", "y")})
    matching = match_tasks(generated_tasks("a", "b"), reference_of("x", "y"), judge)
    assert [(pair.generated, pair.reference) for pair in matching.pairs] == [(0, 0), (1, 1)]


def test_matching_rejects_bad_arguments(crossed):
    generated, reference, judge = crossed
    with pytest.raises(InvalidInput):
        match_tasks([], reference, judge)
    with pytest.raises(InvalidInput):
        match_tasks(generated, reference, judge, strategy="random")


def test_coverage_counts_generated_tasks():
    assert coverage_ratio(matching_of([(0, 0), (1, 1), (3, 2)], 4), 4) == 0.75
    with pytest.raises(InvalidInput):
        coverage_ratio(matching_of([], 0), 0)


@pytest.mark.parametrize(
    ("pairs", "raw"),
    [([(0, 0), (1, 1), (2, 2)], 1.0), ([(0, 0), (1, 2), (2, 1)], 1 / 3), ([(0, 2), (1, 1), (2, 0)], -1.0)],
)
def test_kendall_tau_of_matched_order(pairs, raw):
    tau, weighted = kendall_score(matching_of(pairs, 4))
    assert tau == pytest.approx(raw)
    assert weighted == pytest.approx(raw * 0.75)


def test_kendall_needs_two_pairs():
    assert kendall_score(matching_of([(0, 0)], 1)) == (0.0, 0.0)


def test_dtw_alignment_of_swapped_tail():
    assert dtw_alignment([1, 2, 3], [1, 3, 2]) == (2.0, 3)
    assert dtw_alignment([4, 5], [4, 5]) == (0.0, 2)


def test_dtw_score_scales_by_coverage():
    assert dtw_score(matching_of([(0, 0), (1, 2), (2, 1)], 3), 3, 3) == pytest.approx(1 / 3)
    assert dtw_score(matching_of([(0, 0), (1, 1)], 4), 4, 2) == pytest.approx(0.5)
    assert dtw_score(matching_of([], 2), 2, 2) == 0.0
    with pytest.raises(InvalidInput):
        dtw_score(matching_of([(0, 5)], 1), 1, 2)


def test_bleu_of_identical_and_partial_text():
    assert pair_bleu("Assign the E/M code now", "assign the e/m code now") == pytest.approx(1.0)
    assert pair_bleu("review", "review") == pytest.approx(1.0)
    assert pair_bleu("", "review") == 0.0
    generated = generated_tasks("submit coded encounter today", "something else entirely")
    reference = reference_of("submit coded encounter today")
    assert bleu_score(matching_of([(0, 0)], 2), generated, reference) == pytest.approx(0.5)


def test_cosine_counts_unmatched_as_zero(offline_suite):
    generated = generated_tasks("Assign E/M Code", "unmatched", "also unmatched", "more")
    reference = reference_of("Assign E/M Code")
    score = cosine_score(matching_of([(0, 0)], 4), generated, reference, offline_suite.embedder)
    assert score == pytest.approx(0.25)


def test_pentagon_area_values():
    assert pentagon_area([1, 1, 1, 1, 1]) == pytest.approx(2.37764, abs=1e-5)
    assert pentagon_area([0, 0, 0, 0, 0]) == 0.0
    assert pentagon_area([2, 1, 1, 1, 1]) == pytest.approx(pentagon_area([1, 1, 1, 1, 1]))
    assert pentagon_area([1, 0, 1, 0, 0]) == 0.0
    with pytest.raises(InvalidInput):
        pentagon_area([1, 1, 1])


def test_disjoint_workflow_scores_zero(offline_suite):
    report, matching = evaluate_workflow(
        generated_tasks("a", "b"), reference_of("x", "y"), TableJudge({}), offline_suite.embedder
    )
    assert matching.pairs == ()
    assert report.headline() == (0.0, 0.0, 0.0, 0.0, 0.0)
    assert report.pentagon_area == 0.0


def test_reference_against_itself_is_perfect(data_dir, offline_suite):
    reference = load_reference(data_dir / "reference_workflow.json")
    generated = [GeneratedTask(task.id, task.title, task.description) for task in reference.tasks]
    report, matching = evaluate_workflow(generated, reference, offline_suite.judge, offline_suite.embedder)
    assert [(pair.generated, pair.reference) for pair in matching.pairs] == [(index, index) for index in range(9)]
    assert report.headline() == pytest.approx((1.0, 1.0, 1.0, 1.0, 1.0))
    assert report.pentagon_area == pytest.approx(2.37764, abs=1e-5)


def test_trials_are_averaged(offline_suite):
    reference = reference_of("x", "y")
    judge = TableJudge({("x", "x"): 1.0, ("y", "y"): 1.0})
    perfect, _ = evaluate_workflow(generated_tasks("x", "y"), reference, judge, offline_suite.embedder)
    half, _ = evaluate_workflow(generated_tasks("x", "q"), reference, judge, offline_suite.embedder)
    averaged = evaluate_trials([perfect, half])
    assert averaged.trials == 2
    assert averaged.coverage == pytest.approx(0.75)
    with pytest.raises(InvalidInput):
        evaluate_trials([])


def test_metrics_table_ranking(data_dir):
    table = load_metrics_table(data_dir / "model_metrics.json")
    rows = rank_reports(table, baseline="claude-3.5")
    assert [row.name for row in rows] == [
        "system-large",
        "system-small",
        "claude-3.5",
        "o1-preview",
        "gpt-4o",
        "gemini-flash",
        "gemini-pro",
    ]
    assert [round(row.report.pentagon_area, 3) for row in rows] == [0.712, 0.389, 0.052, 0.039, 0.027, 0.025, 0.018]
    assert rows[0].delta == pytest.approx(0.3836, abs=1e-4)
    assert rows[1].delta == pytest.approx(0.2934, abs=1e-4)
    assert rows[2].delta == pytest.approx(0.0)
    assert metric_mean(table["system-large"]) == pytest.approx(0.556)


def test_ranking_without_baseline_and_unknown_baseline(data_dir):
    table = load_metrics_table(data_dir / "model_metrics.json")
    assert all(row.delta is None for row in rank_reports(table))
    with pytest.raises(InvalidInput):
        rank_reports(table, baseline="missing")
