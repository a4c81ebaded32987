from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import List, Mapping, Optional, Protocol, Sequence, Tuple

import numpy as np
from nltk.translate.bleu_score import SmoothingFunction, sentence_bleu
from scipy.optimize import linear_sum_assignment
from scipy.stats import kendalltau

from .errors import InvalidInput
from .models import Matching, MatchPair, MetricReport, ReferenceWorkflow
from .providers import EmbeddingProvider, JudgeProvider, cosine_similarity


LOGGER = logging.getLogger(__name__)

DEFAULT_TAU = 0.75
MATCHING_STRATEGIES = ("greedy", "hungarian")
AXES = ("coverage", "kendall", "dtw", "cosine", "bleu")
BLEU_EPSILON = 1e-9
MAX_NGRAM = 4
_SMOOTHING = SmoothingFunction(epsilon=BLEU_EPSILON).method1


class TextTask(Protocol):
    def text(self) -> str:  # pragma: no cover - interface
        ...


def _score_matrix(generated: Sequence[TextTask], reference: ReferenceWorkflow, judge: JudgeProvider) -> np.ndarray:
    scores = np.zeros((len(generated), len(reference.tasks)))
    for g, task in enumerate(generated):
        for r, ref in enumerate(reference.tasks):
            scores[g, r] = judge.judge(task.text(), ref.text())
    return scores


def match_tasks(
    generated: Sequence[TextTask],
    reference: ReferenceWorkflow,
    judge: JudgeProvider,
    tau: float = DEFAULT_TAU,
    strategy: str = "greedy",
) -> Matching:
    if not generated:
        raise InvalidInput("the generated workflow has no tasks")
    if strategy not in MATCHING_STRATEGIES:
        raise InvalidInput(f"unknown matching strategy {strategy!r}")
    scores = _score_matrix(generated, reference, judge)

    accepted: List[MatchPair] = []
    if strategy == "greedy":
        taken_g, taken_r = set(), set()
        order = sorted(np.ndindex(scores.shape), key=lambda cell: (-scores[cell], cell[0], cell[1]))
        for g, r in order:
            if scores[g, r] < tau:
                break
            if g in taken_g or r in taken_r:
                continue
            taken_g.add(g)
            taken_r.add(r)
            accepted.append(MatchPair(int(g), int(r), float(scores[g, r])))
    else:
        rows, cols = linear_sum_assignment(scores, maximize=True)
        accepted = [
            MatchPair(int(g), int(r), float(scores[g, r]))
            for g, r in zip(rows, cols)
            if scores[g, r] >= tau
        ]

    pairs = tuple(sorted(accepted, key=lambda pair: pair.generated))
    matched = {pair.generated for pair in pairs}
    unmatched = tuple(index for index in range(len(generated)) if index not in matched)
    LOGGER.debug("Matched %s of %s generated tasks (%s, tau=%s)", len(pairs), len(generated), strategy, tau)
    return Matching(pairs=pairs, unmatched_generated=unmatched)


def coverage_ratio(matching: Matching, generated_count: int) -> float:
    if generated_count < 1:
        raise InvalidInput("generated_count must be at least 1")
    return len(matching.pairs) / generated_count


def _coverage(matching: Matching) -> float:
    return coverage_ratio(matching, matching.generated_count) if matching.generated_count else 0.0


def kendall_score(matching: Matching) -> Tuple[float, float]:
    """Return (raw tau, tau weighted by coverage)."""
    ordered = matching.in_generated_order()
    if len(ordered) < 2:
        return 0.0, 0.0
    tau, _ = kendalltau([pair.generated for pair in ordered], [pair.reference for pair in ordered])
    raw = float(tau)
    return raw, raw * _coverage(matching)


def dtw_alignment(left: Sequence[int], right: Sequence[int]) -> Tuple[float, int]:
    """0/1 local cost; returns (total cost, warping path length). Ties step diagonal, vertical, horizontal."""
    n, m = len(left), len(right)
    table = np.full((n + 1, m + 1), np.inf)
    table[0, 0] = 0.0
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            local = 0.0 if left[i - 1] == right[j - 1] else 1.0
            table[i, j] = local + min(table[i - 1, j - 1], table[i - 1, j], table[i, j - 1])

    i, j, length = n, m, 1
    while (i, j) != (1, 1):
        if i == 1:
            j -= 1
        elif j == 1:
            i -= 1
        else:
            steps = ((table[i - 1, j - 1], 0), (table[i - 1, j], 1), (table[i, j - 1], 2))
            _, move = min(steps)
            if move == 0:
                i, j = i - 1, j - 1
            elif move == 1:
                i -= 1
            else:
                j -= 1
        length += 1
    return float(table[n, m]), length


def dtw_score(matching: Matching, generated_count: int, reference_count: int) -> float:
    ordered = matching.in_generated_order()
    if not ordered:
        return 0.0
    if any(pair.reference >= reference_count for pair in ordered):
        raise InvalidInput("matching references a task beyond reference_count")
    observed = [pair.reference for pair in ordered]
    expected = sorted(observed)
    cost, length = dtw_alignment(observed, expected)
    normalized = 1.0 - cost / length
    return normalized * coverage_ratio(matching, generated_count)


def _tokens(text: str) -> List[str]:
    return text.lower().split()


def pair_bleu(hypothesis: str, reference: str) -> float:
    hyp, ref = _tokens(hypothesis), _tokens(reference)
    order = min(MAX_NGRAM, len(hyp), len(ref))
    if order == 0:
        return 0.0
    weights = tuple(1.0 / order for _ in range(order))
    return float(sentence_bleu([ref], hyp, weights=weights, smoothing_function=_SMOOTHING))


def bleu_score(matching: Matching, generated: Sequence[TextTask], reference: ReferenceWorkflow) -> float:
    if not generated:
        return 0.0
    total = sum(
        pair_bleu(generated[pair.generated].text(), reference.tasks[pair.reference].text())
        for pair in matching.pairs
    )
    return total / len(generated)


def cosine_score(
    matching: Matching,
    generated: Sequence[TextTask],
    reference: ReferenceWorkflow,
    embedder: EmbeddingProvider,
) -> float:
    if not generated:
        return 0.0
    total = 0.0
    for pair in matching.pairs:
        similarity = cosine_similarity(
            embedder.embed(generated[pair.generated].text()),
            embedder.embed(reference.tasks[pair.reference].text()),
        )
        total += max(0.0, similarity)
    return total / len(generated)


def pentagon_area(values: Sequence[float]) -> float:
    if len(values) != len(AXES):
        raise InvalidInput(f"pentagon_area needs {len(AXES)} values, got {len(values)}")
    clamped = [min(1.0, max(0.0, float(value))) for value in values]
    spokes = sum(clamped[i] * clamped[(i + 1) % len(clamped)] for i in range(len(clamped)))
    return 0.5 * math.sin(2 * math.pi / len(clamped)) * spokes


def build_report(
    coverage: float,
    kendall_raw: float,
    kendall: float,
    dtw: float,
    bleu: float,
    cosine: float,
    trials: int = 1,
) -> MetricReport:
    return MetricReport(
        coverage=coverage,
        kendall_raw=kendall_raw,
        kendall=kendall,
        dtw=dtw,
        bleu=bleu,
        cosine=cosine,
        pentagon_area=pentagon_area((coverage, kendall, dtw, cosine, bleu)),
        trials=trials,
    )


def evaluate_workflow(
    generated: Sequence[TextTask],
    reference: ReferenceWorkflow,
    judge: JudgeProvider,
    embedder: EmbeddingProvider,
    tau: float = DEFAULT_TAU,
    strategy: str = "greedy",
) -> Tuple[MetricReport, Matching]:
    matching = match_tasks(generated, reference, judge, tau, strategy)
    kendall_raw, kendall = kendall_score(matching)
    report = build_report(
        coverage=coverage_ratio(matching, len(generated)),
        kendall_raw=kendall_raw,
        kendall=kendall,
        dtw=dtw_score(matching, len(generated), len(reference.tasks)),
        bleu=bleu_score(matching, generated, reference),
        cosine=cosine_score(matching, generated, reference, embedder),
    )
    return report, matching


def evaluate_trials(reports: Sequence[MetricReport]) -> MetricReport:
    if not reports:
        raise InvalidInput("at least one trial report is required")

    def mean(name: str) -> float:
        return float(np.mean([getattr(report, name) for report in reports]))

    return build_report(
        coverage=mean("coverage"),
        kendall_raw=mean("kendall_raw"),
        kendall=mean("kendall"),
        dtw=mean("dtw"),
        bleu=mean("bleu"),
        cosine=mean("cosine"),
        trials=len(reports),
    )


def metric_mean(report: MetricReport) -> float:
    return float(np.mean(report.headline()))


@dataclass(frozen=True)
class RankedRow:
    name: str
    report: MetricReport
    mean: float
    delta: Optional[float]


def rank_reports(reports: Mapping[str, MetricReport], baseline: Optional[str] = None) -> List[RankedRow]:
    if baseline is not None and baseline not in reports:
        raise InvalidInput(f"baseline {baseline!r} is not among the ranked rows")
    base = metric_mean(reports[baseline]) if baseline is not None else None
    rows = [
        RankedRow(name, report, metric_mean(report), None if base is None else metric_mean(report) - base)
        for name, report in reports.items()
    ]
    return sorted(rows, key=lambda row: (-row.report.pentagon_area, row.name))
