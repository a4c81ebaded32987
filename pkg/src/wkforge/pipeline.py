"""Stage orchestration behind the command-line subcommands.

``run_generate`` chains encode, route, split, extract, textualize, decode,
generate, dag-ify, assemble, enhance and attach. Failures inside a stage are
re-raised as ``StageError`` naming the stage.
"""

from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterator, List, Mapping, Optional, Sequence, Tuple

from . import __version__
from .assembly import WorkflowGraph, assemble_wfg, attach_terminals, enhance_wfg, load_wfg, save_wfg
from .errors import EmptyRouting, ParseError, StageError, WkforgeError
from .evaluation import build_report, evaluate_trials, evaluate_workflow
from .generation import (
    DependencyAnalyzer,
    build_prompt,
    generate_sequence,
    load_reference,
    load_workflow,
    save_workflow,
    sequence_to_dag,
)
from .intention import decode_intention, encode_intention, load_bundle
from .models import (
    CostWeights,
    DecodedIntention,
    DefaultCosts,
    EncodedIntention,
    Matching,
    MetricReport,
    PathResult,
    ProviderConfig,
    RunConfig,
    SubWKG,
    TaskSequence,
    WorkflowDag,
)
from .optimizer import optimal_path
from .providers import ProviderSuite, get_providers
from .retrieval import extract_all, route, split_neighborhoods, textualize_swkg
from .wkg import GraphSummary, WorkKnowledgeGraph, apply_records, load_graph, load_records, read_json_file, save_graph


LOGGER = logging.getLogger(__name__)

WFG_FILE = "wfg.json"
MANIFEST_FILE = "manifest.json"


@contextmanager
def stage(name: str) -> Iterator[None]:
    LOGGER.info("Stage %s", name)
    try:
        yield
    except StageError:
        raise
    except (WkforgeError, OSError) as exc:
        raise StageError(name, exc) from exc


@dataclass
class GenerationResult:
    graph: WorkKnowledgeGraph
    encoded: EncodedIntention
    decoded: DecodedIntention
    routed: frozenset
    neighborhoods: List[frozenset]
    swkgs: List[SubWKG]
    sequences: List[TaskSequence]
    dags: List[WorkflowDag]
    wfg: WorkflowGraph
    files: List[Path] = field(default_factory=list)


def workflow_file_name(index: int) -> str:
    return f"workflow_{index:02d}.json"


def run_generate(
    cfg: RunConfig,
    suite: Optional[ProviderSuite] = None,
    analyzer: Optional[DependencyAnalyzer] = None,
) -> GenerationResult:
    providers = suite or get_providers(cfg.provider)

    with stage("load"):
        graph = load_graph(cfg.wkg_path)
        bundle = load_bundle(cfg.intention_dir)
    with stage("encode"):
        encoded = encode_intention(bundle, cfg.provider, providers)
    with stage("route"):
        graph.ensure_embeddings(providers.embedder)
        routed = route(encoded, graph, cfg.routing, providers.embedder)
        if not routed:
            raise EmptyRouting(
                f"no task reaches similarity threshold {cfg.routing.similarity_threshold}"
            )
        LOGGER.info("Stage route: %s of %s tasks", len(routed), len(graph))
    with stage("split"):
        neighborhoods = split_neighborhoods(routed, graph, cfg.routing, providers.embedder)
    with stage("extract"):
        swkgs = extract_all(neighborhoods, graph)
    with stage("textualize"):
        texts = [textualize_swkg(swkg, graph) for swkg in swkgs]
    with stage("decode"):
        decoded = decode_intention(encoded, bundle, cfg.provider, providers)
    with stage("generate"):
        prompts = [build_prompt(decoded, text) for text in texts]
        workers = min(cfg.provider.max_in_flight, len(prompts))
        with ThreadPoolExecutor(max_workers=workers) as pool:
            sequences = list(
                pool.map(
                    lambda job: generate_sequence(job[0], cfg.provider, graph, job[1].swkg_id, providers),
                    zip(prompts, swkgs),
                )
            )
    with stage("dagify"):
        dags = [sequence_to_dag(sequence, analyzer) for sequence in sequences]
    with stage("assemble"):
        wfg = assemble_wfg(dags, graph)
    with stage("enhance"):
        wfg = enhance_wfg(wfg, graph, cfg.enhance, providers.embedder)
    with stage("attach"):
        wfg = attach_terminals(wfg)

    result = GenerationResult(graph, encoded, decoded, routed, neighborhoods, swkgs, sequences, dags, wfg)
    with stage("write"):
        result.files = write_outputs(cfg, result)
    return result


def write_outputs(cfg: RunConfig, result: GenerationResult) -> List[Path]:
    output_dir = Path(cfg.output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    written: List[Path] = []
    for index, dag in enumerate(result.dags, start=1):
        path = output_dir / workflow_file_name(index)
        save_workflow(dag, path)
        written.append(path)
    wfg_path = output_dir / WFG_FILE
    save_wfg(result.wfg, wfg_path)
    written.append(wfg_path)
    manifest_path = output_dir / MANIFEST_FILE
    manifest = build_manifest(cfg, result, [path.name for path in written])
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    written.append(manifest_path)
    LOGGER.info("Wrote %s files to %s", len(written), output_dir)
    return written


def _provider_echo(provider: ProviderConfig) -> Dict[str, Any]:
    echo = asdict(provider)
    echo.pop("judge_prompt", None)
    return echo


def build_manifest(cfg: RunConfig, result: GenerationResult, files: Sequence[str]) -> Dict[str, Any]:
    """Configuration echo of one run; holds no timestamps or absolute output paths."""
    return {
        "package": "wkforge",
        "version": __version__,
        "seed": cfg.seed,
        "trials": cfg.trials,
        "inputs": {"wkg": Path(cfg.wkg_path).name, "intention": Path(cfg.intention_dir).name},
        "config": {
            "provider": _provider_echo(cfg.provider),
            "routing": asdict(cfg.routing),
            "enhance": asdict(cfg.enhance),
            "weights": asdict(cfg.weights),
            "defaults": asdict(cfg.defaults),
        },
        "stats": {
            "routed": len(result.routed),
            "neighborhoods": len(result.neighborhoods),
            "swkgs": [swkg.swkg_id for swkg in result.swkgs],
            "wfg_tasks": len(result.wfg.interior),
            "wfg_edges": len(result.wfg.edges),
            "enhance_iterations": result.wfg.enhance_iterations,
            "pruned": list(result.wfg.pruned),
        },
        "files": list(files),
    }


def run_ingest(records_path: Path, wkg_path: Path) -> GraphSummary:
    graph = load_graph(wkg_path)
    records = load_records(records_path)
    apply_records(graph, records)
    save_graph(graph, wkg_path)
    LOGGER.info("Ingested %s records into %s", len(records), wkg_path)
    return graph.summary()


def run_optimize(
    wfg_path: Path,
    weights: CostWeights,
    defaults: DefaultCosts,
    wkg_path: Optional[Path] = None,
) -> Tuple[WorkflowGraph, PathResult]:
    wfg = load_wfg(wfg_path)
    if not wfg.has_terminals:
        wfg = attach_terminals(wfg)
    history = load_graph(wkg_path).cost_table() if wkg_path is not None else {}
    return wfg, optimal_path(wfg, weights, defaults, history)


def run_evaluate(
    generated_paths: Sequence[Path],
    reference_path: Path,
    provider: ProviderConfig,
    tau: float,
    strategy: str = "greedy",
    passes: int = 1,
    suite: Optional[ProviderSuite] = None,
) -> Tuple[List[Tuple[str, MetricReport, Matching]], MetricReport]:
    """Each generated file, judged ``passes`` times, is one trial."""
    providers = suite or get_providers(provider)
    reference = load_reference(reference_path)
    trials: List[Tuple[str, MetricReport, Matching]] = []
    for path in generated_paths:
        tasks = load_workflow(path).nodes
        for _ in range(passes):
            report, matching = evaluate_workflow(tasks, reference, providers.judge, providers.embedder, tau, strategy)
            trials.append((Path(path).name, report, matching))
    averaged = evaluate_trials([report for _, report, _ in trials])
    LOGGER.info("Evaluated %s trials against %s", len(trials), reference_path)
    return trials, averaged


def load_metrics_table(path: Path) -> Dict[str, MetricReport]:
    """Read ``{"rows": [{"name", "coverage", "kendall", "dtw", "cosine", "bleu"}]}``."""
    data = read_json_file(path)
    rows = data.get("rows") if isinstance(data, dict) else None
    if not isinstance(rows, list) or not rows:
        raise ParseError("expected a non-empty array", location=str(path), field="rows")
    table: Dict[str, MetricReport] = {}
    for index, row in enumerate(rows):
        where = f"rows[{index}]"
        if not isinstance(row, Mapping) or not isinstance(row.get("name"), str):
            raise ParseError("row needs a string name", location=where, field="name")
        values: Dict[str, float] = {}
        for key in ("coverage", "kendall", "dtw", "cosine", "bleu"):
            value = row.get(key)
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ParseError("expected a number", location=where, field=key)
            values[key] = float(value)
        if row["name"] in table:
            raise ParseError(f"duplicate row {row['name']!r}", location=where, field="name")
        table[row["name"]] = build_report(
            coverage=values["coverage"],
            kendall_raw=values["kendall"],
            kendall=values["kendall"],
            dtw=values["dtw"],
            bleu=values["bleu"],
            cosine=values["cosine"],
        )
    return table
