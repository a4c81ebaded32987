from __future__ import annotations

__version__ = "0.1.0"

from .assembly import WorkflowGraph, assemble_wfg, attach_terminals, enhance_wfg, is_weakly_connected
from .cli import main as main
from .evaluation import (
    bleu_score,
    coverage_ratio,
    cosine_score,
    dtw_score,
    evaluate_trials,
    kendall_score,
    match_tasks,
    pentagon_area,
)
from .generation import build_prompt, generate_sequence, parse_sequence, sequence_to_dag
from .intention import decode_intention, encode_intention, encode_modality, preprocess_input
from .optimizer import optimal_path, path_cost, task_cost
from .providers import complete, embed_text, judge_match
from .retrieval import extract_swkg, route, split_neighborhoods, textualize_swkg
from .wkg import WorkKnowledgeGraph, edge_weight, load_graph, record_workflow_implementation, save_graph, upsert_task

__all__ = [
    "WorkKnowledgeGraph",
    "WorkflowGraph",
    "__version__",
    "assemble_wfg",
    "attach_terminals",
    "bleu_score",
    "build_prompt",
    "complete",
    "cosine_score",
    "coverage_ratio",
    "decode_intention",
    "dtw_score",
    "edge_weight",
    "embed_text",
    "encode_intention",
    "encode_modality",
    "enhance_wfg",
    "evaluate_trials",
    "extract_swkg",
    "generate_sequence",
    "is_weakly_connected",
    "judge_match",
    "kendall_score",
    "load_graph",
    "main",
    "match_tasks",
    "optimal_path",
    "parse_sequence",
    "path_cost",
    "pentagon_area",
    "preprocess_input",
    "record_workflow_implementation",
    "route",
    "save_graph",
    "sequence_to_dag",
    "split_neighborhoods",
    "task_cost",
    "textualize_swkg",
    "upsert_task",
]
