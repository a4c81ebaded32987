from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Any, Dict, Optional, Sequence

from .config import load_cost_defaults, resolve_provider_config
from .errors import InvalidInput, WkforgeError
from .evaluation import DEFAULT_TAU, MATCHING_STRATEGIES, rank_reports
from .models import CostWeights, EnhanceConfig, ProviderConfig, RoutingConfig, RunConfig
from .pipeline import load_metrics_table, run_evaluate, run_generate, run_ingest, run_optimize
from .reporting import (
    eval_report_payload,
    format_metric_report,
    format_path,
    format_ranking,
    format_summary,
    path_to_payload,
    ranking_to_payload,
    to_json,
)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="wkforge",
        description="Generate, optimize and evaluate task workflows from a work knowledge graph.",
    )
    parser.add_argument(
        "--log-level",
        default="WARNING",
        help="Set the logging level (DEBUG, INFO, WARNING, ERROR).",
    )
    commands = parser.add_subparsers(dest="command", required=True)

    ingest = commands.add_parser("ingest", help="Apply implementation records to a WKG file.")
    ingest.add_argument("records", type=Path, help="JSON array of workflow implementation records.")
    ingest.add_argument("wkg", type=Path, help="WKG file to update in place.")

    generate = commands.add_parser("generate", help="Run the generation pipeline for one intention bundle.")
    generate.add_argument("--wkg", type=Path, required=True, help="WKG file.")
    generate.add_argument("--intention", type=Path, required=True, help="Intention bundle directory.")
    generate.add_argument("--output", type=Path, required=True, help="Directory for workflow, WFG and manifest files.")
    generate.add_argument("--threshold", type=float, default=RoutingConfig.similarity_threshold,
                          help="Routing cosine similarity threshold.")
    generate.add_argument("--knn-k", type=int, default=RoutingConfig.knn_k, help="Neighbours per task when splitting.")
    generate.add_argument("--no-mutual-knn", dest="mutual_knn", action="store_false",
                          help="Link tasks when either side lists the other as a neighbour.")
    generate.add_argument("--alpha-start", type=float, default=EnhanceConfig.alpha_start)
    generate.add_argument("--delta-alpha", type=float, default=EnhanceConfig.delta_alpha)
    generate.add_argument("--alpha-floor", type=float, default=EnhanceConfig.alpha_floor)
    generate.add_argument("--trials", type=int, default=RunConfig.trials, help="Trial count recorded in the manifest.")
    _add_provider_arguments(generate)
    _add_weight_arguments(generate)

    optimize = commands.add_parser("optimize", help="Extract the minimum-cost task path from a WFG file.")
    optimize.add_argument("wfg", type=Path, help="WFG file written by generate.")
    optimize.add_argument("--wkg", type=Path, default=None, help="WKG file supplying historical task costs.")
    optimize.add_argument("--output", type=Path, default=None, help="Write the path result as JSON.")
    optimize.add_argument("--json", action="store_true", help="Print JSON instead of formatted text.")
    _add_weight_arguments(optimize)

    evaluate = commands.add_parser("evaluate", help="Score generated workflows against a reference workflow.")
    evaluate.add_argument("generated", type=Path, nargs="+", help="Generated workflow files, one trial each.")
    evaluate.add_argument("--reference", type=Path, required=True, help="Reference workflow file.")
    evaluate.add_argument("--tau", type=float, default=DEFAULT_TAU, help="Judge score needed to accept a match.")
    evaluate.add_argument("--matching", choices=MATCHING_STRATEGIES, default="greedy")
    evaluate.add_argument("--passes", type=int, default=1, help="Judge passes per generated file.")
    evaluate.add_argument("--output", type=Path, default=None, help="Write the evaluation report as JSON.")
    evaluate.add_argument("--json", action="store_true", help="Print JSON instead of formatted text.")
    _add_provider_arguments(evaluate)

    rank = commands.add_parser("rank", help="Rank rows of a metrics table by pentagon area.")
    rank.add_argument("table", type=Path, help='JSON file with {"rows": [...]} metric rows.')
    rank.add_argument("--baseline", default=None, help="Row name to compute mean deltas against.")
    rank.add_argument("--json", action="store_true", help="Print JSON instead of formatted text.")
    return parser


def _add_provider_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--offline", action="store_true", default=None, help="Use the deterministic offline providers.")
    parser.add_argument("--endpoint", default=None, help="Provider endpoint URL for online mode.")
    parser.add_argument("--dimension", type=int, default=None, help="Embedding dimension.")
    parser.add_argument("--max-in-flight", type=int, default=None, help="Concurrent provider requests.")
    parser.add_argument("--timeout", type=float, default=None, help="Provider timeout in seconds.")
    parser.add_argument("--seed", type=int, default=0, help="Seed for deterministic backends.")


def _add_weight_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--w-compute", type=float, default=1.0, help="Weight of the compute cost.")
    parser.add_argument("--w-time", type=float, default=1.0, help="Weight of the time cost.")
    parser.add_argument("--w-model", type=float, default=1.0, help="Weight of the model cost.")


def _provider_config(args: argparse.Namespace) -> ProviderConfig:
    overrides: Dict[str, Any] = {
        "endpoint_url": args.endpoint,
        "dimension": args.dimension,
        "max_in_flight": args.max_in_flight,
        "timeout": args.timeout,
        "seed": args.seed,
        "offline_mode": True if args.offline else None,
    }
    return resolve_provider_config(overrides)


def _weights(args: argparse.Namespace) -> CostWeights:
    return CostWeights(args.w_compute, args.w_time, args.w_model)


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    _configure_logging(args.log_level)
    try:
        return _dispatch(args)
    except WkforgeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        location = f" ({exc.filename})" if exc.filename else ""
        print(f"error: {exc.strerror or exc}{location}", file=sys.stderr)
        return 1


def _dispatch(args: argparse.Namespace) -> int:
    if args.command == "ingest":
        print(format_summary(run_ingest(args.records, args.wkg)))
        return 0

    if args.command == "generate":
        cfg = RunConfig(
            wkg_path=args.wkg,
            intention_dir=args.intention,
            output_dir=args.output,
            provider=_provider_config(args),
            routing=RoutingConfig(args.threshold, args.knn_k, args.mutual_knn),
            enhance=EnhanceConfig(args.alpha_start, args.delta_alpha, args.alpha_floor),
            weights=_weights(args),
            defaults=load_cost_defaults(),
            trials=args.trials,
            seed=args.seed,
        )
        result = run_generate(cfg)
        print(
            f"Generated {len(result.dags)} workflows; WFG has {len(result.wfg.interior)} tasks "
            f"and {len(result.wfg.edges)} edges."
        )
        for path in result.files:
            print(f"  {path}")
        return 0

    if args.command == "optimize":
        if args.wkg is None:
            logging.info("No WKG given; every task uses the default costs.")
        wfg, path = run_optimize(args.wfg, _weights(args), load_cost_defaults(), args.wkg)
        payload = path_to_payload(path)
        if args.output is not None:
            _write_json(args.output, payload)
        print(to_json(payload) if args.json else format_path(path, wfg))
        return 0

    if args.command == "evaluate":
        if args.passes < 1:
            raise InvalidInput("--passes must be at least 1")
        logging.info("Evaluating %s files with %s judge passes each.", len(args.generated), args.passes)
        trials, averaged = run_evaluate(
            args.generated,
            args.reference,
            _provider_config(args),
            args.tau,
            args.matching,
            args.passes,
        )
        payload = eval_report_payload(trials, averaged)
        if args.output is not None:
            _write_json(args.output, payload)
        print(to_json(payload) if args.json else format_metric_report(averaged, args.reference.name))
        return 0

    table = load_metrics_table(args.table)
    rows = rank_reports(table, args.baseline)
    print(to_json(ranking_to_payload(rows)) if args.json else format_ranking(rows, args.baseline))
    return 0


def _write_json(path: Path, payload: Any) -> None:
    path.write_text(to_json(payload) + "\n", encoding="utf-8")
    logging.info("Wrote %s", path)


def _configure_logging(level: str) -> None:
    numeric_level = getattr(logging, level.upper(), logging.WARNING)
    logging.basicConfig(level=numeric_level, format="%(levelname)s: %(message)s")


if __name__ == "__main__":
    sys.exit(main())
