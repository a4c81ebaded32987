from __future__ import annotations

import argparse
import sys
from pathlib import Path


ROOT_DIR = Path(__file__).resolve().parents[1]
SRC_DIR = ROOT_DIR / "src"
if str(SRC_DIR) not in sys.path:
    sys.path.insert(0, str(SRC_DIR))

from wkforge.evaluation import rank_reports
from wkforge.pipeline import load_metrics_table
from wkforge.reporting import format_ranking


def main() -> int:
    parser = argparse.ArgumentParser(
        description="Rank the rows of a metrics table by pentagon area and print mean deltas.",
    )
    parser.add_argument(
        "--table",
        type=Path,
        default=ROOT_DIR / "tests" / "data" / "model_metrics.json",
        help="Metrics table with name, coverage, kendall, dtw, cosine and bleu per row.",
    )
    parser.add_argument("--baseline", default="claude-3.5", help="Row to compare means against.")
    args = parser.parse_args()

    if not args.table.exists():
        print(f"Metrics table not found: {args.table}")
        return 1
    table = load_metrics_table(args.table)
    baseline = args.baseline if args.baseline in table else None
    print(format_ranking(rank_reports(table, baseline), baseline))
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
