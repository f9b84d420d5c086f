"""Command-line entry point.

Subcommands map one-to-one onto pipeline stages, plus ``all`` to run the
whole chain and ``calibrate`` for threshold calibration on a labelled
pair set. Global flags override the corresponding config values.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import matcher
from .clients import atomic_write_text, dump_json
from .errors import CitebiasError
from .pipeline import STAGES, load_config, run_pipeline

logger = logging.getLogger(__name__)

_STAGE_HELP = {
    "ingest": "harvest, filter, and resolve the corpus; enrich references",
    "prepare": "clean LaTeX sources and build ground-truth intro references",
    "generate": "run the vanilla prompting passes",
    "verify": "check generated references against the scholarly index",
    "iterate": "re-prompt for non-existent references and merge",
    "analyze": "compute summaries, characteristics, and bias tables",
    "graph": "build per-paper citation graphs and metrics",
    "report": "emit the CSV/JSON report bundle",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="citebias",
        description="Audit the citation behavior of LLMs against a scholarly index.",
    )
    parser.add_argument("--config", type=Path, required=False, help="pipeline config (YAML)")
    parser.add_argument("--cache-dir", type=Path, help="override the cache directory")
    parser.add_argument("--out-dir", type=Path, help="override the output directory")
    parser.add_argument("--mock", type=Path, help="directory of canned provider responses")
    parser.add_argument(
        "--refresh", action="store_true", help="ignore cached entries and stage markers"
    )
    parser.add_argument("-v", "--verbose", action="store_true")

    sub = parser.add_subparsers(dest="command", required=True)
    for stage in STAGES:
        sp = sub.add_parser(stage, help=_STAGE_HELP[stage])
        if stage == "generate":
            sp.add_argument("--model", help="override the configured model id")
            sp.add_argument("--strategy", choices=["vanilla"], default="vanilla")
            sp.add_argument("--runs", type=int, help="override the vanilla run count")
    sub.add_parser("all", help="run every stage in order")

    cal = sub.add_parser("calibrate", help="calibrate match thresholds on a labelled CSV")
    cal.add_argument("--labelled", type=Path, help="labelled pair CSV (default: bundled set)")
    cal.add_argument("--write-thresholds", type=Path, help="write the selected thresholds as JSON")
    return parser


def _overrides(args: argparse.Namespace) -> dict:
    out: dict = {}
    if args.cache_dir:
        out["cache_dir"] = str(args.cache_dir)
    if args.out_dir:
        out["out_dir"] = str(args.out_dir)
    if args.mock:
        out["mock_dir"] = str(args.mock)
    if args.refresh:
        out["refresh"] = True
    if getattr(args, "model", None):
        out["model_id"] = args.model
    return out


def _cmd_calibrate(args: argparse.Namespace) -> int:
    if args.labelled:
        pairs = matcher.load_labelled_csv(args.labelled)
    else:
        pairs = matcher.bundled_labelled_pairs()
    report = matcher.calibrate(pairs)
    t = report.thresholds
    print(f"selected thresholds: title={t.title_threshold:.4f} author={t.author_threshold:.4f}")
    print(f"accuracy: {report.accuracy:.2%} on {report.total} labelled pairs")
    print("confusion:", report.confusion_matrix())
    if args.write_thresholds:
        payload = {
            "title_threshold": t.title_threshold,
            "author_threshold": t.author_threshold,
            "provenance": "calibrated"
            + (f" on {args.labelled}" if args.labelled else " on bundled labelled_matches.csv"),
        }
        atomic_write_text(args.write_thresholds, dump_json(payload))
        print(f"wrote {args.write_thresholds}")
    return 0


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        if args.command == "calibrate":
            return _cmd_calibrate(args)
        if args.config is None:
            print("error: --config is required for pipeline commands", file=sys.stderr)
            return 2
        config = load_config(args.config, _overrides(args))
        if getattr(args, "runs", None):
            config.vanilla_runs = args.runs
        stages = None if args.command == "all" else [args.command]
        manifest = run_pipeline(config, stages)
        for stage, info in manifest["stages"].items():
            print(f"{stage}: {info['status']} {info['outcomes']}")
        return 0
    except CitebiasError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
