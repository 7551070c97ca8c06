"""Command-line entrypoint: ingest, build, stats, eval, respond.

Output conventions: results go to stdout as JSON (or readable text for
stats/eval); diagnostics go to stderr as line-delimited JSON records.
Usage errors exit 2 (argparse), runtime failures exit 1 after printing
one machine-parseable error record to stderr.
"""

import argparse
import json
import logging
import sys
from dataclasses import fields
from pathlib import Path

from . import __version__
from .config import RunConfig
from .errors import ConfigError, Kg2ftError
from .evalharness import (
    METRICS,
    RESPONDER_KINDS,
    ScoreReport,
    reference_responder,
    score,
    write_responses,
)
from .ingest import RAISE, SKIP, ingest_papers, ingest_triples
from .pipeline import build_dataset, dataset_stats
from .report import figure_path, format_report, format_stats, render_score_figure, render_stats_figure
from .storage import load_graph, save_graph
from .templates import merged_registry

log = logging.getLogger("kg2ft.cli")

# RunConfig fields that have a CLI flag on `build`
CONFIG_FLAGS = [f.name for f in fields(RunConfig)]


class JsonLineFormatter(logging.Formatter):
    def format(self, record: logging.LogRecord) -> str:
        payload = {
            "level": record.levelname.lower(),
            "logger": record.name,
            "event": record.getMessage(),
        }
        return json.dumps(payload, ensure_ascii=False, sort_keys=True)


def configure_logging(quiet: bool = False) -> None:
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(JsonLineFormatter())
    logger = logging.getLogger("kg2ft")
    logger.handlers[:] = [handler]
    logger.setLevel(logging.WARNING if quiet else logging.INFO)
    logger.propagate = False


def _comma_list(text: str) -> tuple[str, ...]:
    return tuple(part.strip() for part in text.split(",") if part.strip())


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kg2ft",
        description="Compile a knowledge graph into text fine-tuning and eval datasets.",
    )
    parser.add_argument("--version", action="version", version=f"kg2ft {__version__}")
    parser.add_argument("--quiet", action="store_true", help="only warnings on stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p_ingest = sub.add_parser("ingest", help="read raw triples or paper records into a graph file")
    p_ingest.add_argument("--format", choices=("triples", "papers"), required=True,
                          help="input flavor: TSV triples or JSONL paper records")
    p_ingest.add_argument("--input", required=True, help="source file")
    p_ingest.add_argument("--out", required=True, help="graph file to write (.kgz)")
    p_ingest.add_argument("--relations", type=_comma_list, default=None,
                          help="comma-separated relation allowlist (triples format)")
    p_ingest.add_argument("--min-authors", type=int, default=2,
                          help="papers format: drop papers with fewer distinct authors")
    p_ingest.add_argument("--on-malformed", choices=(RAISE, SKIP), default=RAISE,
                          help="abort on the first bad row, or count and skip it")
    p_ingest.add_argument("--templates", default=None,
                          help="template file overriding the shipped relation templates")
    p_ingest.set_defaults(func=cmd_ingest)

    p_build = sub.add_parser("build", help="emit training/eval datasets from a graph file")
    p_build.add_argument("--graph", required=True, help="graph file from `kg2ft ingest`")
    p_build.add_argument("--out", required=True, help="output directory")
    p_build.add_argument("--config", default=None,
                         help="JSON config file, or a manifest.json to re-execute")
    p_build.add_argument("--strategy",
                         help="triples | groups | adjacency | summarized[:base] | descriptors")
    p_build.add_argument("--summarize-base", dest="summarize_base",
                         help="base encoding rewritten by the summarized strategy")
    p_build.add_argument("--tasks", type=_comma_list, help="eval tasks: fact,inverse,multihop")
    p_build.add_argument("--train-tasks", dest="train_tasks", type=_comma_list,
                         help="QA tasks attached to training records (fact and/or inverse)")
    p_build.add_argument("--formats", type=_comma_list, help="eval formats: open,mc")
    p_build.add_argument("--split", type=float, help="train fraction, e.g. 0.7; enables holdout")
    p_build.add_argument("--seed", type=int, help="master seed for split and choice sampling")
    p_build.add_argument("--k", type=int, help="context hop radius")
    p_build.add_argument("--n-max", dest="n_max", type=int, help="max nodes per partition")
    p_build.add_argument("--t-max", dest="t_max", type=int, help="token budget per training sample")
    p_build.add_argument("--chars-per-token", dest="chars_per_token", type=float,
                         help="token estimator divisor")
    p_build.add_argument("--templates", help="template file overriding graph relation templates")
    p_build.add_argument("--llm-backend", dest="llm_backend", choices=("stub", "remote", "off"),
                         help="language model backend for summarized/descriptors strategies")
    p_build.add_argument("--llm-cache", dest="llm_cache", help="response cache directory")
    p_build.add_argument("--llm-max-calls", dest="llm_max_calls", type=int,
                         help="budget of backend calls (cache hits are free)")
    p_build.add_argument("--eval-include-context", dest="eval_include_context",
                         action=argparse.BooleanOptionalAction, default=None,
                         help="prefix eval questions with their context text")
    p_build.add_argument("--paraphrase-questions", dest="paraphrase_questions",
                         action=argparse.BooleanOptionalAction, default=None,
                         help="rewrite eval questions through the LLM backend")
    p_build.add_argument("--jobs", type=int, help="worker threads (never changes output bytes)")
    p_build.set_defaults(func=cmd_build)

    p_stats = sub.add_parser("stats", help="validate a dataset and report counts/token stats")
    p_stats.add_argument("--dataset", required=True, help="output directory or one .jsonl file")
    p_stats.add_argument("--report", default=None,
                         help="write stats JSON here, plus a token histogram PNG alongside")
    p_stats.set_defaults(func=cmd_stats)

    p_eval = sub.add_parser("eval", help="score a response file against an eval dataset")
    p_eval.add_argument("--dataset", help="eval .jsonl file")
    p_eval.add_argument("--responses", help="response .jsonl file")
    p_eval.add_argument("--metric", choices=METRICS, help="mc | exact | token-f1")
    p_eval.add_argument("--report", default=None,
                        help="write the score report JSON here, plus a score histogram PNG alongside")
    p_eval.add_argument("--show", default=None, metavar="REPORT",
                        help="print an existing score report file and exit")
    p_eval.set_defaults(func=cmd_eval)

    p_respond = sub.add_parser("respond", help="run a reference responder over an eval dataset")
    p_respond.add_argument("--dataset", required=True, help="eval .jsonl file")
    p_respond.add_argument("--kind", choices=RESPONDER_KINDS, required=True)
    p_respond.add_argument("--seed", type=int, default=0, help="seed for the random responder")
    p_respond.add_argument("--out", required=True, help="response file to write")
    p_respond.set_defaults(func=cmd_respond)

    return parser


def cmd_ingest(args: argparse.Namespace) -> int:
    registry = merged_registry(args.templates)
    if args.format == "triples":
        graph, report = ingest_triples(
            args.input, relations=args.relations, registry=registry, on_malformed=args.on_malformed
        )
    else:
        graph, report = ingest_papers(
            args.input, min_authors=args.min_authors, registry=registry,
            on_malformed=args.on_malformed,
        )
    content_hash = save_graph(graph, args.out)
    log.info("ingested %s: %d nodes, %d edges", args.input, graph.num_nodes, graph.num_edges)
    print(json.dumps(
        {"graph": str(args.out), "hash": content_hash, "report": report.to_dict()},
        ensure_ascii=False, sort_keys=True,
    ))
    return 0


def _load_config_file(path: str) -> dict:
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    if isinstance(payload, dict) and payload.get("format") == "kg2ft-manifest":
        payload = payload.get("config", {})
    if not isinstance(payload, dict):
        raise ConfigError(f"config file {path} must hold a JSON object")
    return payload


def resolve_config(args: argparse.Namespace) -> RunConfig:
    """Defaults, then config file, then CLI flags; the winner per key is logged."""
    file_payload = _load_config_file(args.config) if args.config else {}
    config = RunConfig.from_dict(file_payload) if file_payload else RunConfig()
    cli_overrides = {
        name: getattr(args, name)
        for name in CONFIG_FLAGS
        if getattr(args, name, None) is not None
    }
    config = config.with_overrides(**cli_overrides)
    sources = {
        name: "cli" if name in cli_overrides else ("file" if name in file_payload else "default")
        for name in CONFIG_FLAGS
    }
    log.info("config resolved: %s", json.dumps(
        {"values": config.to_dict(), "sources": sources}, sort_keys=True))
    return config


def cmd_build(args: argparse.Namespace) -> int:
    config = resolve_config(args)
    graph = load_graph(args.graph)
    manifest = build_dataset(graph, config, args.out)
    print(json.dumps(
        {"out_dir": str(args.out), "counts": manifest["counts"], "skipped": manifest["skipped"],
         "graph_hash": manifest["graph_hash"]},
        ensure_ascii=False, sort_keys=True,
    ))
    return 0


def cmd_stats(args: argparse.Namespace) -> int:
    stats = dataset_stats(args.dataset)
    print(format_stats(stats))
    if args.report:
        with open(args.report, "w", encoding="utf-8") as fh:
            fh.write(json.dumps(stats, ensure_ascii=False, sort_keys=True, indent=2) + "\n")
        figure = render_stats_figure(stats, figure_path(args.report))
        log.info("stats report written: %s and %s", args.report, figure)
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    if args.show:
        print(format_report(ScoreReport.load(args.show)))
        return 0
    missing = [name for name in ("dataset", "responses", "metric") if not getattr(args, name)]
    if missing:
        raise ConfigError(f"eval needs --dataset, --responses and --metric (missing: {', '.join(missing)})")
    report = score(args.metric, args.dataset, args.responses)
    print(format_report(report))
    if args.report:
        report.save(args.report)
        figure = render_score_figure(report, figure_path(args.report))
        log.info("score report written: %s and %s", args.report, figure)
    return 0


def cmd_respond(args: argparse.Namespace) -> int:
    rows = reference_responder(args.kind, args.dataset, seed=args.seed)
    write_responses(rows, args.out)
    print(json.dumps({"out": str(args.out), "n": len(rows)}, sort_keys=True))
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging(quiet=args.quiet)
    try:
        return args.func(args)
    except Kg2ftError as exc:
        record = {"error": type(exc).__name__, "message": str(exc)}
        if getattr(exc, "line_number", None) is not None:
            record["line"] = exc.line_number
        print(json.dumps(record, ensure_ascii=False, sort_keys=True), file=sys.stderr)
        return 1
    except OSError as exc:
        print(json.dumps({"error": "OSError", "message": str(exc)}, ensure_ascii=False,
                         sort_keys=True), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
