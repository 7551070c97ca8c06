"""Command line front end: score a response file against an eval file."""

import argparse
import json
import sys

from . import __version__
from .embedding import DEFAULT_MODEL
from .errors import ScorerError
from .scoring import score_semantic


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="semantic-scorer",
        description="score open-ended responses by greedy token-embedding matching",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--eval", required=True, help="eval dataset .jsonl (open format)")
    parser.add_argument("--responses", required=True, help="responses .jsonl to score")
    parser.add_argument("--out", default=None, help="write the score report JSON here")
    parser.add_argument("--model", default=DEFAULT_MODEL,
                        help=f"embedding model name (default: {DEFAULT_MODEL})")
    parser.add_argument("--batch-size", type=int, default=32,
                        help="tokens embedded per model call (default: 32)")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        report = score_semantic(
            args.eval,
            args.responses,
            model_name=args.model,
            out_file=args.out,
            batch_size=args.batch_size,
        )
    except (ScorerError, OSError) as exc:
        record = {"error": type(exc).__name__, "message": str(exc)}
        print(json.dumps(record, ensure_ascii=False, sort_keys=True), file=sys.stderr)
        return 1
    summary = report["summary"]
    print(
        f"semantic score  model={report['model']} n={report['n']} "
        f"precision={summary['precision']:.4f} recall={summary['recall']:.4f} "
        f"f1={summary['f1']:.4f}"
    )
    return 0


if __name__ == "__main__":
    sys.exit(main())
