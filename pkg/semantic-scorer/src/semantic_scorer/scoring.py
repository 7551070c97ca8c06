"""Greedy token-embedding matching between responses and references.

For each response/reference pair, every token is embedded and a cosine
similarity matrix is formed. Precision is the mean over response tokens
of their best match in the reference; recall is the mean over reference
tokens of their best match in the response; F1 is their harmonic mean.
Similarities are clamped to [0, 1] so all reported scores stay in range.
"""

import importlib.resources
import json
import string
from pathlib import Path

from .embedding import DEFAULT_MODEL, make_backend
from .errors import FormatMismatch, MalformedRecord, MissingResponse

REPORT_KIND = "kg2ft-score-report"
REPORT_VERSION = 1
METRIC = "semantic"

_PUNCTUATION = string.punctuation


def tokenize(text: str) -> list[str]:
    tokens = []
    for raw in text.lower().split():
        token = raw.strip(_PUNCTUATION)
        if token:
            tokens.append(token)
    return tokens


def _cosine(a: list[float], b: list[float]) -> float:
    score = sum(x * y for x, y in zip(a, b))
    return min(1.0, max(0.0, score))


def greedy_prf(
    response_vectors: list[list[float]], reference_vectors: list[list[float]]
) -> tuple[float, float, float]:
    if not response_vectors and not reference_vectors:
        return 1.0, 1.0, 1.0
    if not response_vectors or not reference_vectors:
        return 0.0, 0.0, 0.0
    precision = sum(
        max(_cosine(rv, fv) for fv in reference_vectors) for rv in response_vectors
    ) / len(response_vectors)
    recall = sum(
        max(_cosine(fv, rv) for rv in response_vectors) for fv in reference_vectors
    ) / len(reference_vectors)
    if precision + recall == 0:
        return precision, recall, 0.0
    return precision, recall, 2 * precision * recall / (precision + recall)


def pair_scores(response: str, reference: str, backend) -> tuple[float, float, float]:
    response_tokens = tokenize(response)
    reference_tokens = tokenize(reference)
    # one embedding call per pair keeps transformer batching effective
    vectors = backend.embed_tokens(response_tokens + reference_tokens)
    return greedy_prf(vectors[: len(response_tokens)], vectors[len(response_tokens) :])


def load_fixture_pairs() -> list[dict]:
    """The shipped 20-pair calibration fixture (reference/paraphrase/unrelated)."""
    text = (
        importlib.resources.files("semantic_scorer")
        .joinpath("data/pairs_v1.jsonl")
        .read_text(encoding="utf-8")
    )
    return [json.loads(line) for line in text.splitlines() if line.strip()]


# -- file plumbing (the whole contract with the dataset tool) ---------------


def _read_jsonl(path: Path) -> list[dict]:
    rows = []
    with open(path, encoding="utf-8") as fh:
        for line_number, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError as exc:
                raise MalformedRecord(f"{path.name}:{line_number}: invalid JSON: {exc}", line_number) from exc
            if not isinstance(row, dict):
                raise MalformedRecord(f"{path.name}:{line_number}: record must be an object", line_number)
            rows.append(row)
    return rows


def load_eval_records(path: str | Path) -> list[dict]:
    records = _read_jsonl(Path(path))
    for index, record in enumerate(records):
        for key in ("question", "answer", "task", "format"):
            if not isinstance(record.get(key), str):
                raise MalformedRecord(f"eval record {index}: missing or non-string {key!r}", index + 1)
        if record["format"] != "open":
            raise FormatMismatch(
                f"semantic scoring handles open-ended records only; sample {index} is "
                f"{record['format']!r}"
            )
    return records


def load_responses(path: str | Path, n_expected: int) -> dict[int, str]:
    rows = _read_jsonl(Path(path))
    responses: dict[int, str] = {}
    for line_number, row in enumerate(rows, start=1):
        sample_id = row.get("sample_id")
        if not isinstance(sample_id, int) or isinstance(sample_id, bool):
            raise MalformedRecord(f"responses:{line_number}: sample_id must be an integer", line_number)
        if sample_id in responses:
            raise MalformedRecord(f"responses:{line_number}: duplicate sample_id {sample_id}", line_number)
        if not isinstance(row.get("response"), str):
            raise FormatMismatch(
                f"responses:{line_number}: semantic scoring needs a text 'response' field"
            )
        responses[sample_id] = row["response"]
    wanted = set(range(n_expected))
    missing = wanted - set(responses)
    if missing:
        raise MissingResponse(missing)
    unknown = set(responses) - wanted
    if unknown:
        raise FormatMismatch(f"responses reference unknown sample ids: {sorted(unknown)[:10]}")
    return responses


def score_semantic(
    eval_file: str | Path,
    responses_file: str | Path,
    model_name: str = DEFAULT_MODEL,
    out_file: str | Path | None = None,
    batch_size: int = 32,
) -> dict:
    """Score every sample and return (and optionally write) the report."""
    records = load_eval_records(eval_file)
    responses = load_responses(responses_file, len(records))
    backend = make_backend(model_name, batch_size)

    per_sample = []
    totals = [0.0, 0.0, 0.0]
    for index, record in enumerate(records):
        precision, recall, f1 = pair_scores(responses[index], record["answer"], backend)
        totals[0] += precision
        totals[1] += recall
        totals[2] += f1
        per_sample.append(
            {"sample_id": index, "precision": precision, "recall": recall, "f1": f1}
        )
    n = len(records)
    tasks = {record["task"] for record in records}
    report = {
        "kind": REPORT_KIND,
        "version": REPORT_VERSION,
        "metric": METRIC,
        "task": tasks.pop() if len(tasks) == 1 else "mixed",
        "eval_format": "open",
        "n": n,
        "summary": {
            "precision": totals[0] / n if n else 0.0,
            "recall": totals[1] / n if n else 0.0,
            "f1": totals[2] / n if n else 0.0,
        },
        "per_sample": per_sample,
        "model": backend.name,
    }
    if out_file is not None:
        with open(out_file, "w", encoding="utf-8") as fh:
            fh.write(json.dumps(report, ensure_ascii=False, sort_keys=True, indent=2) + "\n")
    return report
