"""Score model response files against emitted eval datasets.

Response files are line-delimited: {"sample_id": int, "response": str}
for open-ended answers or {"sample_id": int, "choice": int} for MC.
sample_id is the zero-based line index of the eval record. Scoring is
keyed by sample_id, so response line order never matters; a duplicate
id is rejected rather than silently last-wins.
"""

import json
import random
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

from .errors import FormatMismatch, MalformedSample, MissingResponse
from .pipeline import _check_eval_record, _read_jsonl

REPORT_KIND = "kg2ft-score-report"
REPORT_VERSION = 1
METRICS = ("mc", "exact", "token-f1")
RESPONDER_KINDS = ("gold", "random", "blank")
NONSENSE_TOKEN = "wibblefrond"

_TERMINAL_PUNCTUATION = ".?!,;:"


def default_normalize(text: str) -> str:
    """Lowercase, collapse runs of whitespace, strip terminal punctuation."""
    collapsed = " ".join(text.split())
    return collapsed.rstrip(_TERMINAL_PUNCTUATION).lower()


def load_eval_records(source: str | Path | list[dict]) -> list[dict]:
    if isinstance(source, (str, Path)):
        records = _read_jsonl(Path(source))
        name = Path(source).name
    else:
        records, name = list(source), "<records>"
    for line_number, record in enumerate(records, start=1):
        _check_eval_record(record, name, line_number)
    return records


def load_responses(source: str | Path | list[dict]) -> dict[int, dict]:
    if isinstance(source, (str, Path)):
        rows = _read_jsonl(Path(source))
        name = Path(source).name
    else:
        rows, name = list(source), "<responses>"
    responses: dict[int, dict] = {}
    for line_number, row in enumerate(rows, start=1):
        sample_id = row.get("sample_id")
        if not isinstance(sample_id, int) or isinstance(sample_id, bool):
            raise MalformedSample(f"{name}:{line_number}: sample_id must be an integer", line_number)
        if sample_id in responses:
            raise MalformedSample(f"{name}:{line_number}: duplicate sample_id {sample_id}", line_number)
        has_response = isinstance(row.get("response"), str)
        has_choice = isinstance(row.get("choice"), int) and not isinstance(row.get("choice"), bool)
        if not has_response and not has_choice:
            raise MalformedSample(
                f"{name}:{line_number}: need 'response' (string) or 'choice' (integer)", line_number
            )
        responses[sample_id] = row
    return responses


def _require_all(records: list[dict], responses: dict[int, dict]) -> None:
    wanted = set(range(len(records)))
    missing = wanted - set(responses)
    if missing:
        raise MissingResponse(missing)
    unknown = set(responses) - wanted
    if unknown:
        raise FormatMismatch(
            f"responses reference unknown sample ids: {sorted(unknown)[:10]}"
        )


def _require_format(records: list[dict], expected: str, metric: str) -> None:
    for index, record in enumerate(records):
        if record["format"] != expected:
            raise FormatMismatch(
                f"metric {metric!r} needs {expected} records; sample {index} is {record['format']!r}"
            )


@dataclass(frozen=True)
class ScoreReport:
    metric: str
    task: str
    eval_format: str
    n: int
    summary: dict
    per_sample: list[dict] = field(default_factory=list)

    def __post_init__(self):
        if self.n != len(self.per_sample):
            raise ValueError(f"n={self.n} but {len(self.per_sample)} per-sample scores")
        for entry in self.per_sample:
            for key, value in entry.items():
                if key == "sample_id":
                    continue
                if not 0 <= value <= 1:
                    raise ValueError(f"score out of [0, 1]: {key}={value}")

    def to_dict(self) -> dict:
        return {
            "kind": REPORT_KIND,
            "version": REPORT_VERSION,
            "metric": self.metric,
            "task": self.task,
            "eval_format": self.eval_format,
            "n": self.n,
            "summary": self.summary,
            "per_sample": self.per_sample,
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "ScoreReport":
        if not isinstance(payload, dict) or payload.get("kind") != REPORT_KIND:
            raise FormatMismatch(f"not a {REPORT_KIND} payload")
        if payload.get("version") != REPORT_VERSION:
            raise FormatMismatch(f"unsupported report version {payload.get('version')!r}")
        try:
            return cls(
                metric=payload["metric"],
                task=payload["task"],
                eval_format=payload["eval_format"],
                n=payload["n"],
                summary=dict(payload["summary"]),
                per_sample=list(payload["per_sample"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatMismatch(f"malformed score report: {exc}") from exc

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(json.dumps(self.to_dict(), ensure_ascii=False, sort_keys=True, indent=2) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "ScoreReport":
        try:
            payload = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise FormatMismatch(f"{path}: invalid JSON: {exc}") from exc
        return cls.from_dict(payload)


def _task_of(records: list[dict]) -> str:
    tasks = {record["task"] for record in records}
    return tasks.pop() if len(tasks) == 1 else "mixed"


def score_mc(eval_source, response_source) -> ScoreReport:
    records = load_eval_records(eval_source)
    responses = load_responses(response_source)
    _require_format(records, "mc", "mc")
    _require_all(records, responses)
    per_sample = []
    hits = 0
    for index, record in enumerate(records):
        row = responses[index]
        if "choice" in row and isinstance(row["choice"], int) and not isinstance(row["choice"], bool):
            chosen = row["choice"]
            if not 0 <= chosen < len(record["options"]):
                raise FormatMismatch(
                    f"sample {index}: choice {chosen} out of range 0..{len(record['options']) - 1}"
                )
        else:
            normalized = default_normalize(row["response"])
            chosen = -1
            for option_index, option in enumerate(record["options"]):
                if default_normalize(option) == normalized:
                    chosen = option_index
                    break
        score = 1.0 if chosen == record["correct_index"] else 0.0
        hits += score == 1.0
        per_sample.append({"sample_id": index, "score": score})
    n = len(records)
    accuracy = hits / n if n else 0.0
    return ScoreReport(
        metric="mc",
        task=_task_of(records) if records else "none",
        eval_format="mc",
        n=n,
        summary={"accuracy": accuracy},
        per_sample=per_sample,
    )


def score_exact(eval_source, response_source, normalize=default_normalize) -> ScoreReport:
    records = load_eval_records(eval_source)
    responses = load_responses(response_source)
    _require_format(records, "open", "exact")
    _require_all(records, responses)
    per_sample = []
    hits = 0
    for index, record in enumerate(records):
        row = responses[index]
        if "response" not in row:
            raise FormatMismatch(f"sample {index}: open-ended scoring needs a text response")
        score = 1.0 if normalize(row["response"]) == normalize(record["answer"]) else 0.0
        hits += score == 1.0
        per_sample.append({"sample_id": index, "score": score})
    n = len(records)
    return ScoreReport(
        metric="exact",
        task=_task_of(records) if records else "none",
        eval_format="open",
        n=n,
        summary={"accuracy": hits / n if n else 0.0},
        per_sample=per_sample,
    )


def token_prf(response: str, answer: str) -> tuple[float, float, float]:
    """Multiset precision/recall/F1 over normalized whitespace tokens."""
    response_tokens = Counter(default_normalize(response).split())
    answer_tokens = Counter(default_normalize(answer).split())
    if not response_tokens and not answer_tokens:
        return 1.0, 1.0, 1.0
    if not response_tokens or not answer_tokens:
        return 0.0, 0.0, 0.0
    overlap = sum((response_tokens & answer_tokens).values())
    if overlap == 0:
        return 0.0, 0.0, 0.0
    precision = overlap / sum(response_tokens.values())
    recall = overlap / sum(answer_tokens.values())
    f1 = 2 * precision * recall / (precision + recall)
    return precision, recall, f1


def score_token_f1(eval_source, response_source) -> ScoreReport:
    records = load_eval_records(eval_source)
    responses = load_responses(response_source)
    _require_format(records, "open", "token-f1")
    _require_all(records, responses)
    per_sample = []
    totals = [0.0, 0.0, 0.0]
    for index, record in enumerate(records):
        row = responses[index]
        if "response" not in row:
            raise FormatMismatch(f"sample {index}: open-ended scoring needs a text response")
        precision, recall, f1 = token_prf(row["response"], record["answer"])
        totals[0] += precision
        totals[1] += recall
        totals[2] += f1
        per_sample.append(
            {"sample_id": index, "precision": precision, "recall": recall, "f1": f1}
        )
    n = len(records)
    summary = {
        "precision": totals[0] / n if n else 0.0,
        "recall": totals[1] / n if n else 0.0,
        "f1": totals[2] / n if n else 0.0,
    }
    return ScoreReport(
        metric="token-f1",
        task=_task_of(records) if records else "none",
        eval_format="open",
        n=n,
        summary=summary,
        per_sample=per_sample,
    )


def score(metric: str, eval_source, response_source) -> ScoreReport:
    if metric == "mc":
        return score_mc(eval_source, response_source)
    if metric == "exact":
        return score_exact(eval_source, response_source)
    if metric == "token-f1":
        return score_token_f1(eval_source, response_source)
    raise FormatMismatch(f"unknown metric {metric!r}; expected one of {METRICS}")


def reference_responder(kind: str, eval_source, seed: int = 0) -> list[dict]:
    """Baseline responders: gold (reads answers), random (seeded uniform
    choice / fixed nonsense token), blank (empty text)."""
    records = load_eval_records(eval_source)
    rng = random.Random(seed)
    rows = []
    for index, record in enumerate(records):
        if kind == "gold":
            if record["format"] == "mc":
                rows.append({"sample_id": index, "choice": record["correct_index"]})
            else:
                rows.append({"sample_id": index, "response": record["answer"]})
        elif kind == "random":
            if record["format"] == "mc":
                rows.append({"sample_id": index, "choice": rng.randrange(len(record["options"]))})
            else:
                rows.append({"sample_id": index, "response": NONSENSE_TOKEN})
        elif kind == "blank":
            rows.append({"sample_id": index, "response": ""})
        else:
            raise FormatMismatch(f"unknown responder kind {kind!r}; expected one of {RESPONDER_KINDS}")
    return rows


def write_responses(rows: list[dict], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, ensure_ascii=False, sort_keys=True) + "\n")
