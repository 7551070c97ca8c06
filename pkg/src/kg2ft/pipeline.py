"""Dataset build driver.

Walks every node of the (training) graph in canonical order, extracts
its k-hop context, splits the context under the node and token budgets,
encodes each partition with the configured strategy, attaches QA pairs,
and emits line-delimited training and eval files plus a manifest.

Output bytes are a pure function of (graph bytes, config, seed,
templates, prompts, LLM cache content). Worker count is not in that
list: parallel runs merge per-node results in canonical node order.
The manifest is written last, so its presence marks a completed run;
a crashed run leaves data files but no manifest.
"""

import concurrent.futures
import hashlib
import json
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

from . import __version__
from .config import RunConfig
from .encode import (
    EncodedContext,
    EncodingStrategy,
    encode_base,
    encode_node_descriptors,
    encode_summarized,
    load_prompt,
)
from .errors import (
    InsufficientDistractorPool,
    Kg2ftError,
    MalformedSample,
    NoDescribableContent,
    PipelineError,
)
from .graph import KnowledgeGraph, RelationType, k_hop_context
from .llm import LlmClient, make_backend
from .partition import TokenBudget, estimate_tokens, fit_to_budget
from .qa import (
    FACT,
    INVERSE,
    MULTIHOP,
    OPEN,
    EdgeSplit,
    QASample,
    gen_fact_qa,
    gen_inverse_qa,
    gen_multihop_qa,
    paraphrase_question,
    split_edges,
    to_multiple_choice,
)
from .storage import graph_hash
from .templates import merged_registry, registry_fingerprint

log = logging.getLogger("kg2ft.pipeline")

SEPARATOR = "\n\n"
TRAIN_FILE = "train.jsonl"
MANIFEST_FILE = "manifest.json"
EVAL_FILES = {
    (FACT, "open"): "eval_fact_open.jsonl",
    (FACT, "mc"): "eval_fact_mc.jsonl",
    (INVERSE, "open"): "eval_inverse_open.jsonl",
    (INVERSE, "mc"): "eval_inverse_mc.jsonl",
    (MULTIHOP, "open"): "eval_multihop_open.jsonl",
    (MULTIHOP, "mc"): "eval_multihop_mc.jsonl",
}
ALL_FILES = [TRAIN_FILE, *EVAL_FILES.values(), MANIFEST_FILE]
PROMPT_FILES = ("rewrite_v1.txt", "topics_v1.txt", "paraphrase_v1.txt")

MANIFEST_FORMAT = "kg2ft-manifest"
MANIFEST_VERSION = 1


@dataclass(frozen=True)
class TrainingSample:
    context_text: str
    qa: QASample
    combined_text: str
    token_estimate: int
    center: str
    strategy: EncodingStrategy
    partition_index: int
    oversized: bool
    fallback: bool

    def to_record(self, seed: int) -> dict:
        return {
            "text": self.combined_text,
            "meta": {
                "center": self.center,
                "strategy": self.strategy.label,
                "source_edges": [list(e) for e in self.qa.source_edges],
                "task": self.qa.task,
                "partition_index": self.partition_index,
                "token_estimate": self.token_estimate,
                "oversized": self.oversized,
                "fallback": self.fallback,
                "seed": seed,
            },
        }


def combined_text(context: str, qa: QASample) -> str:
    return context + SEPARATOR + qa.question_text + "\n" + qa.answer_text


@dataclass
class _NodeOutput:
    training: list[TrainingSample] = field(default_factory=list)
    evals: dict[str, list[tuple[QASample, EncodedContext | None]]] = field(default_factory=dict)
    skipped: dict[str, int] = field(default_factory=dict)

    def skip(self, reason: str) -> None:
        self.skipped[reason] = self.skipped.get(reason, 0) + 1


def _train_qas(
    graph: KnowledgeGraph,
    enc: EncodedContext,
    relations: Mapping[str, RelationType] | None,
    tasks: tuple[str, ...],
) -> list[QASample]:
    out: list[QASample] = []
    for task in tasks:
        if task == FACT:
            out.extend(gen_fact_qa(graph, enc, relations))
        elif task == INVERSE:
            out.extend(gen_inverse_qa(graph, enc, relations))
    return out


def _effective_relations(graph: KnowledgeGraph, config: RunConfig) -> dict[str, RelationType]:
    """The graph's own relations, overridden by a template file if given."""
    effective = {rel.name: rel for rel in graph.relations()}
    if config.templates:
        overrides = merged_registry(config.templates)
        for name in effective:
            if name in overrides:
                effective[name] = overrides[name]
    return effective


class _Builder:
    def __init__(self, graph: KnowledgeGraph, config: RunConfig, llm: LlmClient):
        self.graph = graph
        self.config = config
        self.llm = llm
        self.relations = _effective_relations(graph, config)
        self.strategy = config.encoding
        self.budget = TokenBudget(config.t_max, config.chars_per_token)
        self.split: EdgeSplit | None = (
            split_edges(graph, config.split, config.seed) if config.split is not None else None
        )
        self.train_graph = graph.restricted(self.split.train_edges) if self.split else graph

    # -- per-node work (thread-safe: touches only immutable state + llm) --

    def node_output(self, center: str) -> _NodeOutput:
        try:
            if self.strategy.kind == "descriptors":
                return self._describe_node(center)
            return self._encode_node(center)
        except Kg2ftError as exc:
            if isinstance(exc, PipelineError):
                raise
            raise PipelineError(f"node {center!r}: {exc}", node=center) from exc

    def _describe_node(self, center: str) -> _NodeOutput:
        out = _NodeOutput()
        try:
            enc = encode_node_descriptors(self.train_graph, center, self.llm)
        except NoDescribableContent:
            out.skip("descriptors_no_content")
            return out
        self._attach_qa(out, enc, oversized=False)
        return out

    def _encode_node(self, center: str) -> _NodeOutput:
        out = _NodeOutput()
        context = k_hop_context(self.train_graph, center, self.config.k)
        if not context.edges:
            return out
        base_kind = self.strategy.base if self.strategy.kind == "summarized" else self.strategy.kind

        def worst_case(partition) -> str:
            best = ""
            for enc in encode_base(self.train_graph, partition, base_kind, self.relations):
                qas = _train_qas(self.train_graph, enc, self.relations, self.config.train_tasks)
                candidates = [combined_text(enc.text, qa) for qa in qas] or [enc.text]
                for cand in candidates:
                    if len(cand) > len(best):
                        best = cand
            return best

        partitions = fit_to_budget(worst_case, context, self.config.n_max, self.budget)
        for index, partition in enumerate(partitions):
            try:
                encs = encode_base(
                    self.train_graph, partition, base_kind, self.relations, partition_index=index
                )
                if self.strategy.kind == "summarized":
                    encs = [encode_summarized(enc, self.llm) for enc in encs]
                for enc in encs:
                    self._attach_qa(out, enc, oversized=partition.oversized)
            except Kg2ftError as exc:
                if isinstance(exc, PipelineError):
                    raise
                raise PipelineError(
                    f"node {center!r} partition {index}: {exc}", node=center, partition=index
                ) from exc
        return out

    def _attach_qa(self, out: _NodeOutput, enc: EncodedContext, oversized: bool) -> None:
        config = self.config
        wanted = set(config.train_tasks) | ({FACT, INVERSE} & set(config.tasks))
        for task in (FACT, INVERSE):
            if task not in wanted:
                continue
            samples = _train_qas(self.train_graph, enc, self.relations, (task,))
            for qa in samples:
                if task in config.train_tasks:
                    text = combined_text(enc.text, qa)
                    estimate = estimate_tokens(text, config.chars_per_token)
                    out.training.append(
                        TrainingSample(
                            context_text=enc.text,
                            qa=qa,
                            combined_text=text,
                            token_estimate=estimate,
                            center=enc.center,
                            strategy=enc.strategy,
                            partition_index=enc.partition_index,
                            oversized=oversized or estimate > config.t_max,
                            fallback=enc.fallback,
                        )
                    )
                if task in config.tasks:
                    out.evals.setdefault(task, []).append((qa, enc))

    # -- assembly ---------------------------------------------------------

    def run(self) -> tuple[list[TrainingSample], dict, dict[str, int]]:
        config = self.config
        nodes = self.train_graph.node_ids()
        if config.jobs == 1:
            outputs = [self.node_output(n) for n in nodes]
        else:
            with concurrent.futures.ThreadPoolExecutor(max_workers=config.jobs) as pool:
                outputs = list(pool.map(self.node_output, nodes))

        training: list[TrainingSample] = []
        evals: dict[str, list[tuple[QASample, EncodedContext | None]]] = {
            FACT: [], INVERSE: [], MULTIHOP: []
        }
        skipped: dict[str, int] = {}
        for out in outputs:
            training.extend(out.training)
            for task, pairs in out.evals.items():
                evals[task].extend(pairs)
            for reason, count in out.skipped.items():
                skipped[reason] = skipped.get(reason, 0) + count

        if MULTIHOP in config.tasks and self.split is not None:
            result = gen_multihop_qa(self.graph, self.split, self.relations)
            evals[MULTIHOP] = [(s, None) for s in result.samples]
            for reason, count in result.skipped.items():
                skipped[f"multihop_{reason}"] = count
        return training, evals, skipped


def _eval_record(
    sample: QASample,
    enc: EncodedContext | None,
    config: RunConfig,
    fmt: str,
) -> dict:
    question = sample.question_text
    if config.eval_include_context and enc is not None:
        question = enc.text + SEPARATOR + question
    record = {
        "question": question,
        "answer": sample.answer_text,
        "task": sample.task,
        "format": fmt,
        "meta": {
            "center": enc.center if enc is not None else None,
            "strategy": enc.strategy.label if enc is not None else None,
            "source_edges": [list(e) for e in sample.source_edges],
            "anchor": sample.anchor_node,
            "relation": sample.relation,
            "answer_side": sample.answer_side,
            "fallback": sample.fallback or (enc.fallback if enc is not None else False),
            "seed": config.seed,
        },
    }
    if fmt == "mc":
        record["options"] = list(sample.options)
        record["correct_index"] = sample.correct_index
        record["meta"].update(sample.seed_trace)
    return record


def _dump(record: dict) -> str:
    return json.dumps(record, ensure_ascii=False, sort_keys=True, separators=(",", ":"))


def _write_jsonl(path: Path, records: list[dict]) -> int:
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(_dump(record) + "\n")
    os.replace(tmp, path)
    return len(records)


def prompt_hashes() -> dict[str, str]:
    return {
        name: hashlib.sha256(load_prompt(name).encode("utf-8")).hexdigest()
        for name in PROMPT_FILES
    }


def build_dataset(
    graph: KnowledgeGraph,
    config: RunConfig,
    out_dir: str | Path,
    llm: LlmClient | None = None,
) -> dict:
    """Run the full build and write all output files; returns the manifest."""
    config.validate()
    if graph.num_edges == 0:
        raise PipelineError("graph has no edges; nothing to build")
    if llm is None:
        llm = LlmClient(
            make_backend(config.llm_backend),
            cache_dir=config.llm_cache,
            max_calls=config.llm_max_calls,
        )
    out_path = Path(out_dir)
    out_path.mkdir(parents=True, exist_ok=True)
    manifest_path = out_path / MANIFEST_FILE
    if manifest_path.exists():
        manifest_path.unlink()  # a run in progress must not look completed

    builder = _Builder(graph, config, llm)
    log.info("build started: %d nodes, %d edges, strategy=%s",
             graph.num_nodes, graph.num_edges, builder.strategy.label)
    training, evals, skipped = builder.run()

    counts: dict[str, int] = {}
    counts[TRAIN_FILE] = _write_jsonl(
        out_path / TRAIN_FILE, [t.to_record(config.seed) for t in training]
    )

    for task in (FACT, INVERSE, MULTIHOP):
        pairs = evals.get(task, [])
        if config.paraphrase_questions and pairs:
            pairs = [(paraphrase_question(s, llm), enc) for s, enc in pairs]
        open_records: list[dict] = []
        mc_records: list[dict] = []
        for sample, enc in pairs:
            if "open" in config.formats:
                open_records.append(_eval_record(sample, enc, config, "open"))
            if "mc" in config.formats:
                try:
                    mc = to_multiple_choice(sample, graph, seed=config.seed)
                except InsufficientDistractorPool:
                    key = f"mc_pool_{task}"
                    skipped[key] = skipped.get(key, 0) + 1
                    continue
                mc_records.append(_eval_record(mc, enc, config, "mc"))
        counts[EVAL_FILES[(task, "open")]] = _write_jsonl(
            out_path / EVAL_FILES[(task, "open")], open_records
        )
        counts[EVAL_FILES[(task, "mc")]] = _write_jsonl(
            out_path / EVAL_FILES[(task, "mc")], mc_records
        )

    manifest = {
        "format": MANIFEST_FORMAT,
        "version": MANIFEST_VERSION,
        "tool_version": __version__,
        "graph_hash": graph_hash(graph),
        "config": config.to_dict(include_execution=False),
        "templates_fingerprint": registry_fingerprint(builder.relations),
        "prompt_hashes": prompt_hashes(),
        "counts": counts,
        "skipped": dict(sorted(skipped.items())),
        "files": [name for name in ALL_FILES if name != MANIFEST_FILE],
    }
    with open(manifest_path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(manifest, ensure_ascii=False, sort_keys=True, indent=2) + "\n")
    log.info("build finished: %s", {k: v for k, v in counts.items()})
    return manifest


# -- stats ------------------------------------------------------------------


def _check_eval_record(record: dict, where: str, line: int) -> None:
    for key in ("question", "answer", "task", "format"):
        if not isinstance(record.get(key), str):
            raise MalformedSample(f"{where}:{line}: missing or non-string {key!r}", line)
    if record["format"] == "mc":
        options = record.get("options")
        if not isinstance(options, list) or len(options) != 5:
            raise MalformedSample(f"{where}:{line}: MC record needs exactly 5 options", line)
        if len(set(options)) != 5:
            raise MalformedSample(f"{where}:{line}: MC options must be distinct", line)
        index = record.get("correct_index")
        if not isinstance(index, int) or not 0 <= index < 5:
            raise MalformedSample(f"{where}:{line}: correct_index out of range", line)
        if options[index] != record["answer"]:
            raise MalformedSample(f"{where}:{line}: options[correct_index] != answer", line)
    elif record["format"] != "open":
        raise MalformedSample(f"{where}:{line}: unknown format {record['format']!r}", line)


def _read_jsonl(path: Path) -> list[dict]:
    records = []
    with open(path, encoding="utf-8") as fh:
        for line_number, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise MalformedSample(f"{path.name}:{line_number}: invalid JSON: {exc}", line_number) from exc
            if not isinstance(record, dict):
                raise MalformedSample(f"{path.name}:{line_number}: record must be an object", line_number)
            records.append(record)
    return records


def dataset_stats(target: str | Path) -> dict:
    """Validate an output directory (or one eval/training file) and report
    counts, a token-estimate histogram, and flag tallies."""
    path = Path(target)
    if path.is_dir():
        manifest = None
        manifest_path = path / MANIFEST_FILE
        if manifest_path.exists():
            manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
        files = [path / name for name in ALL_FILES if name != MANIFEST_FILE and (path / name).exists()]
    else:
        manifest = None
        files = [path]
    if not files:
        raise MalformedSample(f"no dataset files found under {path}")

    cpt = 4.0
    t_max = None
    if manifest and isinstance(manifest.get("config"), dict):
        cpt = float(manifest["config"].get("chars_per_token", 4.0))
        t_max = manifest["config"].get("t_max")

    counts: dict[str, int] = {}
    by_task_format: dict[str, int] = {}
    estimates: list[int] = []
    oversized = 0
    fallback = 0
    mc_count = 0
    for file_path in files:
        records = _read_jsonl(file_path)
        counts[file_path.name] = len(records)
        for line_number, record in enumerate(records, start=1):
            meta = record.get("meta")
            if "text" in record:
                if not isinstance(record["text"], str) or not record["text"]:
                    raise MalformedSample(
                        f"{file_path.name}:{line_number}: training text must be a non-empty string",
                        line_number,
                    )
                estimates.append(estimate_tokens(record["text"], cpt))
                key = "train"
            else:
                _check_eval_record(record, file_path.name, line_number)
                key = f"{record['task']}_{record['format']}"
                if record["format"] == "mc":
                    mc_count += 1
            by_task_format[key] = by_task_format.get(key, 0) + 1
            if isinstance(meta, dict):
                oversized += 1 if meta.get("oversized") else 0
                fallback += 1 if meta.get("fallback") else 0

    histogram: dict = {"bin_width": 0, "bins": [], "counts": []}
    percentiles = {}
    if estimates:
        top = max(estimates)
        width = max(1, -(-top // 16))
        edges = list(range(0, top + width, width))
        tallies = [0] * (len(edges))
        for value in estimates:
            tallies[min(value // width, len(edges) - 1)] += 1
        histogram = {"bin_width": width, "bins": edges, "counts": tallies}
        ordered = sorted(estimates)

        def pct(q: float) -> int:
            return ordered[min(len(ordered) - 1, int(q * len(ordered)))]

        percentiles = {
            "min": ordered[0],
            "p50": pct(0.50),
            "p95": pct(0.95),
            "p100": ordered[-1],
            "mean": round(sum(ordered) / len(ordered), 2),
        }

    if manifest:
        for name, expected in manifest.get("counts", {}).items():
            actual = counts.get(name)
            if actual is not None and actual != expected:
                raise MalformedSample(
                    f"{name}: manifest says {expected} records, file has {actual}"
                )

    return {
        "counts": counts,
        "by_task_format": dict(sorted(by_task_format.items())),
        "mc_count": mc_count,
        "token_histogram": histogram,
        "token_percentiles": percentiles,
        "token_budget": t_max,
        "oversized": oversized,
        "fallback": fallback,
    }
