"""Acceptance suite: one test per criterion, one pass/fail line each
(run with `pytest tests/test_acceptance.py -v`).

Everything here runs hermetically: shipped fixtures, stub or disabled
LLM backend, no network.
"""

import json
import time
from collections import Counter
from pathlib import Path

import pytest

from kg2ft.cli import main
from kg2ft.config import RunConfig
from kg2ft.errors import Kg2ftError
from kg2ft.evalharness import reference_responder, score_mc, score_token_f1
from kg2ft.graph import Edge, k_hop_context
from kg2ft.ingest import ingest_triples
from kg2ft.llm import LlmClient, StubBackend
from kg2ft.partition import partition_context
from kg2ft.pipeline import ALL_FILES, build_dataset
from kg2ft.qa import split_edges

from oracles import edge_multiset, nx_within_two_hops, token_oracle

DATA = Path(__file__).parent / "data"
UMLS = DATA / "umls_synth.tsv"
HUB = DATA / "hub.tsv"


def note(line: str) -> None:
    print(line)


def read_rows(path: Path) -> list[dict]:
    return [json.loads(line) for line in path.read_text().splitlines()]


def out_bytes(out_dir: Path) -> dict[str, bytes]:
    return {name: (out_dir / name).read_bytes() for name in ALL_FILES}


def test_a1_edge_coverage(tmp_path):
    """A1: 500-edge fixture, triples strategy -> exactly 500 fact + 500
    inverse open samples, every edge covered both ways, in under 10 s."""
    graph_path = tmp_path / "g.kgz"
    out_dir = tmp_path / "d"
    assert main(["ingest", "--format", "triples", "--input", str(UMLS),
                 "--out", str(graph_path)]) == 0
    started = time.perf_counter()
    assert main(["build", "--graph", str(graph_path), "--strategy", "triples",
                 "--tasks", "fact,inverse", "--out", str(out_dir)]) == 0
    elapsed = time.perf_counter() - started

    graph, _ = ingest_triples(UMLS)
    assert graph.num_edges == 500
    fact_rows = read_rows(out_dir / "eval_fact_open.jsonl")
    inverse_rows = read_rows(out_dir / "eval_inverse_open.jsonl")
    assert len(fact_rows) == 500, f"expected 500 fact samples, got {len(fact_rows)}"
    assert len(inverse_rows) == 500, f"expected 500 inverse samples, got {len(inverse_rows)}"
    every_edge = Counter(graph.edges())
    for rows in (fact_rows, inverse_rows):
        covered = Counter(Edge(*e) for row in rows for e in row["meta"]["source_edges"])
        assert covered == every_edge, "each edge must be covered exactly once per direction"
    assert elapsed < 10.0, f"build took {elapsed:.2f}s, budget is 10s"
    note(f"A1 PASS: 500 fact + 500 inverse open samples, both directions covered, {elapsed:.2f}s")


def test_a2_token_budget(tmp_path):
    """A2: t_max=256 on the degree-300 hub -> all non-flagged samples fit,
    the hub splits into >= ceil(300/(n_max-1)) partitions, and partitions
    exactly cover the context edge multiset."""
    graph, _ = ingest_triples(HUB)
    config = RunConfig(strategy="adjacency", tasks=("fact",), formats=("open",), t_max=256)
    build_dataset(graph, config, tmp_path)

    rows = read_rows(tmp_path / "train.jsonl")
    assert rows
    over_budget = [
        row for row in rows
        if not row["meta"]["oversized"] and token_oracle(row["text"]) > 256
    ]
    assert not over_budget, f"{len(over_budget)} non-flagged samples exceed 256 tokens"

    hub_partitions = {
        row["meta"]["partition_index"] for row in rows if row["meta"]["center"] == "Hub Condition"
    }
    needed = -(-300 // (config.n_max - 1))
    assert len(hub_partitions) >= needed, (
        f"hub produced {len(hub_partitions)} partitions, needs >= {needed}"
    )

    context = k_hop_context(graph, "Hub Condition", config.k)
    partitions = partition_context(context, config.n_max)
    assert edge_multiset(partitions) == Counter(context.edges), "partitions must cover context edges exactly once"
    note(f"A2 PASS: 0 budget violations, hub split into {len(hub_partitions)} partitions (>= {needed}), multiset oracle equal")


def test_a3_determinism(tmp_path):
    """A3: two full ingest->build runs (seed 7, stub backend, warm cache)
    are byte-identical, and --jobs 1 vs --jobs 8 are byte-identical."""
    cache = tmp_path / "cache"
    graphs = []
    for name in ("a", "b"):
        graph_path = tmp_path / f"{name}.kgz"
        assert main(["ingest", "--format", "triples", "--input", str(UMLS),
                     "--out", str(graph_path)]) == 0
        graphs.append(graph_path)
    assert graphs[0].read_bytes() == graphs[1].read_bytes(), "ingest must be byte-deterministic"

    def build(graph_path: Path, out_dir: Path, jobs: int) -> None:
        assert main(["build", "--graph", str(graph_path), "--strategy", "summarized",
                     "--tasks", "fact,inverse", "--seed", "7",
                     "--llm-backend", "stub", "--llm-cache", str(cache),
                     "--jobs", str(jobs), "--out", str(out_dir)]) == 0

    build(graphs[0], tmp_path / "warmup", 1)  # populate the cache
    build(graphs[0], tmp_path / "run1", 1)
    build(graphs[1], tmp_path / "run2", 1)
    assert out_bytes(tmp_path / "run1") == out_bytes(tmp_path / "run2"), "warm-cache runs differ"

    build(graphs[0], tmp_path / "jobs1", 1)
    build(graphs[0], tmp_path / "jobs8", 8)
    assert out_bytes(tmp_path / "jobs1") == out_bytes(tmp_path / "jobs8"), "--jobs changed bytes"
    assert out_bytes(tmp_path / "run1") == out_bytes(tmp_path / "jobs8")
    note("A3 PASS: byte-identical across repeat runs and --jobs 1 vs 8 (seed 7, stub, warm cache)")


def test_a4_leak_freedom(tmp_path):
    """A4: over 20 seeds at split 0.7: no training sample sources a test
    edge; every multihop answer edge is a test edge whose endpoints are
    <= 2 hops apart in the training graph (independent BFS oracle)."""
    graph, _ = ingest_triples(UMLS)
    violations = 0
    for seed in range(20):
        out_dir = tmp_path / f"seed{seed}"
        config = RunConfig(
            strategy="triples", tasks=("fact", "inverse", "multihop"),
            formats=("open",), split=0.7, seed=seed,
        )
        build_dataset(graph, config, out_dir)
        split = split_edges(graph, 0.7, seed=seed)
        train_triples = [(e.head, e.relation, e.tail) for e in split.train_edges]

        train_sources = {
            Edge(*e)
            for row in read_rows(out_dir / "train.jsonl")
            for e in row["meta"]["source_edges"]
        }
        violations += len(train_sources & split.test_edges)

        multihop_rows = read_rows(out_dir / "eval_multihop_open.jsonl")
        assert multihop_rows, f"seed {seed}: no multihop questions generated"
        for row in multihop_rows:
            for head, relation, tail in row["meta"]["source_edges"]:
                edge = Edge(head, relation, tail)
                if edge not in split.test_edges:
                    violations += 1
                if not nx_within_two_hops(train_triples, head, tail):
                    violations += 1
    assert violations == 0, f"{violations} leak-freedom violations over 20 seeds"
    note("A4 PASS: 0 leak violations over 20 seeds (train/test disjoint, 2-hop oracle satisfied)")


@pytest.fixture(scope="module")
def mc_build(tmp_path_factory):
    out_dir = tmp_path_factory.mktemp("mc_build")
    graph, _ = ingest_triples(UMLS)
    config = RunConfig(
        strategy="triples", tasks=("fact", "inverse", "multihop"),
        formats=("open", "mc"), split=0.7, seed=7,
    )
    build_dataset(graph, config, out_dir)
    return graph, out_dir


def test_a5_mc_well_formedness(mc_build):
    """A5: every MC sample has 5 distinct options, one correct, same-type
    distractors, none of which is a valid answer in the full graph."""
    graph, out_dir = mc_build
    type_of_label = {node.label: node.node_type for node in graph.nodes()}
    checked = 0
    for name in ("eval_fact_mc.jsonl", "eval_inverse_mc.jsonl", "eval_multihop_mc.jsonl"):
        for row in read_rows(out_dir / name):
            options = row["options"]
            assert len(options) == 5 and len(set(options)) == 5
            assert options[row["correct_index"]] == row["answer"]
            meta = row["meta"]
            if meta["answer_side"] == "heads":
                valid_nodes = graph.heads_for(meta["relation"], meta["anchor"])
            else:
                valid_nodes = graph.tails_for(meta["relation"], meta["anchor"])
            valid_labels = {graph.label_of(n) for n in valid_nodes}
            answer_type = type_of_label[row["answer"]]
            for index, option in enumerate(options):
                if index == row["correct_index"]:
                    continue
                assert option not in valid_labels, (
                    f"{name}: distractor {option!r} is a valid answer for {row['question']!r}"
                )
                assert type_of_label[option] == answer_type, (
                    f"{name}: distractor {option!r} type-mismatches answer {row['answer']!r}"
                )
            checked += 1
    assert checked > 0
    note(f"A5 PASS: {checked} MC samples all well-formed (5 distinct options, typed true-negative distractors)")


def test_a6_harness_calibration(mc_build, tmp_path):
    """A6: gold accuracy 1.000 on every MC set; seeded random responder
    0.200 +/- 0.020 on >= 5000 MC questions; gold token-F1 1.000."""
    _, out_dir = mc_build
    for name in ("eval_fact_mc.jsonl", "eval_inverse_mc.jsonl", "eval_multihop_mc.jsonl"):
        rows = read_rows(out_dir / name)
        if not rows:
            continue
        report = score_mc(rows, reference_responder("gold", rows))
        assert report.summary["accuracy"] == 1.0, f"gold accuracy != 1.0 on {name}"

    # big synthetic build for the binomial bound
    lines = [f"h{i:04d}\tmay treat\tt{i:04d}" for i in range(2600)]
    big_graph, _ = ingest_triples(lines)
    big_out = tmp_path / "big"
    config = RunConfig(strategy="triples", tasks=("fact", "inverse"), formats=("mc",))
    build_dataset(big_graph, config, big_out)
    mc_rows = read_rows(big_out / "eval_fact_mc.jsonl") + read_rows(big_out / "eval_inverse_mc.jsonl")
    assert len(mc_rows) >= 5000, f"only {len(mc_rows)} MC questions generated"
    random_report = score_mc(mc_rows, reference_responder("random", mc_rows, seed=7))
    accuracy = random_report.summary["accuracy"]
    assert abs(accuracy - 0.2) <= 0.020, f"random accuracy {accuracy:.4f} outside 0.200 +/- 0.020"

    for name in ("eval_fact_open.jsonl", "eval_inverse_open.jsonl", "eval_multihop_open.jsonl"):
        rows = read_rows(out_dir / name)
        if not rows:
            continue
        report = score_token_f1(rows, reference_responder("gold", rows))
        assert report.summary["f1"] == 1.0, f"gold token-F1 != 1.0 on {name}"
    note(f"A6 PASS: gold MC 1.000 everywhere, random {accuracy:.4f} on {len(mc_rows)} MC, gold token-F1 1.000")


A7_FIXTURES = [
    ("Insulin human, rDNA origin may treat",
     "Insulin therapy from recombinant DNA may treat low insulin levels (hypoinsulinaemia)."),
    ("Hypoinsulinaemia is treated with",
     "Low insulin levels (hypoinsulinaemia) can be helped by insulin therapy from recombinant DNA."),
    ("rDNA may cause",
     "Recombinant DNA may cause an immune response."),
]
A7_PHRASES = [
    "recombinant DNA",
    "low insulin levels (hypoinsulinaemia)",
    "Insulin therapy from recombinant DNA",
]


def test_a7_summarization_contract(tmp_path):
    """A7: stub replays the reference rewrites -> emitted texts contain the
    mapped phrases with source_edges intact; with the backend disabled,
    100% fallback samples equal to their base encodings."""
    lines = [
        "Insulin human, rDNA origin\tmay treat\tHypoinsulinaemia",
        "rDNA\tmay cause\tImmune response",
    ]
    graph, _ = ingest_triples(lines)
    config = RunConfig(strategy="summarized", summarize_base="groups",
                       tasks=("fact", "inverse"), formats=("open",))
    llm = LlmClient(StubBackend(fixtures=A7_FIXTURES))
    build_dataset(graph, config, tmp_path / "mapped", llm=llm)
    rows = read_rows(tmp_path / "mapped" / "train.jsonl")
    assert rows
    corpus = "\n".join(row["text"] for row in rows)
    for phrase in A7_PHRASES:
        assert phrase.lower() in corpus.lower(), f"mapped phrase missing: {phrase!r}"
    source_edges = {Edge(*e) for row in rows for e in row["meta"]["source_edges"]}
    assert source_edges == set(graph.edges()), "source_edges metadata must be preserved exactly"

    base_config = RunConfig(strategy="groups", tasks=("fact", "inverse"), formats=("open",))
    build_dataset(graph, base_config, tmp_path / "base")
    off_config = config.with_overrides(llm_backend="off")
    build_dataset(graph, off_config, tmp_path / "off")
    base_rows = read_rows(tmp_path / "base" / "train.jsonl")
    off_rows = read_rows(tmp_path / "off" / "train.jsonl")
    assert len(off_rows) == len(base_rows) > 0
    for base_row, off_row in zip(base_rows, off_rows):
        assert off_row["meta"]["fallback"] is True, "disabled backend must flag fallback"
        assert off_row["text"] == base_row["text"], "fallback text must equal the base encoding"
    note(f"A7 PASS: all mapped phrases present with exact source_edges; disabled backend 100% fallback == base ({len(off_rows)} samples)")


def test_a8_split_arithmetic():
    """A8: 100 edges at ratio 0.7 -> exactly 70/30, disjoint union,
    deterministic per seed."""
    lines = [f"a{i:03d}\tmay cause\tb{i:03d}" for i in range(100)]
    graph, _ = ingest_triples(lines)
    for seed in range(10):
        split = split_edges(graph, 0.7, seed=seed)
        assert len(split.train_edges) == 70
        assert len(split.test_edges) == 30
        assert not split.train_edges & split.test_edges
        assert split.train_edges | split.test_edges == set(graph.edges())
        again = split_edges(graph, 0.7, seed=seed)
        assert (again.train_edges, again.test_edges) == (split.train_edges, split.test_edges)
    note("A8 PASS: 70/30 exact, disjoint union, deterministic across 10 seeds")
