import json
from collections import Counter
from pathlib import Path

import pytest

from kg2ft.config import RunConfig
from kg2ft.errors import ConfigError, MalformedSample, PipelineError
from kg2ft.graph import Edge
from kg2ft.ingest import ingest_papers, ingest_triples
from kg2ft.llm import DisabledBackend, LlmClient, StubBackend
from kg2ft.pipeline import ALL_FILES, build_dataset, dataset_stats
from kg2ft.qa import split_edges

from conftest import build_graph, make_relation


def read_lines(out_dir, name):
    return [json.loads(line) for line in (Path(out_dir) / name).read_text().splitlines()]


def read_bytes(out_dir):
    return {name: (Path(out_dir) / name).read_bytes() for name in ALL_FILES}


@pytest.fixture(scope="module")
def umls_graph(data_dir):
    graph, _ = ingest_triples(data_dir / "umls_synth.tsv")
    return graph


def test_edge_coverage_both_directions(umls_graph, tmp_path):
    config = RunConfig(strategy="triples", tasks=("fact", "inverse"), seed=7)
    manifest = build_dataset(umls_graph, config, tmp_path)
    assert manifest["counts"]["eval_fact_open.jsonl"] == 500
    assert manifest["counts"]["eval_inverse_open.jsonl"] == 500
    all_edges = Counter(umls_graph.edges())
    for name in ("eval_fact_open.jsonl", "eval_inverse_open.jsonl"):
        covered = Counter(
            Edge(*e) for row in read_lines(tmp_path, name) for e in row["meta"]["source_edges"]
        )
        assert covered == all_edges
    # training covers every edge at least once
    train_edges = {
        Edge(*e) for row in read_lines(tmp_path, "train.jsonl") for e in row["meta"]["source_edges"]
    }
    assert train_edges == set(all_edges)


def test_all_files_always_written(umls_graph, tmp_path):
    config = RunConfig(strategy="triples", tasks=("fact",), formats=("open",))
    build_dataset(umls_graph, config, tmp_path)
    for name in ALL_FILES:
        assert (tmp_path / name).exists(), name
    assert read_lines(tmp_path, "eval_inverse_open.jsonl") == []
    assert read_lines(tmp_path, "eval_fact_mc.jsonl") == []


def test_runs_are_byte_identical(umls_graph, tmp_path):
    config = RunConfig(strategy="groups", tasks=("fact", "inverse"), seed=7)
    build_dataset(umls_graph, config, tmp_path / "a")
    build_dataset(umls_graph, config, tmp_path / "b")
    assert read_bytes(tmp_path / "a") == read_bytes(tmp_path / "b")


def test_jobs_do_not_change_bytes(umls_graph, tmp_path):
    base = RunConfig(strategy="groups", tasks=("fact", "inverse"), seed=7, jobs=1)
    build_dataset(umls_graph, base, tmp_path / "j1")
    build_dataset(umls_graph, base.with_overrides(jobs=8), tmp_path / "j8")
    assert read_bytes(tmp_path / "j1") == read_bytes(tmp_path / "j8")


def test_manifest_counts_match_lines(umls_graph, tmp_path):
    config = RunConfig(strategy="triples", seed=3)
    manifest = build_dataset(umls_graph, config, tmp_path)
    for name, count in manifest["counts"].items():
        assert count == len(read_lines(tmp_path, name)), name
    assert manifest["graph_hash"]
    assert manifest["tool_version"]
    assert manifest["templates_fingerprint"]
    for execution_key in ("jobs", "llm_cache", "llm_max_calls"):
        assert execution_key not in manifest["config"]


def test_rebuild_from_manifest_config(umls_graph, tmp_path):
    config = RunConfig(strategy="groups", tasks=("fact", "inverse"), seed=5, split=0.7)
    manifest = build_dataset(umls_graph, config, tmp_path / "first")
    resurrected = RunConfig.from_dict(manifest["config"])
    build_dataset(umls_graph, resurrected, tmp_path / "second")
    assert read_bytes(tmp_path / "first") == read_bytes(tmp_path / "second")


def test_crashed_run_leaves_no_manifest(umls_graph, tmp_path):
    build_dataset(umls_graph, RunConfig(strategy="triples"), tmp_path)
    assert (tmp_path / "manifest.json").exists()
    # a relation with no question template makes QA generation fail mid-run
    rel = make_relation("r", question_forward=None)
    bad_graph = build_graph([("a", "r", "b")], relations=[rel])
    with pytest.raises(PipelineError) as err:
        build_dataset(bad_graph, RunConfig(strategy="triples", train_tasks=("fact",)), tmp_path)
    assert not (tmp_path / "manifest.json").exists()
    assert err.value.node is not None


def test_empty_graph_rejected(tmp_path):
    graph = build_graph([])
    with pytest.raises(PipelineError):
        build_dataset(graph, RunConfig(), tmp_path)


def test_multihop_requires_split():
    with pytest.raises(ConfigError):
        RunConfig(tasks=("fact", "multihop")).validate()


def test_split_leak_freedom(umls_graph, tmp_path):
    config = RunConfig(
        strategy="triples", tasks=("fact", "inverse", "multihop"), split=0.7, seed=13
    )
    manifest = build_dataset(umls_graph, config, tmp_path)
    split = split_edges(umls_graph, 0.7, seed=13)
    train_sources = {
        Edge(*e) for row in read_lines(tmp_path, "train.jsonl") for e in row["meta"]["source_edges"]
    }
    assert not train_sources & split.test_edges
    assert train_sources == split.train_edges  # full coverage of the training half
    for name in ("eval_fact_open.jsonl", "eval_inverse_open.jsonl"):
        eval_sources = {
            Edge(*e) for row in read_lines(tmp_path, name) for e in row["meta"]["source_edges"]
        }
        assert not eval_sources & split.test_edges
    multihop_sources = {
        Edge(*e)
        for row in read_lines(tmp_path, "eval_multihop_open.jsonl")
        for e in row["meta"]["source_edges"]
    }
    assert multihop_sources <= split.test_edges
    assert manifest["counts"]["eval_multihop_open.jsonl"] > 0


def test_budget_respected_on_hub(data_dir, tmp_path):
    graph, _ = ingest_triples(data_dir / "hub.tsv")
    config = RunConfig(strategy="adjacency", tasks=("fact",), formats=("open",), t_max=256)
    build_dataset(graph, config, tmp_path)
    rows = read_lines(tmp_path, "train.jsonl")
    assert rows
    for row in rows:
        meta = row["meta"]
        if not meta["oversized"]:
            assert meta["token_estimate"] <= 256
    hub_partitions = {
        row["meta"]["partition_index"] for row in rows if row["meta"]["center"] == "Hub Condition"
    }
    assert len(hub_partitions) >= -(-300 // 29)  # ceil(300 / (n_max - 1))
    stats = dataset_stats(tmp_path)
    assert stats["oversized"] == 0
    assert stats["token_percentiles"]["p100"] <= 256


def test_combined_text_shape(umls_graph, tmp_path):
    build_dataset(umls_graph, RunConfig(strategy="triples"), tmp_path)
    row = read_lines(tmp_path, "train.jsonl")[0]
    context, rest = row["text"].split("\n\n", 1)
    question, answer = rest.split("\n", 1)
    assert context.endswith(".")
    assert question.endswith("?")
    assert answer


def test_train_tasks_can_include_inverse(umls_graph, tmp_path):
    config = RunConfig(strategy="triples", train_tasks=("fact", "inverse"), tasks=("fact",))
    manifest = build_dataset(umls_graph, config, tmp_path)
    assert manifest["counts"]["train.jsonl"] == 1000
    tasks = {row["meta"]["task"] for row in read_lines(tmp_path, "train.jsonl")}
    assert tasks == {"fact", "inverse"}


def test_eval_include_context_prefixes_question(umls_graph, tmp_path):
    config = RunConfig(strategy="triples", tasks=("fact",), formats=("open",), eval_include_context=True)
    build_dataset(umls_graph, config, tmp_path)
    train_rows = read_lines(tmp_path, "train.jsonl")
    eval_rows = read_lines(tmp_path, "eval_fact_open.jsonl")
    assert eval_rows[0]["question"].count("\n\n") == 1
    context, question = eval_rows[0]["question"].split("\n\n")
    assert context.endswith(".")
    assert question.endswith("?")
    assert train_rows[0]["text"].startswith(context)


SUMMARY_FIXTURES = [
    (
        "Insulin human, rDNA origin",
        "Insulin therapy from recombinant DNA may treat low insulin levels (hypoinsulinaemia).",
    ),
]


def _rdna_graph():
    return build_graph(
        [("Insulin human, rDNA origin", "may treat", "Hypoinsulinaemia")],
        relations=None,
    )


def test_summarized_strategy_applies_stub_mapping(tmp_path):
    graph = build_graph([("Insulin human, rDNA origin", "may treat", "Hypoinsulinaemia")])
    llm = LlmClient(StubBackend(fixtures=SUMMARY_FIXTURES))
    config = RunConfig(strategy="summarized", summarize_base="groups", tasks=("fact",), formats=("open",))
    build_dataset(graph, config, tmp_path, llm=llm)
    rows = read_lines(tmp_path, "train.jsonl")
    assert rows
    for row in rows:
        assert "Insulin therapy from recombinant DNA" in row["text"]
        assert row["meta"]["strategy"] == "summarized:groups"
        assert row["meta"]["fallback"] is False
        assert row["meta"]["source_edges"] == [
            ["Insulin human, rDNA origin", "may treat", "Hypoinsulinaemia"]
        ]


def test_summarized_disabled_backend_falls_back(umls_graph, tmp_path):
    config_base = RunConfig(strategy="groups", tasks=("fact",), formats=("open",))
    build_dataset(umls_graph, config_base, tmp_path / "base")
    config_summary = config_base.with_overrides(strategy="summarized", llm_backend="off")
    build_dataset(umls_graph, config_summary, tmp_path / "summary")
    base_rows = read_lines(tmp_path / "base", "train.jsonl")
    summary_rows = read_lines(tmp_path / "summary", "train.jsonl")
    assert len(base_rows) == len(summary_rows)
    for base_row, summary_row in zip(base_rows, summary_rows):
        assert summary_row["meta"]["fallback"] is True
        assert summary_row["text"] == base_row["text"]


def test_warm_cache_measures_zero_backend_calls(umls_graph, tmp_path):
    config = RunConfig(strategy="summarized", tasks=("fact",), formats=("open",), seed=7)
    cache = tmp_path / "cache"

    cold_backend = StubBackend()
    build_dataset(umls_graph, config, tmp_path / "cold", llm=LlmClient(cold_backend, cache_dir=cache))
    assert cold_backend.calls > 0

    warm_backend = StubBackend()
    build_dataset(umls_graph, config, tmp_path / "warm", llm=LlmClient(warm_backend, cache_dir=cache))
    assert warm_backend.calls == 0
    assert read_bytes(tmp_path / "cold") == read_bytes(tmp_path / "warm")


def test_descriptors_strategy_on_papers(data_dir, tmp_path):
    graph, _ = ingest_papers(data_dir / "papers_synth.jsonl")
    config = RunConfig(strategy="descriptors", tasks=("fact", "inverse"), formats=("open",))
    manifest = build_dataset(graph, config, tmp_path, llm=LlmClient(StubBackend()))
    assert manifest["counts"]["train.jsonl"] > 0
    rows = read_lines(tmp_path, "train.jsonl")
    assert all(row["meta"]["strategy"] == "descriptors" for row in rows)


def test_paraphrase_pass_rewrites_eval_questions(tmp_path):
    graph = build_graph([("insulin", "may treat", "diabetes")])
    fixtures = [("What may treat diabetes?", "Name a therapy for diabetes.")]
    llm = LlmClient(StubBackend(fixtures=fixtures))
    config = RunConfig(
        strategy="triples", tasks=("fact",), formats=("open",), paraphrase_questions=True
    )
    build_dataset(graph, config, tmp_path, llm=llm)
    (row,) = read_lines(tmp_path, "eval_fact_open.jsonl")
    assert row["question"] == "Name a therapy for diabetes."
    # the training record keeps the canonical question
    train_row = read_lines(tmp_path, "train.jsonl")[0]
    assert "What may treat diabetes?" in train_row["text"]


def test_mc_pool_skips_are_counted(tmp_path):
    # only two condition labels exist, so no MC set can find 4 distractors
    graph = build_graph([("a", "may treat", "b")])
    config = RunConfig(strategy="triples", tasks=("fact",), formats=("open", "mc"))
    manifest = build_dataset(graph, config, tmp_path)
    assert manifest["counts"]["eval_fact_mc.jsonl"] == 0
    assert manifest["skipped"]["mc_pool_fact"] == 1


# -- stats ------------------------------------------------------------------


def test_stats_counts_and_validation(umls_graph, tmp_path):
    build_dataset(umls_graph, RunConfig(strategy="triples"), tmp_path)
    stats = dataset_stats(tmp_path)
    assert stats["by_task_format"]["train"] == 500
    assert stats["by_task_format"]["fact_mc"] == 500
    assert stats["mc_count"] == 1000
    assert stats["token_histogram"]["counts"]
    assert sum(stats["token_histogram"]["counts"]) == 500


def test_stats_rejects_four_option_mc(tmp_path):
    record = {
        "question": "q?",
        "answer": "a",
        "task": "fact",
        "format": "mc",
        "options": ["a", "b", "c", "d"],
        "correct_index": 0,
        "meta": {},
    }
    path = tmp_path / "eval_fact_mc.jsonl"
    path.write_text(json.dumps(record) + "\n")
    with pytest.raises(MalformedSample) as err:
        dataset_stats(path)
    assert err.value.line_number == 1


def test_stats_rejects_manifest_count_mismatch(umls_graph, tmp_path):
    build_dataset(umls_graph, RunConfig(strategy="triples"), tmp_path)
    path = tmp_path / "train.jsonl"
    lines = path.read_text().splitlines()
    path.write_text("\n".join(lines[:-1]) + "\n")
    with pytest.raises(MalformedSample):
        dataset_stats(tmp_path)


def test_stats_rejects_bad_json(tmp_path):
    path = tmp_path / "train.jsonl"
    path.write_text('{"text": "ok", "meta": {}}\nnot json\n')
    with pytest.raises(MalformedSample) as err:
        dataset_stats(path)
    assert err.value.line_number == 2


# -- config -----------------------------------------------------------------


def test_config_round_trip():
    config = RunConfig(strategy="summarized", summarize_base="adjacency", split=0.7,
                       tasks=("fact", "inverse", "multihop"), seed=9, jobs=4)
    assert RunConfig.from_dict(config.to_dict()) == config


def test_config_rejects_unknown_keys():
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"t_max": 256, "wat": 1})


def test_config_rejects_bad_values():
    for payload in (
        {"k": 0},
        {"t_max": 16},
        {"strategy": "mystery"},
        {"tasks": ["fact", "wat"]},
        {"formats": []},
        {"split": 1.5},
        {"llm_backend": "carrier-pigeon"},
        {"train_tasks": ["multihop"]},
    ):
        with pytest.raises(ConfigError):
            RunConfig.from_dict(payload)
