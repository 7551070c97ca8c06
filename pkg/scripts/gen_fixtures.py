#!/usr/bin/env python3
"""Regenerate the committed test fixtures under tests/data/.

Everything here is seeded; rerunning the script reproduces the same files
byte for byte. Tests assert counts that this script derives, so fixture
changes must go through this script rather than hand edits.
"""

import json
import pathlib
import random

DATA = pathlib.Path(__file__).resolve().parent.parent / "tests" / "data"


def gen_umls_synth():
    """500 distinct typed triples over four clinical relations."""
    rng = random.Random(20240521)
    conditions = [f"Condition {i:03d}" for i in range(1, 111)]
    therapies = [f"Therapy {i:03d}" for i in range(1, 91)]
    triples = []
    seen = set()

    def emit(head, relation, tail):
        key = (head, relation, tail)
        if head != tail and key not in seen:
            seen.add(key)
            triples.append(key)
            return True
        return False

    while sum(1 for t in triples if t[1] == "may treat") < 200:
        emit(rng.choice(therapies), "may treat", rng.choice(conditions))
    for relation in ("may cause", "cause of", "risk factor of"):
        while sum(1 for t in triples if t[1] == relation) < 100:
            emit(rng.choice(conditions), relation, rng.choice(conditions))

    lines = ["# synthetic clinical triples: 500 rows over 4 relations"]
    lines += [f"{h}\t{r}\t{t}" for h, r, t in triples]
    (DATA / "umls_synth.tsv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    assert len(triples) == 500


def gen_hub():
    """A degree-300 hub plus small background component."""
    rng = random.Random(77)
    lines = ["# hub stress fixture: one node with 300 incident edges"]
    for i in range(1, 301):
        lines.append(f"Hub Therapy {i:03d}\tmay treat\tHub Condition")
    background = [f"Background Condition {i:02d}" for i in range(1, 31)]
    seen = set()
    while len(seen) < 45:
        h, t = rng.sample(background, 2)
        if (h, t) not in seen:
            seen.add((h, t))
            lines.append(f"{h}\tmay cause\t{t}")
    (DATA / "hub.tsv").write_text("\n".join(lines) + "\n", encoding="utf-8")


TOPICS = [
    "graph mining", "databases", "query optimization", "stream processing",
    "knowledge graphs", "entity resolution", "distributed systems",
    "machine learning", "data integration", "indexing",
]

AUTHORS = [
    "Alice Zhang", "Bruno Costa", "Chen Wei", "Dana Petrov", "Elif Demir",
    "Farid Khan", "Grace Okafor", "Hiro Tanaka", "Ines Moreau", "Jonas Berg",
    "Katya Ivanova", "Luis Ortega",
]

VENUES = ["VLDB", "SIGMOD", "ICDE", "EDBT"]


def gen_papers_synth():
    """50 paper records: 38 keepable, 12 dropped across four reasons."""
    rng = random.Random(90125)
    records = []
    for i in range(1, 39):
        topic_a, topic_b = rng.sample(TOPICS, 2)
        n_authors = rng.choice([2, 2, 3, 4])
        records.append(
            {
                "id": f"P{i:03d}",
                "title": f"Study {i:03d} on {topic_a}",
                "abstract": (
                    f"We investigate {topic_a} with techniques from {topic_b}. "
                    f"Experiments show consistent improvements on standard benchmarks."
                ),
                "venue": rng.choice(VENUES),
                "year": 2015 + (i % 8),
                "authors": rng.sample(AUTHORS, n_authors),
                "references": [],
            }
        )
    # sprinkle references: to earlier kept papers and some dangling ids
    for i, record in enumerate(records):
        if i >= 3 and rng.random() < 0.7:
            targets = rng.sample(records[:i], rng.choice([1, 2]))
            record["references"] = [t["id"] for t in targets]
        if rng.random() < 0.25:
            record["references"].append(f"X{rng.randint(100, 999)}")

    droppable = []
    base = {
        "abstract": "A short abstract about benchmarks.",
        "venue": "VLDB",
        "year": 2020,
        "authors": ["Alice Zhang", "Bruno Costa"],
        "references": ["P001"],
    }
    for i in range(4):  # single author
        droppable.append({**base, "id": f"D1{i:02d}", "title": f"Solo work {i}", "authors": ["Chen Wei"]})
    for i in range(3):  # missing venue
        droppable.append({**base, "id": f"D2{i:02d}", "title": f"No venue {i}", "venue": ""})
    for i in range(3):  # missing abstract
        droppable.append({**base, "id": f"D3{i:02d}", "title": f"No abstract {i}", "abstract": ""})
    for i in range(2):  # missing title
        droppable.append({**base, "id": f"D4{i:02d}", "title": ""})

    rows = records + droppable
    rng.shuffle(rows)
    with (DATA / "papers_synth.jsonl").open("w", encoding="utf-8") as handle:
        for row in rows:
            handle.write(json.dumps(row, sort_keys=True, ensure_ascii=False) + "\n")
    assert len(rows) == 50


if __name__ == "__main__":
    DATA.mkdir(parents=True, exist_ok=True)
    gen_umls_synth()
    gen_hub()
    gen_papers_synth()
    print(f"fixtures written to {DATA}")
