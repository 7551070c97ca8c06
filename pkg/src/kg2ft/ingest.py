"""Readers that turn raw inputs into a KnowledgeGraph.

Two formats: tab-separated triples and paper records (JSON lines). Both
emit an IngestReport whose counts conserve rows: every data row read is
either kept, dropped for a counted reason, or malformed.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

from .errors import MalformedInput
from .graph import Edge, KnowledgeGraph, Node, RelationType
from .templates import default_registry, generic_relation

_WS = re.compile(r"\s+")

RAISE = "raise"
SKIP = "skip"


@dataclass
class IngestReport:
    """Bookkeeping for one ingest run.

    dropped counts parsed-but-excluded rows per reason; dropped_edges
    counts derived edges (not rows) that were discarded, currently only
    dangling citations.
    """

    rows_read: int = 0
    rows_kept: int = 0
    rows_malformed: int = 0
    dropped: dict[str, int] = field(default_factory=dict)
    dropped_edges: dict[str, int] = field(default_factory=dict)
    nodes_created: int = 0
    edges_created: int = 0

    def drop(self, reason: str) -> None:
        self.dropped[reason] = self.dropped.get(reason, 0) + 1

    def drop_edge(self, reason: str) -> None:
        self.dropped_edges[reason] = self.dropped_edges.get(reason, 0) + 1

    @property
    def conserved(self) -> bool:
        return self.rows_read == self.rows_kept + self.rows_malformed + sum(self.dropped.values())

    def to_dict(self) -> dict:
        return {
            "rows_read": self.rows_read,
            "rows_kept": self.rows_kept,
            "rows_malformed": self.rows_malformed,
            "dropped": dict(sorted(self.dropped.items())),
            "dropped_edges": dict(sorted(self.dropped_edges.items())),
            "nodes_created": self.nodes_created,
            "edges_created": self.edges_created,
        }


def normalize_label(raw: str) -> str:
    """Trim and collapse internal whitespace runs to single spaces."""
    return _WS.sub(" ", raw.strip())


def _iter_lines(source: str | Path | Iterable[str]) -> Iterator[str]:
    if isinstance(source, (str, Path)):
        with open(source, "r", encoding="utf-8") as handle:
            yield from handle
    else:
        yield from source


def _as_registry(registry: dict[str, RelationType] | None) -> dict[str, RelationType]:
    # None means the shipped templates; pass {} to force generic ones
    if registry is None:
        return dict(default_registry())
    return dict(registry)


def ingest_triples(
    source: str | Path | Iterable[str],
    relations: Iterable[str] | None = None,
    registry: dict[str, RelationType] | None = None,
    on_malformed: str = RAISE,
) -> tuple[KnowledgeGraph, IngestReport]:
    """Read head<TAB>relation<TAB>tail rows into a graph.

    Node ids are the whitespace-normalized labels themselves. Lines that
    are blank or start with '#' are ignored entirely. `relations`, when
    given, allow-lists relation names; rows with other relations are
    dropped and counted. Unregistered relations get generic templates.
    on_malformed: "raise" aborts on the first bad row, "skip" counts it.
    """
    if on_malformed not in (RAISE, SKIP):
        raise ValueError(f"on_malformed must be 'raise' or 'skip', got {on_malformed!r}")
    allow = None if relations is None else {normalize_label(r) for r in relations}
    registry = _as_registry(registry)
    graph = KnowledgeGraph()
    report = IngestReport()
    known_relations: set[str] = set()
    seen_nodes: set[str] = set()

    for line_number, raw in enumerate(_iter_lines(source), start=1):
        line = raw.rstrip("\n").rstrip("\r")
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        report.rows_read += 1
        parts = line.split("\t")
        fields = [normalize_label(p) for p in parts]
        if len(fields) != 3 or not all(fields):
            report.rows_malformed += 1
            if on_malformed == RAISE:
                raise MalformedInput(
                    f"line {line_number}: expected head<TAB>relation<TAB>tail, got {line!r}",
                    line_number=line_number,
                )
            continue
        head, relation, tail = fields
        if allow is not None and relation not in allow:
            report.drop("relation")
            continue
        if head == tail:
            report.drop("self_loop")
            continue
        if relation not in known_relations:
            graph.add_relation(registry.get(relation) or generic_relation(relation))
            known_relations.add(relation)
        rel = graph.relation(relation)
        for node_id, node_type in ((head, rel.head_type), (tail, rel.tail_type)):
            if node_id not in seen_nodes:
                seen_nodes.add(node_id)
                graph.add_node(Node(id=node_id, label=node_id, node_type=node_type or "entity"))
                report.nodes_created += 1
        edge = Edge(head, relation, tail)
        if graph.has_edge(edge):
            report.drop("duplicate")
            continue
        graph.add_edge(edge)
        report.edges_created += 1
        report.rows_kept += 1
    return graph, report


_PAPER_RELATIONS = ("authored", "published_in", "cites")


def _paper_record(raw: str, line_number: int) -> dict:
    try:
        record = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise MalformedInput(f"line {line_number}: invalid JSON: {exc}", line_number=line_number) from exc
    if not isinstance(record, dict):
        raise MalformedInput(f"line {line_number}: record must be an object", line_number=line_number)
    if "id" not in record or record["id"] in (None, ""):
        raise MalformedInput(f"line {line_number}: record has no id", line_number=line_number)
    for key in ("authors", "references"):
        if key in record and not isinstance(record[key], list):
            raise MalformedInput(f"line {line_number}: {key!r} must be an array", line_number=line_number)
    return record


def ingest_papers(
    source: str | Path | Iterable[str],
    min_authors: int = 2,
    registry: dict[str, RelationType] | None = None,
    on_malformed: str = RAISE,
) -> tuple[KnowledgeGraph, IngestReport]:
    """Read paper records (one JSON object per line) into a graph.

    Records missing title, abstract, or venue, or with fewer than
    min_authors authors, are dropped per reason. Kept papers become
    paper nodes (label = title, abstract stored as an attribute); their
    authors and venue become nodes joined by authored / published_in
    edges, and references to other kept papers become cites edges.
    References to unknown or dropped papers are counted as dangling.
    """
    if on_malformed not in (RAISE, SKIP):
        raise ValueError(f"on_malformed must be 'raise' or 'skip', got {on_malformed!r}")
    registry = _as_registry(registry)
    report = IngestReport()
    kept: list[dict] = []
    kept_ids: set[str] = set()

    for line_number, raw in enumerate(_iter_lines(source), start=1):
        if not raw.strip():
            continue
        report.rows_read += 1
        try:
            record = _paper_record(raw, line_number)
        except MalformedInput:
            report.rows_malformed += 1
            if on_malformed == RAISE:
                raise
            continue
        paper_id = str(record["id"])
        if paper_id in kept_ids:
            report.drop("duplicate")
            continue
        title = normalize_label(str(record.get("title") or ""))
        abstract = str(record.get("abstract") or "").strip()
        venue = normalize_label(str(record.get("venue") or ""))
        authors = [normalize_label(str(a)) for a in record.get("authors") or []]
        authors = [a for a in authors if a]
        if not title:
            report.drop("missing_title")
            continue
        if not abstract:
            report.drop("missing_abstract")
            continue
        if not venue:
            report.drop("missing_venue")
            continue
        if len(set(authors)) < min_authors:
            report.drop("min_authors")
            continue
        kept_ids.add(paper_id)
        kept.append(
            {
                "id": paper_id,
                "title": title,
                "abstract": abstract,
                "venue": venue,
                "year": record.get("year"),
                "authors": authors,
                "references": [str(r) for r in record.get("references") or []],
            }
        )
        report.rows_kept += 1

    graph = KnowledgeGraph()
    for name in _PAPER_RELATIONS:
        graph.add_relation(registry.get(name) or generic_relation(name))

    def ensure_node(node: Node) -> None:
        if not graph.has_node(node.id):
            graph.add_node(node)
            report.nodes_created += 1

    def ensure_edge(edge: Edge) -> None:
        if not graph.has_edge(edge):
            graph.add_edge(edge)
            report.edges_created += 1

    for record in sorted(kept, key=lambda r: r["id"]):
        attributes = {"abstract": record["abstract"]}
        if record["year"] is not None:
            attributes["year"] = str(record["year"])
        ensure_node(
            Node(
                id=f"paper:{record['id']}",
                label=record["title"],
                node_type="paper",
                attributes=attributes,
            )
        )
    for record in sorted(kept, key=lambda r: r["id"]):
        paper_node = f"paper:{record['id']}"
        for author in record["authors"]:
            ensure_node(Node(id=f"author:{author}", label=author, node_type="author"))
            ensure_edge(Edge(f"author:{author}", "authored", paper_node))
        ensure_node(Node(id=f"venue:{record['venue']}", label=record["venue"], node_type="venue"))
        ensure_edge(Edge(paper_node, "published_in", f"venue:{record['venue']}"))
        for ref in record["references"]:
            if ref == record["id"]:
                report.drop_edge("self_citation")
                continue
            if ref in kept_ids:
                ensure_edge(Edge(paper_node, "cites", f"paper:{ref}"))
            else:
                report.drop_edge("dangling_citation")
    return graph, report
