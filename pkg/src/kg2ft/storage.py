"""Graph serialization.

Graphs round-trip through a gzip-compressed canonical JSON document. The
payload is fully sorted and the gzip header carries a zero mtime, so the
same graph always produces the same bytes on disk. The content hash is
taken over the uncompressed canonical JSON, making it independent of
compression details.
"""

from __future__ import annotations

import gzip
import hashlib
import io
import json
from pathlib import Path

from .errors import MalformedInput
from .graph import Edge, KnowledgeGraph, Node, RelationType

FORMAT_NAME = "kg2ft-graph"
FORMAT_VERSION = 1


def graph_payload(graph: KnowledgeGraph) -> dict:
    """Canonical JSON-ready representation of the graph."""
    relations = []
    for rel in graph.relations():
        relations.append(
            {
                "name": rel.name,
                "forward": rel.forward_phrase,
                "inverse": rel.inverse_phrase,
                "question_forward": rel.question_forward,
                "question_inverse": rel.question_inverse,
                "question_multihop": rel.question_multihop,
                "head_type": rel.head_type,
                "tail_type": rel.tail_type,
            }
        )
    nodes = []
    for node in graph.nodes():
        nodes.append(
            {
                "id": node.id,
                "label": node.label,
                "node_type": node.node_type,
                "attributes": {k: node.attributes[k] for k in sorted(node.attributes)},
            }
        )
    edges = [[e.head, e.relation, e.tail] for e in graph.edges()]
    return {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "relations": relations,
        "nodes": nodes,
        "edges": edges,
    }


def _canonical_bytes(payload: dict) -> bytes:
    return json.dumps(payload, sort_keys=True, ensure_ascii=False, separators=(",", ":")).encode("utf-8")


def graph_hash(graph: KnowledgeGraph) -> str:
    """sha256 over the uncompressed canonical JSON."""
    return hashlib.sha256(_canonical_bytes(graph_payload(graph))).hexdigest()


def save_graph(graph: KnowledgeGraph, path: str | Path) -> str:
    """Write the graph to `path`; returns its content hash.

    Output bytes are identical for identical graphs: the payload is
    canonical and the gzip stream is written with mtime pinned to zero.
    """
    raw = _canonical_bytes(graph_payload(graph))
    buffer = io.BytesIO()
    with gzip.GzipFile(filename="", mode="wb", fileobj=buffer, mtime=0, compresslevel=9) as zf:
        zf.write(raw)
    Path(path).write_bytes(buffer.getvalue())
    return hashlib.sha256(raw).hexdigest()


def load_graph(path: str | Path) -> KnowledgeGraph:
    try:
        with gzip.open(path, "rb") as zf:
            raw = zf.read()
    except (OSError, gzip.BadGzipFile) as exc:
        raise MalformedInput(f"cannot read graph file {path}: {exc}") from exc
    try:
        payload = json.loads(raw.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise MalformedInput(f"graph file {path} is not valid JSON: {exc}") from exc
    if not isinstance(payload, dict) or payload.get("format") != FORMAT_NAME:
        raise MalformedInput(f"graph file {path} has unexpected format marker")
    if payload.get("version") != FORMAT_VERSION:
        raise MalformedInput(f"graph file {path} has unsupported version {payload.get('version')!r}")
    graph = KnowledgeGraph()
    try:
        for entry in payload["relations"]:
            graph.add_relation(
                RelationType(
                    name=entry["name"],
                    forward_phrase=entry["forward"],
                    inverse_phrase=entry["inverse"],
                    question_forward=entry.get("question_forward"),
                    question_inverse=entry.get("question_inverse"),
                    question_multihop=entry.get("question_multihop"),
                    head_type=entry.get("head_type"),
                    tail_type=entry.get("tail_type"),
                )
            )
        for entry in payload["nodes"]:
            graph.add_node(
                Node(
                    id=entry["id"],
                    label=entry["label"],
                    node_type=entry.get("node_type", "entity"),
                    attributes=entry.get("attributes", {}),
                )
            )
        for head, relation, tail in payload["edges"]:
            graph.add_edge(Edge(head, relation, tail))
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedInput(f"graph file {path} has a malformed entry: {exc}") from exc
    return graph
