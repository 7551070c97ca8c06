"""Render partitions as text under the five encoding strategies.

Three base strategies are pure template work: one sentence per edge
(triples), one sentence per relation group (groups), or one paragraph per
partition (adjacency). The summarized strategy rewrites a base encoding
through the language model; node descriptors build a profile of a node
from its neighbors' abstracts. Every encoding records exactly which edges
its text asserts, and the multiset of recorded edges over a node's
encodings always equals the node's partitioned context edges.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from importlib import resources
from typing import Mapping

from .errors import (
    BackendUnavailable,
    BudgetExceeded,
    MissingTemplate,
    NoDescribableContent,
)
from .graph import (
    INCOMING,
    OUTGOING,
    Edge,
    KnowledgeGraph,
    RelationType,
    edge_key,
    group_center_edges,
)
from .llm import LlmClient, PromptRequest
from .partition import Partition

log = logging.getLogger(__name__)

BASE_KINDS = ("triples", "groups", "adjacency")
ALL_KINDS = BASE_KINDS + ("summarized", "descriptors")
DEFAULT_SUMMARIZE_BASE = "groups"


@dataclass(frozen=True)
class EncodingStrategy:
    """A strategy kind, plus the wrapped base kind for summarized."""

    kind: str
    base: str | None = None

    def __post_init__(self):
        if self.kind not in ALL_KINDS:
            raise ValueError(f"unknown strategy {self.kind!r} (expected one of {ALL_KINDS})")
        if self.kind == "summarized":
            if self.base not in BASE_KINDS:
                raise ValueError(f"summarized needs a base in {BASE_KINDS}, got {self.base!r}")
        elif self.base is not None:
            raise ValueError(f"strategy {self.kind!r} takes no base")

    @property
    def label(self) -> str:
        return f"{self.kind}:{self.base}" if self.base else self.kind

    @classmethod
    def parse(cls, text: str, default_base: str = DEFAULT_SUMMARIZE_BASE) -> "EncodingStrategy":
        kind, _, base = text.partition(":")
        if kind == "summarized":
            return cls(kind, base or default_base)
        if base:
            raise ValueError(f"strategy {kind!r} takes no base, got {text!r}")
        return cls(kind)


@dataclass(frozen=True)
class EncodedContext:
    """One text rendering of a partition slice, with provenance.

    source_edges lists exactly the edges the text asserts. fallback marks
    text that should have passed through the language model but did not.
    """

    text: str
    strategy: EncodingStrategy
    center: str
    partition_index: int
    source_edges: tuple[Edge, ...]
    llm_cache_key: str | None = None
    fallback: bool = False


def load_prompt(name: str) -> str:
    return resources.files("kg2ft.data.prompts").joinpath(name).read_text(encoding="utf-8").strip()


def conjoin(items: list[str]) -> str:
    """Join labels as prose: "A", "A and B", "A, B and C"."""
    if not items:
        raise ValueError("cannot conjoin an empty list")
    if len(items) == 1:
        return items[0]
    return ", ".join(items[:-1]) + " and " + items[-1]


def sentence_case(text: str) -> str:
    return text[0].upper() + text[1:] if text else text


def render_statement(template: str, head_text: str, tail_text: str) -> str:
    """Instantiate a phrase template, sentence-cased and period-terminated."""
    text = template.replace("{head}", head_text).replace("{tail}", tail_text)
    text = sentence_case(text)
    if not text.endswith((".", "!", "?")):
        text += "."
    return text


def _lookup(
    graph: KnowledgeGraph,
    relations: Mapping[str, RelationType] | None,
    name: str,
) -> RelationType:
    if relations is not None:
        rel = relations.get(name)
        if rel is None:
            raise MissingTemplate(f"no template registered for relation {name!r}")
        return rel
    if not graph.has_relation(name):
        raise MissingTemplate(f"no template registered for relation {name!r}")
    return graph.relation(name)


def _edge_sentence(graph, relations, edge: Edge) -> str:
    rel = _lookup(graph, relations, edge.relation)
    return render_statement(rel.forward_phrase, graph.label_of(edge.head), graph.label_of(edge.tail))


def encode_triples(
    graph: KnowledgeGraph,
    partition: Partition,
    relations: Mapping[str, RelationType] | None = None,
    partition_index: int = 0,
) -> list[EncodedContext]:
    """One single-sentence context per edge, in partition edge order."""
    strategy = EncodingStrategy("triples")
    return [
        EncodedContext(
            text=_edge_sentence(graph, relations, edge),
            strategy=strategy,
            center=partition.center,
            partition_index=partition_index,
            source_edges=(edge,),
        )
        for edge in partition.edges
    ]


def _group_sentence(graph, relations, group) -> str:
    rel = _lookup(graph, relations, group.relation)
    center_label = graph.label_of(group.center)
    member_labels = [graph.label_of(n) for n in group.nodes]
    if group.direction == OUTGOING:
        return render_statement(rel.forward_phrase, center_label, conjoin(member_labels))
    return render_statement(rel.inverse_phrase, conjoin(member_labels), center_label)


def _group_contexts(graph, partition, relations):
    """Sentence + source edges per relation group, then per far edge.

    Edges that do not touch the center (k >= 2 partitions) cannot join a
    relation group, so each becomes its own single-edge sentence; this
    keeps the edge-conservation property exact for every base strategy.
    """
    pieces: list[tuple[str, tuple[Edge, ...]]] = []
    for group in group_center_edges(partition.center, partition.edges):
        pieces.append((_group_sentence(graph, relations, group), group.edges))
    far = [e for e in partition.edges if partition.center not in (e.head, e.tail)]
    for edge in sorted(far, key=edge_key):
        pieces.append((_edge_sentence(graph, relations, edge), (edge,)))
    return pieces


def encode_relational_groups(
    graph: KnowledgeGraph,
    partition: Partition,
    relations: Mapping[str, RelationType] | None = None,
    partition_index: int = 0,
) -> list[EncodedContext]:
    """One context per relation group.

    Incoming groups render through the inverse phrase with the member
    labels conjoined into the head slot; outgoing groups render through
    the forward phrase with the center fixed as head.
    """
    strategy = EncodingStrategy("groups")
    return [
        EncodedContext(
            text=text,
            strategy=strategy,
            center=partition.center,
            partition_index=partition_index,
            source_edges=edges,
        )
        for text, edges in _group_contexts(graph, partition, relations)
    ]


def encode_adjacency_list(
    graph: KnowledgeGraph,
    partition: Partition,
    relations: Mapping[str, RelationType] | None = None,
    partition_index: int = 0,
) -> EncodedContext:
    """All group sentences of the partition as one paragraph."""
    pieces = _group_contexts(graph, partition, relations)
    return EncodedContext(
        text=" ".join(text for text, _ in pieces),
        strategy=EncodingStrategy("adjacency"),
        center=partition.center,
        partition_index=partition_index,
        source_edges=partition.edges,
    )


def encode_base(
    graph: KnowledgeGraph,
    partition: Partition,
    kind: str,
    relations: Mapping[str, RelationType] | None = None,
    partition_index: int = 0,
) -> list[EncodedContext]:
    if kind == "triples":
        return encode_triples(graph, partition, relations, partition_index)
    if kind == "groups":
        return encode_relational_groups(graph, partition, relations, partition_index)
    if kind == "adjacency":
        return [encode_adjacency_list(graph, partition, relations, partition_index)]
    raise ValueError(f"not a base strategy: {kind!r}")


def encode_summarized(
    base: EncodedContext,
    llm: LlmClient,
    prompt_text: str | None = None,
) -> EncodedContext:
    """Rewrite a base encoding through the language model.

    Provenance (center, source_edges, partition_index) is preserved
    bit-exactly; only the text changes. If the backend stays unavailable
    after retries, or the call budget is exhausted, the base text is kept
    and the context is flagged fallback instead of failing the build.
    """
    prompt = prompt_text if prompt_text is not None else load_prompt("rewrite_v1.txt")
    request = PromptRequest(system_text=prompt, user_text=base.text)
    cache_key = llm.cache_key(request)
    strategy = EncodingStrategy("summarized", base.strategy.kind)
    try:
        text = llm.complete(request)
        fallback = False
    except (BackendUnavailable, BudgetExceeded) as exc:
        log.warning("summarization fell back to base text: %s", exc)
        text = base.text
        fallback = True
    return replace(
        base,
        text=text,
        strategy=strategy,
        llm_cache_key=cache_key,
        fallback=fallback,
    )


def parse_topics(response: str) -> list[str]:
    """Comma-separated topic phrases, trimmed, case-insensitively deduped."""
    seen: dict[str, str] = {}
    for chunk in response.replace("\n", ",").split(","):
        topic = chunk.strip().strip(".").strip()
        if topic and topic.casefold() not in seen:
            seen[topic.casefold()] = topic
    return sorted(seen.values(), key=str.casefold)


def encode_node_descriptors(
    graph: KnowledgeGraph,
    node_id: str,
    llm: LlmClient,
    prompt_text: str | None = None,
    partition_index: int = 0,
) -> EncodedContext:
    """Describe a node from its neighbors' abstracts or its own attributes.

    Nodes with abstract-bearing neighbors (authors, typically) get a
    topic profile: the language model extracts topic phrases per abstract
    and the deduplicated, sorted union is rendered as one sentence. If
    the backend is unavailable the neighbor labels stand in for topics
    and the context is flagged fallback. Nodes without such neighbors
    render their own attributes verbatim; with neither, the node is not
    describable.
    """
    node = graph.node(node_id)
    strategy = EncodingStrategy("descriptors")
    abstract_neighbors = [
        nbr for nbr in graph.neighbors(node_id) if "abstract" in graph.node(nbr).attributes
    ]
    if abstract_neighbors:
        prompt = prompt_text if prompt_text is not None else load_prompt("topics_v1.txt")
        topics: list[str] = []
        fallback = False
        cache_key = None
        for nbr in abstract_neighbors:
            request = PromptRequest(system_text=prompt, user_text=graph.node(nbr).attributes["abstract"])
            cache_key = llm.cache_key(request)
            try:
                topics.extend(parse_topics(llm.complete(request)))
            except (BackendUnavailable, BudgetExceeded) as exc:
                log.warning("topic extraction fell back to neighbor labels: %s", exc)
                fallback = True
                topics = [graph.label_of(n) for n in abstract_neighbors]
                break
        deduped: dict[str, str] = {}
        for topic in topics:
            deduped.setdefault(topic.casefold(), topic)
        rendered = sorted(deduped.values(), key=str.casefold)
        text = f"{node.label} has published on: {', '.join(rendered)}."
        source_edges = tuple(
            edge
            for edge in graph.incident_edges(node_id)
            if edge.head in abstract_neighbors or edge.tail in abstract_neighbors
        )
        return EncodedContext(
            text=text,
            strategy=strategy,
            center=node_id,
            partition_index=partition_index,
            source_edges=source_edges,
            llm_cache_key=cache_key,
            fallback=fallback,
        )
    if node.attributes:
        parts = [f"{node.label}."]
        for key in sorted(node.attributes):
            value = node.attributes[key]
            piece = f"{sentence_case(key)}: {value}"
            if not piece.endswith((".", "!", "?")):
                piece += "."
            parts.append(piece)
        return EncodedContext(
            text=" ".join(parts),
            strategy=strategy,
            center=node_id,
            partition_index=partition_index,
            source_edges=(),
        )
    raise NoDescribableContent(f"node {node_id!r} has no abstract-bearing neighbors and no attributes")


def decode_triple(sentence: str, relations: Mapping[str, RelationType]) -> tuple[str, str, str] | None:
    """Parse a triples-strategy sentence back to (head_text, relation, tail_text).

    Applies the forward-template grammar of every relation and returns the
    unique parse, or None when the sentence matches no template or more
    than one way. The leading character is matched case-insensitively to
    honor sentence casing; extracted slot texts are returned as written.
    """
    body = sentence.strip()
    if body.endswith("."):
        body = body[:-1]
    candidates: set[tuple[str, str, str]] = set()
    for name in sorted(relations):
        template = relations[name].forward_phrase
        head_at = template.find("{head}")
        tail_at = template.find("{tail}")
        first_head = head_at < tail_at
        lo, hi = sorted((head_at, tail_at))
        prefix, infix, suffix = template[:lo], template[lo + 6 : hi], template[hi + 6 :]
        if len(body) < len(prefix) + len(suffix):
            continue
        if prefix:
            if body[0].casefold() != prefix[0].casefold() or body[1 : len(prefix)] != prefix[1:]:
                continue
        if suffix and not body.endswith(suffix):
            continue
        inner = body[len(prefix) : len(body) - len(suffix)]
        start = 0
        while infix:
            cut = inner.find(infix, start)
            if cut < 0:
                break
            left, right = inner[:cut], inner[cut + len(infix) :]
            if left and right:
                head_text, tail_text = (left, right) if first_head else (right, left)
                candidates.add((head_text, name, tail_text))
            start = cut + 1
    if len(candidates) == 1:
        return next(iter(candidates))
    return None
