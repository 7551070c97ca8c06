"""Question generation, the train/test edge split, and MC conversion.

Three question classes probe different capabilities: fact recall asks for
the heads pointing at an anchor tail, inverse fact recall asks for the
tails of an anchor head (directionality), and multi-hop asks the model to
infer a held-out edge whose endpoints are close in the training subgraph
(link prediction). Every sample records the edges it is asking about and
enough anchoring metadata to recompute its full set of valid answers.
"""

from __future__ import annotations

import hashlib
import logging
import math
import random
from dataclasses import dataclass, field, replace
from typing import Mapping

from .errors import (
    BackendUnavailable,
    BudgetExceeded,
    InsufficientDistractorPool,
    InvalidRatio,
    MissingTemplate,
)
from .encode import EncodedContext, conjoin, load_prompt, sentence_case
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

log = logging.getLogger(__name__)

FACT = "fact"
INVERSE = "inverse"
MULTIHOP = "multihop"
TASKS = (FACT, INVERSE, MULTIHOP)

OPEN = "open"
MC = "mc"
FORMATS = (OPEN, MC)

HEADS = "heads"
TAILS = "tails"

# Relation used to resolve the {venue} slot of collaborator-style
# multi-hop templates; see gen_multihop_qa.
VENUE_RELATION = "published_in"


@dataclass(frozen=True)
class QASample:
    """One question. answer_nodes are node ids in canonical order.

    anchor_node, relation, and answer_side identify the query the question
    poses: the full set of valid answers is the heads (or tails) of the
    anchor under the relation. MC conversion relies on this to guarantee
    its distractors are true negatives.
    """

    task: str
    format: str
    question_text: str
    answer_text: str
    source_edges: tuple[Edge, ...]
    answer_nodes: tuple[str, ...]
    anchor_node: str
    relation: str
    answer_side: str
    options: tuple[str, ...] = ()
    correct_index: int | None = None
    fallback: bool = False
    seed_trace: Mapping = field(default_factory=dict)

    def __post_init__(self):
        if self.task not in TASKS:
            raise ValueError(f"unknown task {self.task!r}")
        if self.answer_side not in (HEADS, TAILS):
            raise ValueError(f"answer_side must be heads or tails, got {self.answer_side!r}")
        if self.format == OPEN:
            if self.options or self.correct_index is not None:
                raise ValueError("open-ended samples carry no options")
        elif self.format == MC:
            if len(self.options) != 5:
                raise ValueError(f"MC samples need exactly 5 options, got {len(self.options)}")
            if len(set(self.options)) != 5:
                raise ValueError("MC options must be pairwise distinct")
            if self.correct_index is None or not 0 <= self.correct_index < 5:
                raise ValueError(f"correct_index out of range: {self.correct_index}")
            if self.options[self.correct_index] != self.answer_text:
                raise ValueError("options[correct_index] must equal answer_text")
        else:
            raise ValueError(f"unknown format {self.format!r}")


@dataclass(frozen=True)
class EdgeSplit:
    train_edges: frozenset[Edge]
    test_edges: frozenset[Edge]
    ratio: float
    seed: int


def split_edges(graph: KnowledgeGraph, ratio: float = 0.7, seed: int = 0) -> EdgeSplit:
    """Seeded uniform shuffle over canonically ordered edges.

    |train| = floor(ratio * |E|); train and test are disjoint and cover
    all edges. Identical (graph, ratio, seed) always yields the same split.
    """
    if not 0 < ratio < 1:
        raise InvalidRatio(f"split ratio must be in (0, 1), got {ratio}")
    edges = graph.edges()
    rng = random.Random(seed)
    rng.shuffle(edges)
    n_train = math.floor(ratio * len(edges))
    return EdgeSplit(
        train_edges=frozenset(edges[:n_train]),
        test_edges=frozenset(edges[n_train:]),
        ratio=ratio,
        seed=seed,
    )


def render_question(template: str, **slots: str) -> str:
    text = template
    for name, value in slots.items():
        text = text.replace("{" + name + "}", value)
    text = sentence_case(text)
    if not text.endswith(("?", ".", "!")):
        text += "?"
    return text


def _lookup(graph, relations, name) -> RelationType:
    if relations is not None:
        rel = relations.get(name)
    else:
        rel = graph.relation(name) if graph.has_relation(name) else None
    if rel is None:
        raise MissingTemplate(f"no template registered for relation {name!r}")
    return rel


def _question_template(rel: RelationType, attr: str) -> str:
    template = getattr(rel, attr)
    if not template:
        raise MissingTemplate(f"relation {rel.name!r} has no {attr} template")
    return template


def gen_fact_qa(
    graph: KnowledgeGraph,
    ctx_enc: EncodedContext,
    relations: Mapping[str, RelationType] | None = None,
) -> list[QASample]:
    """Fact recall: per incoming relation group, ask which heads point at
    the center; answer = conjunction of the group's node labels."""
    samples = []
    for group in group_center_edges(ctx_enc.center, ctx_enc.source_edges):
        if group.direction != INCOMING:
            continue
        rel = _lookup(graph, relations, group.relation)
        question = render_question(
            _question_template(rel, "question_forward"), tail=graph.label_of(ctx_enc.center)
        )
        answer = conjoin([graph.label_of(n) for n in group.nodes])
        samples.append(
            QASample(
                task=FACT,
                format=OPEN,
                question_text=question,
                answer_text=answer,
                source_edges=group.edges,
                answer_nodes=group.nodes,
                anchor_node=ctx_enc.center,
                relation=group.relation,
                answer_side=HEADS,
            )
        )
    return samples


def gen_inverse_qa(
    graph: KnowledgeGraph,
    ctx_enc: EncodedContext,
    relations: Mapping[str, RelationType] | None = None,
) -> list[QASample]:
    """Inverse fact recall: per outgoing relation group, ask which tails
    the center points at; probes relationship directionality."""
    samples = []
    for group in group_center_edges(ctx_enc.center, ctx_enc.source_edges):
        if group.direction != OUTGOING:
            continue
        rel = _lookup(graph, relations, group.relation)
        question = render_question(
            _question_template(rel, "question_inverse"), head=graph.label_of(ctx_enc.center)
        )
        answer = conjoin([graph.label_of(n) for n in group.nodes])
        samples.append(
            QASample(
                task=INVERSE,
                format=OPEN,
                question_text=question,
                answer_text=answer,
                source_edges=group.edges,
                answer_nodes=group.nodes,
                anchor_node=ctx_enc.center,
                relation=group.relation,
                answer_side=TAILS,
            )
        )
    return samples


@dataclass
class MultihopResult:
    samples: list[QASample]
    skipped: dict[str, int]

    def skip(self, reason: str) -> None:
        self.skipped[reason] = self.skipped.get(reason, 0) + 1


def gen_multihop_qa(
    graph: KnowledgeGraph,
    split: EdgeSplit,
    relations: Mapping[str, RelationType] | None = None,
) -> MultihopResult:
    """Questions that ask the model to infer held-out (test) edges.

    Only test edges whose endpoints lie within undirected distance 2 of
    each other in the training subgraph are eligible; the rest are
    skipped and counted, as are edges whose relation has no multi-hop
    template. Generic relations group eligible test edges per (head,
    relation) and ask for the tails. Collaborator-style relations (their
    template carries a {venue} slot) instead emit one question per edge:
    who, among the tail paper's training-graph co-authors, should the
    head work with; the venue slot resolves through the training graph's
    published_in edge.
    """
    result = MultihopResult(samples=[], skipped={})
    train_graph = graph.restricted(split.train_edges)
    distance_cache: dict[str, dict[str, int]] = {}

    def within_two_hops(a: str, b: str) -> bool:
        if a not in distance_cache:
            distance_cache[a] = train_graph.distances_from(a, 2)
        return b in distance_cache[a]

    by_anchor: dict[tuple[str, str], list[Edge]] = {}
    for edge in sorted(split.test_edges, key=edge_key):
        by_anchor.setdefault((edge.head, edge.relation), []).append(edge)

    for (head, relation) in sorted(by_anchor):
        edges = by_anchor[(head, relation)]
        try:
            rel = _lookup(graph, relations, relation)
            template = _question_template(rel, "question_multihop")
        except MissingTemplate:
            for _ in edges:
                result.skip("no_template")
            continue
        if "{venue}" in template:
            for edge in edges:
                _collaborator_sample(graph, train_graph, rel, template, edge, result, within_two_hops)
            continue
        eligible = [e for e in edges if within_two_hops(e.head, e.tail)]
        for _ in range(len(edges) - len(eligible)):
            result.skip("disconnected")
        if not eligible:
            continue
        tails = sorted(e.tail for e in eligible)
        question = render_question(template, head=graph.label_of(head))
        result.samples.append(
            QASample(
                task=MULTIHOP,
                format=OPEN,
                question_text=question,
                answer_text=conjoin([graph.label_of(t) for t in tails]),
                source_edges=tuple(sorted(eligible, key=edge_key)),
                answer_nodes=tuple(tails),
                anchor_node=head,
                relation=relation,
                answer_side=TAILS,
            )
        )
    return result


def _collaborator_sample(graph, train_graph, rel, template, edge, result, within_two_hops):
    if not within_two_hops(edge.head, edge.tail):
        result.skip("disconnected")
        return
    venues = train_graph.tails_for(VENUE_RELATION, edge.tail)
    if not venues:
        result.skip("no_venue")
        return
    coauthors = [a for a in train_graph.heads_for(rel.name, edge.tail) if a != edge.head]
    if not coauthors:
        result.skip("no_coauthors")
        return
    question = render_question(
        template,
        head=graph.label_of(edge.head),
        tail=graph.label_of(edge.tail),
        venue=graph.label_of(venues[0]),
    )
    result.samples.append(
        QASample(
            task=MULTIHOP,
            format=OPEN,
            question_text=question,
            answer_text=conjoin([graph.label_of(a) for a in coauthors]),
            source_edges=(edge,),
            answer_nodes=tuple(coauthors),
            anchor_node=edge.tail,
            relation=rel.name,
            answer_side=HEADS,
        )
    )


def valid_answer_nodes(graph: KnowledgeGraph, sample: QASample) -> set[str]:
    """Every node the full graph certifies as a correct answer."""
    if sample.answer_side == HEADS:
        base = graph.heads_for(sample.relation, sample.anchor_node)
    else:
        base = graph.tails_for(sample.relation, sample.anchor_node)
    return set(base) | set(sample.answer_nodes)


def derive_seed(seed: int, key: str) -> int:
    """Content-derived RNG seed, stable across processes and runs."""
    digest = hashlib.sha256(f"{seed}:{key}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def sample_key(sample: QASample) -> str:
    return "|".join(
        (sample.task, sample.relation, sample.anchor_node, sample.answer_side, sample.question_text)
    )


def to_multiple_choice(
    sample: QASample,
    graph: KnowledgeGraph,
    n_distractors: int = 4,
    seed: int = 0,
) -> QASample:
    """Convert an open-ended sample to five-option multiple choice.

    The correct option is the canonically-first answer node's label.
    Distractors are drawn without replacement from the labels of
    same-type nodes, excluding the label of every node that the full
    graph certifies as a valid answer, so every distractor is a true
    negative. Option order is shuffled with a seed derived from the
    sample's content, making each conversion independent of processing
    order.
    """
    if sample.format != OPEN:
        raise ValueError("only open-ended samples can be converted")
    if not sample.answer_nodes:
        raise ValueError("sample has no answer nodes")
    correct_node = sample.answer_nodes[0]
    correct_label = graph.label_of(correct_node)
    excluded_labels = {graph.label_of(n) for n in valid_answer_nodes(graph, sample)}
    excluded_labels.add(correct_label)
    node_type = graph.node(correct_node).node_type
    pool = sorted(
        {graph.label_of(n) for n in graph.nodes_of_type(node_type)} - excluded_labels
    )
    if len(pool) < n_distractors:
        raise InsufficientDistractorPool(
            f"need {n_distractors} distractors of type {node_type!r}, only {len(pool)} eligible"
        )
    key = sample_key(sample)
    rng = random.Random(derive_seed(seed, key))
    options = [correct_label] + rng.sample(pool, n_distractors)
    rng.shuffle(options)
    return replace(
        sample,
        format=MC,
        answer_text=correct_label,
        answer_nodes=(correct_node,),
        options=tuple(options),
        correct_index=options.index(correct_label),
        seed_trace={**dict(sample.seed_trace), "mc_seed": seed, "mc_key": key},
    )


def paraphrase_question(sample: QASample, llm: LlmClient, prompt_text: str | None = None) -> QASample:
    """Optional LLM pass that rewords question_text.

    Same degradation contract as summarization: if the backend stays
    unavailable, the original question is kept and the sample is flagged.
    """
    prompt = prompt_text if prompt_text is not None else load_prompt("paraphrase_v1.txt")
    request = PromptRequest(system_text=prompt, user_text=sample.question_text)
    try:
        text = llm.complete(request)
        return replace(sample, question_text=text)
    except (BackendUnavailable, BudgetExceeded) as exc:
        log.warning("question paraphrase fell back to original: %s", exc)
        return replace(sample, fallback=True)
