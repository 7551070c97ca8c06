"""Directed multi-relational graph with deterministic iteration order.

The graph is built once during ingest and then only read. All iteration
surfaces (nodes, edges, neighbors, relation groups) are sorted on canonical
ids so that every downstream artifact is reproducible byte for byte.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping, NamedTuple

from .errors import DuplicateNode, SelfLoop, UnknownNode, UnknownRelation

# Direction of a relation group relative to the center node.
OUTGOING = "outgoing"
INCOMING = "incoming"


class Edge(NamedTuple):
    """A directed, typed edge. Hashable and directly comparable."""

    head: str
    relation: str
    tail: str


def edge_key(edge: Edge) -> tuple[str, str, str]:
    """Canonical sort key: relation name first, then head, then tail."""
    return (edge.relation, edge.head, edge.tail)


@dataclass(frozen=True)
class Node:
    """A graph node.

    id is an opaque stable identifier; label is the human-readable surface
    form used in rendered text. attributes holds optional string metadata
    (for example an abstract for paper nodes).
    """

    id: str
    label: str
    node_type: str = "entity"
    attributes: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if not self.id:
            raise ValueError("node id must be non-empty")
        if any(ord(c) < 32 for c in self.id):
            raise ValueError(f"node id contains control characters: {self.id!r}")
        if not self.label:
            raise ValueError(f"node {self.id!r} has an empty label")


@dataclass(frozen=True)
class RelationType:
    """A relation with its phrase and question templates.

    forward_phrase renders an edge head-first ("{head} may treat {tail}");
    inverse_phrase renders it tail-first. The three question templates are
    optional: relations that never feed question generation may omit them.
    head_type/tail_type, when set, declare the node types this relation
    connects and drive distractor pooling for multiple choice.
    """

    name: str
    forward_phrase: str
    inverse_phrase: str
    question_forward: str | None = None
    question_inverse: str | None = None
    question_multihop: str | None = None
    head_type: str | None = None
    tail_type: str | None = None

    def __post_init__(self):
        if not self.name:
            raise ValueError("relation name must be non-empty")
        for fieldname in ("forward_phrase", "inverse_phrase"):
            tpl = getattr(self, fieldname)
            for slot in ("{head}", "{tail}"):
                if tpl.count(slot) != 1:
                    raise ValueError(
                        f"relation {self.name!r}: {fieldname} must contain "
                        f"{slot} exactly once, got {tpl!r}"
                    )


class KnowledgeGraph:
    """Node/edge store with sorted accessors.

    Mutation happens only while a single thread builds the graph; afterwards
    all methods used by the pipeline are reads, so the object can be shared
    across worker threads without locking.
    """

    def __init__(self):
        self._nodes: dict[str, Node] = {}
        self._relations: dict[str, RelationType] = {}
        self._edges: set[Edge] = set()
        self._adjacent: dict[str, set[str]] = {}
        self._incident: dict[str, set[Edge]] = {}
        self._heads_by_rel_tail: dict[tuple[str, str], set[str]] = {}
        self._tails_by_rel_head: dict[tuple[str, str], set[str]] = {}

    # -- construction -------------------------------------------------

    def add_relation(self, relation: RelationType) -> None:
        existing = self._relations.get(relation.name)
        if existing is not None and existing != relation:
            raise ValueError(f"relation {relation.name!r} already registered with different templates")
        self._relations[relation.name] = relation

    def add_node(self, node: Node) -> None:
        if node.id in self._nodes:
            raise DuplicateNode(f"node {node.id!r} already exists")
        self._nodes[node.id] = node
        self._adjacent[node.id] = set()
        self._incident[node.id] = set()

    def add_edge(self, edge: Edge) -> None:
        """Insert an edge; duplicate triples are idempotently ignored."""
        if edge.head not in self._nodes:
            raise UnknownNode(f"edge references unknown head {edge.head!r}")
        if edge.tail not in self._nodes:
            raise UnknownNode(f"edge references unknown tail {edge.tail!r}")
        if edge.relation not in self._relations:
            raise UnknownRelation(f"edge references unknown relation {edge.relation!r}")
        if edge.head == edge.tail:
            raise SelfLoop(f"self loop on node {edge.head!r} via {edge.relation!r}")
        if edge in self._edges:
            return
        self._edges.add(edge)
        self._adjacent[edge.head].add(edge.tail)
        self._adjacent[edge.tail].add(edge.head)
        self._incident[edge.head].add(edge)
        self._incident[edge.tail].add(edge)
        self._heads_by_rel_tail.setdefault((edge.relation, edge.tail), set()).add(edge.head)
        self._tails_by_rel_head.setdefault((edge.relation, edge.head), set()).add(edge.tail)

    # -- reads ---------------------------------------------------------

    @property
    def num_nodes(self) -> int:
        return len(self._nodes)

    @property
    def num_edges(self) -> int:
        return len(self._edges)

    def has_node(self, node_id: str) -> bool:
        return node_id in self._nodes

    def has_edge(self, edge: Edge) -> bool:
        return edge in self._edges

    def node(self, node_id: str) -> Node:
        try:
            return self._nodes[node_id]
        except KeyError:
            raise UnknownNode(f"no node {node_id!r}") from None

    def label_of(self, node_id: str) -> str:
        return self.node(node_id).label

    def relation(self, name: str) -> RelationType:
        try:
            return self._relations[name]
        except KeyError:
            raise UnknownRelation(f"no relation {name!r}") from None

    def has_relation(self, name: str) -> bool:
        return name in self._relations

    def relations(self) -> list[RelationType]:
        return [self._relations[name] for name in sorted(self._relations)]

    def node_ids(self) -> list[str]:
        return sorted(self._nodes)

    def nodes(self) -> list[Node]:
        return [self._nodes[i] for i in sorted(self._nodes)]

    def edges(self) -> list[Edge]:
        return sorted(self._edges, key=edge_key)

    def neighbors(self, node_id: str) -> list[str]:
        if node_id not in self._nodes:
            raise UnknownNode(f"no node {node_id!r}")
        return sorted(self._adjacent[node_id])

    def incident_edges(self, node_id: str) -> list[Edge]:
        if node_id not in self._nodes:
            raise UnknownNode(f"no node {node_id!r}")
        return sorted(self._incident[node_id], key=edge_key)

    def degree(self, node_id: str) -> int:
        if node_id not in self._nodes:
            raise UnknownNode(f"no node {node_id!r}")
        return len(self._incident[node_id])

    def nodes_of_type(self, node_type: str) -> list[str]:
        return sorted(i for i, n in self._nodes.items() if n.node_type == node_type)

    def heads_for(self, relation: str, tail: str) -> list[str]:
        """All h with (h, relation, tail) in the graph, sorted."""
        return sorted(self._heads_by_rel_tail.get((relation, tail), ()))

    def tails_for(self, relation: str, head: str) -> list[str]:
        """All t with (head, relation, t) in the graph, sorted."""
        return sorted(self._tails_by_rel_head.get((relation, head), ()))

    # -- derived graphs -------------------------------------------------

    def restricted(self, edges: Iterable[Edge]) -> "KnowledgeGraph":
        """A new graph with the same nodes and relations but only `edges`.

        Every edge must already belong to this graph.
        """
        sub = KnowledgeGraph()
        sub._relations = dict(self._relations)
        sub._nodes = dict(self._nodes)
        sub._adjacent = {i: set() for i in self._nodes}
        sub._incident = {i: set() for i in self._nodes}
        for edge in edges:
            if edge not in self._edges:
                raise UnknownNode(f"edge {edge} is not part of the source graph")
            sub._edges.add(edge)
            sub._adjacent[edge.head].add(edge.tail)
            sub._adjacent[edge.tail].add(edge.head)
            sub._incident[edge.head].add(edge)
            sub._incident[edge.tail].add(edge)
            sub._heads_by_rel_tail.setdefault((edge.relation, edge.tail), set()).add(edge.head)
            sub._tails_by_rel_head.setdefault((edge.relation, edge.head), set()).add(edge.tail)
        return sub

    def distances_from(self, start: str, cutoff: int) -> dict[str, int]:
        """Undirected BFS distances from `start` up to and including `cutoff`."""
        if start not in self._nodes:
            raise UnknownNode(f"no node {start!r}")
        dist = {start: 0}
        frontier = deque([start])
        while frontier:
            current = frontier.popleft()
            d = dist[current]
            if d == cutoff:
                continue
            for nbr in self._adjacent[current]:
                if nbr not in dist:
                    dist[nbr] = d + 1
                    frontier.append(nbr)
        return dist


@dataclass(frozen=True)
class ContextSubgraph:
    """The k-hop neighborhood of a center node.

    edges are sorted canonically; nodes are all endpoints plus the center,
    sorted. An isolated center yields empty edges and a single node.
    """

    center: str
    k: int
    edges: tuple[Edge, ...]
    nodes: tuple[str, ...]


def k_hop_context(graph: KnowledgeGraph, center: str, k: int) -> ContextSubgraph:
    """Extract the k-hop context of `center` over undirected distances.

    An edge (a, b) belongs to the context iff both endpoints lie within
    distance k of the center and at least one lies strictly within k.
    Edges between two nodes both at exactly distance k are excluded: they
    describe the neighborhood's rim, not the center.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    dist = graph.distances_from(center, k)
    edges: set[Edge] = set()
    for node_id, d in dist.items():
        if d >= k:
            continue
        for edge in graph._incident[node_id]:
            other = edge.tail if edge.head == node_id else edge.head
            if other in dist:
                edges.add(edge)
    sorted_edges = tuple(sorted(edges, key=edge_key))
    node_ids: set[str] = {center}
    for edge in sorted_edges:
        node_ids.add(edge.head)
        node_ids.add(edge.tail)
    return ContextSubgraph(center=center, k=k, edges=sorted_edges, nodes=tuple(sorted(node_ids)))


@dataclass(frozen=True)
class RelationGroup:
    """Edges of one relation sharing the center on one side.

    direction is OUTGOING when the center is the head of every edge,
    INCOMING when it is the tail. nodes are the far endpoints, sorted;
    edges are sorted canonically and correspond 1:1 with nodes.
    """

    center: str
    relation: str
    direction: str
    nodes: tuple[str, ...]
    edges: tuple[Edge, ...]


def group_center_edges(center: str, edges: Iterable[Edge]) -> list[RelationGroup]:
    """Group the center-incident subset of `edges` by (relation, direction).

    Returns groups sorted by relation name, outgoing before incoming.
    Edges not touching the center are ignored.
    """
    buckets: dict[tuple[str, str], list[Edge]] = {}
    for edge in edges:
        if edge.head == center:
            buckets.setdefault((edge.relation, OUTGOING), []).append(edge)
        elif edge.tail == center:
            buckets.setdefault((edge.relation, INCOMING), []).append(edge)
    order = {OUTGOING: 0, INCOMING: 1}
    groups = []
    for (relation, direction) in sorted(buckets, key=lambda key: (key[0], order[key[1]])):
        bucket = sorted(buckets[(relation, direction)], key=edge_key)
        if direction == OUTGOING:
            nodes = tuple(edge.tail for edge in bucket)
        else:
            nodes = tuple(edge.head for edge in bucket)
        groups.append(
            RelationGroup(
                center=center,
                relation=relation,
                direction=direction,
                nodes=nodes,
                edges=tuple(bucket),
            )
        )
    return groups


def relation_groups(context: ContextSubgraph) -> list[RelationGroup]:
    """Relation groups of the context's center-incident edges."""
    return group_center_edges(context.center, context.edges)


def iter_non_center_edges(context: ContextSubgraph) -> Iterator[Edge]:
    """Context edges that do not touch the center, in canonical order."""
    for edge in context.edges:
        if edge.head != context.center and edge.tail != context.center:
            yield edge
