import pathlib
import sys

sys.path.insert(0, str(pathlib.Path(__file__).parent))

import pytest

from kg2ft.graph import Edge, KnowledgeGraph, Node, RelationType

DATA_DIR = pathlib.Path(__file__).parent / "data"


def make_relation(name, **overrides):
    """A relation with generic but well-formed templates."""
    defaults = dict(
        name=name,
        forward_phrase="{head} " + name + " {tail}",
        inverse_phrase="{tail} is linked by " + name + " to {head}",
        question_forward="What " + name + " {tail}?",
        question_inverse="What does {head} " + name + "?",
        question_multihop="What is connected to {head} through " + name + "?",
    )
    defaults.update(overrides)
    return RelationType(**defaults)


def build_graph(triples, node_types=None, attributes=None, relations=None):
    """Assemble a KnowledgeGraph from (head, relation, tail) triples.

    Nodes are created on first mention; labels default to the id.
    """
    node_types = node_types or {}
    attributes = attributes or {}
    graph = KnowledgeGraph()
    names = {relation for _, relation, _ in triples}
    by_name = {r.name: r for r in (relations or [])}
    for name in sorted(names | set(by_name)):
        graph.add_relation(by_name.get(name) or make_relation(name))
    seen = set()
    for head, _, tail in triples:
        for node_id in (head, tail):
            if node_id not in seen:
                seen.add(node_id)
                graph.add_node(
                    Node(
                        id=node_id,
                        label=node_id,
                        node_type=node_types.get(node_id, "entity"),
                        attributes=attributes.get(node_id, {}),
                    )
                )
    for head, relation, tail in triples:
        graph.add_edge(Edge(head, relation, tail))
    return graph


@pytest.fixture(scope="session")
def data_dir():
    return DATA_DIR
