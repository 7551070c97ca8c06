"""Independent reference implementations used only by tests.

These deliberately use networkx (and straightforward enumeration) instead
of the package's own graph code, so that agreement between the two is
meaningful evidence rather than a tautology.
"""

from collections import Counter

import networkx as nx


def nx_khop_edges(edge_triples, center, k):
    """Reference k-hop edge set via networkx shortest paths.

    edge_triples: iterable of (head, relation, tail).
    Returns the set of triples whose endpoints both lie within undirected
    distance k of center with at least one strictly inside k.
    """
    g = nx.Graph()
    g.add_node(center)
    for head, _, tail in edge_triples:
        g.add_edge(head, tail)
    dist = nx.single_source_shortest_path_length(g, center, cutoff=k)
    keep = set()
    for head, relation, tail in edge_triples:
        if head in dist and tail in dist and min(dist[head], dist[tail]) < k:
            keep.add((head, relation, tail))
    return keep


def nx_within_two_hops(edge_triples, a, b):
    """True iff a and b lie within undirected distance 2 of each other."""
    g = nx.Graph()
    g.add_nodes_from([a, b])
    for head, _, tail in edge_triples:
        g.add_edge(head, tail)
    try:
        return nx.shortest_path_length(g, a, b) <= 2
    except nx.NetworkXNoPath:
        return False


def edge_multiset(partitions):
    """Multiset of edges over a list of partitions (each with .edges)."""
    counter = Counter()
    for part in partitions:
        counter.update(part.edges)
    return counter


def token_oracle(text, chars_per_token=4.0):
    """Character-count token estimate, written independently of the package."""
    if not text:
        return 0
    n = len(text) / chars_per_token
    whole = int(n)
    return whole if whole == n else whole + 1
