"""Split a context subgraph into partitions that respect budgets.

Two budgets apply to every training sample: a node budget (at most n_max
distinct nodes per partition, center included) and a token budget on the
rendered text. Partitioning is purely structural and deterministic; token
enforcement happens in fit_to_budget, which re-partitions oversized pieces
with a halved node budget until they fit or cannot shrink further.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Sequence

from .errors import InvalidBudget
from .graph import (
    ContextSubgraph,
    Edge,
    edge_key,
    iter_non_center_edges,
    relation_groups,
)


def estimate_tokens(text: str, chars_per_token: float = 4.0) -> int:
    """Character-count estimate: ceil(len / chars_per_token); empty -> 0."""
    if chars_per_token <= 0:
        raise InvalidBudget(f"chars_per_token must be positive, got {chars_per_token}")
    if not text:
        return 0
    return math.ceil(len(text) / chars_per_token)


@dataclass(frozen=True)
class TokenBudget:
    t_max: int = 256
    chars_per_token: float = 4.0

    def __post_init__(self):
        if self.t_max < 32:
            raise InvalidBudget(f"t_max must be >= 32, got {self.t_max}")
        if self.chars_per_token <= 0:
            raise InvalidBudget(f"chars_per_token must be positive, got {self.chars_per_token}")

    def estimate(self, text: str) -> int:
        return estimate_tokens(text, self.chars_per_token)

    def fits(self, text: str) -> bool:
        return self.estimate(text) <= self.t_max


@dataclass(frozen=True)
class Partition:
    """One slice of a context: a subset of its edges plus the center.

    oversized marks a partition whose rendered text still exceeded the
    token budget after re-partitioning bottomed out; such partitions are
    emitted flagged rather than silently truncated.
    """

    center: str
    edges: tuple[Edge, ...]
    nodes: tuple[str, ...]
    oversized: bool = False

    @property
    def node_count(self) -> int:
        return len(self.nodes)


class _Builder:
    __slots__ = ("center", "edges", "nodes")

    def __init__(self, center: str):
        self.center = center
        self.edges: list[Edge] = []
        self.nodes: set[str] = {center}

    def add(self, edges: Sequence[Edge], nodes: Sequence[str]) -> None:
        self.edges.extend(edges)
        self.nodes.update(nodes)

    def build(self) -> Partition:
        return Partition(
            center=self.center,
            edges=tuple(sorted(self.edges, key=edge_key)),
            nodes=tuple(sorted(self.nodes)),
        )


def partition_context(context: ContextSubgraph, n_max: int) -> list[Partition]:
    """Greedy relation-group packing under the node budget.

    Groups are taken in their canonical order. A group joins the current
    partition when its unseen nodes fit; otherwise it starts a fresh one.
    Groups with more than n_max - 1 neighbors are chunked into runs of at
    most n_max - 1, the final partial run staying open so later groups can
    pack into it. Edges not touching the center (k >= 2 contexts) are then
    placed into the first partition already holding both endpoints, else
    the first with room for the missing endpoint, else a new partition.
    Every context edge lands in exactly one partition.
    """
    if n_max < 2:
        raise InvalidBudget(f"n_max must be >= 2, got {n_max}")
    center = context.center
    builders: list[_Builder] = []
    current = _Builder(center)
    builders.append(current)

    for group in relation_groups(context):
        new_nodes = [n for n in group.nodes if n not in current.nodes]
        if len(current.nodes) + len(new_nodes) <= n_max:
            current.add(group.edges, new_nodes)
            continue
        if len(group.nodes) <= n_max - 1:
            current = _Builder(center)
            builders.append(current)
            current.add(group.edges, group.nodes)
            continue
        # Oversized group: one neighbor at a time, n_max - 1 per partition.
        if current.edges:
            current = _Builder(center)
            builders.append(current)
        for node, edge in zip(group.nodes, group.edges):
            if len(current.nodes) >= n_max:
                current = _Builder(center)
                builders.append(current)
            current.add((edge,), (node,))

    for edge in iter_non_center_edges(context):
        placed = False
        for builder in builders:
            if edge.head in builder.nodes and edge.tail in builder.nodes:
                builder.edges.append(edge)
                placed = True
                break
        if not placed:
            for builder in builders:
                missing = {edge.head, edge.tail} - builder.nodes
                if missing and len(builder.nodes) + len(missing) <= n_max:
                    builder.add((edge,), tuple(missing))
                    placed = True
                    break
        if not placed:
            # Atomic overflow: reachable only at n_max == 2, documented.
            builder = _Builder(center)
            builders.append(builder)
            builder.add((edge,), (edge.head, edge.tail))

    return [b.build() for b in builders if b.edges]


def fit_to_budget(
    sample_text: Callable[[Partition], str],
    context: ContextSubgraph,
    n_max: int,
    budget: TokenBudget,
) -> list[Partition]:
    """Partition, then shrink any partition whose rendered text overflows.

    sample_text must render the longest text a partition will produce (for
    training, context plus the longest appended QA pair). Oversized
    partitions are re-partitioned with the node budget halved (floor 2);
    a partition that still overflows once it is a single edge, or once the
    floor is reached without structural progress, is returned with its
    oversized flag set instead of being dropped or truncated.
    """
    out: list[Partition] = []
    for part in partition_context(context, n_max):
        _shrink(sample_text, part, n_max, context.k, budget, out)
    return out


def _shrink(
    sample_text: Callable[[Partition], str],
    part: Partition,
    cap: int,
    k: int,
    budget: TokenBudget,
    out: list[Partition],
) -> None:
    if budget.fits(sample_text(part)):
        out.append(part)
        return
    if len(part.edges) == 1 or cap <= 2:
        out.append(replace(part, oversized=True))
        return
    half = max(2, cap // 2)
    sub_context = ContextSubgraph(center=part.center, k=k, edges=part.edges, nodes=part.nodes)
    subparts = partition_context(sub_context, half)
    if len(subparts) == 1:
        if half <= 2:
            out.append(replace(subparts[0], oversized=True))
        else:
            _shrink(sample_text, subparts[0], half, k, budget, out)
        return
    for sub in subparts:
        _shrink(sample_text, sub, half, k, budget, out)
