"""Undirected simple graphs, node orderings and the ordered edge-sequence codec."""

from __future__ import annotations

import enum
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np


class GraphError(ValueError):
    pass


@dataclass(frozen=True)
class Graph:
    """Simple undirected graph on nodes ``0..num_nodes-1``.

    Edges are stored as a sorted tuple of ``(u, v)`` pairs with ``u < v``.
    """

    num_nodes: int
    edges: tuple[tuple[int, int], ...] = ()

    def __post_init__(self):
        if self.num_nodes < 0:
            raise GraphError("negative node count")
        canon = set()
        for u, v in self.edges:
            u, v = int(u), int(v)
            if u == v:
                raise GraphError(f"self-loop on node {u}")
            if not (0 <= u < self.num_nodes and 0 <= v < self.num_nodes):
                raise GraphError(f"edge ({u}, {v}) out of range for {self.num_nodes} nodes")
            e = (u, v) if u < v else (v, u)
            if e in canon:
                raise GraphError(f"duplicate edge {e}")
            canon.add(e)
        object.__setattr__(self, "edges", tuple(sorted(canon)))

    @classmethod
    def from_edges(cls, edges: Iterable[tuple[int, int]], num_nodes: int | None = None) -> Graph:
        """Build a graph, collapsing duplicate edges in either orientation."""
        uniq = {(min(u, v), max(u, v)) for u, v in edges}
        if num_nodes is None:
            num_nodes = 1 + max((v for _, v in uniq), default=-1)
        return cls(num_nodes, tuple(uniq))

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    def adjacency(self) -> list[list[int]]:
        """Neighbor lists, each sorted ascending."""
        adj: list[list[int]] = [[] for _ in range(self.num_nodes)]
        for u, v in self.edges:
            adj[u].append(v)
            adj[v].append(u)
        for nb in adj:
            nb.sort()
        return adj

    def adjacency_matrix(self) -> np.ndarray:
        a = np.zeros((self.num_nodes, self.num_nodes), dtype=np.uint8)
        if self.edges:
            e = np.asarray(self.edges)
            a[e[:, 0], e[:, 1]] = 1
            a[e[:, 1], e[:, 0]] = 1
        return a

    def degrees(self) -> np.ndarray:
        deg = np.zeros(self.num_nodes, dtype=np.int64)
        for u, v in self.edges:
            deg[u] += 1
            deg[v] += 1
        return deg

    def is_connected(self) -> bool:
        if self.num_nodes == 0:
            return False
        return len(bfs_order(self.adjacency(), 0)) == self.num_nodes

    def relabel(self, mapping: Sequence[int]) -> Graph:
        """Return the graph with node ``i`` renamed to ``mapping[i]``."""
        return Graph(self.num_nodes, tuple((mapping[u], mapping[v]) for u, v in self.edges))

    def subgraph(self, nodes: Iterable[int]) -> Graph:
        """Induced subgraph, nodes renumbered in ascending original order."""
        keep = sorted(set(nodes))
        index = {v: i for i, v in enumerate(keep)}
        edges = tuple(
            (index[u], index[v]) for u, v in self.edges if u in index and v in index
        )
        return Graph(len(keep), edges)


def bfs_order(adj: list[list[int]], start: int) -> list[int]:
    seen = [False] * len(adj)
    seen[start] = True
    order = [start]
    queue = deque([start])
    while queue:
        u = queue.popleft()
        for w in adj[u]:
            if not seen[w]:
                seen[w] = True
                order.append(w)
                queue.append(w)
    return order


def dfs_order(adj: list[list[int]], start: int) -> list[int]:
    """Preorder of a recursive depth-first visit, neighbors ascending."""
    seen = [False] * len(adj)
    seen[start] = True
    order = [start]
    stack = [iter(adj[start])]
    while stack:
        for w in stack[-1]:
            if not seen[w]:
                seen[w] = True
                order.append(w)
                stack.append(iter(adj[w]))
                break
        else:
            stack.pop()
    return order


class OrderingKind(str, enum.Enum):
    BF_FIXED = "BF_FIXED"
    DF_FIXED = "DF_FIXED"
    BF_RANDOM_PER_EPOCH = "BF_RANDOM_PER_EPOCH"
    DF_RANDOM_PER_EPOCH = "DF_RANDOM_PER_EPOCH"
    UNIFORM_RANDOM = "UNIFORM_RANDOM"

    @property
    def per_epoch(self) -> bool:
        return self in (OrderingKind.BF_RANDOM_PER_EPOCH, OrderingKind.DF_RANDOM_PER_EPOCH)

    @property
    def breadth_first(self) -> bool:
        return self in (OrderingKind.BF_FIXED, OrderingKind.BF_RANDOM_PER_EPOCH)


@dataclass(frozen=True)
class OrderingStrategy:
    kind: OrderingKind = OrderingKind.BF_FIXED
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "kind", OrderingKind(self.kind))

    def rng(self, graph_index: int = 0, epoch: int = 0) -> np.random.Generator:
        if self.kind.per_epoch:
            return np.random.default_rng([self.seed, graph_index, epoch])
        return np.random.default_rng([self.seed, graph_index])


@dataclass(frozen=True)
class NodeOrdering:
    """``ids[v]`` is the ID assigned to node ``v``."""

    ids: tuple[int, ...]

    def __post_init__(self):
        if sorted(self.ids) != list(range(len(self.ids))):
            raise GraphError("ordering is not a bijection onto 0..N-1")

    def inverse(self) -> tuple[int, ...]:
        inv = [0] * len(self.ids)
        for v, i in enumerate(self.ids):
            inv[i] = v
        return tuple(inv)


def order_nodes(
    g: Graph, strategy: OrderingStrategy, epoch: int = 0, graph_index: int = 0
) -> NodeOrdering:
    """Assign node IDs by a seeded graph visit (or a uniform shuffle).

    The start node is drawn from a generator keyed on ``(seed, graph_index)``;
    per-epoch kinds also mix in ``epoch``. Neighbors are visited in ascending
    index order.
    """
    if g.num_nodes == 0:
        raise GraphError("empty graph")
    adj = g.adjacency()
    rng = strategy.rng(graph_index, epoch)
    if strategy.kind is OrderingKind.UNIFORM_RANDOM:
        if not g.is_connected():
            raise GraphError("graph not connected")
        visit = [int(v) for v in rng.permutation(g.num_nodes)]
    else:
        start = int(rng.integers(g.num_nodes))
        visit = bfs_order(adj, start) if strategy.kind.breadth_first else dfs_order(adj, start)
        if len(visit) != g.num_nodes:
            raise GraphError("graph not connected")
    ids = [0] * g.num_nodes
    for i, v in enumerate(visit):
        ids[v] = i
    return NodeOrdering(tuple(ids))


@dataclass(frozen=True)
class OrderedEdgeSequence:
    pairs: tuple[tuple[int, int], ...] = field(default_factory=tuple)

    def __len__(self):
        return len(self.pairs)

    def __iter__(self):
        return iter(self.pairs)

    @property
    def sources(self) -> tuple[int, ...]:
        return extract_source(self)

    @property
    def destinations(self) -> tuple[int, ...]:
        return extract_destination(self)


def encode(g: Graph, ordering: NodeOrdering) -> OrderedEdgeSequence:
    ids = ordering.ids
    if len(ids) != g.num_nodes:
        raise GraphError("ordering size does not match graph")
    pairs = sorted(
        (min(ids[u], ids[v]), max(ids[u], ids[v])) for u, v in g.edges
    )
    return OrderedEdgeSequence(tuple(pairs))


def decode(s: OrderedEdgeSequence | Sequence[tuple[int, int]]) -> Graph:
    """Rebuild a graph from ID pairs.

    Node IDs are renumbered densely in ascending order; duplicate pairs collapse.
    """
    pairs = list(s.pairs if isinstance(s, OrderedEdgeSequence) else s)
    if not pairs:
        raise GraphError("empty sequence")
    for x, y in pairs:
        if x == y:
            raise GraphError(f"self-loop pair ({x}, {y})")
    ids = sorted({i for p in pairs for i in p})
    dense = {i: k for k, i in enumerate(ids)}
    return Graph.from_edges(((dense[x], dense[y]) for x, y in pairs), num_nodes=len(ids))


def extract_source(s: OrderedEdgeSequence) -> tuple[int, ...]:
    return tuple(x for x, _ in s.pairs)


def extract_destination(s: OrderedEdgeSequence) -> tuple[int, ...]:
    return tuple(y for _, y in s.pairs)


def to_sequence(
    g: Graph, strategy: OrderingStrategy, epoch: int = 0, graph_index: int = 0
) -> OrderedEdgeSequence:
    return encode(g, order_nodes(g, strategy, epoch, graph_index))


def is_isomorphic_relabeling(g: Graph, h: Graph, mapping: Sequence[int]) -> bool:
    """True if ``mapping`` carries the edge set of ``g`` exactly onto ``h``."""
    return g.num_nodes == h.num_nodes and g.relabel(mapping).edges == h.edges
