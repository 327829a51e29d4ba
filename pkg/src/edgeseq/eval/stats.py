"""Per-node structural statistics pooled over a sample of graphs."""

from __future__ import annotations

from typing import Iterable

import numpy as np

from ..graph import Graph

SUBSTRUCTURES = ("P4", "S3", "C4", "K4")

# Copies of (P4, S3, C4, K4) contained in each connected induced 4-node graph,
# keyed by (edge count, max degree). All six connected types are distinguished
# by this key.
_COPIES = {
    (3, 2): (1, 0, 0, 0),  # path
    (3, 3): (0, 1, 0, 0),  # star
    (4, 2): (4, 0, 1, 0),  # cycle
    (4, 3): (2, 1, 0, 0),  # triangle with pendant
    (5, 3): (6, 2, 1, 0),  # K4 minus an edge
    (6, 3): (12, 4, 3, 1),  # clique
}


def node_degrees(g: Graph) -> np.ndarray:
    return g.degrees().astype(float)


def node_clustering(g: Graph) -> np.ndarray:
    """Local clustering coefficient; 0 for nodes of degree < 2."""
    nbr = [set(a) for a in g.adjacency()]
    out = np.zeros(g.num_nodes)
    for v in range(g.num_nodes):
        d = len(nbr[v])
        if d < 2:
            continue
        tri = sum(len(nbr[u] & nbr[v]) for u in nbr[v]) // 2
        out[v] = 2.0 * tri / (d * (d - 1))
    return out


def connected_quadruples(g: Graph) -> Iterable[tuple[int, ...]]:
    """Each connected 4-node subset exactly once (ESU extension)."""
    nbr = [set(a) for a in g.adjacency()]

    def extend(sub: tuple[int, ...], ext: set[int], root: int):
        if len(sub) == 4:
            yield sub
            return
        ext = set(ext)
        excl = set(sub).union(*(nbr[u] for u in sub))
        while ext:
            w = ext.pop()
            new = {u for u in nbr[w] if u > root and u not in excl}
            yield from extend(sub + (w,), ext | new, root)

    for v in range(g.num_nodes):
        yield from extend((v,), {u for u in nbr[v] if u > v}, v)


def node_orbit_counts(g: Graph) -> np.ndarray:
    """Array ``[N, 4]``: per-node counts of (P4, S3, C4, K4) copies.

    Copies are subgraphs (not necessarily induced) on four nodes; a node is
    credited with every copy whose node set contains it.
    """
    nbr = [set(a) for a in g.adjacency()]
    counts = np.zeros((g.num_nodes, 4), dtype=np.int64)
    for quad in connected_quadruples(g):
        degs = [sum(1 for w in quad if w in nbr[u]) for u in quad]
        row = _COPIES[(sum(degs) // 2, max(degs))]
        for u in quad:
            counts[u] += row
    return counts


def degree_stats(sample: Iterable[Graph]) -> np.ndarray:
    return np.concatenate([node_degrees(g) for g in sample] or [np.zeros(0)])


def clustering_stats(sample: Iterable[Graph]) -> np.ndarray:
    return np.concatenate([node_clustering(g) for g in sample] or [np.zeros(0)])


def orbit_stats(sample: Iterable[Graph]) -> np.ndarray:
    """The four counts of every node, concatenated node after node."""
    return np.concatenate(
        [node_orbit_counts(g).astype(float).ravel() for g in sample] or [np.zeros(0)]
    )


STATISTICS = {"ADD": degree_stats, "ACC": clustering_stats, "AOC": orbit_stats}
