"""Exact canonical certificates for small graphs.

Color refinement yields an ordered partition; individualization-refinement
then searches every discrete partition reachable from it and keeps the
lexicographically smallest permuted adjacency encoding. Branches equivalent
under a known automorphism (twin swaps, or maps discovered from equal leaves)
are skipped.
"""

from __future__ import annotations

import numpy as np

from ..graph import Graph

MAX_NODES = 64


def _refine(adj: list[list[int]], colors: list[int]) -> list[int]:
    n = len(adj)
    num = len(set(colors))
    while True:
        sigs = [(colors[v], tuple(sorted(colors[w] for w in adj[v]))) for v in range(n)]
        rank = {s: i for i, s in enumerate(sorted(set(sigs)))}
        colors = [rank[s] for s in sigs]
        if len(rank) == num:
            return colors
        num = len(rank)


def _individualize(colors: list[int], v: int) -> list[int]:
    c = colors[v]
    raw = [2 * x + (1 if (x == c and u != v) else 0) for u, x in enumerate(colors)]
    rank = {x: i for i, x in enumerate(sorted(set(raw)))}
    return [rank[x] for x in raw]


class _Search:
    def __init__(self, g: Graph):
        self.n = g.num_nodes
        self.adj = g.adjacency()
        self.edges = np.asarray(g.edges, dtype=np.int64).reshape(-1, 2)
        self.best: bytes | None = None
        self.best_lab: list[int] | None = None
        self.autos: list[list[int]] = []
        self.nbr = [frozenset(a) for a in self.adj]

    def encode(self, lab: list[int]) -> bytes:
        n = self.n
        a = np.zeros((n, n), dtype=bool)
        if len(self.edges):
            lab_arr = np.asarray(lab)
            x, y = lab_arr[self.edges[:, 0]], lab_arr[self.edges[:, 1]]
            a[np.minimum(x, y), np.maximum(x, y)] = True
        return np.packbits(a[np.triu_indices(n, 1)]).tobytes()

    def leaf(self, colors: list[int]):
        code = self.encode(colors)
        if self.best is None or code < self.best:
            self.best, self.best_lab = code, colors
        elif code == self.best:
            inv = [0] * self.n
            for v, c in enumerate(self.best_lab):
                inv[c] = v
            gamma = [inv[colors[u]] for u in range(self.n)]
            if any(gamma[u] != u for u in range(self.n)):
                self.autos.append(gamma)

    def _twins(self, u: int, w: int) -> bool:
        return self.nbr[u] - {w} == self.nbr[w] - {u}

    def _same_orbit(self, explored: list[int], w: int, prefix: list[int]) -> bool:
        gens = [a for a in self.autos if all(a[p] == p for p in prefix)]
        if not gens:
            return False
        # orbit of w under the group generated by gens
        orbit = {w}
        frontier = [w]
        while frontier:
            x = frontier.pop()
            for a in gens:
                y = a[x]
                if y not in orbit:
                    orbit.add(y)
                    frontier.append(y)
        return any(e in orbit for e in explored)

    def run(self, colors: list[int], prefix: list[int]):
        cells: dict[int, list[int]] = {}
        for v, c in enumerate(colors):
            cells.setdefault(c, []).append(v)
        if len(cells) == self.n:
            self.leaf(colors)
            return
        target = min((len(m), c) for c, m in cells.items() if len(m) > 1)[1]
        explored: list[int] = []
        for w in cells[target]:
            if any(self._twins(e, w) for e in explored):
                continue
            if self._same_orbit(explored, w, prefix):
                continue
            explored.append(w)
            self.run(_refine(self.adj, _individualize(colors, w)), prefix + [w])


def canonical_labeling(g: Graph) -> list[int]:
    """A relabeling ``lab`` such that ``g.relabel(lab)`` is the canonical representative."""
    if g.num_nodes > MAX_NODES:
        raise ValueError(f"canonical form limited to {MAX_NODES} nodes, got {g.num_nodes}")
    if g.num_nodes == 0:
        return []
    s = _Search(g)
    s.run(_refine(s.adj, [0] * g.num_nodes), [])
    return s.best_lab


def canonical_form(g: Graph) -> bytes:
    """Byte certificate: equal for two graphs iff they are isomorphic."""
    if g.num_nodes > MAX_NODES:
        raise ValueError(f"canonical form limited to {MAX_NODES} nodes, got {g.num_nodes}")
    if g.num_nodes == 0:
        return b"\x00"
    s = _Search(g)
    s.run(_refine(s.adj, [0] * g.num_nodes), [])
    return bytes([g.num_nodes]) + s.best


def are_isomorphic(g: Graph, h: Graph) -> bool:
    if g.num_nodes != h.num_nodes or g.num_edges != h.num_edges:
        return False
    return canonical_form(g) == canonical_form(h)
