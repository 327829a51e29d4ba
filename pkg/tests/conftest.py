import itertools

import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

from edgeseq.graph import Graph

settings.register_profile(
    "default", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


def random_connected(rng: np.random.Generator, n: int, p: float = 0.3) -> Graph:
    """Random spanning tree plus independent extra edges."""
    perm = rng.permutation(n)
    edges = {tuple(sorted((int(perm[i]), int(perm[rng.integers(i)])))) for i in range(1, n)}
    for u, v in itertools.combinations(range(n), 2):
        if rng.random() < p:
            edges.add((u, v))
    return Graph(n, tuple(edges))


def brute_isomorphic(g: Graph, h: Graph) -> bool:
    """All-permutations isomorphism test."""
    if g.num_nodes != h.num_nodes or g.num_edges != h.num_edges:
        return False
    target = set(h.edges)
    for perm in itertools.permutations(range(g.num_nodes)):
        if all(tuple(sorted((perm[u], perm[v]))) in target for u, v in g.edges):
            return True
    return False


@st.composite
def connected_graphs(draw, min_nodes=1, max_nodes=12):
    n = draw(st.integers(min_nodes, max_nodes))
    seed = draw(st.integers(0, 2**32 - 1))
    p = draw(st.floats(0.0, 0.8))
    return random_connected(np.random.default_rng(seed), n, p)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def brute_certificate(g: Graph) -> tuple:
    """Smallest sorted edge list over every node permutation (n <= 7 in practice)."""
    best = None
    for perm in itertools.permutations(range(g.num_nodes)):
        key = tuple(sorted(tuple(sorted((perm[u], perm[v]))) for u, v in g.edges))
        if best is None or key < best:
            best = key
    return (g.num_nodes, best)


def search_isomorphic(g: Graph, h: Graph) -> bool:
    """Exhaustive search for an edge-preserving bijection, pruned by degree and partial adjacency."""
    n = g.num_nodes
    if n != h.num_nodes or g.num_edges != h.num_edges:
        return False
    ag = [set(a) for a in g.adjacency()]
    ah = [set(a) for a in h.adjacency()]
    if sorted(map(len, ag)) != sorted(map(len, ah)):
        return False
    mapping: dict[int, int] = {}
    used: set[int] = set()

    def extend(u: int) -> bool:
        if u == n:
            return True
        for w in range(n):
            if w in used or len(ah[w]) != len(ag[u]):
                continue
            if all((mapping[x] in ah[w]) == (x in ag[u]) for x in range(u)):
                mapping[u] = w
                used.add(w)
                if extend(u + 1):
                    return True
                used.discard(w)
                del mapping[u]
        return False

    return extend(0)


def brute_orbit_counts(g: Graph) -> np.ndarray:
    """Per-node (P4, S3, C4, K4) copy counts from every quadruple and every edge subset on it."""
    adj = [set(a) for a in g.adjacency()]
    counts = np.zeros((g.num_nodes, 4), dtype=np.int64)
    for quad in itertools.combinations(range(g.num_nodes), 4):
        present = [e for e in itertools.combinations(quad, 2) if e[1] in adj[e[0]]]
        for k in (3, 4, 6):
            for sub in itertools.combinations(present, k):
                deg = {u: 0 for u in quad}
                for u, v in sub:
                    deg[u] += 1
                    deg[v] += 1
                d = sorted(deg.values())
                if d[0] == 0:
                    continue
                if k == 3:
                    # three edges touching all four nodes form a tree: path or star
                    col = 1 if d[-1] == 3 else 0
                elif k == 4:
                    if d != [2, 2, 2, 2]:
                        continue
                    col = 2
                else:
                    col = 3
                for u in quad:
                    counts[u, col] += 1
    return counts
