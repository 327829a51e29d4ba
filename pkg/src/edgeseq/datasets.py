"""Synthetic dataset generators, edge-list ingestion and train/test splitting."""

from __future__ import annotations

import hashlib
import json
import warnings
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from .edgelist import parse_blocks, write_graphs
from .graph import Graph, GraphError, bfs_order

# node-count range shared by all paper-replica datasets
NODE_RANGE = (4, 40)


class DatasetWarning(UserWarning):
    pass


@dataclass
class GraphDataset:
    graphs: list[Graph]
    name: str = "dataset"
    provenance: dict[str, Any] = field(default_factory=dict)

    def __len__(self):
        return len(self.graphs)

    def __iter__(self):
        return iter(self.graphs)

    def __getitem__(self, i):
        return self.graphs[i]

    @property
    def max_nodes(self) -> int:
        return max(g.num_nodes for g in self.graphs)

    @property
    def max_edges(self) -> int:
        return max(g.num_edges for g in self.graphs)

    def node_counts(self) -> list[int]:
        return [g.num_nodes for g in self.graphs]

    def stats(self) -> dict[str, float]:
        return {
            "num_graphs": len(self.graphs),
            "avg_nodes": float(np.mean([g.num_nodes for g in self.graphs])),
            "avg_edges": float(np.mean([g.num_edges for g in self.graphs])),
        }

    def content_hash(self) -> str:
        h = hashlib.sha256()
        for g in self.graphs:
            h.update(f"{g.num_nodes}:{g.edges};".encode())
        return h.hexdigest()[:16]

    def save(self, directory: str | Path) -> Path:
        """Write ``graphs.txt`` plus ``manifest.json`` into ``directory``."""
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        write_graphs(self.graphs, d / "graphs.txt")
        manifest = {
            "name": self.name,
            "provenance": self.provenance,
            "hash": self.content_hash(),
            **self.stats(),
        }
        (d / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
        return d


def ladder_graph(rungs: int) -> Graph:
    """P2 x Pn: two paths of ``rungs`` nodes joined rung by rung."""
    n = rungs
    edges = [(i, i + 1) for i in range(n - 1)]
    edges += [(n + i, n + i + 1) for i in range(n - 1)]
    edges += [(i, n + i) for i in range(n)]
    return Graph(2 * n, tuple(edges))


def gen_ladders(n_min: int = 2, n_max: int = 19, replicas: int = 10) -> GraphDataset:
    if not 2 <= n_min <= n_max:
        raise ValueError(f"need 2 <= n_min <= n_max, got {n_min}, {n_max}")
    graphs = [ladder_graph(n) for n in range(n_min, n_max + 1) for _ in range(replicas)]
    return GraphDataset(
        graphs, "ladders", {"generator": "ladders", "n_min": n_min, "n_max": n_max, "replicas": replicas}
    )


def _connected(n: int, edges: list[tuple[int, int]]) -> bool:
    adj: list[list[int]] = [[] for _ in range(n)]
    for u, v in edges:
        adj[u].append(v)
        adj[v].append(u)
    return len(bfs_order(adj, 0)) == n


def _thinned_clique(n: int, removal_p: float, rng: np.random.Generator, max_tries: int) -> list[tuple[int, int]]:
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    for _ in range(max_tries):
        keep = rng.random(len(pairs)) >= removal_p
        edges = [p for p, k in zip(pairs, keep) if k]
        if _connected(n, edges):
            return edges
    raise RuntimeError(f"clique of size {n} stayed disconnected after {max_tries} removal draws")


def gen_community(
    count: int = 1000,
    size_min: int = 8,
    size_max: int = 20,
    removal_p: float = 0.4,
    bridge_min: int = 1,
    bridge_max: int = 2,
    seed: int = 0,
    max_tries: int = 1000,
) -> GraphDataset:
    """Two thinned cliques joined by a few random bridges.

    A clique whose thinning disconnects it is re-thinned from scratch.
    """
    if not 2 <= size_min <= size_max:
        raise ValueError("need 2 <= size_min <= size_max")
    if not 0 <= removal_p < 1:
        raise ValueError("removal_p must lie in [0, 1)")
    if not 1 <= bridge_min <= bridge_max or bridge_max > size_min * size_min:
        raise ValueError("invalid bridge range")
    rng = np.random.default_rng(seed)
    graphs = []
    for _ in range(count):
        a = int(rng.integers(size_min, size_max + 1))
        b = int(rng.integers(size_min, size_max + 1))
        edges = _thinned_clique(a, removal_p, rng, max_tries)
        edges += [(u + a, v + a) for u, v in _thinned_clique(b, removal_p, rng, max_tries)]
        k = int(rng.integers(bridge_min, bridge_max + 1))
        cross = rng.choice(a * b, size=k, replace=False)
        edges += [(int(c) // b, a + int(c) % b) for c in cross]
        graphs.append(Graph(a + b, tuple(edges)))
    return GraphDataset(
        graphs,
        "community",
        {
            "generator": "community",
            "count": count,
            "size_min": size_min,
            "size_max": size_max,
            "removal_p": removal_p,
            "bridge_min": bridge_min,
            "bridge_max": bridge_max,
            "seed": seed,
        },
    )


def ego_nodes(adj: list[list[int]], center: int, radius: int) -> list[int]:
    dist = {center: 0}
    frontier = [center]
    for d in range(1, radius + 1):
        nxt = []
        for u in frontier:
            for w in adj[u]:
                if w not in dist:
                    dist[w] = d
                    nxt.append(w)
        frontier = nxt
    return sorted(dist)


def extract_ego(
    network: Graph, radius: int = 2, min_nodes: int = NODE_RANGE[0], max_nodes: int | None = None
) -> GraphDataset:
    """One induced ego network per node, dropping those outside the size range."""
    if radius < 1:
        raise ValueError("radius must be >= 1")
    adj = network.adjacency()
    graphs = []
    for v in range(network.num_nodes):
        nodes = ego_nodes(adj, v, radius)
        if len(nodes) < min_nodes or (max_nodes is not None and len(nodes) > max_nodes):
            continue
        graphs.append(network.subgraph(nodes))
    return GraphDataset(
        graphs, "ego", {"generator": "ego", "radius": radius, "min_nodes": min_nodes, "max_nodes": max_nodes}
    )


def load_edge_lists(
    path: str | Path,
    name: str | None = None,
    node_range: tuple[int, int] | None = NODE_RANGE,
) -> GraphDataset:
    """Read every graph block from a file, or from each ``*.txt`` in a directory.

    Malformed lines raise :class:`~edgeseq.edgelist.EdgeListParseError`.
    Non-simple, disconnected and out-of-range graphs are skipped with a
    :class:`DatasetWarning`.
    """
    path = Path(path)
    files = sorted(path.glob("*.txt")) if path.is_dir() else [path]
    graphs = []
    for f in files:
        for block in parse_blocks(f.read_text(), str(f)):
            where = f"{f}:{block.first_line}"
            if any(u == v for u, v in block.edges):
                warnings.warn(f"{where}: self-loop, graph skipped", DatasetWarning, stacklevel=2)
                continue
            if len({(min(e), max(e)) for e in block.edges}) != len(block.edges):
                warnings.warn(f"{where}: duplicate edge, graph skipped", DatasetWarning, stacklevel=2)
                continue
            try:
                g = Graph.from_edges(block.edges, block.num_nodes)
            except GraphError as exc:
                warnings.warn(f"{where}: {exc}, graph skipped", DatasetWarning, stacklevel=2)
                continue
            if not g.is_connected():
                warnings.warn(f"{where}: graph not connected, skipped", DatasetWarning, stacklevel=2)
                continue
            if node_range is not None and not node_range[0] <= g.num_nodes <= node_range[1]:
                warnings.warn(
                    f"{where}: {g.num_nodes} nodes outside {node_range}, skipped", DatasetWarning, stacklevel=2
                )
                continue
            graphs.append(g)
    return GraphDataset(graphs, name or path.stem, {"source": str(path)})


@dataclass(frozen=True)
class SplitSpec:
    test_fraction: float = 0.3
    stratified: bool = False
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.test_fraction < 1:
            raise ValueError("test_fraction must lie in (0, 1)")


def split(ds: GraphDataset, spec: SplitSpec) -> tuple[GraphDataset, GraphDataset]:
    """Seeded train/test partition.

    Stratified splits take ``round(test_fraction * size)`` graphs out of every
    isomorphism class.
    """
    rng = np.random.default_rng(spec.seed)
    if spec.stratified:
        from .eval.canonical import canonical_form

        groups: dict[bytes, list[int]] = defaultdict(list)
        for i, g in enumerate(ds.graphs):
            groups[canonical_form(g)].append(i)
        test_idx = []
        for key in sorted(groups):
            members = groups[key]
            k = int(round(spec.test_fraction * len(members)))
            test_idx += [members[j] for j in rng.permutation(len(members))[:k]]
    else:
        k = int(round(spec.test_fraction * len(ds)))
        test_idx = [int(i) for i in rng.permutation(len(ds))[:k]]
    test_set = set(test_idx)
    train = [g for i, g in enumerate(ds.graphs) if i not in test_set]
    test = [ds.graphs[i] for i in sorted(test_set)]
    prov = {"parent": ds.name, "split": {"test_fraction": spec.test_fraction, "stratified": spec.stratified, "seed": spec.seed}}
    return (
        GraphDataset(train, f"{ds.name}-train", dict(prov)),
        GraphDataset(test, f"{ds.name}-test", dict(prov)),
    )


def default_split_spec(name: str, seed: int = 0) -> SplitSpec:
    if name == "ladders":
        return SplitSpec(0.1, True, seed)
    return SplitSpec(0.3, False, seed)
