"""Reference generators: Erdos-Renyi, Barabasi-Albert and an adjacency-bit GRU."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .datasets import GraphDataset
from .eval.metrics import shared_histograms
from .eval.stats import STATISTICS
from .graph import Graph, OrderingKind, OrderingStrategy, order_nodes
from .model import TrainConfig, TrainingError
from .nn import Adam, Embedding, GRUStack, Linear, Module, sigmoid

# per-node statistics whose histograms the fitted models must match
FIT_STATISTICS = ("ADD", "ACC")

DEFAULT_P_GRID = tuple(round(0.05 * k, 2) for k in range(1, 20))
DEFAULT_M_GRID = (1, 2, 3, 4, 5)


def emd_1d(h1: np.ndarray, h2: np.ndarray) -> float:
    """Earth mover distance between two normalized histograms on unit-spaced bins."""
    h1 = np.asarray(h1, dtype=float)
    h2 = np.asarray(h2, dtype=float)
    if h1.shape != h2.shape:
        raise ValueError(f"bin-count mismatch: {h1.shape} vs {h2.shape}")
    return float(np.abs(np.cumsum(h1) - np.cumsum(h2)).sum())


def fit_distance(train: Sequence[Graph], calib: Sequence[Graph], statistics=FIT_STATISTICS) -> float:
    """Sum over statistics of the EMD between 100-bin joint-range histograms."""
    total = 0.0
    for name in statistics:
        f = STATISTICS[name]
        hp, hq = shared_histograms(f(train), f(calib))
        total += emd_1d(hp.counts / hp.counts.sum(), hq.counts / hq.counts.sum())
    return total


def is_degenerate(g: Graph) -> bool:
    """No edges or more than one component; such samples are kept but flagged."""
    return g.num_edges == 0 or not g.is_connected()


# ---------------------------------------------------------------------------
# Erdos-Renyi and Barabasi-Albert


@dataclass
class ERModel:
    node_count_pool: list[int]
    p: float

    def __post_init__(self):
        if not self.node_count_pool:
            raise ValueError("empty node-count pool")
        if not 0 <= self.p <= 1:
            raise ValueError("p must lie in [0, 1]")


@dataclass
class BAModel:
    node_count_pool: list[int]
    m: int

    def __post_init__(self):
        if not self.node_count_pool:
            raise ValueError("empty node-count pool")
        if self.m < 1 or self.m >= min(self.node_count_pool):
            raise ValueError(f"m={self.m} must satisfy 1 <= m < min node count {min(self.node_count_pool)}")


def er_graph(n: int, p: float, rng: np.random.Generator) -> Graph:
    iu, ju = np.triu_indices(n, 1)
    keep = rng.random(iu.size) < p
    return Graph(n, tuple(zip(iu[keep].tolist(), ju[keep].tolist())))


def ba_graph(n: int, m: int, rng: np.random.Generator) -> Graph:
    """Preferential attachment grown from a clique on ``m + 1`` nodes."""
    if not 1 <= m < n:
        raise ValueError(f"need 1 <= m < n, got m={m}, n={n}")
    edges = [(u, v) for u in range(m + 1) for v in range(u + 1, m + 1)]
    deg = np.zeros(n)
    deg[: m + 1] = m
    for v in range(m + 1, n):
        targets = rng.choice(v, size=m, replace=False, p=deg[:v] / deg[:v].sum())
        for u in targets:
            edges.append((int(u), v))
        deg[targets] += 1
        deg[v] = m
    return Graph(n, tuple(edges))


def _pick_n(pool: Sequence[int], rng: np.random.Generator) -> int:
    return int(pool[rng.integers(len(pool))])


def gen_er(model: ERModel, seed) -> Graph:
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    return er_graph(_pick_n(model.node_count_pool, rng), model.p, rng)


def gen_ba(model: BAModel, seed) -> Graph:
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    return ba_graph(_pick_n(model.node_count_pool, rng), model.m, rng)


def _fit(train: GraphDataset, grid, make: Callable, gen: Callable, seed: int, statistics):
    if not len(train):
        raise ValueError("empty training set")
    grid = sorted(grid)
    if not grid:
        raise ValueError("empty parameter grid")
    pool = train.node_counts()
    best, best_d, scores = None, math.inf, {}
    for value in grid:
        model = make(pool, value)
        rng = np.random.default_rng(seed)
        calib = [gen(model, rng) for _ in range(len(train))]
        d = fit_distance(train.graphs, calib, statistics)
        scores[value] = d
        # strict comparison keeps the smaller parameter on ties
        if d < best_d:
            best, best_d = model, d
    return best, scores


def fit_er(train: GraphDataset, p_grid=DEFAULT_P_GRID, seed: int = 0, statistics=FIT_STATISTICS) -> ERModel:
    """Grid value of ``p`` whose calibration sample (``|train|`` graphs) is closest
    to the training set under ``fit_distance``; ties go to the smaller value."""
    return fit_er_scored(train, p_grid, seed, statistics)[0]


def fit_er_scored(train: GraphDataset, p_grid=DEFAULT_P_GRID, seed: int = 0, statistics=FIT_STATISTICS):
    return _fit(train, p_grid, ERModel, gen_er, seed, statistics)


def fit_ba(train: GraphDataset, m_grid=DEFAULT_M_GRID, seed: int = 0, statistics=FIT_STATISTICS) -> BAModel:
    """Like ``fit_er`` over the attachment count ``m``; values with ``m >= min n`` are skipped."""
    return fit_ba_scored(train, m_grid, seed, statistics)[0]


def fit_ba_scored(train: GraphDataset, m_grid=DEFAULT_M_GRID, seed: int = 0, statistics=FIT_STATISTICS):
    n_min = min(train.node_counts()) if len(train) else 0
    grid = [m for m in m_grid if 1 <= m < n_min]
    return _fit(train, grid, BAModel, gen_ba, seed, statistics)


# ---------------------------------------------------------------------------
# adjacency-bit GRU

START = 2  # input token before the first bit


def adjacency_bits(g: Graph, strategy: OrderingStrategy | None = None, graph_index: int = 0) -> np.ndarray:
    """Strictly upper-triangular adjacency bits, row-major, under a BFS node ordering."""
    strategy = strategy or OrderingStrategy(OrderingKind.BF_FIXED, 0)
    ids = order_nodes(g, strategy, graph_index=graph_index).ids
    a = g.relabel(ids).adjacency_matrix()
    return a[np.triu_indices(g.num_nodes, 1)].astype(np.int64)


def bits_to_graph(n: int, bits: Sequence[int]) -> Graph:
    bits = np.asarray(bits)
    if bits.size != n * (n - 1) // 2:
        raise ValueError(f"expected {n * (n - 1) // 2} bits for {n} nodes, got {bits.size}")
    iu, ju = np.triu_indices(n, 1)
    keep = bits.astype(bool)
    return Graph(n, tuple(zip(iu[keep].tolist(), ju[keep].tolist())))


def num_nodes_for_bits(count: int) -> int:
    n = int(round((1 + math.sqrt(1 + 8 * count)) / 2))
    if n * (n - 1) // 2 != count:
        raise ValueError(f"{count} is not a triangular number")
    return n


@dataclass
class GRUBConfig:
    embed_dim: int = 16
    hidden_size: int = 64
    num_layers: int = 2
    dropout: float = 0.0
    # also feed the (row, column) position of the bit being predicted
    condition_on_position: bool = False
    seed: int = 0
    dtype: str = "float32"


class GRUBModel(Module):
    """Predicts each adjacency bit from the previous bit and the recurrent state."""

    def __init__(self, node_count_pool: Sequence[int], config: GRUBConfig | None = None):
        self.config = config or GRUBConfig()
        if not node_count_pool:
            raise ValueError("empty node-count pool")
        self.node_count_pool = list(node_count_pool)
        c = self.config
        dt = np.dtype(c.dtype)
        rng = np.random.default_rng(c.seed)
        self.extra = 2 if c.condition_on_position else 0
        self.emb = Embedding(3, c.embed_dim, rng, dt)
        self.gru = GRUStack(c.embed_dim + self.extra, c.hidden_size, c.num_layers, c.dropout, rng, dt)
        self.out = Linear(c.hidden_size, 1, rng, dt)

    def children(self):
        return [("emb", self.emb), ("gru", self.gru), ("out", self.out)]

    def _inputs(self, prev: np.ndarray, pos: np.ndarray | None) -> np.ndarray:
        e = self.emb.forward(prev)
        if not self.extra:
            return e
        return np.concatenate([e, pos.astype(e.dtype)], axis=-1)

    @staticmethod
    def _positions(lengths: Sequence[int], T: int) -> np.ndarray:
        """``[T, B, 2]`` row and column of each predicted bit, scaled by N."""
        out = np.zeros((T, len(lengths), 2))
        for b, L in enumerate(lengths):
            n = num_nodes_for_bits(L)
            iu, ju = np.triu_indices(n, 1)
            out[:L, b, 0] = iu / n
            out[:L, b, 1] = ju / n
        return out

    def batch_loss(self, seqs: Sequence[np.ndarray], training=False, rng=None, backward=False) -> np.ndarray:
        """Per-sequence mean binary cross-entropy; accumulates gradients of the batch mean."""
        B = len(seqs)
        lens = np.array([len(s) for s in seqs])
        if lens.min() < 1:
            raise ValueError("empty bit sequence")
        T = int(lens.max())
        tgt = np.zeros((T, B), np.int64)
        prev = np.full((T, B), START, np.int64)
        for b, s in enumerate(seqs):
            tgt[: len(s), b] = s
            prev[1 : len(s), b] = s[:-1]
        mask = (np.arange(T)[:, None] < lens).astype(float)
        w = mask / lens
        pos = self._positions(lens, T) if self.extra else None
        x = self._inputs(prev, pos)
        top, _, cache = self.gru.forward(x, self.gru.init_state(B), mask, training, rng)
        logit = self.out.forward(top)[..., 0]
        p = sigmoid(logit.astype(float))
        nll = -(tgt * np.log(np.maximum(p, 1e-12)) + (1 - tgt) * np.log(np.maximum(1 - p, 1e-12)))
        loss = (nll * w).sum(axis=0)
        if backward:
            dlogit = ((p - tgt) * w / B).astype(top.dtype)
            d_top = self.out.backward(top, dlogit[..., None])
            dx, _ = self.gru.backward(cache, d_top)
            self.emb.backward(prev, dx[..., : self.config.embed_dim])
        return loss

    def sample_bits(self, n: int, rng: np.random.Generator) -> np.ndarray:
        count = n * (n - 1) // 2
        bits = np.zeros(count, np.int64)
        h = self.gru.init_state(1)
        prev = START
        pos = self._positions([count], count) if self.extra and count else None
        for t in range(count):
            x = self._inputs(np.array([prev]), None if pos is None else pos[t])
            top, h = self.gru.step(x, h)
            p = float(sigmoid(self.out.forward(top)[0, 0].astype(float)))
            prev = int(rng.random() < p)
            bits[t] = prev
        return bits


@dataclass
class GRUBTrainResult:
    losses: list[float] = field(default_factory=list)
    best_epoch: int = -1
    best_loss: float = math.inf


def train_grub(
    train: GraphDataset,
    config: GRUBConfig | None = None,
    train_cfg: TrainConfig | None = None,
    callback: Callable[[int, float], None] | None = None,
) -> tuple[GRUBModel, GRUBTrainResult]:
    """Teacher-forced minibatch Adam on BF_FIXED adjacency bit sequences."""
    cfg = train_cfg or TrainConfig()
    strategy = OrderingStrategy(OrderingKind.BF_FIXED, cfg.seed)
    seqs = [adjacency_bits(g, strategy, i) for i, g in enumerate(train.graphs)]
    if any(len(s) == 0 for s in seqs):
        raise ValueError("graphs need at least two nodes")
    model = GRUBModel(train.node_counts(), config)
    params = model.named_parameters()
    opt = Adam(params, lr=cfg.lr, halve_every=cfg.halve_every)
    rng = np.random.default_rng(cfg.seed)
    res = GRUBTrainResult()
    best_state, since = None, 0
    for epoch in range(cfg.epochs):
        opt.set_epoch(epoch)
        order = rng.permutation(len(seqs))
        total = 0.0
        for start in range(0, len(seqs), cfg.batch_size):
            batch = [seqs[i] for i in order[start : start + cfg.batch_size]]
            opt.zero_grad()
            total += float(model.batch_loss(batch, training=True, rng=rng, backward=True).sum())
            opt.step()
        loss = total / len(seqs)
        if not math.isfinite(loss):
            raise TrainingError(f"non-finite training loss {loss} at epoch {epoch}")
        res.losses.append(loss)
        if callback is not None:
            callback(epoch, loss)
        since = 0 if loss < res.best_loss - cfg.min_delta else since + 1
        if loss < res.best_loss:
            res.best_loss, res.best_epoch = loss, epoch
            best_state = {k: p.value.copy() for k, p in params.items()}
        if cfg.patience is not None and since >= cfg.patience:
            break
    for k, p in params.items():
        p.value[...] = best_state[k]
    return model, res


def sample_grub(model: GRUBModel, seed) -> Graph:
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    n = _pick_n(model.node_count_pool, rng)
    return bits_to_graph(n, model.sample_bits(n, rng))


# ---------------------------------------------------------------------------


class BaselineGenerator:
    """Adapter exposing ``sample(n, seed)`` for evaluation; counts degenerate samples."""

    def __init__(self, name: str, model, gen: Callable):
        self.name = name
        self.model = model
        self._gen = gen
        self.last_degenerate = 0

    def sample(self, n: int, seed: int) -> list[Graph]:
        rng = np.random.default_rng(seed)
        out = [self._gen(self.model, rng) for _ in range(n)]
        self.last_degenerate = sum(is_degenerate(g) for g in out)
        return out


def er_generator(model: ERModel) -> BaselineGenerator:
    return BaselineGenerator("er", model, gen_er)


def ba_generator(model: BAModel) -> BaselineGenerator:
    return BaselineGenerator("ba", model, gen_ba)


def grub_generator(model: GRUBModel) -> BaselineGenerator:
    return BaselineGenerator("grub", model, sample_grub)
