"""Two-network autoregressive model over ordered edge sequences.

RNN1 models the source sequence: it reads ``(SOS, x_1, ..., x_M)`` and
predicts ``(x_1, ..., x_M, EOS)``. Its final recurrent state initializes
RNN2, which reads ``(x_1, ..., x_M)`` and predicts the destinations
``(y_1, ..., y_M)``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .graph import Graph, OrderingStrategy, decode, to_sequence
from .nn import Adam, Embedding, GRUStack, Linear, Module, softmax
from .nn import checkpoint as ckpt
from .nn.functional import cross_entropy_logits

log = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    pass


class DegenerateSampleError(RuntimeError):
    pass


@dataclass(frozen=True)
class Vocab:
    """Node IDs ``0..K`` followed by SOS and EOS."""

    max_node_id: int

    @property
    def sos(self) -> int:
        return self.max_node_id + 1

    @property
    def eos(self) -> int:
        return self.max_node_id + 2

    @property
    def size(self) -> int:
        return self.max_node_id + 3


@dataclass
class ModelConfig:
    embed_dim: int = 64
    hidden_size: int = 128
    num_layers: int = 2
    dropout: float = 0.25
    seed: int = 0
    dtype: str = "float32"


class SeqNet(Module):
    """Embedding -> stacked GRU -> linear projection onto the vocabulary."""

    def __init__(self, vocab_size: int, cfg: ModelConfig, rng: np.random.Generator):
        dt = np.dtype(cfg.dtype)
        self.emb = Embedding(vocab_size, cfg.embed_dim, rng, dt)
        self.gru = GRUStack(cfg.embed_dim, cfg.hidden_size, cfg.num_layers, cfg.dropout, rng, dt)
        self.out = Linear(cfg.hidden_size, vocab_size, rng, dt)

    def children(self):
        return [("emb", self.emb), ("gru", self.gru), ("out", self.out)]


@dataclass
class _Batch:
    in1: np.ndarray
    tgt1: np.ndarray
    w1: np.ndarray  # mask / per-sequence length
    in2: np.ndarray
    tgt2: np.ndarray
    w2: np.ndarray
    m1: np.ndarray
    m2: np.ndarray


def _make_batch(seqs: Sequence[tuple[Sequence[int], Sequence[int]]], vocab: Vocab) -> _Batch:
    B = len(seqs)
    lens = np.array([len(x) for x, _ in seqs])
    if lens.min() < 1:
        raise ValueError("empty sequence")
    T = int(lens.max())
    in1 = np.full((T + 1, B), vocab.eos, dtype=np.int64)
    tgt1 = np.full((T + 1, B), vocab.eos, dtype=np.int64)
    in2 = np.full((T, B), vocab.eos, dtype=np.int64)
    tgt2 = np.full((T, B), vocab.eos, dtype=np.int64)
    in1[0] = vocab.sos
    for b, (x, y) in enumerate(seqs):
        M = len(x)
        if len(y) != M:
            raise ValueError("source and destination sequences differ in length")
        if max(max(x), max(y)) > vocab.max_node_id or min(min(x), min(y)) < 0:
            raise ValueError("node ID outside vocabulary")
        in1[1 : M + 1, b] = x
        tgt1[:M, b] = x
        in2[:M, b] = x
        tgt2[:M, b] = y
    t = np.arange(T + 1)[:, None]
    m1 = (t < lens + 1).astype(float)
    m2 = (t[:T] < lens).astype(float)
    return _Batch(in1, tgt1, m1 / (lens + 1), in2, tgt2, m2 / lens, m1, m2)


class EdgeSeqModel(Module):
    def __init__(self, vocab: Vocab, config: ModelConfig | None = None):
        self.vocab = vocab
        self.config = config or ModelConfig()
        rng = np.random.default_rng(self.config.seed)
        self.rnn1 = SeqNet(vocab.size, self.config, rng)
        self.rnn2 = SeqNet(vocab.size, self.config, rng)
        self.max_train_edges: int | None = None
        self.meta: dict = {}

    @classmethod
    def for_graphs(cls, graphs: Iterable[Graph], config: ModelConfig | None = None) -> EdgeSeqModel:
        graphs = list(graphs)
        model = cls(Vocab(max(g.num_nodes for g in graphs) - 1), config)
        model.max_train_edges = max(g.num_edges for g in graphs)
        return model

    def children(self):
        return [("rnn1", self.rnn1), ("rnn2", self.rnn2)]

    # -- training ---------------------------------------------------------

    def batch_loss(
        self,
        seqs: Sequence[tuple[Sequence[int], Sequence[int]]],
        training: bool = False,
        rng: np.random.Generator | None = None,
        backward: bool = False,
        scale: float = 1.0,
    ) -> tuple[np.ndarray, np.ndarray]:
        """Per-sequence ``(loss_rnn1, loss_rnn2)``.

        With ``backward=True`` the gradient of ``scale * mean(loss_rnn1 + loss_rnn2)``
        is accumulated into the parameters.
        """
        b = _make_batch(seqs, self.vocab)
        B = len(seqs)
        n1, n2 = self.rnn1, self.rnn2
        h0 = n1.gru.init_state(B)

        e1 = n1.emb.forward(b.in1)
        top1, final1, c1 = n1.gru.forward(e1, h0, b.m1, training, rng)
        nll1, g1 = cross_entropy_logits(n1.out.forward(top1), b.tgt1)
        loss1 = (nll1 * b.w1).sum(axis=0)

        e2 = n2.emb.forward(b.in2)
        top2, _, c2 = n2.gru.forward(e2, final1, b.m2, training, rng)
        nll2, g2 = cross_entropy_logits(n2.out.forward(top2), b.tgt2)
        loss2 = (nll2 * b.w2).sum(axis=0)

        if backward:
            dt = np.dtype(self.config.dtype)
            k = scale / B
            d_top2 = n2.out.backward(top2, g2 * (b.w2 * k).astype(dt)[..., None])
            d_e2, d_handoff = n2.gru.backward(c2, d_top2)
            n2.emb.backward(b.in2, d_e2)
            d_top1 = n1.out.backward(top1, g1 * (b.w1 * k).astype(dt)[..., None])
            d_e1, _ = n1.gru.backward(c1, d_top1, d_handoff)
            n1.emb.backward(b.in1, d_e1)
        return loss1, loss2

    def forward_loss(self, x_seq: Sequence[int], y_seq: Sequence[int]) -> tuple[float, float]:
        """Evaluation-mode ``(loss_rnn1, loss_rnn2)`` for one sequence."""
        if len(x_seq) == 0:
            raise ValueError("empty sequence")
        l1, l2 = self.batch_loss([(x_seq, y_seq)])
        return float(l1[0]), float(l2[0])

    # -- persistence ------------------------------------------------------

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: p.value.copy() for k, p in self.named_parameters().items()}

    def load_state_dict(self, state: dict[str, np.ndarray]):
        params = self.named_parameters()
        missing = set(params) - set(state)
        if missing:
            raise KeyError(f"missing tensors: {sorted(missing)}")
        for k, p in params.items():
            if state[k].shape != p.value.shape:
                raise ValueError(f"shape mismatch for {k}: {state[k].shape} vs {p.value.shape}")
            p.value[...] = state[k]

    def save(self, path: str | Path, extra_tensors: dict | None = None, meta: dict | None = None) -> Path:
        header = {
            "kind": "edgeseq-model",
            "vocab_max_node_id": self.vocab.max_node_id,
            "vocab_size": self.vocab.size,
            "config": asdict(self.config),
            "max_train_edges": self.max_train_edges,
            **self.meta,
            **(meta or {}),
        }
        return ckpt.save(path, {**self.state_dict(), **(extra_tensors or {})}, header)

    @classmethod
    def load(cls, path: str | Path) -> EdgeSeqModel:
        tensors, meta = ckpt.load(path)
        if meta.get("kind") != "edgeseq-model":
            raise ckpt.CheckpointError(f"{path} is not an edge-sequence model checkpoint")
        model = cls(Vocab(meta["vocab_max_node_id"]), ModelConfig(**meta["config"]))
        model.load_state_dict(tensors)
        model.max_train_edges = meta.get("max_train_edges")
        model.meta = {k: v for k, v in meta.items()
                      if k not in ("kind", "vocab_max_node_id", "vocab_size", "config", "max_train_edges")}
        return model

    # -- sampling ---------------------------------------------------------

    def default_max_steps(self) -> int:
        if self.max_train_edges is None:
            return self.vocab.size * (self.vocab.size - 1) // 2
        return self.max_train_edges + 8


# ---------------------------------------------------------------------------
# training


class SequenceSource:
    """Encodes a graph list under an ordering strategy, re-encoding per epoch when required."""

    def __init__(self, graphs: Sequence[Graph], strategy: OrderingStrategy):
        self.graphs = list(graphs)
        self.strategy = strategy
        self._fixed: list | None = None

    def _encode(self, epoch: int):
        out = []
        for i, g in enumerate(self.graphs):
            s = to_sequence(g, self.strategy, epoch=epoch, graph_index=i)
            out.append((s.sources, s.destinations))
        return out

    def epoch(self, epoch: int) -> list[tuple[tuple[int, ...], tuple[int, ...]]]:
        if self.strategy.kind.per_epoch:
            return self._encode(epoch)
        if self._fixed is None:
            self._fixed = self._encode(0)
        return self._fixed

    def __len__(self):
        return len(self.graphs)


@dataclass
class TrainConfig:
    epochs: int = 2000
    lr: float = 1e-3
    halve_every: int = 200
    batch_size: int = 32
    # group sequences of similar length into the same minibatch
    bucket_by_length: bool = True
    # stop once the best loss has not improved by ``min_delta`` for ``patience`` epochs
    patience: int | None = 100
    min_delta: float = 1e-4
    seed: int = 0


@dataclass
class TrainResult:
    losses: list[float]
    best_epoch: int
    best_loss: float
    stopped_early: bool = False
    state: dict = field(default_factory=dict, repr=False)
    # final optimizer and shuffling-RNG state, for checkpointing
    optimizer: Adam | None = field(default=None, repr=False)
    rng_state: dict = field(default_factory=dict, repr=False)


def _batches(seqs, batch_size: int, bucket: bool, rng: np.random.Generator) -> list[np.ndarray]:
    n = len(seqs)
    if not bucket:
        order = rng.permutation(n)
        return [order[i : i + batch_size] for i in range(0, n, batch_size)]
    lens = np.array([len(x) for x, _ in seqs])
    order = np.lexsort((rng.random(n), lens))
    chunks = [order[i : i + batch_size] for i in range(0, n, batch_size)]
    return [chunks[i] for i in rng.permutation(len(chunks))]


def train(
    model: EdgeSeqModel,
    data: SequenceSource | Sequence[tuple[Sequence[int], Sequence[int]]],
    cfg: TrainConfig | None = None,
    callback: Callable[[int, float], None] | None = None,
) -> TrainResult:
    """Minibatch Adam on the summed RNN1 + RNN2 loss.

    The per-epoch loss is the dataset mean of the training losses seen during
    that epoch. On return the model holds the parameters of the lowest-loss
    epoch.
    """
    cfg = cfg or TrainConfig()
    if not isinstance(data, SequenceSource):
        fixed = [(tuple(x), tuple(y)) for x, y in data]
        get_epoch = lambda e: fixed  # noqa: E731
        n = len(fixed)
    else:
        get_epoch = data.epoch
        n = len(data)
    if n == 0:
        raise ValueError("empty training set")
    rng = np.random.default_rng(cfg.seed)
    params = model.named_parameters()
    opt = Adam(params, lr=cfg.lr, halve_every=cfg.halve_every)
    losses: list[float] = []
    best_loss, best_epoch, best_state = math.inf, -1, None
    since_improve = 0
    stopped = False
    max_m = max(len(x) for x, _ in get_epoch(0))
    model.max_train_edges = max(model.max_train_edges or 0, max_m)
    for epoch in range(cfg.epochs):
        opt.set_epoch(epoch)
        seqs = get_epoch(epoch)
        total = 0.0
        for idx in _batches(seqs, cfg.batch_size, cfg.bucket_by_length, rng):
            batch = [seqs[i] for i in idx]
            opt.zero_grad()
            l1, l2 = model.batch_loss(batch, training=True, rng=rng, backward=True)
            total += float(np.sum(l1 + l2))
            opt.step()
        loss = total / n
        if not math.isfinite(loss):
            raise TrainingError(f"non-finite training loss {loss} at epoch {epoch}")
        losses.append(loss)
        if callback is not None:
            callback(epoch, loss)
        if loss < best_loss - cfg.min_delta:
            since_improve = 0
        else:
            since_improve += 1
        if loss < best_loss:
            best_loss, best_epoch, best_state = loss, epoch, model.state_dict()
        if cfg.patience is not None and since_improve >= cfg.patience:
            stopped = True
            break
    model.load_state_dict(best_state)
    return TrainResult(losses, best_epoch, best_loss, stopped, best_state, opt, rng.bit_generator.state)


# ---------------------------------------------------------------------------
# sampling


@dataclass
class SampleConfig:
    temperature: float = 0.75
    max_steps: int | None = None
    max_retries: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")
        if self.max_steps is not None and self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")


@dataclass
class SampleDiagnostics:
    retries: int = 0
    truncated: bool = False
    steps: int = 0
    dropped_self_loops: int = 0
    dropped_duplicates: int = 0
    dropped_special: int = 0


@dataclass
class Sample:
    graph: Graph
    sources: tuple[int, ...]
    destinations: tuple[int, ...]
    diagnostics: SampleDiagnostics


def _draw(p: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """One categorical draw per row of ``p``."""
    u = rng.random(p.shape[0])[:, None]
    idx = (np.cumsum(p, axis=1) < u).sum(axis=1)
    return np.minimum(idx, p.shape[1] - 1)


def _sample_sources(model: EdgeSeqModel, B: int, T: float, max_steps: int, rng):
    v = model.vocab
    net = model.rnn1
    h = net.gru.init_state(B)
    inp = np.full(B, v.sos)
    active = np.ones(B, dtype=bool)
    truncated = np.zeros(B, dtype=bool)
    xs: list[list[int]] = [[] for _ in range(B)]
    steps = np.zeros(B, dtype=np.int64)
    for i in range(max_steps + 1):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        out, h_new = net.gru.step(net.emb.forward(inp[idx]), h[:, idx])
        h[:, idx] = h_new
        steps[idx] += 1
        logits = net.out.forward(out)
        logits[:, v.sos] = -np.inf  # SOS never follows
        nxt = _draw(softmax(logits, T), rng)
        for j, b in enumerate(idx):
            tok = int(nxt[j])
            if tok == v.eos:
                active[b] = False
            elif i == max_steps:
                active[b] = False
                truncated[b] = True
            else:
                xs[b].append(tok)
                inp[b] = tok
    return xs, h, truncated, steps


def _sample_destinations(model: EdgeSeqModel, xs: list[list[int]], h: np.ndarray, T: float, rng):
    net = model.rnn2
    B = len(xs)
    L = max(len(x) for x in xs)
    lens = np.array([len(x) for x in xs])
    ys: list[list[int]] = [[] for _ in range(B)]
    for t in range(L):
        idx = np.flatnonzero(lens > t)
        inp = np.array([xs[b][t] for b in idx])
        out, h_new = net.gru.step(net.emb.forward(inp), h[:, idx])
        h[:, idx] = h_new
        nxt = _draw(softmax(net.out.forward(out), T), rng)
        for j, b in enumerate(idx):
            ys[b].append(int(nxt[j]))
    return ys


def _assemble(xs, ys, vocab: Vocab, diag: SampleDiagnostics) -> list[tuple[int, int]]:
    pairs = set()
    for x, y in zip(xs, ys):
        if y > vocab.max_node_id:
            diag.dropped_special += 1
            continue
        if x == y:
            diag.dropped_self_loops += 1
            continue
        e = (min(x, y), max(x, y))
        if e in pairs:
            diag.dropped_duplicates += 1
            continue
        pairs.add(e)
    return sorted(pairs)


def sample_graphs(model: EdgeSeqModel, n: int, cfg: SampleConfig | None = None) -> list[Sample]:
    """Draw ``n`` graphs, batched. Degenerate draws are retried per slot."""
    cfg = cfg or SampleConfig()
    rng = np.random.default_rng(cfg.seed)
    max_steps = cfg.max_steps or model.default_max_steps()
    results: list[Sample | None] = [None] * n
    retries = np.zeros(n, dtype=np.int64)
    pending = list(range(n))
    while pending:
        B = len(pending)
        xs, h, truncated, steps1 = _sample_sources(model, B, cfg.temperature, max_steps, rng)
        live = [i for i in range(B) if xs[i]]
        ys_live = _sample_destinations(model, [xs[i] for i in live], h[:, live], cfg.temperature, rng) if live else []
        ys: list[list[int]] = [[] for _ in range(B)]
        for i, y in zip(live, ys_live):
            ys[i] = y
        still = []
        for i, slot in enumerate(pending):
            diag = SampleDiagnostics(
                retries=int(retries[slot]), truncated=bool(truncated[i]), steps=int(steps1[i]) + len(xs[i])
            )
            pairs = _assemble(xs[i], ys[i], model.vocab, diag) if xs[i] else []
            if not pairs:
                retries[slot] += 1
                if retries[slot] > cfg.max_retries:
                    raise DegenerateSampleError(
                        f"degenerate sample: no valid edge after {cfg.max_retries} retries"
                    )
                still.append(slot)
                continue
            results[slot] = Sample(decode(pairs), tuple(xs[i]), tuple(ys[i]), diag)
        pending = still
    return results  # type: ignore[return-value]


def sample_graph(model: EdgeSeqModel, cfg: SampleConfig | None = None) -> Sample:
    return sample_graphs(model, 1, cfg)[0]


class ModelGenerator:
    """Adapter exposing ``sample(n, seed)`` for evaluation."""

    name = "ours"

    def __init__(self, model: EdgeSeqModel, temperature: float = 0.75, max_steps: int | None = None,
                 max_retries: int = 10):
        self.model = model
        self.temperature = temperature
        self.max_steps = max_steps
        self.max_retries = max_retries
        self.last_diagnostics: list[SampleDiagnostics] = []

    def sample(self, n: int, seed: int) -> list[Graph]:
        out = sample_graphs(
            self.model, n, SampleConfig(self.temperature, self.max_steps, self.max_retries, seed)
        )
        self.last_diagnostics = [s.diagnostics for s in out]
        return [s.graph for s in out]
