import numpy as np
import pytest

from conftest import brute_isomorphic
from edgeseq.datasets import ladder_graph
from edgeseq.graph import Graph, OrderingKind, OrderingStrategy, to_sequence
from edgeseq.model import (
    DegenerateSampleError,
    EdgeSeqModel,
    ModelConfig,
    ModelGenerator,
    SampleConfig,
    SequenceSource,
    TrainConfig,
    TrainingError,
    Vocab,
    sample_graphs,
    train,
)
from edgeseq.nn import softmax

TOY = [((0, 0, 1), (1, 2, 3))]


def small(dtype="float64", dropout=0.0, seed=1, k=3):
    cfg = ModelConfig(embed_dim=4, hidden_size=5, num_layers=2, dropout=dropout, seed=seed, dtype=dtype)
    return EdgeSeqModel(Vocab(k), cfg)


def stepwise_losses(m: EdgeSeqModel, x, y):
    """Per-step reference forward pass through ``gru.step`` with explicit handoff."""
    v = m.vocab
    n1, n2 = m.rnn1, m.rnn2
    h = n1.gru.init_state(1)
    l1 = []
    for inp, tgt in zip([v.sos, *x], [*x, v.eos]):
        out, h = n1.gru.step(n1.emb.forward(np.array([inp])), h)
        l1.append(-np.log(softmax(n1.out.forward(out))[0, tgt]))
    l2 = []
    for inp, tgt in zip(x, y):
        out, h = n2.gru.step(n2.emb.forward(np.array([inp])), h)
        l2.append(-np.log(softmax(n2.out.forward(out))[0, tgt]))
    return np.mean(l1), np.mean(l2)


class TestLoss:
    def test_vocab_layout(self):
        v = Vocab(4)
        assert (v.sos, v.eos, v.size) == (5, 6, 7)

    def test_initial_loss_near_log_vocab(self):
        m = EdgeSeqModel(Vocab(20), ModelConfig(seed=0, dtype="float64"))
        l1, l2 = m.forward_loss((0, 0, 1, 2), (1, 2, 3, 4))
        assert l1 == pytest.approx(np.log(23), rel=0.05)
        assert l2 == pytest.approx(np.log(23), rel=0.05)

    def test_matches_stepwise_reference(self):
        m = small()
        x, y = TOY[0]
        l1, l2 = m.forward_loss(x, y)
        r1, r2 = stepwise_losses(m, x, y)
        assert l1 == pytest.approx(r1, abs=1e-12)
        assert l2 == pytest.approx(r2, abs=1e-12)

    def test_padding_does_not_leak(self):
        m = small(k=5)
        short, long = ((0,), (1,)), ((0, 0, 1, 2), (1, 2, 3, 4))
        l1, l2 = m.batch_loss([short, long])
        s1, s2 = m.forward_loss(*short)
        assert (l1[0], l2[0]) == pytest.approx((s1, s2), abs=1e-12)

    def test_rnn2_never_touches_rnn1_loss(self):
        m = small()
        before = m.forward_loss(*TOY[0])
        m.rnn2.out.params["bias"].value += 3.0
        after = m.forward_loss(*TOY[0])
        assert after[0] == before[0] and after[1] != before[1]

    def test_handoff_gradient_reaches_rnn1(self):
        # RNN2 starts from RNN1's final state, so RNN1 weights move the RNN2 loss
        m = small()
        x, y = TOY[0]
        base = m.forward_loss(x, y)[1]
        p = m.rnn1.gru.named_parameters()["0.w_h"]
        p.value[0, 0] += 1e-4
        moved = m.forward_loss(x, y)[1]
        assert moved != base

    def test_bad_sequences(self):
        m = small()
        with pytest.raises(ValueError, match="empty"):
            m.forward_loss((), ())
        with pytest.raises(ValueError, match="vocabulary"):
            m.forward_loss((0,), (9,))
        with pytest.raises(ValueError, match="length"):
            m.batch_loss([((0, 1), (1,))])


def test_full_model_gradient_check():
    m = small()

    def loss():
        l1, l2 = m.batch_loss(TOY)
        return float((l1 + l2).mean())

    m.zero_grad()
    m.batch_loss(TOY, backward=True)
    for name, p in m.named_parameters().items():
        num = np.zeros_like(p.value)
        for i in np.ndindex(p.value.shape):
            old = p.value[i]
            p.value[i] = old + 1e-5
            a = loss()
            p.value[i] = old - 1e-5
            b = loss()
            p.value[i] = old
            num[i] = (a - b) / 2e-5
        err = np.abs(p.grad - num) / np.maximum(np.maximum(np.abs(p.grad), np.abs(num)), 1e-6)
        assert err.max() < 1e-4, name


def test_gradient_scale_linear_and_unused_zero():
    m = small()
    m.zero_grad()
    m.batch_loss(TOY, backward=True)
    one = {k: p.grad.copy() for k, p in m.named_parameters().items()}
    m.zero_grad()
    m.batch_loss(TOY, backward=True, scale=2.0)
    for k, p in m.named_parameters().items():
        assert np.allclose(p.grad, 2 * one[k], rtol=1e-12, atol=0), k
    # RNN2 never reads SOS or EOS, so those embedding rows get exactly zero gradient
    v = m.vocab
    assert not one["rnn2.emb.weight"][[v.sos, v.eos]].any()


class TestTraining:
    def test_deterministic(self):
        g = [ladder_graph(3), ladder_graph(4)]
        runs = []
        for _ in range(2):
            m = EdgeSeqModel.for_graphs(g, ModelConfig(embed_dim=8, hidden_size=16, seed=3))
            res = train(m, SequenceSource(g, OrderingStrategy(seed=3)), TrainConfig(epochs=5, seed=3))
            runs.append((res.losses, m.state_dict()))
        assert runs[0][0] == runs[1][0]
        assert all(np.array_equal(runs[0][1][k], runs[1][1][k]) for k in runs[0][1])

    def test_loss_decreases_and_best_restored(self):
        g = [ladder_graph(3)]
        m = EdgeSeqModel.for_graphs(g, ModelConfig(embed_dim=8, hidden_size=16, dropout=0.0))
        res = train(m, SequenceSource(g, OrderingStrategy()), TrainConfig(epochs=60, lr=1e-2))
        assert res.losses[-1] < res.losses[0] / 2
        assert res.best_loss == min(res.losses)
        assert all(np.array_equal(m.state_dict()[k], res.state[k]) for k in res.state)

    def test_early_stop(self):
        g = [ladder_graph(3)]
        m = EdgeSeqModel.for_graphs(g, ModelConfig(embed_dim=4, hidden_size=4, dropout=0.0))
        res = train(m, SequenceSource(g, OrderingStrategy()), TrainConfig(epochs=50, lr=0.0, patience=3))
        assert res.stopped_early and len(res.losses) == 4

    def test_non_finite_raises(self):
        g = [ladder_graph(3)]
        m = EdgeSeqModel.for_graphs(g, ModelConfig(embed_dim=4, hidden_size=4))
        m.rnn1.out.params["weight"].value[0, 0] = np.nan
        with pytest.raises(TrainingError, match="non-finite"):
            train(m, SequenceSource(g, OrderingStrategy()), TrainConfig(epochs=2))

    def test_per_epoch_source_changes(self):
        g = [Graph(6, ((0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (0, 5), (1, 4)))]
        src = SequenceSource(g, OrderingStrategy(OrderingKind.BF_RANDOM_PER_EPOCH, 0))
        assert len({tuple(src.epoch(e)[0]) for e in range(10)}) > 1
        fixed = SequenceSource(g, OrderingStrategy(OrderingKind.BF_FIXED, 0))
        assert fixed.epoch(0) == fixed.epoch(7)

    def test_overfit_single_ladder(self):
        g = ladder_graph(3)
        m = EdgeSeqModel.for_graphs([g], ModelConfig(embed_dim=16, hidden_size=32, dropout=0.0))
        res = train(m, SequenceSource([g], OrderingStrategy()), TrainConfig(epochs=300, lr=1e-2, patience=None))
        assert res.best_loss < 0.05
        samples = ModelGenerator(m, temperature=0.75).sample(50, 0)
        assert sum(brute_isomorphic(s, g) for s in samples) >= 45


@pytest.fixture(scope="module")
def model():
    return EdgeSeqModel(Vocab(9), ModelConfig(embed_dim=8, hidden_size=16, seed=2))


class TestSampling:
    def test_samples_are_valid_graphs(self, model):
        for s in sample_graphs(model, 40, SampleConfig(seed=1)):
            g = s.graph
            assert g.num_edges >= 1
            assert all(u < v for u, v in g.edges)
            assert s.diagnostics.steps >= len(s.sources)
            assert len(s.sources) == len(s.destinations)

    def test_seeded(self, model):
        a = ModelGenerator(model).sample(10, 4)
        b = ModelGenerator(model).sample(10, 4)
        assert a == b

    def test_max_steps_truncates(self, model):
        out = sample_graphs(model, 30, SampleConfig(max_steps=2, seed=0))
        assert all(len(s.sources) <= 2 for s in out)
        assert any(s.diagnostics.truncated for s in out)

    def test_degenerate_raises(self):
        m = small(k=3, dtype="float32")
        m.rnn1.out.params["bias"].value[m.vocab.eos] = 100.0
        with pytest.raises(DegenerateSampleError):
            sample_graphs(m, 3, SampleConfig(max_retries=2))

    def test_bad_config(self):
        with pytest.raises(ValueError):
            SampleConfig(temperature=0)
        with pytest.raises(ValueError):
            SampleConfig(max_steps=0)


def test_save_load_round_trip(tmp_path):
    g = [ladder_graph(3)]
    m = EdgeSeqModel.for_graphs(g, ModelConfig(embed_dim=4, hidden_size=6))
    m.meta = {"ordering": "BF_FIXED"}
    path = m.save(tmp_path / "m.ckpt")
    back = EdgeSeqModel.load(path)
    assert back.meta == {"ordering": "BF_FIXED"}
    assert back.max_train_edges == m.max_train_edges
    s = to_sequence(g[0], OrderingStrategy())
    assert back.forward_loss(s.sources, s.destinations) == m.forward_loss(s.sources, s.destinations)
    assert ModelGenerator(back).sample(5, 0) == ModelGenerator(m).sample(5, 0)
    assert back.save(tmp_path / "again.ckpt").read_bytes() == path.read_bytes()
