import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from edgeseq.nn import (
    Adam,
    Embedding,
    GRULayer,
    GRUStack,
    Linear,
    Parameter,
    cross_entropy,
    cross_entropy_logits,
    dropout,
    gru_step,
    softmax,
    step_halving_lr,
)
from edgeseq.nn import checkpoint as ckpt

STEP = 1e-5


def rel_err(a, n, floor=1e-6):
    return float((np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)).max())


def numeric_grad(f, x: np.ndarray) -> np.ndarray:
    """Central differences of scalar ``f()`` wrt every entry of ``x`` (modified in place)."""
    g = np.zeros_like(x)
    for i in np.ndindex(x.shape):
        old = x[i]
        x[i] = old + STEP
        a = f()
        x[i] = old - STEP
        b = f()
        x[i] = old
        g[i] = (a - b) / (2 * STEP)
    return g


class TestGRUStep:
    def test_zero_weights(self):
        rng = np.random.default_rng(0)
        layer = GRULayer(3, 4, rng)
        for p in layer.params.values():
            p.value[...] = 0
        h = rng.normal(size=(1, 4))
        out, h_next = gru_step(layer, rng.normal(size=(1, 3)), h)
        assert np.allclose(h_next, 0.5 * h)
        assert np.array_equal(out, h_next)
        _, h0 = gru_step(layer, rng.normal(size=(1, 3)), np.zeros((1, 4)))
        assert np.array_equal(h0, np.zeros((1, 4)))

    def test_matches_gate_equations(self):
        rng = np.random.default_rng(1)
        layer = GRULayer(3, 2, rng)
        wx, wh, b = (layer.params[k].value for k in ("w_x", "w_h", "bias"))
        b[...] = rng.normal(size=b.shape)
        x, h = rng.normal(size=3), rng.normal(size=2)
        sig = lambda v: 1 / (1 + np.exp(-v))  # noqa: E731
        r = sig(x @ wx[:, :2] + h @ wh[:, :2] + b[:2])
        z = sig(x @ wx[:, 2:4] + h @ wh[:, 2:4] + b[2:4])
        n = np.tanh(x @ wx[:, 4:] + (r * h) @ wh[:, 4:] + b[4:])
        expected = (1 - z) * h + z * n
        _, got = layer.step(x[None], h[None])
        assert np.allclose(got[0], expected, atol=1e-14)

    def test_dimension_mismatch(self):
        layer = GRULayer(3, 4, np.random.default_rng(0))
        with pytest.raises(ValueError):
            layer.step(np.zeros((1, 2)), np.zeros((1, 4)))

    def test_forward_equals_steps(self):
        rng = np.random.default_rng(2)
        layer = GRULayer(3, 4, rng)
        x = rng.normal(size=(5, 2, 3))
        h = rng.normal(size=(2, 4))
        hs, _ = layer.forward(x, h)
        for t in range(5):
            _, h = layer.step(x[t], h)
            assert np.allclose(hs[t], h)

    def test_mask_freezes_state(self):
        rng = np.random.default_rng(3)
        layer = GRULayer(2, 3, rng)
        x = rng.normal(size=(4, 2, 2))
        h0 = rng.normal(size=(2, 3))
        mask = np.array([[1, 1], [1, 0], [1, 0], [1, 0]], float)
        hs, _ = layer.forward(x, h0, mask)
        assert np.array_equal(hs[1, 1], hs[0, 1])
        assert np.array_equal(hs[3, 1], hs[0, 1])

    def test_input_gradient(self):
        rng = np.random.default_rng(4)
        layer = GRULayer(3, 4, rng)
        x = rng.normal(size=(1, 3))
        h = rng.normal(size=(1, 4))
        w = rng.normal(size=(1, 4))
        f = lambda: float((layer.forward(x[None], h)[0][0] * w).sum())  # noqa: E731
        _, cache = layer.forward(x[None], h)
        dx, dh = layer.backward(cache, w[None])
        assert rel_err(dx[0], numeric_grad(f, x)) < 1e-4
        assert rel_err(dh, numeric_grad(f, h)) < 1e-4


class TestLayerGradients:
    def test_gru_stack(self):
        rng = np.random.default_rng(5)
        stack = GRUStack(3, 4, 2, 0.0, rng)
        x = rng.normal(size=(4, 2, 3))
        h0 = rng.normal(size=(2, 2, 4))
        mask = np.array([[1, 1], [1, 1], [1, 0], [1, 0]], float)
        wt = rng.normal(size=(4, 2, 4))
        wf = rng.normal(size=(2, 2, 4))

        def f():
            top, fin, _ = stack.forward(x, h0, mask)
            return float((top * wt).sum() + (fin * wf).sum())

        stack.zero_grad()
        _, _, cache = stack.forward(x, h0, mask)
        dx, dh0 = stack.backward(cache, wt, wf)
        for name, p in stack.named_parameters().items():
            assert rel_err(p.grad, numeric_grad(f, p.value)) < 1e-4, name
        assert rel_err(dx, numeric_grad(f, x)) < 1e-4
        assert rel_err(dh0, numeric_grad(f, h0)) < 1e-4

    def test_embedding_and_linear(self):
        rng = np.random.default_rng(6)
        emb = Embedding(5, 3, rng)
        lin = Linear(3, 4, rng)
        ids = np.array([[0, 4], [4, 2]])
        w = rng.normal(size=(2, 2, 4))
        f = lambda: float((lin.forward(emb.forward(ids)) * w).sum())  # noqa: E731
        e = emb.forward(ids)
        emb.backward(ids, lin.backward(e, w))
        for m in (emb, lin):
            for name, p in m.named_parameters().items():
                assert rel_err(p.grad, numeric_grad(f, p.value)) < 1e-4, name
        # unused rows get exactly zero gradient
        assert not emb.params["weight"].grad[[1, 3]].any()

    def test_embedding_out_of_range(self):
        emb = Embedding(3, 2, np.random.default_rng(0))
        with pytest.raises(IndexError):
            emb.forward(np.array([3]))


class TestSoftmaxCrossEntropy:
    def test_symmetric(self):
        assert np.allclose(softmax(np.zeros(2)), [0.5, 0.5])

    def test_high_temperature_flattens(self):
        p = softmax(np.array([1.0, 0.0]), 100.0)
        assert np.all(np.abs(p - 0.5) < 0.01)
        # closed form: 1 / (1 + exp(-1/100))
        assert p[0] == pytest.approx(1 / (1 + np.exp(-0.01)), abs=1e-15)

    def test_no_overflow(self):
        p = softmax(np.array([1e4, 0.0, -1e4]))
        assert np.isfinite(p).all() and p[0] == pytest.approx(1.0)

    @given(
        arrays(np.float64, st.integers(2, 8), elements=st.floats(-50, 50)),
        st.floats(0.05, 20),
    )
    def test_properties(self, v, T):
        p = softmax(v, T)
        assert abs(p.sum() - 1) < 1e-12
        assert np.all(p >= 0) and np.all(p <= 1)
        assert p[np.argmax(v)] == p.max()

    def test_nonpositive_temperature(self):
        with pytest.raises(ValueError):
            softmax(np.zeros(3), 0.0)

    def test_cross_entropy_values(self):
        assert cross_entropy(np.array([0.0, 1.0, 0.0]), 1) == 0.0
        assert cross_entropy(np.full(7, 1 / 7), 3) == pytest.approx(np.log(7))
        # zero probability is floored, not infinite
        assert cross_entropy(np.array([1.0, 0.0]), 1) == pytest.approx(-np.log(1e-12))

    def test_logit_gradient(self):
        rng = np.random.default_rng(7)
        logits = rng.normal(size=(3, 5))
        targets = np.array([0, 4, 2])
        nll, grad = cross_entropy_logits(logits, targets)
        onehot = np.eye(5)[targets]
        assert np.allclose(grad, softmax(logits) - onehot)
        f = lambda: float(cross_entropy_logits(logits, targets)[0].sum())  # noqa: E731
        assert rel_err(grad, numeric_grad(f, logits)) < 1e-4


class TestDropout:
    def test_rate_zero_identity(self):
        v = np.arange(5.0)
        assert dropout(v, 0.0, True, 0) is v

    def test_eval_identity(self):
        v = np.arange(5.0)
        assert dropout(v, 0.5, False, 0) is v

    def test_expectation(self):
        rng = np.random.default_rng(0)
        v = np.linspace(1, 2, 8)
        mean = np.mean([dropout(v, 0.25, True, rng) for _ in range(10_000)], axis=0)
        assert np.all(np.abs(mean - v) <= 0.02 * np.abs(v))

    def test_mask_values(self):
        out = dropout(np.ones(1000), 0.25, True, 3)
        assert set(np.unique(out).tolist()) <= {0.0, 1 / 0.75}

    def test_bad_rate(self):
        with pytest.raises(ValueError):
            dropout(np.ones(3), 1.0, True, 0)


class TestAdam:
    def test_zero_gradient_no_change(self):
        p = Parameter(np.arange(4.0))
        opt = Adam({"p": p})
        for _ in range(3):
            opt.step()
        assert np.array_equal(p.value, np.arange(4.0))

    def test_first_step_is_lr_sign(self):
        # with bias correction the first update is lr * g / (|g| + eps)
        p = Parameter(np.zeros(3))
        p.grad[...] = [2.0, -0.5, 1e-3]
        opt = Adam({"p": p}, lr=0.1)
        opt.step()
        expected = -0.1 * p.grad / (np.abs(p.grad) + 1e-8)
        assert np.allclose(p.value, expected, rtol=1e-6)

    def test_matches_reference_loop(self):
        rng = np.random.default_rng(0)
        p = Parameter(rng.normal(size=4))
        ref = p.value.copy()
        m = np.zeros(4)
        v = np.zeros(4)
        opt = Adam({"p": p}, lr=0.01)
        for t in range(1, 6):
            g = rng.normal(size=4)
            p.grad[...] = g
            opt.step()
            m = 0.9 * m + 0.1 * g
            v = 0.999 * v + 0.001 * g * g
            ref -= 0.01 * (m / (1 - 0.9**t)) / (np.sqrt(v / (1 - 0.999**t)) + 1e-8)
        assert np.allclose(p.value, ref, atol=1e-14)

    @pytest.mark.parametrize("epoch,rate", [(0, 1e-3), (199, 1e-3), (200, 5e-4), (399, 5e-4), (400, 2.5e-4), (1999, 1e-3 / 2**9)])
    def test_schedule(self, epoch, rate):
        assert step_halving_lr(1e-3, epoch, 200) == rate
        opt = Adam({}, lr=1e-3, halve_every=200)
        opt.set_epoch(epoch)
        assert opt.lr == rate


class TestCheckpoint:
    def test_round_trip_and_bytes(self, tmp_path):
        rng = np.random.default_rng(0)
        tensors = {"a": rng.normal(size=(2, 3)), "b.c": np.arange(4.0)}
        meta = {"x": 1, "name": "t"}
        path = ckpt.save(tmp_path / "m.ckpt", tensors, meta)
        back, m2 = ckpt.load(path)
        assert m2 == meta
        for k in tensors:
            assert np.array_equal(back[k], tensors[k])
        assert ckpt.dumps(tensors, meta) == path.read_bytes()
        assert ckpt.dumps(tensors, meta) == ckpt.dumps(back, m2)

    def test_layout(self):
        data = ckpt.dumps({"w": np.array([1.5])}, {})
        assert data.startswith(b"EDGESEQ\x00")
        assert data[-8:] == np.array([1.5], "<f8").tobytes()

    def test_bad_magic(self):
        with pytest.raises(ckpt.CheckpointError):
            ckpt.loads(b"nope" * 10)
