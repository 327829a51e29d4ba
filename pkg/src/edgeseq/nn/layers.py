"""Embedding, linear and stacked GRU layers with hand-written backward passes.

Tensors are numpy arrays (float64 unless a layer is built with another
dtype). Sequence tensors are time-major: ``[T, B, features]``. Every layer keeps its parameters in ``self.params`` and
accumulates gradients into them on ``backward``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .functional import dropout_mask, sigmoid


class Parameter:
    __slots__ = ("value", "grad")

    def __init__(self, value: np.ndarray, dtype=np.float64):
        self.value = np.ascontiguousarray(value, dtype=dtype)
        self.grad = np.zeros_like(self.value)

    @property
    def shape(self):
        return self.value.shape

    def zero_grad(self):
        self.grad.fill(0.0)


def _uniform(rng: np.random.Generator, fan_in: int, shape) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


class Module:
    dtype = np.float64

    def named_parameters(self, prefix: str = "") -> dict[str, Parameter]:
        out: dict[str, Parameter] = {}
        for name, p in getattr(self, "params", {}).items():
            out[prefix + name] = p
        for name, child in self.children():
            out.update(child.named_parameters(f"{prefix}{name}."))
        return out

    def children(self) -> list[tuple[str, Module]]:
        return []

    def zero_grad(self):
        for p in self.named_parameters().values():
            p.zero_grad()


class Embedding(Module):
    def __init__(self, vocab_size: int, dim: int, rng: np.random.Generator, dtype=np.float64):
        self.vocab_size, self.dim, self.dtype = vocab_size, dim, dtype
        self.params = {"weight": Parameter(_uniform(rng, vocab_size, (vocab_size, dim)), dtype)}

    def forward(self, ids: np.ndarray) -> np.ndarray:
        ids = np.asarray(ids)
        if ids.size and (ids.min() < 0 or ids.max() >= self.vocab_size):
            raise IndexError("token id outside vocabulary")
        return self.params["weight"].value[ids]

    def backward(self, ids: np.ndarray, dout: np.ndarray):
        np.add.at(self.params["weight"].grad, np.asarray(ids).ravel(), dout.reshape(-1, self.dim))


class Linear(Module):
    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator, dtype=np.float64):
        self.in_dim, self.out_dim, self.dtype = in_dim, out_dim, dtype
        self.params = {
            "weight": Parameter(_uniform(rng, in_dim, (in_dim, out_dim)), dtype),
            "bias": Parameter(np.zeros(out_dim), dtype),
        }

    def forward(self, x: np.ndarray) -> np.ndarray:
        return x @ self.params["weight"].value + self.params["bias"].value

    def backward(self, x: np.ndarray, dout: np.ndarray) -> np.ndarray:
        w = self.params["weight"]
        x2 = x.reshape(-1, self.in_dim)
        d2 = dout.reshape(-1, self.out_dim)
        w.grad += x2.T @ d2
        self.params["bias"].grad += d2.sum(axis=0)
        return dout @ w.value.T


@dataclass
class _GRUCache:
    x: np.ndarray
    mask: np.ndarray
    h_prev: np.ndarray
    r: np.ndarray
    z: np.ndarray
    n: np.ndarray
    rh: np.ndarray


class GRULayer(Module):
    """Gated recurrent unit.

    ``r = s(x Wr + h Ur + br)``, ``z = s(x Wz + h Uz + bz)``,
    ``n = tanh(x Wn + (r * h) Un + bn)``, ``h' = (1 - z) * h + z * n``.
    Input weights are packed ``[I, 3H]`` and hidden weights ``[H, 3H]`` in
    (reset, update, candidate) order.
    """

    def __init__(self, input_size: int, hidden_size: int, rng: np.random.Generator, dtype=np.float64):
        self.input_size, self.hidden_size, self.dtype = input_size, hidden_size, dtype
        H = hidden_size
        self.params = {
            "w_x": Parameter(_uniform(rng, input_size, (input_size, 3 * H)), dtype),
            "w_h": Parameter(_uniform(rng, H, (H, 3 * H)), dtype),
            "bias": Parameter(np.zeros(3 * H), dtype),
        }

    def step(self, x: np.ndarray, h: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """One update for a batch ``x [B, I]``, ``h [B, H]``; returns ``(output, h_next)``."""
        if x.shape[-1] != self.input_size or h.shape[-1] != self.hidden_size:
            raise ValueError(
                f"expected input {self.input_size} / hidden {self.hidden_size}, "
                f"got {x.shape[-1]} / {h.shape[-1]}"
            )
        H = self.hidden_size
        wx, wh, b = (self.params[k].value for k in ("w_x", "w_h", "bias"))
        gx = x @ wx + b
        rz = sigmoid(gx[..., : 2 * H] + h @ wh[:, : 2 * H])
        r, z = rz[..., :H], rz[..., H:]
        n = np.tanh(gx[..., 2 * H :] + (r * h) @ wh[:, 2 * H :])
        h_next = h + z * (n - h)
        return h_next, h_next

    def forward(self, x: np.ndarray, h0: np.ndarray, mask: np.ndarray | None = None):
        """Run over ``x [T, B, I]``. Where ``mask[t, b]`` is 0 the state is carried unchanged.

        Returns ``(hs [T, B, H], cache)``; ``hs[-1]`` is each row's final state.
        """
        T, B, _ = x.shape
        H = self.hidden_size
        dt = self.dtype
        mask = np.ones((T, B), dt) if mask is None else mask.astype(dt, copy=False)
        wx, wh, b = (self.params[k].value for k in ("w_x", "w_h", "bias"))
        wh_rz, wh_n = wh[:, : 2 * H], wh[:, 2 * H :]
        gx = x @ wx + b
        hs, h_prev, r_all, z_all, n_all, rh_all = np.empty((6, T, B, H), dt)
        h = h0.astype(dt, copy=False)
        for t in range(T):
            h_prev[t] = h
            rz = sigmoid(gx[t, :, : 2 * H] + h @ wh_rz)
            r, z = rz[:, :H], rz[:, H:]
            rh = r * h
            n = np.tanh(gx[t, :, 2 * H :] + rh @ wh_n)
            r_all[t], z_all[t], n_all[t], rh_all[t] = r, z, n, rh
            h = h + (mask[t][:, None] * z) * (n - h)
            hs[t] = h
        return hs, _GRUCache(x, mask, h_prev, r_all, z_all, n_all, rh_all)

    def backward(self, cache: _GRUCache, dhs: np.ndarray, dh_last: np.ndarray | None = None):
        """Gradients given ``dhs [T, B, H]`` and the gradient on the final state.

        Returns ``(dx [T, B, I], dh0 [B, H])``.
        """
        T, B, H = dhs.shape
        wx, wh = self.params["w_x"].value, self.params["w_h"].value
        wh_rz, wh_n = wh[:, : 2 * H], wh[:, 2 * H :]
        dgx = np.empty((T, B, 3 * H), self.dtype)
        dh_next = np.zeros((B, H), self.dtype) if dh_last is None else dh_last
        for t in range(T - 1, -1, -1):
            dh = dhs[t] + dh_next
            m = cache.mask[t][:, None]
            hp, r, z, n = cache.h_prev[t], cache.r[t], cache.z[t], cache.n[t]
            dhn = dh * m
            dz = dhn * (n - hp)
            dan = dhn * z * (1.0 - n * n)
            drh = dan @ wh_n.T
            dar = drh * hp * r * (1.0 - r)
            daz = dz * z * (1.0 - z)
            dgx[t, :, :H] = dar
            dgx[t, :, H : 2 * H] = daz
            dgx[t, :, 2 * H :] = dan
            dh_next = dh - dhn * z + drh * r + dgx[t, :, : 2 * H] @ wh_rz.T
        gx2 = dgx.reshape(-1, 3 * H)
        wh_grad = self.params["w_h"].grad
        wh_grad[:, : 2 * H] += cache.h_prev.reshape(-1, H).T @ gx2[:, : 2 * H]
        wh_grad[:, 2 * H :] += cache.rh.reshape(-1, H).T @ gx2[:, 2 * H :]
        self.params["w_x"].grad += cache.x.reshape(-1, self.input_size).T @ gx2
        self.params["bias"].grad += gx2.sum(axis=0)
        return dgx @ wx.T, dh_next


@dataclass
class _StackCache:
    layers: list = field(default_factory=list)
    masks: list = field(default_factory=list)


class GRUStack(Module):
    """Stacked GRU layers; dropout on every layer output except the top one."""

    def __init__(self, input_size: int, hidden_size: int, num_layers: int, dropout: float,
                 rng: np.random.Generator, dtype=np.float64):
        if not 0 <= dropout < 1:
            raise ValueError("dropout rate must lie in [0, 1)")
        self.hidden_size, self.num_layers, self.dropout = hidden_size, num_layers, dropout
        self.dtype = dtype
        self.layers = [
            GRULayer(input_size if i == 0 else hidden_size, hidden_size, rng, dtype)
            for i in range(num_layers)
        ]

    def children(self):
        return [(str(i), layer) for i, layer in enumerate(self.layers)]

    def init_state(self, batch: int) -> np.ndarray:
        return np.zeros((self.num_layers, batch, self.hidden_size), self.dtype)

    def step(self, x: np.ndarray, h: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Inference step: ``x [B, I]``, ``h [L, B, H]`` -> ``(top output, new h)``."""
        new = np.empty_like(h)
        inp = x
        for i, layer in enumerate(self.layers):
            inp, new[i] = layer.step(inp, h[i])
        return inp, new

    def forward(self, x, h0, mask=None, training=False, rng: np.random.Generator | None = None):
        """Returns ``(top outputs [T, B, H], final states [L, B, H], cache)``."""
        cache = _StackCache()
        finals = np.empty_like(h0)
        inp = x
        for i, layer in enumerate(self.layers):
            hs, c = layer.forward(inp, h0[i], mask)
            cache.layers.append(c)
            finals[i] = hs[-1]
            if i < self.num_layers - 1 and training and self.dropout > 0:
                dm = dropout_mask(hs.shape, self.dropout, rng).astype(self.dtype)
                cache.masks.append(dm)
                inp = hs * dm
            else:
                cache.masks.append(None)
                inp = hs
        return inp, finals, cache

    def backward(self, cache: _StackCache, d_top: np.ndarray, d_finals: np.ndarray | None = None):
        """Returns ``(dx, dh0 [L, B, H])``."""
        L = self.num_layers
        dh0 = np.empty((L,) + d_top.shape[1:], self.dtype)
        d = d_top
        for i in range(L - 1, -1, -1):
            if cache.masks[i] is not None:
                d = d * cache.masks[i]
            d, dh0[i] = self.layers[i].backward(
                cache.layers[i], d, None if d_finals is None else d_finals[i]
            )
        return d, dh0


def gru_step(layer: GRULayer, x: np.ndarray, h_prev: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    return layer.step(x, h_prev)
