from __future__ import annotations

import numpy as np

LOG_FLOOR = 1e-12


def sigmoid(x: np.ndarray) -> np.ndarray:
    # tanh form avoids overflow warnings for large |x|
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def softmax(v: np.ndarray, temperature: float = 1.0, axis: int = -1) -> np.ndarray:
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    a = np.asarray(v)
    if not np.issubdtype(a.dtype, np.floating):
        a = a.astype(float)
    a = a / temperature
    a = a - a.max(axis=axis, keepdims=True)
    e = np.exp(a)
    return e / e.sum(axis=axis, keepdims=True)


def log_softmax(v: np.ndarray, axis: int = -1) -> np.ndarray:
    a = v - v.max(axis=axis, keepdims=True)
    return a - np.log(np.exp(a).sum(axis=axis, keepdims=True))


def cross_entropy(pred: np.ndarray, target_id: int) -> float:
    """``-log pred[target_id]`` with the probability floored at ``LOG_FLOOR``."""
    return float(-np.log(max(float(pred[target_id]), LOG_FLOOR)))


def cross_entropy_logits(logits: np.ndarray, targets: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-row negative log-likelihood and its gradient wrt the logits.

    ``logits`` is ``[..., V]``, ``targets`` integer ``[...]``. The gradient is
    ``softmax(logits) - onehot(targets)``.
    """
    p = softmax(logits)
    idx = np.expand_dims(targets, -1)
    picked = np.take_along_axis(p, idx, axis=-1)[..., 0]
    nll = -np.log(np.maximum(picked, LOG_FLOOR))
    grad = p
    np.put_along_axis(grad, idx, picked[..., None] - 1.0, axis=-1)
    return nll, grad


def dropout_mask(shape, rate: float, rng: np.random.Generator) -> np.ndarray:
    """Inverted-dropout mask: zeros with probability ``rate``, survivors scaled up."""
    if not 0 <= rate < 1:
        raise ValueError("dropout rate must lie in [0, 1)")
    if rate == 0:
        return np.ones(shape)
    return (rng.random(shape) >= rate) / (1.0 - rate)


def dropout(v: np.ndarray, rate: float, training: bool, seed=None) -> np.ndarray:
    if not training or rate == 0:
        return v
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    return v * dropout_mask(np.shape(v), rate, rng)
