"""Histogram KL divergence and isomorphism-aware novelty / uniqueness."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from ..graph import Graph
from .canonical import canonical_form

NUM_BINS = 100
SMOOTHING = 1e-10


@dataclass
class Histogram:
    counts: np.ndarray
    edges: np.ndarray

    @property
    def mass(self) -> np.ndarray:
        """Smoothed, normalized bin mass."""
        p = self.counts / max(self.counts.sum(), 1)
        p = p + SMOOTHING
        return p / p.sum()


def shared_histograms(
    p_stats: np.ndarray, q_stats: np.ndarray, bins: int = NUM_BINS
) -> tuple[Histogram, Histogram]:
    """Histograms of both vectors over the joint ``[min, max]`` range."""
    p_stats = np.asarray(p_stats, dtype=float)
    q_stats = np.asarray(q_stats, dtype=float)
    if p_stats.size == 0 or q_stats.size == 0:
        raise ValueError("empty statistic vector")
    both = np.concatenate([p_stats, q_stats])
    lo, hi = float(both.min()), float(both.max())
    if lo == hi:
        lo, hi = lo - 0.5, hi + 0.5
    edges = np.linspace(lo, hi, bins + 1)
    hp, _ = np.histogram(p_stats, bins=edges)
    hq, _ = np.histogram(q_stats, bins=edges)
    return Histogram(hp.astype(float), edges), Histogram(hq.astype(float), edges)


def kld(p_stats: np.ndarray, q_stats: np.ndarray, bins: int = NUM_BINS) -> float:
    """KL(P || Q) between 100-bin histograms of two statistic vectors.

    ``p_stats`` is the reference (test) sample, ``q_stats`` the generated one.
    """
    hp, hq = shared_histograms(p_stats, q_stats, bins)
    p, q = hp.mass, hq.mass
    return float(np.sum(p * np.log(p / q)))


def certificates(graphs: Iterable[Graph]) -> list[bytes]:
    return [canonical_form(g) for g in graphs]


def novelty(sample: Sequence[Graph], train: Iterable[Graph], *, sample_certs=None, train_certs=None) -> float:
    """Fraction of the sample whose isomorphism class is absent from ``train``."""
    if not len(sample):
        raise ValueError("empty sample")
    seen = set(train_certs if train_certs is not None else certificates(train))
    certs = sample_certs if sample_certs is not None else certificates(sample)
    return sum(c not in seen for c in certs) / len(certs)


def uniqueness(sample: Sequence[Graph], distinct: bool = False, *, sample_certs=None) -> float:
    """Fraction of the sample whose isomorphism class occurs exactly once.

    With ``distinct=True`` the rate is instead ``#classes / #graphs``.
    """
    if not len(sample):
        raise ValueError("empty sample")
    certs = sample_certs if sample_certs is not None else certificates(sample)
    counts = Counter(certs)
    if distinct:
        return len(counts) / len(certs)
    return sum(1 for c in certs if counts[c] == 1) / len(certs)
