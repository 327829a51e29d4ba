"""Repeated-draw evaluation of a generator against a held-out test set."""

from __future__ import annotations

import csv
import io
import json
import time
from dataclasses import asdict, dataclass, field
from typing import Protocol, Sequence

import numpy as np

from ..graph import Graph
from .metrics import certificates, kld, novelty, shared_histograms, uniqueness
from .stats import STATISTICS


class Generator(Protocol):
    def sample(self, n: int, seed: int) -> list[Graph]: ...


class EvaluationError(RuntimeError):
    """A generator failed mid-evaluation; ``report`` holds what was computed."""

    def __init__(self, message: str, report: EvalReport):
        super().__init__(message)
        self.report = report


@dataclass
class EvalReport:
    model: str
    dataset: str
    reps: int
    novelty: dict[int, float] = field(default_factory=dict)
    uniqueness: dict[int, float] = field(default_factory=dict)
    sample_seconds: dict[int, float] = field(default_factory=dict)
    kld_mean: dict[str, float] = field(default_factory=dict)
    kld_std: dict[str, float] = field(default_factory=dict)
    kld_runs: dict[str, list[float]] = field(default_factory=dict)
    partial: bool = False
    # first-repetition histograms, for external plotting
    histograms: dict[str, dict[str, list[float]]] = field(default_factory=dict, repr=False)

    def to_dict(self, timing: bool = True) -> dict:
        d = asdict(self)
        d.pop("histograms")
        if not timing:
            d.pop("sample_seconds")
        return d

    def to_json(self, timing: bool = True) -> str:
        return json.dumps(self.to_dict(timing), indent=2, sort_keys=True) + "\n"

    def rows(self, timing: bool = True) -> list[dict]:
        """One row per metric, Table-style: ``model, dataset, metric, value, std``."""
        out = []
        for size in sorted(self.novelty):
            out.append(self._row(f"novelty@{size}", self.novelty[size]))
            if size in self.uniqueness:
                out.append(self._row(f"uniqueness@{size}", self.uniqueness[size]))
            if timing and size in self.sample_seconds:
                out.append(self._row(f"time@{size}", self.sample_seconds[size]))
        for stat in STATISTICS:
            if stat in self.kld_mean:
                out.append(self._row(f"kld_{stat}", self.kld_mean[stat], self.kld_std[stat]))
        return out

    def _row(self, metric, value, std=""):
        return {"model": self.model, "dataset": self.dataset, "metric": metric, "value": value, "std": std}

    def to_csv(self, timing: bool = True) -> str:
        return rows_to_csv(self.rows(timing))

    def histogram_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["statistic", "bin", "lo", "hi", "test_count", "generated_count"])
        for stat, h in self.histograms.items():
            edges = h["edges"]
            for k, (p, q) in enumerate(zip(h["test"], h["generated"])):
                w.writerow([stat, k, repr(edges[k]), repr(edges[k + 1]), int(p), int(q)])
        return buf.getvalue()


def rows_to_csv(rows: Sequence[dict]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=["model", "dataset", "metric", "value", "std"], lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in r.items()})
    return buf.getvalue()


def evaluate(
    generator: Generator,
    train: Sequence[Graph],
    test: Sequence[Graph],
    reps: int = 10,
    sizes: Sequence[int] = (1000, 5000),
    seed: int = 0,
    model_name: str | None = None,
    dataset_name: str = "dataset",
) -> EvalReport:
    """Novelty / uniqueness on fresh draws of each size, then ``reps`` draws of
    ``len(test)`` graphs scored by KLD against the test statistics."""
    test = list(test)
    if not test:
        raise ValueError("empty test set")
    name = model_name or getattr(generator, "name", type(generator).__name__)
    rep = EvalReport(name, dataset_name, reps)
    seeds = np.random.SeedSequence(seed).generate_state(len(sizes) + reps)
    try:
        train_certs = set(certificates(train))
        for i, size in enumerate(sizes):
            t0 = time.perf_counter()
            sample = generator.sample(size, int(seeds[i]))
            rep.sample_seconds[size] = time.perf_counter() - t0
            certs = certificates(sample)
            rep.novelty[size] = novelty(sample, (), sample_certs=certs, train_certs=train_certs)
            rep.uniqueness[size] = uniqueness(sample, sample_certs=certs)
        ref = {k: f(test) for k, f in STATISTICS.items()}
        runs = {k: [] for k in STATISTICS}
        for r in range(reps):
            sample = generator.sample(len(test), int(seeds[len(sizes) + r]))
            for k, f in STATISTICS.items():
                q = f(sample)
                runs[k].append(kld(ref[k], q))
                if r == 0:
                    hp, hq = shared_histograms(ref[k], q)
                    rep.histograms[k] = {
                        "edges": hp.edges.tolist(),
                        "test": hp.counts.tolist(),
                        "generated": hq.counts.tolist(),
                    }
    except Exception as e:
        rep.partial = True
        _summarize(rep, locals().get("runs", {}))
        raise EvaluationError(f"generator {name!r} failed: {e}", rep) from e
    _summarize(rep, runs)
    return rep


def _summarize(rep: EvalReport, runs: dict[str, list[float]]):
    for k, v in runs.items():
        if v:
            rep.kld_runs[k] = list(v)
            rep.kld_mean[k] = float(np.mean(v))
            rep.kld_std[k] = float(np.std(v))


class Replayer:
    """Generator that cycles through a fixed list of graphs; used as a reference."""

    name = "replay"

    def __init__(self, graphs: Sequence[Graph]):
        self.graphs = list(graphs)

    def sample(self, n: int, seed: int) -> list[Graph]:
        return [self.graphs[i % len(self.graphs)] for i in range(n)]
