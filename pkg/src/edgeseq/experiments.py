"""Glue between a RunConfig and the library: datasets, models, baselines, ablation."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import baselines as bl
from .config import ConfigError, RunConfig
from .datasets import GraphDataset, SplitSpec, default_split_spec, gen_community, gen_ladders, load_edge_lists, split
from .eval.metrics import kld
from .eval.stats import STATISTICS
from .graph import Graph, OrderingKind, OrderingStrategy
from .model import EdgeSeqModel, ModelConfig, ModelGenerator, SequenceSource, TrainConfig, TrainResult, train


def build_dataset(cfg: RunConfig) -> GraphDataset:
    name = cfg["dataset.name"]
    if name == "ladders":
        return gen_ladders()
    if name == "community":
        return gen_community(cfg["dataset.count"], seed=cfg["seed"])
    path = cfg["dataset.path"]
    if not path:
        raise ConfigError("dataset.name = edgelist needs dataset.path")
    if not Path(path).exists():
        raise FileNotFoundError(f"dataset.path {path} does not exist")
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        ds = load_edge_lists(path)
    ds.provenance["skipped"] = [str(w.message) for w in caught]
    if not len(ds):
        raise ConfigError(f"no usable graphs in {path}")
    return ds


def split_spec(cfg: RunConfig) -> SplitSpec:
    spec = default_split_spec(cfg["dataset.name"], cfg["seed"])
    frac = cfg["dataset.test_fraction"]
    if frac >= 0:
        spec = SplitSpec(frac, spec.stratified, spec.seed)
    return spec


def train_subset(train_set: GraphDataset, cfg: RunConfig) -> GraphDataset:
    limit = cfg["dataset.train_limit"]
    if not limit or limit >= len(train_set):
        return train_set
    idx = sorted(np.random.default_rng(cfg["seed"]).permutation(len(train_set))[:limit])
    return GraphDataset([train_set.graphs[i] for i in idx], train_set.name, dict(train_set.provenance))


def model_config(cfg: RunConfig, seed: int | None = None) -> ModelConfig:
    return ModelConfig(
        embed_dim=cfg["model.embed_dim"],
        hidden_size=cfg["model.hidden_size"],
        num_layers=cfg["model.num_layers"],
        dropout=cfg["model.dropout"],
        seed=cfg["seed"] if seed is None else seed,
        dtype=cfg["model.dtype"],
    )


def train_config(cfg: RunConfig, seed: int | None = None) -> TrainConfig:
    return TrainConfig(
        epochs=cfg["train.epochs"],
        lr=cfg["train.lr"],
        halve_every=cfg["train.halve_every"],
        batch_size=cfg["train.batch_size"],
        bucket_by_length=cfg["train.bucket_by_length"],
        patience=cfg["train.patience"] or None,
        min_delta=cfg["train.min_delta"],
        seed=cfg["seed"] if seed is None else seed,
    )


def generator_for(cfg: RunConfig, model: EdgeSeqModel) -> ModelGenerator:
    return ModelGenerator(
        model, cfg["sample.temperature"], cfg["sample.max_steps"] or None, cfg["sample.max_retries"]
    )


def baseline_generator(kind: str, train_set: GraphDataset, cfg: RunConfig):
    """Fit (or train) a baseline and return ``(generator, fitted parameters)``."""
    stats = cfg.list("fit.statistics")
    unknown = set(stats) - set(STATISTICS)
    if unknown:
        raise ConfigError(f"fit.statistics: unknown statistics {sorted(unknown)}")
    if kind == "er":
        m = bl.fit_er(train_set, cfg.list("fit.p_grid", float), cfg["seed"], stats)
        return bl.er_generator(m), {"p": m.p}
    if kind == "ba":
        m = bl.fit_ba(train_set, cfg.list("fit.m_grid", int), cfg["seed"], stats)
        return bl.ba_generator(m), {"m": m.m}
    if kind == "grub":
        gcfg = bl.GRUBConfig(
            embed_dim=cfg["grub.embed_dim"],
            hidden_size=cfg["grub.hidden_size"],
            num_layers=cfg["grub.num_layers"],
            condition_on_position=cfg["grub.condition_on_position"],
            seed=cfg["seed"],
            dtype=cfg["model.dtype"],
        )
        tcfg = train_config(cfg)
        tcfg.epochs, tcfg.lr = cfg["grub.epochs"], cfg["grub.lr"]
        model, res = bl.train_grub(train_set, gcfg, tcfg)
        return bl.grub_generator(model), {"best_epoch": res.best_epoch, "best_loss": res.best_loss}
    raise ConfigError(f"unknown baseline {kind!r}")


# ---------------------------------------------------------------------------
# ordering ablation


@dataclass
class AblationRun:
    strategy: str
    seed: int
    losses: list[float]
    kld: dict[str, list[float]] = field(default_factory=dict)


@dataclass
class AblationResult:
    runs: list[AblationRun]

    def strategies(self) -> list[str]:
        return list(dict.fromkeys(r.strategy for r in self.runs))

    def mean_loss_at(self, strategy: str, epoch: int) -> float:
        vals = [r.losses[min(epoch, len(r.losses) - 1)] for r in self.runs if r.strategy == strategy]
        return float(np.mean(vals))

    def kld_summary(self, strategy: str, stat: str) -> tuple[float, float]:
        vals = [v for r in self.runs if r.strategy == strategy for v in r.kld.get(stat, [])]
        return float(np.mean(vals)), float(np.std(vals))

    def loss_rows(self) -> list[dict]:
        return [
            {"strategy": r.strategy, "seed": r.seed, "epoch": e, "loss": loss}
            for r in self.runs
            for e, loss in enumerate(r.losses)
        ]

    def kld_rows(self) -> list[dict]:
        rows = []
        for s in self.strategies():
            row = {"strategy": s}
            for stat in STATISTICS:
                row[f"{stat}_mean"], row[f"{stat}_std"] = self.kld_summary(s, stat)
            rows.append(row)
        return rows


def run_ablation(
    train_graphs: Sequence[Graph],
    test_graphs: Sequence[Graph],
    strategies: Sequence[str],
    seeds: Sequence[int],
    mcfg: ModelConfig,
    tcfg: TrainConfig,
    reps: int = 10,
    temperature: float = 0.75,
    callback=None,
) -> AblationResult:
    """Train one model per (strategy, seed) and score ``reps`` test-sized draws by KLD.

    Training seeds, ordering seeds and model init seeds all follow ``seed``.
    """
    runs = []
    ref = {k: f(test_graphs) for k, f in STATISTICS.items()}
    for name in strategies:
        kind = OrderingKind(name)
        for seed in seeds:
            model = EdgeSeqModel.for_graphs(train_graphs, ModelConfig(**{**vars(mcfg), "seed": seed}))
            src = SequenceSource(train_graphs, OrderingStrategy(kind, seed))
            res: TrainResult = train(model, src, TrainConfig(**{**vars(tcfg), "seed": seed}))
            run = AblationRun(name, seed, res.losses, {k: [] for k in STATISTICS})
            gen = ModelGenerator(model, temperature)
            draws = np.random.SeedSequence(seed).generate_state(reps)
            for r in range(reps):
                sample = gen.sample(len(test_graphs), int(draws[r]))
                for k, f in STATISTICS.items():
                    run.kld[k].append(kld(ref[k], f(sample)))
            runs.append(run)
            if callback is not None:
                callback(run)
    return AblationResult(runs)
