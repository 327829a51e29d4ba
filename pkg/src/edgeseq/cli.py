"""Command-line driver: ``edgeseq {dataset,train,sample,eval,ablate}``.

Exit status is 0 on success, 1 for user errors (bad config, missing files,
diverged training) and 2 for anything unexpected.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import tempfile
import time
import traceback
from importlib import metadata
from pathlib import Path

from . import experiments as ex
from .config import ConfigError, RunConfig
from .datasets import GraphDataset, split
from .edgelist import EdgeListParseError, read_graphs, write_graphs
from .eval.report import EvaluationError, evaluate
from .graph import GraphError, OrderingKind, OrderingStrategy
from .model import DegenerateSampleError, EdgeSeqModel, SequenceSource, TrainingError, train
from .nn.checkpoint import CheckpointError

log = logging.getLogger("edgeseq")

USER_ERRORS = (
    ConfigError,
    FileNotFoundError,
    EdgeListParseError,
    GraphError,
    TrainingError,
    CheckpointError,
    DegenerateSampleError,
)


def _version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "unknown"


def write_atomic(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    with os.fdopen(fd, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)


class Run:
    """Output directory plus its manifest, rewritten atomically after every stage."""

    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.out = Path(cfg["output"])
        self.path = self.out / "manifest.json"
        if self.path.exists():
            self.manifest = json.loads(self.path.read_text())
        else:
            self.manifest = {"checkpoints": {}, "reports": {}, "timings": {}}
        self.manifest.update(
            config_hash=cfg.hash(),
            tool_version=_version(),
            early_stop={
                "rule": "plateau proxy: stop when the best loss has not improved by min_delta for patience epochs",
                "patience": cfg["train.patience"],
                "min_delta": cfg["train.min_delta"],
            },
        )

    def rel(self, p: Path) -> str:
        return str(p.relative_to(self.out))

    def stage(self, name: str, seconds: float, **extra):
        self.manifest["timings"][name] = {"seconds": seconds, **extra.pop("timing", {})}
        for k, v in extra.items():
            if isinstance(v, dict):
                self.manifest.setdefault(k, {}).update(v)
            else:
                self.manifest[k] = v
        write_atomic(self.out / "config.txt", self.cfg.dumps())
        write_atomic(self.path, json.dumps(self.manifest, indent=2, sort_keys=True) + "\n")

    def dataset_dir(self) -> Path:
        return self.out / "dataset"

    def load_split(self) -> tuple[GraphDataset, GraphDataset]:
        d = self.dataset_dir()
        for part in ("train", "test"):
            if not (d / part / "graphs.txt").is_file():
                raise FileNotFoundError(f"{d / part / 'graphs.txt'} missing; run `edgeseq dataset` first")
        tr = GraphDataset(read_graphs(d / "train" / "graphs.txt"), "train")
        te = GraphDataset(read_graphs(d / "test" / "graphs.txt"), "test")
        return ex.train_subset(tr, self.cfg), te

    def checkpoint(self) -> Path:
        return self.out / "model.ckpt"


# ---------------------------------------------------------------------------
# stages


def cmd_dataset(cfg: RunConfig) -> Run:
    run = Run(cfg)
    t0 = time.perf_counter()
    ds = ex.build_dataset(cfg)
    tr, te = split(ds, ex.split_spec(cfg))
    d = run.dataset_dir()
    ds.save(d / "all")
    tr.save(d / "train")
    te.save(d / "test")
    run.stage(
        "dataset",
        time.perf_counter() - t0,
        dataset_hash=ds.content_hash(),
        dataset={"name": ds.name, "graphs": len(ds), "train": len(tr), "test": len(te), "dir": run.rel(d)},
    )
    log.info("dataset %s: %d graphs (%d train / %d test)", ds.name, len(ds), len(tr), len(te))
    return run


def cmd_train(cfg: RunConfig) -> Run:
    run = Run(cfg)
    tr, _ = run.load_split()
    t0 = time.perf_counter()
    model = EdgeSeqModel.for_graphs(tr.graphs, ex.model_config(cfg))
    src = SequenceSource(tr.graphs, OrderingStrategy(OrderingKind(cfg["ordering.kind"]), cfg["seed"]))
    res = train(model, src, ex.train_config(cfg), callback=_progress)
    ck = model.save(
        run.checkpoint(),
        extra_tensors=res.optimizer.state_tensors(),
        meta={
            "ordering": cfg["ordering.kind"],
            "dataset_hash": tr.content_hash(),
            "best_epoch": res.best_epoch,
            "best_loss": res.best_loss,
            "stopped_early": res.stopped_early,
            "epochs_run": len(res.losses),
            "adam_step": res.optimizer.t,
            "rng_state": res.rng_state,
        },
    )
    curve = "epoch,loss\n" + "".join(f"{e},{loss!r}\n" for e, loss in enumerate(res.losses))
    write_atomic(run.out / "loss_curve.csv", curve)
    run.stage(
        "train",
        time.perf_counter() - t0,
        checkpoints={"model": run.rel(ck)},
        reports={"loss_curve": "loss_curve.csv"},
    )
    log.info("trained %d epochs, best loss %.4f at epoch %d", len(res.losses), res.best_loss, res.best_epoch)
    return run


def _load_model(run: Run) -> EdgeSeqModel:
    ck = run.checkpoint()
    if not ck.is_file():
        raise FileNotFoundError(f"{ck} missing; run `edgeseq train` first")
    return EdgeSeqModel.load(ck)


def cmd_sample(cfg: RunConfig, n: int | None = None) -> Run:
    run = Run(cfg)
    model = _load_model(run)
    gen = ex.generator_for(cfg, model)
    n = n or cfg["sample.count"]
    t0 = time.perf_counter()
    graphs = gen.sample(n, cfg["seed"])
    secs = time.perf_counter() - t0
    path = run.out / "samples" / "samples.txt"
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
    with os.fdopen(fd, "w") as fh:
        write_graphs(graphs, fh)
    os.replace(tmp, path)
    truncated = sum(d.truncated for d in gen.last_diagnostics)
    run.stage("sample", secs, timing={"graphs": n}, reports={"samples": run.rel(path)},
              sample={"count": n, "truncated": truncated})
    return run


def cmd_eval(cfg: RunConfig, which: str | None = None) -> Run:
    run = Run(cfg)
    which = which or cfg["eval.model"]
    tr, te = run.load_split()
    t0 = time.perf_counter()
    fitted = {}
    if which == "ours":
        gen = ex.generator_for(cfg, _load_model(run))
    else:
        gen, fitted = ex.baseline_generator(which, tr, cfg)
    try:
        rep = evaluate(gen, tr.graphs, te.graphs, cfg["eval.reps"], cfg.list("eval.sizes", int), cfg["seed"],
                       which, cfg["dataset.name"])
    except EvaluationError as e:
        _write_report(run, which, e.report)
        raise
    paths = _write_report(run, which, rep)
    timing = {f"sample_seconds@{k}": v for k, v in rep.sample_seconds.items()}
    run.stage(f"eval_{which}", time.perf_counter() - t0, timing=timing, reports=paths,
              fitted={which: fitted} if fitted else {})
    return run


def _write_report(run: Run, which: str, rep) -> dict:
    d = run.out / "reports"
    files = {
        f"eval_{which}_json": (d / f"eval_{which}.json", rep.to_json(timing=False)),
        f"eval_{which}_csv": (d / f"eval_{which}.csv", rep.to_csv(timing=False)),
        f"eval_{which}_histograms": (d / f"eval_{which}_histograms.csv", rep.histogram_csv()),
    }
    for p, text in files.values():
        write_atomic(p, text)
    return {k: run.rel(p) for k, (p, _) in files.items()}


def cmd_ablate(cfg: RunConfig) -> Run:
    run = Run(cfg)
    tr, te = run.load_split()
    t0 = time.perf_counter()
    strategies = cfg.list("ablate.strategies")
    for s in strategies:
        try:
            OrderingKind(s)
        except ValueError:
            raise ConfigError(f"ablate.strategies: unknown strategy {s!r}") from None
    res = ex.run_ablation(
        tr.graphs, te.graphs, strategies, cfg.list("ablate.seeds", int),
        ex.model_config(cfg), ex.train_config(cfg), cfg["ablate.reps"], cfg["sample.temperature"],
        callback=lambda r: log.info("ablate %s seed %d: final loss %.4f", r.strategy, r.seed, r.losses[-1]),
    )
    d = run.out / "ablate"
    loss_rows = res.loss_rows()
    curves = "strategy,seed,epoch,loss\n" + "".join(
        f"{r['strategy']},{r['seed']},{r['epoch']},{r['loss']!r}\n" for r in loss_rows
    )
    kld_rows = res.kld_rows()
    write_atomic(d / "loss_curves.csv", curves)
    write_atomic(d / "kld_table.json", json.dumps(kld_rows, indent=2, sort_keys=True) + "\n")
    header = list(kld_rows[0])
    table = ",".join(header) + "\n" + "".join(
        ",".join(r[h] if isinstance(r[h], str) else repr(r[h]) for h in header) + "\n" for r in kld_rows
    )
    write_atomic(d / "kld_table.csv", table)
    run.stage("ablate", time.perf_counter() - t0, reports={
        "ablate_loss_curves": "ablate/loss_curves.csv",
        "ablate_kld_table": "ablate/kld_table.csv",
        "ablate_kld_json": "ablate/kld_table.json",
    })
    return run


def _progress(epoch: int, loss: float):
    if epoch % 50 == 0:
        log.info("epoch %d loss %.4f", epoch, loss)


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="edgeseq", description="Edge-sequence graph generation experiments.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat 'section.key = value' config file")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override a config key")
    common.add_argument("--seed", type=int, help="global seed (overrides config)")
    common.add_argument("--out", help="output directory (overrides config)")
    common.add_argument("-q", "--quiet", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("dataset", parents=[common], help="generate or ingest a dataset and split it")
    sub.add_parser("train", parents=[common], help="train the edge-sequence model")
    sp = sub.add_parser("sample", parents=[common], help="sample graphs from the trained checkpoint")
    sp.add_argument("-n", type=int, help="number of graphs (default sample.count)")
    ep = sub.add_parser("eval", parents=[common], help="evaluate the model or a baseline")
    ep.add_argument("--model", choices=["ours", "er", "ba", "grub"], help="default eval.model")
    sub.add_parser("ablate", parents=[common], help="ordering-strategy ablation")
    sub.add_parser("config", parents=[common], help="print the resolved config")
    return p


def resolve_config(args) -> RunConfig:
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        cfg.set(k.strip(), v)
    if args.seed is not None:
        cfg.set("seed", str(args.seed))
    if args.out is not None:
        cfg.set("output", args.out)
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO, format="%(message)s")
    try:
        cfg = resolve_config(args)
        if args.command == "dataset":
            cmd_dataset(cfg)
        elif args.command == "train":
            cmd_train(cfg)
        elif args.command == "sample":
            cmd_sample(cfg, args.n)
        elif args.command == "eval":
            cmd_eval(cfg, args.model)
        elif args.command == "ablate":
            cmd_ablate(cfg)
        elif args.command == "config":
            sys.stdout.write(cfg.dumps())
    except TrainingError as e:
        print(f"error: {e}; try a smaller train.lr", file=sys.stderr)
        return 1
    except USER_ERRORS as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except EvaluationError as e:
        print(f"error: {e} (partial report written)", file=sys.stderr)
        return 1
    except Exception:
        traceback.print_exc()
        return 2
    return 0
