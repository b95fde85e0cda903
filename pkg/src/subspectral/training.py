"""Training and evaluation loops with per-head reporting.

Each run rebuilds the model from its own seed, reshuffles every epoch
from a counter-based RNG keyed on (run seed, epoch), and tracks per-head
test accuracy after every epoch. The checkpointed state is the epoch with
the best global-head test accuracy; with repeats the reported score is
the mean of per-run bests.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .models import (
    ModelGraph,
    SubSpectralConfig,
    build_baseline,
    build_subspectralnet,
    multi_head_loss,
)
from .nn.optim import adam_step
from .seeding import STREAM_DROPOUT, epoch_rng, philox_rng


@dataclass
class TrainConfig:
    epochs: int = 200
    lr: float = 1e-3
    batch_size: int = 16
    seed: int = 0
    repeats: int = 3
    model: str = "subspectralnet"
    sub_size: int = 20
    hop_size: int = 10
    head_compat: bool = False
    include_sub_heads: bool = True
    use_sub_losses: bool = True
    width_multiplier: int = 1
    dropout: float = 0.3
    eval_batch: int = 64

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.lr < 0:
            raise ValueError("lr must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.repeats < 1:
            raise ValueError("repeats must be >= 1")
        if self.model not in ("subspectralnet", "baseline"):
            raise ValueError(f"unknown model {self.model!r}")


@dataclass
class EvalReport:
    head_names: list[str]
    accuracy: dict[str, float]
    confusion: dict[str, np.ndarray]
    n_samples: int


@dataclass
class RunHistory:
    run_seed: int
    epoch_loss: list[float] = field(default_factory=list)
    test_accuracy: dict[str, list[float]] = field(default_factory=dict)
    train_accuracy: list[float] = field(default_factory=list)
    best_epoch: int = -1
    best_accuracy: float = -1.0


@dataclass
class TrainResult:
    graph: ModelGraph
    best_run: int
    histories: list[RunHistory]
    average_best: float
    final_report: EvalReport


def build_model(
    cfg: TrainConfig, mel_bins: int, frames: int, channels: int, run_seed: int, class_names=None, n_classes: int = 10
) -> ModelGraph:
    if cfg.model == "baseline":
        return build_baseline(
            mel_bins,
            frames,
            channels,
            n_classes=n_classes,
            width_multiplier=cfg.width_multiplier,
            dropout=cfg.dropout,
            seed=run_seed,
            class_names=class_names,
        )
    sub_cfg = SubSpectralConfig(mel_bins, cfg.sub_size, cfg.hop_size)
    return build_subspectralnet(
        sub_cfg,
        frames,
        channels,
        n_classes=n_classes,
        head_compat=cfg.head_compat,
        include_sub_heads=cfg.include_sub_heads,
        dropout=cfg.dropout,
        seed=run_seed,
        class_names=class_names,
    )


def predict_heads(graph: ModelGraph, features: np.ndarray, batch: int = 64) -> dict[str, np.ndarray]:
    """Eval-mode head predictions (class ids) over a feature tensor."""
    preds: dict[str, list] = {name: [] for name in graph.head_names()}
    for lo in range(0, features.shape[0], batch):
        out = graph.forward(features[lo : lo + batch], train=False)
        for name, probs in out.items():
            preds[name].append(np.argmax(probs, axis=1))
    return {name: np.concatenate(chunks) for name, chunks in preds.items()}


def predict_probs(graph: ModelGraph, features: np.ndarray, batch: int = 64) -> dict[str, np.ndarray]:
    out: dict[str, list] = {name: [] for name in graph.head_names()}
    for lo in range(0, features.shape[0], batch):
        probs = graph.forward(features[lo : lo + batch], train=False)
        for name, p in probs.items():
            out[name].append(p)
    return {name: np.concatenate(chunks, axis=0) for name, chunks in out.items()}


def evaluate_model(graph: ModelGraph, features: np.ndarray, labels: np.ndarray, batch: int = 64) -> EvalReport:
    """Accuracy and confusion matrix per head (rows true, columns predicted)."""
    n_classes = graph.desc["n_classes"]
    preds = predict_heads(graph, features, batch)
    accuracy = {}
    confusion = {}
    for name, p in preds.items():
        matrix = np.zeros((n_classes, n_classes), dtype=np.int64)
        np.add.at(matrix, (labels.astype(int), p.astype(int)), 1)
        confusion[name] = matrix
        accuracy[name] = float(np.trace(matrix)) / len(labels)
    return EvalReport(head_names=graph.head_names(), accuracy=accuracy, confusion=confusion, n_samples=len(labels))


def _snapshot(graph: ModelGraph):
    params = [p.data.copy() for p in graph.parameters()]
    buffers = [value.copy() for _, value in graph.buffers()]
    return params, buffers


def _restore(graph: ModelGraph, snapshot) -> None:
    params, buffers = snapshot
    for p, saved in zip(graph.parameters(), params):
        p.data[...] = saved
    names = [name for name, _ in graph.buffers()]
    layers = {}
    for seq in graph._sequentials():
        for layer in seq.layers:
            for name, _ in layer.buffers():
                layers[name] = layer
    for name, saved in zip(names, buffers):
        layers[name].load_buffer(name, saved)


def train_model(
    train_x: np.ndarray,
    train_y: np.ndarray,
    test_x: np.ndarray,
    test_y: np.ndarray,
    cfg: TrainConfig,
    class_names=None,
) -> TrainResult:
    """Minibatch Adam over the multi-head loss, repeated cfg.repeats times.

    Aborts with run/epoch/batch context if the loss goes NaN. Training is
    bit-reproducible for a fixed seed in single-threaded mode.
    """
    if train_x.shape[0] == 0 or test_x.shape[0] == 0:
        raise ValueError("both train and test splits must be non-empty")
    _, channels, mel_bins, frames = train_x.shape
    if class_names is not None:
        n_classes = len(class_names)
    else:
        n_classes = int(max(train_y.max(), test_y.max())) + 1
    histories = []
    best_overall = (-1.0, None, None, None)  # acc, run index, snapshot, graph
    for run in range(cfg.repeats):
        run_seed = cfg.seed + run
        graph = build_model(cfg, mel_bins, frames, channels, run_seed, class_names, n_classes)
        graph.set_dropout_rng(philox_rng(run_seed, STREAM_DROPOUT))
        store = graph.param_store()
        loss_heads = graph.head_names() if cfg.use_sub_losses else ["global"]
        history = RunHistory(run_seed=run_seed, test_accuracy={name: [] for name in graph.head_names()})
        best_snapshot = None
        for epoch in range(cfg.epochs):
            order = epoch_rng(run_seed, epoch).permutation(train_x.shape[0])
            total_loss = 0.0
            n_batches = 0
            for lo in range(0, len(order), cfg.batch_size):
                idx = order[lo : lo + cfg.batch_size]
                probs = graph.forward(train_x[idx], train=True)
                loss, dprobs = multi_head_loss(probs, train_y[idx], loss_heads)
                if math.isnan(loss):
                    raise RuntimeError(f"NaN loss at run {run}, epoch {epoch}, batch {n_batches}")
                store.zero_grad()
                graph.backward(dprobs)
                adam_step(store, lr=cfg.lr)
                total_loss += loss
                n_batches += 1
            history.epoch_loss.append(total_loss / n_batches)
            test_report = evaluate_model(graph, test_x, test_y, cfg.eval_batch)
            for name in graph.head_names():
                history.test_accuracy[name].append(test_report.accuracy[name])
            train_report = evaluate_model(graph, train_x, train_y, cfg.eval_batch)
            history.train_accuracy.append(train_report.accuracy["global"])
            if test_report.accuracy["global"] > history.best_accuracy:
                history.best_accuracy = test_report.accuracy["global"]
                history.best_epoch = epoch
                best_snapshot = _snapshot(graph)
        histories.append(history)
        if history.best_accuracy > best_overall[0]:
            best_overall = (history.best_accuracy, run, best_snapshot, graph)
    _, best_run, snapshot, graph = best_overall
    _restore(graph, snapshot)
    final_report = evaluate_model(graph, test_x, test_y, cfg.eval_batch)
    average_best = float(np.mean([h.best_accuracy for h in histories]))
    return TrainResult(
        graph=graph,
        best_run=best_run,
        histories=histories,
        average_best=average_best,
        final_report=final_report,
    )


def _format(value: float) -> str:
    return f"{value:.6g}"


def write_report_tsv(path, report: EvalReport) -> None:
    with open(path, "w") as fh:
        fh.write("head\taccuracy\tn_samples\n")
        for name in report.head_names:
            fh.write(f"{name}\t{_format(report.accuracy[name])}\t{report.n_samples}\n")


def write_confusion_tsv(path, matrix: np.ndarray, class_names) -> None:
    with open(path, "w") as fh:
        fh.write("class\t" + "\t".join(class_names) + "\n")
        for name, row in zip(class_names, matrix):
            fh.write(name + "\t" + "\t".join(str(int(v)) for v in row) + "\n")


def write_curves_tsv(path, history: RunHistory) -> None:
    heads = list(history.test_accuracy)
    with open(path, "w") as fh:
        fh.write("epoch\tloss\ttrain_acc_global\t" + "\t".join(f"test_acc_{h}" for h in heads) + "\n")
        for epoch in range(len(history.epoch_loss)):
            cells = [str(epoch), _format(history.epoch_loss[epoch]), _format(history.train_accuracy[epoch])]
            cells += [_format(history.test_accuracy[h][epoch]) for h in heads]
            fh.write("\t".join(cells) + "\n")
