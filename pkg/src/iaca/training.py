"""Mini-batch training of fusion models on the concordance loss.

Each step binds fresh parameter leaves, runs every sequence of the batch
through one shared graph, and scores the concatenated clip predictions
with a single batch-level CCC. Validation CCC is tracked per epoch and
the best-scoring parameters are restored when fitting ends.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .autodiff import Tensor, concat_cols
from .gating import FusionModel
from .metrics import ccc, ccc_loss

OPTIMIZERS = ("sgd", "adaptive-moment")


class TrainingDivergence(RuntimeError):
    """Loss became non-finite; training state is not trustworthy."""


@dataclass
class TrainConfig:
    epochs: int = 40
    batch_size: int = 8
    lr: float = 0.02
    optimizer: str = "adaptive-moment"
    seed: int = 0
    patience: int = 10  # epochs without val improvement; 0 disables

    def validate(self) -> None:
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        # lr = 0 is allowed so a no-op fit stays expressible
        if self.lr < 0:
            raise ValueError(f"lr must be non-negative, got {self.lr}")
        if self.optimizer not in OPTIMIZERS:
            raise ValueError(f"optimizer must be one of {OPTIMIZERS}, got {self.optimizer!r}")
        if self.patience < 0:
            raise ValueError(f"patience must be >= 0, got {self.patience}")


class Sgd:
    def __init__(self, lr: float):
        self.lr = lr

    def step(self, params: dict, grads: dict) -> None:
        for name, g in grads.items():
            params[name] -= self.lr * g


class Adam:
    """Adaptive moment estimation with bias correction."""

    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m: dict = {}
        self.v: dict = {}

    def step(self, params: dict, grads: dict) -> None:
        self.t += 1
        for name, g in grads.items():
            m = self.m.setdefault(name, np.zeros_like(g))
            v = self.v.setdefault(name, np.zeros_like(g))
            m += (1.0 - self.beta1) * (g - m)
            v += (1.0 - self.beta2) * (g * g - v)
            m_hat = m / (1.0 - self.beta1 ** self.t)
            v_hat = v / (1.0 - self.beta2 ** self.t)
            params[name] -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def make_optimizer(name: str, lr: float):
    if name == "sgd":
        return Sgd(lr)
    if name == "adaptive-moment":
        return Adam(lr)
    raise ValueError(f"optimizer must be one of {OPTIMIZERS}, got {name!r}")


@dataclass
class EpochRecord:
    epoch: int
    train_ccc: float
    val_ccc: float
    loss: float


@dataclass
class FitResult:
    history: list = field(default_factory=list)
    best_val_ccc: float = float("-inf")
    best_epoch: int = -1
    stopped_early: bool = False


def evaluate(model: FusionModel, seqs: Sequence) -> float:
    """CCC of the model over every clip of a split, concatenated."""
    preds = [model.predict_values(s.xa, s.xv) for s in seqs]
    golds = [np.asarray(s.target).reshape(1, -1) for s in seqs]
    return ccc(np.hstack(preds), np.hstack(golds))


def _batch_loss(model: FusionModel, batch: Sequence) -> tuple[Tensor, dict]:
    leaves = model.bind()
    preds = [model.forward_graph(Tensor(s.xa), Tensor(s.xv), leaves)[0] for s in batch]
    pred_cat = preds[0] if len(preds) == 1 else concat_cols(*preds)
    gold_cat = np.hstack([np.asarray(s.target).reshape(1, -1) for s in batch])
    return ccc_loss(pred_cat, gold_cat), leaves


def fit(model: FusionModel, train: Sequence, val: Sequence,
        cfg: Optional[TrainConfig] = None) -> FitResult:
    """Train in place; leaves the best-validation parameters in the model."""
    cfg = cfg if cfg is not None else TrainConfig()
    cfg.validate()
    if not train:
        raise ValueError("empty training set")
    if not val:
        raise ValueError("empty validation set")
    optimizer = make_optimizer(cfg.optimizer, cfg.lr)
    rng = np.random.default_rng(cfg.seed)
    result = FitResult()
    best_params = {k: v.copy() for k, v in model.params.items()}
    since_best = 0

    for epoch in range(cfg.epochs):
        order = rng.permutation(len(train))
        losses = []
        for start in range(0, len(train), cfg.batch_size):
            batch = [train[i] for i in order[start:start + cfg.batch_size]]
            loss, leaves = _batch_loss(model, batch)
            value = loss.item()
            if not np.isfinite(value):
                raise TrainingDivergence(
                    f"non-finite loss {value} at epoch {epoch}, "
                    f"batch starting at {start}")
            loss.backward()
            grads = {name: leaf.grad for name, leaf in leaves.items()}
            optimizer.step(model.params, grads)
            losses.append(value)

        record = EpochRecord(epoch=epoch,
                             train_ccc=evaluate(model, train),
                             val_ccc=evaluate(model, val),
                             loss=float(np.mean(losses)))
        result.history.append(record)
        if record.val_ccc > result.best_val_ccc:
            result.best_val_ccc = record.val_ccc
            result.best_epoch = epoch
            best_params = {k: v.copy() for k, v in model.params.items()}
            since_best = 0
        else:
            since_best += 1
            if cfg.patience and since_best >= cfg.patience:
                result.stopped_early = True
                break

    model.params.update(best_params)
    return result


def save_history(history: Iterable[EpochRecord], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "train_ccc", "val_ccc", "loss"])
        for r in history:
            writer.writerow([r.epoch, f"{r.train_ccc:.6f}", f"{r.val_ccc:.6f}",
                             f"{r.loss:.6f}"])


def load_history(path) -> list:
    records = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            records.append(EpochRecord(epoch=int(row["epoch"]),
                                       train_ccc=float(row["train_ccc"]),
                                       val_ccc=float(row["val_ccc"]),
                                       loss=float(row["loss"])))
    return records
