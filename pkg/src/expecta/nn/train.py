"""Adam training loop, evaluation, and history output."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from ..dataset import Dataset
from ..exceptions import SpecificationError, TrainingFailureError
from ..seeds import spawn
from .model import ArchConfig, Model

DIVERGENCE_LOSS = 1e3


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 5
    batch_size: int = 64
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    val_fraction: float = 0.2

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise SpecificationError("epochs and batch_size must be positive")
        if self.learning_rate < 0:
            raise SpecificationError("learning rate must be >= 0")
        if not 0.0 <= self.val_fraction < 1.0:
            raise SpecificationError("val_fraction must be in [0, 1)")

    def to_jsonable(self) -> dict:
        return {
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "learning_rate": self.learning_rate,
            "beta1": self.beta1,
            "beta2": self.beta2,
            "eps": self.eps,
            "seed": self.seed,
            "val_fraction": self.val_fraction,
        }

    @staticmethod
    def from_jsonable(obj: Mapping) -> "TrainConfig":
        return TrainConfig(
            int(obj["epochs"]),
            int(obj["batch_size"]),
            float(obj["learning_rate"]),
            float(obj["beta1"]),
            float(obj["beta2"]),
            float(obj["eps"]),
            int(obj["seed"]),
            float(obj["val_fraction"]),
        )


def _batched_logits(model: Model, x: np.ndarray, batch: int = 256) -> np.ndarray:
    outs = [model.forward(x[i : i + batch]) for i in range(0, len(x), batch)]
    return np.concatenate(outs, axis=0)


def _accuracy(model: Model, x: np.ndarray, y: np.ndarray) -> float:
    preds = _batched_logits(model, x).argmax(axis=1)
    return float((preds == y).mean())


def train(
    train_set: Dataset,
    arch: ArchConfig,
    cfg: TrainConfig,
    val_set: Dataset | None = None,
    dtype=np.float32,
) -> tuple[Model, list[dict]]:
    """Train by Adam on softmax cross-entropy; returns the best-validation model.

    When no validation set is given, cfg.val_fraction of the training set
    is held out by a seed-derived permutation.
    """
    if train_set.n < 1:
        raise SpecificationError("training set is empty")
    x = train_set.images
    y = np.asarray(train_set.trusted_y1())
    if val_set is not None:
        if val_set.n < 1:
            raise SpecificationError("validation set is empty")
        vx, vy = val_set.images, np.asarray(val_set.trusted_y1())
    else:
        n_val = int(round(train_set.n * cfg.val_fraction))
        if n_val > 0:
            perm = spawn(cfg.seed, "valsplit").permutation(train_set.n)
            vx, vy = x[perm[:n_val]], y[perm[:n_val]]
            x, y = x[perm[n_val:]], y[perm[n_val:]]
        else:
            vx, vy = x, y
    n = len(x)
    if n < 1:
        raise SpecificationError("no training samples left after validation split")

    model = Model(arch, dtype, init_seed=cfg.seed)
    model.train_seed = cfg.seed
    model.set_dropout_rng(spawn(cfg.seed, "dropout"))
    m = np.zeros_like(model.theta)
    v = np.zeros_like(model.theta)
    lr = model.dtype.type(cfg.learning_rate)
    b1 = model.dtype.type(cfg.beta1)
    b2 = model.dtype.type(cfg.beta2)
    eps = model.dtype.type(cfg.eps)
    t = 0
    history: list[dict] = []
    best_acc = -1.0
    best_theta = model.theta.copy()
    for epoch in range(cfg.epochs):
        perm = spawn(cfg.seed, "shuffle", epoch).permutation(n)
        total = 0.0
        seen = 0
        for bi, start in enumerate(range(0, n, cfg.batch_size)):
            idx = perm[start : start + cfg.batch_size]
            loss, g = model.loss_and_grad(x[idx], y[idx])
            if not math.isfinite(loss) or loss > DIVERGENCE_LOSS:
                raise TrainingFailureError(
                    f"training diverged at epoch {epoch}, batch {bi}: loss {loss}",
                    epoch=epoch,
                    batch=bi,
                )
            t += 1
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            mhat = m / model.dtype.type(1 - cfg.beta1**t)
            vhat = v / model.dtype.type(1 - cfg.beta2**t)
            model.theta -= lr * mhat / (np.sqrt(vhat) + eps)
            total += loss * len(idx)
            seen += len(idx)
        # the loss guard above runs pre-update, so a blow-up on the last
        # batch of an epoch only shows in the weights
        if not np.isfinite(model.theta).all():
            raise TrainingFailureError(
                f"training diverged at epoch {epoch}: non-finite weights",
                epoch=epoch,
                batch=-1,
            )
        val_acc = _accuracy(model, vx, vy)
        history.append(
            {"epoch": epoch, "loss": total / seen, "val_acc": val_acc}
        )
        if val_acc > best_acc:
            best_acc = val_acc
            best_theta = model.theta.copy()
    model.theta[...] = best_theta
    model.epochs_seen = cfg.epochs
    return model, history


def evaluate(model: Model, ds: Dataset) -> float:
    """Fraction of argmax-correct predictions (ties go to the lower class)."""
    if ds.n < 1:
        raise SpecificationError("cannot evaluate on an empty dataset")
    return _accuracy(model, ds.images, np.asarray(ds.trusted_y1()))


def write_history_csv(history: Sequence[Mapping], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "loss", "val_acc"])
        for row in history:
            writer.writerow([row["epoch"], repr(float(row["loss"])), repr(float(row["val_acc"]))])
