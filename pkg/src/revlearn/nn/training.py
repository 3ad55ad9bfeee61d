"""Training loop: seeded batching, MSE + Adam, early stopping on validation.

The loop carves a validation slice from the training data, standardizes
features and z-scores targets with training statistics, and keeps the
parameters from the epoch with the best validation loss. Single-threaded
runs are bit-for-bit reproducible for a given seed.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import NonFiniteLossError
from .adam import Adam
from .model import Model
from .network import ModelSpec, build_network, model_spec

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 64
    learning_rate: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    patience: int = 15
    max_epochs: int = 100
    seed: int = 0
    val_fraction: float = 0.1
    dropout_rate: float = 0.2


class EarlyStopping:
    """Stop after `patience` consecutive epochs without improvement."""

    def __init__(self, patience: int):
        self.patience = patience
        self.best = math.inf
        self.best_epoch = 0
        self.stale = 0

    def update(self, epoch: int, loss: float) -> tuple[bool, bool]:
        """Returns (improved, should_stop)."""
        if loss < self.best:
            self.best = loss
            self.best_epoch = epoch
            self.stale = 0
            return True, False
        self.stale += 1
        return False, self.stale >= self.patience


def _standardization(values: np.ndarray, axis) -> tuple[np.ndarray, np.ndarray]:
    mean = values.mean(axis=axis)
    std = values.std(axis=axis)
    return mean, np.maximum(std, 1e-8)


def fit(spec: ModelSpec | str, features: np.ndarray, targets: np.ndarray,
        config: TrainConfig = TrainConfig()) -> tuple[Model, list[dict]]:
    """Train a network on (n, frames, coeffs) features and (n, 4) targets.

    Returns the model restored to the best validation epoch plus a history
    of per-epoch train/validation losses (in z-scored units).
    """
    if isinstance(spec, str):
        spec = model_spec(spec)
    n = features.shape[0]
    if n < 2:
        raise ValueError("need at least two examples to carve a validation split")

    rng = np.random.default_rng(config.seed)
    order = rng.permutation(n)
    n_val = min(max(1, int(round(config.val_fraction * n))), n - 1)
    val_idx, train_idx = order[:n_val], order[n_val:]

    feat_mean, feat_std = _standardization(
        features.reshape(-1, features.shape[-1]).astype(np.float64), axis=0)
    targ_mean, targ_std = _standardization(targets.astype(np.float64), axis=0)

    x = ((features.astype(np.float64) - feat_mean) / feat_std).astype(np.float32)
    y = ((targets.astype(np.float64) - targ_mean) / targ_std).astype(np.float32)
    x = x[..., None]  # (n, frames, coeffs, 1)

    input_shape = x.shape[1:]
    net = build_network(spec, input_shape, seed=np.random.default_rng(
        config.seed).integers(2**31), dropout_rate=config.dropout_rate)
    net.set_dropout_rng(np.random.default_rng(
        np.random.default_rng(config.seed + 1).integers(2**31)))
    optimizer = Adam(net.named_params(), learning_rate=config.learning_rate,
                     beta1=config.beta1, beta2=config.beta2, eps=config.eps)

    stopper = EarlyStopping(config.patience)
    best_tensors = net.snapshot()
    history: list[dict] = []
    xv, yv = x[val_idx], y[val_idx]

    for epoch in range(1, config.max_epochs + 1):
        perm = rng.permutation(len(train_idx))
        total, seen = 0.0, 0
        for start in range(0, len(perm), config.batch_size):
            idx = train_idx[perm[start:start + config.batch_size]]
            loss, _ = net.loss_and_grads(x[idx], y[idx], train=True)
            if not math.isfinite(loss):
                raise NonFiniteLossError(
                    f"non-finite loss at epoch {epoch}, batch offset {start}")
            optimizer.step(net.named_grads())
            total += loss * len(idx)
            seen += len(idx)
        train_loss = total / seen
        val_pred = net.forward(xv, train=False)
        val_loss = float(np.mean((val_pred.astype(np.float64) - yv) ** 2))
        if not math.isfinite(val_loss):
            raise NonFiniteLossError(f"non-finite validation loss at epoch {epoch}")
        improved, stop = stopper.update(epoch, val_loss)
        if improved:
            best_tensors = net.snapshot()
        history.append({"epoch": epoch, "train_loss": train_loss,
                        "val_loss": val_loss})
        log.info("epoch %d train %.5f val %.5f%s", epoch, train_loss, val_loss,
                 " *" if improved else "")
        if stop:
            log.info("early stop at epoch %d (best epoch %d)", epoch,
                     stopper.best_epoch)
            break

    net.restore(best_tensors)
    model = Model(
        network=net,
        feature_mean=feat_mean,
        feature_std=feat_std,
        target_mean=targ_mean,
        target_std=targ_std,
        provenance={
            "architecture": spec.name,
            "seed": config.seed,
            "epochs_run": len(history),
            "best_epoch": stopper.best_epoch,
            "best_val_loss": stopper.best,
            "n_train": int(len(train_idx)),
            "n_val": int(len(val_idx)),
            "batch_size": config.batch_size,
            "learning_rate": config.learning_rate,
            "patience": config.patience,
        },
    )
    return model, history
