"""Mini-batch training loop."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from affectanim.nn.losses import cross_entropy, mse, one_hot
from affectanim.nn.network import Network
from affectanim.nn.optim import Adam

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    epochs: int = 200
    batch_size: int = 64
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0


def _targets(net: Network, y: np.ndarray, task: str) -> np.ndarray:
    if task == "classify":
        return one_hot(y, net.output_shape[0], net.dtype)
    return np.asarray(y, dtype=net.dtype)


def evaluate_loss(net: Network, x: np.ndarray, y: np.ndarray, task: str, batch_size: int = 512) -> float:
    """Mean loss in eval mode (dropout off)."""
    loss_fn = cross_entropy if task == "classify" else mse
    total = 0.0
    for i in range(0, len(x), batch_size):
        out = net.forward(x[i : i + batch_size])
        value, _ = loss_fn(out, _targets(net, y[i : i + batch_size], task))
        total += value * len(out)
    return total / len(x)


def fit(net: Network, x: np.ndarray, y: np.ndarray, task: str = "regress", cfg: TrainConfig | None = None,
        x_val=None, y_val=None) -> list[dict]:
    """Train ``net`` in place with Adam.

    ``task`` is ``"classify"`` (integer labels, cross-entropy) or
    ``"regress"`` (real targets, MSE). Returns one record per epoch with the
    mean training loss and, when validation data is given, the validation
    loss.
    """
    cfg = cfg or TrainConfig()
    if task not in ("classify", "regress"):
        raise ValueError(f"unknown task {task!r}")
    if len(x) != len(y) or len(x) == 0:
        raise ValueError("training inputs and targets must be non-empty and of equal length")
    loss_fn = cross_entropy if task == "classify" else mse
    opt = Adam(net.parameters(), cfg.lr, cfg.beta1, cfg.beta2, cfg.eps)
    rng = np.random.default_rng([cfg.seed, 2])
    history = []
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(len(x))
        total = 0.0
        for i in range(0, len(x), cfg.batch_size):
            idx = order[i : i + cfg.batch_size]
            out = net.forward(x[idx], train=True)
            value, grad = loss_fn(out, _targets(net, y[idx], task))
            net.backward(grad, input_grad=False)
            opt.step(net.gradients())
            total += value * len(idx)
        record = {"epoch": epoch, "train_loss": total / len(x)}
        if x_val is not None and len(x_val):
            record["val_loss"] = evaluate_loss(net, x_val, y_val, task)
        history.append(record)
        log.info("%s epoch %d: %s", net.name or "net", epoch, record)
    return history
