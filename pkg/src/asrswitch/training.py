"""Adam, plateau learning-rate halving, and the epoch loop."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InvalidInputError
from .features import FeatureStats
from .model import Architecture, SwitchModel, init_model, loss_and_grad, predict_proba, bce_loss, one_hot

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    initial_lr: float = 1e-4
    plateau_epochs: int = 5
    lr_factor: float = 0.5
    max_epochs: int = 50
    batch_size: int = 32
    seed: int = 0
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    normalize_features: bool = False

    def __post_init__(self):
        if not self.initial_lr > 0:
            raise InvalidInputError("initial_lr must be positive")
        if not 0 < self.lr_factor < 1:
            raise InvalidInputError("lr_factor must lie in (0, 1)")
        if self.batch_size < 1 or self.max_epochs < 1 or self.plateau_epochs < 1:
            raise InvalidInputError("batch_size, max_epochs and plateau_epochs must be >= 1")


@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    t: int = 0

    @classmethod
    def zeros_like(cls, params):
        return cls({k: np.zeros_like(p) for k, p in params.items()},
                   {k: np.zeros_like(p) for k, p in params.items()})


def adam_step(params, grads, state: AdamState, lr: float,
              beta1=0.9, beta2=0.999, eps=1e-8):
    """One bias-corrected Adam update; returns new ``(params, state)``."""
    t = state.t + 1
    new_params, m_new, v_new = {}, {}, {}
    c1 = 1.0 - beta1 ** t
    c2 = 1.0 - beta2 ** t
    for k, p in params.items():
        g = grads[k]
        if g.shape != p.shape:
            raise InvalidInputError(f"gradient for {k} has shape {g.shape}, expected {p.shape}")
        m = beta1 * state.m[k] + (1.0 - beta1) * g
        v = beta2 * state.v[k] + (1.0 - beta2) * g * g
        new_params[k] = p - lr * (m / c1) / (np.sqrt(v / c2) + eps)
        m_new[k], v_new[k] = m, v
    return new_params, AdamState(m_new, v_new, t)


class PlateauHalving:
    """Multiply the learning rate by ``factor`` once the monitored loss has
    not gone below its best value for ``patience`` consecutive epochs.

    The counter resets on every improvement and after every reduction.
    """

    def __init__(self, lr: float, patience: int = 5, factor: float = 0.5):
        self.lr = lr
        self.patience = patience
        self.factor = factor
        self.best = np.inf
        self.bad_epochs = 0

    def step(self, loss: float) -> bool:
        """Record one epoch's loss; True when the rate was just reduced."""
        if loss < self.best:
            self.best = loss
            self.bad_epochs = 0
            return False
        self.bad_epochs += 1
        if self.bad_epochs >= self.patience:
            self.lr *= self.factor
            self.bad_epochs = 0
            return True
        return False


@dataclass(frozen=True)
class EpochStats:
    epoch: int
    lr: float
    train_loss: float
    dev_loss: float
    dev_acc: float

    def tsv(self) -> str:
        return f"{self.epoch}\t{self.lr!r}\t{self.train_loss!r}\t{self.dev_loss!r}\t{self.dev_acc!r}"


@dataclass
class TrainResult:
    model: SwitchModel
    log: list[EpochStats] = field(default_factory=list)
    best_epoch: int = 0

    @property
    def best(self) -> EpochStats:
        return self.log[self.best_epoch - 1]


def write_train_log(path, stats) -> None:
    """Tab-separated: epoch, lr, train_loss, dev_loss, dev_acc."""
    Path(path).write_text("".join(s.tsv() + "\n" for s in stats), encoding="utf-8")


def evaluate_split(model: SwitchModel, feats, labels) -> tuple[float, float]:
    """Mean cross-entropy and accuracy (argmax with ties to class 1)."""
    probs = predict_proba(model, feats)
    labels = np.asarray(labels, dtype=int)
    loss = float(np.mean(bce_loss(probs, one_hot(labels, model.arch.num_classes))))
    pred = (probs[:, 1] >= probs[:, 0]).astype(int)
    return loss, float(np.mean(pred == labels))


def train(train_set, dev_set, cfg: TrainConfig = TrainConfig(),
          arch: Architecture = Architecture(), progress=None) -> TrainResult:
    """Mini-batch Adam with dev-loss plateau halving; keeps the best-dev model.

    ``train_set`` and ``dev_set`` are ``(features_list, labels)`` pairs with
    class-index labels (0 = mixture better).
    """
    x_tr, y_tr = train_set
    x_dev, y_dev = dev_set
    if len(x_tr) == 0:
        raise InvalidInputError("training set is empty (all utterances tied?)")
    if len(x_dev) == 0:
        raise InvalidInputError("development set is empty")
    if len(x_tr) != len(y_tr) or len(x_dev) != len(y_dev):
        raise InvalidInputError("features and labels differ in length")
    y_tr = np.asarray(y_tr, dtype=int)

    stats = FeatureStats.fit(x_tr) if cfg.normalize_features else None
    model = init_model(arch, cfg.seed, stats)
    state = AdamState.zeros_like(model.params)
    sched = PlateauHalving(cfg.initial_lr, cfg.plateau_epochs, cfg.lr_factor)
    rng = np.random.default_rng(cfg.seed)
    result = TrainResult(model.copy())
    best_dev = np.inf

    for epoch in range(1, cfg.max_epochs + 1):
        lr = sched.lr
        order = rng.permutation(len(x_tr))
        total = 0.0
        for start in range(0, len(order), cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            batch_loss, grads, _ = loss_and_grad(model, [x_tr[i] for i in idx], y_tr[idx])
            total += batch_loss * len(idx)
            model.params, state = adam_step(model.params, grads, state, lr,
                                            cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps)
        dev_loss, dev_acc = evaluate_split(model, x_dev, y_dev)
        st = EpochStats(epoch, lr, total / len(order), dev_loss, dev_acc)
        result.log.append(st)
        log.info("epoch %d lr=%.3g train=%.4f dev=%.4f acc=%.3f",
                 epoch, lr, st.train_loss, dev_loss, dev_acc)
        if progress is not None:
            progress(st)
        if dev_loss < best_dev:
            best_dev = dev_loss
            result.model = model.copy()
            result.best_epoch = epoch
        sched.step(dev_loss)
    return result
