"""Mini-batch Adam training with validation-based model selection."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, replace

import numpy as np

from ..arch import Architecture, param_count
from ..fitness import FitnessReport
from ..metrics import accuracy, argmax_predictions, cohens_kappa, metric_report, multiclass_auc, MetricError
from .layers import softmax_cross_entropy
from .network import Network

log = logging.getLogger(__name__)


class TrainingDiverged(FloatingPointError):
    def __init__(self, epoch: int, loss: float):
        super().__init__(f"loss became {loss} in epoch {epoch}")
        self.epoch = epoch


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 10
    batch_size: int = 32
    learning_rate: float = 1e-3
    seed: int = 0
    patience: int | None = None
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.patience is not None and self.patience < 1:
            raise ValueError("patience must be >= 1 when set")


class Adam:
    def __init__(self, net: Network, lr: float, beta1=0.9, beta2=0.999, eps=1e-8):
        self.net, self.lr, self.b1, self.b2, self.eps = net, lr, beta1, beta2, eps
        self.t = 0
        self.m = {(i, n): np.zeros_like(p) for i, n, p in net.parameters()}
        self.v = {(i, n): np.zeros_like(p) for i, n, p in net.parameters()}

    def step(self) -> None:
        self.t += 1
        c1 = 1 - self.b1 ** self.t
        c2 = 1 - self.b2 ** self.t
        for (i, name, p), (_, _, g) in zip(self.net.parameters(), self.net.gradients()):
            m, v = self.m[i, name], self.v[i, name]
            m *= self.b1
            m += (1 - self.b1) * g
            v *= self.b2
            v += (1 - self.b2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def _check_data(arch: Architecture, x, y, name: str):
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if len(x) == 0:
        raise ValueError(f"{name} set is empty")
    if x.shape[1:] != arch.input_shape:
        raise ValueError(f"{name} images are {x.shape[1:]}, architecture expects {arch.input_shape}")
    if y.shape != (len(x),):
        raise ValueError(f"{name} labels do not match image count")
    if y.min() < 0 or y.max() >= arch.num_classes:
        raise ValueError(f"{name} labels outside [0, {arch.num_classes})")
    return x, y


def score(net: Network, x, y) -> tuple[float, float | None, float | None, np.ndarray]:
    """Validation accuracy, macro AUC, kappa and the probability matrix."""
    proba = net.predict_proba(x)
    pred = argmax_predictions(proba)
    acc = accuracy(y, pred)
    try:
        auc = multiclass_auc(y, proba)[0]
    except MetricError:
        auc = None
    try:
        kappa = cohens_kappa(y, pred, net.arch.num_classes)
    except MetricError:
        kappa = None
    return acc, auc, kappa, proba


def train(arch: Architecture, train_set, val_set, cfg: TrainConfig) -> tuple[Network, FitnessReport]:
    """Train ``arch`` on ``train_set`` and select the best validation epoch.

    Both sets are ``(images, labels)`` pairs. Training stops after
    ``cfg.epochs`` or once validation accuracy has not improved for
    ``cfg.patience`` consecutive epochs. The returned network holds the
    weights of the best epoch (first one on ties).
    """
    start = time.perf_counter()
    x, y = _check_data(arch, *train_set, "train")
    xv, yv = _check_data(arch, *val_set, "validation")
    rng = np.random.default_rng(cfg.seed)
    net = Network(arch, rng)
    opt = Adam(net, cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.eps)

    best = None
    stale = 0
    epochs_run = 0
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(len(x))
        for s in range(0, len(x), cfg.batch_size):
            idx = order[s:s + cfg.batch_size]
            logits = net.forward(x[idx], train=True, rng=rng)
            if not np.all(np.isfinite(logits)):
                raise TrainingDiverged(epoch, float("nan"))
            loss, dlogits = softmax_cross_entropy(logits, y[idx])
            if not np.isfinite(loss):
                raise TrainingDiverged(epoch, loss)
            net.backward(dlogits)
            opt.step()
        epochs_run = epoch
        acc, auc, kappa, _ = score(net, xv, yv)
        if best is None or acc > best[0]:
            best = (acc, auc, kappa, net.state(), epoch)
            stale = 0
        else:
            stale += 1
            if cfg.patience is not None and stale >= cfg.patience:
                log.debug("early stop after epoch %d", epoch)
                break

    acc, auc, kappa, state, _ = best
    net.load_state(state)
    report = FitnessReport(accuracy=acc, auc=auc, kappa=kappa, params=param_count(arch),
                           seconds=time.perf_counter() - start, epochs=epochs_run)
    return net, report


def evaluate(net: Network, x, y) -> dict:
    """Full metrics report (metrics JSON schema) for ``net`` on ``(x, y)``."""
    x, y = _check_data(net.arch, x, y, "evaluation")
    return metric_report(y, net.predict_proba(x), net.arch.num_classes)


class TrainingEvaluator:
    """Fitness by actually training the candidate; the searches' default."""

    def __init__(self, train_set, val_set, config: TrainConfig | None = None, fold: int | None = None):
        self.train_set = train_set
        self.val_set = val_set
        self.config = config or TrainConfig()
        self.fold = fold

    def fit(self, arch, *, epochs: int, seed: int, patience: int | None = None):
        cfg = replace(self.config, epochs=epochs, seed=seed, patience=patience)
        net, report = train(arch, self.train_set, self.val_set, cfg)
        return net, replace(report, fold=self.fold)
