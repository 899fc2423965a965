"""Adam training loop with patience-based early stopping."""
from __future__ import annotations

import json
import math
import time
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .. import autodiff as ad
from ..autodiff import ConfigError, ShapeError
from ..validation import check_fractions, check_image_pairs, check_labels
from .split import split_dataset

FULL_LR = 1e-6
DESK_LR = 1e-3


class TrainingDivergence(RuntimeError):
    """The training loss became NaN or infinite."""


@dataclass(frozen=True)
class TrainConfig:
    lr: float = FULL_LR
    batch_size: int = 16
    max_epochs: int = 300
    patience: int = 10
    fractions: tuple = (0.90, 0.05, 0.05)
    seed: int = 0
    min_delta: float = 1e-6
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    dtype: str = "float64"

    def __post_init__(self):
        object.__setattr__(self, "fractions", tuple(float(f) for f in self.fractions))
        problems = self.problems()
        if problems:
            raise ConfigError("; ".join(problems))

    def problems(self):
        out = []
        if not (isinstance(self.lr, (int, float)) and math.isfinite(self.lr) and self.lr > 0):
            out.append(f"lr must be a positive number, got {self.lr!r}")
        for name in ("batch_size", "max_epochs", "patience"):
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, int) or v < 1:
                out.append(f"{name} must be an integer >= 1, got {v!r}")
        try:
            check_fractions(self.fractions)
        except ValueError as exc:
            out.append(f"fractions: {exc}")
        if not 0 <= self.beta1 < 1 or not 0 <= self.beta2 < 1:
            out.append("beta1 and beta2 must lie in [0, 1)")
        if self.dtype not in ("float64", "float32"):
            out.append(f"dtype must be 'float64' or 'float32', got {self.dtype!r}")
        return out

    @classmethod
    def desk(cls, **overrides):
        return cls(**dict({"lr": DESK_LR}, **overrides))

    def to_dict(self):
        d = asdict(self)
        d["fractions"] = list(self.fractions)
        return d

    @classmethod
    def from_dict(cls, d):
        unknown = set(d) - {f.name for f in fields(cls)}
        if unknown:
            raise ConfigError(f"unknown train keys: {sorted(unknown)}")
        return cls(**d)


class EarlyStopping:
    """Tracks the best validation loss; signals a stop after ``patience`` stale epochs.

    An epoch improves when its loss is below ``best - min_delta``.
    """

    def __init__(self, patience=10, min_delta=1e-6):
        if patience < 1:
            raise ConfigError(f"patience must be >= 1, got {patience}")
        self.patience = patience
        self.min_delta = min_delta
        self.best = math.inf
        self.best_epoch = 0
        self.epoch = 0

    def update(self, val_loss):
        """Record one epoch; returns (improved, should_stop)."""
        self.epoch += 1
        improved = val_loss < self.best - self.min_delta
        if improved:
            self.best, self.best_epoch = float(val_loss), self.epoch
        return improved, self.epoch - self.best_epoch >= self.patience


def stopping_epoch(val_losses, patience=10, min_delta=1e-6):
    """Epoch (1-based) at which the rule stops for this loss sequence, or None."""
    rule = EarlyStopping(patience, min_delta)
    for loss in val_losses:
        if rule.update(loss)[1]:
            return rule.epoch
    return None


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float
    val_accuracy: float
    improved: bool
    seconds: float


@dataclass
class TrainHistory:
    epochs: list = field(default_factory=list)
    stop_epoch: int = 0
    best_epoch: int = 0
    best_val_loss: float = math.inf
    stop_reason: str = ""

    @property
    def train_loss(self):
        return [e.train_loss for e in self.epochs]

    @property
    def val_loss(self):
        return [e.val_loss for e in self.epochs]

    @property
    def val_accuracy(self):
        return [e.val_accuracy for e in self.epochs]

    @property
    def seconds(self):
        return [e.seconds for e in self.epochs]

    def summary(self, include_time=False):
        rows = [asdict(e) for e in self.epochs]
        if not include_time:
            for r in rows:
                r.pop("seconds")
        return {"epochs": rows, "stop_epoch": self.stop_epoch, "best_epoch": self.best_epoch,
                "best_val_loss": self.best_val_loss, "stop_reason": self.stop_reason}

    def to_jsonl(self):
        return "".join(json.dumps(asdict(e), sort_keys=True) + "\n" for e in self.epochs)


def evaluate_loss(model, X, y, batch_size=256):
    """Eval-mode (mean cross-entropy, accuracy) over arrays."""
    total, correct = 0.0, 0
    for i in range(0, len(y), batch_size):
        logits = model.forward(X[i:i + batch_size], training=False).data
        yb = y[i:i + batch_size]
        shifted = logits - logits.max(axis=1, keepdims=True)
        logp = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
        total += -logp[np.arange(len(yb)), yb].sum()
        correct += int((logits.argmax(axis=1) == yb).sum())
    return total / len(y), correct / len(y)


def fit_arrays(model, X_train, y_train, X_val, y_val, config: TrainConfig,
               evaluator=None, on_epoch=None):
    """Train ``model`` in place on arrays; the model ends holding the best-epoch weights.

    ``evaluator(model, epoch) -> (val_loss, val_accuracy)`` replaces the
    default validation pass, which lets tests inject loss sequences.
    ``on_epoch(record)`` is called after every epoch.
    """
    dtype = model.dtype
    X_train = check_image_pairs(X_train, model.config.input_size, dtype)
    y_train = check_labels(y_train, model.config.n_classes, len(X_train))
    if evaluator is None:
        X_val = check_image_pairs(X_val, model.config.input_size, dtype)
        y_val = check_labels(y_val, model.config.n_classes, len(X_val))

        def evaluator(m, epoch):
            return evaluate_loss(m, X_val, y_val)

    params = model.parameters()
    state = ad.AdamState(lr=config.lr, beta1=config.beta1, beta2=config.beta2, eps=config.eps)
    order_rng = np.random.default_rng(np.random.SeedSequence([config.seed, 2]))
    model.reseed_dropout(np.random.SeedSequence([config.seed, 3]))
    rule = EarlyStopping(config.patience, config.min_delta)
    history = TrainHistory()
    best_state = model.state_dict()
    n = len(y_train)
    for epoch in range(1, config.max_epochs + 1):
        t0 = time.perf_counter()
        order = order_rng.permutation(n)
        loss_sum = 0.0
        for b, start in enumerate(range(0, n, config.batch_size)):
            idx = order[start:start + config.batch_size]
            with ad.Tape() as tape:
                loss = model.loss(X_train[idx], y_train[idx], training=True)
            value = float(loss.data)
            if not math.isfinite(value):
                raise TrainingDivergence(
                    f"loss became {value} at epoch {epoch}, batch {b} (lr={config.lr}); "
                    f"last finite mean train loss {loss_sum / max(start, 1):.6g}")
            grads = ad.backward(tape, loss, wrt=params)
            ad.adam_step(params, grads, state)
            loss_sum += value * len(idx)
        val_loss, val_acc = evaluator(model, epoch)
        improved, stop = rule.update(float(val_loss))
        if improved:
            best_state = model.state_dict()
        rec = EpochRecord(epoch, loss_sum / n, float(val_loss), float(val_acc), bool(improved),
                          time.perf_counter() - t0)
        history.epochs.append(rec)
        if on_epoch is not None:
            on_epoch(rec)
        if stop:
            history.stop_reason = "patience"
            break
    else:
        history.stop_reason = "max_epochs"
    history.stop_epoch = len(history.epochs)
    history.best_epoch = rule.best_epoch
    history.best_val_loss = rule.best
    model.load_state_dict(best_state)
    return model, history


def train(model, dataset, config: TrainConfig, evaluator=None, on_epoch=None):
    """Split ``dataset`` by ``config.fractions`` and train on the first part, validate on the second.

    ``dataset`` is a Dataset or an ``(X, y)`` pair. Returns (model, history).
    """
    X, y = (dataset.X, dataset.y) if hasattr(dataset, "X") else dataset
    if len(y) == 0:
        raise ValueError("dataset is empty")
    if np.shape(X)[-1] != model.config.input_size:
        raise ShapeError(f"images are {np.shape(X)[-1]} px but the model expects "
                         f"{model.config.input_size}")
    parts = split_dataset(np.asarray(y), config.fractions, config.seed)
    tr, va = parts[0], parts[1]
    X = np.asarray(X)
    y = np.asarray(y)
    return fit_arrays(model, X[tr], y[tr], X[va], y[va], config, evaluator, on_epoch)
