"""Six-class CNN fault detector over 28x28 portraits."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .dataset import BehaviorClass
from .errors import DataError, NumericError
from .metrics import ConfusionMatrix
from .nn import (
    Conv,
    Dense,
    Flatten,
    MaxPool,
    Mode,
    NetworkSpec,
    ParamSet,
    ReLU,
    Sigmoid,
    adam_init,
    adam_step,
    backward,
    forward,
    init_params,
    loss_bce,
)
from .portrait import SIDE, Portrait

log = logging.getLogger(__name__)

N_CLASSES = len(BehaviorClass)


@dataclass(frozen=True)
class ClassifierConfig:
    epochs: int = 100
    learning_rate: float = 1e-3
    batch_size: int = 32
    train_per_class: int = 300
    val_per_class: int = 700
    seed: int = 0
    widths: tuple[int, int, int] = (16, 32, 64)
    beta1: float = 0.9
    beta2: float = 0.999

    def __post_init__(self):
        if self.epochs < 0:
            raise ValueError("epochs must be nonnegative")
        for name in ("batch_size", "train_per_class", "val_per_class"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        object.__setattr__(self, "widths", tuple(self.widths))

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class Prediction:
    label: BehaviorClass
    scores: np.ndarray


@dataclass
class TrainHistory:
    rows: list[tuple[int, float, float, float]] = field(default_factory=list)  # epoch, loss, train_acc, val_acc

    def to_csv(self) -> str:
        return "epoch,train_acc,val_acc\n" + "".join(f"{e},{a!r},{v!r}\n" for e, _, a, v in self.rows)

    @property
    def losses(self) -> list[float]:
        return [r[1] for r in self.rows]


def cnn_spec(widths: Sequence[int] = (16, 32, 64)) -> NetworkSpec:
    w1, w2, w3 = widths
    return NetworkSpec([
        Conv(1, w1), ReLU(), MaxPool(2),      # 28 -> 14
        Conv(w1, w2), ReLU(), MaxPool(2),     # 14 -> 7
        Conv(w2, w3), ReLU(),
        Flatten(), Dense(7 * 7 * w3, N_CLASSES), Sigmoid(),
    ], (SIDE, SIDE, 1))


def build_cnn(seed: int, widths: Sequence[int] = (16, 32, 64)) -> tuple[NetworkSpec, ParamSet]:
    net = cnn_spec(widths)
    return net, init_params(net, np.random.default_rng([seed, 2]))


def to_input(portraits: Sequence[Portrait]) -> np.ndarray:
    """Stack portraits as (N, 28, 28, 1) floats in [0, 1]."""
    if not portraits:
        return np.zeros((0, SIDE, SIDE, 1))
    return np.stack([p.pixels for p in portraits]).astype(np.float64)[..., None] / 255.0


def one_hot(labels: Sequence[int]) -> np.ndarray:
    out = np.zeros((len(labels), N_CLASSES))
    out[np.arange(len(labels)), np.asarray(labels, dtype=np.int64)] = 1.0
    return out


def split_per_class(data: Sequence[Portrait], cfg: ClassifierConfig) -> tuple[list[Portrait], list[Portrait]]:
    """Seeded per-class draw of disjoint train and validation subsets."""
    need = cfg.train_per_class + cfg.val_per_class
    train, val = [], []
    for cls in BehaviorClass:
        members = [p for p in data if p.label is cls]
        if len(members) < need:
            raise DataError(f"class {cls.name} has {len(members)} portraits, needs {need} "
                            f"({cfg.train_per_class} train + {cfg.val_per_class} validation)")
        order = np.random.default_rng([cfg.seed, 0, int(cls)]).permutation(len(members))
        train += [members[i] for i in order[:cfg.train_per_class]]
        val += [members[i] for i in order[cfg.train_per_class:need]]
    return train, val


def scores(net: NetworkSpec, params: ParamSet, x: np.ndarray, chunk: int = 512) -> np.ndarray:
    if len(x) == 0:
        return np.zeros((0, N_CLASSES))
    return np.concatenate([forward(net, params, x[i:i + chunk], Mode.Infer)[0] for i in range(0, len(x), chunk)])


def _accuracy(net, params, x, y) -> float:
    return float(np.mean(np.argmax(scores(net, params, x), axis=1) == y)) if len(y) else 0.0


def train_cnn(net: NetworkSpec, params: ParamSet, data: Sequence[Portrait],
              cfg: ClassifierConfig) -> tuple[ParamSet, TrainHistory]:
    """Adam on one-hot BCE; train/val accuracy recorded after every epoch."""
    train, val = split_per_class(data, cfg)
    x_tr, y_tr = to_input(train), np.array([int(p.label) for p in train])
    x_va, y_va = to_input(val), np.array([int(p.label) for p in val])
    t_tr = one_hot(y_tr)
    opt = adam_init(params, [l.trainable for l in net.layers], lr=cfg.learning_rate,
                    beta1=cfg.beta1, beta2=cfg.beta2)
    history = TrainHistory()
    for epoch in range(1, cfg.epochs + 1):
        order = np.random.default_rng([cfg.seed, 1, epoch]).permutation(len(x_tr))
        total, seen = 0.0, 0
        for start in range(0, len(order), cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            out, tape = forward(net, params, x_tr[idx], Mode.Train)
            loss, grad = loss_bce(out, t_tr[idx])
            if not np.isfinite(loss):
                raise NumericError(f"classifier loss is {loss} at epoch {epoch}")
            grads, _ = backward(net, params, tape, grad)
            params, opt = adam_step(params, grads, opt)
            total += loss * len(idx)
            seen += len(idx)
        row = (epoch, total / seen, _accuracy(net, params, x_tr, y_tr), _accuracy(net, params, x_va, y_va))
        history.rows.append(row)
        log.info("epoch %d: loss %.4f train_acc %.4f val_acc %.4f", *row)
    return params, history


def _decide(s: np.ndarray) -> BehaviorClass:
    # np.argmax returns the first maximum: lowest index wins ties
    return BehaviorClass(int(np.argmax(s)))


def predict(net: NetworkSpec, params: ParamSet, portrait: Portrait) -> Prediction:
    s = scores(net, params, to_input([portrait]))[0]
    return Prediction(_decide(s), s)


def predict_batch(net: NetworkSpec, params: ParamSet, portraits: Sequence[Portrait]) -> list[Prediction]:
    return [Prediction(_decide(s), s) for s in scores(net, params, to_input(portraits))]


def evaluate(net: NetworkSpec, params: ParamSet, data: Sequence[Portrait]) -> ConfusionMatrix:
    if not data:
        raise DataError("cannot evaluate on an empty portrait list")
    preds = [int(p.label) for p in predict_batch(net, params, data)]
    return ConfusionMatrix.from_predictions(preds, [int(p.label) for p in data])
