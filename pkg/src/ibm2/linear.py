"""Linear softmax probe trained with Adam on label-smoothed cross-entropy."""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Protocol

import numpy as np

from .rng import generator

HEAD_MAGIC = b"IBM2HEAD"
HEAD_VERSION = 1
EVAL_CHUNK = 8192


class DataSource(Protocol):
    def __len__(self) -> int: ...

    def batch(self, index: np.ndarray) -> tuple[np.ndarray, np.ndarray]: ...


class TrainingDivergedError(RuntimeError):
    def __init__(self, step: int, lr: float):
        super().__init__(f"non-finite loss at step {step} (lr={lr!r})")
        self.step = step
        self.lr = lr


@dataclass
class LinearHead:
    W: np.ndarray  # C x d
    b: np.ndarray  # C

    @property
    def num_classes(self) -> int:
        return self.W.shape[0]

    @property
    def dim(self) -> int:
        return self.W.shape[1]

    def copy(self) -> "LinearHead":
        return LinearHead(self.W.copy(), self.b.copy())


@dataclass(frozen=True)
class TrainConfig:
    init_lr: float = 1.0
    batch_size: int = 256
    epochs: int = 100
    label_smoothing: float = 0.1
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if self.init_lr < 0:
            raise ValueError("init_lr must be >= 0")
        if self.batch_size < 1 or self.epochs < 1:
            raise ValueError("batch_size and epochs must be >= 1")
        if not 0 <= self.label_smoothing < 1:
            raise ValueError("label_smoothing must lie in [0, 1)")

    def replace(self, **changes) -> "TrainConfig":
        return replace(self, **changes)


def init_head(d: int, num_classes: int, seed: int) -> LinearHead:
    if d < 1 or num_classes < 1:
        raise ValueError("d and C must be >= 1")
    rng = generator(seed, 0x1417)
    return LinearHead(0.01 * rng.standard_normal((num_classes, d)), np.zeros(num_classes))


def logits(head: LinearHead, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != head.dim:
        raise ValueError(f"input has {x.shape[-1]} features, head expects {head.dim}")
    return x @ head.W.T + head.b


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def smoothed_targets(labels: np.ndarray, alpha: float, num_classes: int) -> np.ndarray:
    labels = np.asarray(labels)
    q = np.full(labels.shape + (num_classes,), alpha / num_classes)
    np.put_along_axis(q, labels[..., None], 1.0 - alpha + alpha / num_classes, axis=-1)
    return q


def smoothed_ce(z: np.ndarray, label, alpha: float, num_classes: int):
    """Cross-entropy against ``(1 - alpha) * onehot + alpha / C``.

    Works on a single logit vector or a batch (returns per-row losses).
    """
    z = np.asarray(z, dtype=np.float64)
    q = smoothed_targets(np.asarray(label), alpha, num_classes)
    loss = -(q * log_softmax(z)).sum(axis=-1)
    return float(loss) if loss.ndim == 0 else loss


def grad_smoothed_ce(head: LinearHead, x: np.ndarray, y: np.ndarray, alpha: float):
    """Mean loss gradient over a batch, returned as ``(dW, db)``."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    y = np.atleast_1d(np.asarray(y))
    if x.shape[0] == 0:
        raise ValueError("empty batch")
    diff = softmax(logits(head, x)) - smoothed_targets(y, alpha, head.num_classes)
    n = x.shape[0]
    return diff.T @ x / n, diff.sum(axis=0) / n


def cosine_lr(step: int, total_steps: int, init_lr: float) -> float:
    return init_lr * 0.5 * (1.0 + math.cos(math.pi * step / total_steps))


class Adam:
    def __init__(self, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {}
        self.v = {}

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray], lr: float) -> None:
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for k, p in params.items():
            g = grads[k]
            if k not in self.m:
                self.m[k] = np.zeros_like(p)
                self.v[k] = np.zeros_like(p)
            m, v = self.m[k], self.v[k]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p -= (lr / bc1) * m / (np.sqrt(v / bc2) + self.eps)


def train(source: DataSource, d: int, num_classes: int, config: TrainConfig,
          head: LinearHead | None = None) -> tuple[LinearHead, float]:
    """Mini-batch Adam with a cosine schedule; returns the head and its
    accuracy on the whole source.

    A given ``head`` is updated in place (warm start); otherwise a fresh
    one is drawn from ``config.seed``.  The learning rate at step ``t`` is
    ``cosine_lr(t, total, init_lr) * batch_size / 256``.
    """
    n = len(source)
    if n == 0:
        raise ValueError("cannot train on an empty data source")
    if head is None:
        head = init_head(d, num_classes, config.seed)
    elif head.W.shape != (num_classes, d):
        raise ValueError(f"head shape {head.W.shape} does not match ({num_classes}, {d})")
    bs = config.batch_size
    per_epoch = -(-n // bs)
    total = config.epochs * per_epoch
    scale = bs / 256
    alpha = config.label_smoothing
    opt = Adam(config.beta1, config.beta2, config.adam_eps)
    params = {"W": head.W, "b": head.b}
    rng = generator(config.seed, 0x5EED)
    off = alpha / num_classes
    on = 1.0 - alpha
    W, b = head.W, head.b
    step = 0
    for _ in range(config.epochs):
        order = rng.permutation(n)
        for start in range(0, n, bs):
            x, y = source.batch(order[start:start + bs])
            rows = np.arange(len(y))
            z = x @ W.T + b
            z -= z.max(axis=1, keepdims=True)
            e = np.exp(z)
            tot = e.sum(axis=1, keepdims=True)
            lr = cosine_lr(step, total, config.init_lr) * scale
            # a non-finite weight turns every row's normaliser into NaN
            if not math.isfinite(tot[0, 0]):
                raise TrainingDivergedError(step, lr)
            diff = e / tot
            diff -= off
            diff[rows, y] -= on
            diff /= len(y)
            opt.step(params, {"W": diff.T @ x, "b": diff.sum(axis=0)}, lr)
            step += 1
    return head, evaluate(head, source)


def predict(head: LinearHead, x: np.ndarray) -> np.ndarray:
    # argmax returns the first maximum, i.e. ties go to the lowest class id
    return logits(head, x).argmax(axis=-1)


def evaluate(head: LinearHead, source: DataSource) -> float:
    n = len(source)
    if n == 0:
        raise ValueError("cannot evaluate on an empty dataset")
    correct = 0
    for start in range(0, n, EVAL_CHUNK):
        x, y = source.batch(np.arange(start, min(start + EVAL_CHUNK, n)))
        correct += int((predict(head, x) == y).sum())
    return correct / n


def save_head(head: LinearHead, path) -> None:
    c, d = head.W.shape
    with open(path, "wb") as fh:
        fh.write(HEAD_MAGIC + struct.pack("<III", HEAD_VERSION, d, c))
        fh.write(np.ascontiguousarray(head.W, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(head.b, dtype="<f8").tobytes())


def load_head(path) -> LinearHead:
    data = Path(path).read_bytes()
    if data[:8] != HEAD_MAGIC:
        raise ValueError(f"{path}: bad magic")
    version, d, c = struct.unpack_from("<III", data, 8)
    if version != HEAD_VERSION:
        raise ValueError(f"{path}: head version {version}, expected {HEAD_VERSION}")
    need = 20 + 8 * (c * d + c)
    if len(data) != need:
        raise ValueError(f"{path}: expected {need} bytes, found {len(data)}")
    w = np.frombuffer(data, "<f8", c * d, 20).reshape(c, d).astype(np.float64)
    b = np.frombuffer(data, "<f8", c, 20 + 8 * c * d).astype(np.float64)
    return LinearHead(w, b)
