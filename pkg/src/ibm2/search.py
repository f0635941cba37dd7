"""Binary search for the largest noise radius whose virtual set the probe
still fits with training accuracy above a threshold."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

from .features import FeatureDataset
from .linear import LinearHead, TrainConfig, init_head, train
from .noise import NoiseBank, RangeVector, VirtualSetSpec
from .rng import mix64


@dataclass(frozen=True)
class SearchConfig:
    """``right_init = 0`` collapses the interval: no steps run and eps_hat is 0."""

    threshold: float = 0.9
    right_init: float = 10.0
    tol: float = 0.05
    replicas: int = 200
    epochs: int = 20
    lr: float = 1.0
    warm_start: bool = True
    resample_per_step: bool = False
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.threshold <= 1:
            raise ValueError("threshold must lie in (0, 1]")
        if self.tol <= 0:
            raise ValueError("tol must be > 0")
        if self.right_init != 0 and self.right_init <= self.tol:
            raise ValueError("right_init must exceed tol (or be 0 to disable the search)")
        if self.replicas < 1 or self.epochs < 1:
            raise ValueError("replicas and epochs must be >= 1")

    @property
    def collapsed(self) -> bool:
        return self.right_init == 0


@dataclass
class SearchStep:
    tested_eps: float
    accuracy: float
    left: float
    right: float
    eps: float  # midpoint of the updated interval


@dataclass
class SearchTrace:
    steps: list[SearchStep] = field(default_factory=list)
    eps_hat: float = 0.0
    threshold: float = 1.0

    def to_dict(self) -> dict:
        return {
            "eps_hat": self.eps_hat,
            "threshold": self.threshold,
            "steps": [asdict(s) for s in self.steps],
        }


def compute_threshold(t_init: float, baseline_train_acc: float) -> float:
    return min(t_init, baseline_train_acc)


def expected_steps(right_init: float, tol: float) -> int:
    """Iterations until ``right - left < tol`` when the width halves each step."""
    steps = max(0, math.ceil(math.log2(right_init / tol)))
    while right_init / 2 ** steps >= tol:
        steps += 1
    return steps


def train_and_eval(head: LinearHead, dataset: FeatureDataset, eps: float, range_vec: RangeVector,
                   replicas: int, config: TrainConfig, noise_seed: int = 0,
                   warm_start: bool = True, bank: NoiseBank | None = None) -> float:
    """Fit ``head`` on the virtual set at radius ``eps`` and return its
    accuracy on that same set.  ``head`` is modified only when ``warm_start``."""
    spec = VirtualSetSpec(dataset, eps, replicas, range_vec, noise_seed, bank)
    target = head if warm_start else head.copy()
    _, acc = train(spec, dataset.dim, dataset.num_classes, config, head=target)
    return acc


def search_epsilon(dataset: FeatureDataset, range_vec: RangeVector, config: SearchConfig,
                   train_config: TrainConfig, acc_up: float | None = None) -> SearchTrace:
    """Run the halving search.

    The threshold is ``config.threshold``, clamped to ``acc_up`` (the
    training accuracy of a probe fitted on the original set) when given.
    A step whose accuracy is strictly above the threshold moves the left
    end up; anything else (including equality) moves the right end down.
    """
    t = config.threshold if acc_up is None else compute_threshold(config.threshold, acc_up)
    trace = SearchTrace(threshold=t)
    if config.collapsed:
        return trace
    stage = train_config.replace(init_lr=config.lr, epochs=config.epochs)
    head = init_head(dataset.dim, dataset.num_classes, mix64(config.seed, 1))
    bank = None
    if not config.resample_per_step:
        bank = NoiseBank(config.seed, dataset.size, config.replicas, dataset.dim)
    left, right = 0.0, float(config.right_init)
    eps = right / 2
    step = 0
    while True:
        if config.resample_per_step:
            noise_seed = mix64(config.seed, 2, step)
            run_bank = None
        else:
            noise_seed, run_bank = config.seed, bank
        if not config.warm_start:
            head = init_head(dataset.dim, dataset.num_classes, mix64(config.seed, 1))
        acc = train_and_eval(head, dataset, eps, range_vec, config.replicas, stage,
                             noise_seed=noise_seed, warm_start=True, bank=run_bank)
        tested = eps
        if acc > t:
            left = eps
        else:
            right = eps
        eps = (left + right) / 2.0
        trace.steps.append(SearchStep(tested, acc, left, right, eps))
        step += 1
        if right - left < config.tol:
            break
    trace.eps_hat = eps
    return trace
