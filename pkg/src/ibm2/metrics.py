"""Episode reliability statistics and per-class accuracy analysis."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

Z95 = 1.96


@dataclass(frozen=True)
class EpisodeReport:
    n: int
    acc_mean: float
    std: float
    acc_1: float
    acc_10: float
    acc_100: float
    ci95: float

    def to_dict(self) -> dict:
        return asdict(self)


def _as_scaled_ints(values) -> tuple[list[int], int]:
    """Represent floats exactly as integers over a common power-of-two denominator."""
    ratios = [float(v).as_integer_ratio() for v in values]
    den = max(d for _, d in ratios)
    return [num * (den // d) for num, d in ratios], den


def worst_mean(values, j: int) -> float:
    """Mean of the ``j`` smallest values (``j`` clipped to the list length),
    correctly rounded."""
    ints, den = _as_scaled_ints(sorted(values))
    j = min(j, len(ints))
    return sum(ints[:j]) / (j * den)


def episode_metrics(acc_list: Sequence[float]) -> EpisodeReport:
    """Mean, sample std, worst-1/10/100 means and the 95% CI half-width.

    Means and variance are evaluated exactly and rounded once, so the
    worst-case chain ``acc_1 <= acc_10 <= acc_100 <= acc_mean`` always holds
    and the result does not depend on the input order.
    """
    acc = sorted(float(a) for a in acc_list)
    if not acc:
        raise ValueError("episode_metrics needs at least one accuracy")
    if acc[0] < 0 or acc[-1] > 1 or any(math.isnan(a) for a in acc):
        raise ValueError("accuracies must lie in [0, 1]")
    ints, den = _as_scaled_ints(acc)
    n = len(ints)
    total = sum(ints)
    if n > 1:
        sq = sum(v * v for v in ints)
        std = math.sqrt((n * sq - total * total) / (n * (n - 1) * den * den))
    else:
        std = 0.0
    return EpisodeReport(
        n=n,
        acc_mean=total / (n * den),
        std=std,
        acc_1=acc[0],
        acc_10=sum(ints[:min(10, n)]) / (min(10, n) * den),
        acc_100=sum(ints[:min(100, n)]) / (min(100, n) * den),
        ci95=Z95 * std / math.sqrt(n),
    )


def sigma_from_ci(ci95: float, n: int) -> float:
    """Standard deviation implied by a 95% confidence half-width over n episodes."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return ci95 * math.sqrt(n) / Z95


def ci_from_sigma(sigma: float, n: int) -> float:
    if n < 1:
        raise ValueError("n must be >= 1")
    return Z95 * sigma / math.sqrt(n)


def per_class_accuracy(predictions, labels, num_classes: int) -> np.ndarray:
    """Recall of each class; NaN for classes with no test samples."""
    pred = np.asarray(predictions)
    lab = np.asarray(labels)
    if pred.shape != lab.shape:
        raise ValueError(f"{pred.size} predictions for {lab.size} labels")
    total = np.bincount(lab, minlength=num_classes).astype(np.float64)
    hits = np.bincount(lab[pred == lab], minlength=num_classes).astype(np.float64)
    out = np.full(num_classes, np.nan)
    seen = total > 0
    out[seen] = hits[seen] / total[seen]
    return out


def bin_sizes(count: int, bins: int) -> list[int]:
    base, extra = divmod(count, bins)
    return [base + (1 if b < extra else 0) for b in range(bins)]


def gain_histogram(baseline_acc, method_acc, bins: int = 10) -> np.ndarray:
    """Mean per-class gain in ``bins`` contiguous groups of classes ordered
    by baseline accuracy (ascending, ties by class id).

    When C is not a multiple of ``bins`` the leftover classes go one per bin
    starting from the first.
    """
    base = np.asarray(baseline_acc, dtype=np.float64)
    meth = np.asarray(method_acc, dtype=np.float64)
    if base.shape != meth.shape or base.ndim != 1:
        raise ValueError("baseline and method accuracies must be equal-length vectors")
    if base.size < bins:
        raise ValueError(f"need at least {bins} classes, got {base.size}")
    order = np.argsort(base, kind="stable")
    gains = (meth - base)[order]
    out, start = [], 0
    for size in bin_sizes(base.size, bins):
        out.append(gains[start:start + size].mean())
        start += size
    return np.array(out)
