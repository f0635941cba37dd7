"""Virtual examples on per-instance hyperspheres / ellipsoids.

A virtual example is ``z_i + eps * (s * delta_ir)`` with label ``y_i``.
The base noise ``delta_ir`` is keyed by ``(seed, i, r)`` only, so sets
built at different radii share their noise directions and differ by a pure
radial rescaling.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from .features import FeatureDataset
from .rng import generator, mix64_array, normal_block

SPHERICAL = "spherical"
ELLIPSOIDAL = "ellipsoidal"
SAMPLING_MODES = (SPHERICAL, ELLIPSOIDAL)

# cache the whole base-noise tensor when it has at most this many floats
DEFAULT_CACHE_LIMIT = 1 << 24


@dataclass(frozen=True, eq=False)
class RangeVector:
    s: np.ndarray
    mode: str
    fallback: bool = False

    def __post_init__(self):
        s = np.array(self.s, dtype=np.float64)
        if s.ndim != 1 or np.any(s < 0) or not np.all(np.isfinite(s)):
            raise ValueError("range vector must be a finite, non-negative 1-D array")
        if self.mode not in SAMPLING_MODES:
            raise ValueError(f"unknown sampling mode {self.mode!r}")
        if self.mode == SPHERICAL and not np.all(s == 1.0):
            raise ValueError("spherical range vector must be all ones")
        s.flags.writeable = False
        object.__setattr__(self, "s", s)

    @property
    def dim(self) -> int:
        return self.s.shape[0]


def compute_range_vector(dataset: FeatureDataset, mode: str = ELLIPSOIDAL) -> RangeVector:
    """Per-dimension sample standard deviation over all rows, labels ignored.

    Falls back to all ones (``fallback=True``) when it cannot be estimated:
    a single row, or every column constant.
    """
    if mode not in SAMPLING_MODES:
        raise ValueError(f"unknown sampling mode {mode!r}")
    ones = np.ones(dataset.dim)
    if mode == SPHERICAL:
        return RangeVector(ones, SPHERICAL)
    if dataset.size < 2:
        return RangeVector(ones, ELLIPSOIDAL, fallback=True)
    s = dataset.features.std(axis=0, ddof=1)
    if not np.any(s > 0):
        return RangeVector(ones, ELLIPSOIDAL, fallback=True)
    return RangeVector(s, ELLIPSOIDAL)


def noise_vector(seed: int, i: int, r: int, d: int) -> np.ndarray:
    """Standard-normal base noise for instance ``i``, replica ``r``."""
    return normal_block(mix64_array(seed, i, r), d)


def noise_rows(seed: int, instance: np.ndarray, replica: np.ndarray, d: int) -> np.ndarray:
    return normal_block(mix64_array(seed, instance, replica), d)


class NoiseBank:
    """Base noise for every (i, r) of an M x R grid.

    The tensor is generated once and cached when it has at most
    ``cache_limit`` entries; otherwise rows are regenerated from the counter
    stream on every request.  Either way ``take`` returns identical values.
    """

    def __init__(self, seed: int, size: int, replicas: int, dim: int,
                 cache_limit: int = DEFAULT_CACHE_LIMIT):
        self.seed = seed
        self.size = size
        self.replicas = replicas
        self.dim = dim
        self._cache = None
        if size * replicas * dim <= cache_limit:
            flat = np.arange(size * replicas)
            self._cache = self._generate(flat)

    def _generate(self, flat: np.ndarray) -> np.ndarray:
        return noise_rows(self.seed, flat // self.replicas, flat % self.replicas, self.dim)

    @property
    def cached(self) -> bool:
        return self._cache is not None

    def take(self, flat: np.ndarray) -> np.ndarray:
        if self._cache is not None:
            return self._cache.take(flat, axis=0)
        return self._generate(np.asarray(flat, dtype=np.int64))


@dataclass(frozen=True, eq=False)
class VirtualSetSpec:
    """Lazy description of the M*R virtual examples around ``parent``.

    Flat index ``n`` maps to instance ``n // R`` and replica ``n % R``.
    """

    parent: FeatureDataset
    eps: float
    replicas: int
    range: RangeVector
    seed: int
    bank: NoiseBank | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.eps < 0 or not np.isfinite(self.eps):
            raise ValueError(f"eps must be finite and >= 0, got {self.eps}")
        if self.replicas < 1:
            raise ValueError("R must be >= 1")
        if self.range.dim != self.parent.dim:
            raise ValueError(f"range vector has {self.range.dim} dims, features have {self.parent.dim}")
        b = self.bank
        if b is not None and (b.seed, b.size, b.replicas, b.dim) != (
            self.seed, self.parent.size, self.replicas, self.parent.dim
        ):
            raise ValueError("noise bank does not match this virtual set")

    @property
    def num_classes(self) -> int:
        return self.parent.num_classes

    @property
    def dim(self) -> int:
        return self.parent.dim

    def __len__(self) -> int:
        return self.parent.size * self.replicas

    def with_eps(self, eps: float) -> "VirtualSetSpec":
        return VirtualSetSpec(self.parent, eps, self.replicas, self.range, self.seed, self.bank)

    def noise(self, flat: np.ndarray) -> np.ndarray:
        flat = np.asarray(flat, dtype=np.int64)
        if self.bank is not None:
            return self.bank.take(flat)
        return noise_rows(self.seed, flat // self.replicas, flat % self.replicas, self.dim)

    def batch(self, flat: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        flat = np.asarray(flat, dtype=np.int64)
        parent = flat // self.replicas
        x = self.parent.features[parent]
        y = self.parent.labels[parent]
        if self.eps == 0:
            return x.copy(), y
        delta = self.noise(flat)
        delta *= self.eps * self.range.s
        delta += x
        return delta, y

    def __iter__(self) -> Iterator[tuple[np.ndarray, int]]:
        for start in range(0, len(self), 4096):
            x, y = self.batch(np.arange(start, min(start + 4096, len(self))))
            yield from zip(x, y.tolist())

    def materialize(self) -> FeatureDataset:
        x, y = self.batch(np.arange(len(self)))
        return FeatureDataset(x, y, self.num_classes, self.parent.class_names)


def virtual_example(spec: VirtualSetSpec, i: int, r: int) -> tuple[np.ndarray, int]:
    if not (0 <= i < spec.parent.size and 0 <= r < spec.replicas):
        raise IndexError(f"virtual index ({i}, {r}) outside {spec.parent.size} x {spec.replicas}")
    x, y = spec.batch(np.array([i * spec.replicas + r]))
    return x[0], int(y[0])


def annulus_stats(spec: VirtualSetSpec, sample_count: int, seed: int = 0) -> dict:
    """Mean and std of ``||virtual - parent||`` over sampled (i, r) pairs.

    Pairs are drawn uniformly, without replacement when ``sample_count``
    does not exceed the set size.
    """
    if sample_count < 1:
        raise ValueError("sample_count must be >= 1")
    n = len(spec)
    rng = generator(seed, spec.seed)
    flat = rng.choice(n, size=sample_count, replace=sample_count > n)
    x, _ = spec.batch(flat)
    radii = np.linalg.norm(x - spec.parent.features[flat // spec.replicas], axis=1)
    return {
        "mean_radius": float(radii.mean()),
        "std_radius": float(radii.std()),
        "mean_sq_radius": float((radii ** 2).mean()),
        "radii": radii,
    }
