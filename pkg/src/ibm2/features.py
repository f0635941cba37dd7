"""Feature datasets: validation, binary/CSV I/O, L2 normalisation and the
synthetic Gaussian-mixture generator.

Binary layout (little-endian)::

    b"IBM2FEAT"  u32 version=1  u32 flags (bit 0 = normalized)
    u32 d  u32 C  u64 M
    M x (u32 label, d x float32)
    optional: u32 count, count x (u32 len, utf-8 bytes)
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .rng import generator

MAGIC = b"IBM2FEAT"
VERSION = 1
FLAG_NORMALIZED = 1
_HEADER = struct.Struct("<8sIIIIQ")


class FeatureFormatError(ValueError):
    """Base class for malformed feature files and CSV dumps."""


class BadMagicError(FeatureFormatError):
    pass


class VersionMismatchError(FeatureFormatError):
    pass


class TruncatedPayloadError(FeatureFormatError):
    pass


class LabelOutOfRangeError(FeatureFormatError):
    pass


class RaggedRowsError(FeatureFormatError):
    pass


class NonNumericCellError(FeatureFormatError):
    pass


class NegativeLabelError(FeatureFormatError):
    pass


class ZeroNormRowError(ValueError):
    def __init__(self, row: int):
        super().__init__(f"row {row} has zero norm and cannot be L2-normalized")
        self.row = row


def _frozen(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class FeatureDataset:
    """M x d feature matrix with integer labels in [0, num_classes).

    Arrays are copied to float64/int64 and made read-only on construction.
    """

    features: np.ndarray
    labels: np.ndarray
    num_classes: int
    class_names: tuple[str, ...] | None = None
    normalized: bool = False

    def __post_init__(self):
        x = np.array(self.features, dtype=np.float64)
        y = np.array(self.labels, dtype=np.int64)
        if x.ndim != 2:
            raise ValueError(f"features must be a 2-D matrix, got shape {x.shape}")
        m, d = x.shape
        if m < 1 or d < 1:
            raise ValueError(f"dataset needs M >= 1 and d >= 1, got {x.shape}")
        if y.shape != (m,):
            raise ValueError(f"expected {m} labels, got shape {y.shape}")
        c = int(self.num_classes)
        if c < 1:
            raise ValueError("num_classes must be >= 1")
        if y.min() < 0 or y.max() >= c:
            bad = int(y[(y < 0) | (y >= c)][0])
            raise LabelOutOfRangeError(f"label {bad} outside [0, {c})")
        names = self.class_names
        if names is not None:
            names = tuple(str(n) for n in names)
            if len(names) != c:
                raise ValueError(f"{len(names)} class names for {c} classes")
        if self.normalized:
            norms = np.linalg.norm(x, axis=1)
            if np.any(np.abs(norms - 1.0) > 1e-6):
                raise ValueError("dataset flagged normalized but rows are not unit norm")
        object.__setattr__(self, "features", _frozen(x))
        object.__setattr__(self, "labels", _frozen(y))
        object.__setattr__(self, "num_classes", c)
        object.__setattr__(self, "class_names", names)
        object.__setattr__(self, "normalized", bool(self.normalized))

    @property
    def size(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def __len__(self) -> int:
        return self.size

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.num_classes)

    def subset(self, rows: Sequence[int]) -> "FeatureDataset":
        rows = np.asarray(rows, dtype=np.int64)
        return FeatureDataset(
            self.features[rows], self.labels[rows], self.num_classes,
            self.class_names, self.normalized,
        )

    # data-source protocol used by the trainer
    def batch(self, index: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return self.features[index], self.labels[index]

    def equals(self, other: "FeatureDataset") -> bool:
        return (
            self.num_classes == other.num_classes
            and self.class_names == other.class_names
            and self.normalized == other.normalized
            and np.array_equal(self.labels, other.labels)
            and np.array_equal(self.features, other.features)
        )


def write_feature_file(dataset: FeatureDataset, path) -> None:
    m, d = dataset.features.shape
    flags = FLAG_NORMALIZED if dataset.normalized else 0
    records = np.empty(m, dtype=[("label", "<u4"), ("x", "<f4", (d,))])
    records["label"] = dataset.labels
    records["x"] = dataset.features
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, flags, d, dataset.num_classes, m))
        fh.write(records.tobytes())
        if dataset.class_names is not None:
            fh.write(struct.pack("<I", len(dataset.class_names)))
            for name in dataset.class_names:
                raw = name.encode("utf-8")
                fh.write(struct.pack("<I", len(raw)))
                fh.write(raw)


def load_feature_file(path) -> FeatureDataset:
    data = Path(path).read_bytes()
    if data[:8] != MAGIC:
        raise BadMagicError(f"{path}: bad magic {data[:8]!r}")
    if len(data) < _HEADER.size:
        raise TruncatedPayloadError(f"{path}: truncated payload (header)")
    _, version, flags, d, c, m = _HEADER.unpack_from(data)
    if version != VERSION:
        raise VersionMismatchError(f"{path}: version {version}, expected {VERSION}")
    rec = np.dtype([("label", "<u4"), ("x", "<f4", (d,))])
    end = _HEADER.size + m * rec.itemsize
    if len(data) < end:
        raise TruncatedPayloadError(f"{path}: truncated payload ({len(data)} of {end} bytes)")
    records = np.frombuffer(data, dtype=rec, count=m, offset=_HEADER.size)
    labels = records["label"].astype(np.int64)
    if m and labels.max() >= c:
        raise LabelOutOfRangeError(f"{path}: label {int(labels.max())} >= C={c}")
    names = None
    if len(data) > end:
        names = []
        try:
            (count,) = struct.unpack_from("<I", data, end)
            pos = end + 4
            for _ in range(count):
                (n,) = struct.unpack_from("<I", data, pos)
                pos += 4
                if pos + n > len(data):
                    raise struct.error("name overruns file")
                names.append(data[pos:pos + n].decode("utf-8"))
                pos += n
        except struct.error as exc:
            raise TruncatedPayloadError(f"{path}: truncated payload (class names)") from exc
    return FeatureDataset(
        records["x"].astype(np.float64), labels, c, names, bool(flags & FLAG_NORMALIZED)
    )


def import_csv(path) -> FeatureDataset:
    """Read ``label,f1,...,fd`` rows (no header); C = max label + 1."""
    labels, rows = [], []
    width = None
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not cell.strip() for cell in row):
                continue
            if width is None:
                width = len(row)
                if width < 2:
                    raise RaggedRowsError(f"line {lineno}: need a label and at least one feature")
            elif len(row) != width:
                raise RaggedRowsError(f"ragged rows: line {lineno} has {len(row)} cells, expected {width}")
            try:
                label = float(row[0])
                values = [float(c) for c in row[1:]]
            except ValueError as exc:
                raise NonNumericCellError(f"line {lineno}: {exc}") from exc
            if label != int(label):
                raise NonNumericCellError(f"line {lineno}: label {row[0]!r} is not an integer")
            if label < 0:
                raise NegativeLabelError(f"line {lineno}: negative label {row[0]}")
            labels.append(int(label))
            rows.append(values)
    if not rows:
        raise FeatureFormatError(f"{path}: no rows")
    return FeatureDataset(np.array(rows), np.array(labels), max(labels) + 1)


def export_csv(dataset: FeatureDataset, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        for label, row in zip(dataset.labels, dataset.features):
            w.writerow([int(label)] + [repr(float(v)) for v in row])


def l2_normalize(dataset: FeatureDataset) -> FeatureDataset:
    x = dataset.features
    norms = np.linalg.norm(x, axis=1)
    zero = np.flatnonzero(norms == 0)
    if zero.size:
        raise ZeroNormRowError(int(zero[0]))
    if dataset.normalized:
        return dataset
    return FeatureDataset(
        x / norms[:, None], dataset.labels, dataset.num_classes,
        dataset.class_names, normalized=True,
    )


@dataclass(frozen=True)
class MixtureSpec:
    """Gaussian mixture: class c ~ means[c] + std * N(0, I)."""

    means: np.ndarray  # C x d
    std: np.ndarray  # d
    shots: int
    test_per_class: int
    seed: int = 0
    class_names: tuple[str, ...] | None = field(default=None)

    def __post_init__(self):
        means = np.asarray(self.means, dtype=np.float64)
        std = np.broadcast_to(np.asarray(self.std, dtype=np.float64), (means.shape[1],)).copy()
        if means.ndim != 2:
            raise ValueError("means must be C x d")
        if np.any(std < 0):
            raise ValueError("standard deviations must be >= 0")
        if self.shots < 1:
            raise ValueError("shots must be >= 1")
        if self.test_per_class < 0:
            raise ValueError("test_per_class must be >= 0")
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "std", std)

    @property
    def num_classes(self) -> int:
        return self.means.shape[0]

    @property
    def dim(self) -> int:
        return self.means.shape[1]


def _draw(spec: MixtureSpec, rng: np.random.Generator, per_class: int) -> FeatureDataset:
    c, d = spec.means.shape
    labels = np.repeat(np.arange(c), per_class)
    noise = rng.standard_normal((c * per_class, d))
    x = spec.means[labels] + spec.std * noise
    return FeatureDataset(x, labels, c, spec.class_names)


def synth_mixture(spec: MixtureSpec) -> tuple[FeatureDataset, FeatureDataset | None]:
    """Draw a train split with exactly ``shots`` rows per class and a test split.

    Returns ``None`` for the test split when ``test_per_class == 0``.
    """
    train = _draw(spec, generator(spec.seed, 0), spec.shots)
    test = None
    if spec.test_per_class:
        test = _draw(spec, generator(spec.seed, 1), spec.test_per_class)
    return train, test


def nearest_mean_predict(means: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Index of the closest mean (Euclidean) for each row; ties to the lowest index."""
    d2 = ((x[:, None, :] - means[None, :, :]) ** 2).sum(axis=2)
    return d2.argmin(axis=1)
