"""Named synthetic mixtures used by the CLI, the demos and the test-suite."""

from __future__ import annotations

import numpy as np

from .features import MixtureSpec
from .rng import generator


def _random_means(num_classes: int, d: int, scale: float, seed: int, offset: float = 0.0) -> np.ndarray:
    rng = generator(seed, 0xC1A55)
    means = scale * rng.standard_normal((num_classes, d))
    # shared component, like the common direction of self-supervised embeddings
    means += offset * np.ones(d) / np.sqrt(d)
    return means


def iso_easy(seed: int = 0) -> MixtureSpec:
    return MixtureSpec(2.0 * np.eye(4, 16), np.full(16, 0.3), shots=32, test_per_class=100, seed=seed)


def iso(seed: int = 0, shots: int = 20, test_per_class: int = 50) -> MixtureSpec:
    """d=64, C=20, isotropic within-class noise."""
    return MixtureSpec(
        _random_means(20, 64, 0.5, seed, offset=2.0), np.full(64, 1.0),
        shots=shots, test_per_class=test_per_class, seed=seed,
    )


def aniso(seed: int = 0, shots: int = 20, test_per_class: int = 50) -> MixtureSpec:
    """d=64, C=20, per-dimension std log-spaced over a 10x range."""
    std = np.geomspace(0.3, 3.0, 64)
    return MixtureSpec(
        _random_means(20, 64, 0.5, seed, offset=2.0) * std, std,
        shots=shots, test_per_class=test_per_class, seed=seed,
    )


def fsl_novel(seed: int = 0) -> MixtureSpec:
    """A 20-class novel split with 40 rows per class for episodic sampling."""
    return iso(seed, shots=40, test_per_class=0)


PRESETS = {
    "iso-easy": iso_easy,
    "iso": iso,
    "aniso": aniso,
    "fsl": fsl_novel,
}


def preset_spec(name: str, seed: int = 0) -> MixtureSpec:
    try:
        factory = PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
    return factory(seed)
