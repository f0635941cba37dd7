"""Counter-based random streams.

Everything random in the package is keyed by integers rather than by a
mutable generator state, so any piece of work (an episode, a virtual
example, a shuffle) can be regenerated in isolation.  The primitive is the
SplitMix64 finalizer; ``mix64`` folds several words into one 64-bit key and
``normal_block`` expands keys into standard-normal vectors.
"""

from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1
GAMMA = 0x9E3779B97F4A7C15
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB

_TWO_PI = 2.0 * np.pi
_INV_2_32 = 1.0 / (1 << 32)


def _fmix(z: int) -> int:
    z &= MASK64
    z = ((z ^ (z >> 30)) * _M1) & MASK64
    z = ((z ^ (z >> 27)) * _M2) & MASK64
    return z ^ (z >> 31)


def mix64(*words: int) -> int:
    """Fold any number of non-negative integers into one 64-bit key.

    ``mix64(master_seed, episode_index)`` is the public rule for deriving
    per-episode seeds.  The fold is ``state = fmix((state ^ w) + GAMMA)``
    starting from ``state = 0``, with ``fmix`` the SplitMix64 finalizer.
    """
    state = 0
    for w in words:
        if w < 0:
            raise ValueError(f"mix64 words must be non-negative, got {w}")
        state = _fmix(((state ^ (w & MASK64)) + GAMMA) & MASK64)
    return state


def _fmix_array(z: np.ndarray) -> np.ndarray:
    z = z ^ (z >> np.uint64(30))
    z = z * np.uint64(_M1)
    z = z ^ (z >> np.uint64(27))
    z = z * np.uint64(_M2)
    return z ^ (z >> np.uint64(31))


def mix64_array(*words) -> np.ndarray:
    """Vectorised ``mix64``; arguments broadcast, result is uint64."""
    with np.errstate(over="ignore"):
        state = np.zeros((), dtype=np.uint64)
        for w in words:
            w = np.asarray(w)
            if w.dtype.kind == "i" and np.any(w < 0):
                raise ValueError("mix64 words must be non-negative")
            w = w.astype(np.uint64) if w.dtype.kind in "iub" else np.uint64(int(w) & MASK64)
            state = _fmix_array((state ^ w) + np.uint64(GAMMA))
    return state


def splitmix_words(keys: np.ndarray, count: int) -> np.ndarray:
    """First ``count`` SplitMix64 outputs for each key, shape ``keys.shape + (count,)``.

    Output ``n`` (0-based) of the stream seeded with ``key`` is
    ``fmix(key + (n + 1) * GAMMA)``.
    """
    keys = np.asarray(keys, dtype=np.uint64)
    steps = np.arange(1, count + 1, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = keys[..., None] + steps * np.uint64(GAMMA)
        return _fmix_array(z)


def normal_block(keys: np.ndarray, d: int) -> np.ndarray:
    """Standard-normal vectors of length ``d``, one per key (Box-Muller).

    Stream word ``m`` supplies coordinates ``2m`` and ``2m+1``: its high
    32 bits give the radius uniform in (0, 1], its low 32 bits the angle.
    A prefix of the vector therefore does not depend on ``d``.
    """
    keys = np.asarray(keys, dtype=np.uint64)
    pairs = (d + 1) // 2
    words = splitmix_words(keys, pairs)
    u1 = ((words >> np.uint64(32)).astype(np.float64) + 1.0) * _INV_2_32
    u2 = (words & np.uint64(0xFFFFFFFF)).astype(np.float64) * _INV_2_32
    radius = np.sqrt(-2.0 * np.log(u1))
    angle = _TWO_PI * u2
    out = np.stack((radius * np.cos(angle), radius * np.sin(angle)), axis=-1)
    out = out.reshape(keys.shape + (2 * pairs,))
    return out[..., :d] if d % 2 else out


def generator(*words: int) -> np.random.Generator:
    """A numpy Generator seeded from ``mix64(*words)``.

    Used for the sequential draws (shuffles, subset sampling, weight init)
    where a keyed stream per call is all that is needed.
    """
    return np.random.Generator(np.random.PCG64(mix64(*words)))
