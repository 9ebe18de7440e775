"""Counter-keyed pseudo-random streams.

Every value is a pure function of ``(seed, n, k)``: step ``n`` of a stream can be
regenerated without replaying steps ``1..n-1``. The mixer is the SplitMix64
finalizer applied to a key built from the seed and the step counter.
"""

from __future__ import annotations

import numpy as np

_MASK = (1 << 64) - 1
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_SEED_SALT = np.uint64(0x243F6A8885A308D3)
_TO_UNIT = 2.0**-53


def _mix(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def normalize_seed(seed: int) -> int:
    """Reduce any Python int to the unsigned 64-bit range."""
    return int(seed) & _MASK


def step_keys(seed: int, steps: np.ndarray) -> np.ndarray:
    """One 64-bit key per step index."""
    s = np.asarray([normalize_seed(seed)], dtype=np.uint64)
    n = np.asarray(steps, dtype=np.uint64)
    with np.errstate(over="ignore"):
        base = _mix(s ^ _SEED_SALT)
        return _mix(base + n * _GOLDEN)


def uniforms(seed: int, steps: np.ndarray, count: int) -> np.ndarray:
    """Uniform doubles in [0, 1) with shape ``(len(steps), count)``.

    Entry ``[s, k]`` depends only on ``(seed, steps[s], k)``.
    """
    keys = step_keys(seed, steps)
    k = np.arange(1, count + 1, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = _mix(keys[:, None] + k[None, :] * _GOLDEN)
    return (z >> np.uint64(11)).astype(np.float64) * _TO_UNIT
