"""Counter-based randomness: draw ``(seed, shot, slot)`` -> uniform without shared state.

Shot ``m`` always receives the same numbers no matter how shots are chunked or
which thread evaluates them.
"""

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)


def _splitmix64(z: np.ndarray) -> np.ndarray:
    z = z ^ (z >> np.uint64(30))
    z = z * _M1
    z = z ^ (z >> np.uint64(27))
    z = z * _M2
    return z ^ (z >> np.uint64(31))


def counter_uniforms(seed: int, start: int, stop: int, width: int) -> np.ndarray:
    """Uniforms in [0, 1) of shape ``(stop - start, width)``; row ``r`` belongs to shot ``start + r``."""
    with np.errstate(over="ignore"):
        key = _splitmix64(np.array([seed & 0xFFFFFFFFFFFFFFFF], dtype=np.uint64) + _GOLDEN)[0]
        shots = np.arange(start, stop, dtype=np.uint64)[:, None]
        slots = np.arange(width, dtype=np.uint64)[None, :]
        ctr = shots * np.uint64(width) + slots
        z = _splitmix64((ctr + np.uint64(1)) * _GOLDEN ^ key)
        z = _splitmix64(z + key)
    return (z >> np.uint64(11)).astype(np.float64) * (1.0 / 2**53)


def shot_generator(seed: int, shot: int) -> np.random.Generator:
    """Independent generator for one shot, keyed on ``(seed, shot)``."""
    return np.random.default_rng([seed & 0xFFFFFFFFFFFFFFFF, shot])
