"""Counter-based random streams keyed by (seed, sample index).

Each Monte-Carlo sample owns an independent Philox stream, so a sample's draws
do not depend on how samples are chunked or scheduled.
"""
import numpy as np


def sample_generator(seed: int, index: int, stream: int = 0) -> np.random.Generator:
    """Generator for one sample; ``stream`` separates unrelated uses of a seed."""
    return np.random.Generator(np.random.Philox(key=[int(seed), (int(stream) << 40) | int(index)]))


def standard_normal_block(seed: int, start: int, stop: int, shape, stream: int = 0) -> np.ndarray:
    """Normal draws of ``shape`` for samples ``start..stop-1``, stacked on axis 0."""
    out = np.empty((stop - start,) + tuple(shape))
    for n in range(start, stop):
        out[n - start] = sample_generator(seed, n, stream).standard_normal(shape)
    return out


def chunks(n: int, size: int):
    """``(start, stop)`` ranges covering ``range(n)``."""
    for s in range(0, n, size):
        yield s, min(n, s + size)
