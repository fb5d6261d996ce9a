"""Counter-based normal streams keyed by (master seed, path index).

Each path owns a Philox4x64 stream whose 128-bit key packs the master seed
and the path index; the counter advances with the step index.  A path's
noise therefore never depends on which worker simulates it or in which
batch.
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1


def path_key(seed: int, path_index: int) -> int:
    if path_index < 0:
        raise ValueError("path_index must be non-negative")
    return ((int(seed) & _MASK64) << 64) | (int(path_index) & _MASK64)


def path_generator(seed: int, path_index: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=path_key(seed, path_index)))


def path_normals(seed: int, path_index: int, n_steps: int, dim: int) -> np.ndarray:
    """Standard normals of shape (n_steps, dim); row j is step j."""
    return path_generator(seed, path_index).standard_normal((n_steps, dim))


def batch_normals(seed: int, start: int, stop: int, n_steps: int, dim: int) -> np.ndarray:
    out = np.empty((stop - start, n_steps, dim))
    for i, p in enumerate(range(start, stop)):
        out[i] = path_generator(seed, p).standard_normal((n_steps, dim))
    return out
