"""Per-path random streams.

Path ``i`` of a run seeded with ``seed`` draws from a Philox generator keyed
by ``seed`` with the counter's high word set to ``i``.  Streams are therefore
independent of how many paths are simulated, of their order, and of any
chunking or parallel fan-out.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

SEED_MASK = (1 << 64) - 1


def path_stream(seed: int, path: int) -> np.random.Generator:
    bitgen = np.random.Philox(key=int(seed) & SEED_MASK, counter=[0, 0, 0, int(path)])
    return np.random.Generator(bitgen)


def sub_seed(seed: int, tag: int) -> int:
    """Derive a seed for an auxiliary stream family (e.g. a nested resample)."""
    ss = np.random.SeedSequence([int(seed) & SEED_MASK, int(tag)])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def draw_rows(seed: int, n_paths: int, width: int, draw: Callable[[np.random.Generator, int], np.ndarray],
              offset: int = 0) -> np.ndarray:
    """Stack ``draw(rng_i, width)`` for ``i in range(n_paths)`` into one array."""
    out = None
    for i in range(n_paths):
        row = draw(path_stream(seed, offset + i), width)
        if out is None:
            out = np.empty((n_paths,) + np.shape(row), dtype=np.asarray(row).dtype)
        out[i] = row
    if out is None:
        return np.empty((0, width))
    return out


def normals(seed: int, n_paths: int, width: int, offset: int = 0) -> np.ndarray:
    return draw_rows(seed, n_paths, width, lambda g, w: g.standard_normal(w), offset)


def uniforms(seed: int, n_paths: int, width: int, offset: int = 0) -> np.ndarray:
    return draw_rows(seed, n_paths, width, lambda g, w: g.random(w), offset)


def poisson_arrivals(rng: np.random.Generator, rate: float, horizon: float) -> np.ndarray:
    """Sorted arrival times of a homogeneous Poisson process on ``(0, horizon]``."""
    if rate <= 0:
        return np.zeros(0)
    n = rng.poisson(rate * horizon)
    return np.sort(rng.random(n) * horizon)
