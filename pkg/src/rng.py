"""Counter-based random streams and a reproducible chunked parallel map.

Every stream is a Philox generator whose key is derived from
(seed, kind, index) only, so a chunk of particles or paths draws the same
numbers no matter which worker thread runs it or in what order.
"""

from collections.abc import Callable, Iterable
from typing import TypeVar

import numpy as np
from joblib import Parallel, delayed
from scipy.special import ndtri

import src.constants as c

T = TypeVar("T")


def stream(seed: int, kind: int, index: int) -> np.random.Generator:
    key = np.random.SeedSequence([seed, kind, index]).generate_state(2, np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def open_uniform(gen: np.random.Generator, size) -> np.ndarray:
    """Uniforms on the open interval (0, 1): midpoints of the 2^-53 lattice."""
    k = np.floor(gen.random(size) * 2.0**53)
    return (k + 0.5) / 2.0**53


def normal_icdf(gen: np.random.Generator, size) -> np.ndarray:
    return ndtri(open_uniform(gen, size))


def chunk_bounds(n: int, chunk_size: int = c.CHUNK_SIZE) -> list[tuple[int, int]]:
    return [(lo, min(lo + chunk_size, n)) for lo in range(0, n, chunk_size)]


def parallel_map(
    fn: Callable[..., T], items: Iterable, threads: int = 1
) -> list[T]:
    """Apply fn to every item, keeping the input order in the output."""
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(*item) for item in items]

    return Parallel(n_jobs=threads, prefer="threads")(
        delayed(fn)(*item) for item in items
    )
