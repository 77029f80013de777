"""Counter-based random streams.

Draw ``i`` of a stream lives in block ``i // BLOCK`` and every block has its own
Philox generator keyed by ``(seed, stream, block)``.  Output therefore depends
only on the seed and the draw index, never on how blocks are scheduled.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterator, TypeVar

import numpy as np

BLOCK = 1 << 16

# stream identifiers, kept distinct so different uses of one seed never overlap
PRIOR_STREAM = 0
NOISE_STREAM = 1

T = TypeVar("T")


def block_generator(seed: int, stream: int, block: int) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(stream), int(block)))
    return np.random.Generator(np.random.Philox(ss))


def open_uniform(gen: np.random.Generator, shape) -> np.ndarray:
    """Uniforms on the open interval (0, 1) built from 53 random bits."""
    n = int(np.prod(shape))
    raw = gen.bit_generator.random_raw(n) >> np.uint64(11)
    return ((raw.astype(np.float64) + 0.5) * 2.0**-53).reshape(shape)


def unit_laplace(gen: np.random.Generator, shape) -> np.ndarray:
    """Inverse-CDF draws from the density exp(-|x|)/2."""
    v = open_uniform(gen, shape) - 0.5
    return -np.sign(v) * np.log1p(-2.0 * np.abs(v))


def block_ranges(n: int) -> list[tuple[int, int, int]]:
    """``(block, start, stop)`` triples covering draws ``0..n-1``."""
    return [(b, b * BLOCK, min(n, (b + 1) * BLOCK)) for b in range(-(-n // BLOCK))]


def worker_count() -> int:
    raw = os.environ.get("BESOVMAP_THREADS", "0").strip() or "0"
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"BESOVMAP_THREADS must be an integer, got {raw!r}") from None
    if n < 0:
        raise ValueError("BESOVMAP_THREADS must be >= 0")
    return n or (os.cpu_count() or 1)


def map_blocks(fn: Callable[[int, int, int], T], n: int) -> Iterator[T]:
    """Apply ``fn(block, start, stop)`` to every block, yielding in block order."""
    ranges = block_ranges(n)
    workers = min(worker_count(), len(ranges))
    if workers <= 1:
        for r in ranges:
            yield fn(*r)
        return
    with ThreadPoolExecutor(max_workers=workers) as pool:
        yield from pool.map(lambda r: fn(*r), ranges)
