"""Seeded RNG derivation and a small ordered worker pool."""

from __future__ import annotations

import os
import zlib
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, Sequence

import numpy as np


def derived_rng(seed: int, *tags: str | int) -> np.random.Generator:
    """Build a Generator from a master seed plus purpose tags.

    Streams for (seed, tags...) are independent and do not depend on the
    order in which they are created, so parallel work stays reproducible.
    String tags are hashed with crc32 to keep the entropy pool integral.
    """
    entropy = [int(seed) & 0xFFFFFFFF]
    for tag in tags:
        if isinstance(tag, str):
            entropy.append(zlib.crc32(tag.encode("utf-8")))
        else:
            entropy.append(int(tag) & 0xFFFFFFFFFFFFFFFF)
    return np.random.default_rng(np.random.SeedSequence(entropy))


def available_threads() -> int:
    return os.cpu_count() or 1


def parallel_map(fn: Callable, items: Sequence | Iterable, threads: int | None = None) -> list:
    """Map ``fn`` over ``items`` preserving order.

    ``threads=None`` uses the available parallelism; ``threads<=1`` runs
    serially. Results are identical regardless of the thread count as long
    as ``fn`` is a pure function of its argument.
    """
    items = list(items)
    if threads is None:
        threads = available_threads()
    if threads <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))
