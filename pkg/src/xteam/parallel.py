"""Worker-count context and order-preserving parallel map.

Results never depend on the worker count: work is split into chunks whose
boundaries are fixed by the problem size alone, and outputs are gathered in
chunk order.
"""

from __future__ import annotations

import contextlib
import contextvars
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, Iterator, TypeVar

import numpy as np

T = TypeVar("T")
R = TypeVar("R")

_THREADS: contextvars.ContextVar[int] = contextvars.ContextVar("xteam_threads", default=1)


def get_threads() -> int:
    return _THREADS.get()


@contextlib.contextmanager
def using_threads(n: int) -> Iterator[None]:
    if n < 1:
        raise ValueError(f"thread count must be positive, got {n}")
    token = _THREADS.set(int(n))
    try:
        yield
    finally:
        _THREADS.reset(token)


def ordered_map(fn: Callable[[T], R], items: Iterable[T]) -> list[R]:
    items = list(items)
    n = get_threads()
    if n == 1 or len(items) <= 1:
        return [fn(item) for item in items]
    ctx = contextvars.copy_context()

    def serial(item):
        # nested maps inside a worker run serially
        _THREADS.set(1)
        return fn(item)

    with ThreadPoolExecutor(max_workers=n) as pool:
        futures = [pool.submit(ctx.copy().run, serial, item) for item in items]
        return [f.result() for f in futures]


def chunk_ranges(total: int, size: int) -> list[np.ndarray]:
    size = max(1, int(size))
    return [np.arange(lo, min(lo + size, total), dtype=np.int64) for lo in range(0, total, size)]


def ordered_sum(a: np.ndarray, axis: int = -1) -> np.ndarray:
    """Sum along ``axis`` with a summation order fixed by that axis' length only."""
    a = np.ascontiguousarray(np.moveaxis(np.asarray(a, dtype=float), axis, -1))
    return np.add.reduce(a, axis=-1)
