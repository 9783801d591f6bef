"""Thread-pool helper with a width taken from ``ARTBH_THREADS``."""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, List, TypeVar

T = TypeVar("T")
R = TypeVar("R")


def thread_count() -> int:
    try:
        n = int(os.environ.get("ARTBH_THREADS", "1"))
    except ValueError:
        n = 1
    return max(1, n)


def pmap(fn: Callable[[T], R], items: Iterable[T]) -> List[R]:
    """Order-preserving map; results do not depend on the pool width."""
    items = list(items)
    n = thread_count()
    if n == 1 or len(items) < 2:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=n) as ex:
        return list(ex.map(fn, items))
