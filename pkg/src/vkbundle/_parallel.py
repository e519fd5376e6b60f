"""Order-preserving map over samples, capped by ``VK_THREADS``."""

import os
from concurrent.futures import ThreadPoolExecutor


def n_threads() -> int:
    try:
        return max(1, int(os.environ.get("VK_THREADS", "1")))
    except ValueError:
        return 1


def pmap(fn, items):
    items = list(items)
    workers = n_threads()
    if workers == 1 or len(items) < 2:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))
