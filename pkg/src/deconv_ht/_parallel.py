import os
from concurrent.futures import ProcessPoolExecutor

ENV_WORKERS = "DECONV_HT_THREADS"


def worker_count(workers=None) -> int:
    """Resolve a worker cap; ``None`` reads the environment, 0 means all cores."""
    if workers is None:
        workers = int(os.environ.get(ENV_WORKERS, "1") or 1)
    if workers < 0:
        raise ValueError("worker count must be >= 0")
    if workers == 0:
        workers = os.cpu_count() or 1
    return workers


def ordered_map(fn, items, workers=None):
    """``list(map(fn, items))``, optionally across processes; order is preserved."""
    items = list(items)
    n = worker_count(workers)
    if n <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ProcessPoolExecutor(max_workers=min(n, len(items))) as pool:
        return list(pool.map(fn, items, chunksize=max(1, len(items) // (4 * n))))
