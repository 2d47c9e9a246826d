"""Replica-level process parallelism with order-preserving results.

Every replica owns a derived random stream, so results do not depend on
how replicas are spread over workers.
"""

from concurrent.futures import ProcessPoolExecutor
import os


def default_threads():
    try:
        return max(1, len(os.sched_getaffinity(0)))
    except AttributeError:
        return max(1, os.cpu_count() or 1)


def replica_map(fn, items, threads=1):
    """``[fn(x) for x in items]``, spread over ``threads`` processes."""
    items = list(items)
    if threads is None:
        threads = default_threads()
    if threads <= 1 or len(items) < 2:
        return [fn(x) for x in items]
    chunk = max(1, len(items) // (4 * threads))
    with ProcessPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, items, chunksize=chunk))
