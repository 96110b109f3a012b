"""Worker-count plumbing shared by table construction and the harness.

Results never depend on the worker count: parallel jobs are collected in
submission order, and every floating-point reduction goes through
``math.fsum`` (correctly rounded, hence order independent).
"""

import os
from concurrent.futures import ThreadPoolExecutor

_default_threads = None


def set_threads(n):
    global _default_threads
    _default_threads = None if n is None else max(1, int(n))


def resolve_threads(n=None):
    if n is not None:
        return max(1, int(n))
    if _default_threads is not None:
        return _default_threads
    return os.cpu_count() or 1


def ordered_map(fn, items, threads=None):
    """``map`` over a thread pool; output order follows ``items``."""
    items = list(items)
    n = resolve_threads(threads)
    if n <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(min(n, len(items))) as pool:
        return list(pool.map(fn, items))
