"""Order-preserving parallel map over independent grid or table cells."""

import os
from concurrent.futures import ThreadPoolExecutor

from .errors import DomainError

THREADS_ENV = "SUPOU_TSVAR_THREADS"


def thread_count(workers=None):
    """Worker count: explicit argument, else ``$SUPOU_TSVAR_THREADS``, else 1."""
    if workers is None:
        raw = os.environ.get(THREADS_ENV, "").strip()
        if not raw:
            return 1
        try:
            workers = int(raw)
        except ValueError:
            raise DomainError(f"{THREADS_ENV} must be a positive integer, got {raw!r}") from None
    if workers < 1:
        raise DomainError("thread count must be at least 1")
    return workers


def map_ordered(func, items, workers=None):
    """``[func(x) for x in items]``, optionally on a thread pool.

    Results come back in input order whatever the completion order, so the
    output does not depend on the thread count.
    """
    items = list(items)
    n = thread_count(workers)
    if n == 1 or len(items) < 2:
        return [func(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(func, items))
