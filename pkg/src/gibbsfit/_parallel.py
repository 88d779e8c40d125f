import os
from concurrent.futures import ThreadPoolExecutor

ENV_THREADS = "GIBBSFIT_THREADS"


def max_workers() -> int:
    """Worker cap from ``GIBBSFIT_THREADS`` (default: up to 4 CPUs)."""
    raw = os.environ.get(ENV_THREADS)
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            raise ValueError(f"{ENV_THREADS} must be an integer, got {raw!r}") from None
    return max(1, min(4, os.cpu_count() or 1))


def ordered_map(fn, items):
    """``list(map(fn, items))``, possibly threaded; output order follows input order."""
    items = list(items)
    workers = min(max_workers(), len(items))
    if workers <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))
