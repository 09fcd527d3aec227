"""Fixed-chunk row mapping.

Rows are always split at the same boundaries (``CHUNK_ROWS``) and results are
concatenated in chunk order, so the output does not depend on how many
threads did the work.  The thread count comes from ``SELIS_NUM_THREADS``.
"""

import os
from concurrent.futures import ThreadPoolExecutor
from functools import lru_cache

import numpy as np

CHUNK_ROWS = 8192
ENV_THREADS = "SELIS_NUM_THREADS"


def num_threads() -> int:
    raw = os.environ.get(ENV_THREADS)
    if raw is None:
        return os.cpu_count() or 1
    try:
        return max(1, int(raw))
    except ValueError:
        raise ValueError(f"{ENV_THREADS} must be an integer, got {raw!r}") from None


@lru_cache(maxsize=None)
def _executor(n: int) -> ThreadPoolExecutor:
    return ThreadPoolExecutor(max_workers=n, thread_name_prefix="selis")


def map_rows(fn, rows: np.ndarray):
    """Apply ``fn`` to fixed row chunks of ``rows``; return the list of results in order."""
    n = rows.shape[0]
    chunks = [rows[i : i + CHUNK_ROWS] for i in range(0, max(n, 1), CHUNK_ROWS)]
    threads = min(num_threads(), len(chunks))
    if threads <= 1:
        return [fn(c) for c in chunks]
    return list(_executor(threads).map(fn, chunks))
