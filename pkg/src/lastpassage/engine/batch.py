"""Deterministic parallel execution over path indices."""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

__all__ = ["worker_count", "run_chunks", "CHUNK"]

CHUNK = 4096


def worker_count() -> int:
    """Worker threads: ``LPK_THREADS`` if set, else the CPU count."""
    cap = os.environ.get("LPK_THREADS")
    if cap:
        try:
            value = int(cap)
        except ValueError:
            raise ValueError(f"LPK_THREADS must be an integer, got {cap!r}") from None
        if value > 0:
            return value
    return os.cpu_count() or 1


def run_chunks(fn, n_paths: int, chunk: int = CHUNK) -> None:
    """Call ``fn(p0, p1)`` over consecutive path ranges.

    ``fn`` must write its results into path-indexed arrays; since every
    path draws from its own counter range, the outcome is the same for any
    number of workers.
    """
    bounds = [(p, min(p + chunk, n_paths)) for p in range(0, n_paths, chunk)]
    workers = min(worker_count(), len(bounds))
    if workers <= 1:
        for p0, p1 in bounds:
            fn(p0, p1)
        return
    with ThreadPoolExecutor(max_workers=workers) as pool:
        for fut in [pool.submit(fn, p0, p1) for p0, p1 in bounds]:
            fut.result()
