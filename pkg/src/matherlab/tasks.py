"""Deterministic task pool: index-ordered reduction, seed-per-task.

Results are identical for any worker count because every task owns its
seed and the reduction order is the submission order.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor


def run_tasks(fns, workers: int | None = None):
    """Run zero-argument callables, returning results in submission order.

    Exceptions are captured and returned in place of results so one
    failed start never kills a sweep; callers filter.
    """
    def guarded(fn):
        try:
            return fn()
        except Exception as exc:  # noqa: BLE001 - multi-starts tolerate failures
            return exc

    fns = list(fns)
    if not workers or workers <= 1 or len(fns) <= 1:
        return [guarded(fn) for fn in fns]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(guarded, fns))


def task_seed(base_seed: int, index: int) -> list[int]:
    """Per-task seed sequence independent of scheduling."""
    return [int(base_seed), int(index)]
