"""Per-trip data-parallel work for transfer computation and reduction.

Work items (one per trip) are independent: they read the shared immutable
timetable and produce one output row each. Rows are merged back in key order,
so the result never depends on scheduling.
"""

from __future__ import annotations

import time
from concurrent.futures import Future, ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field
from typing import Callable, Generic, Hashable, Sequence, TypeVar

from tbhorizon import log

K = TypeVar("K", bound=Hashable)
V = TypeVar("V")

DEFAULT_CHUNK_SIZE = 64


@dataclass
class MapResult(Generic[K, V]):
    """Result of a parallel map over trips."""

    rows: dict[K, V] = field(default_factory=dict)
    total_elapsed_s: float = 0.0
    sequential_elapsed_s: float = 0.0
    chunks: int = 0

    @property
    def speedup(self) -> float:
        """Ratio of summed chunk time to wall time (>1 means faster)."""
        if self.total_elapsed_s == 0:
            return 1.0
        return self.sequential_elapsed_s / self.total_elapsed_s


def _run_chunk(fn: Callable[[K], V], keys: Sequence[K]) -> tuple[list[V], float]:
    start = time.monotonic()
    out = [fn(k) for k in keys]
    return out, time.monotonic() - start


def map_trips(
    fn: Callable[[K], V],
    keys: Sequence[K],
    *,
    workers: int = 1,
    phase: str = "map",
    chunk_size: int = DEFAULT_CHUNK_SIZE,
) -> MapResult[K, V]:
    """Apply *fn* to every key, in parallel when ``workers > 1``.

    The returned rows iterate in the order of *keys*. The first exception
    raised by *fn* is re-raised after the pool shuts down.
    """
    keys = list(keys)
    if not keys:
        return MapResult()

    batch_start = time.monotonic()
    chunks = [keys[i : i + chunk_size] for i in range(0, len(keys), chunk_size)]
    log.emit("parallel_map_start", phase=phase, items=len(keys), chunks=len(chunks), workers=workers)

    results: list[list[V] | None] = [None] * len(chunks)
    sequential = 0.0
    if workers <= 1 or len(chunks) == 1:
        for i, chunk in enumerate(chunks):
            results[i], elapsed = _run_chunk(fn, chunk)
            sequential += elapsed
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures: dict[Future, int] = {
                pool.submit(_run_chunk, fn, chunk): i for i, chunk in enumerate(chunks)
            }
            first_error: BaseException | None = None
            for future in as_completed(futures):
                i = futures[future]
                try:
                    results[i], elapsed = future.result()
                    sequential += elapsed
                except Exception as exc:
                    log.emit("parallel_chunk_failed", phase=phase, chunk=i, error=str(exc))
                    if first_error is None:
                        first_error = exc
            if first_error is not None:
                raise first_error

    rows: dict[K, V] = {}
    for chunk, out in zip(chunks, results):
        rows.update(zip(chunk, out or ()))

    total = time.monotonic() - batch_start
    log.emit(
        "parallel_map_end",
        phase=phase,
        total_elapsed_s=total,
        sequential_elapsed_s=sequential,
        speedup=sequential / total if total > 0 else 1.0,
    )
    return MapResult(rows=rows, total_elapsed_s=total, sequential_elapsed_s=sequential, chunks=len(chunks))
