"""Sample collection for benchmark, extraction and update-simulation runs."""

from __future__ import annotations

import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np


@dataclass(frozen=True)
class Metric:
    """One sample: a value (seconds, microseconds, a count) with optional tags."""

    name: str
    value: float
    tags: dict[str, str] = field(default_factory=dict)


class MetricsCollector:
    """Collects tagged samples and counters for one command run."""

    def __init__(self) -> None:
        self.metrics: list[Metric] = []
        self.counters: dict[str, int] = {}

    def record_metric(self, name: str, value: float, tags: dict[str, str] | None = None) -> None:
        self.metrics.append(Metric(name=name, value=float(value), tags=tags or {}))

    @contextmanager
    def timed(self, name: str, **tags: str) -> Iterator[None]:
        """Record the wall time of the block as a ``name`` sample (seconds), even if it raises."""
        start = time.perf_counter()
        try:
            yield
        finally:
            self.record_metric(name, time.perf_counter() - start, tags or None)

    def increment_counter(self, name: str, amount: int = 1) -> int:
        self.counters[name] = self.counters.get(name, 0) + amount
        return self.counters[name]

    def get_counter(self, name: str) -> int:
        return self.counters.get(name, 0)

    def values(self, name: str, **tags: str) -> np.ndarray:
        """All samples of *name* whose tags include *tags*, in recording order."""
        return np.array(
            [
                m.value
                for m in self.metrics
                if m.name == name and all(m.tags.get(k) == v for k, v in tags.items())
            ],
            dtype=float,
        )

    def quartiles(self, name: str, **tags: str) -> dict[str, float] | None:
        """n, min, quartiles, max and mean of *name*; None when nothing was recorded."""
        vals = self.values(name, **tags)
        if vals.size == 0:
            return None
        q = np.percentile(vals, [0, 25, 50, 75, 100])
        return {
            "n": int(vals.size),
            "min": float(q[0]),
            "q1": float(q[1]),
            "median": float(q[2]),
            "q3": float(q[3]),
            "max": float(q[4]),
            "mean": float(vals.mean()),
        }
