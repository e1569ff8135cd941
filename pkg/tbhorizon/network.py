"""Current (timetable, reduced transfers, view cache) snapshot behind a lock.

Queries grab the snapshot once and run against it; ``apply`` builds the next
snapshot from a batch of edits and swaps it in, so queries in flight finish
on the old one.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from tbhorizon import log
from tbhorizon.artifact import load_artifacts
from tbhorizon.errors import HorizonRangeError
from tbhorizon.extract import DayViewCache, flatten_for_view
from tbhorizon.flat_query import earliest_arrival_query_flat, profile_query_flat
from tbhorizon.model import SECONDS_PER_DAY, Timetable
from tbhorizon.preprocess import TransferSet, preprocess
from tbhorizon.query import QueryResult, earliest_arrival_query, profile_query
from tbhorizon.schemas import EngineConfig
from tbhorizon.update import TimetableEdit, UpdateResult, apply_batch

ENGINES = ("full", "flat")


@dataclass(frozen=True)
class Snapshot:
    version: int
    timetable: Timetable
    reduced: TransferSet
    cache: DayViewCache


class TransitNetwork:
    def __init__(self, timetable: Timetable, reduced: TransferSet, config: EngineConfig | None = None):
        self.config = config or EngineConfig()
        self._lock = threading.Lock()
        self._update_lock = threading.Lock()
        self._snapshot = self._make_snapshot(0, timetable, reduced)

    @classmethod
    def from_timetable(cls, timetable: Timetable, config: EngineConfig | None = None) -> TransitNetwork:
        config = config or EngineConfig()
        return cls(timetable, preprocess(timetable, config).reduced, config)

    @classmethod
    def from_artifacts(cls, directory: Path, config: EngineConfig | None = None) -> TransitNetwork:
        artifacts = load_artifacts(directory)
        return cls(artifacts.timetable, artifacts.reduced, config)

    def _make_snapshot(self, version: int, timetable: Timetable, reduced: TransferSet) -> Snapshot:
        cache = DayViewCache(
            timetable, reduced, capacity=self.config.cache_capacity, horizon=self.config.view_horizon
        )
        return Snapshot(version, timetable, reduced, cache)

    @property
    def snapshot(self) -> Snapshot:
        with self._lock:
            return self._snapshot

    @property
    def timetable(self) -> Timetable:
        return self.snapshot.timetable

    @property
    def reduced(self) -> TransferSet:
        return self.snapshot.reduced

    # ── Queries ──

    def profile(
        self,
        source: str | int,
        destination: str | int,
        day: int,
        *,
        engine: str = "full",
        horizon: int | None = None,
    ) -> QueryResult:
        snap = self.snapshot
        horizon = horizon or self.config.view_horizon
        if engine == "full":
            view = snap.cache.get_or_build(day, horizon)
            return profile_query(view, source, destination, config=self.config)
        if engine == "flat":
            flat = flatten_for_view(snap.timetable, snap.reduced, day, horizon)
            return profile_query_flat(flat, source, destination, day, config=self.config)
        raise HorizonRangeError(f"unknown engine {engine!r}, expected one of {ENGINES}")

    def earliest_arrival(
        self,
        source: str | int,
        destination: str | int,
        departure: int,
        *,
        engine: str = "full",
        horizon: int | None = None,
    ) -> QueryResult:
        snap = self.snapshot
        horizon = horizon or self.config.view_horizon
        day = departure // SECONDS_PER_DAY
        if engine == "full":
            view = snap.cache.get_or_build(day, horizon)
            return earliest_arrival_query(view, source, destination, departure, config=self.config)
        if engine == "flat":
            flat = flatten_for_view(snap.timetable, snap.reduced, day, horizon)
            return earliest_arrival_query_flat(flat, source, destination, departure, config=self.config)
        raise HorizonRangeError(f"unknown engine {engine!r}, expected one of {ENGINES}")

    # ── Updates ──

    def apply(self, edits: Sequence[TimetableEdit]) -> UpdateResult:
        """Apply *edits* as one batch and swap in the repaired snapshot."""
        with self._update_lock:
            current = self.snapshot
            result = apply_batch(current.timetable, current.reduced, edits, config=self.config)
            nxt = self._make_snapshot(current.version + 1, result.timetable, result.transfers)
            with self._lock:
                self._snapshot = nxt
        current.cache.invalidate()
        log.emit("snapshot_swapped", version=current.version + 1, edits=len(edits))
        return result
