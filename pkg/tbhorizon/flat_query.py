"""Queries on a flattened day window.

Same rounds and pruning as the day-view engine, but trip instances are plain
integer ids and the reached structure is a dense (transfers x trips) array of
first reached stop indices, as in the single-day formulation. Journeys map
back to trip refs relative to the query day, so both engines report the same
result.
"""

from __future__ import annotations

import time
from bisect import bisect_left
from typing import Sequence

import numpy as np

from tbhorizon import log
from tbhorizon.errors import HorizonRangeError
from tbhorizon.extract import FlatTimetable
from tbhorizon.model import SECONDS_PER_DAY, TripRef, pack_trip_ref
from tbhorizon.query import QueryResult, SearchState, _emit, _resolve, check_journey, run_earliest_arrival, run_profile
from tbhorizon.schemas import EngineConfig


class FlatSpace:
    """Adapts a FlatTimetable to the search; flat trip ids stand in for packed refs."""

    def __init__(self, flat: FlatTimetable, query_day: int):
        first = flat.window_start
        if not first <= query_day < first + flat.window_length:
            raise HorizonRangeError(
                f"query day {query_day} outside flattened window [{first}, {first + flat.window_length})"
            )
        self.flat = flat
        self.timetable = flat.timetable
        self.query_day = query_day
        self._departures: dict[tuple[int, int], list[int]] = {}

    def stops_of(self, route: int) -> tuple[int, ...]:
        return self.flat.route_stops[route]

    def routes_at(self, stop: int) -> Sequence[tuple[int, int]]:
        return self.flat.routes_at_stop[stop]

    def instances(self, route: int) -> Sequence[int]:
        first = self.flat.route_first[route]
        return range(first, first + self.flat.route_size[route])

    def departures(self, route: int, i: int) -> list[int]:
        key = (route, i)
        found = self._departures.get(key)
        if found is None:
            found = [self.flat.trips[t].dep[i] for t in self.instances(route)]
            self._departures[key] = found
        return found

    def arr(self, route: int, packed: int, i: int) -> int:
        return self.flat.trips[packed].arr[i]

    def dep(self, route: int, packed: int, i: int) -> int:
        return self.flat.trips[packed].dep[i]

    def transfers_at(self, route: int, packed: int, i: int) -> list[tuple[int, int, int]]:
        row = self.flat.transfers[packed]
        if not row:
            return []
        trip_route = self.flat.trip_route
        return [(trip_route[t], t, b) for t, b in row[i]]

    def is_clipped(self, route: int, packed: int, i: int) -> bool:
        return (packed, i) in self.flat.clipped

    def trip_ref(self, route: int, packed: int) -> tuple[TripRef, int]:
        ft = self.flat.trips[packed]
        return TripRef(ft.route, pack_trip_ref(ft.day - self.query_day + 1, ft.trip)), ft.day

    def order_key(self, route: int, packed: int) -> tuple[int, int]:
        ft = self.flat.trips[packed]
        return (ft.route, pack_trip_ref(ft.day - self.query_day + 1, ft.trip))

    def earliest_instance(self, route: int, i: int, t: int) -> int | None:
        deps = self.departures(route, i)
        k = bisect_left(deps, t)
        return self.flat.route_first[route] + k if k < len(deps) else None


class UnrolledReached:
    """``first[n, t]``: lowest stop index reached on flat trip t with at most n transfers.

    Marking (t, b, n) lowers the entry for every later trip of t's route and
    every transfer count >= n, so a lookup is a single array read.
    """

    def __init__(self, flat: FlatTimetable, max_transfers: int):
        self.flat = flat
        n_trips = len(flat.trips)
        sizes = np.array([len(flat.route_stops[r]) - 1 for r in flat.trip_route], dtype=np.int32)
        self.first = np.tile(sizes, (max_transfers + 1, 1)) if n_trips else np.zeros((max_transfers + 1, 0), np.int32)

    def dominated(self, route: int, packed: int, index: int, n: int) -> bool:
        return int(self.first[n, packed]) <= index

    def cap(self, route: int, packed: int, n: int, default: int) -> int:
        return min(int(self.first[n, packed]), default)

    def insert(self, route: int, packed: int, index: int, n: int) -> None:
        end = self.flat.route_first[route] + self.flat.route_size[route]
        block = self.first[n:, packed:end]
        np.minimum(block, index, out=block)


def profile_query_flat(
    flat: FlatTimetable,
    source: str | int,
    destination: str | int,
    query_day: int,
    *,
    config: EngineConfig | None = None,
) -> QueryResult:
    """Profile query on a flattened window; the window must contain *query_day*."""
    config = config or EngineConfig()
    tt = flat.timetable
    src, dst = _resolve(tt, source), _resolve(tt, destination)
    start = time.monotonic()
    result, state = run_profile(
        FlatSpace(flat, query_day), UnrolledReached(flat, config.max_transfers), src, dst, query_day, config.max_transfers
    )
    _finish("profile", result, state, config, start)
    return result


def earliest_arrival_query_flat(
    flat: FlatTimetable,
    source: str | int,
    destination: str | int,
    departure: int,
    *,
    config: EngineConfig | None = None,
) -> QueryResult:
    config = config or EngineConfig()
    tt = flat.timetable
    src, dst = _resolve(tt, source), _resolve(tt, destination)
    query_day = departure // SECONDS_PER_DAY
    start = time.monotonic()
    result, state = run_earliest_arrival(
        FlatSpace(flat, query_day),
        UnrolledReached(flat, config.max_transfers),
        src,
        dst,
        departure,
        query_day,
        config.max_transfers,
    )
    _finish("earliest_arrival", result, state, config, start)
    return result


def _finish(kind: str, result: QueryResult, state: SearchState, config: EngineConfig, start: float) -> None:
    if config.debug_checks:
        for journey in result.journeys:
            check_journey(state.space.timetable, journey, result.source, result.destination)
    _emit(kind, "flat", result, state, time.monotonic() - start)
