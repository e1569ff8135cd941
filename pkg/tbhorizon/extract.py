"""Per-query-day views of the reduced transfers, their LRU cache, and window flattening.

A DayView for query day q covers day offsets 0..H: offset 1 is day q, offset
0 the day before (for trips still running after midnight). Trip instances
are addressed by packed (offset, trip index) refs, so integer order of the
refs of one route is the no-overtaking order.
"""

from __future__ import annotations

import threading
import time
from bisect import bisect_left
from collections import OrderedDict
from dataclasses import dataclass, field
from functools import cached_property
from typing import Mapping

from tbhorizon import log
from tbhorizon.errors import HorizonRangeError
from tbhorizon.model import SECONDS_PER_DAY, TRIP_INDEX_BITS, TRIP_INDEX_LIMIT, Timetable, Trip, pack_trip_ref
from tbhorizon.preprocess import TransferSet

# (to route, to packed ref, board index)
ViewTransfer = tuple[int, int, int]


@dataclass(frozen=True)
class DayView:
    """Trip instances and resolved transfers for one query day."""

    timetable: Timetable
    query_day: int
    horizon: int
    instances: tuple[tuple[int, ...], ...]
    transfers: Mapping[tuple[int, int], tuple[tuple[ViewTransfer, ...], ...]]
    clipped: frozenset[tuple[int, int, int]] = frozenset()
    _departures: dict = field(default_factory=dict, compare=False, repr=False)

    @property
    def covered_days(self) -> range:
        first = max(self.query_day - 1, 0)
        last = min(self.query_day + self.horizon - 1, self.timetable.horizon_days - 1)
        return range(first, last + 1)

    def day(self, packed: int) -> int:
        return self.query_day + (packed >> TRIP_INDEX_BITS) - 1

    def trip(self, route: int, packed: int) -> Trip:
        return self.timetable.routes[route].trips[packed & (TRIP_INDEX_LIMIT - 1)]

    def arr(self, route: int, packed: int, i: int) -> int:
        return self.day(packed) * SECONDS_PER_DAY + self.trip(route, packed).arr[i]

    def dep(self, route: int, packed: int, i: int) -> int:
        return self.day(packed) * SECONDS_PER_DAY + self.trip(route, packed).dep[i]

    def transfers_at(self, route: int, packed: int, i: int) -> tuple[ViewTransfer, ...]:
        row = self.transfers.get((route, packed))
        return row[i] if row is not None else ()

    def departures(self, route: int, i: int) -> list[int]:
        """Absolute departures at stop index i of every instance of *route*, in ref order."""
        key = (route, i)
        found = self._departures.get(key)
        if found is None:
            found = [self.dep(route, p, i) for p in self.instances[route]]
            self._departures[key] = found
        return found

    def earliest_instance(self, route: int, i: int, t: int) -> int | None:
        """Packed ref of the first instance of *route* departing stop index i at or after *t*."""
        deps = self.departures(route, i)
        k = bisect_left(deps, t)
        return self.instances[route][k] if k < len(deps) else None

    def transfer_count(self) -> int:
        return sum(len(per_stop) for row in self.transfers.values() for per_stop in row)


def extract_day_view(timetable: Timetable, reduced: TransferSet, query_day: int, horizon: int = 2) -> DayView:
    """Resolve the transfers valid on the days a query on *query_day* can use."""
    D = timetable.horizon_days
    if not 0 <= query_day < D:
        raise HorizonRangeError(f"query day {query_day} outside horizon [0, {D})")
    if horizon < 1:
        raise HorizonRangeError(f"view horizon must be >= 1, got {horizon}")
    if reduced.horizon_days != D:
        raise HorizonRangeError(f"transfer set spans {reduced.horizon_days} days, timetable {D}")
    start = time.monotonic()

    offsets = [o for o in range(horizon + 1) if 0 <= query_day + o - 1 < D]
    instances: list[tuple[int, ...]] = []
    for route in timetable.routes:
        refs = []
        for o in offsets:
            d = query_day + o - 1
            for u, trip in enumerate(route.trips):
                if trip.active_days.bits >> d & 1:
                    refs.append(pack_trip_ref(o, u))
        instances.append(tuple(refs))

    transfers: dict[tuple[int, int], tuple[tuple[ViewTransfer, ...], ...]] = {}
    clipped: set[tuple[int, int, int]] = set()
    for (r, u), row in reduced.rows.items():
        for o in offsets:
            d = query_day + o - 1
            packed = pack_trip_ref(o, u)
            resolved: list[tuple[ViewTransfer, ...]] = []
            any_transfer = False
            for e, per_stop in enumerate(row):
                slot = []
                for tr in per_stop:
                    if not tr.valid_days.bits >> d & 1:
                        continue
                    o2 = o + tr.day_shift
                    if o2 > horizon:
                        clipped.add((r, packed, e))
                        continue
                    slot.append((tr.to_route, pack_trip_ref(o2, tr.to_trip), tr.to_index))
                resolved.append(tuple(slot))
                any_transfer = any_transfer or bool(slot)
            if any_transfer:
                transfers[(r, packed)] = tuple(resolved)

    view = DayView(
        timetable=timetable,
        query_day=query_day,
        horizon=horizon,
        instances=tuple(instances),
        transfers=transfers,
        clipped=frozenset(clipped),
    )
    elapsed = time.monotonic() - start
    log.emit(
        "day_view_built",
        day=query_day,
        horizon=horizon,
        instances=sum(len(x) for x in instances),
        transfers=view.transfer_count(),
        elapsed_s=elapsed,
    )
    log.get_run_stats().record_phase("extract_day_view", elapsed)
    return view


class DayViewCache:
    """LRU cache of DayViews for one (timetable, reduced set) snapshot.

    Safe for concurrent readers; views for distinct days may be built in
    parallel and the first finished copy wins.
    """

    def __init__(self, timetable: Timetable, reduced: TransferSet, *, capacity: int = 8, horizon: int = 2):
        if capacity < 1:
            raise HorizonRangeError(f"cache capacity must be >= 1, got {capacity}")
        self.timetable = timetable
        self.reduced = reduced
        self.capacity = capacity
        self.horizon = horizon
        self.hits = 0
        self.misses = 0
        self._views: OrderedDict[tuple[int, int], DayView] = OrderedDict()
        self._lock = threading.Lock()

    def __len__(self) -> int:
        return len(self._views)

    def __contains__(self, key: tuple[int, int]) -> bool:
        return key in self._views

    def get_or_build(self, query_day: int, horizon: int | None = None) -> DayView:
        key = (query_day, horizon or self.horizon)
        with self._lock:
            view = self._views.get(key)
            if view is not None:
                self._views.move_to_end(key)
                self.hits += 1
                log.emit("day_view_cache", day=query_day, hit=True)
                return view
            self.misses += 1
        log.emit("day_view_cache", day=query_day, hit=False)

        built = extract_day_view(self.timetable, self.reduced, key[0], key[1])
        with self._lock:
            view = self._views.setdefault(key, built)
            self._views.move_to_end(key)
            while len(self._views) > self.capacity:
                self._views.popitem(last=False)
        return view

    def invalidate(self) -> None:
        with self._lock:
            self._views.clear()


def cache_get_or_build(cache: DayViewCache, query_day: int, horizon: int | None = None) -> DayView:
    return cache.get_or_build(query_day, horizon)


# ---------------------------------------------------------------------------
# Flattening
# ---------------------------------------------------------------------------


@dataclass(frozen=True, slots=True)
class FlatTrip:
    """One trip instance with absolute times."""

    route: int
    trip: int
    day: int
    arr: tuple[int, ...]
    dep: tuple[int, ...]

    def precedes(self, other: FlatTrip) -> bool:
        n = len(self.arr)
        return all(self.arr[i] <= other.arr[i] for i in range(1, n)) and all(
            self.dep[i] <= other.dep[i] for i in range(n - 1)
        )


@dataclass(frozen=True)
class FlatTimetable:
    """A day window materialized as plain trips with integer ids.

    Flat route k owns flat trips ``route_first[k] .. route_first[k] + route_size[k] - 1``
    in no-overtaking order.
    """

    timetable: Timetable
    window_start: int
    window_length: int
    trips: tuple[FlatTrip, ...]
    route_stops: tuple[tuple[int, ...], ...]
    route_first: tuple[int, ...]
    route_size: tuple[int, ...]
    trip_route: tuple[int, ...]
    transfers: tuple[tuple[tuple[tuple[int, int], ...], ...], ...]
    flat_id: Mapping[tuple[int, int, int], int]
    clipped: frozenset[tuple[int, int]] = frozenset()

    @cached_property
    def routes_at_stop(self) -> tuple[tuple[tuple[int, int], ...], ...]:
        out: list[list[tuple[int, int]]] = [[] for _ in self.timetable.stops]
        for k, stops in enumerate(self.route_stops):
            for i, s in enumerate(stops):
                out[s].append((k, i))
        return tuple(tuple(x) for x in out)

    @property
    def window(self) -> range:
        return range(self.window_start, self.window_start + self.window_length)

    def transfer_count(self) -> int:
        return sum(len(per_stop) for row in self.transfers for per_stop in row)


def flatten_window(timetable: Timetable, reduced: TransferSet, window_start: int, window_length: int) -> FlatTimetable:
    """Materialize the trip instances and transfers of days [w, w + L)."""
    D = timetable.horizon_days
    w, L = window_start, window_length
    if L < 1 or w < 0 or w + L > D:
        raise HorizonRangeError(f"window [{w}, {w + L}) not inside horizon [0, {D})")
    start = time.monotonic()

    trips: list[FlatTrip] = []
    route_stops: list[tuple[int, ...]] = []
    route_first: list[int] = []
    route_size: list[int] = []
    trip_route: list[int] = []
    flat_id: dict[tuple[int, int, int], int] = {}

    for r, route in enumerate(timetable.routes):
        chains: list[list[FlatTrip]] = []
        for d in range(w, w + L):
            base = d * SECONDS_PER_DAY
            for u, trip in enumerate(route.trips):
                if not trip.active_days.bits >> d & 1:
                    continue
                flat = FlatTrip(r, u, d, tuple(base + a for a in trip.arr), tuple(base + t for t in trip.dep))
                for chain in chains:
                    if chain[-1].precedes(flat):
                        chain.append(flat)
                        break
                else:
                    chains.append([flat])
        for chain in chains:
            route_stops.append(route.stops)
            route_first.append(len(trips))
            route_size.append(len(chain))
            for flat in chain:
                flat_id[(flat.route, flat.trip, flat.day)] = len(trips)
                trip_route.append(len(route_stops) - 1)
                trips.append(flat)

    rows: list[tuple[tuple[tuple[int, int], ...], ...]] = [() for _ in trips]
    clipped: set[tuple[int, int]] = set()
    for (r, u), row in reduced.rows.items():
        for d in range(w, w + L):
            src = flat_id.get((r, u, d))
            if src is None:
                continue
            resolved = []
            for e, per_stop in enumerate(row):
                slot = []
                for tr in per_stop:
                    if not tr.valid_days.bits >> d & 1:
                        continue
                    target_day = d + tr.day_shift
                    if target_day >= w + L:
                        clipped.add((src, e))
                    else:
                        slot.append((flat_id[(tr.to_route, tr.to_trip, target_day)], tr.to_index))
                resolved.append(tuple(slot))
            rows[src] = tuple(resolved)

    flat = FlatTimetable(
        timetable=timetable,
        window_start=w,
        window_length=L,
        trips=tuple(trips),
        route_stops=tuple(route_stops),
        route_first=tuple(route_first),
        route_size=tuple(route_size),
        trip_route=tuple(trip_route),
        transfers=tuple(rows),
        flat_id=flat_id,
        clipped=frozenset(clipped),
    )
    elapsed = time.monotonic() - start
    log.emit(
        "window_flattened",
        window_start=w,
        window_length=L,
        trips=len(trips),
        routes=len(route_stops),
        transfers=flat.transfer_count(),
        elapsed_s=elapsed,
    )
    log.get_run_stats().record_phase("flatten_window", elapsed)
    return flat


def flatten_for_view(timetable: Timetable, reduced: TransferSet, query_day: int, horizon: int = 2) -> FlatTimetable:
    """Flatten exactly the days a DayView for (query_day, horizon) covers."""
    D = timetable.horizon_days
    if not 0 <= query_day < D:
        raise HorizonRangeError(f"query day {query_day} outside horizon [0, {D})")
    first = max(query_day - 1, 0)
    last = min(query_day + horizon - 1, D - 1)
    return flatten_window(timetable, reduced, first, last - first + 1)
