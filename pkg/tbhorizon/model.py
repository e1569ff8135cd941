"""Timetable data model: day bit sets, stops, footpaths, trips, routes and packed trip refs.

All types are immutable once built. Times are integer seconds; a trip's times
are relative to the midnight of the day it runs on and may exceed one day.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from datetime import date, timedelta
from functools import cached_property
from typing import Iterable, Iterator, Mapping, Sequence

from tbhorizon.errors import (
    ErrorContext,
    HorizonRangeError,
    InvariantError,
    UnknownStopError,
    UnknownTripError,
)
from tbhorizon.schemas import DEFAULT_START_DATE

SECONDS_PER_DAY = 86400
TRIP_INDEX_BITS = 24
TRIP_INDEX_LIMIT = 1 << TRIP_INDEX_BITS
MAX_DAY_OFFSET = 1 << 16
INFINITY = (1 << 63) - 1


# ---------------------------------------------------------------------------
# Time arithmetic and packed identifiers
# ---------------------------------------------------------------------------


def pack_trip_ref(day_offset: int, trip_index: int) -> int:
    """Pack (day offset, trip index) into one integer, offset in the high bits."""
    if not 0 <= trip_index < TRIP_INDEX_LIMIT:
        raise HorizonRangeError(f"trip index {trip_index} outside [0, 2^{TRIP_INDEX_BITS})")
    if not 0 <= day_offset <= MAX_DAY_OFFSET:
        raise HorizonRangeError(f"day offset {day_offset} outside [0, {MAX_DAY_OFFSET}]")
    return (day_offset << TRIP_INDEX_BITS) | trip_index


def unpack_trip_ref(packed: int) -> tuple[int, int]:
    """Inverse of ``pack_trip_ref``: returns (day offset, trip index)."""
    if packed < 0:
        raise HorizonRangeError(f"packed trip ref {packed} is negative")
    return packed >> TRIP_INDEX_BITS, packed & (TRIP_INDEX_LIMIT - 1)


def abs_time(day_index: int, t: int) -> int:
    """Seconds since midnight of horizon day 0 for time *t* of a trip running on *day_index*."""
    if day_index < 0 or t < 0:
        raise HorizonRangeError(f"abs_time needs day >= 0 and t >= 0, got ({day_index}, {t})")
    return day_index * SECONDS_PER_DAY + t


@dataclass(frozen=True, order=True)
class TripRef:
    """A trip instance relative to a query day: route id plus packed (offset, index)."""

    route: int
    packed: int

    @classmethod
    def of(cls, route: int, day_offset: int, trip_index: int) -> TripRef:
        return cls(route, pack_trip_ref(day_offset, trip_index))

    @property
    def day_offset(self) -> int:
        return self.packed >> TRIP_INDEX_BITS

    @property
    def trip_index(self) -> int:
        return self.packed & (TRIP_INDEX_LIMIT - 1)

    def day(self, query_day: int) -> int:
        """Concrete horizon day (offset 1 is the query day, 0 the day before)."""
        return query_day + self.day_offset - 1


# ---------------------------------------------------------------------------
# Day bit sets
# ---------------------------------------------------------------------------


@dataclass(frozen=True, slots=True)
class DayBitset:
    """Fixed-width set of horizon days; bit i set means "valid on day i"."""

    bits: int
    length: int

    def __post_init__(self) -> None:
        if self.length < 1:
            raise HorizonRangeError(f"bit set length must be >= 1, got {self.length}")
        if self.bits < 0 or self.bits >> self.length:
            raise HorizonRangeError(f"bits {self.bits:#x} do not fit in {self.length} days")

    @classmethod
    def empty(cls, length: int) -> DayBitset:
        return cls(0, length)

    @classmethod
    def full(cls, length: int) -> DayBitset:
        return cls((1 << length) - 1, length)

    @classmethod
    def from_days(cls, days: Iterable[int], length: int) -> DayBitset:
        bits = 0
        for d in days:
            if not 0 <= d < length:
                raise HorizonRangeError(f"day {d} outside horizon [0, {length})")
            bits |= 1 << d
        return cls(bits, length)

    @classmethod
    def from_string(cls, text: str) -> DayBitset:
        """Parse a '0'/'1' string, bit 0 first."""
        if not text or set(text) - {"0", "1"}:
            raise HorizonRangeError(f"invalid day string {text!r}")
        return cls(int(text[::-1], 2), len(text))

    def to_string(self) -> str:
        return format(self.bits, f"0{self.length}b")[::-1]

    def days(self) -> Iterator[int]:
        """Set days in ascending order."""
        bits = self.bits
        while bits:
            low = bits & -bits
            yield low.bit_length() - 1
            bits ^= low

    def count(self) -> int:
        return bin(self.bits).count("1")

    def is_empty(self) -> bool:
        return self.bits == 0

    def __bool__(self) -> bool:
        return self.bits != 0

    def __contains__(self, day: int) -> bool:
        return 0 <= day < self.length and bool(self.bits >> day & 1)

    def _check(self, other: DayBitset) -> None:
        if self.length != other.length:
            raise HorizonRangeError(f"bit set lengths differ: {self.length} vs {other.length}")

    def __and__(self, other: DayBitset) -> DayBitset:
        self._check(other)
        return DayBitset(self.bits & other.bits, self.length)

    def __or__(self, other: DayBitset) -> DayBitset:
        self._check(other)
        return DayBitset(self.bits | other.bits, self.length)

    def __sub__(self, other: DayBitset) -> DayBitset:
        self._check(other)
        return DayBitset(self.bits & ~other.bits, self.length)

    def __invert__(self) -> DayBitset:
        return DayBitset(~self.bits & ((1 << self.length) - 1), self.length)

    def shift(self, k: int) -> DayBitset:
        """Move every day by *k* (bit d of the result is bit d - k of self); days leaving the horizon drop."""
        mask = (1 << self.length) - 1
        bits = (self.bits << k) & mask if k >= 0 else self.bits >> -k
        return DayBitset(bits, self.length)

    def issubset(self, other: DayBitset) -> bool:
        self._check(other)
        return self.bits & ~other.bits == 0


# ---------------------------------------------------------------------------
# Stops, footpaths, trips, routes
# ---------------------------------------------------------------------------


@dataclass(frozen=True, slots=True)
class Stop:
    id: str
    name: str = ""
    min_change_time: int = 0

    def __post_init__(self) -> None:
        if self.min_change_time < 0:
            raise InvariantError(f"stop {self.id!r} has negative change time {self.min_change_time}")


@dataclass(frozen=True, slots=True)
class Footpath:
    """Directed walk between two stops (indices into ``Timetable.stops``)."""

    from_stop: int
    to_stop: int
    duration: int

    def __post_init__(self) -> None:
        if self.from_stop == self.to_stop:
            raise InvariantError(f"footpath loops on stop index {self.from_stop}")
        if self.duration <= 0:
            raise InvariantError(f"footpath duration must be > 0, got {self.duration}")


@dataclass(frozen=True, slots=True)
class Trip:
    """One vehicle run over ``stops`` (stop indices) on the days in ``active_days``.

    ``arr[0]`` and ``dep[-1]`` are stored but never read: use ``arrival`` and
    ``departure``, which return 0 and ``INFINITY`` for them.
    """

    stops: tuple[int, ...]
    arr: tuple[int, ...]
    dep: tuple[int, ...]
    active_days: DayBitset
    label: str = ""

    def __post_init__(self) -> None:
        n = len(self.stops)
        ctx = ErrorContext(trip=self.label)
        if n < 2:
            raise InvariantError("a trip needs at least two stops", ctx)
        if len(self.arr) != n or len(self.dep) != n:
            raise InvariantError("arr/dep length differs from stop count", ctx)
        if min(self.arr[1:]) < 0 or min(self.dep[:-1]) < 0:
            raise InvariantError("times must be >= 0", ctx)
        for i in range(1, n - 1):
            if self.arr[i] > self.dep[i]:
                raise InvariantError(f"arrival after departure at stop index {i}", ctx)
        for i in range(n - 1):
            if self.dep[i] > self.arr[i + 1]:
                raise InvariantError(f"departure at index {i} later than next arrival", ctx)
        if not self.active_days:
            raise InvariantError("trip has no active day", ctx)

    def __len__(self) -> int:
        return len(self.stops)

    def arrival(self, i: int) -> int:
        return 0 if i == 0 else self.arr[i]

    def departure(self, i: int) -> int:
        return INFINITY if i == len(self.stops) - 1 else self.dep[i]

    def precedes(self, other: Trip, shift: int = 0) -> bool:
        """Whether self ⪯ other with other's times moved by *shift* seconds."""
        n = len(self.stops)
        for i in range(1, n):
            if self.arr[i] > other.arr[i] + shift:
                return False
        for i in range(n - 1):
            if self.dep[i] > other.dep[i] + shift:
                return False
        return True

    def shifted(self, deltas: Sequence[int]) -> Trip:
        """Copy with ``deltas[i]`` seconds added to both times at stop index i."""
        return replace(
            self,
            arr=tuple(a + d for a, d in zip(self.arr, deltas)),
            dep=tuple(t + d for t, d in zip(self.dep, deltas)),
        )

    def with_days(self, days: DayBitset) -> Trip:
        return replace(self, active_days=days)


@dataclass(frozen=True)
class Route:
    """Trips sharing one stop sequence, ordered so that no trip overtakes another.

    The order also holds across midnight: the last trip must not be later than
    the first trip of the following day, so packed (day, index) order is trip order.
    """

    stops: tuple[int, ...]
    trips: tuple[Trip, ...] = ()

    def __len__(self) -> int:
        return len(self.trips)

    @cached_property
    def departures(self) -> tuple[tuple[int, ...], ...]:
        """``departures[i]`` lists each trip's departure at stop index i, in trip order."""
        return tuple(tuple(t.dep[i] for t in self.trips) for i in range(len(self.stops)))

    def is_ordered(self) -> bool:
        for a, b in zip(self.trips, self.trips[1:]):
            if not a.precedes(b):
                return False
        if self.trips and not self.trips[-1].precedes(self.trips[0], SECONDS_PER_DAY):
            return False
        return True

    def accepts(self, trip: Trip) -> int | None:
        """Position at which *trip* can be inserted keeping the order, or None."""
        if trip.stops != self.stops:
            return None
        trips = self.trips
        if not trips:
            return 0
        for k in range(len(trips) + 1):
            if k > 0 and not trips[k - 1].precedes(trip):
                continue
            if k < len(trips) and not trip.precedes(trips[k]):
                continue
            first = trip if k == 0 else trips[0]
            last = trip if k == len(trips) else trips[-1]
            if last.precedes(first, SECONDS_PER_DAY):
                return k
        return None


@dataclass(frozen=True)
class Timetable:
    """Stops, footpaths and routes over a horizon of ``horizon_days`` days.

    ``change_overrides`` maps (stop, from route, to route) to a change time
    that replaces the stop's own minimum change time for that route pair.
    """

    horizon_days: int
    stops: tuple[Stop, ...] = ()
    footpaths: tuple[Footpath, ...] = ()
    routes: tuple[Route, ...] = ()
    change_overrides: Mapping[tuple[int, int, int], int] = field(default_factory=dict)
    start_date: date = DEFAULT_START_DATE

    def __post_init__(self) -> None:
        if self.horizon_days < 1:
            raise HorizonRangeError(f"horizon must span at least one day, got {self.horizon_days}")

    # ── Lookups ──

    @cached_property
    def stop_index(self) -> dict[str, int]:
        return {s.id: i for i, s in enumerate(self.stops)}

    def resolve_stop(self, stop_id: str) -> int:
        try:
            return self.stop_index[stop_id]
        except KeyError:
            raise UnknownStopError(f"unknown stop {stop_id!r}") from None

    def trip(self, route: int, trip_index: int) -> Trip:
        if not 0 <= route < len(self.routes) or not 0 <= trip_index < len(self.routes[route].trips):
            raise UnknownTripError(f"no trip {trip_index} on route {route}")
        return self.routes[route].trips[trip_index]

    @cached_property
    def footpaths_from(self) -> tuple[tuple[tuple[int, int], ...], ...]:
        """``footpaths_from[s]`` = ((to stop, duration), ...) sorted by target."""
        out: list[list[tuple[int, int]]] = [[] for _ in self.stops]
        for fp in self.footpaths:
            out[fp.from_stop].append((fp.to_stop, fp.duration))
        return tuple(tuple(sorted(x)) for x in out)

    @cached_property
    def footpaths_to(self) -> tuple[tuple[tuple[int, int], ...], ...]:
        """``footpaths_to[s]`` = ((from stop, duration), ...) sorted by source."""
        out: list[list[tuple[int, int]]] = [[] for _ in self.stops]
        for fp in self.footpaths:
            out[fp.to_stop].append((fp.from_stop, fp.duration))
        return tuple(tuple(sorted(x)) for x in out)

    @cached_property
    def routes_at_stop(self) -> tuple[tuple[tuple[int, int], ...], ...]:
        """``routes_at_stop[s]`` = ((route, stop index), ...) for every visit of s."""
        out: list[list[tuple[int, int]]] = [[] for _ in self.stops]
        for r, route in enumerate(self.routes):
            for i, s in enumerate(route.stops):
                out[s].append((r, i))
        return tuple(tuple(x) for x in out)

    @cached_property
    def override_stops(self) -> frozenset[int]:
        return frozenset(s for s, _, _ in self.change_overrides)

    def change_time(self, stop: int, from_route: int, to_route: int) -> int:
        if stop in self.override_stops:
            found = self.change_overrides.get((stop, from_route, to_route))
            if found is not None:
                return found
        return self.stops[stop].min_change_time

    # ── Sizes ──

    @property
    def n_trips(self) -> int:
        return sum(len(r.trips) for r in self.routes)

    @property
    def n_trip_days(self) -> int:
        return sum(t.active_days.count() for r in self.routes for t in r.trips)

    def trip_keys(self) -> Iterator[tuple[int, int]]:
        for r, route in enumerate(self.routes):
            for u in range(len(route.trips)):
                yield r, u

    # ── Invariants ──

    def validate(self) -> None:
        """Raise ``InvariantError`` on the first violated timetable invariant."""
        n_stops = len(self.stops)
        if len(self.stop_index) != n_stops:
            raise InvariantError("duplicate stop ids")
        seen_fp: set[tuple[int, int]] = set()
        for fp in self.footpaths:
            if not (0 <= fp.from_stop < n_stops and 0 <= fp.to_stop < n_stops):
                raise InvariantError(f"footpath {fp} references a missing stop")
            if (fp.from_stop, fp.to_stop) in seen_fp:
                raise InvariantError(f"duplicate footpath {fp.from_stop}->{fp.to_stop}")
            seen_fp.add((fp.from_stop, fp.to_stop))
        for (s, r_from, r_to), seconds in self.change_overrides.items():
            if not (0 <= s < n_stops and 0 <= r_from < len(self.routes) and 0 <= r_to < len(self.routes)):
                raise InvariantError(f"change override ({s}, {r_from}, {r_to}) out of range")
            if seconds < 0:
                raise InvariantError(f"negative change override at stop index {s}")
        for r, route in enumerate(self.routes):
            if len(route.stops) < 2 or any(not 0 <= s < n_stops for s in route.stops):
                raise InvariantError(f"route {r} has an invalid stop sequence")
            for u, trip in enumerate(route.trips):
                ctx = ErrorContext(trip=f"{r}/{u}")
                if trip.stops != route.stops:
                    raise InvariantError("trip stops differ from its route", ctx)
                if trip.active_days.length != self.horizon_days:
                    raise InvariantError(
                        f"bit set length {trip.active_days.length} != horizon {self.horizon_days}", ctx
                    )
            if not route.is_ordered():
                raise InvariantError(f"route {r} trips overtake each other")

    def with_routes(self, routes: Sequence[Route]) -> Timetable:
        return replace(self, routes=tuple(routes))

    def day_of(self, day_index: int) -> date:
        return self.start_date + timedelta(days=day_index)
