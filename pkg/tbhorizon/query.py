"""Earliest-arrival and full-day profile queries, Pareto-optimal in (arrival, transfers).

The search works on trip segments: a segment is a trip instance boarded at
some stop index, scanned up to a cap. Round n holds the segments reached with
n transfers. A reached structure per route remembers which (instance, index,
transfers) triples are already covered; the day-view engine keeps it as an
explicit Pareto set per route, the flat engine as unrolled per-trip indices.
"""

from __future__ import annotations

import time
from collections import defaultdict
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from typing import Protocol, Sequence

from tbhorizon import log
from tbhorizon.errors import HorizonRangeError, VerificationError
from tbhorizon.extract import DayView
from tbhorizon.model import INFINITY, SECONDS_PER_DAY, Timetable, TripRef
from tbhorizon.preprocess import footpath_duration
from tbhorizon.schemas import EngineConfig


# ---------------------------------------------------------------------------
# Journeys and results
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TripLeg:
    trip: TripRef
    day: int
    board: int
    exit: int
    from_stop: int
    to_stop: int
    departure: int
    arrival: int


@dataclass(frozen=True)
class FootpathLeg:
    from_stop: int
    to_stop: int
    duration: int
    departure: int
    arrival: int


Leg = TripLeg | FootpathLeg


@dataclass(frozen=True)
class Journey:
    legs: tuple[Leg, ...]
    departure: int
    arrival: int
    n_transfers: int

    @property
    def criteria(self) -> tuple[int, int, int]:
        return (self.departure, self.arrival, self.n_transfers)

    @property
    def trip_legs(self) -> tuple[TripLeg, ...]:
        return tuple(leg for leg in self.legs if isinstance(leg, TripLeg))


def dominates(a: tuple[int, int, int], b: tuple[int, int, int]) -> bool:
    """(dep, arr, n) triple *a* dominates *b*: departs no earlier, arrives no later, no more transfers, and differs."""
    return a[0] >= b[0] and a[1] <= b[1] and a[2] <= b[2] and a != b


@dataclass(frozen=True)
class QueryResult:
    """Pareto set of journeys, sorted by (departure, arrival, transfers)."""

    source: int
    destination: int
    query_day: int
    journeys: tuple[Journey, ...] = ()
    truncated: bool = False

    def front(self) -> list[tuple[int, int, int]]:
        return [j.criteria for j in self.journeys]

    def __len__(self) -> int:
        return len(self.journeys)


# ---------------------------------------------------------------------------
# Reached structures
# ---------------------------------------------------------------------------


class ReachedSet:
    """Pareto set of (packed ref, stop index, transfers) for one route."""

    __slots__ = ("entries",)

    def __init__(self):
        self.entries: list[tuple[int, int, int]] = []

    def dominated(self, packed: int, index: int, n: int) -> bool:
        """True if some entry is <= (packed, index, n) in every component."""
        for p, i, k in self.entries:
            if p <= packed and i <= index and k <= n:
                return True
        return False

    def cap(self, packed: int, n: int, default: int) -> int:
        """Smallest index among entries with ref <= packed and transfers <= n."""
        best = default
        for p, i, k in self.entries:
            if p <= packed and k <= n and i < best:
                best = i
        return best

    def insert(self, packed: int, index: int, n: int) -> bool:
        if self.dominated(packed, index, n):
            return False
        self.entries = [
            (p, i, k) for p, i, k in self.entries if not (packed <= p and index <= i and n <= k)
        ]
        self.entries.append((packed, index, n))
        return True

    def is_antichain(self) -> bool:
        for a in self.entries:
            for b in self.entries:
                if a is not b and a[0] <= b[0] and a[1] <= b[1] and a[2] <= b[2]:
                    return False
        return True

    def __len__(self) -> int:
        return len(self.entries)


class ParetoReached:
    """Explicit reached sets, one per route."""

    def __init__(self, debug: bool = False):
        self.sets: defaultdict[int, ReachedSet] = defaultdict(ReachedSet)
        self.debug = debug

    def dominated(self, route: int, packed: int, index: int, n: int) -> bool:
        rs = self.sets.get(route)
        return rs is not None and rs.dominated(packed, index, n)

    def cap(self, route: int, packed: int, n: int, default: int) -> int:
        rs = self.sets.get(route)
        return default if rs is None else rs.cap(packed, n, default)

    def insert(self, route: int, packed: int, index: int, n: int) -> None:
        rs = self.sets[route]
        rs.insert(packed, index, n)
        if self.debug and not rs.is_antichain():
            raise VerificationError(f"reached set of route {route} holds a dominated entry")


class Reached(Protocol):
    def dominated(self, route: int, packed: int, index: int, n: int) -> bool: ...

    def cap(self, route: int, packed: int, n: int, default: int) -> int: ...

    def insert(self, route: int, packed: int, index: int, n: int) -> None: ...


class InstanceSpace(Protocol):
    """What the search needs from a day view or a flat timetable."""

    timetable: Timetable

    def stops_of(self, route: int) -> tuple[int, ...]: ...

    def routes_at(self, stop: int) -> Sequence[tuple[int, int]]: ...

    def instances(self, route: int) -> Sequence[int]: ...

    def departures(self, route: int, i: int) -> Sequence[int]: ...

    def arr(self, route: int, packed: int, i: int) -> int: ...

    def dep(self, route: int, packed: int, i: int) -> int: ...

    def transfers_at(self, route: int, packed: int, i: int) -> Sequence[tuple[int, int, int]]: ...

    def is_clipped(self, route: int, packed: int, i: int) -> bool: ...

    def trip_ref(self, route: int, packed: int) -> tuple[TripRef, int]: ...

    def order_key(self, route: int, packed: int) -> tuple[int, int]: ...

    def earliest_instance(self, route: int, i: int, t: int) -> int | None: ...


class DayViewSpace:
    """Adapts a DayView to the search."""

    def __init__(self, view: DayView):
        self.view = view
        self.timetable = view.timetable

    def stops_of(self, route: int) -> tuple[int, ...]:
        return self.timetable.routes[route].stops

    def routes_at(self, stop: int) -> Sequence[tuple[int, int]]:
        return self.timetable.routes_at_stop[stop]

    def instances(self, route: int) -> Sequence[int]:
        return self.view.instances[route]

    def departures(self, route: int, i: int) -> Sequence[int]:
        return self.view.departures(route, i)

    def arr(self, route: int, packed: int, i: int) -> int:
        return self.view.arr(route, packed, i)

    def dep(self, route: int, packed: int, i: int) -> int:
        return self.view.dep(route, packed, i)

    def transfers_at(self, route: int, packed: int, i: int) -> Sequence[tuple[int, int, int]]:
        return self.view.transfers_at(route, packed, i)

    def is_clipped(self, route: int, packed: int, i: int) -> bool:
        return (route, packed, i) in self.view.clipped

    def trip_ref(self, route: int, packed: int) -> tuple[TripRef, int]:
        return TripRef(route, packed), self.view.day(packed)

    def order_key(self, route: int, packed: int) -> tuple[int, int]:
        return (route, packed)

    def earliest_instance(self, route: int, i: int, t: int) -> int | None:
        return self.view.earliest_instance(route, i, t)


# ---------------------------------------------------------------------------
# Search
# ---------------------------------------------------------------------------


@dataclass(eq=False)
class _Segment:
    route: int
    packed: int
    board: int
    cap: int
    n: int
    tau: int
    parent: _Segment | None = None
    parent_exit: int = 0
    walk: int = 0  # footpath from the source to the boarding stop


@dataclass(eq=False)
class _Label:
    segment: _Segment
    exit: int
    walk: int  # footpath from the exit stop to the destination
    departure: int
    arrival: int
    n: int

    @property
    def criteria(self) -> tuple[int, int, int]:
        return (self.departure, self.arrival, self.n)


@dataclass
class SearchState:
    """Mutable state of one query; labels keep the parent links for reconstruction."""

    space: InstanceSpace
    source: int
    destination: int
    max_transfers: int
    reached: Reached
    targets: dict[int, list[tuple[int, int]]] = field(default_factory=dict)
    best: list[int] = field(default_factory=list)
    labels: list[_Label] = field(default_factory=list)
    truncated: bool = False
    rounds: int = 0
    segments: int = 0

    def __post_init__(self) -> None:
        tt = self.space.timetable
        targets: defaultdict[int, list[tuple[int, int]]] = defaultdict(list)
        for r, i in self.space.routes_at(self.destination):
            if i >= 1:
                targets[r].append((i, 0))
        for x, walk in tt.footpaths_to[self.destination]:
            for r, i in self.space.routes_at(x):
                if i >= 1:
                    targets[r].append((i, walk))
        self.targets = {r: sorted(v) for r, v in targets.items()}
        self.best = [INFINITY] * (self.max_transfers + 2)

    # ── rounds ──

    def run(self, tau: int, starts: Sequence[tuple[int, int, int, int]]) -> None:
        """One search from departure *tau*; starts are (route, packed, board index, source walk)."""
        queue: list[_Segment] = []
        for route, packed, board, walk in starts:
            self._enqueue(queue, route, packed, board, 0, tau, None, 0, walk)
        n = 0
        while queue:
            nxt: list[_Segment] = []
            for seg in queue:
                self._scan(seg, nxt)
            queue = nxt
            n += 1
        self.rounds = max(self.rounds, n)

    def _enqueue(
        self,
        queue: list[_Segment],
        route: int,
        packed: int,
        board: int,
        n: int,
        tau: int,
        parent: _Segment | None,
        parent_exit: int,
        walk: int,
    ) -> None:
        if self.reached.dominated(route, packed, board, n):
            return
        cap = self.reached.cap(route, packed, n, len(self.space.stops_of(route)) - 1)
        self.reached.insert(route, packed, board, n)
        self.segments += 1
        queue.append(_Segment(route, packed, board, cap, n, tau, parent, parent_exit, walk))

    def _scan(self, seg: _Segment, nxt: list[_Segment]) -> None:
        space = self.space
        route, packed, n = seg.route, seg.packed, seg.n
        for i_dst, walk in self.targets.get(route, ()):
            if seg.board < i_dst <= seg.cap:
                a = space.arr(route, packed, i_dst) + walk
                if a < self.best[n]:
                    self._record(seg, i_dst, walk, a)
        if n >= self.max_transfers:
            return
        for j in range(seg.board + 1, seg.cap + 1):
            if space.arr(route, packed, j) >= self.best[n + 1]:
                break
            if space.is_clipped(route, packed, j):
                self.truncated = True
            for to_route, to_packed, to_board in space.transfers_at(route, packed, j):
                self._enqueue(nxt, to_route, to_packed, to_board, n + 1, seg.tau, seg, j, 0)

    def _record(self, seg: _Segment, exit_index: int, walk: int, arrival: int) -> None:
        for m in range(seg.n, len(self.best)):
            if arrival < self.best[m]:
                self.best[m] = arrival
        self.labels.append(_Label(seg, exit_index, walk, seg.tau, arrival, seg.n))

    # ── results ──

    def pareto_labels(self) -> list[_Label]:
        """Non-dominated labels, first discovered kept among equal triples."""
        front: list[_Label] = []
        for label in self.labels:
            c = label.criteria
            if any(f.criteria == c or dominates(f.criteria, c) for f in front):
                continue
            front = [f for f in front if not dominates(c, f.criteria)]
            front.append(label)
        return front


def reconstruct_journey(state: SearchState, label: _Label) -> Journey:
    """Follow parent links from *label* back to the source."""
    space = state.space
    tt = space.timetable
    chain: list[tuple[_Segment, int]] = []
    seg: _Segment | None = label.segment
    exit_index = label.exit
    while seg is not None:
        chain.append((seg, exit_index))
        exit_index = seg.parent_exit
        seg = seg.parent
    chain.reverse()

    legs: list[Leg] = []
    prev: TripLeg | None = None
    for seg, exit_index in chain:
        stops = space.stops_of(seg.route)
        ref, day = space.trip_ref(seg.route, seg.packed)
        board_stop = stops[seg.board]
        departure = space.dep(seg.route, seg.packed, seg.board)
        if prev is None:
            if seg.walk:
                legs.append(FootpathLeg(state.source, board_stop, seg.walk, departure - seg.walk, departure))
        elif prev.to_stop != board_stop:
            walk = footpath_duration(tt, prev.to_stop, board_stop)
            if walk is None:
                raise VerificationError(f"no footpath {prev.to_stop}->{board_stop} behind a transfer")
            legs.append(FootpathLeg(prev.to_stop, board_stop, walk, prev.arrival, prev.arrival + walk))
        leg = TripLeg(
            trip=ref,
            day=day,
            board=seg.board,
            exit=exit_index,
            from_stop=board_stop,
            to_stop=stops[exit_index],
            departure=departure,
            arrival=space.arr(seg.route, seg.packed, exit_index),
        )
        legs.append(leg)
        prev = leg
    assert prev is not None
    if label.walk:
        legs.append(FootpathLeg(prev.to_stop, state.destination, label.walk, prev.arrival, prev.arrival + label.walk))
    return Journey(tuple(legs), label.departure, label.arrival, label.n)


def reconstruct_journeys(state: SearchState, labels: Sequence[_Label] | None = None) -> tuple[Journey, ...]:
    """Journeys for *labels* (default: the Pareto labels), sorted by (departure, arrival, transfers)."""
    labels = state.pareto_labels() if labels is None else labels
    journeys = [reconstruct_journey(state, label) for label in labels]
    journeys.sort(key=lambda j: j.criteria)
    return tuple(journeys)


# ---------------------------------------------------------------------------
# Query drivers (shared by both engines)
# ---------------------------------------------------------------------------


def _source_stops(tt: Timetable, source: int) -> list[tuple[int, int]]:
    return [(source, 0), *tt.footpaths_from[source]]


def _trivial(source: int, query_day: int, at: int) -> QueryResult:
    return QueryResult(source, source, query_day, (Journey((), at, at, 0),))


def run_earliest_arrival(
    space: InstanceSpace,
    reached: Reached,
    source: int,
    destination: int,
    departure: int,
    query_day: int,
    max_transfers: int,
) -> tuple[QueryResult, SearchState]:
    state = SearchState(space, source, destination, max_transfers, reached)
    if source == destination:
        return _trivial(source, query_day, departure), state
    starts = []
    for stop, walk in _source_stops(space.timetable, source):
        for route, i in space.routes_at(stop):
            if i > len(space.stops_of(route)) - 2:
                continue
            packed = space.earliest_instance(route, i, departure + walk)
            if packed is not None:
                starts.append((space.order_key(route, packed), i, route, packed, walk))
    starts.sort(key=lambda s: (s[0], s[1]))
    state.run(departure, [(route, packed, i, walk) for _, i, route, packed, walk in starts])
    result = QueryResult(source, destination, query_day, reconstruct_journeys(state), state.truncated)
    return result, state


def run_profile(
    space: InstanceSpace,
    reached: Reached,
    source: int,
    destination: int,
    query_day: int,
    max_transfers: int,
) -> tuple[QueryResult, SearchState]:
    state = SearchState(space, source, destination, max_transfers, reached)
    lo = query_day * SECONDS_PER_DAY
    hi = lo + SECONDS_PER_DAY
    if source == destination:
        return _trivial(source, query_day, lo), state

    candidates: list[tuple[int, tuple[int, int], int, int, int, int]] = []
    for stop, walk in _source_stops(space.timetable, source):
        for route, i in space.routes_at(stop):
            if i > len(space.stops_of(route)) - 2:
                continue
            deps = space.departures(route, i)
            refs = space.instances(route)
            for k, dep in enumerate(deps):
                tau = dep - walk
                if lo <= tau < hi:
                    candidates.append((tau, space.order_key(route, refs[k]), i, route, refs[k], walk))
    candidates.sort(key=lambda c: (-c[0], c[1], c[2]))

    k = 0
    while k < len(candidates):
        tau = candidates[k][0]
        group = []
        while k < len(candidates) and candidates[k][0] == tau:
            _, _, i, route, packed, walk = candidates[k]
            group.append((route, packed, i, walk))
            k += 1
        state.run(tau, group)

    result = QueryResult(source, destination, query_day, reconstruct_journeys(state), state.truncated)
    return result, state


def _resolve(tt: Timetable, stop: str | int) -> int:
    if isinstance(stop, int):
        if not 0 <= stop < len(tt.stops):
            return tt.resolve_stop(str(stop))
        return stop
    return tt.resolve_stop(stop)


def _emit(kind: str, engine: str, result: QueryResult, state: SearchState, elapsed: float) -> None:
    log.emit(
        "query_done",
        kind=kind,
        engine=engine,
        source=result.source,
        destination=result.destination,
        day=result.query_day,
        journeys=len(result.journeys),
        rounds=state.rounds,
        segments=state.segments,
        truncated=result.truncated,
        elapsed_s=elapsed,
    )
    log.get_run_stats().record_phase(f"{engine}_{kind}", elapsed, journeys=len(result.journeys))


def earliest_arrival_query(
    view: DayView,
    source: str | int,
    destination: str | int,
    departure: int,
    *,
    config: EngineConfig | None = None,
) -> QueryResult:
    """Pareto set of (arrival, transfers) journeys leaving *source* at or after *departure*."""
    config = config or EngineConfig()
    tt = view.timetable
    src, dst = _resolve(tt, source), _resolve(tt, destination)
    lo = view.query_day * SECONDS_PER_DAY
    if not lo <= departure < lo + SECONDS_PER_DAY:
        raise HorizonRangeError(f"departure {departure} is not on query day {view.query_day}")
    start = time.monotonic()
    result, state = run_earliest_arrival(
        DayViewSpace(view), ParetoReached(config.debug_checks), src, dst, departure, view.query_day, config.max_transfers
    )
    if config.debug_checks:
        for journey in result.journeys:
            check_journey(tt, journey, src, dst)
    _emit("earliest_arrival", "full", result, state, time.monotonic() - start)
    return result


def profile_query(
    view: DayView,
    source: str | int,
    destination: str | int,
    query_day: int | None = None,
    *,
    config: EngineConfig | None = None,
) -> QueryResult:
    """All Pareto-optimal (departure, arrival, transfers) journeys departing during the view's query day."""
    config = config or EngineConfig()
    tt = view.timetable
    if query_day is not None and query_day != view.query_day:
        raise HorizonRangeError(f"view is for day {view.query_day}, not {query_day}")
    src, dst = _resolve(tt, source), _resolve(tt, destination)
    start = time.monotonic()
    result, state = run_profile(
        DayViewSpace(view), ParetoReached(config.debug_checks), src, dst, view.query_day, config.max_transfers
    )
    if config.debug_checks:
        for journey in result.journeys:
            check_journey(tt, journey, src, dst)
    _emit("profile", "full", result, state, time.monotonic() - start)
    return result


# ---------------------------------------------------------------------------
# Journey validation
# ---------------------------------------------------------------------------


def check_journey(timetable: Timetable, journey: Journey, source: int, destination: int) -> None:
    """Raise ``VerificationError`` unless *journey* is a feasible chain from *source* to *destination*."""
    tt = timetable
    legs = journey.legs
    if not legs:
        if source != destination or journey.arrival != journey.departure or journey.n_transfers:
            raise VerificationError("empty journey must be a zero-length trip to the source itself")
        return
    trip_legs = journey.trip_legs
    if journey.n_transfers != len(trip_legs) - 1:
        raise VerificationError("transfer count does not match the trip legs")

    position = source
    clock = journey.departure
    prev: TripLeg | None = None
    for leg in legs:
        if isinstance(leg, FootpathLeg):
            if leg.from_stop != position:
                raise VerificationError(f"footpath starts at {leg.from_stop}, traveller is at {position}")
            if footpath_duration(tt, leg.from_stop, leg.to_stop) != leg.duration:
                raise VerificationError(f"no footpath {leg.from_stop}->{leg.to_stop} of {leg.duration}s")
            position = leg.to_stop
            clock = clock + leg.duration
            continue
        trip = tt.trip(leg.trip.route, leg.trip.trip_index)
        if leg.day not in trip.active_days:
            raise VerificationError(f"trip {leg.trip} does not run on day {leg.day}")
        if not 0 <= leg.board < leg.exit < len(trip.stops) or leg.board > len(trip.stops) - 2:
            raise VerificationError(f"bad board/exit {leg.board}/{leg.exit} on {leg.trip}")
        base = leg.day * SECONDS_PER_DAY
        if leg.departure != base + trip.dep[leg.board] or leg.arrival != base + trip.arr[leg.exit]:
            raise VerificationError(f"leg times of {leg.trip} differ from the timetable")
        if trip.stops[leg.board] != position:
            raise VerificationError(f"boarding at {trip.stops[leg.board]}, traveller is at {position}")
        if prev is not None and prev.to_stop == position:
            clock = prev.arrival + tt.change_time(position, prev.trip.route, leg.trip.route)
        if clock > leg.departure:
            raise VerificationError(f"cannot catch {leg.trip}: ready at {clock}, departs {leg.departure}")
        position = trip.stops[leg.exit]
        clock = leg.arrival
        prev = leg
    if position != destination:
        raise VerificationError(f"journey ends at {position}, not {destination}")
    if clock != journey.arrival:
        raise VerificationError(f"journey arrives {clock}, reports {journey.arrival}")


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------


def iso_time(timetable: Timetable, t: int) -> str:
    """Absolute seconds as a local ISO-8601 timestamp from the horizon's start date."""
    start = datetime.combine(timetable.start_date, datetime.min.time())
    return (start + timedelta(seconds=t)).isoformat()


def leg_to_dict(timetable: Timetable, leg: Leg) -> dict:
    stops = timetable.stops
    if isinstance(leg, TripLeg):
        trip = timetable.trip(leg.trip.route, leg.trip.trip_index)
        return {
            "type": "trip",
            "route": leg.trip.route,
            "trip": leg.trip.trip_index,
            "label": trip.label,
            "day": leg.day,
            "from": stops[leg.from_stop].id,
            "to": stops[leg.to_stop].id,
            "board": leg.board,
            "exit": leg.exit,
            "departure": iso_time(timetable, leg.departure),
            "arrival": iso_time(timetable, leg.arrival),
        }
    return {
        "type": "walk",
        "from": stops[leg.from_stop].id,
        "to": stops[leg.to_stop].id,
        "duration": leg.duration,
        "departure": iso_time(timetable, leg.departure),
        "arrival": iso_time(timetable, leg.arrival),
    }


def journey_to_dict(timetable: Timetable, journey: Journey) -> dict:
    return {
        "departure": iso_time(timetable, journey.departure),
        "arrival": iso_time(timetable, journey.arrival),
        "transfers": journey.n_transfers,
        "legs": [leg_to_dict(timetable, leg) for leg in journey.legs],
    }
