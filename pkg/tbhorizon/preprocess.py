"""Route partition, transfer computation and transfer reduction with day bit sets.

A transfer from trip t (exit index e) to trip u (board index b) with day shift
Δ is valid on source day d when t runs on d, u runs on d + Δ and u is the
earliest instance of its route reachable from (t, e) on that day. Reduction
then keeps, per day, only the transfers that can improve some arrival.
"""

from __future__ import annotations

import time
from bisect import bisect_left
from collections import OrderedDict
from dataclasses import dataclass, field, replace
from datetime import date
from typing import Iterable, Iterator, Mapping, Sequence

from tbhorizon import log
from tbhorizon.errors import ErrorContext, InvariantError
from tbhorizon.model import (
    INFINITY,
    SECONDS_PER_DAY,
    TRIP_INDEX_BITS,
    DayBitset,
    Footpath,
    Route,
    Stop,
    Timetable,
    Trip,
)
from tbhorizon.parallel import map_trips
from tbhorizon.schemas import DEFAULT_START_DATE, EngineConfig


@dataclass(frozen=True, slots=True)
class Transfer:
    """(from_route, from_trip) exits at ``from_index``; (to_route, to_trip) boarded at ``to_index``."""

    from_route: int
    from_trip: int
    from_index: int
    to_route: int
    to_trip: int
    to_index: int
    day_shift: int
    valid_days: DayBitset

    @property
    def sort_key(self) -> tuple[int, int, int, int]:
        return (self.to_route, self.day_shift, self.to_trip, self.to_index)


# Per trip: one tuple of transfers per exit stop index.
TripRows = tuple[tuple[Transfer, ...], ...]


@dataclass(frozen=True)
class TransferSet:
    """Transfers of every trip, keyed by (route, trip index).

    Only trips with at least one transfer have a row; keys are kept sorted so
    iteration and serialization are deterministic.
    """

    horizon_days: int
    reduced: bool
    rows: Mapping[tuple[int, int], TripRows] = field(default_factory=dict)

    @classmethod
    def from_rows(
        cls, horizon_days: int, reduced: bool, rows: Mapping[tuple[int, int], TripRows]
    ) -> TransferSet:
        kept = {k: rows[k] for k in sorted(rows) if any(rows[k])}
        return cls(horizon_days, reduced, kept)

    def row(self, route: int, trip: int) -> TripRows:
        return self.rows.get((route, trip), ())

    def at(self, route: int, trip: int, index: int) -> tuple[Transfer, ...]:
        row = self.rows.get((route, trip))
        if row is None or index >= len(row):
            return ()
        return row[index]

    def __iter__(self) -> Iterator[Transfer]:
        for row in self.rows.values():
            for per_stop in row:
                yield from per_stop

    def count(self) -> int:
        return sum(len(per_stop) for row in self.rows.values() for per_stop in row)

    def count_day_instances(self) -> int:
        """Transfers counted once per valid source day."""
        return sum(tr.valid_days.count() for tr in self)

    def with_rows(
        self, updates: Mapping[tuple[int, int], TripRows], keep: Iterable[tuple[int, int]]
    ) -> TransferSet:
        """New set holding the rows of *keep* from self plus *updates*."""
        rows: dict[tuple[int, int], TripRows] = {}
        for key in keep:
            if key in self.rows:
                rows[key] = self.rows[key]
        rows.update(updates)
        return TransferSet.from_rows(self.horizon_days, self.reduced, rows)


@dataclass
class PreprocessReport:
    """Both transfer sets of one preprocessing run, with timings."""

    full: TransferSet
    reduced: TransferSet
    compute_s: float = 0.0
    reduce_s: float = 0.0

    @property
    def total_transfers(self) -> int:
        return self.full.count()

    @property
    def reduced_transfers(self) -> int:
        return self.reduced.count()

    @property
    def ratio(self) -> float:
        total = self.total_transfers
        return self.reduced_transfers / total if total else 0.0

    def to_dict(self) -> dict:
        return {
            "total_transfers": self.total_transfers,
            "reduced_transfers": self.reduced_transfers,
            "ratio": self.ratio,
            "total_day_instances": self.full.count_day_instances(),
            "reduced_day_instances": self.reduced.count_day_instances(),
            "compute_s": self.compute_s,
            "reduce_s": self.reduce_s,
        }


# ---------------------------------------------------------------------------
# Route partition
# ---------------------------------------------------------------------------


def partition_routes(trips: Iterable[Trip]) -> tuple[Route, ...]:
    """Split trips into routes whose trips never overtake each other.

    Trips are grouped by stop sequence (groups in first-appearance order),
    sorted by (first departure, last arrival, input position) and appended to
    the first route of their group they fit behind.
    """
    groups: OrderedDict[tuple[int, ...], list[tuple[int, Trip]]] = OrderedDict()
    for pos, trip in enumerate(trips):
        groups.setdefault(trip.stops, []).append((pos, trip))

    routes: list[Route] = []
    for stops, members in groups.items():
        members.sort(key=lambda item: (item[1].dep[0], item[1].arr[-1], item[0]))
        chains: list[list[Trip]] = []
        for _, trip in members:
            for chain in chains:
                if chain[-1].precedes(trip) and trip.precedes(chain[0], SECONDS_PER_DAY):
                    chain.append(trip)
                    break
            else:
                chains.append([trip])
        routes.extend(Route(stops, tuple(chain)) for chain in chains)

    log.emit("routes_partitioned", groups=len(groups), routes=len(routes))
    return tuple(routes)


def build_timetable(
    horizon_days: int,
    stops: Sequence[Stop],
    footpaths: Sequence[Footpath],
    trips: Iterable[Trip],
    *,
    start_date: date = DEFAULT_START_DATE,
) -> Timetable:
    """Partition *trips* into routes and return the validated timetable."""
    timetable = Timetable(
        horizon_days=horizon_days,
        stops=tuple(stops),
        footpaths=tuple(footpaths),
        routes=partition_routes(trips),
        start_date=start_date,
    )
    timetable.validate()
    return timetable


# ---------------------------------------------------------------------------
# Transfer computation
# ---------------------------------------------------------------------------


def compute_trip_transfers(timetable: Timetable, route_id: int, trip_index: int, delta_max: int) -> TripRows:
    """All transfers out of one trip, each to the earliest reachable instance per source day."""
    route = timetable.routes[route_id]
    trip = route.trips[trip_index]
    horizon = timetable.horizon_days
    days = trip.active_days.bits
    per_stop: list[list[Transfer]] = [[] for _ in trip.stops]

    for e in range(1, len(trip.stops)):
        s = trip.stops[e]
        a = trip.arr[e]
        out = per_stop[e]
        targets = [(s, None)]
        targets.extend(timetable.footpaths_from[s])
        for target, walk in targets:
            for r2, b in timetable.routes_at_stop[target]:
                route2 = timetable.routes[r2]
                if b > len(route2.stops) - 2 or not route2.trips:
                    continue
                ready = a + (walk if walk is not None else timetable.change_time(s, route_id, r2))
                deps = route2.departures[b]
                remaining = days
                for delta in range(delta_max + 1):
                    k = bisect_left(deps, ready - delta * SECONDS_PER_DAY)
                    for v in range(k, len(deps)):
                        hit = remaining & (route2.trips[v].active_days.bits >> delta)
                        if hit:
                            out.append(
                                Transfer(route_id, trip_index, e, r2, v, b, delta, DayBitset(hit, horizon))
                            )
                            remaining &= ~hit
                            if not remaining:
                                break
                    if not remaining:
                        break
        out.sort(key=lambda tr: tr.sort_key)

    return tuple(tuple(x) for x in per_stop)


def compute_transfers(timetable: Timetable, config: EngineConfig | None = None) -> TransferSet:
    """Full transfer set of *timetable*."""
    config = config or EngineConfig()
    start = time.monotonic()
    result = map_trips(
        lambda key: compute_trip_transfers(timetable, key[0], key[1], config.delta_max),
        list(timetable.trip_keys()),
        workers=config.workers,
        phase="compute_transfers",
    )
    transfers = TransferSet.from_rows(timetable.horizon_days, False, result.rows)
    elapsed = time.monotonic() - start
    log.emit("transfers_computed", transfers=transfers.count(), trips=timetable.n_trips, elapsed_s=elapsed)
    log.get_run_stats().record_phase("compute_transfers", elapsed, transfers=transfers.count())
    return transfers


# ---------------------------------------------------------------------------
# Transfer reduction
# ---------------------------------------------------------------------------


class _Labels:
    """Earliest arrival and earliest change-availability per stop, for one trip and one day pattern."""

    def __init__(self, timetable: Timetable):
        self.timetable = timetable
        self.arrival: dict[int, int] = {}
        self.ready: dict[tuple[int, int], int] = {}
        self._routes_through: dict[int, tuple[int, ...]] = {}

    def _routes(self, stop: int) -> tuple[int, ...]:
        found = self._routes_through.get(stop)
        if found is None:
            found = tuple(sorted({r for r, _ in self.timetable.routes_at_stop[stop]}))
            self._routes_through[stop] = found
        return found

    def _relax_ready(self, key: tuple[int, int], t: int) -> bool:
        if t < self.ready.get(key, INFINITY):
            self.ready[key] = t
            return True
        return False

    def _relax_arrival(self, stop: int, t: int) -> bool:
        if t < self.arrival.get(stop, INFINITY):
            self.arrival[stop] = t
            return True
        return False

    def arrive(self, stop: int, t: int, from_route: int) -> bool:
        """Record being at *stop* at *t* off a vehicle of *from_route*; True if any label improved."""
        tt = self.timetable
        improved = self._relax_arrival(stop, t)
        if stop in tt.override_stops:
            for r_to in self._routes(stop):
                improved |= self._relax_ready((stop, r_to), t + tt.change_time(stop, from_route, r_to))
        else:
            improved |= self._relax_ready((stop, -1), t + tt.stops[stop].min_change_time)
        for target, walk in tt.footpaths_from[stop]:
            t2 = t + walk
            improved |= self._relax_arrival(target, t2)
            if target in tt.override_stops:
                for r_to in self._routes(target):
                    improved |= self._relax_ready((target, r_to), t2)
            else:
                improved |= self._relax_ready((target, -1), t2)
        return improved


def _reduce_pass(timetable: Timetable, route_id: int, trip: Trip, transfers: Sequence[Transfer]) -> list[int]:
    """Indices of *transfers* kept for one day pattern."""
    by_exit: dict[int, list[int]] = {}
    for i, tr in enumerate(transfers):
        by_exit.setdefault(tr.from_index, []).append(i)

    labels = _Labels(timetable)
    reached: dict[int, list[tuple[int, int]]] = {}
    kept: list[int] = []

    for e in range(len(trip.stops) - 1, 0, -1):
        labels.arrive(trip.stops[e], trip.arr[e], route_id)
        for i in by_exit.get(e, ()):
            tr = transfers[i]
            route2 = timetable.routes[tr.to_route]
            target = route2.trips[tr.to_trip]
            shift = tr.day_shift * SECONDS_PER_DAY
            packed = (tr.day_shift << TRIP_INDEX_BITS) | tr.to_trip
            cap = len(route2.stops) - 1
            for p2, b2 in reached.get(tr.to_route, ()):
                if p2 <= packed and b2 < cap:
                    cap = b2
            improved = False
            for k in range(tr.to_index + 1, cap + 1):
                improved |= labels.arrive(route2.stops[k], target.arr[k] + shift, tr.to_route)
            reached.setdefault(tr.to_route, []).append((packed, tr.to_index))
            if improved:
                kept.append(i)
    return kept


def _day_classes(days: int, masks: Iterable[int]) -> list[int]:
    """Split *days* into classes whose days agree on membership in every mask."""
    classes = [days] if days else []
    for m in masks:
        split: list[int] = []
        for c in classes:
            inside = c & m
            outside = c & ~m
            if inside:
                split.append(inside)
            if outside:
                split.append(outside)
        classes = split
    return classes


def reduce_trip_transfers(timetable: Timetable, route_id: int, trip_index: int, row: TripRows) -> TripRows:
    """Reduced row of one trip: each transfer keeps the days on which it improves a label."""
    trip = timetable.routes[route_id].trips[trip_index]
    flat = [tr for per_stop in row for tr in per_stop]
    if not flat:
        return row

    kept_bits = [0] * len(flat)
    for c in _day_classes(trip.active_days.bits, (tr.valid_days.bits for tr in flat)):
        active = [i for i, tr in enumerate(flat) if tr.valid_days.bits & c]
        if not active:
            continue
        for j in _reduce_pass(timetable, route_id, trip, [flat[i] for i in active]):
            kept_bits[active[j]] |= c

    horizon = timetable.horizon_days
    out: list[list[Transfer]] = [[] for _ in row]
    for tr, bits in zip(flat, kept_bits):
        if bits:
            out[tr.from_index].append(replace(tr, valid_days=DayBitset(bits, horizon)))
    return tuple(tuple(x) for x in out)


def reduce_transfers(
    timetable: Timetable, full: TransferSet, config: EngineConfig | None = None
) -> TransferSet:
    """Reduced transfer set: query results stay identical to those over *full*."""
    config = config or EngineConfig()
    start = time.monotonic()
    result = map_trips(
        lambda key: reduce_trip_transfers(timetable, key[0], key[1], full.rows[key]),
        list(full.rows),
        workers=config.workers,
        phase="reduce_transfers",
    )
    reduced = TransferSet.from_rows(timetable.horizon_days, True, result.rows)
    elapsed = time.monotonic() - start
    log.emit(
        "transfers_reduced",
        transfers=full.count(),
        reduced=reduced.count(),
        elapsed_s=elapsed,
    )
    log.get_run_stats().record_phase("reduce_transfers", elapsed, reduced=reduced.count())
    return reduced


def recompute_rows(
    timetable: Timetable, keys: Sequence[tuple[int, int]], *, reduce: bool, config: EngineConfig
) -> dict[tuple[int, int], TripRows]:
    """Fresh rows (reduced when *reduce*) for the trips in *keys*."""

    def _row(key: tuple[int, int]) -> TripRows:
        row = compute_trip_transfers(timetable, key[0], key[1], config.delta_max)
        return reduce_trip_transfers(timetable, key[0], key[1], row) if reduce else row

    return map_trips(_row, keys, workers=config.workers, phase="recompute").rows


def preprocess(timetable: Timetable, config: EngineConfig | None = None) -> PreprocessReport:
    """Compute and reduce the transfers of *timetable*, timing both passes."""
    config = config or EngineConfig()
    start = time.monotonic()
    full = compute_transfers(timetable, config)
    compute_s = time.monotonic() - start
    start = time.monotonic()
    reduced = reduce_transfers(timetable, full, config)
    reduce_s = time.monotonic() - start
    return PreprocessReport(full=full, reduced=reduced, compute_s=compute_s, reduce_s=reduce_s)


# ---------------------------------------------------------------------------
# Checks
# ---------------------------------------------------------------------------


def footpath_duration(timetable: Timetable, from_stop: int, to_stop: int) -> int | None:
    for target, walk in timetable.footpaths_from[from_stop]:
        if target == to_stop:
            return walk
    return None


def check_transfer(timetable: Timetable, tr: Transfer) -> None:
    """Raise ``InvariantError`` unless *tr* is feasible and its days are valid for both trips."""
    ctx = ErrorContext(trip=f"{tr.from_route}/{tr.from_trip}", extra={"to": f"{tr.to_route}/{tr.to_trip}"})
    source = timetable.trip(tr.from_route, tr.from_trip)
    target = timetable.trip(tr.to_route, tr.to_trip)
    if not 1 <= tr.from_index < len(source.stops):
        raise InvariantError(f"exit index {tr.from_index} out of range", ctx)
    if not 0 <= tr.to_index <= len(target.stops) - 2:
        raise InvariantError(f"board index {tr.to_index} out of range", ctx)
    s1 = source.stops[tr.from_index]
    s2 = target.stops[tr.to_index]
    if s1 == s2:
        need = timetable.change_time(s1, tr.from_route, tr.to_route)
    else:
        walk = footpath_duration(timetable, s1, s2)
        if walk is None:
            raise InvariantError(f"no footpath {s1}->{s2}", ctx)
        need = walk
    if source.arr[tr.from_index] + need > target.dep[tr.to_index] + tr.day_shift * SECONDS_PER_DAY:
        raise InvariantError("transfer departs before the change is possible", ctx)
    allowed = source.active_days & target.active_days.shift(-tr.day_shift)
    if not tr.valid_days or not tr.valid_days.issubset(allowed):
        raise InvariantError("transfer valid on a day one of its trips does not run", ctx)
