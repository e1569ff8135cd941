"""Timetable edits with incremental repair of the reduced transfer set.

An edit first changes the timetable structurally (pure, returns a new
timetable). Transfers are stored on their origin trip, so after the edits
every trip that could transfer into a changed route is recomputed: the trips
of every route visiting a changed route's stops or a stop with a footpath
into them. Everything else keeps its row. Routes are never deleted, so route
ids stay stable; trip indices inside a changed route may shift.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from tbhorizon import log
from tbhorizon.errors import EditRejectedError, ErrorContext, InvariantError
from tbhorizon.ingest.canonical import parse_days
from tbhorizon.model import DayBitset, Route, Timetable, Trip
from tbhorizon.preprocess import TransferSet, recompute_rows
from tbhorizon.schemas import (
    AddEditRecord,
    DelayEditRecord,
    EditRecord,
    EngineConfig,
    RemoveEditRecord,
)


@dataclass(frozen=True)
class RemoveTrip:
    """Stop running trip (route, trip) on *days*."""

    route: int
    trip: int
    days: DayBitset


@dataclass(frozen=True)
class AddTrip:
    trip: Trip


@dataclass(frozen=True)
class DelayTrip:
    """Run trip (route, trip) later on one day; *delta* is one value or one per stop."""

    route: int
    trip: int
    day: int
    delta: int | tuple[int, ...]


TimetableEdit = RemoveTrip | AddTrip | DelayTrip


@dataclass
class UpdateResult:
    timetable: Timetable
    transfers: TransferSet
    edits: int = 0
    affected: frozenset[tuple[int, int]] = field(default_factory=frozenset)
    touched_stops: frozenset[int] = field(default_factory=frozenset)
    structural_s: float = 0.0
    recompute_s: float = 0.0

    @property
    def elapsed_s(self) -> float:
        return self.structural_s + self.recompute_s

    @property
    def per_trip_s(self) -> float:
        return self.recompute_s / len(self.affected) if self.affected else 0.0


# ---------------------------------------------------------------------------
# Structural edits
# ---------------------------------------------------------------------------


def _replace_route(timetable: Timetable, route_id: int, trips: Sequence[Trip]) -> Timetable:
    routes = list(timetable.routes)
    routes[route_id] = Route(routes[route_id].stops, tuple(trips))
    return timetable.with_routes(routes)


def _remove(timetable: Timetable, edit: RemoveTrip) -> Timetable:
    trip = timetable.trip(edit.route, edit.trip)
    ctx = ErrorContext(trip=f"{edit.route}/{edit.trip}")
    if edit.days.length != timetable.horizon_days:
        raise EditRejectedError(f"day set spans {edit.days.length} days, horizon is {timetable.horizon_days}", ctx)
    if not edit.days:
        raise EditRejectedError("removal needs at least one day", ctx)
    if not edit.days.issubset(trip.active_days):
        missing = list((edit.days - trip.active_days).days())
        raise EditRejectedError(f"trip does not run on days {missing}", ctx)
    trips = list(timetable.routes[edit.route].trips)
    left = trip.active_days - edit.days
    if left:
        trips[edit.trip] = trip.with_days(left)
    else:
        del trips[edit.trip]
    return _replace_route(timetable, edit.route, trips)


def _add(timetable: Timetable, edit: AddTrip) -> Timetable:
    trip = edit.trip
    ctx = ErrorContext(trip=trip.label)
    if trip.active_days.length != timetable.horizon_days:
        raise EditRejectedError(
            f"day set spans {trip.active_days.length} days, horizon is {timetable.horizon_days}", ctx
        )
    if any(not 0 <= s < len(timetable.stops) for s in trip.stops):
        raise EditRejectedError("trip references a missing stop", ctx)
    for r, route in enumerate(timetable.routes):
        pos = route.accepts(trip)
        if pos is not None:
            trips = list(route.trips)
            trips.insert(pos, trip)
            return _replace_route(timetable, r, trips)
    return timetable.with_routes([*timetable.routes, Route(trip.stops, (trip,))])


def _delay(timetable: Timetable, edit: DelayTrip) -> Timetable:
    trip = timetable.trip(edit.route, edit.trip)
    ctx = ErrorContext(trip=f"{edit.route}/{edit.trip}", day=edit.day)
    if not 0 <= edit.day < timetable.horizon_days or edit.day not in trip.active_days:
        raise EditRejectedError(f"trip does not run on day {edit.day}", ctx)
    n = len(trip.stops)
    deltas = (edit.delta,) * n if isinstance(edit.delta, int) else tuple(edit.delta)
    if len(deltas) != n:
        raise EditRejectedError(f"{len(deltas)} delays for {n} stops", ctx)
    if min(deltas) < 0:
        raise EditRejectedError("delays must be >= 0", ctx)
    try:
        late = trip.shifted(deltas).with_days(DayBitset(1 << edit.day, timetable.horizon_days))
    except InvariantError as exc:
        raise EditRejectedError(f"delayed trip is invalid: {exc.message}", ctx) from exc
    removed = _remove(timetable, RemoveTrip(edit.route, edit.trip, DayBitset(1 << edit.day, timetable.horizon_days)))
    return _add(removed, AddTrip(late))


def _edited_stops(timetable: Timetable, edit: TimetableEdit) -> set[int]:
    if isinstance(edit, AddTrip):
        return set(edit.trip.stops)
    return set(timetable.routes[edit.route].stops) if 0 <= edit.route < len(timetable.routes) else set()


def apply_edit(timetable: Timetable, edit: TimetableEdit) -> tuple[Timetable, set[int]]:
    """Apply one edit to the timetable only; returns it and the stops whose routes changed."""
    stops = _edited_stops(timetable, edit)
    if isinstance(edit, RemoveTrip):
        return _remove(timetable, edit), stops
    if isinstance(edit, AddTrip):
        return _add(timetable, edit), stops
    if isinstance(edit, DelayTrip):
        return _delay(timetable, edit), stops
    raise EditRejectedError(f"unknown edit {edit!r}")


# ---------------------------------------------------------------------------
# Incremental repair
# ---------------------------------------------------------------------------


def affected_routes(timetable: Timetable, stops: Iterable[int]) -> set[int]:
    """Routes visiting *stops* or a stop with a footpath into them."""
    reach = set(stops)
    for s in list(reach):
        reach.update(x for x, _ in timetable.footpaths_to[s])
    return {r for s in reach for r, _ in timetable.routes_at_stop[s]}


def apply_batch(
    timetable: Timetable,
    transfers: TransferSet,
    edits: Sequence[TimetableEdit],
    *,
    config: EngineConfig | None = None,
) -> UpdateResult:
    """Apply all edits, then recompute the rows of the union of affected trips once.

    The first invalid edit aborts the batch; the inputs are never modified.
    """
    config = config or EngineConfig()
    if transfers.horizon_days != timetable.horizon_days:
        raise EditRejectedError(
            f"transfer set spans {transfers.horizon_days} days, timetable {timetable.horizon_days}"
        )
    start = time.monotonic()
    edited = timetable
    touched: set[int] = set()
    for k, edit in enumerate(edits):
        try:
            edited, stops = apply_edit(edited, edit)
        except EditRejectedError as exc:
            exc.context.extra.setdefault("edit", k)
            raise
        touched |= stops
    structural_s = time.monotonic() - start

    start = time.monotonic()
    routes = affected_routes(edited, touched)
    keys = [(r, u) for r in sorted(routes) for u in range(len(edited.routes[r].trips))]
    rows = recompute_rows(edited, keys, reduce=transfers.reduced, config=config)
    keep = [key for key in transfers.rows if key[0] not in routes]
    repaired = transfers.with_rows(rows, keep)
    recompute_s = time.monotonic() - start

    result = UpdateResult(
        timetable=edited,
        transfers=repaired,
        edits=len(edits),
        affected=frozenset(keys),
        touched_stops=frozenset(touched),
        structural_s=structural_s,
        recompute_s=recompute_s,
    )
    log.emit(
        "batch_applied",
        edits=len(edits),
        touched_stops=len(touched),
        affected_routes=len(routes),
        affected_trips=len(keys),
        structural_s=structural_s,
        recompute_s=recompute_s,
    )
    log.get_run_stats().record_phase("update", result.elapsed_s, edits=len(edits), recomputed=len(keys))
    return result


def _single(timetable: Timetable, transfers: TransferSet, edit: TimetableEdit, config: EngineConfig | None) -> UpdateResult:
    result = apply_batch(timetable, transfers, [edit], config=config)
    log.emit("update_applied", edit=type(edit).__name__, affected_trips=len(result.affected))
    return result


def remove_trip(
    timetable: Timetable,
    transfers: TransferSet,
    route: int,
    trip: int,
    days: DayBitset | Iterable[int],
    *,
    config: EngineConfig | None = None,
) -> UpdateResult:
    if not isinstance(days, DayBitset):
        days = DayBitset.from_days(days, timetable.horizon_days)
    return _single(timetable, transfers, RemoveTrip(route, trip, days), config)


def add_trip(
    timetable: Timetable, transfers: TransferSet, trip: Trip, *, config: EngineConfig | None = None
) -> UpdateResult:
    return _single(timetable, transfers, AddTrip(trip), config)


def delay_trip(
    timetable: Timetable,
    transfers: TransferSet,
    route: int,
    trip: int,
    day: int,
    delta: int | Sequence[int],
    *,
    config: EngineConfig | None = None,
) -> UpdateResult:
    """Remove (route, trip) on *day* and re-add a copy running *delta* seconds later on that day only."""
    delta = delta if isinstance(delta, int) else tuple(delta)
    return _single(timetable, transfers, DelayTrip(route, trip, day, delta), config)


# ---------------------------------------------------------------------------
# Edit streams
# ---------------------------------------------------------------------------


def edit_from_record(record: EditRecord, timetable: Timetable, ctx: ErrorContext | None = None) -> TimetableEdit:
    """Resolve a validated edit record against *timetable* (stop ids, day sets)."""
    ctx = ctx or ErrorContext()
    D = timetable.horizon_days
    if isinstance(record, RemoveEditRecord):
        return RemoveTrip(record.route, record.trip, parse_days(record.days, D, ctx))
    if isinstance(record, DelayEditRecord):
        delta = record.delta if isinstance(record.delta, int) else tuple(record.delta)
        return DelayTrip(record.route, record.trip, record.day, delta)
    if isinstance(record, AddEditRecord):
        try:
            stops = tuple(timetable.resolve_stop(s) for s in record.stops)
        except LookupError as exc:
            raise EditRejectedError(str(exc), ctx) from exc
        try:
            trip = Trip(stops, tuple(record.arr), tuple(record.dep), parse_days(record.days, D, ctx), record.label)
        except InvariantError as exc:
            raise EditRejectedError(exc.message, ctx) from exc
        return AddTrip(trip)
    raise EditRejectedError(f"unknown edit record {record!r}", ctx)


def edit_to_record(edit: TimetableEdit, timetable: Timetable) -> dict:
    if isinstance(edit, RemoveTrip):
        return RemoveEditRecord(route=edit.route, trip=edit.trip, days=list(edit.days.days())).model_dump()
    if isinstance(edit, DelayTrip):
        delta = edit.delta if isinstance(edit.delta, int) else list(edit.delta)
        return DelayEditRecord(route=edit.route, trip=edit.trip, day=edit.day, delta=delta).model_dump()
    trip = edit.trip
    return AddEditRecord(
        label=trip.label,
        stops=[timetable.stops[s].id for s in trip.stops],
        arr=list(trip.arr),
        dep=list(trip.dep),
        days=trip.active_days.to_string(),
    ).model_dump()


DELAY_STEP = 60
MAX_DELAY = 1800


def random_delays(timetable: Timetable, n: int, seed: int) -> list[DelayTrip]:
    """*n* delays of a uniformly chosen trip instance by a multiple of a minute up to 30 minutes.

    Edits are drawn one after the other against the timetable as changed by
    the previous ones, so trip indices stay valid when applied in order.
    """
    rng = np.random.default_rng(seed)
    scratch = timetable
    edits: list[DelayTrip] = []
    for _ in range(n):
        keys = list(scratch.trip_keys())
        if not keys:
            break
        r, u = keys[int(rng.integers(len(keys)))]
        days = list(scratch.trip(r, u).active_days.days())
        day = days[int(rng.integers(len(days)))]
        delta = DELAY_STEP * int(rng.integers(1, MAX_DELAY // DELAY_STEP + 1))
        edit = DelayTrip(r, u, day, delta)
        scratch, _ = apply_edit(scratch, edit)
        edits.append(edit)
    return edits
