"""Canonical line-delimited JSON timetable format.

Line 1 is the header ``{"version":1,"horizon_days":D,"start_date":...}``;
every further line is one stop, footpath, route, trip or change_override
record. Writing is deterministic and ``load(save(T)) == T``.
"""

from __future__ import annotations

import json
from pathlib import Path

from pydantic import ValidationError

from tbhorizon import log
from tbhorizon.errors import (
    ErrorContext,
    FeedLoadError,
    FeedRecordError,
    HorizonRangeError,
    InvariantError,
    SchemaError,
)
from tbhorizon.model import DayBitset, Footpath, Route, Stop, Timetable, Trip
from tbhorizon.preprocess import partition_routes
from tbhorizon.schemas import (
    FEED_RECORD_ADAPTER,
    ChangeOverrideRecord,
    FeedHeader,
    FootpathRecord,
    RouteRecord,
    StopRecord,
    TripRecord,
)


def parse_days(days: str | list[int], horizon_days: int, ctx: ErrorContext) -> DayBitset:
    """Day string ('0'/'1', bit 0 first) or day list to a bit set of the horizon's length."""
    try:
        if isinstance(days, str):
            bits = DayBitset.from_string(days)
            if bits.length != horizon_days:
                raise SchemaError(f"day string has length {bits.length}, horizon is {horizon_days}", ctx)
            return bits
        return DayBitset.from_days(days, horizon_days)
    except HorizonRangeError as exc:
        raise SchemaError(exc.message, ctx) from exc


def dumps_canonical(timetable: Timetable) -> str:
    tt = timetable
    lines = [
        FeedHeader(horizon_days=tt.horizon_days, start_date=tt.start_date).model_dump_json(),
    ]
    for stop in tt.stops:
        lines.append(StopRecord(id=stop.id, name=stop.name, min_change_time=stop.min_change_time).model_dump_json())
    for fp in tt.footpaths:
        lines.append(
            FootpathRecord(
                from_stop=tt.stops[fp.from_stop].id, to_stop=tt.stops[fp.to_stop].id, duration=fp.duration
            ).model_dump_json(by_alias=True)
        )
    for r, route in enumerate(tt.routes):
        stop_ids = [tt.stops[s].id for s in route.stops]
        lines.append(RouteRecord(id=r, stops=stop_ids).model_dump_json())
    for r, route in enumerate(tt.routes):
        stop_ids = [tt.stops[s].id for s in route.stops]
        for trip in route.trips:
            lines.append(
                TripRecord(
                    route=r,
                    label=trip.label,
                    stops=stop_ids,
                    arr=list(trip.arr),
                    dep=list(trip.dep),
                    days=trip.active_days.to_string(),
                ).model_dump_json()
            )
    for (s, r_from, r_to), seconds in sorted(tt.change_overrides.items()):
        lines.append(
            ChangeOverrideRecord(
                stop=tt.stops[s].id, from_route=r_from, to_route=r_to, seconds=seconds
            ).model_dump_json()
        )
    return "\n".join(lines) + "\n"


def save_canonical(timetable: Timetable, path: Path) -> Path:
    path = Path(path)
    path.write_text(dumps_canonical(timetable), encoding="utf-8")
    return path


def loads_canonical(text: str, source: str = "<string>") -> Timetable:
    """Parse canonical feed text; *source* names the file in error messages."""
    lines = text.splitlines()
    if not lines or not lines[0].strip():
        raise SchemaError("missing header record", ErrorContext(file=source, line=1))
    try:
        header = FeedHeader.model_validate(json.loads(lines[0]))
    except (json.JSONDecodeError, ValidationError) as exc:
        raise SchemaError(f"bad header: {exc}", ErrorContext(file=source, line=1)) from exc
    horizon = header.horizon_days

    stops: list[Stop] = []
    stop_index: dict[str, int] = {}
    footpaths: list[Footpath] = []
    route_stops: list[tuple[int, ...]] = []
    route_trips: list[list[Trip]] = []
    unrouted: list[Trip] = []
    overrides: dict[tuple[int, int, int], int] = {}
    pending_overrides: list[tuple[int, ChangeOverrideRecord]] = []

    def _stop(stop_id: str, ctx: ErrorContext) -> int:
        try:
            return stop_index[stop_id]
        except KeyError:
            raise FeedRecordError(f"unknown stop {stop_id!r}", ctx) from None

    for lineno, raw in enumerate(lines[1:], start=2):
        if not raw.strip():
            continue
        ctx = ErrorContext(file=source, line=lineno)
        try:
            record = FEED_RECORD_ADAPTER.validate_python(json.loads(raw))
        except (json.JSONDecodeError, ValidationError) as exc:
            raise SchemaError(f"invalid record: {exc}", ctx) from exc

        try:
            if isinstance(record, StopRecord):
                if record.id in stop_index:
                    raise SchemaError(f"duplicate stop {record.id!r}", ctx)
                stop_index[record.id] = len(stops)
                stops.append(Stop(record.id, record.name, record.min_change_time))
            elif isinstance(record, FootpathRecord):
                footpaths.append(
                    Footpath(_stop(record.from_stop, ctx), _stop(record.to_stop, ctx), record.duration)
                )
            elif isinstance(record, RouteRecord):
                if record.id != len(route_stops):
                    raise SchemaError(f"route ids must be consecutive, expected {len(route_stops)}", ctx)
                route_stops.append(tuple(_stop(s, ctx) for s in record.stops))
                route_trips.append([])
            elif isinstance(record, TripRecord):
                trip = Trip(
                    stops=tuple(_stop(s, ctx) for s in record.stops),
                    arr=tuple(record.arr),
                    dep=tuple(record.dep),
                    active_days=parse_days(record.days, horizon, ctx),
                    label=record.label,
                )
                if record.route is None:
                    unrouted.append(trip)
                elif record.route >= len(route_stops):
                    raise FeedRecordError(f"trip references undeclared route {record.route}", ctx)
                elif route_stops[record.route] != trip.stops:
                    raise SchemaError(f"trip stops differ from route {record.route}", ctx)
                else:
                    route_trips[record.route].append(trip)
            elif isinstance(record, ChangeOverrideRecord):
                pending_overrides.append((lineno, record))
        except InvariantError as exc:
            raise SchemaError(exc.message, ctx) from exc

    routes = [Route(stops_, tuple(trips_)) for stops_, trips_ in zip(route_stops, route_trips)]
    routes.extend(partition_routes(unrouted))
    for lineno, record in pending_overrides:
        ctx = ErrorContext(file=source, line=lineno)
        if record.from_route >= len(routes) or record.to_route >= len(routes):
            raise FeedRecordError("change override references an unknown route", ctx)
        overrides[(_stop(record.stop, ctx), record.from_route, record.to_route)] = record.seconds

    timetable = Timetable(
        horizon_days=horizon,
        stops=tuple(stops),
        footpaths=tuple(footpaths),
        routes=tuple(routes),
        change_overrides=overrides,
        start_date=header.start_date,
    )
    timetable.validate()
    return timetable


def load_canonical(path: Path) -> Timetable:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise FeedLoadError(f"cannot read canonical feed: {exc.strerror or exc}", ErrorContext(file=str(path))) from exc
    timetable = loads_canonical(text, source=str(path))
    log.emit(
        "feed_loaded",
        format="canonical",
        path=str(path),
        days=timetable.horizon_days,
        stops=len(timetable.stops),
        routes=len(timetable.routes),
        trips=timetable.n_trips,
    )
    return timetable
