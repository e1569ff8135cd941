"""GTFS subset loader.

Reads stops, trips, stop_times, calendar/calendar_dates and optional transfers
with pandas. Trips are regrouped by stop sequence and no-overtaking order when
the timetable is built; GTFS route ids only serve to place route-specific
change times from transfers.txt.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from datetime import date, datetime, timedelta
from pathlib import Path

import pandas as pd

from tbhorizon import log
from tbhorizon.errors import ErrorContext, FeedLoadError, FeedRecordError, InvariantError, SchemaError
from tbhorizon.model import DayBitset, Footpath, Route, Stop, Timetable, Trip
from tbhorizon.preprocess import partition_routes

WEEKDAYS = ("monday", "tuesday", "wednesday", "thursday", "friday", "saturday", "sunday")

_COLUMNS = {
    "stops.txt": ("stop_id",),
    "trips.txt": ("trip_id", "service_id"),
    "stop_times.txt": ("trip_id", "arrival_time", "departure_time", "stop_id", "stop_sequence"),
    "calendar.txt": ("service_id", *WEEKDAYS, "start_date", "end_date"),
    "calendar_dates.txt": ("service_id", "date", "exception_type"),
    "transfers.txt": ("from_stop_id", "to_stop_id", "transfer_type"),
}


@dataclass
class GtfsLoadReport:
    """What the loader dropped or merged along the way."""

    gtfs_trips: int = 0
    trips: int = 0
    rejected_trips: list[tuple[str, str]] = field(default_factory=list)  # (trip_id, reason)
    trips_without_days: int = 0
    skipped_transfers: int = 0


def parse_gtfs_time(text: str) -> int:
    """'H:MM:SS' / 'HH:MM:SS' (hours may exceed 23) to seconds."""
    parts = text.strip().split(":")
    if len(parts) != 3:
        raise ValueError(f"bad GTFS time {text!r}")
    h, m, s = (int(p) for p in parts)
    if h < 0 or not 0 <= m < 60 or not 0 <= s < 60:
        raise ValueError(f"bad GTFS time {text!r}")
    return h * 3600 + m * 60 + s


def parse_gtfs_date(text: str) -> date:
    return datetime.strptime(text.strip(), "%Y%m%d").date()


def _read(directory: Path, name: str, *, required: bool = True) -> pd.DataFrame | None:
    path = directory / name
    if not path.is_file():
        if required:
            raise FeedLoadError(f"missing required file {name}", ErrorContext(file=str(path)))
        return None
    try:
        df = pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8-sig", skipinitialspace=True)
    except (pd.errors.ParserError, UnicodeDecodeError, OSError) as exc:
        raise FeedLoadError(f"cannot parse {name}: {exc}", ErrorContext(file=str(path))) from exc
    df.columns = [c.strip() for c in df.columns]
    missing = [c for c in _COLUMNS[name] if c not in df.columns]
    if missing:
        raise SchemaError(f"{name} lacks columns {missing}", ErrorContext(file=str(path)))
    return df


def _line(row_index: int) -> int:
    return int(row_index) + 2  # header is line 1


def service_day_bits(
    calendar: pd.DataFrame | None,
    calendar_dates: pd.DataFrame | None,
    start: date,
    horizon_days: int,
    directory: Path,
) -> dict[str, int]:
    """Service id to horizon day mask; calendar first, then calendar_dates exceptions."""
    bits: dict[str, int] = {}
    if calendar is not None:
        for idx, row in calendar.iterrows():
            ctx = ErrorContext(file=str(directory / "calendar.txt"), line=_line(idx))
            try:
                first = parse_gtfs_date(row["start_date"])
                last = parse_gtfs_date(row["end_date"])
                flags = [row[d].strip() == "1" for d in WEEKDAYS]
            except ValueError as exc:
                raise FeedRecordError(str(exc), ctx) from exc
            mask = 0
            for d in range(horizon_days):
                day = start + timedelta(days=d)
                if first <= day <= last and flags[day.weekday()]:
                    mask |= 1 << d
            bits[row["service_id"]] = bits.get(row["service_id"], 0) | mask
    if calendar_dates is not None:
        for idx, row in calendar_dates.iterrows():
            ctx = ErrorContext(file=str(directory / "calendar_dates.txt"), line=_line(idx))
            try:
                d = (parse_gtfs_date(row["date"]) - start).days
                kind = int(row["exception_type"])
            except ValueError as exc:
                raise FeedRecordError(str(exc), ctx) from exc
            sid = row["service_id"]
            mask = bits.get(sid, 0)
            if 0 <= d < horizon_days:
                if kind == 1:
                    mask |= 1 << d
                elif kind == 2:
                    mask &= ~(1 << d)
                else:
                    raise FeedRecordError(f"exception_type must be 1 or 2, got {kind}", ctx)
            bits[sid] = mask
    return bits


def _trip_times(group: pd.DataFrame) -> tuple[list[int], list[int]]:
    arr: list[int] = []
    dep: list[int] = []
    for a_text, d_text in zip(group["arrival_time"], group["departure_time"]):
        a_text = a_text.strip() or d_text.strip()
        d_text = d_text.strip() or a_text
        if not a_text:
            raise ValueError("stop time without arrival and departure")
        arr.append(parse_gtfs_time(a_text))
        dep.append(parse_gtfs_time(d_text))
    return arr, dep


def _route_change_overrides(
    changes: list[tuple[int, str, str, int]],
    routes: tuple[Route, ...],
    trip_route: dict[str, str],
) -> dict[tuple[int, int, int], int]:
    """Spread GTFS route-to-route change times over the built routes.

    Built routes regroup GTFS trips, so a GTFS route_id maps to every built
    route holding one of its trips (found through the trip label). An empty
    from/to route_id matches any route. Later rows win.
    """
    if not changes:
        return {}
    gtfs_routes = [{trip_route.get(t.label, "") for t in route.trips} for route in routes]
    overrides: dict[tuple[int, int, int], int] = {}
    for stop, from_route, to_route, seconds in changes:
        serving = [r for r, route in enumerate(routes) if stop in route.stops]
        for r_from in serving:
            if from_route and from_route not in gtfs_routes[r_from]:
                continue
            for r_to in serving:
                if to_route and to_route not in gtfs_routes[r_to]:
                    continue
                overrides[(stop, r_from, r_to)] = seconds
    return overrides


def load_gtfs_report(
    directory: Path,
    start_date: date | str,
    horizon_days: int,
    *,
    default_change_time: int = 0,
    merge: bool = True,
) -> tuple[Timetable, GtfsLoadReport]:
    """Load a GTFS directory over [start_date, start_date + horizon_days).

    With ``merge`` (the default) GTFS trips sharing stops and times become one
    trip whose day set is the union; otherwise every (GTFS trip, service day)
    pair is its own single-day trip.
    """
    directory = Path(directory)
    if not directory.is_dir():
        raise FeedLoadError("GTFS directory not found", ErrorContext(file=str(directory)))
    start = parse_gtfs_date(start_date) if isinstance(start_date, str) else start_date
    report = GtfsLoadReport()

    stops_df = _read(directory, "stops.txt")
    trips_df = _read(directory, "trips.txt")
    times_df = _read(directory, "stop_times.txt")
    calendar = _read(directory, "calendar.txt", required=False)
    calendar_dates = _read(directory, "calendar_dates.txt", required=False)
    if calendar is None and calendar_dates is None:
        raise FeedLoadError(
            "missing required file calendar.txt (or calendar_dates.txt)",
            ErrorContext(file=str(directory / "calendar.txt")),
        )
    transfers_df = _read(directory, "transfers.txt", required=False)

    # ── Stops and change times ──
    stop_index: dict[str, int] = {}
    names: list[tuple[str, str]] = []
    for sid, name in zip(stops_df["stop_id"], stops_df.get("stop_name", pd.Series([""] * len(stops_df)))):
        if sid not in stop_index:
            stop_index[sid] = len(names)
            names.append((sid, name))
    change_times = [default_change_time] * len(names)
    footpaths: dict[tuple[int, int], int] = {}
    route_changes: list[tuple[int, str, str, int]] = []  # (stop, from route_id, to route_id, seconds)
    if transfers_df is not None:
        path = str(directory / "transfers.txt")
        for idx, row in transfers_df.iterrows():
            ctx = ErrorContext(file=path, line=_line(idx))
            for col in ("from_stop_id", "to_stop_id"):
                if row[col] not in stop_index:
                    raise FeedRecordError(f"unknown stop {row[col]!r}", ctx)
            kind = row["transfer_type"].strip() or "0"
            seconds = (row.get("min_transfer_time") or "").strip()
            a, b = stop_index[row["from_stop_id"]], stop_index[row["to_stop_id"]]
            if kind not in ("0", "2") or not seconds:
                report.skipped_transfers += 1
                continue
            try:
                value = int(float(seconds))
            except (ValueError, OverflowError) as exc:
                raise FeedRecordError(f"bad min_transfer_time {seconds!r}", ctx) from exc
            if value < 0:
                raise FeedRecordError(f"negative min_transfer_time {seconds!r}", ctx)
            if a == b:
                if kind == "2":
                    from_route = (row.get("from_route_id") or "").strip()
                    to_route = (row.get("to_route_id") or "").strip()
                    if from_route or to_route:
                        route_changes.append((a, from_route, to_route, value))
                    else:
                        change_times[a] = value
            elif value > 0:
                footpaths.setdefault((a, b), value)
            else:
                report.skipped_transfers += 1

    # ── Service days ──
    service_bits = service_day_bits(calendar, calendar_dates, start, horizon_days, directory)
    trip_service = dict(zip(trips_df["trip_id"], trips_df["service_id"]))

    # ── Stop times ──
    times_df = times_df.assign(_line=[_line(i) for i in times_df.index])
    unknown_trip = ~times_df["trip_id"].isin(trip_service.keys())
    if unknown_trip.any():
        row = times_df[unknown_trip].iloc[0]
        raise FeedRecordError(
            f"stop_times references unknown trip {row['trip_id']!r}",
            ErrorContext(file=str(directory / "stop_times.txt"), line=int(row["_line"])),
        )
    unknown_stop = ~times_df["stop_id"].isin(stop_index.keys())
    if unknown_stop.any():
        row = times_df[unknown_stop].iloc[0]
        raise FeedRecordError(
            f"stop_times references unknown stop {row['stop_id']!r}",
            ErrorContext(file=str(directory / "stop_times.txt"), line=int(row["_line"])),
        )
    try:
        times_df["_seq"] = times_df["stop_sequence"].astype(int)
    except ValueError as exc:
        raise FeedRecordError(f"bad stop_sequence: {exc}", ErrorContext(file=str(directory / "stop_times.txt"))) from exc
    times_df = times_df.sort_values(["trip_id", "_seq"], kind="stable")
    by_trip = {tid: group for tid, group in times_df.groupby("trip_id", sort=False)}

    merged: dict[tuple, list] = {}
    trips: list[Trip] = []
    for trip_id in trips_df["trip_id"]:
        group = by_trip.get(trip_id)
        if group is None:
            continue
        report.gtfs_trips += 1
        try:
            arr, dep = _trip_times(group)
        except ValueError as exc:
            report.rejected_trips.append((trip_id, str(exc)))
            continue
        stops = tuple(stop_index[s] for s in group["stop_id"])
        if len(stops) < 2:
            report.rejected_trips.append((trip_id, "fewer than two stops"))
            continue
        arr[0] = 0
        dep[-1] = arr[-1]
        days = service_bits.get(trip_service[trip_id], 0)
        if not days:
            report.trips_without_days += 1
            continue
        try:
            trip = Trip(stops, tuple(arr), tuple(dep), DayBitset(days, horizon_days), label=trip_id)
        except InvariantError as exc:
            report.rejected_trips.append((trip_id, exc.message))
            log.emit("gtfs_trip_rejected", trip_id=trip_id, reason=exc.message)
            continue
        if merge:
            key = (trip.stops, trip.arr, trip.dep)
            if key in merged:
                merged[key][1] |= days
            else:
                merged[key] = [trip, days]
        else:
            for d in trip.active_days.days():
                trips.append(trip.with_days(DayBitset(1 << d, horizon_days)))
    if merge:
        trips = [trip.with_days(DayBitset(bits, horizon_days)) for trip, bits in merged.values()]
    report.trips = len(trips)

    routes = partition_routes(trips)
    trip_route = dict(zip(trips_df["trip_id"], trips_df["route_id"])) if "route_id" in trips_df.columns else {}
    timetable = Timetable(
        horizon_days=horizon_days,
        stops=tuple(Stop(sid, name, change_times[i]) for i, (sid, name) in enumerate(names)),
        footpaths=tuple(Footpath(a, b, d) for (a, b), d in footpaths.items()),
        routes=routes,
        change_overrides=_route_change_overrides(route_changes, routes, trip_route),
        start_date=start,
    )
    timetable.validate()
    log.emit(
        "feed_loaded",
        format="gtfs",
        path=str(directory),
        days=horizon_days,
        stops=len(timetable.stops),
        gtfs_trips=report.gtfs_trips,
        trips=report.trips,
        rejected=len(report.rejected_trips),
        routes=len(timetable.routes),
    )
    return timetable, report


def load_gtfs_subset(
    directory: Path,
    start_date: date | str,
    horizon_days: int,
    *,
    default_change_time: int = 0,
    merge: bool = True,
) -> Timetable:
    """Timetable of a GTFS feed; see ``load_gtfs_report`` for what gets dropped."""
    timetable, _ = load_gtfs_report(
        directory, start_date, horizon_days, default_change_time=default_change_time, merge=merge
    )
    return timetable
