"""Seeded synthetic timetables for tests and desk-scale benchmarks."""

from __future__ import annotations

import re
from dataclasses import dataclass
from datetime import date, timedelta

import numpy as np

from tbhorizon import log
from tbhorizon.errors import HorizonRangeError
from tbhorizon.model import DayBitset, Footpath, Stop, Timetable, Trip
from tbhorizon.preprocess import build_timetable
from tbhorizon.schemas import DEFAULT_START_DATE

_RANDOM_PATTERN = re.compile(r"^random[(:]\s*([0-9.]+)\s*\)?$")


@dataclass(frozen=True)
class ActivityPattern:
    """Which days a generated trip runs: every day, Monday to Friday, or each day with probability p."""

    kind: str
    p: float = 1.0

    @classmethod
    def parse(cls, text: str | ActivityPattern) -> ActivityPattern:
        if isinstance(text, ActivityPattern):
            return text
        text = text.strip().lower()
        if text in ("daily", "weekday"):
            return cls(text)
        m = _RANDOM_PATTERN.match(text)
        if m:
            p = float(m.group(1))
            if not 0.0 < p <= 1.0:
                raise HorizonRangeError(f"random activity probability must be in (0, 1], got {p}")
            return cls("random", p)
        raise HorizonRangeError(f"unknown activity pattern {text!r} (daily, weekday, random(p))")

    def draw(self, rng: np.random.Generator, horizon_days: int, start: date) -> DayBitset:
        if self.kind == "daily":
            return DayBitset.full(horizon_days)
        if self.kind == "weekday":
            days = [d for d in range(horizon_days) if (start + timedelta(days=d)).weekday() < 5]
            if not days:
                days = [0]
            return DayBitset.from_days(days, horizon_days)
        mask = rng.random(horizon_days) < self.p
        if not mask.any():
            mask[rng.integers(horizon_days)] = True
        return DayBitset.from_days(np.flatnonzero(mask).tolist(), horizon_days)


def gen_synthetic(
    seed: int,
    n_stops: int,
    n_routes: int,
    trips_per_route: int,
    horizon_days: int,
    footpath_density: float = 0.0,
    activity_pattern: str | ActivityPattern = "daily",
    *,
    start_date: date = DEFAULT_START_DATE,
) -> Timetable:
    """Generate a reproducible timetable.

    Each of the ``n_routes`` lines gets a random stop sequence (some return to
    their first stop), a travel-time profile and ``trips_per_route`` trips at a
    fixed headway; late first departures make some trips cross midnight. About
    a third of the lines also get faster express trips, which overtake and so
    end up in routes of their own.
    """
    if min(n_stops, n_routes, trips_per_route, horizon_days) < 1:
        raise HorizonRangeError("stop, route, trip and day counts must all be >= 1")
    if n_stops < 2:
        raise HorizonRangeError("a timetable with trips needs at least two stops")
    if not 0.0 <= footpath_density <= 1.0:
        raise HorizonRangeError(f"footpath density must be in [0, 1], got {footpath_density}")
    pattern = ActivityPattern.parse(activity_pattern)
    rng = np.random.default_rng(seed)

    stops = [
        Stop(f"S{i}", f"Stop {i}", int(rng.choice([0, 60, 120]))) for i in range(n_stops)
    ]

    footpaths: list[Footpath] = []
    if footpath_density > 0:
        draws = rng.random((n_stops, n_stops))
        for a in range(n_stops):
            for b in range(n_stops):
                if a != b and draws[a, b] < footpath_density:
                    footpaths.append(Footpath(a, b, int(rng.integers(60, 601))))

    trips: list[Trip] = []
    for line in range(n_routes):
        length = int(rng.integers(2, min(n_stops, 8) + 1))
        seq = [int(s) for s in rng.choice(n_stops, size=length, replace=False)]
        if length >= 2 and rng.random() < 0.15:
            seq.append(seq[0])
        hops = rng.integers(120, 901, size=len(seq) - 1)
        dwells = rng.integers(0, 121, size=len(seq))
        offsets_arr = [0]
        offsets_dep = [0]
        for i, hop in enumerate(hops, start=1):
            arrival = offsets_dep[-1] + int(hop)
            offsets_arr.append(arrival)
            offsets_dep.append(arrival + (int(dwells[i]) if i < len(seq) - 1 else 0))

        headway = int(rng.integers(600, 3601))
        headway = min(headway, 86400 // trips_per_route)
        first = int(rng.integers(5 * 3600, 24 * 3600))
        express = rng.random() < 0.33
        for k in range(trips_per_route):
            t0 = first + k * headway
            arr = tuple(t0 + o for o in offsets_arr)
            dep = tuple(t0 + o for o in offsets_dep)
            days = pattern.draw(rng, horizon_days, start_date)
            trips.append(Trip(tuple(seq), (0,) + arr[1:], dep, days, label=f"L{line}-{k}"))
            if express and k % 2 == 1:
                # starts a little later, arrives earlier: overtakes trip k
                fast_arr = tuple(t0 + 300 + o * 3 // 5 for o in offsets_arr)
                fast_dep = tuple(t0 + 300 + o * 3 // 5 for o in offsets_dep)
                trips.append(
                    Trip(tuple(seq), (0,) + fast_arr[1:], fast_dep, days, label=f"L{line}-{k}x")
                )

    timetable = build_timetable(horizon_days, stops, footpaths, trips, start_date=start_date)
    log.emit(
        "synthetic_generated",
        seed=seed,
        stops=n_stops,
        lines=n_routes,
        routes=len(timetable.routes),
        trips=timetable.n_trips,
        trip_days=timetable.n_trip_days,
    )
    return timetable
