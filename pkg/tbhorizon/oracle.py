"""Brute-force reference answers from a time-expanded event graph.

Built from the timetable alone, never from transfer sets. Every trip
instance on the covered days contributes a departure and an arrival event
per stop plus a wait node in front of each departure; wait nodes of one
(stop, route, stop index) form a chain in time order. Edge weights count
transfers: riding, staying and waiting are free, alighting into another
wait chain costs one. Minimum transfers per event then come from networkx
multi-source Dijkstra; the arrival time of an event is fixed, so the
(arrival, transfers) front falls out of the distances at destination events.
"""

from __future__ import annotations

import time
from bisect import bisect_left
from dataclasses import dataclass, field

import networkx as nx

from tbhorizon import log
from tbhorizon.errors import HorizonRangeError, OracleLimitError
from tbhorizon.model import SECONDS_PER_DAY, Timetable, TripRef
from tbhorizon.query import FootpathLeg, Journey, QueryResult, TripLeg, dominates
from tbhorizon.schemas import EngineConfig

# ("dep" | "arr" | "wait", route, trip, day, stop index)
Event = tuple[str, int, int, int, int]


@dataclass
class EventGraph:
    """Time-expanded graph over days ``first_day .. last_day``."""

    timetable: Timetable
    first_day: int
    last_day: int
    graph: nx.DiGraph
    times: dict[Event, int] = field(default_factory=dict)
    # (stop, route, index) -> [(departure, wait node)] sorted
    chains: dict[tuple[int, int, int], list[tuple[int, Event]]] = field(default_factory=dict)

    @property
    def n_events(self) -> int:
        return self.graph.number_of_nodes()

    def stop_of(self, event: Event) -> int:
        return self.timetable.routes[event[1]].stops[event[4]]


def build_event_graph(
    timetable: Timetable,
    first_day: int,
    last_day: int,
    *,
    delta_max: int = 2,
    event_limit: int = 100_000,
) -> EventGraph:
    tt = timetable
    if not 0 <= first_day <= last_day < tt.horizon_days:
        raise HorizonRangeError(f"days [{first_day}, {last_day}] outside horizon [0, {tt.horizon_days})")

    n_events = 0
    for route in tt.routes:
        n_stops = len(route.stops)
        for trip in route.trips:
            active = sum(1 for d in range(first_day, last_day + 1) if d in trip.active_days)
            n_events += active * (3 * n_stops - 3)
    if n_events > event_limit:
        raise OracleLimitError(f"event graph would have {n_events} events, limit is {event_limit}")

    g = nx.DiGraph()
    eg = EventGraph(tt, first_day, last_day, g)
    times = eg.times
    chains: dict[tuple[int, int, int], list[tuple[int, Event]]] = {}

    for r, route in enumerate(tt.routes):
        n_stops = len(route.stops)
        for u, trip in enumerate(route.trips):
            for d in range(first_day, last_day + 1):
                if d not in trip.active_days:
                    continue
                base = d * SECONDS_PER_DAY
                for i in range(n_stops):
                    if i <= n_stops - 2:
                        dep = ("dep", r, u, d, i)
                        wait = ("wait", r, u, d, i)
                        times[dep] = times[wait] = base + trip.dep[i]
                        g.add_edge(wait, dep, weight=0)
                        chains.setdefault((route.stops[i], r, i), []).append((base + trip.dep[i], wait))
                        if i >= 1:
                            g.add_edge(("arr", r, u, d, i), dep, weight=0)
                    if i >= 1:
                        arr = ("arr", r, u, d, i)
                        times[arr] = base + trip.arr[i]
                        g.add_edge(("dep", r, u, d, i - 1), arr, weight=0)

    for key, chain in chains.items():
        chain.sort()
        for (_, a), (_, b) in zip(chain, chain[1:]):
            g.add_edge(a, b, weight=0)
    eg.chains = chains

    # alight and change: to the first wait node at or after the ready time
    for node, t in list(times.items()):
        if node[0] != "arr":
            continue
        _, r, u, d, i = node
        s = tt.routes[r].stops[i]
        targets = [(s, None), *tt.footpaths_from[s]]
        for s2, walk in targets:
            for r2, b in tt.routes_at_stop[s2]:
                chain = chains.get((s2, r2, b))
                if not chain:
                    continue
                ready = t + (walk if walk is not None else tt.change_time(s, r, r2))
                k = bisect_left(chain, (ready,))
                if k == len(chain):
                    continue
                target = chain[k][1]
                if target[3] - d > delta_max:
                    continue
                g.add_edge(node, target, weight=1)

    log.emit("event_graph_built", first_day=first_day, last_day=last_day, events=g.number_of_nodes(), arcs=g.number_of_edges())
    return eg


def _covered(timetable: Timetable, query_day: int, horizon: int) -> tuple[int, int]:
    D = timetable.horizon_days
    if not 0 <= query_day < D:
        raise HorizonRangeError(f"query day {query_day} outside horizon [0, {D})")
    if horizon < 1:
        raise HorizonRangeError(f"horizon must be >= 1, got {horizon}")
    return max(query_day - 1, 0), min(query_day + horizon - 1, D - 1)


def _destination_events(eg: EventGraph, destination: int) -> list[tuple[Event, int]]:
    """Arrival events that end a journey at *destination*, with the final walk."""
    tt = eg.timetable
    walks = {destination: 0}
    for x, walk in tt.footpaths_to[destination]:
        walks[x] = walk
    return [(node, walks[eg.stop_of(node)]) for node in eg.times if node[0] == "arr" and eg.stop_of(node) in walks]


def _front(candidates: list[tuple[tuple[int, int, int], object]]) -> list[tuple[tuple[int, int, int], object]]:
    front: list[tuple[tuple[int, int, int], object]] = []
    for c, payload in candidates:
        if any(f == c or dominates(f, c) for f, _ in front):
            continue
        front = [(f, p) for f, p in front if not dominates(c, f)]
        front.append((c, payload))
    return front


def _journey(
    eg: EventGraph,
    path: list[Event],
    source: int,
    destination: int,
    departure: int,
    walk_end: int,
    query_day: int,
) -> Journey:
    """Legs of a shortest event path; a wait node separates consecutive rides."""
    tt = eg.timetable
    rides: list[tuple[Event, Event]] = []
    board: Event | None = None
    last: Event | None = None
    for node in path:
        if node[0] == "wait":
            if board is not None and last is not None:
                rides.append((board, last))
            board = last = None
        elif node[0] == "dep":
            board = board or node
        else:
            last = node
    assert board is not None and last is not None
    rides.append((board, last))

    legs: list[TripLeg | FootpathLeg] = []
    prev: TripLeg | None = None
    for board, last in rides:
        _, r, u, d, b = board
        stops = tt.routes[r].stops
        leg = TripLeg(
            trip=TripRef.of(r, d - query_day + 1, u),
            day=d,
            board=b,
            exit=last[4],
            from_stop=stops[b],
            to_stop=stops[last[4]],
            departure=eg.times[board],
            arrival=eg.times[last],
        )
        at, ready = (source, None) if prev is None else (prev.to_stop, prev.arrival)
        if at != leg.from_stop:
            walk = dict(tt.footpaths_from[at])[leg.from_stop]
            t0 = leg.departure - walk if ready is None else ready
            legs.append(FootpathLeg(at, leg.from_stop, walk, t0, t0 + walk))
        legs.append(leg)
        prev = leg
    arrival = prev.arrival
    if walk_end:
        legs.append(FootpathLeg(prev.to_stop, destination, walk_end, arrival, arrival + walk_end))
        arrival += walk_end
    return Journey(tuple(legs), departure, arrival, len(rides) - 1)


def _legs_path(eg: EventGraph, sources: list[Event], target: Event) -> list[Event]:
    _, path = nx.multi_source_dijkstra(eg.graph, set(sources), target=target, weight="weight")
    return path


def oracle_profile(
    timetable: Timetable,
    source: int,
    destination: int,
    query_day: int,
    horizon: int = 2,
    *,
    config: EngineConfig | None = None,
) -> QueryResult:
    """Exact Pareto set of (departure, arrival, transfers) journeys departing on *query_day*."""
    config = config or EngineConfig()
    tt = timetable
    first, last = _covered(tt, query_day, horizon)
    if source == destination:
        lo = query_day * SECONDS_PER_DAY
        return QueryResult(source, source, query_day, (Journey((), lo, lo, 0),))
    start = time.monotonic()
    eg = build_event_graph(
        tt, first, last, delta_max=config.delta_max, event_limit=config.oracle_event_limit
    )
    lo, hi = query_day * SECONDS_PER_DAY, (query_day + 1) * SECONDS_PER_DAY

    by_tau: dict[int, list[Event]] = {}
    for stop, walk in [(source, 0), *tt.footpaths_from[source]]:
        for r, i in tt.routes_at_stop[stop]:
            if i > len(tt.routes[r].stops) - 2:
                continue
            for t, wait in eg.chains.get((stop, r, i), ()):
                tau = t - walk
                if lo <= tau < hi:
                    by_tau.setdefault(tau, []).append(("dep", *wait[1:]))

    ends = _destination_events(eg, destination)
    candidates: list[tuple[tuple[int, int, int], object]] = []
    for tau in sorted(by_tau, reverse=True):
        sources = by_tau[tau]
        dist = nx.multi_source_dijkstra_path_length(
            eg.graph, set(sources), cutoff=config.oracle_max_transfers, weight="weight"
        )
        for node, walk in ends:
            k = dist.get(node)
            if k is not None:
                candidates.append(((tau, eg.times[node] + walk, int(k)), (sources, node, walk)))
    front = _front(candidates)

    journeys = []
    for (tau, _, _), (sources, node, walk) in front:
        path = _legs_path(eg, sources, node)
        journeys.append(_journey(eg, path, source, destination, tau, walk, query_day))
    journeys.sort(key=lambda j: j.criteria)
    log.emit(
        "oracle_done",
        kind="profile",
        source=source,
        destination=destination,
        day=query_day,
        events=eg.n_events,
        journeys=len(journeys),
        elapsed_s=time.monotonic() - start,
    )
    return QueryResult(source, destination, query_day, tuple(journeys))


def oracle_earliest_arrival(
    timetable: Timetable,
    source: int,
    destination: int,
    departure: int,
    horizon: int = 2,
    *,
    config: EngineConfig | None = None,
) -> QueryResult:
    """Exact (arrival, transfers) front for leaving *source* at or after *departure*."""
    config = config or EngineConfig()
    tt = timetable
    query_day = departure // SECONDS_PER_DAY
    first, last = _covered(tt, query_day, horizon)
    if source == destination:
        return QueryResult(source, source, query_day, (Journey((), departure, departure, 0),))
    eg = build_event_graph(
        tt, first, last, delta_max=config.delta_max, event_limit=config.oracle_event_limit
    )
    sources: list[Event] = []
    for stop, walk in [(source, 0), *tt.footpaths_from[source]]:
        for r, i in tt.routes_at_stop[stop]:
            chain = eg.chains.get((stop, r, i))
            if not chain:
                continue
            k = bisect_left(chain, (departure + walk,))
            if k < len(chain):
                sources.append(chain[k][1])
    if not sources:
        return QueryResult(source, destination, query_day)
    dist = nx.multi_source_dijkstra_path_length(
        eg.graph, set(sources), cutoff=config.oracle_max_transfers, weight="weight"
    )
    candidates = []
    for node, walk in _destination_events(eg, destination):
        k = dist.get(node)
        if k is not None:
            candidates.append(((departure, eg.times[node] + walk, int(k)), (node, walk)))
    journeys = []
    for _, (node, walk) in _front(candidates):
        path = _legs_path(eg, sources, node)
        journeys.append(_journey(eg, path, source, destination, departure, walk, query_day))
    journeys.sort(key=lambda j: j.criteria)
    return QueryResult(source, destination, query_day, tuple(journeys))
