"""Tests for earliest-arrival and profile queries on day views."""

from __future__ import annotations

import json

import pytest

from tbhorizon.errors import HorizonRangeError, UnknownStopError, VerificationError
from tbhorizon.extract import extract_day_view
from tbhorizon.model import SECONDS_PER_DAY, TripRef
from tbhorizon.query import (
    FootpathLeg,
    Journey,
    ParetoReached,
    ReachedSet,
    TripLeg,
    check_journey,
    dominates,
    earliest_arrival_query,
    iso_time,
    journey_to_dict,
    profile_query,
)
from tbhorizon.schemas import EngineConfig

from tests.conftest import hm

DAY = SECONDS_PER_DAY


@pytest.fixture
def view(diamond, diamond_report):
    return extract_day_view(diamond, diamond_report.reduced, 1)


class TestDominance:
    def test_dominates(self):
        assert dominates((10, 20, 0), (5, 20, 0))
        assert dominates((10, 20, 0), (10, 25, 1))
        assert not dominates((10, 20, 0), (10, 20, 0))
        assert not dominates((10, 20, 1), (10, 25, 0))

    def test_reached_set_keeps_antichain(self):
        rs = ReachedSet()
        assert rs.insert(5, 3, 1)
        assert not rs.insert(6, 3, 1)  # later trip, same stop: dominated
        assert rs.insert(4, 3, 2)
        assert rs.insert(4, 2, 0)  # dominates both earlier entries
        assert rs.entries == [(4, 2, 0)]
        assert rs.is_antichain()

    def test_cap(self):
        rs = ReachedSet()
        rs.insert(5, 3, 1)
        assert rs.cap(7, 1, 9) == 3
        assert rs.cap(4, 1, 9) == 9
        assert rs.cap(7, 0, 9) == 9

    def test_pareto_reached_debug_check(self):
        reached = ParetoReached(debug=True)
        reached.insert(0, 5, 3, 1)
        reached.sets[0].entries.append((6, 4, 2))
        with pytest.raises(VerificationError):
            reached.insert(0, 1, 9, 0)


class TestEarliestArrival:
    def test_both_criteria_returned(self, view):
        result = earliest_arrival_query(view, "A", "D", DAY + hm("08:00"))
        assert result.front() == [
            (DAY + hm("08:00"), DAY + hm("08:30"), 1),
            (DAY + hm("08:00"), DAY + hm("08:35"), 0),
        ]

    def test_legs(self, view):
        result = earliest_arrival_query(view, "A", "D", DAY + hm("08:00"))
        fast, direct = result.journeys
        assert [type(leg) for leg in fast.legs] == [TripLeg, TripLeg]
        assert fast.legs[0].trip == TripRef.of(0, 1, 0)
        assert fast.legs[1].from_stop == 1
        assert [type(leg) for leg in direct.legs] == [TripLeg, FootpathLeg]
        assert direct.legs[1].duration == 900

    def test_later_departure_takes_next_trips(self, view):
        result = earliest_arrival_query(view, "A", "D", DAY + hm("08:01"))
        assert [j.arrival for j in result.journeys] == [DAY + hm("09:30"), DAY + hm("09:35")]
        assert all(j.departure == DAY + hm("08:01") for j in result.journeys)

    def test_nothing_departs_from_a_terminus(self, view):
        result = earliest_arrival_query(view, "D", "A", DAY + hm("10:00"))
        assert len(result) == 0

    def test_departure_must_be_on_view_day(self, view):
        with pytest.raises(HorizonRangeError):
            earliest_arrival_query(view, "A", "D", hm("08:00"))

    def test_source_is_destination(self, view):
        result = earliest_arrival_query(view, "B", "B", DAY + hm("12:00"))
        assert result.front() == [(DAY + hm("12:00"), DAY + hm("12:00"), 0)]
        assert result.journeys[0].legs == ()

    def test_unknown_stop(self, view):
        with pytest.raises(UnknownStopError):
            earliest_arrival_query(view, "A", "Q", DAY)

    def test_max_transfers_zero(self, view):
        result = earliest_arrival_query(view, "A", "D", DAY + hm("08:00"), config=EngineConfig(max_transfers=0))
        assert result.front() == [(DAY + hm("08:00"), DAY + hm("08:35"), 0)]


class TestProfile:
    def test_diamond_front(self, view):
        result = profile_query(view, "A", "D")
        assert result.front() == [
            (DAY + hm("08:00"), DAY + hm("08:30"), 1),
            (DAY + hm("08:00"), DAY + hm("08:35"), 0),
            (DAY + hm("09:00"), DAY + hm("09:30"), 1),
            (DAY + hm("09:00"), DAY + hm("09:35"), 0),
        ]
        assert not result.truncated

    def test_journeys_check_out(self, diamond, view):
        for journey in profile_query(view, "A", "D").journeys:
            check_journey(diamond, journey, 0, 3)

    def test_wrong_day(self, view):
        with pytest.raises(HorizonRangeError):
            profile_query(view, "A", "D", 2)

    def test_overnight_transfer(self, overnight, overnight_report):
        view = extract_day_view(overnight, overnight_report.reduced, 1)
        result = profile_query(view, "X", "Z")
        assert result.front() == [(DAY + hm("23:30"), 2 * DAY + hm("07:00"), 1)]
        leg = result.journeys[0].legs[1]
        assert leg.day == 2
        assert leg.trip == TripRef.of(1, 2, 0)

    def test_narrow_horizon_truncates(self, overnight, overnight_report):
        view = extract_day_view(overnight, overnight_report.reduced, 1, horizon=1)
        result = profile_query(view, "X", "Z")
        assert len(result) == 0
        assert result.truncated

    def test_only_query_day_departures(self, overnight, overnight_report):
        view = extract_day_view(overnight, overnight_report.reduced, 1)
        result = profile_query(view, "Y", "Z")
        assert result.front() == [(DAY + hm("06:00"), DAY + hm("07:00"), 0)]

    def test_debug_checks(self, view):
        config = EngineConfig(debug_checks=True)
        assert len(profile_query(view, "A", "D", config=config)) == 4

    def test_integer_stops(self, view):
        assert profile_query(view, 0, 3).front() == profile_query(view, "A", "D").front()


class TestCheckJourney:
    def _leg(self, **kw) -> TripLeg:
        base = dict(
            trip=TripRef.of(0, 1, 0),
            day=1,
            board=0,
            exit=1,
            from_stop=0,
            to_stop=1,
            departure=DAY + hm("08:00"),
            arrival=DAY + hm("08:10"),
        )
        base.update(kw)
        return TripLeg(**base)

    def test_wrong_day(self, diamond):
        with pytest.raises(VerificationError):
            check_journey(diamond, Journey((self._leg(day=5),), 0, 0, 0), 0, 1)

    def test_wrong_times(self, diamond):
        journey = Journey((self._leg(arrival=DAY),), DAY + hm("08:00"), DAY, 0)
        with pytest.raises(VerificationError):
            check_journey(diamond, journey, 0, 1)

    def test_wrong_destination(self, diamond):
        journey = Journey((self._leg(),), DAY + hm("08:00"), DAY + hm("08:10"), 0)
        check_journey(diamond, journey, 0, 1)
        with pytest.raises(VerificationError):
            check_journey(diamond, journey, 0, 2)

    def test_missed_connection(self, diamond):
        first = self._leg(trip=TripRef.of(0, 1, 1), departure=DAY + hm("09:00"), arrival=DAY + hm("09:10"))
        second = TripLeg(TripRef.of(1, 1, 0), 1, 0, 1, 1, 3, DAY + hm("08:15"), DAY + hm("08:30"))
        journey = Journey((first, second), DAY + hm("09:00"), DAY + hm("08:30"), 1)
        with pytest.raises(VerificationError):
            check_journey(diamond, journey, 0, 3)


class TestSerialization:
    def test_iso_time(self, diamond):
        assert iso_time(diamond, DAY + hm("25:30")) == "2024-01-03T01:30:00"

    def test_journey_to_dict(self, diamond, view):
        journey = profile_query(view, "A", "D").journeys[1]
        d = journey_to_dict(diamond, journey)
        assert d["transfers"] == 0
        assert [leg["type"] for leg in d["legs"]] == ["trip", "walk"]
        assert d["legs"][0]["label"] == "local-1"
        assert d["legs"][0]["from"] == "A"
        assert d["arrival"] == "2024-01-02T08:35:00"
        json.dumps(d)
