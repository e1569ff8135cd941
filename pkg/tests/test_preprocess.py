"""Tests for route partition, transfer computation and reduction."""

from __future__ import annotations

from collections import Counter

import numpy as np
import pytest

from tbhorizon.artifact import dump_transfer_set
from tbhorizon.errors import InvariantError
from tbhorizon.extract import extract_day_view
from tbhorizon.ingest import gen_synthetic
from tbhorizon.model import DayBitset, Trip
from tbhorizon.preprocess import (
    Transfer,
    TransferSet,
    check_transfer,
    compute_transfers,
    partition_routes,
    preprocess,
    reduce_transfers,
)
from tbhorizon.query import profile_query
from tbhorizon.schemas import EngineConfig

from tests.conftest import make_trip, single_threaded


def _edges(transfers: TransferSet) -> set[tuple]:
    return {
        (t.from_route, t.from_trip, t.from_index, t.to_route, t.to_trip, t.to_index, t.day_shift)
        for t in transfers
    }


class TestPartition:
    def test_random_trips_one_sequence(self):
        rng = np.random.default_rng(3)
        trips = []
        for k in range(100):
            t0 = int(rng.integers(0, 20 * 3600))
            hop1, hop2 = (int(x) for x in rng.integers(60, 1800, size=2))
            times = (t0, t0 + hop1, t0 + hop1 + hop2)
            trips.append(Trip((0, 1, 2), times, times, DayBitset.full(2), f"t{k}"))
        routes = partition_routes(trips)
        assert all(r.is_ordered() for r in routes)
        assert Counter(t for r in routes for t in r.trips) == Counter(trips)

    def test_overtaking_split(self):
        slow = make_trip((0, 1), ["08:00", "09:00"], "1")
        fast = make_trip((0, 1), ["08:10", "08:20"], "1")
        routes = partition_routes([slow, fast])
        assert len(routes) == 2

    def test_groups_keep_first_appearance_order(self):
        a = make_trip((1, 0), ["08:00", "08:10"], "1")
        b = make_trip((0, 1), ["07:00", "07:10"], "1")
        routes = partition_routes([a, b])
        assert [r.stops for r in routes] == [(1, 0), (0, 1)]


class TestCompute:
    def test_diamond_full_set(self, diamond_report):
        assert _edges(diamond_report.full) == {
            (0, 0, 1, 0, 1, 1, 0),  # local-1 -> local-2 at B
            (0, 0, 1, 1, 0, 0, 0),  # local-1 -> link-1
            (0, 1, 1, 0, 0, 1, 1),  # local-2 -> next day's local-1
            (0, 1, 1, 1, 1, 0, 0),  # local-2 -> link-2
        }

    def test_next_day_transfer_days(self, diamond_report):
        [tr] = [t for t in diamond_report.full if t.day_shift == 1]
        # no local-1 on day 3, so the transfer out of day 2 does not exist
        assert list(tr.valid_days.days()) == [0, 1]

    def test_overnight_needs_day_shift(self, overnight, overnight_report):
        [tr] = list(overnight_report.full)
        assert tr.day_shift == 1
        assert list(tr.valid_days.days()) == [0, 1, 2]
        none = compute_transfers(overnight, EngineConfig(delta_max=0, workers=1))
        assert none.count() == 0

    def test_every_transfer_is_feasible(self, synthetic, synthetic_report):
        for tr in synthetic_report.full:
            check_transfer(synthetic, tr)
            source = synthetic.trip(tr.from_route, tr.from_trip)
            target = synthetic.trip(tr.to_route, tr.to_trip)
            assert tr.valid_days.issubset(source.active_days)
            assert tr.valid_days.issubset(target.active_days.shift(-tr.day_shift))

    def test_check_transfer_rejects_impossible(self, diamond):
        tr = Transfer(0, 1, 1, 1, 0, 0, 0, DayBitset.full(3))  # local-2 at 09:10 onto link-1 at 08:15
        with pytest.raises(InvariantError):
            check_transfer(diamond, tr)

    def test_parallel_matches_sequential(self, synthetic):
        one = compute_transfers(synthetic, EngineConfig(workers=1))
        many = compute_transfers(synthetic, EngineConfig(workers=4))
        assert dump_transfer_set(one) == dump_transfer_set(many)


class TestReduce:
    def test_diamond_reduced_set(self, diamond_report):
        assert _edges(diamond_report.reduced) == {(0, 0, 1, 1, 0, 0, 0), (0, 1, 1, 1, 1, 0, 0)}
        assert diamond_report.reduced.reduced
        assert not diamond_report.full.reduced
        assert diamond_report.ratio == 0.5

    def test_reduced_is_subset(self, synthetic_report):
        full = {(t.from_route, t.from_trip, t.from_index, t.to_route, t.to_trip, t.to_index, t.day_shift): t
                for t in synthetic_report.full}
        for tr in synthetic_report.reduced:
            key = (tr.from_route, tr.from_trip, tr.from_index, tr.to_route, tr.to_trip, tr.to_index, tr.day_shift)
            assert tr.valid_days.issubset(full[key].valid_days)

    def test_deterministic(self, synthetic):
        a = preprocess(synthetic, single_threaded())
        b = preprocess(synthetic, EngineConfig(workers=3))
        assert dump_transfer_set(a.reduced) == dump_transfer_set(b.reduced)

    def test_reduce_is_idempotent(self, synthetic, synthetic_report):
        again = reduce_transfers(synthetic, synthetic_report.reduced, single_threaded())
        assert dump_transfer_set(again) == dump_transfer_set(synthetic_report.reduced)

    def test_fronts_unchanged_by_reduction(self, synthetic, synthetic_report):
        config = single_threaded()
        stops = range(len(synthetic.stops))
        for day in (0, 2, 4):
            full_view = extract_day_view(synthetic, synthetic_report.full, day)
            reduced_view = extract_day_view(synthetic, synthetic_report.reduced, day)
            for src in stops:
                for dst in stops:
                    assert (
                        profile_query(full_view, src, dst, config=config).front()
                        == profile_query(reduced_view, src, dst, config=config).front()
                    )

    def test_periodic_instance_ratio(self):
        tt = gen_synthetic(21, 30, 10, 6, 14, 0.05, "daily")
        report = preprocess(tt, EngineConfig(workers=2))
        assert report.ratio <= 0.5

    def test_report_dict(self, diamond_report):
        d = diamond_report.to_dict()
        assert d["total_transfers"] == 4
        assert d["reduced_transfers"] == 2
        assert d["total_day_instances"] == 3 + 3 + 2 + 3
        assert d["reduced_day_instances"] == 6
