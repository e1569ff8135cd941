"""Tests for timetable edits and incremental transfer repair."""

from __future__ import annotations

import pytest

from tbhorizon.artifact import dump_transfer_set
from tbhorizon.bench import run_update_sim, sample_queries, verify_rebuild
from tbhorizon.errors import EditRejectedError, SchemaError, UnknownTripError
from tbhorizon.extract import extract_day_view
from tbhorizon.model import SECONDS_PER_DAY, DayBitset
from tbhorizon.preprocess import TransferSet, preprocess
from tbhorizon.query import profile_query
from tbhorizon.schemas import validate_edit_record
from tbhorizon.update import (
    AddTrip,
    DelayTrip,
    RemoveTrip,
    add_trip,
    affected_routes,
    apply_batch,
    apply_edit,
    delay_trip,
    edit_from_record,
    edit_to_record,
    random_delays,
    remove_trip,
)

from tests.conftest import hm, make_trip, single_threaded, small_synthetic

DAY = SECONDS_PER_DAY


def _front(result, day: int = 1) -> list[tuple[int, int, int]]:
    view = extract_day_view(result.timetable, result.transfers, day)
    return sorted(profile_query(view, "A", "D").front())


class TestRemove:
    def test_one_day(self, diamond, diamond_report):
        result = remove_trip(diamond, diamond_report.reduced, 0, 0, [1], config=single_threaded())
        assert list(result.timetable.trip(0, 0).active_days.days()) == [0, 2]
        verify_rebuild(result.timetable, result.transfers, single_threaded())
        # without local-1 the day starts at 09:00
        assert _front(result)[0][0] == DAY + hm("09:00")

    def test_all_days_drops_trip(self, diamond, diamond_report):
        result = remove_trip(diamond, diamond_report.reduced, 0, 0, DayBitset.full(3), config=single_threaded())
        assert [t.label for t in result.timetable.routes[0].trips] == ["local-2"]
        assert len(result.timetable.routes) == 2
        verify_rebuild(result.timetable, result.transfers, single_threaded())

    def test_inputs_untouched(self, diamond, diamond_report):
        before = dump_transfer_set(diamond_report.reduced)
        remove_trip(diamond, diamond_report.reduced, 0, 0, [1], config=single_threaded())
        assert diamond.n_trips == 4
        assert dump_transfer_set(diamond_report.reduced) == before

    def test_day_not_running(self, diamond, diamond_report):
        tt = remove_trip(diamond, diamond_report.reduced, 0, 0, [1], config=single_threaded()).timetable
        with pytest.raises(EditRejectedError):
            apply_edit(tt, RemoveTrip(0, 0, DayBitset.from_days([1], 3)))

    def test_empty_day_set(self, diamond):
        with pytest.raises(EditRejectedError):
            apply_edit(diamond, RemoveTrip(0, 0, DayBitset(0, 3)))

    def test_unknown_trip(self, diamond, diamond_report):
        with pytest.raises(UnknownTripError):
            remove_trip(diamond, diamond_report.reduced, 0, 7, [0])


class TestAdd:
    def test_new_route(self, diamond, diamond_report):
        express = make_trip((0, 3), ["08:05", "08:25"], "111", "express")
        result = add_trip(diamond, diamond_report.reduced, express, config=single_threaded())
        assert len(result.timetable.routes) == 3
        verify_rebuild(result.timetable, result.transfers, single_threaded())
        assert _front(result) == [
            (DAY + hm("08:05"), DAY + hm("08:25"), 0),
            (DAY + hm("09:00"), DAY + hm("09:30"), 1),
            (DAY + hm("09:00"), DAY + hm("09:35"), 0),
        ]

    def test_joins_existing_route(self, diamond, diamond_report):
        extra = make_trip((1, 3), ["10:15", "10:30"], "111", "link-3")
        result = add_trip(diamond, diamond_report.reduced, extra, config=single_threaded())
        assert [t.label for t in result.timetable.routes[1].trips] == ["link-1", "link-2", "link-3"]
        verify_rebuild(result.timetable, result.transfers, single_threaded())

    def test_wrong_horizon(self, diamond):
        with pytest.raises(EditRejectedError):
            apply_edit(diamond, AddTrip(make_trip((0, 3), ["08:05", "08:25"], "11", "short")))

    def test_missing_stop(self, diamond):
        with pytest.raises(EditRejectedError):
            apply_edit(diamond, AddTrip(make_trip((0, 9), ["08:05", "08:25"], "111")))


class TestDelay:
    def test_missed_connection(self, diamond, diamond_report):
        result = delay_trip(diamond, diamond_report.reduced, 0, 0, 1, 600, config=single_threaded())
        assert [t.label for t in result.timetable.routes[0].trips] == ["local-1", "local-1", "local-2"]
        verify_rebuild(result.timetable, result.transfers, single_threaded())
        # the late local-1 reaches B at 08:20, after link-1 has left
        assert _front(result) == [
            (DAY + hm("08:10"), DAY + hm("08:45"), 0),
            (DAY + hm("09:00"), DAY + hm("09:30"), 1),
            (DAY + hm("09:00"), DAY + hm("09:35"), 0),
        ]

    def test_other_days_unchanged(self, diamond, diamond_report):
        result = delay_trip(diamond, diamond_report.reduced, 0, 0, 1, 600, config=single_threaded())
        assert _front(result, day=2)[0] == (2 * DAY + hm("08:00"), 2 * DAY + hm("08:30"), 1)

    def test_per_stop_delays(self, diamond, diamond_report):
        result = delay_trip(diamond, diamond_report.reduced, 0, 0, 1, [0, 0, 300], config=single_threaded())
        verify_rebuild(result.timetable, result.transfers, single_threaded())

    def test_zero_delay(self, diamond, diamond_report):
        result = delay_trip(diamond, diamond_report.reduced, 0, 0, 1, 0, config=single_threaded())
        verify_rebuild(result.timetable, result.transfers, single_threaded())
        assert _front(result) == _front(
            apply_batch(diamond, diamond_report.reduced, [], config=single_threaded())
        )

    @pytest.mark.parametrize("day, delta", [(5, 60), (1, -60), (1, (60, 60))])
    def test_rejected(self, diamond, day, delta):
        with pytest.raises(EditRejectedError):
            apply_edit(diamond, DelayTrip(0, 0, day, delta))


class TestBatch:
    def test_first_bad_edit_aborts(self, diamond, diamond_report):
        edits = [RemoveTrip(0, 0, DayBitset.from_days([1], 3)), DelayTrip(0, 0, 9, 60)]
        with pytest.raises(EditRejectedError) as info:
            apply_batch(diamond, diamond_report.reduced, edits)
        assert info.value.context.extra["edit"] == 1

    def test_horizon_mismatch(self, diamond):
        with pytest.raises(EditRejectedError):
            apply_batch(diamond, TransferSet(5, True), [])

    def test_affected_routes_follow_footpaths(self, diamond):
        # route 1 serves D, and only C walks into D
        assert affected_routes(diamond, [3]) == {0, 1}
        assert affected_routes(diamond, [0]) == {0}

    def test_full_set_repair(self, synthetic, synthetic_report):
        edits = random_delays(synthetic, 5, seed=1)
        result = apply_batch(synthetic, synthetic_report.full, edits, config=single_threaded())
        assert not result.transfers.reduced
        verify_rebuild(result.timetable, result.transfers, single_threaded())

    def test_random_delays_rebuild(self, synthetic, synthetic_report):
        edits = random_delays(synthetic, 20, seed=3)
        result = apply_batch(synthetic, synthetic_report.reduced, edits, config=single_threaded())
        verify_rebuild(result.timetable, result.transfers, single_threaded())
        assert result.edits == 20
        assert result.affected

    def test_batch_size_does_not_matter(self, synthetic, synthetic_report):
        edits = random_delays(synthetic, 12, seed=5)
        one = run_update_sim(synthetic, synthetic_report.reduced, edits, batch=1, config=single_threaded())
        ten = run_update_sim(synthetic, synthetic_report.reduced, edits, batch=10, config=single_threaded())
        assert dump_transfer_set(one.transfers) == dump_transfer_set(ten.transfers)
        assert one.timetable == ten.timetable
        assert len(one.records) == 12
        assert len(ten.records) == 2

    def test_chained_batches_match_rebuild(self):
        _chained_batches(small_synthetic(8), batches=3, size=4, queries=30, seed=8)

    def test_random_delays_deterministic(self, synthetic):
        assert random_delays(synthetic, 8, seed=2) == random_delays(synthetic, 8, seed=2)
        for edit in random_delays(synthetic, 8, seed=2):
            assert edit.delta % 60 == 0
            assert 60 <= edit.delta <= 1800


def _chained_batches(timetable, *, batches: int, size: int, queries: int, seed: int) -> None:
    """Apply random delays batch by batch, checking each repair against a rebuild, then compare fronts."""
    config = single_threaded()
    transfers = preprocess(timetable, config).reduced
    edits = random_delays(timetable, batches * size, seed=seed)
    assert len(edits) == batches * size
    for k in range(batches):
        result = apply_batch(timetable, transfers, edits[k * size : (k + 1) * size], config=config)
        timetable, transfers = result.timetable, result.transfers
        verify_rebuild(timetable, transfers, config)

    fresh = preprocess(timetable, config).reduced
    for src, dst, day in sample_queries(timetable, queries, seed):
        repaired = profile_query(extract_day_view(timetable, transfers, day), src, dst, config=config)
        rebuilt = profile_query(extract_day_view(timetable, fresh, day), src, dst, config=config)
        assert repaired.front() == rebuilt.front(), (src, dst, day)


@pytest.mark.slow
class TestBatchAcceptance:
    @pytest.mark.parametrize("seed", [21, 22, 23])
    def test_ten_batches_of_ten(self, seed):
        _chained_batches(small_synthetic(seed, days=7, footpaths=0.1), batches=10, size=10, queries=200, seed=seed)


class TestEditRecords:
    def test_remove_record(self, diamond):
        record = validate_edit_record({"op": "remove", "route": 0, "trip": 1, "days": [0, 2]})
        edit = edit_from_record(record, diamond)
        assert edit == RemoveTrip(0, 1, DayBitset.from_days([0, 2], 3))
        assert edit_to_record(edit, diamond) == {"op": "remove", "route": 0, "trip": 1, "days": [0, 2]}

    def test_add_record(self, diamond):
        record = validate_edit_record(
            {"op": "add", "label": "x", "stops": ["A", "D"], "arr": [100, 200], "dep": [100, 200], "days": "101"}
        )
        edit = edit_from_record(record, diamond)
        assert edit.trip.stops == (0, 3)
        assert list(edit.trip.active_days.days()) == [0, 2]
        assert edit_to_record(edit, diamond)["stops"] == ["A", "D"]

    def test_delay_record(self, diamond):
        record = validate_edit_record({"op": "delay", "route": 1, "trip": 0, "day": 2, "delta": [0, 120]})
        assert edit_from_record(record, diamond) == DelayTrip(1, 0, 2, (0, 120))

    def test_add_unknown_stop(self, diamond):
        record = validate_edit_record(
            {"op": "add", "stops": ["A", "Q"], "arr": [100, 200], "dep": [100, 200], "days": "111"}
        )
        with pytest.raises(EditRejectedError):
            edit_from_record(record, diamond)

    def test_bad_day_string(self, diamond):
        record = validate_edit_record({"op": "remove", "route": 0, "trip": 0, "days": "11"})
        with pytest.raises(SchemaError):
            edit_from_record(record, diamond)
