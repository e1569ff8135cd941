"""Tests for the GTFS subset loader."""

from __future__ import annotations

from datetime import date

import pytest

from tbhorizon.errors import FeedLoadError, FeedRecordError, SchemaError
from tbhorizon.extract import extract_day_view
from tbhorizon.ingest import load_gtfs_report, load_gtfs_subset
from tbhorizon.ingest.gtfs import parse_gtfs_time
from tbhorizon.model import Footpath
from tbhorizon.oracle import oracle_profile
from tbhorizon.preprocess import preprocess
from tbhorizon.query import profile_query

from tests.conftest import GTFS_BASIC, single_threaded, write_gtfs

START = date(2024, 1, 1)  # a Monday


class TestGtfsTime:
    def test_past_midnight(self):
        assert parse_gtfs_time("25:30:00") == 91800

    def test_single_digit_hour(self):
        assert parse_gtfs_time("8:05:00") == 8 * 3600 + 300

    @pytest.mark.parametrize("text", ["08:00", "08:61:00", "x:00:00"])
    def test_bad(self, text):
        with pytest.raises(ValueError):
            parse_gtfs_time(text)


class TestLoad:
    def test_merged_service_days(self, gtfs_dir):
        tt, report = load_gtfs_report(gtfs_dir, START, 7)
        assert report.gtfs_trips == 3
        assert report.trips == 2
        assert len(tt.routes) == 2
        local = tt.routes[0].trips[0]
        # weekdays minus the removed Tuesday, plus the identical Saturday trip
        assert list(local.active_days.days()) == [0, 2, 3, 4, 5]
        assert local.label == "t1"

    def test_times_past_midnight(self, gtfs_dir):
        tt = load_gtfs_subset(gtfs_dir, START, 7)
        night = tt.routes[1].trips[0]
        assert night.dep[0] == 90000
        assert night.arr[1] == 91800

    def test_transfers_file(self, gtfs_dir):
        tt = load_gtfs_subset(gtfs_dir, START, 7)
        assert tt.stops[tt.resolve_stop("B")].min_change_time == 120
        assert tt.stops[tt.resolve_stop("A")].min_change_time == 0
        assert tt.footpaths == (Footpath(0, 2, 300),)

    def test_route_specific_change_time(self, tmp_path):
        transfers = (
            "from_stop_id,to_stop_id,transfer_type,min_transfer_time,from_route_id,to_route_id\n"
            "B,B,2,120,,\n"
            "A,A,2,600,R2,R1\n"
        )
        files = dict(GTFS_BASIC, **{"transfers.txt": transfers})
        tt = load_gtfs_subset(write_gtfs(tmp_path / "g", files), START, 7)
        a = tt.resolve_stop("A")
        by_label = {route.trips[0].label: r for r, route in enumerate(tt.routes)}
        r1, r2 = by_label["t1"], by_label["t2"]
        assert tt.change_overrides == {(a, r2, r1): 600}
        assert tt.change_time(a, r2, r1) == 600
        assert tt.change_time(a, r1, r2) == 0
        assert tt.stops[a].min_change_time == 0
        assert tt.stops[tt.resolve_stop("B")].min_change_time == 120

    def test_default_change_time(self, gtfs_dir):
        tt = load_gtfs_subset(gtfs_dir, START, 7, default_change_time=45)
        assert tt.stops[tt.resolve_stop("A")].min_change_time == 45
        assert tt.stops[tt.resolve_stop("B")].min_change_time == 120

    def test_unmerged_gives_single_day_trips(self, gtfs_dir):
        tt = load_gtfs_subset(gtfs_dir, START, 7, merge=False)
        assert tt.n_trips == 9
        assert all(t.active_days.count() == 1 for r in tt.routes for t in r.trips)

    def test_days_outside_horizon_dropped(self, gtfs_dir):
        tt, report = load_gtfs_report(gtfs_dir, "20240106", 2)
        assert report.trips_without_days == 2
        assert tt.n_trips == 1
        assert list(tt.routes[0].trips[0].active_days.days()) == [0]

    def test_start_date_kept(self, gtfs_dir):
        assert load_gtfs_subset(gtfs_dir, START, 7).start_date == START


class TestErrors:
    def test_missing_directory(self, tmp_path):
        with pytest.raises(FeedLoadError):
            load_gtfs_subset(tmp_path / "none", START, 7)

    def test_missing_required_file(self, tmp_path):
        files = {k: v for k, v in GTFS_BASIC.items() if k != "stops.txt"}
        with pytest.raises(FeedLoadError):
            load_gtfs_subset(write_gtfs(tmp_path / "g", files), START, 7)

    def test_missing_calendar(self, tmp_path):
        files = {k: v for k, v in GTFS_BASIC.items() if not k.startswith("calendar")}
        with pytest.raises(FeedLoadError):
            load_gtfs_subset(write_gtfs(tmp_path / "g", files), START, 7)

    def test_missing_column(self, tmp_path):
        files = dict(GTFS_BASIC, **{"trips.txt": "route_id,trip_id\nR1,t1\n"})
        with pytest.raises(SchemaError):
            load_gtfs_subset(write_gtfs(tmp_path / "g", files), START, 7)

    def test_unknown_stop_in_stop_times(self, tmp_path):
        bad = GTFS_BASIC["stop_times.txt"].replace("t2,25:30:00,25:30:00,A,2", "t2,25:30:00,25:30:00,Q,2")
        files = dict(GTFS_BASIC, **{"stop_times.txt": bad})
        with pytest.raises(FeedRecordError) as exc_info:
            load_gtfs_subset(write_gtfs(tmp_path / "g", files), START, 7)
        assert exc_info.value.context.line == 9

    def test_bad_exception_type(self, tmp_path):
        files = dict(GTFS_BASIC, **{"calendar_dates.txt": "service_id,date,exception_type\nWK,20240102,3\n"})
        with pytest.raises(FeedRecordError):
            load_gtfs_subset(write_gtfs(tmp_path / "g", files), START, 7)

    @pytest.mark.parametrize("seconds", ["soon", "-60"])
    def test_bad_min_transfer_time(self, tmp_path, seconds):
        transfers = f"from_stop_id,to_stop_id,transfer_type,min_transfer_time\nB,B,2,120\nA,C,2,{seconds}\n"
        files = dict(GTFS_BASIC, **{"transfers.txt": transfers})
        with pytest.raises(FeedRecordError) as exc_info:
            load_gtfs_subset(write_gtfs(tmp_path / "g", files), START, 7)
        assert exc_info.value.context.line == 3
        assert exc_info.value.context.file.endswith("transfers.txt")

    def test_unusable_trip_is_reported(self, tmp_path):
        bad = GTFS_BASIC["stop_times.txt"] + "\nt3,08:00:00,08:00:00,A,1\n"
        trips = GTFS_BASIC["trips.txt"] + "\nR3,WK,t3\n"
        files = dict(GTFS_BASIC, **{"stop_times.txt": bad, "trips.txt": trips})
        _, report = load_gtfs_report(write_gtfs(tmp_path / "g", files), START, 7)
        assert report.rejected_trips == [("t3", "fewer than two stops")]


class TestDayMergeSoundness:
    def test_merged_and_per_day_fronts_agree(self, gtfs_dir):
        config = single_threaded()
        merged = load_gtfs_subset(gtfs_dir, START, 7)
        split = load_gtfs_subset(gtfs_dir, START, 7, merge=False)
        reduced_m = preprocess(merged, config).reduced
        reduced_s = preprocess(split, config).reduced
        stops = [s.id for s in merged.stops]
        for day in range(7):
            view_m = extract_day_view(merged, reduced_m, day)
            view_s = extract_day_view(split, reduced_s, day)
            for src in stops:
                for dst in stops:
                    front = profile_query(view_m, src, dst, config=config).front()
                    assert profile_query(view_s, src, dst, config=config).front() == front
                    a, b = merged.resolve_stop(src), merged.resolve_stop(dst)
                    assert oracle_profile(split, a, b, day, config=config).front() == front
