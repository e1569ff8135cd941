"""Shared fixtures for tbhorizon tests."""

from __future__ import annotations

from pathlib import Path

import pytest

from tbhorizon import log
from tbhorizon.ingest import gen_synthetic
from tbhorizon.model import SECONDS_PER_DAY, DayBitset, Footpath, Stop, Timetable, Trip
from tbhorizon.preprocess import PreprocessReport, build_timetable, preprocess
from tbhorizon.schemas import EngineConfig


@pytest.fixture(autouse=True)
def _isolate_log():
    """Save and restore log module state to prevent cross-test pollution."""
    saved = (log._run, log._run_stats)
    yield
    log._run, log._run_stats = saved


def hm(text: str) -> int:
    """'HH:MM' to seconds; hours may exceed 23."""
    h, m = text.split(":")
    return int(h) * 3600 + int(m) * 60


def make_trip(stops: tuple[int, ...], times: list[str], days: str, label: str = "") -> Trip:
    """Trip whose arrival equals its departure at every stop."""
    t = tuple(hm(x) for x in times)
    return Trip(stops, t, t, DayBitset.from_string(days), label)


def single_threaded() -> EngineConfig:
    return EngineConfig(workers=1)


# ── Hand-built timetables ──
#
# diamond: A=0 B=1 C=2 D=3, three days.
#   route 0  A 08:00 -> B 08:10 -> C 08:20, again one hour later
#   route 1  B 08:15 -> D 08:30, again one hour later
#   footpath C -> D, 15 minutes; change time at B is one minute
# From A at 08:00: 0 transfers via the walk arrives 08:35, 1 transfer arrives 08:30.


def build_diamond(days: str = "111") -> Timetable:
    stops = [Stop("A", "Alpha"), Stop("B", "Bravo", 60), Stop("C", "Charlie"), Stop("D", "Delta")]
    trips = [
        make_trip((0, 1, 2), ["08:00", "08:10", "08:20"], days, "local-1"),
        make_trip((0, 1, 2), ["09:00", "09:10", "09:20"], days, "local-2"),
        make_trip((1, 3), ["08:15", "08:30"], days, "link-1"),
        make_trip((1, 3), ["09:15", "09:30"], days, "link-2"),
    ]
    return build_timetable(len(days), stops, [Footpath(2, 3, 900)], trips)


# overnight: X=0 Y=1 Z=2, four days.
#   route 0  X 23:30 -> Y 24:30 (00:30 next day)
#   route 1  Y 06:00 -> Z 07:00
# Reaching Z needs a transfer onto the next day's trip.


def build_overnight() -> Timetable:
    stops = [Stop("X"), Stop("Y"), Stop("Z")]
    trips = [
        make_trip((0, 1), ["23:30", "24:30"], "1111", "night"),
        make_trip((1, 2), ["06:00", "07:00"], "1111", "morning"),
    ]
    return build_timetable(4, stops, [], trips)


@pytest.fixture
def diamond() -> Timetable:
    return build_diamond()


@pytest.fixture
def diamond_report(diamond: Timetable) -> PreprocessReport:
    return preprocess(diamond, single_threaded())


@pytest.fixture
def overnight() -> Timetable:
    return build_overnight()


@pytest.fixture
def overnight_report(overnight: Timetable) -> PreprocessReport:
    return preprocess(overnight, single_threaded())


def small_synthetic(seed: int, days: int = 5, footpaths: float = 0.05, activity: str = "random(0.7)") -> Timetable:
    return gen_synthetic(seed, 12, 6, 3, days, footpaths, activity)


@pytest.fixture
def synthetic() -> Timetable:
    return small_synthetic(7)


@pytest.fixture
def synthetic_report(synthetic: Timetable) -> PreprocessReport:
    return preprocess(synthetic, single_threaded())


# ── GTFS fixtures ──


def write_gtfs(directory: Path, files: dict[str, str]) -> Path:
    directory.mkdir(parents=True, exist_ok=True)
    for name, text in files.items():
        (directory / name).write_text(text.strip() + "\n", encoding="utf-8")
    return directory


GTFS_BASIC = {
    "stops.txt": """
stop_id,stop_name
A,Alpha
B,Bravo
C,Charlie
""",
    "trips.txt": """
route_id,service_id,trip_id
R1,WK,t1
R1,SAT,t1b
R2,WK,t2
""",
    "stop_times.txt": """
trip_id,arrival_time,departure_time,stop_id,stop_sequence
t1,08:00:00,08:00:00,A,1
t1,08:10:00,08:11:00,B,2
t1,08:20:00,08:20:00,C,3
t1b,08:00:00,08:00:00,A,1
t1b,08:10:00,08:11:00,B,2
t1b,08:20:00,08:20:00,C,3
t2,25:00:00,25:00:00,C,1
t2,25:30:00,25:30:00,A,2
""",
    "calendar.txt": """
service_id,monday,tuesday,wednesday,thursday,friday,saturday,sunday,start_date,end_date
WK,1,1,1,1,1,0,0,20240101,20241231
SAT,0,0,0,0,0,1,0,20240101,20241231
""",
    "calendar_dates.txt": """
service_id,date,exception_type
WK,20240102,2
""",
    "transfers.txt": """
from_stop_id,to_stop_id,transfer_type,min_transfer_time
B,B,2,120
A,C,2,300
""",
}


@pytest.fixture
def gtfs_dir(tmp_path: Path) -> Path:
    return write_gtfs(tmp_path / "gtfs", GTFS_BASIC)


def day_start(day: int) -> int:
    return day * SECONDS_PER_DAY
