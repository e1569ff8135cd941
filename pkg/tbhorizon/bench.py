"""Query benchmarks and update simulations with CSV output.

Query timings cover the search only; day views and flattened windows are
built beforehand (and cached per day) outside the timed block.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import pandas as pd

from tbhorizon import log
from tbhorizon.artifact import dump_transfer_set
from tbhorizon.errors import HorizonRangeError, VerificationError
from tbhorizon.extract import DayViewCache, FlatTimetable, flatten_for_view
from tbhorizon.flat_query import profile_query_flat
from tbhorizon.model import Timetable
from tbhorizon.preprocess import TransferSet, preprocess
from tbhorizon.query import profile_query
from tbhorizon.schemas import EngineConfig
from tbhorizon.update import TimetableEdit, apply_batch
from tbhorizon.utils.metrics import MetricsCollector

CSV_VERSION = 1
BENCH_COLUMNS = ["version", "query_id", "engine", "source", "destination", "day", "micros", "journeys", "success"]
UPDATE_COLUMNS = ["version", "batch", "edits", "trips_recomputed", "wall_s", "per_trip_s"]


# ---------------------------------------------------------------------------
# Query benchmark
# ---------------------------------------------------------------------------


@dataclass
class BenchRecord:
    """One timed profile query."""

    query_id: int
    engine: str
    source: str
    destination: str
    day: int
    micros: float
    journeys: int

    @property
    def success(self) -> bool:
        return self.journeys > 0

    def to_row(self) -> dict:
        return {"version": CSV_VERSION, **asdict(self), "success": self.success}


@dataclass
class BenchReport:
    records: list[BenchRecord] = field(default_factory=list)
    metrics: MetricsCollector = field(default_factory=MetricsCollector)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([r.to_row() for r in self.records], columns=BENCH_COLUMNS)

    def write_csv(self, path: Path) -> Path:
        path = Path(path)
        self.to_frame().to_csv(path, index=False)
        return path

    def summary(self) -> dict[str, dict[str, float] | None]:
        """Per-engine quartiles of query micros over successful queries."""
        engines = sorted({r.engine for r in self.records})
        return {e: self.metrics.quartiles("query_us", engine=e, success="1") for e in engines}

    def median_ratio(self) -> float | None:
        """Median flat time over median full time, when both engines ran."""
        s = self.summary()
        full, flat = s.get("full"), s.get("flat")
        if not full or not flat or full["median"] == 0:
            return None
        return flat["median"] / full["median"]


def sample_queries(timetable: Timetable, n: int, seed: int) -> list[tuple[int, int, int]]:
    """*n* (source, destination, day) triples drawn uniformly; source differs from destination when possible."""
    rng = np.random.default_rng(seed)
    n_stops = len(timetable.stops)
    out = []
    for _ in range(n):
        src = int(rng.integers(n_stops))
        if n_stops > 1:
            dst = int(rng.integers(n_stops - 1))
            dst += dst >= src
        else:
            dst = src
        out.append((src, dst, int(rng.integers(timetable.horizon_days))))
    return out


def run_bench(
    timetable: Timetable,
    reduced: TransferSet,
    n: int,
    seed: int,
    *,
    engines: Sequence[str] = ("full",),
    config: EngineConfig | None = None,
) -> BenchReport:
    config = config or EngineConfig()
    horizon = config.view_horizon
    report = BenchReport()
    cache = DayViewCache(timetable, reduced, capacity=config.cache_capacity, horizon=horizon)
    flats: dict[int, FlatTimetable] = {}
    stops = timetable.stops

    for qid, (src, dst, day) in enumerate(sample_queries(timetable, n, seed)):
        for engine in engines:
            if engine == "full":
                view = cache.get_or_build(day)
                with report.metrics.timed("query_s", engine=engine):
                    result = profile_query(view, src, dst, config=config)
            else:
                if day not in flats:
                    flats.clear()
                    flats[day] = flatten_for_view(timetable, reduced, day, horizon)
                with report.metrics.timed("query_s", engine=engine):
                    result = profile_query_flat(flats[day], src, dst, day, config=config)
            micros = report.metrics.metrics[-1].value * 1e6
            record = BenchRecord(qid, engine, stops[src].id, stops[dst].id, day, micros, len(result.journeys))
            report.records.append(record)
            report.metrics.record_metric(
                "query_us", micros, {"engine": engine, "success": "1" if record.success else "0"}
            )
            report.metrics.increment_counter(f"queries_{engine}")
    log.emit("bench_done", queries=n, seed=seed, engines=list(engines), summary=report.summary())
    return report


# ---------------------------------------------------------------------------
# Update simulation
# ---------------------------------------------------------------------------


@dataclass
class UpdateRecord:
    batch: int
    edits: int
    trips_recomputed: int
    wall_s: float

    @property
    def per_trip_s(self) -> float:
        return self.wall_s / self.trips_recomputed if self.trips_recomputed else 0.0

    def to_row(self) -> dict:
        return {"version": CSV_VERSION, **asdict(self), "per_trip_s": self.per_trip_s}


@dataclass
class UpdateSimReport:
    timetable: Timetable
    transfers: TransferSet
    records: list[UpdateRecord] = field(default_factory=list)
    verified: bool | None = None

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([r.to_row() for r in self.records], columns=UPDATE_COLUMNS)

    def write_csv(self, path: Path) -> Path:
        path = Path(path)
        self.to_frame().to_csv(path, index=False)
        return path


def verify_rebuild(timetable: Timetable, transfers: TransferSet, config: EngineConfig | None = None) -> None:
    """Raise ``VerificationError`` unless *transfers* serializes like a fresh preprocessing of *timetable*."""
    fresh = preprocess(timetable, config)
    expected = fresh.reduced if transfers.reduced else fresh.full
    got, want = dump_transfer_set(transfers), dump_transfer_set(expected)
    if got != want:
        missing = set(expected.rows) - set(transfers.rows)
        extra = set(transfers.rows) - set(expected.rows)
        changed = [k for k in expected.rows if k in transfers.rows and expected.rows[k] != transfers.rows[k]]
        log.emit(
            "verification_failed",
            missing_rows=len(missing),
            extra_rows=len(extra),
            changed_rows=len(changed),
        )
        raise VerificationError(
            f"incremental transfer set differs from rebuild: {len(missing)} missing, "
            f"{len(extra)} extra, {len(changed)} changed rows"
        )


def run_update_sim(
    timetable: Timetable,
    transfers: TransferSet,
    edits: Sequence[TimetableEdit],
    *,
    batch: int = 1,
    verify: bool = False,
    config: EngineConfig | None = None,
) -> UpdateSimReport:
    """Apply *edits* in groups of *batch*, recording time and trips recomputed per group."""
    config = config or EngineConfig()
    if batch < 1:
        raise HorizonRangeError(f"batch size must be >= 1, got {batch}")
    report = UpdateSimReport(timetable, transfers)
    for k in range(0, len(edits), batch):
        group = edits[k : k + batch]
        result = apply_batch(report.timetable, report.transfers, group, config=config)
        report.timetable, report.transfers = result.timetable, result.transfers
        report.records.append(UpdateRecord(k // batch, len(group), len(result.affected), result.elapsed_s))
    if verify:
        verify_rebuild(report.timetable, report.transfers, config)
        report.verified = True
    return report
