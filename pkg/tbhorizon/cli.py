"""Command-line front end: preprocess, query, profile, bench, update-sim and friends."""

from __future__ import annotations

import argparse
import json
import sys
import time
from datetime import date, datetime
from pathlib import Path

from dotenv import load_dotenv
from pydantic import ValidationError

from tbhorizon import __version__, log
from tbhorizon.artifact import REDUCED_FILE, load_artifacts, write_artifacts, write_state
from tbhorizon.bench import run_bench, run_update_sim
from tbhorizon.errors import (
    EXIT_SUCCESS,
    EXIT_USAGE,
    ErrorContext,
    ErrorReport,
    FeedLoadError,
    HorizonRangeError,
    SchemaError,
    exit_code_for,
)
from tbhorizon.extract import extract_day_view, flatten_for_view
from tbhorizon.ingest import gen_synthetic, load_canonical, load_gtfs_report, save_canonical
from tbhorizon.model import SECONDS_PER_DAY, Timetable
from tbhorizon.network import ENGINES, TransitNetwork
from tbhorizon.preprocess import preprocess
from tbhorizon.query import QueryResult, iso_time, journey_to_dict, leg_to_dict
from tbhorizon.schemas import DEFAULT_START_DATE, EngineConfig, validate_edit_record
from tbhorizon.update import apply_edit, edit_from_record, random_delays
from tbhorizon.utils.metrics import MetricsCollector


class _Parser(argparse.ArgumentParser):
    """Usage errors exit with EXIT_USAGE instead of argparse's 2."""

    def error(self, message: str) -> None:  # type: ignore[override]
        if "--json" in sys.argv:
            print(json.dumps({"status": "error", "error_type": "usage", "message": message, "exit_code": EXIT_USAGE}))
        else:
            self.print_usage(sys.stderr)
            print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(EXIT_USAGE)


# ---------------------------------------------------------------------------
# Helpers
# ---------------------------------------------------------------------------


def _config(args: argparse.Namespace) -> EngineConfig:
    return EngineConfig.from_env(
        workers=args.workers,
        log_dir=args.log_dir,
        delta_max=getattr(args, "delta_max", None),
        view_horizon=getattr(args, "horizon", None),
        max_transfers=getattr(args, "max_transfers", None),
    )


def _parse_date(text: str) -> date:
    try:
        return date.fromisoformat(text)
    except ValueError:
        try:
            return datetime.strptime(text, "%Y%m%d").date()
        except ValueError:
            raise HorizonRangeError(f"bad date {text!r}, expected YYYY-MM-DD") from None


def _day_index(tt: Timetable, args: argparse.Namespace) -> int:
    if args.day is not None:
        day = args.day
    else:
        day = (_parse_date(args.date) - tt.start_date).days
    if not 0 <= day < tt.horizon_days:
        raise HorizonRangeError(f"day {day} outside horizon [0, {tt.horizon_days}) starting {tt.start_date}")
    return day


def _parse_time(tt: Timetable, text: str) -> int:
    """ISO datetime, or plain seconds since the horizon start."""
    if text.isdigit():
        t = int(text)
    else:
        try:
            moment = datetime.fromisoformat(text)
        except ValueError:
            raise HorizonRangeError(f"bad time {text!r}, expected YYYY-MM-DDTHH:MM[:SS] or seconds") from None
        days = (moment.date() - tt.start_date).days
        t = days * SECONDS_PER_DAY + moment.hour * 3600 + moment.minute * 60 + moment.second
    if not 0 <= t < tt.horizon_days * SECONDS_PER_DAY:
        raise HorizonRangeError(f"time {text!r} outside the horizon starting {tt.start_date}")
    return t


def _load_feed(args: argparse.Namespace) -> Timetable:
    path = Path(args.input)
    if path.is_dir():
        if args.days is None:
            raise HorizonRangeError("a GTFS directory needs --days (and usually --start-date)")
        start = _parse_date(args.start_date) if args.start_date else DEFAULT_START_DATE
        timetable, report = load_gtfs_report(
            path, start, args.days, default_change_time=args.change_time, merge=not args.no_merge
        )
        if report.rejected_trips:
            log.tprint(f"rejected {len(report.rejected_trips)} GTFS trips")
        return timetable
    return load_canonical(path)


def _print_result(tt: Timetable, result: QueryResult, json_mode: bool) -> None:
    if json_mode:
        for journey in result.journeys:
            print(json.dumps(journey_to_dict(tt, journey)))
        return
    stops = tt.stops
    print(f"  {len(result.journeys)} journeys {stops[result.source].id} -> {stops[result.destination].id}")
    if result.truncated:
        print("  (truncated: some transfers lead past the view horizon)")
    for journey in result.journeys:
        print(
            f"  dep {iso_time(tt, journey.departure)}  arr {iso_time(tt, journey.arrival)}"
            f"  transfers {journey.n_transfers}"
        )
        for leg in journey.legs:
            d = leg_to_dict(tt, leg)
            if d["type"] == "trip":
                print(f"      {d['from']:>10} {d['departure']} -> {d['to']:<10} {d['arrival']}  {d['label'] or d['route']}")
            else:
                print(f"      {d['from']:>10} walk {d['duration']}s -> {d['to']}")


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_preprocess(args: argparse.Namespace, config: EngineConfig) -> int:
    tt = _load_feed(args)
    report = preprocess(tt, config)
    write_artifacts(Path(args.output), tt, report, write_full=not args.no_full)
    summary = report.to_dict()
    if args.json:
        print(json.dumps(summary))
    else:
        print(f"  trips {tt.n_trips}  routes {len(tt.routes)}  trip-days {tt.n_trip_days}")
        print(f"  {'total':>12} {'reduced':>12} {'ratio':>8} {'compute':>10} {'reduce':>10}")
        print(
            f"  {summary['total_transfers']:>12} {summary['reduced_transfers']:>12}"
            f" {summary['ratio']:>8.1%} {summary['compute_s']:>9.2f}s {summary['reduce_s']:>9.2f}s"
        )
    return EXIT_SUCCESS


def cmd_query(args: argparse.Namespace, config: EngineConfig) -> int:
    network = TransitNetwork.from_artifacts(Path(args.artifacts), config)
    tt = network.timetable
    departure = _parse_time(tt, args.time)
    result = network.earliest_arrival(args.source, args.destination, departure, engine=args.engine)
    _print_result(tt, result, args.json)
    return EXIT_SUCCESS


def cmd_profile(args: argparse.Namespace, config: EngineConfig) -> int:
    network = TransitNetwork.from_artifacts(Path(args.artifacts), config)
    tt = network.timetable
    day = _day_index(tt, args)
    result = network.profile(args.source, args.destination, day, engine=args.engine)
    _print_result(tt, result, args.json)
    return EXIT_SUCCESS


def cmd_bench(args: argparse.Namespace, config: EngineConfig) -> int:
    artifacts = load_artifacts(Path(args.artifacts))
    engines = ENGINES if args.engine == "both" else (args.engine,)
    report = run_bench(artifacts.timetable, artifacts.reduced, args.n, args.seed, engines=engines, config=config)
    if args.out:
        report.write_csv(Path(args.out))
    summary = report.summary()
    ratio = report.median_ratio()
    if args.json:
        print(json.dumps({"queries": args.n, "summary": summary, "flat_over_full": ratio}))
        return EXIT_SUCCESS
    ok = sum(1 for r in report.records if r.success)
    print(f"  {args.n} queries, {ok} engine runs returned journeys")
    for engine, q in summary.items():
        if q is None:
            print(f"  {engine:>5}: no successful queries")
            continue
        print(
            f"  {engine:>5}: n={q['n']} min={q['min']:.0f}us q1={q['q1']:.0f}us"
            f" median={q['median']:.0f}us q3={q['q3']:.0f}us max={q['max']:.0f}us"
        )
    if ratio is not None:
        print(f"  flat/full median ratio {ratio:.2f}")
    return EXIT_SUCCESS


def _read_edits(path: Path) -> list:
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise FeedLoadError(f"cannot read edit stream: {exc.strerror or exc}", ErrorContext(file=str(path))) from exc
    edits = []
    for lineno, raw in enumerate(lines, start=1):
        if not raw.strip():
            continue
        ctx = ErrorContext(file=str(path), line=lineno)
        try:
            record = validate_edit_record(json.loads(raw))
        except (json.JSONDecodeError, ValidationError) as exc:
            raise SchemaError(f"invalid edit: {exc}", ctx) from exc
        edits.append(record)
    return edits


def cmd_update_sim(args: argparse.Namespace, config: EngineConfig) -> int:
    artifacts = load_artifacts(Path(args.artifacts))
    tt = artifacts.timetable
    if args.edits:
        records = _read_edits(Path(args.edits))
        # later records may refer to trips as renumbered by earlier ones, so
        # resolve each record against the timetable it will be applied to
        edits, scratch = [], tt
        for record in records:
            edit = edit_from_record(record, scratch)
            scratch, _ = apply_edit(scratch, edit)
            edits.append(edit)
    else:
        edits = random_delays(tt, args.random, args.seed)
    report = run_update_sim(tt, artifacts.reduced, edits, batch=args.batch, verify=args.verify, config=config)
    if args.out:
        report.write_csv(Path(args.out))
    if args.output:
        write_state(Path(args.output), report.timetable, report.transfers)

    metrics = MetricsCollector()
    for r in report.records:
        metrics.record_metric("update_s", r.wall_s)
        metrics.record_metric("per_trip_s", r.per_trip_s)
    q = metrics.quartiles("update_s")
    per_trip = metrics.quartiles("per_trip_s")
    if args.json:
        print(json.dumps({"edits": len(edits), "batches": len(report.records), "update_s": q, "per_trip_s": per_trip, "verified": report.verified}))
    else:
        print(f"  {len(edits)} edits in {len(report.records)} batches")
        if q:
            print(f"  update median {q['median'] * 1000:.1f}ms  per recomputed trip {per_trip['median'] * 1e6:.0f}us")
        if report.verified:
            print("  verified: identical to a fresh rebuild")
    return EXIT_SUCCESS


def cmd_info(args: argparse.Namespace, config: EngineConfig) -> int:
    path = Path(args.path)
    reduced = None
    if path.is_dir() and (path / REDUCED_FILE).exists():
        artifacts = load_artifacts(path, with_full=True)
        tt, reduced, full = artifacts.timetable, artifacts.reduced, artifacts.full
    else:
        tt, full = load_canonical(path), None
    info = {
        "start_date": tt.start_date.isoformat(),
        "days": tt.horizon_days,
        "stops": len(tt.stops),
        "footpaths": len(tt.footpaths),
        "routes": len(tt.routes),
        "trips": tt.n_trips,
        "trip_days": tt.n_trip_days,
    }
    if full is not None:
        info["transfers"] = full.count()
    if reduced is not None:
        info["reduced_transfers"] = reduced.count()
    if args.log:
        info["events"] = sum(1 for _ in log.parse_events(Path(args.log)))
    if args.json:
        print(json.dumps(info))
    else:
        for key, value in info.items():
            print(f"  {key:<18} {value}")
    return EXIT_SUCCESS


def cmd_extract(args: argparse.Namespace, config: EngineConfig) -> int:
    artifacts = load_artifacts(Path(args.artifacts))
    tt, reduced = artifacts.timetable, artifacts.reduced
    days = args.days or list(range(tt.horizon_days))
    for d in days:
        if not 0 <= d < tt.horizon_days:
            raise HorizonRangeError(f"day {d} outside horizon [0, {tt.horizon_days})")
    metrics = MetricsCollector()
    for d in days:
        with metrics.timed("view_s"):
            view = extract_day_view(tt, reduced, d, config.view_horizon)
        metrics.record_metric("view_transfers", view.transfer_count())
        with metrics.timed("flatten_s"):
            flatten_for_view(tt, reduced, d, config.view_horizon)
    out = {
        "days": len(days),
        "view_s": metrics.quartiles("view_s"),
        "flatten_s": metrics.quartiles("flatten_s"),
        "view_transfers": metrics.quartiles("view_transfers"),
    }
    if args.json:
        print(json.dumps(out))
    else:
        for name in ("view_s", "flatten_s"):
            q = out[name]
            if q:
                print(f"  {name:<10} median {q['median'] * 1000:.1f}ms  max {q['max'] * 1000:.1f}ms over {q['n']} days")
    return EXIT_SUCCESS


def cmd_generate(args: argparse.Namespace, config: EngineConfig) -> int:
    start = _parse_date(args.start_date) if args.start_date else DEFAULT_START_DATE
    tt = gen_synthetic(
        args.seed,
        args.stops,
        args.routes,
        args.trips,
        args.days,
        args.footpaths,
        args.activity,
        start_date=start,
    )
    save_canonical(tt, Path(args.output))
    if args.json:
        print(json.dumps({"output": args.output, "routes": len(tt.routes), "trips": tt.n_trips}))
    else:
        print(f"  wrote {args.output}: {len(tt.routes)} routes, {tt.n_trips} trips, {tt.n_trip_days} trip-days")
    return EXIT_SUCCESS


COMMANDS = {
    "preprocess": cmd_preprocess,
    "query": cmd_query,
    "profile": cmd_profile,
    "bench": cmd_bench,
    "update-sim": cmd_update_sim,
    "info": cmd_info,
    "extract": cmd_extract,
    "generate": cmd_generate,
}


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--json", action="store_true", help="Machine-readable output")
    common.add_argument("--workers", type=int, default=None, help="Worker threads (default: TBH_WORKERS or CPU count)")
    common.add_argument("--log-dir", default=None, help="Write a JSONL run log here")

    parser = _Parser(
        prog="tbhorizon",
        description="tbhorizon: trip-based journey planning over long timetable horizons",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""\
examples:
  tbhorizon generate feed.jsonl --seed 1 --stops 50 --routes 20 --days 30
  tbhorizon preprocess feed.jsonl -o art/
  tbhorizon profile art/ S1 S7 --day 3 --engine flat --json
  tbhorizon bench art/ -n 1000 --seed 7 --engine both --out bench.csv
  tbhorizon update-sim art/ --random 100 --seed 1 --batch 10 --verify
""",
    )
    parser.add_argument("--version", action="version", version=f"tbhorizon {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("preprocess", parents=[common], help="Compute and reduce transfers")
    p.add_argument("input", help="Canonical .jsonl feed or GTFS directory")
    p.add_argument("-o", "--output", required=True, help="Artifact directory")
    p.add_argument("--start-date", default=None, help="GTFS: first horizon day (YYYY-MM-DD)")
    p.add_argument("--days", type=int, default=None, help="GTFS: horizon length in days")
    p.add_argument("--change-time", type=int, default=0, help="GTFS: default minimum change time (s)")
    p.add_argument("--no-merge", action="store_true", help="GTFS: one trip per (trip, service day)")
    p.add_argument("--delta-max", type=int, default=None, help="Largest transfer day shift")
    p.add_argument("--no-full", action="store_true", help="Skip writing the unreduced transfer set")

    for name, help_text in (("query", "Earliest-arrival query"), ("profile", "Full-day profile query")):
        p = sub.add_parser(name, parents=[common], help=help_text)
        p.add_argument("artifacts")
        p.add_argument("source", help="Source stop id")
        p.add_argument("destination", help="Destination stop id")
        if name == "query":
            p.add_argument("--time", required=True, help="Departure (ISO datetime or seconds since horizon start)")
        else:
            when = p.add_mutually_exclusive_group(required=True)
            when.add_argument("--date", help="Query date (YYYY-MM-DD)")
            when.add_argument("--day", type=int, help="Query day index")
        p.add_argument("--engine", choices=ENGINES, default="full")
        p.add_argument("--horizon", type=int, default=None, help="Days covered after the query day")
        p.add_argument("--max-transfers", type=int, default=None)

    p = sub.add_parser("bench", parents=[common], help="Time random profile queries")
    p.add_argument("artifacts")
    p.add_argument("-n", type=int, default=1000, help="Number of queries")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--engine", choices=(*ENGINES, "both"), default="full")
    p.add_argument("--horizon", type=int, default=None)
    p.add_argument("--out", default=None, help="CSV file for per-query records")

    p = sub.add_parser("update-sim", parents=[common], help="Apply edits incrementally")
    p.add_argument("artifacts")
    source = p.add_mutually_exclusive_group(required=True)
    source.add_argument("--edits", help="JSON lines edit stream")
    source.add_argument("--random", type=int, help="Delay this many random trip instances")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--batch", type=int, default=1, help="Edits per recompute pass")
    p.add_argument("--verify", action="store_true", help="Compare against a fresh rebuild (exit 3 on mismatch)")
    p.add_argument("--out", default=None, help="CSV file for per-batch records")
    p.add_argument("--output", default=None, help="Write the updated timetable and transfers here")

    p = sub.add_parser("info", parents=[common], help="Timetable and artifact sizes")
    p.add_argument("path", help="Artifact directory or canonical feed")
    p.add_argument("--log", default=None, help="Also count the events of a run log")

    p = sub.add_parser("extract", parents=[common], help="Time day-view extraction and flattening")
    p.add_argument("artifacts")
    p.add_argument("--days", type=int, nargs="*", default=None, help="Days to extract (default: all)")
    p.add_argument("--horizon", type=int, default=None)

    p = sub.add_parser("generate", parents=[common], help="Write a synthetic canonical feed")
    p.add_argument("output")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--stops", type=int, default=50)
    p.add_argument("--routes", type=int, default=20)
    p.add_argument("--trips", type=int, default=4, help="Trips per line and day")
    p.add_argument("--days", type=int, default=30)
    p.add_argument("--footpaths", type=float, default=0.0, help="Footpath density in [0, 1]")
    p.add_argument("--activity", default="daily", help="daily, weekday or random(p)")
    p.add_argument("--start-date", default=None)
    return parser


def main() -> None:
    json_mode = "--json" in sys.argv
    try:
        sys.exit(_main_inner())
    except KeyboardInterrupt:
        if json_mode:
            print(json.dumps({"status": "error", "error": "Interrupted"}))
        else:
            print("\nInterrupted.")
        sys.exit(130)
    except SystemExit:
        raise
    except Exception as exc:
        report = ErrorReport.from_exception(exc)
        log.emit("run_end", status="error", **report.to_dict())
        if json_mode:
            print(json.dumps({"status": "error", **report.to_dict()}))
        else:
            where = report.context.describe()
            print(f"error: {report.message}" + (f" ({where})" if where else ""), file=sys.stderr)
        sys.exit(exit_code_for(exc))


def _main_inner(argv: list[str] | None = None) -> int:
    load_dotenv()
    args = build_parser().parse_args(argv)
    config = _config(args)
    if config.log_dir is not None:
        log.init(config.log_dir)
    log.emit("cli_args", command=args.command, args={k: v for k, v in vars(args).items() if k != "command"})

    start = time.monotonic()
    code = COMMANDS[args.command](args, config)
    log.emit("run_end", status="ok", command=args.command, elapsed_s=time.monotonic() - start)
    if not args.json:
        log.print_stats_table()
    return code
