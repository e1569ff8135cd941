"""Timetable sources: GTFS subset, canonical JSONL and seeded synthetic instances."""

from tbhorizon.ingest.canonical import dumps_canonical, load_canonical, loads_canonical, save_canonical
from tbhorizon.ingest.gtfs import GtfsLoadReport, load_gtfs_report, load_gtfs_subset
from tbhorizon.ingest.synthetic import ActivityPattern, gen_synthetic
