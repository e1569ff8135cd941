"""Tests for tbhorizon.log module."""

from __future__ import annotations

import json
from pathlib import Path

from tbhorizon import log
from tbhorizon.preprocess import preprocess

from tests.conftest import build_diamond, single_threaded


def test_init_creates_log_file(tmp_path: Path):
    log_file = log.init(tmp_path / "logs", run_id="test_run")
    assert log_file.exists()
    assert log_file == tmp_path / "logs" / "test_run.jsonl"
    assert log.get_run_id() == "test_run"


def test_emit_writes_json_lines(tmp_path: Path):
    log.init(tmp_path, run_id="emit_test")
    log.emit("my_event", foo="bar", count=42, path=tmp_path, stops={3, 1})
    lines = log.get_log_file().read_text().strip().split("\n")
    # First line is run_init from init(), second is our event
    record = json.loads(lines[-1])
    assert record["event"] == "my_event"
    assert record["count"] == 42
    assert record["path"] == str(tmp_path)
    assert record["stops"] == [1, 3]
    assert "ts" in record
    assert "t" in record
    assert record["run"] == "emit_test"


def test_emit_without_init_is_silent(tmp_path: Path):
    log.reset()
    log.emit("nothing")
    assert log.get_log_file() is None


def test_parse_events_filters_and_skips_corrupt_lines(tmp_path: Path):
    path = tmp_path / "run.jsonl"
    path.write_text('{"event": "a"}\nnot json\n[1, 2]\n{"event": "b"}\n{"event": "a", "n": 2}\n')
    assert [e["event"] for e in log.parse_events(path)] == ["a", "b", "a"]
    assert [e.get("n") for e in log.parse_events(path, "a")] == [None, 2]


def test_preprocess_logs_phases(tmp_path: Path):
    log.init(tmp_path, run_id="pre")
    preprocess(build_diamond(), single_threaded())
    events = {e["event"] for e in log.parse_events(log.get_log_file())}
    assert "run_init" in events
    stats = log.get_run_stats()
    assert stats.phases
    assert stats.total_elapsed_s >= 0


class TestRunStats:
    def test_record_phase_accumulates(self):
        stats = log.RunStats()
        stats.record_phase("compute", 0.5, trips=4)
        stats.record_phase("compute", 0.25, trips=2, transfers=9)
        s = stats.phases["compute"]
        assert s.calls == 2
        assert s.elapsed_s == 0.75
        assert s.counts == {"trips": 6, "transfers": 9}

    def test_init_resets_stats(self, tmp_path: Path):
        log.get_run_stats().record_phase("old", 1.0)
        log.init(tmp_path)
        assert not log.get_run_stats().phases

    def test_print_stats_table(self, tmp_path: Path, capsys):
        log.init(tmp_path)
        log.get_run_stats().record_phase("reduce", 2.5, transfers=12_345)
        log.print_stats_table()
        out = capsys.readouterr().out
        assert "PHASE STATS" in out
        assert "reduce" in out
        assert "transfers=12k" in out
        assert "2.5s" in out

    def test_empty_table_prints_nothing(self, tmp_path: Path, capsys):
        log.init(tmp_path)
        log.print_stats_table()
        assert capsys.readouterr().out == ""


def test_tprint_prefix(tmp_path: Path, capsys):
    log.reset()
    log.tprint("plain")
    assert capsys.readouterr().out == "  plain\n"
    log.init(tmp_path)
    log.tprint("timed")
    assert "s] timed" in capsys.readouterr().out


def test_fmt_time_units():
    assert log._fmt_time(0.000042) == "42us"
    assert log._fmt_time(0.25) == "250ms"
    assert log._fmt_time(125.0) == "2m05s"


def test_phase_mean():
    stats = log.RunStats()
    stats.record_phase("full_profile", 0.5)
    stats.record_phase("full_profile", 1.5)
    assert stats.phases["full_profile"].mean_s == 1.0
    assert log.PhaseStats().mean_s == 0.0
