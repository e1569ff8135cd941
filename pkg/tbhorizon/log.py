"""Structured JSONL logging for preprocessing, query and update runs.

One line per event: ``ts`` (wall clock), ``t`` (seconds since init), ``run``
and ``event``, followed by the event's own fields. Nothing is written until
:func:`init` names a log directory, so library code can emit freely.
"""

from __future__ import annotations

import json
import threading
import time
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Iterator

_lock = threading.Lock()


@dataclass
class _RunLog:
    path: Path | None = None
    run_id: str | None = None
    started: float | None = None


_run = _RunLog()


# ---------------------------------------------------------------------------
# Per-phase statistics
# ---------------------------------------------------------------------------


@dataclass
class PhaseStats:
    calls: int = 0
    elapsed_s: float = 0.0
    counts: dict[str, int] = field(default_factory=dict)

    @property
    def mean_s(self) -> float:
        return self.elapsed_s / self.calls if self.calls else 0.0


@dataclass
class RunStats:
    """Timings and counters per phase (``compute_transfers``, ``full_profile``, ...)."""

    phases: dict[str, PhaseStats] = field(default_factory=dict)

    def record_phase(self, name: str, elapsed_s: float, **counts: int) -> None:
        phase = self.phases.setdefault(name, PhaseStats())
        phase.calls += 1
        phase.elapsed_s += elapsed_s
        for key, value in counts.items():
            phase.counts[key] = phase.counts.get(key, 0) + int(value)

    @property
    def total_elapsed_s(self) -> float:
        return sum(p.elapsed_s for p in self.phases.values())


_run_stats = RunStats()


def init(log_dir: Path, run_id: str | None = None) -> Path:
    """Start a run log under *log_dir* and reset the phase stats. Returns the log path."""
    global _run, _run_stats

    from tbhorizon import __version__

    run_id = run_id or datetime.now(timezone.utc).strftime("%Y%m%d_%H%M%S")
    log_dir = Path(log_dir)
    log_dir.mkdir(parents=True, exist_ok=True)
    with _lock:
        _run = _RunLog(path=log_dir / f"{run_id}.jsonl", run_id=run_id, started=time.monotonic())
        _run_stats = RunStats()

    emit("run_init", log_dir=str(log_dir), version=__version__)
    return _run.path


def reset() -> None:
    """Stop writing events. Phase stats keep accumulating in memory."""
    global _run
    with _lock:
        _run = _RunLog()


def get_run_stats() -> RunStats:
    return _run_stats


def get_log_file() -> Path | None:
    return _run.path


def get_run_id() -> str | None:
    return _run.run_id


def _elapsed() -> float:
    return time.monotonic() - _run.started if _run.started is not None else 0.0


def emit(event: str, **data: Any) -> None:
    """Append one event to the run log; a no-op before :func:`init`."""
    run = _run
    if run.path is None:
        return
    record = {
        "ts": datetime.now(timezone.utc).isoformat(),
        "t": round(_elapsed(), 3),
        "run": run.run_id,
        "event": event,
        **data,
    }
    line = json.dumps(record, default=_serialize)
    with _lock:
        with open(run.path, "a", encoding="utf-8") as f:
            f.write(line + "\n")


def tprint(msg: str) -> None:
    """Print *msg*, prefixed with the run's elapsed time once a run is active."""
    if _run.started is None:
        print(f"  {msg}")
    else:
        print(f"  [{_elapsed():7.1f}s] {msg}")


# ---------------------------------------------------------------------------
# Terminal summary
# ---------------------------------------------------------------------------


def _fmt_time(s: float) -> str:
    if s < 1e-3:
        return f"{s * 1e6:.0f}us"
    if s < 1:
        return f"{s * 1000:.0f}ms"
    if s < 60:
        return f"{s:.1f}s"
    minutes, sec = divmod(s, 60)
    return f"{int(minutes)}m{sec:02.0f}s"


def _fmt_count(n: int) -> str:
    if n >= 1_000_000:
        return f"{n / 1_000_000:.1f}M"
    if n >= 10_000:
        return f"{n / 1000:.0f}k"
    return str(n)


def print_stats_table() -> None:
    """Print calls, total and mean time, and counters for each recorded phase."""
    stats = _run_stats
    if not stats.phases:
        return

    width = 78
    rule = "  " + "=" * width
    print()
    print(rule)
    print(f"  PHASE STATS{'total ' + _fmt_time(stats.total_elapsed_s):>{width - 11}}")
    print(rule)
    print(f"  {'phase':<22}{'calls':>6}{'total':>9}{'mean':>9}  counters")
    for name, phase in sorted(stats.phases.items()):
        counters = " ".join(f"{k}={_fmt_count(v)}" for k, v in sorted(phase.counts.items()))
        print(
            f"  {name:<22}{phase.calls:>6}{_fmt_time(phase.elapsed_s):>9}"
            f"{_fmt_time(phase.mean_s):>9}  {counters}"
        )
    print(rule)
    print()


# ---------------------------------------------------------------------------
# Reading logs back
# ---------------------------------------------------------------------------


def parse_events(log_file: Path, event: str | None = None) -> Iterator[dict[str, Any]]:
    """Yield the records of a JSONL log, optionally only those named *event*.

    Lines that are not JSON objects are skipped, so a log cut off mid-write
    still reads.
    """
    for raw_line in Path(log_file).read_text(encoding="utf-8").splitlines():
        try:
            record = json.loads(raw_line)
        except ValueError:
            continue
        if isinstance(record, dict) and (event is None or record.get("event") == event):
            yield record


def _serialize(obj: Any) -> Any:
    if isinstance(obj, Path):
        return str(obj)
    if isinstance(obj, (set, frozenset)):
        return sorted(obj)
    if hasattr(obj, "__dataclass_fields__"):
        return asdict(obj)
    if hasattr(obj, "item"):  # numpy scalars
        return obj.item()
    return repr(obj)
