"""Binary transfer-set files and the preprocessed artifact directory.

Transfer set layout (little-endian, version 1)::

    header   4s magic "TBHX" | u16 version | u16 flags (bit 0 = reduced) | u32 horizon days | u32 rows
    row      u32 route | u32 trip | u16 stop slots
    slot     u32 transfer count
    transfer u32 to_route | u32 to_trip | u16 to_index | u8 day_shift | ceil(D/8) bytes valid days

Rows appear in (route, trip) order and a slot's transfers in their sorted
order, so equal sets serialize to equal bytes.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

from tbhorizon import log
from tbhorizon.errors import ErrorContext, FeedLoadError, SchemaError
from tbhorizon.ingest.canonical import load_canonical, save_canonical
from tbhorizon.model import DayBitset, Timetable
from tbhorizon.preprocess import PreprocessReport, Transfer, TransferSet

MAGIC = b"TBHX"
VERSION = 1
FLAG_REDUCED = 1

_HEADER = struct.Struct("<4sHHII")
_ROW = struct.Struct("<IIH")
_SLOT = struct.Struct("<I")
_TRANSFER = struct.Struct("<IIHB")

TIMETABLE_FILE = "timetable.jsonl"
FULL_FILE = "transfers.full.tbt"
REDUCED_FILE = "transfers.reduced.tbt"
REPORT_FILE = "preprocess.json"


def dump_transfer_set(transfers: TransferSet) -> bytes:
    horizon = transfers.horizon_days
    nbytes = (horizon + 7) // 8
    parts = [
        _HEADER.pack(MAGIC, VERSION, FLAG_REDUCED if transfers.reduced else 0, horizon, len(transfers.rows))
    ]
    for (route, trip), row in transfers.rows.items():
        parts.append(_ROW.pack(route, trip, len(row)))
        for per_stop in row:
            parts.append(_SLOT.pack(len(per_stop)))
            for tr in per_stop:
                parts.append(_TRANSFER.pack(tr.to_route, tr.to_trip, tr.to_index, tr.day_shift))
                parts.append(tr.valid_days.bits.to_bytes(nbytes, "little"))
    return b"".join(parts)


def load_transfer_set(data: bytes, source: str = "<bytes>") -> TransferSet:
    ctx = ErrorContext(file=source)
    try:
        magic, version, flags, horizon, n_rows = _HEADER.unpack_from(data, 0)
    except struct.error as exc:
        raise SchemaError("truncated transfer set header", ctx) from exc
    if magic != MAGIC:
        raise SchemaError(f"not a transfer set (magic {magic!r})", ctx)
    if version != VERSION:
        raise SchemaError(f"unsupported transfer set version {version}", ctx)
    nbytes = (horizon + 7) // 8
    offset = _HEADER.size
    rows = {}
    try:
        for _ in range(n_rows):
            route, trip, n_slots = _ROW.unpack_from(data, offset)
            offset += _ROW.size
            row = []
            for e in range(n_slots):
                (count,) = _SLOT.unpack_from(data, offset)
                offset += _SLOT.size
                slot = []
                for _ in range(count):
                    to_route, to_trip, to_index, shift = _TRANSFER.unpack_from(data, offset)
                    offset += _TRANSFER.size
                    bits = int.from_bytes(data[offset : offset + nbytes], "little")
                    offset += nbytes
                    slot.append(
                        Transfer(route, trip, e, to_route, to_trip, to_index, shift, DayBitset(bits, horizon))
                    )
                row.append(tuple(slot))
            rows[(route, trip)] = tuple(row)
    except struct.error as exc:
        raise SchemaError("truncated transfer set body", ctx) from exc
    if offset != len(data):
        raise SchemaError(f"{len(data) - offset} trailing bytes after transfer set", ctx)
    return TransferSet.from_rows(horizon, bool(flags & FLAG_REDUCED), rows)


def save_transfer_set(transfers: TransferSet, path: Path) -> Path:
    path = Path(path)
    path.write_bytes(dump_transfer_set(transfers))
    return path


def read_transfer_set(path: Path) -> TransferSet:
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise FeedLoadError(f"cannot read transfer set: {exc.strerror or exc}", ErrorContext(file=str(path))) from exc
    return load_transfer_set(data, source=str(path))


# ---------------------------------------------------------------------------
# Artifact directory
# ---------------------------------------------------------------------------


@dataclass
class Artifacts:
    """What ``tbhorizon preprocess`` leaves on disk, loaded back."""

    directory: Path
    timetable: Timetable
    reduced: TransferSet
    full: TransferSet | None = None


def write_artifacts(
    directory: Path, timetable: Timetable, report: PreprocessReport, *, write_full: bool = True
) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    save_canonical(timetable, directory / TIMETABLE_FILE)
    save_transfer_set(report.reduced, directory / REDUCED_FILE)
    if write_full:
        save_transfer_set(report.full, directory / FULL_FILE)
    (directory / REPORT_FILE).write_text(json.dumps(report.to_dict(), indent=2) + "\n", encoding="utf-8")
    log.emit("artifacts_written", directory=str(directory), **report.to_dict())
    return directory


def write_state(directory: Path, timetable: Timetable, reduced: TransferSet) -> Path:
    """Write a timetable and its reduced set (used after updates).

    The full set no longer matches, so it is removed and the report keeps
    only the reduced counts.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    save_canonical(timetable, directory / TIMETABLE_FILE)
    save_transfer_set(reduced, directory / REDUCED_FILE)
    stale = directory / FULL_FILE
    if stale.exists():
        stale.unlink()
    summary = {
        "reduced_transfers": reduced.count(),
        "reduced_day_instances": reduced.count_day_instances(),
        "updated": True,
    }
    (directory / REPORT_FILE).write_text(json.dumps(summary, indent=2) + "\n", encoding="utf-8")
    log.emit("state_written", directory=str(directory), **summary)
    return directory


def load_artifacts(directory: Path, *, with_full: bool = False) -> Artifacts:
    directory = Path(directory)
    if not directory.is_dir():
        raise FeedLoadError("artifact directory not found", ErrorContext(file=str(directory)))
    timetable = load_canonical(directory / TIMETABLE_FILE)
    reduced = read_transfer_set(directory / REDUCED_FILE)
    if reduced.horizon_days != timetable.horizon_days:
        raise SchemaError(
            f"transfer set spans {reduced.horizon_days} days, timetable {timetable.horizon_days}",
            ErrorContext(file=str(directory / REDUCED_FILE)),
        )
    full = None
    if with_full and (directory / FULL_FILE).exists():
        full = read_transfer_set(directory / FULL_FILE)
    return Artifacts(directory=directory, timetable=timetable, reduced=reduced, full=full)
