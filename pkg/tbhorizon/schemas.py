"""Pydantic schemas for engine configuration, canonical feed records and edit streams.

Validated at load time so that bad files fail with a record-level message
instead of deep inside preprocessing.
"""

from __future__ import annotations

import os
from datetime import date
from pathlib import Path
from typing import Annotated, Literal, Optional, Union

from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field, TypeAdapter, field_validator, model_validator


DEFAULT_START_DATE = date(2024, 1, 1)  # a Monday

_ENV_VARS = {
    "delta_max": "TBH_DELTA_MAX",
    "view_horizon": "TBH_VIEW_HORIZON",
    "cache_capacity": "TBH_CACHE_CAPACITY",
    "max_transfers": "TBH_MAX_TRANSFERS",
    "workers": "TBH_WORKERS",
    "log_dir": "TBH_LOG_DIR",
}


class EngineConfig(BaseModel):
    """Tunables shared by preprocessing, extraction, queries and the oracle.

    Example:
        EngineConfig(delta_max=2, view_horizon=2, workers=4)
    """

    model_config = ConfigDict(frozen=True)

    delta_max: int = Field(
        default=2,
        ge=0,
        le=7,
        description="Largest day shift a transfer may target (0 = same day)",
    )
    view_horizon: int = Field(
        default=2,
        ge=1,
        description="Days after the query day covered by a day view",
    )
    cache_capacity: int = Field(
        default=8,
        ge=1,
        description="Day views kept by the LRU cache",
    )
    max_transfers: int = Field(
        default=15,
        ge=0,
        le=64,
        description="Rounds a query may run (journeys use at most this many transfers)",
    )
    workers: int = Field(
        default_factory=lambda: os.cpu_count() or 1,
        ge=1,
        description="Threads for per-trip preprocessing work",
    )
    oracle_event_limit: int = Field(
        default=100_000,
        ge=1,
        description="Largest event graph the reference search will build",
    )
    oracle_max_transfers: int = Field(default=15, ge=0, le=64)
    debug_checks: bool = Field(
        default=False,
        description="Re-check reached-set antichains and journey chaining while querying",
    )
    log_dir: Optional[Path] = Field(
        default=None,
        description="Directory for JSONL run logs (None = no log file)",
    )

    @classmethod
    def from_env(cls, **overrides: object) -> EngineConfig:
        """Build a config from TBH_* environment variables (and .env), then *overrides*."""
        load_dotenv()
        values: dict[str, object] = {}
        for field_name, var in _ENV_VARS.items():
            raw = os.environ.get(var)
            if raw not in (None, ""):
                values[field_name] = raw
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)


# ---------------------------------------------------------------------------
# Canonical feed records
# ---------------------------------------------------------------------------


class FeedHeader(BaseModel):
    """First line of a canonical feed."""

    version: Literal[1] = 1
    horizon_days: int = Field(..., ge=1)
    start_date: date = DEFAULT_START_DATE


class StopRecord(BaseModel):
    type: Literal["stop"] = "stop"
    id: str = Field(..., min_length=1)
    name: str = ""
    min_change_time: int = Field(default=0, ge=0)


class FootpathRecord(BaseModel):
    model_config = ConfigDict(populate_by_name=True)

    type: Literal["footpath"] = "footpath"
    from_stop: str = Field(..., alias="from", min_length=1)
    to_stop: str = Field(..., alias="to", min_length=1)
    duration: int = Field(..., gt=0)

    @model_validator(mode="after")
    def _distinct_ends(self) -> FootpathRecord:
        if self.from_stop == self.to_stop:
            raise ValueError("footpath endpoints must differ")
        return self


class RouteRecord(BaseModel):
    type: Literal["route"] = "route"
    id: int = Field(..., ge=0)
    stops: list[str] = Field(..., min_length=2)


class TripRecord(BaseModel):
    """One trip: stop ids, per-stop times in seconds, and its active days.

    ``days`` is either a '0'/'1' string of horizon length (bit 0 first) or a
    list of day indices.
    """

    type: Literal["trip"] = "trip"
    route: Optional[int] = Field(default=None, ge=0)
    label: str = ""
    stops: list[str] = Field(..., min_length=2)
    arr: list[int]
    dep: list[int]
    days: Union[str, list[int]]

    @field_validator("arr", "dep")
    @classmethod
    def _non_negative(cls, v: list[int]) -> list[int]:
        if any(t < 0 for t in v):
            raise ValueError("times must be >= 0")
        return v

    @field_validator("days")
    @classmethod
    def _day_string(cls, v: Union[str, list[int]]) -> Union[str, list[int]]:
        if isinstance(v, str) and set(v) - {"0", "1"}:
            raise ValueError("day string must contain only '0' and '1'")
        return v

    @model_validator(mode="after")
    def _lengths(self) -> TripRecord:
        if not (len(self.stops) == len(self.arr) == len(self.dep)):
            raise ValueError("stops, arr and dep must have equal length")
        return self


class ChangeOverrideRecord(BaseModel):
    type: Literal["change_override"] = "change_override"
    stop: str = Field(..., min_length=1)
    from_route: int = Field(..., ge=0)
    to_route: int = Field(..., ge=0)
    seconds: int = Field(..., ge=0)


FeedRecord = Annotated[
    Union[StopRecord, FootpathRecord, RouteRecord, TripRecord, ChangeOverrideRecord],
    Field(discriminator="type"),
]
FEED_RECORD_ADAPTER: TypeAdapter[FeedRecord] = TypeAdapter(FeedRecord)


# ---------------------------------------------------------------------------
# Edit stream records
# ---------------------------------------------------------------------------


class RemoveEditRecord(BaseModel):
    op: Literal["remove"] = "remove"
    route: int = Field(..., ge=0)
    trip: int = Field(..., ge=0)
    days: Union[str, list[int]]


class AddEditRecord(BaseModel):
    op: Literal["add"] = "add"
    label: str = ""
    stops: list[str] = Field(..., min_length=2)
    arr: list[int]
    dep: list[int]
    days: Union[str, list[int]]

    @model_validator(mode="after")
    def _lengths(self) -> AddEditRecord:
        if not (len(self.stops) == len(self.arr) == len(self.dep)):
            raise ValueError("stops, arr and dep must have equal length")
        return self


class DelayEditRecord(BaseModel):
    op: Literal["delay"] = "delay"
    route: int = Field(..., ge=0)
    trip: int = Field(..., ge=0)
    day: int = Field(..., ge=0)
    delta: Union[int, list[int]] = Field(..., description="Seconds, one value or one per stop")

    @field_validator("delta")
    @classmethod
    def _non_negative(cls, v: Union[int, list[int]]) -> Union[int, list[int]]:
        values = [v] if isinstance(v, int) else v
        if any(d < 0 for d in values):
            raise ValueError("delays must be >= 0; early running needs remove + add")
        return v


EditRecord = Annotated[
    Union[RemoveEditRecord, AddEditRecord, DelayEditRecord],
    Field(discriminator="op"),
]
EDIT_RECORD_ADAPTER: TypeAdapter[EditRecord] = TypeAdapter(EditRecord)


# Validators for type checking config files at load time

def validate_engine_config(data: dict) -> EngineConfig:
    """Validate an engine config dict, raising if invalid."""
    return EngineConfig(**data)


def validate_feed_record(data: dict) -> FeedRecord:
    """Validate one canonical feed record (any type)."""
    return FEED_RECORD_ADAPTER.validate_python(data)


def validate_edit_record(data: dict) -> EditRecord:
    """Validate one edit-stream record (any op)."""
    return EDIT_RECORD_ADAPTER.validate_python(data)
