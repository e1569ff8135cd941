"""tbhorizon: trip-based journey planning over long timetable horizons."""

__version__ = "0.1.0"

from tbhorizon import log
from tbhorizon.model import (
    DayBitset,
    Footpath,
    Route,
    Stop,
    Timetable,
    Trip,
    TripRef,
    abs_time,
    pack_trip_ref,
    unpack_trip_ref,
)
from tbhorizon.schemas import EngineConfig
