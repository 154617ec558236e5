"""Multi-entity panels and calendar typing."""

from __future__ import annotations

import datetime as _dt
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import pandas as pd

from .errors import DataError, ConfigError

HOUR = pd.Timedelta(hours=1)


def calendar_type(timestamp, holiday_flag: bool = False) -> int:
    """Calendar type in ``1..48`` for one timestamp.

    Weekday hours map to ``hour + 1``; weekend and holiday hours map to
    ``hour + 25``. The hour is the local clock hour of ``timestamp``.
    """
    ts = pd.Timestamp(timestamp)
    if ts.weekday() >= 5 or holiday_flag:
        return ts.hour + 25
    return ts.hour + 1


def _hour48(index: pd.DatetimeIndex, holidays: np.ndarray) -> np.ndarray:
    offday = (np.asarray(index.weekday) >= 5) | holidays
    return np.asarray(index.hour, dtype=np.int64) + np.where(offday, 25, 1)


def _daytype2(index: pd.DatetimeIndex, holidays: np.ndarray) -> np.ndarray:
    offday = (np.asarray(index.weekday) >= 5) | holidays
    return np.where(offday, 2, 1).astype(np.int64)


def _constant1(index: pd.DatetimeIndex, holidays: np.ndarray) -> np.ndarray:
    return np.ones(len(index), dtype=np.int64)


@dataclass(frozen=True)
class CalendarScheme:
    """Maps timestamps (plus holiday flags) onto types ``1..C``."""

    name: str
    C: int
    rule: Callable[[pd.DatetimeIndex, np.ndarray], np.ndarray] = field(repr=False, compare=False)

    def classify(self, timestamps, holiday_flags=None) -> np.ndarray:
        index = pd.DatetimeIndex(timestamps)
        if holiday_flags is None:
            holiday_flags = np.zeros(len(index), dtype=bool)
        return self.rule(index, np.asarray(holiday_flags, dtype=bool))


SCHEMES = {
    "hour48": CalendarScheme("hour48", 48, _hour48),
    "daytype2": CalendarScheme("daytype2", 2, _daytype2),
    "constant1": CalendarScheme("constant1", 1, _constant1),
}


def get_scheme(name: str) -> CalendarScheme:
    try:
        return SCHEMES[name]
    except KeyError:
        raise ConfigError(f"unknown calendar scheme {name!r}; choose from {sorted(SCHEMES)}") from None


def holiday_flags_for(timestamps, holidays: Sequence[_dt.date] | None) -> np.ndarray:
    index = pd.DatetimeIndex(timestamps)
    if not holidays:
        return np.zeros(len(index), dtype=bool)
    wanted = {pd.Timestamp(d).date() for d in holidays}
    return np.fromiter((d in wanted for d in index.date), dtype=bool, count=len(index))


@dataclass
class EntityPanel:
    """Aligned hourly loads and temperatures for ``K`` entities.

    ``loads`` and ``temperatures`` are ``T x K`` float arrays, temperatures
    in degrees Fahrenheit. Construction validates shape, regular hourly
    spacing and finiteness.
    """

    entity_ids: list
    timestamps: pd.DatetimeIndex
    loads: np.ndarray
    temperatures: np.ndarray
    holiday_flags: np.ndarray = None

    def __post_init__(self):
        self.entity_ids = [str(e) for e in self.entity_ids]
        self.timestamps = pd.DatetimeIndex(self.timestamps)
        self.loads = np.ascontiguousarray(self.loads, dtype=np.float64)
        self.temperatures = np.ascontiguousarray(self.temperatures, dtype=np.float64)
        T = len(self.timestamps)
        if self.holiday_flags is None:
            self.holiday_flags = np.zeros(T, dtype=bool)
        self.holiday_flags = np.asarray(self.holiday_flags, dtype=bool)

        K = len(self.entity_ids)
        if K < 1:
            raise DataError("panel needs at least one entity")
        if len(set(self.entity_ids)) != K:
            raise DataError("duplicate entity ids")
        for name in ("loads", "temperatures"):
            arr = getattr(self, name)
            if arr.shape != (T, K):
                raise DataError(f"{name} has shape {arr.shape}, expected {(T, K)}")
            if not np.all(np.isfinite(arr)):
                t, k = np.argwhere(~np.isfinite(arr))[0]
                raise DataError(f"non-finite {name[:-1]} for entity {self.entity_ids[k]} at {self.timestamps[t]}")
        if self.holiday_flags.shape != (T,):
            raise DataError("holiday_flags must have one entry per timestamp")
        if T > 1:
            steps = np.diff(self.timestamps.asi8)
            bad = np.flatnonzero(steps != HOUR.value)
            if bad.size:
                i = bad[0]
                raise DataError(
                    f"timestamps must advance by exactly one hour; "
                    f"{self.timestamps[i]} -> {self.timestamps[i + 1]}"
                )

    @property
    def K(self) -> int:
        return len(self.entity_ids)

    @property
    def T(self) -> int:
        return len(self.timestamps)

    def calendar_types(self, scheme: CalendarScheme | str = "hour48") -> np.ndarray:
        if isinstance(scheme, str):
            scheme = get_scheme(scheme)
        return scheme.classify(self.timestamps, self.holiday_flags)

    def slice(self, start: int, stop: int) -> "EntityPanel":
        return EntityPanel(
            list(self.entity_ids),
            self.timestamps[start:stop],
            self.loads[start:stop],
            self.temperatures[start:stop],
            self.holiday_flags[start:stop],
        )
