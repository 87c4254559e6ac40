"""Core value types: slots, households, months, readings and datasets.

Energy is carried as integer watt-hours throughout, i.e. kWh with exactly
three fractional digits. Sums of watt-hours are exact in any order, which is
what lets every storage architecture produce bit-identical bills.
"""

from __future__ import annotations

import calendar
import enum
from collections import Counter
from dataclasses import dataclass, field
from datetime import date, datetime, time, timedelta
from decimal import Decimal
from typing import FrozenSet, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from models.errors import (
    DuplicateSlot,
    InvalidReading,
    InvalidTime,
    MissingSlot,
    MixedHouseholds,
)

SLOTS_PER_DAY = 96
MINUTES_PER_SLOT = 15
SLOTS_PER_HOUR = 60 // MINUTES_PER_SLOT
DEFAULT_MONTH_DAYS = 31
HOUSEHOLDS_PER_CN_LIMIT = 1_000_000

WH_PER_KWH = 1000
WH_DTYPE = np.int64


class DayType(str, enum.Enum):
    WORKDAY = "workday"
    WEEKEND = "weekend"


class Architecture(str, enum.Enum):
    A1 = "A1"  # single relational store
    A2 = "A2"  # one relational store per CN
    A3 = "A3"  # key-value monthly append, in-memory billing
    A4 = "A4"  # file system + metadata table, in-memory billing

    @property
    def bills_in_memory(self) -> bool:
        return self in (Architecture.A3, Architecture.A4)

    @property
    def stores_at_cn(self) -> bool:
        """Whether the CN writes to storage itself instead of forwarding to the CDPN"""
        return self in (Architecture.A2, Architecture.A4)


def wh_to_kwh(wh: int) -> Decimal:
    return Decimal(int(wh)).scaleb(-3)


def kwh_to_wh(kwh) -> int:
    """Convert a kWh amount (str, Decimal, int or float) to watt-hours."""
    value = Decimal(str(kwh)) * WH_PER_KWH
    if value != value.to_integral_value():
        raise ValueError(f"{kwh} kWh has more than 3 fractional digits")
    return int(value)


@dataclass(frozen=True, order=True)
class HouseholdId:
    cn: int
    local_index: int

    def __post_init__(self):
        if self.cn < 0 or not 0 <= self.local_index < HOUSEHOLDS_PER_CN_LIMIT:
            raise ValueError(f"Invalid household id ({self.cn}, {self.local_index})")

    @property
    def serial(self) -> int:
        """Globally unique integer, used for file naming and sharding"""
        return self.cn * HOUSEHOLDS_PER_CN_LIMIT + self.local_index

    @classmethod
    def from_serial(cls, serial: int) -> "HouseholdId":
        return cls(serial // HOUSEHOLDS_PER_CN_LIMIT, serial % HOUSEHOLDS_PER_CN_LIMIT)

    @classmethod
    def parse(cls, text: str) -> "HouseholdId":
        cn, local = text.split("-")
        return cls(int(cn), int(local))

    def __str__(self) -> str:
        return f"{self.cn}-{self.local_index}"


@dataclass(frozen=True)
class MonthSpec:
    year: int = 2009
    month: int = 1
    days: int = DEFAULT_MONTH_DAYS
    weekend_days: FrozenSet[int] = frozenset({5, 6})  # Saturday, Sunday
    partial: bool = False  # toy months shorter than a calendar month

    def __post_init__(self):
        if not 1 <= self.month <= 12:
            raise InvalidTime("month", self.month)
        low = 1 if self.partial else 28
        if not low <= self.days <= 31:
            raise InvalidTime("days", self.days)
        object.__setattr__(self, "weekend_days", frozenset(self.weekend_days))
        if any(not 0 <= d <= 6 for d in self.weekend_days):
            raise InvalidTime("weekend_days", sorted(self.weekend_days))

    @classmethod
    def calendar_month(cls, year: int, month: int, **kwargs) -> "MonthSpec":
        return cls(year=year, month=month, days=calendar.monthrange(year, month)[1], **kwargs)

    @classmethod
    def toy(cls, days: int, **kwargs) -> "MonthSpec":
        return cls(days=days, partial=True, **kwargs)

    @property
    def key(self) -> str:
        return f"{self.year:04d}-{self.month:02d}"

    @property
    def slots_per_month(self) -> int:
        return SLOTS_PER_DAY * self.days

    def weekday(self, day: int) -> int:
        return (date(self.year, self.month, 1).weekday() + day) % 7

    def day_type(self, day: int) -> DayType:
        if not 0 <= day < self.days:
            raise InvalidTime("day", day)
        return DayType.WEEKEND if self.weekday(day) in self.weekend_days else DayType.WORKDAY

    def day_types(self) -> Tuple[DayType, ...]:
        return tuple(self.day_type(d) for d in range(self.days))

    def days_of_type(self, day_type: DayType) -> Tuple[int, ...]:
        return tuple(d for d in range(self.days) if self.day_type(d) == day_type)

    def timestamp(self, slot: int) -> datetime:
        s = SlotIndex(slot)
        day = date(self.year, self.month, 1) + timedelta(days=s.day)
        return datetime.combine(day, time(s.hour, s.minute))


@dataclass(frozen=True, order=True)
class SlotIndex:
    value: int

    def __post_init__(self):
        if self.value < 0:
            raise InvalidTime("slot", self.value)

    @property
    def day(self) -> int:
        return self.value // SLOTS_PER_DAY

    @property
    def slot_of_day(self) -> int:
        return self.value % SLOTS_PER_DAY

    @property
    def hour(self) -> int:
        return self.slot_of_day // SLOTS_PER_HOUR

    @property
    def minute(self) -> int:
        return (self.slot_of_day % SLOTS_PER_HOUR) * MINUTES_PER_SLOT

    def __int__(self) -> int:
        return self.value

    def __index__(self) -> int:
        return self.value


def slot_index(day: int, hour: int, minute: int, month: Optional[MonthSpec] = None) -> SlotIndex:
    days = month.days if month is not None else DEFAULT_MONTH_DAYS
    if not 0 <= day < days:
        raise InvalidTime("day", day)
    if not 0 <= hour < 24:
        raise InvalidTime("hour", hour)
    if minute not in (0, 15, 30, 45):
        raise InvalidTime("minute", minute)
    return SlotIndex(day * SLOTS_PER_DAY + hour * SLOTS_PER_HOUR + minute // MINUTES_PER_SLOT)


@dataclass(frozen=True)
class MeterReading:
    household: HouseholdId
    slot: int
    wh: int

    @property
    def kwh(self) -> Decimal:
        return wh_to_kwh(self.wh)

    @classmethod
    def from_kwh(cls, household: HouseholdId, slot: int, kwh) -> "MeterReading":
        return cls(household, int(slot), kwh_to_wh(kwh))


def validate_household_month(readings: Sequence[MeterReading], month: Optional[MonthSpec] = None) -> None:
    """Raise unless `readings` is one complete household-month.

    Slots are scanned in ascending order; at a given slot a duplicate is
    reported before a gap.
    """
    month = month or MonthSpec()
    households = sorted({r.household for r in readings})
    if len(households) > 1:
        raise MixedHouseholds(households)

    n = month.slots_per_month
    for r in readings:
        if r.wh < 0:
            raise InvalidReading(r.household, r.slot, r.kwh)
        if not 0 <= r.slot < n:
            raise InvalidTime("slot", r.slot)

    counts = Counter(r.slot for r in readings)
    for slot in range(n):
        seen = counts.get(slot, 0)
        if seen > 1:
            raise DuplicateSlot(slot)
        if seen == 0:
            raise MissingSlot(slot)


def readings_from_row(household: HouseholdId, wh_row: Iterable[int]) -> List[MeterReading]:
    return [MeterReading(household, slot, int(wh)) for slot, wh in enumerate(wh_row)]


def _frozen(array: np.ndarray) -> np.ndarray:
    array = np.ascontiguousarray(array, dtype=WH_DTYPE)
    array.flags.writeable = False
    return array


@dataclass(frozen=True)
class DailyBatch:
    """One CN's readings for one day: row i belongs to households[i]"""
    cn: int
    day: int
    households: Tuple[HouseholdId, ...]
    wh: np.ndarray = field(repr=False)

    def __post_init__(self):
        object.__setattr__(self, "households", tuple(self.households))
        object.__setattr__(self, "wh", _frozen(self.wh).reshape(len(self.households), SLOTS_PER_DAY))

    @property
    def reading_count(self) -> int:
        return int(self.wh.size)

    def first_slot(self) -> int:
        return self.day * SLOTS_PER_DAY

    def readings(self) -> List[MeterReading]:
        base = self.first_slot()
        return [
            MeterReading(hid, base + s, int(self.wh[i, s]))
            for i, hid in enumerate(self.households)
            for s in range(SLOTS_PER_DAY)
        ]


@dataclass(frozen=True)
class MonthData:
    """Complete household-months: row i holds households[i]'s readings in slot order"""
    month: MonthSpec
    households: Tuple[HouseholdId, ...]
    wh: np.ndarray = field(repr=False)

    def __post_init__(self):
        object.__setattr__(self, "households", tuple(self.households))
        wh = _frozen(self.wh)
        if wh.size == 0:
            wh = wh.reshape(0, self.month.slots_per_month)
        object.__setattr__(self, "wh", wh)

    def __len__(self) -> int:
        return len(self.households)

    @property
    def total_wh(self) -> int:
        return int(self.wh.sum())

    def household_readings(self, index: int) -> List[MeterReading]:
        return readings_from_row(self.households[index], self.wh[index])

    def day_batch(self, cn: int, day: int) -> DailyBatch:
        rows = [i for i, h in enumerate(self.households) if h.cn == cn]
        start = day * SLOTS_PER_DAY
        return DailyBatch(
            cn=cn,
            day=day,
            households=[self.households[i] for i in rows],
            wh=self.wh[rows, start:start + SLOTS_PER_DAY],
        )

    def same_as(self, other: "MonthData") -> bool:
        return (
            self.month == other.month
            and self.households == other.households
            and np.array_equal(self.wh, other.wh)
        )
