"""
Time Bucket definitions
A Time Bucket is a continuous or intermittent period of the month in which
every reading has the same price. A BucketSet must partition the month.
"""

import enum
import logging
from dataclasses import InitVar, dataclass
from decimal import Decimal
from typing import Dict, FrozenSet, Iterable, List, Optional, Sequence, Tuple

from models.domain import (
    DayType,
    MonthSpec,
    SLOTS_PER_DAY,
    SLOTS_PER_HOUR,
    SlotIndex,
)
from models.errors import InvalidTime, PartitionViolation

logger = logging.getLogger(__name__)


class PricingKind(str, enum.Enum):
    TOU = "TOU"
    CPP = "CPP"


def parse_hhmm(text: str) -> int:
    """'HH:MM' -> slot of day. '24:00' is accepted as the end of the day."""
    try:
        hours, minutes = (int(part) for part in text.strip().split(":"))
    except ValueError:
        raise InvalidTime("time", text)
    if minutes not in (0, 15, 30, 45) or not 0 <= hours <= 24 or (hours == 24 and minutes):
        raise InvalidTime("time", text)
    return hours * SLOTS_PER_HOUR + minutes // 15


@dataclass(frozen=True)
class BucketClause:
    """Half-open slot-of-day range on days of one type (or every day if day_type is None)"""
    day_type: Optional[DayType]
    start: int
    end: int
    days: Optional[FrozenSet[int]] = None  # restricts the clause to specific days of the month

    def __post_init__(self):
        if not 0 <= self.start <= self.end <= SLOTS_PER_DAY:
            raise InvalidTime("clause range", (self.start, self.end))
        if self.days is not None:
            object.__setattr__(self, "days", frozenset(self.days))

    @classmethod
    def from_hhmm(cls, day_type: Optional[DayType], start: str, end: str,
                  days: Optional[Iterable[int]] = None) -> "BucketClause":
        return cls(
            day_type=DayType(day_type) if day_type is not None else None,
            start=parse_hhmm(start),
            end=parse_hhmm(end),
            days=frozenset(days) if days is not None else None,
        )

    def matches(self, day: int, day_type: DayType, slot_of_day: int) -> bool:
        if self.day_type is not None and self.day_type != day_type:
            return False
        if self.days is not None and day not in self.days:
            return False
        return self.start <= slot_of_day < self.end


@dataclass(frozen=True)
class TimeBucket:
    id: int
    label: str
    price: Decimal
    clauses: Tuple[BucketClause, ...]
    exclusions: Tuple[BucketClause, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "price", Decimal(str(self.price)))
        object.__setattr__(self, "clauses", tuple(self.clauses))
        object.__setattr__(self, "exclusions", tuple(self.exclusions))
        if self.price < 0:
            raise ValueError(f"Bucket {self.label!r} has a negative price")

    def matches(self, day: int, day_type: DayType, slot_of_day: int) -> bool:
        if not any(c.matches(day, day_type, slot_of_day) for c in self.clauses):
            return False
        return not any(c.matches(day, day_type, slot_of_day) for c in self.exclusions)


@dataclass(frozen=True)
class BucketSet:
    buckets: Tuple[TimeBucket, ...]
    month: MonthSpec
    check_partition: InitVar[bool] = True

    def __post_init__(self, check_partition: bool):
        object.__setattr__(self, "buckets", tuple(self.buckets))
        for position, bucket in enumerate(self.buckets):
            if bucket.id != position:
                raise ValueError(f"Bucket {bucket.label!r} has id {bucket.id}, expected {position}")
        if check_partition:
            validate_partition(self)

    def __len__(self) -> int:
        return len(self.buckets)

    def __iter__(self):
        return iter(self.buckets)

    @property
    def prices(self) -> Tuple[Decimal, ...]:
        return tuple(b.price for b in self.buckets)

    @property
    def labels(self) -> Tuple[str, ...]:
        return tuple(b.label for b in self.buckets)

    def bucket_by_label(self, label: str) -> TimeBucket:
        for bucket in self.buckets:
            if bucket.label == label:
                return bucket
        raise KeyError(label)


@dataclass(frozen=True)
class PricingScheme:
    kind: PricingKind = PricingKind.TOU
    critical_clauses: Tuple[BucketClause, ...] = ()
    critical_price: Decimal = Decimal("0.40")
    critical_label: str = "critical-peak"

    def __post_init__(self):
        object.__setattr__(self, "kind", PricingKind(self.kind))
        object.__setattr__(self, "critical_clauses", tuple(self.critical_clauses))
        object.__setattr__(self, "critical_price", Decimal(str(self.critical_price)))

    @classmethod
    def tou(cls) -> "PricingScheme":
        return cls(PricingKind.TOU)

    @classmethod
    def cpp(cls, clauses: Sequence[BucketClause], price="0.40") -> "PricingScheme":
        return cls(PricingKind.CPP, tuple(clauses), Decimal(str(price)))


def matching_buckets(slot: int, bucket_set: BucketSet) -> List[int]:
    s = SlotIndex(int(slot))
    day_type = bucket_set.month.day_type(s.day)
    return [b.id for b in bucket_set.buckets if b.matches(s.day, day_type, s.slot_of_day)]


def classify(slot: int, bucket_set: BucketSet) -> int:
    """Bucket id of `slot`, by scanning the bucket predicates in declaration order"""
    s = SlotIndex(int(slot))
    day_type = bucket_set.month.day_type(s.day)
    for bucket in bucket_set.buckets:
        if bucket.matches(s.day, day_type, s.slot_of_day):
            return bucket.id
    raise PartitionViolation(int(slot), [])


def validate_partition(bucket_set: BucketSet) -> None:
    """Raise PartitionViolation for the first slot matching zero or several buckets"""
    for slot in range(bucket_set.month.slots_per_month):
        matches = matching_buckets(slot, bucket_set)
        if len(matches) != 1:
            raise PartitionViolation(slot, matches)


DEFAULT_PERIODS = (
    ("night", "00:00", "06:00"),
    ("morning", "06:00", "12:00"),
    ("afternoon", "12:00", "18:00"),
    ("evening", "18:00", "24:00"),
)

DEFAULT_PRICES: Dict[DayType, Tuple[str, ...]] = {
    DayType.WORKDAY: ("0.05", "0.10", "0.12", "0.20"),
    DayType.WEEKEND: ("0.04", "0.07", "0.08", "0.12"),
}

DEFAULT_CRITICAL_CLAUSE = BucketClause.from_hhmm(DayType.WORKDAY, "18:00", "20:00")


def apply_scheme(buckets: Sequence[TimeBucket], scheme: PricingScheme) -> List[TimeBucket]:
    """Re-partition base buckets for CPP: critical clauses are carved out
    of every base bucket and collected into one extra bucket."""
    if scheme.kind is PricingKind.TOU or not scheme.critical_clauses:
        return list(buckets)
    carved = [
        TimeBucket(b.id, b.label, b.price, b.clauses, b.exclusions + scheme.critical_clauses)
        for b in buckets
    ]
    carved.append(TimeBucket(len(carved), scheme.critical_label, scheme.critical_price,
                             scheme.critical_clauses))
    return carved


def default_bucket_set(month: Optional[MonthSpec] = None,
                       scheme: Optional[PricingScheme] = None,
                       prices: Optional[Dict[DayType, Sequence]] = None) -> BucketSet:
    """{workday, weekend} x {night, morning, afternoon, evening}"""
    month = month or MonthSpec()
    scheme = scheme or PricingScheme.tou()
    price_table = dict(DEFAULT_PRICES)
    price_table.update(prices or {})

    buckets = []
    for day_type in (DayType.WORKDAY, DayType.WEEKEND):
        for (name, start, end), price in zip(DEFAULT_PERIODS, price_table[day_type]):
            buckets.append(TimeBucket(
                id=len(buckets),
                label=f"{day_type.value}-{name}",
                price=Decimal(str(price)),
                clauses=(BucketClause.from_hhmm(day_type, start, end),),
            ))

    bucket_set = BucketSet(tuple(apply_scheme(buckets, scheme)), month)
    logger.debug(f"Built {scheme.kind.value} bucket set with {len(bucket_set)} buckets for {month.key}")
    return bucket_set


def bucket_set_from_config(entries: Sequence[dict], month: MonthSpec,
                           scheme: Optional[PricingScheme] = None) -> BucketSet:
    """Build a set from [{label, price, clauses: [{day_type, start, end, days?}]}]"""
    buckets = []
    for entry in entries:
        clauses = tuple(
            BucketClause.from_hhmm(c.get("day_type"), c["start"], c["end"], c.get("days"))
            for c in entry["clauses"]
        )
        buckets.append(TimeBucket(len(buckets), entry["label"], Decimal(str(entry["price"])), clauses))
    return BucketSet(tuple(apply_scheme(buckets, scheme or PricingScheme.tou())), month)
