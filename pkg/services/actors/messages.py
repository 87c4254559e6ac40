"""Messages exchanged by the CDPN, the CNs and the storage gateway. All are immutable."""

from dataclasses import dataclass
from typing import Optional, Tuple

from models.domain import DailyBatch, MonthSpec
from services.billing.mcb import BillingResult
from services.storage.formats import decode_daily_batch, encode_daily_batch
from services.tariff.buckets import BucketSet, PricingScheme


@dataclass(frozen=True)
class Collect:
    day: int


@dataclass(frozen=True)
class DailyData:
    """One CN's day. With payload serialization on, readings travel as XML bytes."""
    cn: int
    day: int
    batch: Optional[DailyBatch] = None
    payload: Optional[bytes] = None

    @classmethod
    def wrap(cls, batch: DailyBatch, month: MonthSpec, serialize: bool) -> "DailyData":
        if serialize:
            return cls(batch.cn, batch.day, payload=encode_daily_batch(month, batch))
        return cls(batch.cn, batch.day, batch=batch)

    def unwrap(self, month: MonthSpec) -> DailyBatch:
        if self.batch is not None:
            return self.batch
        return decode_daily_batch(month, self.payload)


@dataclass(frozen=True)
class InsertDone:
    cn: int
    day: int
    reading_count: int


@dataclass(frozen=True)
class BillRequest:
    bucket_set: BucketSet


@dataclass(frozen=True)
class BillResponse:
    cn: int
    result: BillingResult


@dataclass(frozen=True)
class RunDay:
    day: int


@dataclass(frozen=True)
class NextDay:
    pass


@dataclass(frozen=True)
class RunMonth:
    pass


@dataclass(frozen=True)
class DayCompleted:
    day: int
    seconds: float
    reading_count: int


@dataclass(frozen=True)
class MonthIngested:
    day_seconds: Tuple[float, ...]
    reading_count: int


@dataclass(frozen=True)
class RunBilling:
    """Bill the month; without a bucket set the CDPN builds the default one for `scheme`"""
    bucket_set: Optional[BucketSet] = None
    scheme: Optional[PricingScheme] = None
    worker_count: int = 1
