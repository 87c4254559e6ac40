"""
Backend contract shared by the four storage architectures.

A backend holds one month at a time: begin_month, one insert_daily per
(CN, day), finalize_month, then compute_bill. load_month reads the whole
month back from persistent storage, which is the cold-start path.
"""

import logging
import threading
import time
from abc import ABC, abstractmethod
from collections import defaultdict
from contextlib import contextmanager
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Set, Tuple, Union

import numpy as np

from models.domain import Architecture, DailyBatch, HouseholdId, MonthData, MonthSpec, WH_DTYPE
from models.errors import (
    BatchMismatch,
    DuplicateBatch,
    IncompleteMonth,
    InvalidTime,
    MonthAlreadyInitialized,
    MonthNotInitialized,
)
from services.billing.mcb import BillingJob, BillingResult, bill_all
from services.tariff.buckets import BucketSet
from services.tariff.mask import build_mask

logger = logging.getLogger(__name__)


class ConcurrencyGauge:
    """Counts how many callers are inside a section at once"""

    def __init__(self):
        self._lock = threading.Lock()
        self.active = 0
        self.max_active = 0
        self.entries = 0

    def __enter__(self):
        with self._lock:
            self.active += 1
            self.entries += 1
            self.max_active = max(self.max_active, self.active)
        return self

    def __exit__(self, exc_type, exc, tb):
        with self._lock:
            self.active -= 1
        return False


class OperationTimer:
    def __init__(self):
        self._lock = threading.Lock()
        self._samples: Dict[str, List[float]] = defaultdict(list)

    @contextmanager
    def measure(self, operation: str):
        start = time.perf_counter()
        try:
            yield
        finally:
            elapsed = time.perf_counter() - start
            with self._lock:
                self._samples[operation].append(elapsed)

    def summary(self) -> Dict[str, float]:
        with self._lock:
            result = {}
            for operation, samples in self._samples.items():
                result[f"{operation}_count"] = float(len(samples))
                result[f"{operation}_seconds_total"] = float(sum(samples))
            return result


class MonthBuffer:
    """CDPN memory buffer: the month's readings as one (households x slots) array"""

    def __init__(self, month: MonthSpec, households: Sequence[HouseholdId]):
        self.month = month
        self.households = tuple(households)
        self.wh = np.zeros((len(self.households), month.slots_per_month), dtype=WH_DTYPE)
        self._rows = {household: row for row, household in enumerate(self.households)}
        self._filled: Set[Tuple[int, int]] = set()
        self._expected = len({h.cn for h in self.households}) * month.days
        self._lock = threading.Lock()

    def put(self, batch: DailyBatch) -> None:
        rows = [self._rows[h] for h in batch.households]
        start = batch.first_slot()
        # CNs own disjoint rows, so concurrent puts never touch the same cells
        self.wh[rows, start:start + batch.wh.shape[1]] = batch.wh
        with self._lock:
            self._filled.add((batch.cn, batch.day))

    @property
    def complete(self) -> bool:
        with self._lock:
            return len(self._filled) == self._expected

    def to_month_data(self) -> MonthData:
        return MonthData(self.month, self.households, self.wh.copy())


class StorageBackend(ABC):
    architecture: Architecture

    def __init__(self, root: Union[str, Path]):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.month: Optional[MonthSpec] = None
        self.households: Tuple[HouseholdId, ...] = ()
        self.finalized = False
        self.timer = OperationTimer()
        self.writers = ConcurrencyGauge()
        self._by_cn: Dict[int, Tuple[HouseholdId, ...]] = {}
        self._ingested: Dict[int, Set[int]] = {}
        self._lock = threading.Lock()

    # month lifecycle

    @property
    def cns(self) -> List[int]:
        return sorted(self._by_cn)

    def households_of(self, cn: int) -> Tuple[HouseholdId, ...]:
        return self._by_cn.get(cn, ())

    def begin_month(self, month: MonthSpec, households: Sequence[HouseholdId]) -> None:
        if self.month is not None:
            raise MonthAlreadyInitialized(self.month.key)
        self._set_month(month, households)
        self._begin_month()
        logger.info(f"{self.architecture.value}: month {month.key} started with "
                    f"{len(self.households)} households on {len(self._by_cn)} CN(s)")

    def _set_month(self, month: MonthSpec, households: Sequence[HouseholdId]) -> None:
        self.month = month
        self.households = tuple(sorted(households))
        by_cn: Dict[int, List[HouseholdId]] = defaultdict(list)
        for household in self.households:
            by_cn[household.cn].append(household)
        self._by_cn = {cn: tuple(members) for cn, members in by_cn.items()}
        self._ingested = {cn: set() for cn in self._by_cn}
        self.finalized = False

    def _require_month(self) -> MonthSpec:
        if self.month is None:
            raise MonthNotInitialized()
        return self.month

    def insert_daily(self, batch: DailyBatch) -> None:
        """Store one CN's readings for one day. Safe to call from several threads."""
        month = self._require_month()
        if not 0 <= batch.day < month.days:
            raise InvalidTime("day", batch.day)
        if batch.households != self.households_of(batch.cn):
            raise BatchMismatch(batch.cn, batch.day, "households differ from the CN's registered households")

        self._claim(batch.cn, batch.day)
        try:
            with self.timer.measure("insert_daily"):
                self._insert_daily(batch)
        except BaseException:
            with self._lock:
                self._ingested[batch.cn].discard(batch.day)
            raise

        logger.debug(f"{self.architecture.value}: stored CN {batch.cn} day {batch.day} "
                     f"({batch.reading_count} readings)")
        with self._lock:
            day_done = all(batch.day in days for days in self._ingested.values())
        if day_done:
            self._on_day_complete(batch.day)

    def _claim(self, cn: int, day: int) -> None:
        with self._lock:
            if day in self._ingested[cn]:
                raise DuplicateBatch(cn, day)
            self._ingested[cn].add(day)

    def ingested_days(self, cn: int) -> Set[int]:
        with self._lock:
            return set(self._ingested.get(cn, ()))

    def finalize_month(self) -> None:
        month = self._require_month()
        with self._lock:
            for cn in sorted(self._ingested):
                missing = sorted(set(range(month.days)) - self._ingested[cn])
                if missing:
                    raise IncompleteMonth(detail=f"CN {cn} is missing {len(missing)} day(s), first {missing[0]}")
        self._finalize_month()
        self.finalized = True
        logger.info(f"{self.architecture.value}: month {month.key} finalized")

    def compute_bill(self, bucket_set: BucketSet, worker_count: int = 1) -> BillingResult:
        month = self._require_month()
        if bucket_set.month != month:
            raise ValueError(f"Bucket set is for {bucket_set.month.key}, store holds {month.key}")
        if not self.finalized:
            self.finalize_month()
        with self.timer.measure("compute_bill"):
            result = self._compute_bill(bucket_set, worker_count)
        logger.info(f"{self.architecture.value}: billed {len(result)} households")
        return result

    def load_month(self) -> MonthData:
        """Read the full month back from persistent storage"""
        self._require_month()
        with self.timer.measure("load_month"):
            return self._load_month()

    def metrics(self) -> Dict[str, float]:
        result = self.timer.summary()
        result["max_concurrent_writers"] = float(self.writers.max_active)
        result.update(self._extra_metrics())
        return result

    def close(self) -> None:
        pass

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        self.close()
        return False

    # architecture hooks

    def _begin_month(self) -> None:
        pass

    @abstractmethod
    def _insert_daily(self, batch: DailyBatch) -> None:
        ...

    def _on_day_complete(self, day: int) -> None:
        pass

    def _finalize_month(self) -> None:
        pass

    @abstractmethod
    def _compute_bill(self, bucket_set: BucketSet, worker_count: int) -> BillingResult:
        ...

    @abstractmethod
    def _load_month(self) -> MonthData:
        ...

    def _extra_metrics(self) -> Dict[str, float]:
        return {}


class BufferedBackend(StorageBackend):
    """Architectures that bill in memory with MCB.

    Ingest keeps a copy of every batch in the CDPN buffer. Billing reads the
    buffer when it holds the whole month and falls back to a cold start from
    storage otherwise.
    """

    def __init__(self, root: Union[str, Path]):
        super().__init__(root)
        self.buffer: Optional[MonthBuffer] = None

    def _begin_month(self) -> None:
        self.buffer = MonthBuffer(self.month, self.households)

    def resume(self, month: MonthSpec) -> None:
        """Attach to a month already in storage, with an empty buffer"""
        if self.month is not None:
            raise MonthAlreadyInitialized(self.month.key)
        self._set_month(month, self._stored_households(month))
        self._ingested = {cn: set(range(month.days)) for cn in self._by_cn}
        self.finalized = True
        self.buffer = None
        logger.info(f"{self.architecture.value}: resumed {month.key} with {len(self.households)} households")

    @abstractmethod
    def _stored_households(self, month: MonthSpec) -> List[HouseholdId]:
        ...

    def _compute_bill(self, bucket_set: BucketSet, worker_count: int) -> BillingResult:
        if self.buffer is not None and self.buffer.complete:
            households, readings = self.buffer.households, self.buffer.wh
        else:
            data = self.load_month()
            households, readings = data.households, data.wh
        job = BillingJob(households, readings, build_mask(bucket_set), bucket_set.prices, worker_count)
        return bill_all(job)


def file_bytes(*paths: Path) -> int:
    return sum(p.stat().st_size for p in paths if p.exists())
