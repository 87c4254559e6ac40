"""
Relational architectures: one row per reading.

A1 keeps every CN's readings in one store and applies batch inserts through
a single writer queue in arrival order. A2 gives each CN its own store, so
inserts for different CNs proceed in parallel and billing runs per store.
In both, billing is a declarative query that classifies each row into its
Time Bucket and sums per (household, bucket).
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import numpy as np
import pandas as pd
from sqlalchemy import and_, case, delete, false, func, insert, not_, or_, select
from sqlalchemy.exc import IntegrityError

from config import settings
from models.database import create_store_engine, session_factory, sqlite_url
from models.domain import Architecture, DailyBatch, HouseholdId, MonthData, MonthSpec, SLOTS_PER_DAY, WH_DTYPE
from models.errors import DuplicateBatch, IncompleteMonth, SmartGridError, StoreError
from models.storage import IngestBatch, MeterReadingRow
from services.billing.mcb import BillingResult
from services.storage.base import ConcurrencyGauge, StorageBackend, file_bytes
from services.tariff.buckets import BucketClause, BucketSet, TimeBucket

logger = logging.getLogger(__name__)


def clause_condition(clause: BucketClause, month: MonthSpec):
    days = [
        d for d in range(month.days)
        if (clause.day_type is None or month.day_type(d) == clause.day_type)
        and (clause.days is None or d in clause.days)
    ]
    if not days or clause.start >= clause.end:
        return false()
    return and_(
        MeterReadingRow.day.in_(days),
        MeterReadingRow.slot_of_day >= clause.start,
        MeterReadingRow.slot_of_day < clause.end,
    )


def bucket_condition(bucket: TimeBucket, month: MonthSpec):
    included = or_(*(clause_condition(c, month) for c in bucket.clauses))
    if not bucket.exclusions:
        return included
    return and_(included, not_(or_(*(clause_condition(c, month) for c in bucket.exclusions))))


def bucket_case(bucket_set: BucketSet):
    """SQL expression giving each reading row its bucket id (-1 if none)"""
    return case(
        *((bucket_condition(b, bucket_set.month), b.id) for b in bucket_set.buckets),
        else_=-1,
    )


class RelationalStore:
    """One embedded tabular store of reading rows"""

    def __init__(self, url: str, path: Optional[Path] = None, name: str = "store"):
        self.name = name
        self.path = path
        self.engine = create_store_engine(url, [MeterReadingRow.__table__, IngestBatch.__table__])
        self.Session = session_factory(self.engine)
        self.gauge = ConcurrencyGauge()

    def reset(self) -> None:
        with self.Session() as session, session.begin():
            session.execute(delete(MeterReadingRow))
            session.execute(delete(IngestBatch))

    def insert_batch(self, batch: DailyBatch) -> None:
        """Apply one daily batch atomically"""
        first = batch.first_slot()
        slots = list(range(first, first + SLOTS_PER_DAY))
        rows = [
            {
                "household_serial": household.serial,
                "slot": slot,
                "day": batch.day,
                "slot_of_day": slot - first,
                "wh": wh,
            }
            for household, values in zip(batch.households, batch.wh.tolist())
            for slot, wh in zip(slots, values)
        ]
        with self.gauge:
            try:
                with self.Session() as session, session.begin():
                    session.add(IngestBatch(cn=batch.cn, day=batch.day, reading_count=len(rows)))
                    session.flush()
                    if rows:
                        session.execute(insert(MeterReadingRow), rows)
            except IntegrityError as exc:
                raise DuplicateBatch(batch.cn, batch.day) from exc

    def row_count(self) -> int:
        with self.Session() as session:
            return session.execute(select(func.count()).select_from(MeterReadingRow)).scalar_one()

    def check_complete(self, households: Sequence[HouseholdId], month: MonthSpec) -> None:
        with self.Session() as session:
            counts = dict(session.execute(
                select(MeterReadingRow.household_serial, func.count())
                .group_by(MeterReadingRow.household_serial)
            ).all())
        expected = month.slots_per_month
        for household in households:
            found = counts.get(household.serial, 0)
            if found != expected:
                raise IncompleteMonth(household, f"{found} of {expected} readings stored")

    def bill(self, bucket_set: BucketSet, households: Sequence[HouseholdId]) -> BillingResult:
        self.check_complete(households, bucket_set.month)
        bucket = bucket_case(bucket_set)
        stmt = (
            select(MeterReadingRow.household_serial, bucket.label("bucket"), func.sum(MeterReadingRow.wh))
            .group_by(MeterReadingRow.household_serial, bucket)
        )
        with self.Session() as session:
            rows = session.execute(stmt).all()

        index = {h.serial: i for i, h in enumerate(households)}
        matrix = np.zeros((len(households), len(bucket_set)), dtype=WH_DTYPE)
        for serial, bucket_id, total in rows:
            if serial not in index:
                continue
            if bucket_id < 0:
                raise IncompleteMonth(HouseholdId.from_serial(serial), "reading outside every bucket")
            matrix[index[serial], bucket_id] = int(total)
        return BillingResult(households, matrix, bucket_set.prices)

    def load(self, households: Sequence[HouseholdId], month: MonthSpec) -> np.ndarray:
        self.check_complete(households, month)
        stmt = select(MeterReadingRow.household_serial, MeterReadingRow.slot, MeterReadingRow.wh)
        with self.engine.connect() as connection:
            frame = pd.read_sql(stmt, connection)
        index = pd.Series({h.serial: i for i, h in enumerate(households)}, dtype="int64")
        frame = frame[frame["household_serial"].isin(index.index)]
        wh = np.zeros((len(households), month.slots_per_month), dtype=WH_DTYPE)
        rows = frame["household_serial"].map(index).to_numpy(dtype=np.intp)
        wh[rows, frame["slot"].to_numpy(dtype=np.intp)] = frame["wh"].to_numpy()
        return wh

    def size_bytes(self) -> int:
        if self.path is None:
            return 0
        return file_bytes(self.path, Path(f"{self.path}-wal"))

    def close(self) -> None:
        self.engine.dispose()


class SingleStoreBackend(StorageBackend):
    """A1: every CN's batches queue up for one store"""
    architecture = Architecture.A1

    def __init__(self, root: Union[str, Path], url: Optional[str] = None):
        super().__init__(root)
        path = None
        if url is None and settings.a1_database_url:
            url = settings.a1_database_url
        if url is None:
            path = self.root / "a1.sqlite"
            url = sqlite_url(path)
        self.store = RelationalStore(url, path, name="a1")
        self._writer = ThreadPoolExecutor(max_workers=1, thread_name_prefix="a1-writer")

    def _begin_month(self) -> None:
        self.store.reset()

    def _insert_daily(self, batch: DailyBatch) -> None:
        with self.writers:
            # the caller waits on the queue, never on the store
            self._writer.submit(self.store.insert_batch, batch).result()

    def _compute_bill(self, bucket_set: BucketSet, worker_count: int) -> BillingResult:
        return self.store.bill(bucket_set, self.households)

    def _load_month(self) -> MonthData:
        return MonthData(self.month, self.households, self.store.load(self.households, self.month))

    def _extra_metrics(self) -> Dict[str, float]:
        return {
            "max_concurrent_store_writes": float(self.store.gauge.max_active),
            "store_bytes": float(self.store.size_bytes()),
        }

    def close(self) -> None:
        self._writer.shutdown(wait=True)
        self.store.close()


class PerCnStoreBackend(StorageBackend):
    """A2: one independent store per CN"""
    architecture = Architecture.A2

    def __init__(self, root: Union[str, Path]):
        super().__init__(root)
        self.stores: Dict[int, RelationalStore] = {}
        self.active_stores = ConcurrencyGauge()

    def _begin_month(self) -> None:
        directory = self.root
        for cn in self.cns:
            path = directory / f"cn{cn:03d}.sqlite"
            store = RelationalStore(sqlite_url(path), path, name=f"cn{cn}")
            store.reset()
            self.stores[cn] = store

    def _insert_daily(self, batch: DailyBatch) -> None:
        with self.writers, self.active_stores:
            self.stores[batch.cn].insert_batch(batch)

    def bill_cn(self, cn: int, bucket_set: BucketSet) -> BillingResult:
        """Bill one CN's store. Errors come back attributed to the CN."""
        try:
            return self.stores[cn].bill(bucket_set, self.households_of(cn))
        except SmartGridError as exc:
            raise StoreError(cn, exc) from exc

    def _compute_bill(self, bucket_set: BucketSet, worker_count: int) -> BillingResult:
        cns = self.cns
        if not cns:
            return BillingResult((), np.zeros((0, len(bucket_set))), bucket_set.prices)
        with ThreadPoolExecutor(max_workers=len(cns), thread_name_prefix="a2-bill") as pool:
            futures = {cn: pool.submit(self.bill_cn, cn, bucket_set) for cn in cns}
            results: List[BillingResult] = []
            errors: List[StoreError] = []
            for cn in cns:
                try:
                    results.append(futures[cn].result())
                except StoreError as exc:
                    errors.append(exc)
        for error in errors:
            logger.error(f"A2 billing failed: {error}")
        if errors:
            raise errors[0]
        return BillingResult.concat(results, bucket_set.prices)

    def _load_month(self) -> MonthData:
        parts = [self.stores[cn].load(self.households_of(cn), self.month) for cn in self.cns]
        wh = np.concatenate(parts, axis=0) if parts else np.zeros((0, self.month.slots_per_month), dtype=WH_DTYPE)
        return MonthData(self.month, self.households, wh)

    def _extra_metrics(self) -> Dict[str, float]:
        return {
            "max_concurrent_stores": float(self.active_stores.max_active),
            "store_bytes": float(sum(store.size_bytes() for store in self.stores.values())),
            "store_count": float(len(self.stores)),
        }

    def close(self) -> None:
        for store in self.stores.values():
            store.close()
