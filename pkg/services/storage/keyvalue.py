"""
A3: key-value monthly append.

One row per household whose value is an XML string of <r/> reading entries.
Each day's entries are appended to the existing string, so the value grows
linearly through the month. Billing runs in memory over the CDPN buffer.
"""

import logging
import threading
from pathlib import Path
from typing import Dict, List, Union

import numpy as np
from sqlalchemy import bindparam, delete, func, insert, select, update

from models.database import create_store_engine, session_factory, sqlite_url
from models.domain import Architecture, DailyBatch, HouseholdId, MonthData, MonthSpec, WH_DTYPE
from models.errors import CorruptFile, IncompleteMonth
from models.storage import MonthlyBlob
from services.storage.base import BufferedBackend, file_bytes
from services.storage.formats import decode_readings, encode_readings

logger = logging.getLogger(__name__)


class KeyValueBackend(BufferedBackend):
    architecture = Architecture.A3

    def __init__(self, root: Union[str, Path]):
        super().__init__(root)
        self.path = self.root / "a3.sqlite"
        self.engine = create_store_engine(sqlite_url(self.path), [MonthlyBlob.__table__])
        self.Session = session_factory(self.engine)
        self._write_lock = threading.Lock()
        self._blob_bytes_mean: Dict[int, float] = {}

    def _begin_month(self) -> None:
        super()._begin_month()
        with self.Session() as session, session.begin():
            session.execute(delete(MonthlyBlob))
            if self.households:
                session.execute(insert(MonthlyBlob), [
                    {"household_serial": h.serial, "month_key": self.month.key, "value": "", "entry_count": 0}
                    for h in self.households
                ])

    def _insert_daily(self, batch: DailyBatch) -> None:
        first = batch.first_slot()
        params = [
            {"serial": household.serial, "fragment": encode_readings(self.month, first, row), "added": len(row)}
            for household, row in zip(batch.households, batch.wh)
        ]
        stmt = (
            update(MonthlyBlob)
            .where(MonthlyBlob.household_serial == bindparam("serial"))
            .values(
                value=MonthlyBlob.value + bindparam("fragment"),
                entry_count=MonthlyBlob.entry_count + bindparam("added"),
            )
        )
        with self.writers, self._write_lock:
            with self.engine.begin() as connection:
                if params:
                    connection.execute(stmt, params)
        self.buffer.put(batch)

    def _on_day_complete(self, day: int) -> None:
        with self.Session() as session:
            mean = session.execute(select(func.avg(func.length(MonthlyBlob.value)))).scalar()
        self._blob_bytes_mean[day] = float(mean or 0.0)

    def blob(self, household: HouseholdId) -> str:
        with self.Session() as session:
            return session.execute(
                select(MonthlyBlob.value).where(MonthlyBlob.household_serial == household.serial)
            ).scalar_one()

    def blob_bytes_mean(self) -> Dict[int, float]:
        return dict(self._blob_bytes_mean)

    def _stored_households(self, month: MonthSpec) -> List[HouseholdId]:
        with self.Session() as session:
            serials = session.execute(
                select(MonthlyBlob.household_serial).where(MonthlyBlob.month_key == month.key)
            ).scalars().all()
        return [HouseholdId.from_serial(s) for s in serials]

    def _load_month(self) -> MonthData:
        month = self.month
        expected = month.slots_per_month
        with self.Session() as session:
            stored = dict(session.execute(
                select(MonthlyBlob.household_serial, MonthlyBlob.value).where(MonthlyBlob.month_key == month.key)
            ).all())

        wh = np.zeros((len(self.households), expected), dtype=WH_DTYPE)
        for row, household in enumerate(self.households):
            if household.serial not in stored:
                raise IncompleteMonth(household, "no blob stored")
            location = f"{self.path}#{household.serial}"
            try:
                slots, values = decode_readings(month, stored[household.serial])
            except ValueError as exc:
                raise CorruptFile(location, str(exc)) from exc
            if len(slots) != expected or len(set(slots)) != expected:
                raise IncompleteMonth(household, f"blob holds {len(set(slots))} of {expected} distinct slots")
            wh[row, slots] = values
        return MonthData(month, self.households, wh)

    def _extra_metrics(self) -> Dict[str, float]:
        result = {f"blob_bytes_mean.day{day:02d}": mean for day, mean in sorted(self._blob_bytes_mean.items())}
        result["store_bytes"] = float(file_bytes(self.path, Path(f"{self.path}-wal")))
        return result

    def close(self) -> None:
        self.engine.dispose()
