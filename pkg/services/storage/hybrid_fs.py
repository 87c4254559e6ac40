"""
A4: hybrid file-system storage.

Layout of one month:

    <root>/<YYYY-MM>/timestamps.dat                       shared by every household
    <root>/<YYYY-MM>/<hex2>/<hex2>/<serial>.dat           one per household

Level 2 is serial % 256 and level 3 is (serial // 256) % 256, both as two hex
digits. The metadata table maps each household to its two files and is
written once, when the month is built. CNs append to their own households'
files; the CDPN keeps a copy of every day in its buffer.
"""

import logging
import threading
from pathlib import Path
from typing import Dict, List, Sequence, Tuple, Union

import numpy as np
from sqlalchemy import select

from models.database import create_store_engine, session_factory, sqlite_url
from models.domain import Architecture, DailyBatch, HouseholdId, MonthData, MonthSpec, WH_DTYPE
from models.errors import CorruptFile, DuplicateBatch, MissingFile, MonthAlreadyInitialized, OutOfOrderBatch
from models.storage import HouseholdFile, StorageMonth
from services.storage.base import BufferedBackend, file_bytes
from services.storage.formats import consumption_lines, parse_consumption, parse_timestamps, timestamp_lines

logger = logging.getLogger(__name__)

TIMESTAMP_FILE = "timestamps.dat"
SHARD_FANOUT = 256


def shard_path(month: MonthSpec, household: HouseholdId) -> Path:
    """Consumption file path relative to the storage root"""
    serial = household.serial
    level2 = f"{serial % SHARD_FANOUT:02x}"
    level3 = f"{(serial // SHARD_FANOUT) % SHARD_FANOUT:02x}"
    return Path(month.key) / level2 / level3 / f"{serial}.dat"


def timestamp_path(month: MonthSpec) -> Path:
    return Path(month.key) / TIMESTAMP_FILE


class HybridFsBackend(BufferedBackend):
    architecture = Architecture.A4

    def __init__(self, root: Union[str, Path]):
        super().__init__(root)
        self.path = self.root / "a4_metadata.sqlite"
        self.engine = create_store_engine(sqlite_url(self.path), [StorageMonth.__table__, HouseholdFile.__table__])
        self.Session = session_factory(self.engine)
        self._paths: Dict[HouseholdId, Path] = {}
        self._next_day: Dict[int, int] = {}
        self._timestamp_days = 0
        self._timestamp_lock = threading.Lock()

    def resolve(self, pointer: str) -> Path:
        return self.root / pointer

    # build

    def _begin_month(self) -> None:
        month = self.month
        with self.Session() as session:
            if session.get(StorageMonth, month.key) is not None:
                raise MonthAlreadyInitialized(month.key)

        month_dir = self.root / month.key
        month_dir.mkdir(parents=True, exist_ok=True)
        self.resolve(str(timestamp_path(month))).touch()
        rows = []
        for household in self.households:
            relative = shard_path(month, household)
            absolute = self.resolve(str(relative))
            absolute.parent.mkdir(parents=True, exist_ok=True)
            absolute.touch()
            self._paths[household] = absolute
            rows.append(HouseholdFile(
                household_serial=household.serial,
                month_key=month.key,
                timestamp_path=timestamp_path(month).as_posix(),
                consumption_path=relative.as_posix(),
            ))

        with self.Session() as session, session.begin():
            session.add(StorageMonth(month_key=month.key, household_count=len(self.households),
                                     root_path=str(self.root)))
            session.add_all(rows)

        super()._begin_month()
        self._next_day = {cn: 0 for cn in self.cns}
        self._timestamp_days = 0
        logger.info(f"A4: built {month.key} layout with {len(self.households) + 1} files under {month_dir}")

    def begin_month(self, month: MonthSpec, households: Sequence[HouseholdId]) -> None:
        attached = self.month is not None
        try:
            super().begin_month(month, households)
        except MonthAlreadyInitialized:
            if not attached:
                # the layout exists on disk from an earlier run; stay detached
                self.month = None
            raise

    # ingest

    def _claim(self, cn: int, day: int) -> None:
        # consumption files are positional, so each CN must append its days in order
        with self._lock:
            if day in self._ingested[cn]:
                raise DuplicateBatch(cn, day)
            if day != self._next_day[cn]:
                raise OutOfOrderBatch(cn, day, self._next_day[cn])
            self._ingested[cn].add(day)
            self._next_day[cn] = day + 1

    def _insert_daily(self, batch: DailyBatch) -> None:
        with self.writers:
            with self._timestamp_lock:
                # every CN is past day d-1 before any sends day d, so this appends in day order
                if batch.day == self._timestamp_days:
                    with open(self.resolve(str(timestamp_path(self.month))), "a", encoding="utf-8") as handle:
                        handle.write(timestamp_lines(self.month, batch.day))
                    self._timestamp_days += 1
            for household, row in zip(batch.households, batch.wh):
                with open(self._paths[household], "a", encoding="utf-8") as handle:
                    handle.write(consumption_lines(row))
        self.buffer.put(batch)

    def _finalize_month(self) -> None:
        # a month with no households never receives a batch
        with self._timestamp_lock:
            if self._timestamp_days < self.month.days:
                with open(self.resolve(str(timestamp_path(self.month))), "a", encoding="utf-8") as handle:
                    for day in range(self._timestamp_days, self.month.days):
                        handle.write(timestamp_lines(self.month, day))
                self._timestamp_days = self.month.days

    # read back

    def layout_files(self) -> List[Path]:
        month_dir = self.root / self._require_month().key
        return sorted(p for p in month_dir.rglob("*") if p.is_file())

    def pointers(self) -> List[Tuple[HouseholdId, str, str]]:
        with self.Session() as session:
            rows = session.execute(
                select(HouseholdFile.household_serial, HouseholdFile.timestamp_path, HouseholdFile.consumption_path)
                .where(HouseholdFile.month_key == self._require_month().key)
                .order_by(HouseholdFile.household_serial)
            ).all()
        return [(HouseholdId.from_serial(serial), ts, consumption) for serial, ts, consumption in rows]

    def _stored_households(self, month: MonthSpec) -> List[HouseholdId]:
        with self.Session() as session:
            serials = session.execute(
                select(HouseholdFile.household_serial).where(HouseholdFile.month_key == month.key)
            ).scalars().all()
        households = [HouseholdId.from_serial(s) for s in serials]
        for household in households:
            self._paths[household] = self.resolve(str(shard_path(month, household)))
        return households

    def _read(self, path: Path) -> str:
        if not path.is_file():
            raise MissingFile(path)
        return path.read_text(encoding="utf-8")

    def _load_month(self) -> MonthData:
        month = self.month
        expected = month.slots_per_month
        pointers = {household: (ts, consumption) for household, ts, consumption in self.pointers()}

        timestamps = self.resolve(str(timestamp_path(month)))
        try:
            slots = parse_timestamps(month, self._read(timestamps))
        except ValueError as exc:
            raise CorruptFile(timestamps, str(exc)) from exc
        if slots != list(range(expected)):
            raise CorruptFile(timestamps, f"{len(slots)} of {expected} timestamps")

        wh = np.zeros((len(self.households), expected), dtype=WH_DTYPE)
        for row, household in enumerate(self.households):
            if household not in pointers:
                raise MissingFile(shard_path(month, household))
            path = self.resolve(pointers[household][1])
            try:
                values = parse_consumption(self._read(path))
            except ValueError as exc:
                raise CorruptFile(path, str(exc)) from exc
            if values.size != expected:
                raise CorruptFile(path, f"{values.size} of {expected} values")
            wh[row] = values
        return MonthData(month, self.households, wh)

    def _extra_metrics(self) -> Dict[str, float]:
        if self.month is None:
            return {}
        month_dir = self.root / self.month.key
        files = [p for p in month_dir.rglob("*") if p.is_file()]
        return {
            "file_count": float(len(files)),
            "store_bytes": float(file_bytes(*files) + file_bytes(self.path)),
        }

    def close(self) -> None:
        self.engine.dispose()
