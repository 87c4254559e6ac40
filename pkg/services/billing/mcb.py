"""
In-memory Multi-Core Billing (MCB)

Each household-month goes through two phases:
  1. sort phase: a gather through the bucket mask makes the readings of one
     Time Bucket contiguous, with no per-reading conditionals;
  2. aggregate phase: one contiguous reduction per bucket.

bill_all splits the households into N contiguous partitions, one per worker.
Workers share only the read-only mask and prices. Energy is summed as integer
watt-hours, so the result does not depend on the number of workers.
"""

import functools
import hashlib
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from decimal import Decimal
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from config import settings
from models.domain import (
    HouseholdId,
    MeterReading,
    MonthData,
    WH_DTYPE,
    validate_household_month,
    wh_to_kwh,
)
from models.errors import InvalidReading, LengthMismatch, SmartGridError
from services.tariff.buckets import BucketSet, classify
from services.tariff.mask import BucketMask, build_mask, check_boundaries

logger = logging.getLogger(__name__)


def line_amount(per_bucket_wh: Sequence[int], prices: Sequence[Decimal]) -> Decimal:
    """Exact monetary total: sum of kWh x price per bucket"""
    total = sum((Decimal(int(wh)) * price for wh, price in zip(per_bucket_wh, prices)), Decimal(0))
    return total.scaleb(-3)


def canonical_amount(amount: Decimal) -> str:
    return format(amount.normalize(), "f") if amount else "0"


@dataclass(frozen=True)
class BillLine:
    household: HouseholdId
    per_bucket_wh: Tuple[int, ...]
    total_amount: Decimal

    @property
    def per_bucket_kwh(self) -> Tuple[Decimal, ...]:
        return tuple(wh_to_kwh(wh) for wh in self.per_bucket_wh)

    @property
    def total_wh(self) -> int:
        return sum(self.per_bucket_wh)

    def canonical(self) -> str:
        energy = ",".join(str(wh) for wh in self.per_bucket_wh)
        return f"{self.household}|{energy}|{canonical_amount(self.total_amount)}"


@dataclass(frozen=True)
class HouseholdError:
    household: HouseholdId
    error: str
    kind: str

    @classmethod
    def from_exception(cls, household: HouseholdId, exc: BaseException) -> "HouseholdError":
        return cls(household, str(exc), type(exc).__name__)


class BillingResult:
    """Bills of one job: behaves as the sequence of its BillLines.

    Per-bucket energy is kept as an (households x buckets) integer matrix;
    BillLine objects are built on first access.
    """

    def __init__(self, households: Sequence[HouseholdId], bucket_wh: np.ndarray,
                 prices: Sequence[Decimal], errors: Sequence[HouseholdError] = ()):
        self.households = tuple(households)
        self.prices = tuple(prices)
        self.bucket_wh = np.asarray(bucket_wh, dtype=WH_DTYPE).reshape(len(self.households), len(self.prices))
        self.errors = tuple(errors)

    @classmethod
    def from_lines(cls, lines: Sequence[BillLine], prices: Sequence[Decimal],
                   errors: Sequence[HouseholdError] = ()) -> "BillingResult":
        matrix = np.array([line.per_bucket_wh for line in lines], dtype=WH_DTYPE)
        return cls([line.household for line in lines], matrix, prices, errors)

    @classmethod
    def concat(cls, results: Sequence["BillingResult"], prices: Sequence[Decimal]) -> "BillingResult":
        households: List[HouseholdId] = []
        errors: List[HouseholdError] = []
        for result in results:
            households.extend(result.households)
            errors.extend(result.errors)
        if results:
            matrix = np.concatenate([r.bucket_wh for r in results], axis=0)
        else:
            matrix = np.zeros((0, len(prices)), dtype=WH_DTYPE)
        return cls(households, matrix, prices, errors)

    @functools.cached_property
    def lines(self) -> Tuple[BillLine, ...]:
        return tuple(
            BillLine(household, tuple(int(v) for v in row), line_amount(row, self.prices))
            for household, row in zip(self.households, self.bucket_wh.tolist())
        )

    def __len__(self) -> int:
        return len(self.households)

    def __iter__(self):
        return iter(self.lines)

    def __getitem__(self, index):
        return self.lines[index]

    def __eq__(self, other) -> bool:
        if isinstance(other, BillingResult):
            return self.lines == other.lines
        if isinstance(other, (list, tuple)):
            return list(self.lines) == list(other)
        return NotImplemented

    def __repr__(self) -> str:
        return f"BillingResult(households={len(self)}, buckets={len(self.prices)}, errors={len(self.errors)})"

    @property
    def ok(self) -> bool:
        return not self.errors

    @property
    def total_wh(self) -> int:
        return int(self.bucket_wh.sum())

    def canonical_text(self) -> str:
        ordered = sorted(self.lines, key=lambda line: line.household)
        return "\n".join(line.canonical() for line in ordered) + "\n"

    def checksum(self) -> str:
        return hashlib.sha256(self.canonical_text().encode("utf-8")).hexdigest()


@dataclass
class BillingJob:
    households: Sequence[HouseholdId]
    readings: np.ndarray  # (households, slots) watt-hours in slot order
    mask: BucketMask
    prices: Sequence[Decimal]
    worker_count: int = 1
    block_households: int = field(default_factory=lambda: settings.mcb_block_households)

    def __post_init__(self):
        if self.worker_count < 1:
            raise ValueError("worker_count must be >= 1")
        if self.block_households < 1:
            raise ValueError("block_households must be >= 1")
        self.households = tuple(self.households)
        self.prices = tuple(Decimal(str(p)) for p in self.prices)
        readings = np.asarray(self.readings, dtype=WH_DTYPE)
        if readings.size == 0:
            readings = readings.reshape(len(self.households), self.mask.size)
        if readings.ndim != 2 or readings.shape[0] != len(self.households):
            raise ValueError(f"readings shape {readings.shape} does not match {len(self.households)} households")
        if readings.shape[1] != self.mask.size:
            raise LengthMismatch(self.mask.size, readings.shape[1])
        if len(self.prices) != self.mask.bucket_count:
            raise ValueError(f"{len(self.prices)} prices for {self.mask.bucket_count} buckets")
        self.readings = readings

    @classmethod
    def for_month(cls, data: MonthData, bucket_set: BucketSet, worker_count: int = 1,
                  **kwargs) -> "BillingJob":
        return cls(data.households, data.wh, build_mask(bucket_set), bucket_set.prices,
                   worker_count, **kwargs)


def sort_phase(readings: np.ndarray, mask: BucketMask, out: Optional[np.ndarray] = None) -> np.ndarray:
    """out[..., mask[i]] = readings[..., i], done as a gather through the inverse permutation"""
    readings = np.asarray(readings)
    if readings.shape[-1] != mask.size:
        raise LengthMismatch(mask.size, readings.shape[-1])
    # indices form a permutation, so "clip" never alters them and lets `out` be written in place
    return np.take(readings, mask.gather_index, axis=-1, out=out, mode="clip")


def aggregate_phase(sorted_wh: np.ndarray, boundaries) -> np.ndarray:
    """Per-bucket sums over the contiguous bucket ranges of the last axis"""
    sorted_wh = np.asarray(sorted_wh)
    check_boundaries(boundaries, sorted_wh.shape[-1])
    lengths = np.array([length for _, length in boundaries], dtype=np.intp)
    offsets = np.array([offset for offset, _ in boundaries], dtype=np.intp)

    sums = np.zeros(sorted_wh.shape[:-1] + (len(lengths),), dtype=WH_DTYPE)
    filled = lengths > 0
    if filled.any():
        # empty buckets own no positions, so consecutive non-empty starts delimit each range
        sums[..., filled] = np.add.reduceat(sorted_wh, offsets[filled], axis=-1, dtype=WH_DTYPE)
    return sums


def _check_household_row(household: HouseholdId, row: np.ndarray, size: int) -> None:
    if row.shape != (size,):
        raise LengthMismatch(size, row.size)
    if row.size and row.min() < 0:
        slot = int(np.argmax(row < 0))
        raise InvalidReading(household, slot, wh_to_kwh(row[slot]))


def bill_household(readings, mask: BucketMask, prices: Sequence[Decimal],
                   household: Optional[HouseholdId] = None) -> BillLine:
    household = household or HouseholdId(0, 0)
    row = np.asarray(readings, dtype=WH_DTYPE)
    _check_household_row(household, row, mask.size)
    sums = aggregate_phase(sort_phase(row, mask), mask.boundaries)
    prices = tuple(Decimal(str(p)) for p in prices)
    return BillLine(household, tuple(int(v) for v in sums), line_amount(sums.tolist(), prices))


def partition_households(count: int, workers: int) -> List[range]:
    """Contiguous chunks whose sizes differ by at most one household"""
    base, extra = divmod(count, workers)
    chunks, start = [], 0
    for worker in range(workers):
        size = base + (1 if worker < extra else 0)
        chunks.append(range(start, start + size))
        start += size
    return chunks


def _bill_partition(job: BillingJob, chunk: range) -> Tuple[np.ndarray, Dict[int, HouseholdError]]:
    """One worker: bill households job.readings[chunk] block by block"""
    bucket_count = job.mask.bucket_count
    sums = np.zeros((len(chunk), bucket_count), dtype=WH_DTYPE)
    failed: Dict[int, HouseholdError] = {}
    if not len(chunk):
        return sums, failed

    block = min(job.block_households, len(chunk))
    # reused for every block of this worker; each block fully overwrites its rows
    buffer = np.empty((block, job.mask.size), dtype=WH_DTYPE)

    for first in range(chunk.start, chunk.stop, block):
        last = min(first + block, chunk.stop)
        rows = job.readings[first:last]
        out = buffer[:last - first]
        sort_phase(rows, job.mask, out=out)
        sums[first - chunk.start:last - chunk.start] = aggregate_phase(out, job.mask.boundaries)

        negative = rows.min(axis=1) < 0 if rows.shape[1] else np.zeros(len(rows), dtype=bool)
        for offset in np.flatnonzero(negative):
            index = first + int(offset)
            household = job.households[index]
            try:
                _check_household_row(household, job.readings[index], job.mask.size)
            except SmartGridError as exc:
                failed[index] = HouseholdError.from_exception(household, exc)
    return sums, failed


def bill_all(job: BillingJob) -> BillingResult:
    """Bill every household; failed households are reported, not fatal"""
    chunks = partition_households(len(job.households), job.worker_count)

    if job.worker_count == 1:
        parts = [_bill_partition(job, chunks[0])]
    else:
        with ThreadPoolExecutor(max_workers=job.worker_count, thread_name_prefix="mcb") as pool:
            parts = list(pool.map(lambda chunk: _bill_partition(job, chunk), chunks))

    failed: Dict[int, HouseholdError] = {}
    for _, part_failed in parts:
        failed.update(part_failed)
    sums = np.concatenate([part_sums for part_sums, _ in parts], axis=0) if parts else \
        np.zeros((0, job.mask.bucket_count), dtype=WH_DTYPE)

    if failed:
        keep = np.ones(len(job.households), dtype=bool)
        keep[list(failed)] = False
        households = [h for h, k in zip(job.households, keep) if k]
        sums = sums[keep]
        for error in failed.values():
            logger.warning(f"Household {error.household} not billed: {error.error}")
    else:
        households = job.households

    errors = [failed[i] for i in sorted(failed)]
    return BillingResult(households, sums, job.prices, errors)


def brute_force_bill(readings: Union[Sequence[MeterReading], np.ndarray], bucket_set: BucketSet,
                     prices: Optional[Sequence[Decimal]] = None,
                     household: Optional[HouseholdId] = None) -> BillLine:
    """Reference bill: classify every reading with a conditional scan"""
    prices = tuple(Decimal(str(p)) for p in (prices if prices is not None else bucket_set.prices))
    if isinstance(readings, np.ndarray):
        household = household or HouseholdId(0, 0)
        readings = [MeterReading(household, slot, int(wh)) for slot, wh in enumerate(readings)]
    readings = list(readings)
    validate_household_month(readings, bucket_set.month)
    if readings:
        household = readings[0].household

    sums = [0] * len(bucket_set)
    for reading in readings:
        sums[classify(reading.slot, bucket_set)] += reading.wh
    return BillLine(household, tuple(sums), line_amount(sums, prices))
