"""MCB speedup sweep: wall time of bill_all per (worker count, household count)."""

import logging
import os
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

from config import settings
from models.domain import MonthSpec
from services.bench.report import MeasurementRow, SWEEP_ARCHITECTURE
from services.bench.timing import measure
from services.billing.mcb import BillingJob, bill_all
from services.datagen.generator import generate_month
from services.tariff.buckets import BucketSet, default_bucket_set
from services.tariff.mask import build_mask

logger = logging.getLogger(__name__)

DESK_SIZES = (1_000, 10_000)
DESK_WORKERS = (1, 2, 4)


@dataclass
class SpeedupTable:
    sizes: List[int]
    workers: List[int]
    seconds: Dict[Tuple[int, int], float] = field(default_factory=dict)  # (workers, households) -> median
    host_cores: int = field(default_factory=lambda: os.cpu_count() or 1)

    def speedup(self, workers: int, households: int) -> float:
        """Relative to the smallest worker count in the sweep"""
        base = self.seconds[(min(self.workers), households)]
        return base / self.seconds[(workers, households)]

    def rows(self, run_id: str) -> List[MeasurementRow]:
        if not self.seconds:
            return []
        rows = [MeasurementRow(run_id, SWEEP_ARCHITECTURE, "host_cores", float(self.host_cores), "count")]
        for w in self.workers:
            for h in self.sizes:
                rows.append(MeasurementRow(run_id, SWEEP_ARCHITECTURE, f"mcb_seconds.w{w}.h{h}",
                                           self.seconds[(w, h)], "s"))
        for w in self.workers:
            for h in self.sizes:
                rows.append(MeasurementRow(run_id, SWEEP_ARCHITECTURE, f"mcb_speedup.w{w}.h{h}",
                                           self.speedup(w, h), "x"))
        return rows


def sweep_mcb(households: Sequence[int] = DESK_SIZES, workers: Sequence[int] = DESK_WORKERS,
              seed: int = 42, month: Optional[MonthSpec] = None,
              bucket_set: Optional[BucketSet] = None, repetitions: Optional[int] = None,
              warmup: bool = True) -> SpeedupTable:
    """Generate the largest dataset once; smaller sizes bill its leading households.

    One worker is always measured, as the speedup baseline.
    """
    month = month or MonthSpec()
    bucket_set = bucket_set or default_bucket_set(month)
    repetitions = repetitions or settings.default_repetitions
    sizes, worker_counts = sorted(set(households)), sorted(set(workers) | {1})
    table = SpeedupTable(sizes, worker_counts)
    if not sizes:
        return table

    data = generate_month(seed, max(sizes), month)
    mask = build_mask(bucket_set)
    for size in sizes:
        for w in worker_counts:
            job = BillingJob(data.households[:size], data.wh[:size], mask, bucket_set.prices, w)
            timing, _ = measure(lambda: bill_all(job), repetitions, warmup)
            table.seconds[(w, size)] = timing.median
            logger.info(f"MCB {size} households, {w} worker(s): {timing.median:.4f}s")
    return table
