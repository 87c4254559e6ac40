"""
CDPN, CN and storage-gateway services.

The CDPN is the only active node: it drives the month by sending itself
NextDay, broadcasts Collect to every CN and joins their InsertDone replies.
CNs only act on orders. Depending on the architecture a CN either writes to
storage itself (A2, A4) or forwards its day to the gateway next to the
CDPN (A1, A3).
"""

import asyncio
import logging
import time
from typing import Dict, Optional, Sequence

from config import settings
from models.domain import Architecture, HouseholdId, MonthSpec
from models.errors import ActorError, CnTimeout, DayAlreadyRun, DayOutOfRange, IncompleteMonth, JoinTimeout
from services.actors.messages import (
    BillRequest,
    BillResponse,
    Collect,
    DailyData,
    DayCompleted,
    InsertDone,
    MonthIngested,
    NextDay,
    RunBilling,
    RunDay,
    RunMonth,
)
from services.actors.runtime import DEFERRED, Actor, ActorSystem, Envelope, HandlerMode, handles
from services.billing.mcb import BillingResult
from services.datagen.generator import LoadProfileGenerator
from services.storage.base import StorageBackend
from services.tariff.buckets import default_bucket_set

logger = logging.getLogger(__name__)

CDPN_ADDRESS = "cdpn"
GATEWAY_ADDRESS = "storage-gateway"


def cn_address(cn: int) -> str:
    return f"cn-{cn}"


class StorageGatewayService(Actor):
    """CDPN-side store front end for architectures whose CNs forward their data"""

    def __init__(self, backend: StorageBackend, month: MonthSpec, address: str = GATEWAY_ADDRESS):
        super().__init__(address)
        self.backend = backend
        self.month = month

    @handles(DailyData, HandlerMode.EXCLUSIVE)
    async def on_daily_data(self, message: DailyData, envelope: Envelope) -> InsertDone:
        batch = message.unwrap(self.month)
        await self.system.offload(self.backend.insert_daily, batch)
        return InsertDone(batch.cn, batch.day, batch.reading_count)


class CnService(Actor):
    def __init__(self, cn: int, households: Sequence[HouseholdId], month: MonthSpec,
                 generator: LoadProfileGenerator, backend: StorageBackend,
                 serialize_payloads: bool = False, timeout: Optional[float] = None):
        super().__init__(cn_address(cn))
        self.cn = cn
        self.households = tuple(households)
        self.month = month
        self.generator = generator
        self.backend = backend
        self.serialize_payloads = serialize_payloads
        self.timeout = timeout if timeout is not None else settings.collect_timeout_seconds

    @property
    def stores_locally(self) -> bool:
        return self.backend.architecture.stores_at_cn

    @handles(Collect, HandlerMode.EXCLUSIVE)
    async def on_collect(self, message: Collect, envelope: Envelope) -> InsertDone:
        batch = await self.system.offload(
            self.generator.generate_day_batch, self.cn, self.households, self.month, message.day
        )
        if self.stores_locally:
            await self.system.offload(self.backend.insert_daily, batch)
            return InsertDone(self.cn, message.day, batch.reading_count)
        data = DailyData.wrap(batch, self.month, self.serialize_payloads)
        return await asyncio.wait_for(self.ask(GATEWAY_ADDRESS, data), self.timeout)

    @handles(BillRequest, HandlerMode.CONCURRENT)
    async def on_bill_request(self, message: BillRequest, envelope: Envelope) -> BillResponse:
        result = await self.system.offload(self.backend.bill_cn, self.cn, message.bucket_set)
        return BillResponse(self.cn, result)


class CdpnService(Actor):
    def __init__(self, month: MonthSpec, cns: Sequence[int], backend: StorageBackend,
                 timeout: Optional[float] = None, address: str = CDPN_ADDRESS):
        super().__init__(address)
        self.month = month
        self.cns = sorted(cns)
        self.backend = backend
        self.timeout = timeout if timeout is not None else settings.collect_timeout_seconds
        self.days_run = set()
        self.days_in_flight = set()
        self.day_seconds: Dict[int, float] = {}
        self.readings_ingested = 0
        self._month_waiter: Optional[Envelope] = None

    @property
    def month_complete(self) -> bool:
        return len(self.days_run) == self.month.days

    async def _run_day(self, day: int) -> DayCompleted:
        if not 0 <= day < self.month.days:
            raise DayOutOfRange(day, self.month.days)
        if day in self.days_run or day in self.days_in_flight:
            raise DayAlreadyRun(day)
        self.days_in_flight.add(day)

        start = time.perf_counter()
        futures = {cn: self.ask(cn_address(cn), Collect(day)) for cn in self.cns}
        try:
            replies = await self.system.join(futures, self.timeout)
        except JoinTimeout as exc:
            raise CnTimeout(exc.pending, self.timeout) from exc
        finally:
            self.days_in_flight.discard(day)
        elapsed = time.perf_counter() - start
        self.days_run.add(day)

        readings = sum(reply.reading_count for reply in replies.values())
        self.day_seconds[day] = elapsed
        self.readings_ingested += readings
        logger.info(f"Day {day} ingested: {readings} readings from {len(self.cns)} CN(s) in {elapsed:.3f}s")
        return DayCompleted(day, elapsed, readings)

    @handles(RunDay, HandlerMode.EXCLUSIVE)
    async def on_run_day(self, message: RunDay, envelope: Envelope) -> DayCompleted:
        return await self._run_day(message.day)

    @handles(RunMonth, HandlerMode.EXCLUSIVE)
    def on_run_month(self, message: RunMonth, envelope: Envelope):
        if self._month_waiter is not None:
            raise ActorError("A month run is already in progress")
        self._month_waiter = envelope
        self.send(self.address, NextDay())
        return DEFERRED

    @handles(NextDay, HandlerMode.EXCLUSIVE)
    async def on_next_day(self, message: NextDay, envelope: Envelope) -> None:
        waiter = self._month_waiter
        if waiter is None:
            return
        pending = [d for d in range(self.month.days) if d not in self.days_run]
        try:
            if pending:
                await self._run_day(pending[0])
        except Exception as exc:
            logger.error(f"Month run stopped: {exc}")
            self._month_waiter = None
            waiter.fail(exc)
            return

        if self.month_complete:
            self._month_waiter = None
            seconds = tuple(self.day_seconds.get(d, 0.0) for d in range(self.month.days))
            waiter.respond(MonthIngested(seconds, self.readings_ingested))
        else:
            self.send(self.address, NextDay())

    @handles(RunBilling, HandlerMode.EXCLUSIVE)
    async def on_run_billing(self, message: RunBilling, envelope: Envelope) -> BillingResult:
        if not self.month_complete:
            raise IncompleteMonth(detail=f"{len(self.days_run)} of {self.month.days} days run")
        bucket_set = message.bucket_set
        if bucket_set is None:
            bucket_set = default_bucket_set(self.month, message.scheme)

        if self.backend.architecture is Architecture.A2:
            await self.system.offload(self.backend.finalize_month)
            futures = {cn: self.ask(cn_address(cn), BillRequest(bucket_set)) for cn in self.cns}
            replies = await self.system.join(futures, self.timeout)
            result = BillingResult.concat([replies[cn].result for cn in self.cns], bucket_set.prices)
        else:
            result = await self.system.offload(self.backend.compute_bill, bucket_set, message.worker_count)
        logger.info(f"Month {self.month.key} billed: {len(result)} households, {len(result.errors)} errors")
        return result


def spawn_grid(system: ActorSystem, backend: StorageBackend, generator: LoadProfileGenerator,
               month: MonthSpec, cn_count: int, households_per_cn: int,
               serialize_payloads: Optional[bool] = None, timeout: Optional[float] = None) -> str:
    """Begin the month on `backend` and spawn gateway, CNs and CDPN. Returns the CDPN address."""
    if serialize_payloads is None:
        serialize_payloads = settings.serialize_payloads
    households = [HouseholdId(cn, i) for cn in range(cn_count) for i in range(households_per_cn)]
    backend.begin_month(month, households)

    if not backend.architecture.stores_at_cn:
        system.spawn(StorageGatewayService(backend, month))
    for cn in backend.cns:
        system.spawn(CnService(cn, backend.households_of(cn), month, generator, backend,
                               serialize_payloads, timeout))
    return system.spawn(CdpnService(month, backend.cns, backend, timeout))
