"""
Experiment runner.

A run simulates one month through the actor grid (CDPN + CNs), bills it the
architecture's way, then times cold start and MCB over the stored data. All
three billing paths must agree on the checksum. Results go to
<output_dir>/<run_id>/ (config.yaml, report.csv, report.txt) and are appended
to <output_dir>/results.csv.
"""

import asyncio
import logging
import uuid
from dataclasses import dataclass
from datetime import datetime
from pathlib import Path
from typing import Dict, Sequence

from models.domain import Architecture, MonthSpec
from models.errors import ConfigError, ExperimentError, SmartGridError, VerificationMismatch
from models.run_config import RunConfig, SchemeConfig, dump_run_config
from services.actors.messages import RunBilling, RunMonth
from services.actors.runtime import ActorSystem
from services.actors.services import spawn_grid
from services.bench.report import ExperimentReport, emit_csv, emit_table
from services.bench.timing import measure, measure_async
from services.billing.mcb import BillingJob, BillingResult, bill_all
from services.datagen.generator import LoadProfileGenerator, NoiseModel
from services.datagen.profiles import ProfileLibrary, RegressionProfile
from services.storage.base import StorageBackend
from services.storage.factory import create_backend
from services.tariff.buckets import (
    BucketClause,
    BucketSet,
    DEFAULT_CRITICAL_CLAUSE,
    PricingScheme,
    bucket_set_from_config,
    default_bucket_set,
)
from services.tariff.mask import build_mask

logger = logging.getLogger(__name__)


def pricing_scheme(scheme: SchemeConfig) -> PricingScheme:
    if scheme.kind == "TOU":
        return PricingScheme.tou()
    clauses = [BucketClause.from_hhmm(c.day_type, c.start, c.end, c.days) for c in scheme.critical_clauses]
    return PricingScheme.cpp(clauses or [DEFAULT_CRITICAL_CLAUSE], scheme.critical_price)


def build_bucket_set(config: RunConfig, month: MonthSpec) -> BucketSet:
    scheme = pricing_scheme(config.scheme)
    if config.buckets:
        return bucket_set_from_config([b.model_dump() for b in config.buckets], month, scheme)
    prices = None
    if config.default_prices:
        prices = {day_type: [str(p) for p in values] for day_type, values in config.default_prices.items()}
    return default_bucket_set(month, scheme, prices)


def build_generator(config: RunConfig) -> LoadProfileGenerator:
    profiles = ProfileLibrary(
        RegressionProfile(p.month, p.day_type, tuple(p.coefficients)) for p in config.datagen.profiles
    )
    noise = NoiseModel(config.datagen.noise.kind, config.datagen.noise.amplitude, config.datagen.noise.relative)
    return LoadProfileGenerator(config.datagen.seed, profiles, noise)


@dataclass
class ExperimentPlan:
    config: RunConfig
    month: MonthSpec
    bucket_set: BucketSet
    generator: LoadProfileGenerator

    @classmethod
    def from_config(cls, config: RunConfig) -> "ExperimentPlan":
        """Build every domain object up front so a bad config fails before any work"""
        try:
            month = config.month_spec()
            return cls(config, month, build_bucket_set(config, month), build_generator(config))
        except (SmartGridError, ValueError) as exc:
            raise ConfigError(f"Run config rejected: {exc}") from exc


def new_run_id(config: RunConfig) -> str:
    stamp = datetime.now().strftime("%Y%m%dT%H%M%S")
    return f"{config.architecture.value.lower()}-s{config.datagen.seed}-{stamp}-{uuid.uuid4().hex[:6]}"


async def simulate_month(plan: ExperimentPlan, backend: StorageBackend, report: ExperimentReport) -> BillingResult:
    """Ingest the month through the actor grid and bill it; bill timing is the median of repetitions"""
    config = plan.config
    system = ActorSystem()
    try:
        cdpn = spawn_grid(system, backend, plan.generator, plan.month, config.cn_count, config.households_per_cn,
                          config.storage.serialize_payloads, config.collect_timeout_seconds)
        ingested = await system.ask(cdpn, RunMonth())
        report.day_seconds = list(ingested.day_seconds)
        report.reading_count = ingested.reading_count

        request = RunBilling(plan.bucket_set, worker_count=max(config.mcb_workers))
        timing, result = await measure_async(lambda: system.ask(cdpn, request), config.repetitions, config.warmup)
        report.bill_seconds = timing.median
        return result
    finally:
        if not await system.shutdown():
            logger.warning("Actors left messages behind at shutdown")


def measure_stored_month(plan: ExperimentPlan, backend: StorageBackend, report: ExperimentReport,
                         billed: BillingResult) -> None:
    """Cold start (in-memory architectures) and the MCB worker sweep over the stored month"""
    config = plan.config
    if backend.architecture.bills_in_memory:
        timing, data = measure(backend.load_month, config.repetitions, config.warmup)
        report.cold_start_seconds = timing.median
        if not data.same_as(backend.buffer.to_month_data()):
            raise ExperimentError("Cold-start data differs from the CDPN memory buffer")
    else:
        data = backend.load_month()

    if data.total_wh != billed.total_wh:
        raise ExperimentError(f"Stored energy {data.total_wh} Wh differs from billed energy {billed.total_wh} Wh")

    mask = build_mask(plan.bucket_set)
    for workers in config.mcb_workers:
        job = BillingJob(data.households, data.wh, mask, plan.bucket_set.prices, workers)
        timing, result = measure(lambda: bill_all(job), config.repetitions, config.warmup)
        report.mcb_seconds[workers] = timing.median
        if result.checksum() != report.checksum:
            raise VerificationMismatch({backend.architecture.value: report.checksum, f"mcb-w{workers}": result.checksum()})


def write_outputs(report: ExperimentReport, config: RunConfig, run_dir: Path) -> None:
    emit_csv(report, run_dir / "report.csv", append=False)
    (run_dir / "report.txt").write_text(emit_table(report), encoding="utf-8")
    emit_csv(report, Path(config.output_dir) / "results.csv")


def run_experiment(config: RunConfig) -> ExperimentReport:
    plan = ExperimentPlan.from_config(config)
    run_id = config.run_id or new_run_id(config)
    run_dir = Path(config.output_dir) / run_id
    dump_run_config(config.model_copy(update={"run_id": run_id}), run_dir / "config.yaml")
    root = Path(config.storage.root) / run_id if config.storage.root else run_dir / "store"

    report = ExperimentReport(
        run_id=run_id,
        architecture=config.architecture.value,
        cn_count=config.cn_count,
        household_count=config.household_count,
        repetitions=config.repetitions,
    )
    logger.info(f"Run {run_id}: {config.architecture.value}, {config.cn_count} CN(s) x "
                f"{config.households_per_cn} households, {plan.month.key} ({plan.month.days} days)")

    try:
        with create_backend(config.architecture, root) as backend:
            billed = asyncio.run(simulate_month(plan, backend, report))
            report.checksum = billed.checksum()
            report.household_errors = len(billed.errors)
            measure_stored_month(plan, backend, report, billed)
            report.backend_metrics = backend.metrics()
    except VerificationMismatch as exc:
        logger.error(f"Run {run_id} failed verification: {exc}")
        write_outputs(report, config, run_dir)
        raise
    except Exception as exc:
        logger.error(f"Run {run_id} failed: {exc}")
        write_outputs(report, config, run_dir)
        raise ExperimentError(f"Run {run_id} failed: {exc}", report) from exc

    write_outputs(report, config, run_dir)
    logger.info(f"Run {run_id} complete: checksum {report.checksum[:12]}, reports in {run_dir}")
    return report


def verify_architectures(config: RunConfig,
                         architectures: Sequence[Architecture] = tuple(Architecture)) -> Dict[str, str]:
    """Run the same config on every architecture; raise VerificationMismatch unless all checksums agree"""
    base_id = config.run_id or new_run_id(config)
    checksums: Dict[str, str] = {}
    for architecture in architectures:
        run = config.model_copy(update={
            "architecture": architecture,
            "run_id": f"{base_id}-{architecture.value.lower()}",
            "repetitions": 1,
            "warmup": False,
        })
        checksums[architecture.value] = run_experiment(run).checksum
    if len(set(checksums.values())) > 1:
        raise VerificationMismatch(checksums)
    logger.info(f"All {len(checksums)} architectures agree: {next(iter(checksums.values()), '')[:12]}")
    return checksums
