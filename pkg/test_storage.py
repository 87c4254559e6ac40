#!/usr/bin/env python3
"""
Tests for the four storage architectures and their on-disk encodings
"""

import threading
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest
from sqlalchemy import inspect, update

from models.domain import Architecture, DailyBatch, HouseholdId, MonthSpec, SLOTS_PER_DAY
from models.errors import (
    BatchMismatch,
    CorruptFile,
    DuplicateBatch,
    IncompleteMonth,
    InvalidTime,
    MissingFile,
    MonthAlreadyInitialized,
    MonthNotInitialized,
    OutOfOrderBatch,
    StoreError,
)
from models.storage import MonthlyBlob
from services.billing.mcb import BillingJob, bill_all
from services.datagen.generator import LoadProfileGenerator, household_grid
from services.storage.factory import create_backend
from services.storage.formats import (
    consumption_lines,
    decode_daily_batch,
    decode_readings,
    encode_daily_batch,
    encode_readings,
    format_kwh,
    parse_consumption,
    parse_kwh,
    slot_timestamp,
    timestamp_lines,
    timestamp_slot,
)
from services.storage.hybrid_fs import HybridFsBackend, shard_path
from services.storage.keyvalue import KeyValueBackend
from services.tariff.buckets import BucketClause, PricingScheme, default_bucket_set
from services.tariff.mask import build_mask

ARCHITECTURES = list(Architecture)


def ingest_month(backend, generator, month, cn_count, per_cn):
    """Begin the month and store every (CN, day) batch in day order"""
    households = household_grid(cn_count, per_cn)
    backend.begin_month(month, households)
    for day in range(month.days):
        for cn in backend.cns:
            backend.insert_daily(generator.generate_day_batch(cn, backend.households_of(cn), month, day))
    return generator.generate_month(households, month)


# Encodings
def test_kwh_text():
    assert format_kwh(1234) == "1.234"
    assert format_kwh(7) == "0.007"
    assert parse_kwh("0.007") == 7
    assert parse_kwh(" 12.500") == 12500
    for bad in ("1.23", "1", "a.bcd", "1.2345"):
        with pytest.raises(ValueError):
            parse_kwh(bad)


def test_slot_timestamps(month):
    assert slot_timestamp(month, 0) == "2009-01-01T00:00"
    assert slot_timestamp(month, 2975) == "2009-01-31T23:45"
    assert timestamp_slot(month, "2009-01-02T00:15") == 97
    for bad in ("2009-02-01T00:00", "2009-01-01T00:10", "2009-01-01 00:00"):
        with pytest.raises(ValueError):
            timestamp_slot(month, bad)


def test_key_value_blob_layout(month, fixtures_dir):
    expected = (fixtures_dir / "a3_blob_first_hour.xml").read_text(encoding="utf-8").strip()
    assert encode_readings(month, 0, [0, 1, 250, 1234]) == expected
    assert decode_readings(month, expected) == ([0, 1, 2, 3], [0, 1, 250, 1234])
    with pytest.raises(ValueError):
        decode_readings(month, expected[:-5])


def test_file_layouts(month, fixtures_dir):
    assert timestamp_lines(month, 0) == (fixtures_dir / "a4_timestamps_day00.dat").read_text(encoding="utf-8")
    consumption = (fixtures_dir / "a4_consumption_first_hour.dat").read_text(encoding="utf-8")
    assert consumption_lines([0, 1, 250, 1234]) == consumption
    assert parse_consumption(consumption).tolist() == [0, 1, 250, 1234]
    with pytest.raises(ValueError):
        parse_consumption("0.100\n-0.200\n")
    with pytest.raises(ValueError):
        parse_consumption("0.1\n")


def test_daily_batch_payload(toy_month):
    batch = LoadProfileGenerator(1).generate_day_batch(2, household_grid(3, 2)[4:], toy_month, 1)
    payload = encode_daily_batch(toy_month, batch)
    assert payload.startswith(b'<day cn="2" d="1"><h id="2-0">')
    decoded = decode_daily_batch(toy_month, payload)
    assert decoded.households == batch.households
    assert np.array_equal(decoded.wh, batch.wh)


def test_shard_path(month):
    household = HouseholdId(1, 300)
    serial = 1_000_300
    assert shard_path(month, household).as_posix() == \
        f"2009-01/{serial % 256:02x}/{(serial // 256) % 256:02x}/{serial}.dat"


# Shared contract
@pytest.mark.parametrize("architecture", ARCHITECTURES)
def test_backend_bills_like_mcb(architecture, tmp_path, toy_month):
    generator = LoadProfileGenerator(42)
    bucket_set = default_bucket_set(toy_month)
    with create_backend(architecture, tmp_path) as backend:
        data = ingest_month(backend, generator, toy_month, 2, 10)
        expected = bill_all(BillingJob.for_month(data, bucket_set))
        result = backend.compute_bill(bucket_set, worker_count=2)
        assert result.checksum() == expected.checksum()
        assert result == expected
        assert backend.load_month().same_as(data)
        metrics = backend.metrics()
        assert metrics["insert_daily_count"] == 2 * toy_month.days
        assert metrics["compute_bill_count"] == 1


@pytest.mark.parametrize("architecture", ARCHITECTURES)
def test_duplicate_batch_rejected(architecture, tmp_path, toy_month):
    generator = LoadProfileGenerator(1)
    with create_backend(architecture, tmp_path) as backend:
        backend.begin_month(toy_month, household_grid(1, 3))
        batch = generator.generate_day_batch(0, backend.households_of(0), toy_month, 0)
        backend.insert_daily(batch)
        with pytest.raises(DuplicateBatch) as info:
            backend.insert_daily(batch)
        assert (info.value.cn, info.value.day) == (0, 0)
        assert backend.ingested_days(0) == {0}


@pytest.mark.parametrize("architecture", ARCHITECTURES)
def test_month_lifecycle_errors(architecture, tmp_path, toy_month):
    generator = LoadProfileGenerator(1)
    with create_backend(architecture, tmp_path) as backend:
        with pytest.raises(MonthNotInitialized):
            backend.load_month()
        backend.begin_month(toy_month, household_grid(2, 2))
        with pytest.raises(MonthAlreadyInitialized):
            backend.begin_month(toy_month, household_grid(2, 2))

        wrong = generator.generate_day_batch(0, [HouseholdId(0, 0)], toy_month, 0)
        with pytest.raises(BatchMismatch):
            backend.insert_daily(wrong)
        late = DailyBatch(0, toy_month.days, backend.households_of(0), np.zeros((2, SLOTS_PER_DAY)))
        with pytest.raises(InvalidTime):
            backend.insert_daily(late)

        backend.insert_daily(generator.generate_day_batch(0, backend.households_of(0), toy_month, 0))
        with pytest.raises(IncompleteMonth):
            backend.finalize_month()
        with pytest.raises(IncompleteMonth):
            backend.compute_bill(default_bucket_set(toy_month))


def test_bucket_set_month_must_match(tmp_path, toy_month):
    with create_backend("A3", tmp_path) as backend:
        ingest_month(backend, LoadProfileGenerator(1), toy_month, 1, 2)
        with pytest.raises(ValueError):
            backend.compute_bill(default_bucket_set(MonthSpec.toy(2)))


@pytest.mark.parametrize("architecture", ARCHITECTURES)
def test_zero_households_bill_empty(architecture, tmp_path, toy_month):
    bucket_set = default_bucket_set(toy_month)
    empty = bill_all(BillingJob([], np.zeros((0, toy_month.slots_per_month)), build_mask(bucket_set),
                                bucket_set.prices))
    with create_backend(architecture, tmp_path) as backend:
        backend.begin_month(toy_month, [])
        backend.finalize_month()
        data = backend.load_month()
        assert data.wh.shape == (0, toy_month.slots_per_month)
        result = backend.compute_bill(bucket_set)
        assert len(result) == 0
        assert result.checksum() == empty.checksum()


@pytest.mark.parametrize("architecture, tables", [
    ("A1", {"meter_readings", "ingest_batches"}),
    ("A3", {"monthly_blobs"}),
    ("A4", {"storage_months", "household_files"}),
])
def test_stores_hold_only_their_tables(architecture, tables, tmp_path):
    with create_backend(architecture, tmp_path) as backend:
        engine = backend.store.engine if architecture == "A1" else backend.engine
        assert set(inspect(engine).get_table_names()) == tables


# A1 / A2 concurrency
def ingest_concurrently(backend, toy_month, cn_count, per_cn):
    generator = LoadProfileGenerator(3)
    backend.begin_month(toy_month, household_grid(cn_count, per_cn))
    batches = [generator.generate_day_batch(cn, backend.households_of(cn), toy_month, 0) for cn in backend.cns]
    start = threading.Barrier(len(batches))

    def insert(batch):
        start.wait()
        backend.insert_daily(batch)

    with ThreadPoolExecutor(max_workers=len(batches)) as pool:
        list(pool.map(insert, batches))


def test_single_store_serializes_writes(tmp_path, toy_month):
    with create_backend("A1", tmp_path) as backend:
        ingest_concurrently(backend, toy_month, 3, 200)
        metrics = backend.metrics()
        assert metrics["max_concurrent_store_writes"] == 1
        assert backend.store.row_count() == 3 * 200 * SLOTS_PER_DAY


def test_per_cn_stores_write_in_parallel(tmp_path, toy_month):
    with create_backend("A2", tmp_path) as backend:
        ingest_concurrently(backend, toy_month, 3, 200)
        metrics = backend.metrics()
        assert metrics["max_concurrent_stores"] >= 2
        assert metrics["store_count"] == 3


def test_per_cn_store_errors_carry_cn(tmp_path, toy_month):
    bucket_set = default_bucket_set(toy_month)
    with create_backend("A2", tmp_path) as backend:
        ingest_month(backend, LoadProfileGenerator(1), toy_month, 2, 3)
        backend.stores[1].reset()
        with pytest.raises(StoreError) as info:
            backend.compute_bill(bucket_set)
        assert info.value.cn == 1
        assert isinstance(info.value.cause, IncompleteMonth)
        assert len(backend.bill_cn(0, bucket_set)) == 3


# A3
def test_key_value_blobs_grow_daily(tmp_path, toy_month):
    with create_backend("A3", tmp_path) as backend:
        ingest_month(backend, LoadProfileGenerator(1), toy_month, 2, 4)
        means = backend.blob_bytes_mean()
        assert sorted(means) == [0, 1, 2]
        assert means[0] < means[1] < means[2]
        slots, _ = decode_readings(toy_month, backend.blob(HouseholdId(1, 3)))
        assert slots == list(range(toy_month.slots_per_month))
        assert "blob_bytes_mean.day02" in backend.metrics()


def test_key_value_full_month_blob(tmp_path, month):
    with create_backend("A3", tmp_path) as backend:
        ingest_month(backend, LoadProfileGenerator(1), month, 1, 1)
        slots, _ = decode_readings(month, backend.blob(HouseholdId(0, 0)))
        assert len(slots) == 2976


def test_key_value_corrupt_blob(tmp_path, toy_month):
    with create_backend("A3", tmp_path) as backend:
        ingest_month(backend, LoadProfileGenerator(1), toy_month, 1, 2)
        with backend.engine.begin() as connection:
            connection.execute(
                update(MonthlyBlob).where(MonthlyBlob.household_serial == 1).values(value="<r t=")
            )
        with pytest.raises(CorruptFile) as info:
            backend.load_month()
        assert info.value.path.endswith("#1")


def test_key_value_resume(tmp_path, toy_month):
    generator = LoadProfileGenerator(4)
    with KeyValueBackend(tmp_path) as backend:
        data = ingest_month(backend, generator, toy_month, 2, 2)
    with KeyValueBackend(tmp_path) as reopened:
        reopened.resume(toy_month)
        assert reopened.load_month().same_as(data)


# A4
def test_hybrid_layout_counts(tmp_path):
    month = MonthSpec.toy(1)
    with create_backend("A4", tmp_path) as backend:
        backend.begin_month(month, household_grid(1, 100))
        assert len(backend.layout_files()) == 101
        assert len(backend.pointers()) == 100
        assert backend.metrics()["file_count"] == 101


def test_hybrid_layout_paths(tmp_path, toy_month):
    with create_backend("A4", tmp_path) as backend:
        backend.begin_month(toy_month, [HouseholdId(0, 300)])
        assert backend.layout_files() == [
            tmp_path / "a4" / "2009-01" / "2c" / "01" / "300.dat",
            tmp_path / "a4" / "2009-01" / "timestamps.dat",
        ]
        assert not (tmp_path / "a4" / "a4").exists()


def test_hybrid_concurrent_cns_match_serial(tmp_path, toy_month):
    """Days appended by 4 CNs at once leave the same files as a serial run"""
    generator = LoadProfileGenerator(6)
    with create_backend("A4", tmp_path / "serial") as serial:
        data = ingest_month(serial, generator, toy_month, 4, 5)
        serial_files = {p.relative_to(serial.root): p.read_bytes() for p in serial.layout_files()}

    with create_backend("A4", tmp_path / "concurrent") as backend:
        backend.begin_month(toy_month, household_grid(4, 5))
        with ThreadPoolExecutor(max_workers=4) as pool:
            for day in range(toy_month.days):
                batches = [generator.generate_day_batch(cn, backend.households_of(cn), toy_month, day)
                           for cn in backend.cns]
                start = threading.Barrier(len(batches))

                def insert(batch, start=start):
                    start.wait()
                    backend.insert_daily(batch)

                list(pool.map(insert, batches))

        assert backend.load_month().same_as(data)
        files = {p.relative_to(backend.root): p.read_bytes() for p in backend.layout_files()}
        assert files == serial_files


def test_hybrid_full_month_files(tmp_path, month):
    with create_backend("A4", tmp_path) as backend:
        ingest_month(backend, LoadProfileGenerator(2), month, 1, 2)
        _, timestamps, consumption = backend.pointers()[1]
        assert len(backend.resolve(consumption).read_text().splitlines()) == 2976
        assert len(backend.resolve(timestamps).read_text().splitlines()) == 2976


def test_hybrid_cold_start_matches_buffer(tmp_path, month):
    """1K households: the cold-start load reproduces the CDPN buffer exactly"""
    with create_backend("A4", tmp_path) as backend:
        ingest_month(backend, LoadProfileGenerator(11), month, 2, 500)
        assert backend.buffer.complete
        buffered = backend.buffer.to_month_data()
        loaded = backend.load_month()
        assert loaded.same_as(buffered)
        assert loaded.wh.tobytes() == buffered.wh.tobytes()


def test_hybrid_missing_file_reported(tmp_path, toy_month):
    with create_backend("A4", tmp_path) as backend:
        ingest_month(backend, LoadProfileGenerator(1), toy_month, 1, 3)
        household, _, consumption = backend.pointers()[2]
        path = backend.resolve(consumption)
        path.unlink()
        with pytest.raises(MissingFile) as info:
            backend.load_month()
        assert info.value.path == str(path)


def test_hybrid_truncated_file_reported(tmp_path, toy_month):
    with create_backend("A4", tmp_path) as backend:
        ingest_month(backend, LoadProfileGenerator(1), toy_month, 1, 2)
        path = backend.resolve(backend.pointers()[0][2])
        path.write_text("0.100\n")
        with pytest.raises(CorruptFile):
            backend.load_month()


def test_hybrid_days_must_arrive_in_order(tmp_path, toy_month):
    generator = LoadProfileGenerator(1)
    with create_backend("A4", tmp_path) as backend:
        backend.begin_month(toy_month, household_grid(1, 2))
        with pytest.raises(OutOfOrderBatch) as info:
            backend.insert_daily(generator.generate_day_batch(0, backend.households_of(0), toy_month, 1))
        assert info.value.expected == 0


def test_hybrid_layout_survives_reopen(tmp_path, toy_month):
    generator = LoadProfileGenerator(8)
    with HybridFsBackend(tmp_path) as backend:
        data = ingest_month(backend, generator, toy_month, 2, 3)
    with HybridFsBackend(tmp_path) as reopened:
        with pytest.raises(MonthAlreadyInitialized):
            reopened.begin_month(toy_month, household_grid(2, 3))
        assert reopened.month is None
        reopened.resume(toy_month)
        assert reopened.load_month().same_as(data)
        result = reopened.compute_bill(default_bucket_set(toy_month))
        assert result.checksum() == bill_all(BillingJob.for_month(data, default_bucket_set(toy_month))).checksum()


# Cross-backend acceptance grid
@pytest.mark.slow
@pytest.mark.parametrize("seed", [1, 42, 7])
@pytest.mark.parametrize("cn_count", [1, 3])
def test_all_architectures_agree(seed, cn_count, tmp_path, month):
    schemes = {
        "TOU": PricingScheme.tou(),
        "CPP": PricingScheme.cpp([BucketClause.from_hhmm("workday", "17:00", "20:00", days=range(10, 20))]),
    }
    generator = LoadProfileGenerator(seed)
    checksums = {name: set() for name in schemes}
    for architecture in ARCHITECTURES:
        with create_backend(architecture, tmp_path / f"s{seed}-c{cn_count}") as backend:
            ingest_month(backend, generator, month, cn_count, 100)
            for name, scheme in schemes.items():
                checksums[name].add(backend.compute_bill(default_bucket_set(month, scheme)).checksum())
    assert all(len(found) == 1 for found in checksums.values())
