#!/usr/bin/env python3
"""
Tests for timing, reports, the MCB sweep and whole experiment runs
"""

from pathlib import Path

import pandas as pd
import pytest
import yaml

from models.domain import MonthSpec
from models.errors import ConfigError, ExperimentError, VerificationMismatch
from models.run_config import load_run_config, parse_run_config
from services.bench import experiment
from services.bench.experiment import ExperimentPlan, run_experiment, verify_architectures
from services.bench.report import (
    COLUMNS,
    ExperimentReport,
    MeasurementRow,
    emit_csv,
    emit_table,
    read_csv,
    render_rows,
    render_speedup,
)
from services.bench.sweep import SpeedupTable, sweep_mcb
from services.bench.timing import measure
from services.datagen.generator import dump_csv


def golden_report():
    return ExperimentReport(
        run_id="golden",
        architecture="A4",
        cn_count=2,
        household_count=4,
        reading_count=768,
        host_cores=8,
        repetitions=3,
        day_seconds=[0.5, 0.25],
        bill_seconds=0.125,
        cold_start_seconds=0.0625,
        mcb_seconds={1: 0.2, 2: 0.1},
        backend_metrics={"store_bytes": 4608.0, "file_count": 5.0},
        household_errors=0,
        checksum="ab" * 32,
    )


# Timing
def test_measure_discards_warmup():
    calls = []
    timing, result = measure(lambda: calls.append(1) or len(calls), repetitions=5)
    assert len(calls) == 6
    assert timing.repetitions == 5
    assert timing.warmup is not None
    assert result == 6

    timing, _ = measure(lambda: None, repetitions=3, warmup=False)
    assert timing.warmup is None
    with pytest.raises(ValueError):
        measure(lambda: None, repetitions=0)


# Reports
def test_report_table_matches_golden(fixtures_dir):
    expected = (fixtures_dir / "report_table.txt").read_text(encoding="utf-8")
    assert emit_table(golden_report()) == expected


def test_report_speedups():
    assert golden_report().mcb_speedup == {1: 1.0, 2: 2.0}
    assert ExperimentReport("r", "A1", mcb_seconds={2: 0.5}).mcb_speedup == {}


def test_csv_round_trip(tmp_path):
    report = golden_report()
    path = emit_csv(report, tmp_path / "report.csv", append=False)
    lines = path.read_text(encoding="utf-8").splitlines()
    assert lines[0] == ",".join(COLUMNS)
    assert lines[1] == "golden,A4,households,4.0,count"
    assert read_csv(path) == report.rows()


def test_empty_csv_has_header_only(tmp_path):
    path = emit_csv([], tmp_path / "empty.csv")
    assert path.read_text(encoding="utf-8").strip() == ",".join(COLUMNS)
    assert read_csv(path) == []


def test_appended_runs_keep_one_header(tmp_path):
    path = tmp_path / "results.csv"
    first = golden_report()
    second = golden_report()
    second.run_id = "golden-2"
    emit_csv(first, path)
    emit_csv(second, path)
    frame = pd.read_csv(path, dtype=str)
    assert list(frame.columns) == COLUMNS
    assert list(dict.fromkeys(frame["run_id"])) == ["golden", "golden-2"]
    assert len(frame) == 2 * len(first.rows())

    rendered = render_rows(read_csv(path))
    assert rendered.count("Run golden") == 2


def test_missing_columns_rejected(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("run_id,metric\nx,y\n", encoding="utf-8")
    with pytest.raises(ValueError):
        read_csv(path)


# Sweep
def test_speedup_table_rows():
    table = SpeedupTable([100, 1000], [1, 2], {(1, 100): 0.4, (2, 100): 0.2, (1, 1000): 4.0, (2, 1000): 2.5},
                         host_cores=4)
    assert table.speedup(2, 100) == 2.0
    rows = table.rows("sweep-x")
    assert rows[0] == MeasurementRow("sweep-x", "MCB", "host_cores", 4.0, "count")
    assert [r.metric for r in rows[1:5]] == [
        "mcb_seconds.w1.h100", "mcb_seconds.w1.h1000", "mcb_seconds.w2.h100", "mcb_seconds.w2.h1000",
    ]
    rendered = render_speedup(rows)
    assert "host cores: 4" in rendered
    assert "1.60" in rendered
    assert SpeedupTable([], []).rows("empty") == []

    no_single = SpeedupTable([100], [2, 4], {(2, 100): 0.4, (4, 100): 0.25}, host_cores=4)
    assert no_single.speedup(4, 100) == 1.6
    assert "Speedup T(2)/T(w)" in render_speedup(no_single.rows("sweep-y"))


def test_sweep_mcb_small_grid():
    table = sweep_mcb([30, 10], [2, 1], seed=3, month=MonthSpec.toy(2), repetitions=1, warmup=False)
    assert table.sizes == [10, 30]
    assert table.workers == [1, 2]
    assert sorted(table.seconds) == [(1, 10), (1, 30), (2, 10), (2, 30)]
    assert len(table.rows("s")) == 1 + 4 + 4

    table = sweep_mcb([10], [2], seed=3, month=MonthSpec.toy(1), repetitions=1, warmup=False)
    assert table.workers == [1, 2]
    assert table.speedup(1, 10) == 1.0


# Experiments
def test_architectures_bill_identically(toy_config, tmp_path):
    a1 = run_experiment(toy_config("A1"))
    a4 = run_experiment(toy_config("A4"))
    assert a1.checksum == a4.checksum
    assert a1.reading_count == a4.reading_count == 2 * 5 * 2 * 96
    assert a1.cold_start_seconds is None
    assert a4.cold_start_seconds is not None
    assert set(a4.mcb_seconds) == {1, 2}
    assert a4.backend_metrics["file_count"] == 11

    run_dir = tmp_path / "results" / "test-a4"
    assert (run_dir / "report.csv").exists()
    assert (run_dir / "report.txt").read_text(encoding="utf-8") == emit_table(a4)
    assert load_run_config(run_dir / "config.yaml").architecture.value == "A4"

    results = read_csv(tmp_path / "results" / "results.csv")
    assert {r.run_id for r in results} == {"test-a1", "test-a4"}


def test_repeated_runs_are_deterministic(toy_config, tmp_path):
    first = run_experiment(toy_config("A3", run_id="det-1"))
    second = run_experiment(toy_config("A3", run_id="det-2"))
    assert first.checksum == second.checksum

    dumps = []
    for name in ("one.csv", "two.csv"):
        plan = ExperimentPlan.from_config(toy_config("A3"))
        data = plan.generator.generate_month(5, plan.month)
        dumps.append(dump_csv(data, tmp_path / name).read_bytes())
    assert dumps[0] == dumps[1]


def test_verify_all_architectures(toy_config):
    checksums = verify_architectures(toy_config("A1", run_id="verify", cn_count=3, households_per_cn=3))
    assert sorted(checksums) == ["A1", "A2", "A3", "A4"]
    assert len(set(checksums.values())) == 1


def test_cpp_run(toy_config):
    scheme = {"kind": "CPP", "critical_clauses": [{"day_type": "workday", "start": "18:00", "end": "20:00"}]}
    report = run_experiment(toy_config("A2", run_id="cpp", scheme=scheme))
    assert report.checksum
    assert report.household_errors == 0


def test_zero_households_agree_across_architectures(toy_config):
    checksums = verify_architectures(toy_config("A1", run_id="empty", households_per_cn=0))
    assert sorted(checksums) == ["A1", "A2", "A3", "A4"]
    assert len(set(checksums.values())) == 1


def test_checksum_mismatch_is_not_wrapped(toy_config, tmp_path, monkeypatch):
    def disagree(plan, backend, report, billed):
        raise VerificationMismatch({"A3": report.checksum, "mcb-w1": "0" * 64})

    monkeypatch.setattr(experiment, "measure_stored_month", disagree)
    with pytest.raises(VerificationMismatch):
        run_experiment(toy_config("A3", run_id="mismatch"))
    assert (tmp_path / "results" / "mismatch" / "report.csv").exists()


def test_bad_bucket_set_is_config_error(toy_config):
    buckets = [{"label": "day", "price": "0.1", "clauses": [{"start": "06:00", "end": "24:00"}]}]
    with pytest.raises(ConfigError):
        ExperimentPlan.from_config(toy_config(buckets=buckets))


def test_failed_run_keeps_partial_report(toy_config, tmp_path):
    blocker = tmp_path / "not-a-directory"
    blocker.write_text("", encoding="utf-8")
    config = toy_config("A1", run_id="broken", storage={"root": str(blocker)})
    with pytest.raises(ExperimentError) as info:
        run_experiment(config)
    assert info.value.report.run_id == "broken"
    assert (tmp_path / "results" / "broken" / "report.csv").exists()


# Run configs
def test_run_config_validation(tmp_path):
    with pytest.raises(ConfigError):
        parse_run_config({"architecture": "A9"})
    with pytest.raises(ConfigError):
        parse_run_config({"mcb_workers": [0]})
    with pytest.raises(ConfigError):
        parse_run_config({"datagen": {"profiles": [{"month": 1, "day_type": "workday", "coefficients": [1]}]}})
    with pytest.raises(ConfigError):
        load_run_config(tmp_path / "missing.yaml")

    path = tmp_path / "config.yaml"
    path.write_text(yaml.safe_dump({"architecture": "A3", "mcb_workers": [4, 1, 1]}), encoding="utf-8")
    config = load_run_config(path)
    assert config.mcb_workers == [1, 4]
    assert config.month_spec().days == 31


def test_example_config_loads():
    config = load_run_config(Path(__file__).parent / "configs" / "example.yaml")
    plan = ExperimentPlan.from_config(config)
    assert len(plan.bucket_set) == 9
    assert config.household_count == 300
