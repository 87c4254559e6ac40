#!/usr/bin/env python3
"""
Tests for the benchmark command line: subcommands and exit codes
"""

from types import SimpleNamespace

import yaml

import run_benchmark
from models.errors import VerificationMismatch
from services.bench import experiment
from services.bench.report import emit_csv


def write_config(tmp_path, name="run.yaml", **overrides):
    data = {
        "run_id": "cli",
        "architecture": "A3",
        "cn_count": 1,
        "households_per_cn": 4,
        "month": {"days": 2},
        "repetitions": 1,
        "warmup": False,
        "mcb_workers": [1, 2],
        "output_dir": str(tmp_path / "results"),
    }
    data.update(overrides)
    path = tmp_path / name
    path.write_text(yaml.safe_dump(data), encoding="utf-8")
    return str(path)


def test_run_succeeds(tmp_path, capsys):
    assert run_benchmark.main(["run", write_config(tmp_path)]) == run_benchmark.EXIT_OK
    out = capsys.readouterr().out
    assert "Run cli (A3)" in out
    assert (tmp_path / "results" / "cli" / "report.csv").exists()


def test_missing_config_is_config_error(tmp_path):
    assert run_benchmark.main(["run", str(tmp_path / "nope.yaml")]) == run_benchmark.EXIT_CONFIG


def test_invalid_config_is_config_error(tmp_path):
    assert run_benchmark.main(["run", write_config(tmp_path, architecture="A9")]) == run_benchmark.EXIT_CONFIG


def test_failed_run_is_experiment_error(tmp_path, capsys):
    blocker = tmp_path / "file"
    blocker.write_text("", encoding="utf-8")
    config = write_config(tmp_path, storage={"root": str(blocker)})
    assert run_benchmark.main(["run", config]) == run_benchmark.EXIT_EXPERIMENT
    assert "Partial report kept for run cli" in capsys.readouterr().out


def test_verify_succeeds(tmp_path, capsys):
    assert run_benchmark.main(["verify", write_config(tmp_path, cn_count=2, households_per_cn=2)]) == 0
    out = capsys.readouterr().out
    assert "A1:" in out and "A4:" in out


def test_verify_mismatch_exit_code(tmp_path, monkeypatch, capsys):
    def fake_run(config):
        return SimpleNamespace(checksum="0" * 64 if config.architecture.value != "A2" else "f" * 64)

    monkeypatch.setattr(experiment, "run_experiment", fake_run)
    assert run_benchmark.main(["verify", write_config(tmp_path)]) == run_benchmark.EXIT_MISMATCH
    assert "A2: " + "f" * 64 in capsys.readouterr().out


def test_generate_writes_csv(tmp_path):
    out = tmp_path / "readings.csv"
    code = run_benchmark.main(["generate", "--households", "2", "--days", "1", "--seed", "9", "--out", str(out)])
    assert code == 0
    lines = out.read_text(encoding="utf-8").splitlines()
    assert lines[0] == "household,slot,kwh"
    assert len(lines) == 1 + 2 * 96


def test_generate_rejects_bad_month(tmp_path):
    code = run_benchmark.main(["generate", "--days", "40", "--out", str(tmp_path / "x.csv")])
    assert code == run_benchmark.EXIT_CONFIG


def test_sweep_and_report(tmp_path, capsys):
    out = tmp_path / "sweeps.csv"
    code = run_benchmark.main(["sweep", "--config", write_config(tmp_path), "--households", "8",
                               "--workers", "1", "2", "--repetitions", "1", "--out", str(out)])
    assert code == 0
    assert "Speedup" in capsys.readouterr().out

    assert run_benchmark.main(["report", str(out)]) == 0
    assert "MCB sweep" in capsys.readouterr().out


def test_report_of_empty_file(tmp_path, capsys):
    path = emit_csv([], tmp_path / "empty.csv")
    assert run_benchmark.main(["report", str(path)]) == 0
    assert "holds no measurements" in capsys.readouterr().out


def test_report_of_missing_file_is_config_error(tmp_path, capsys):
    assert run_benchmark.main(["report", str(tmp_path / "missing.csv")]) == run_benchmark.EXIT_CONFIG
    assert "Cannot read results file" in capsys.readouterr().out

    garbage = tmp_path / "garbage.csv"
    garbage.write_text("run_id,metric\nx,y\n", encoding="utf-8")
    assert run_benchmark.main(["report", str(garbage)]) == run_benchmark.EXIT_CONFIG


def test_mismatch_inside_run_exit_code(tmp_path, monkeypatch):
    def disagree(plan, backend, report, billed):
        raise VerificationMismatch({"A3": report.checksum, "mcb-w2": "0" * 64})

    monkeypatch.setattr(experiment, "measure_stored_month", disagree)
    assert run_benchmark.main(["run", write_config(tmp_path)]) == run_benchmark.EXIT_MISMATCH
