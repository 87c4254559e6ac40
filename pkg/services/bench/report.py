"""
Experiment reports and their CSV / text renderings.

CSV schema, one row per measurement:

    run_id,architecture,metric,value,unit

Rows of one run are written together, so appended runs never interleave.
"""

import logging
import os
from dataclasses import dataclass, field
from itertools import groupby
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import pandas as pd

from services.bench.timing import METHODOLOGY

logger = logging.getLogger(__name__)

COLUMNS = ["run_id", "architecture", "metric", "value", "unit"]
TEXT_UNITS = ("sha256", "text")
SWEEP_ARCHITECTURE = "MCB"


@dataclass(frozen=True)
class MeasurementRow:
    run_id: str
    architecture: str
    metric: str
    value: Union[float, str]
    unit: str


def _backend_unit(metric: str) -> str:
    if metric.endswith("_seconds_total"):
        return "s"
    if "bytes" in metric:
        return "bytes"
    return "count"


@dataclass
class ExperimentReport:
    run_id: str
    architecture: str
    cn_count: int = 0
    household_count: int = 0
    reading_count: int = 0
    host_cores: int = field(default_factory=lambda: os.cpu_count() or 1)
    repetitions: int = 0
    methodology: str = METHODOLOGY
    day_seconds: List[float] = field(default_factory=list)
    bill_seconds: Optional[float] = None
    cold_start_seconds: Optional[float] = None
    mcb_seconds: Dict[int, float] = field(default_factory=dict)
    backend_metrics: Dict[str, float] = field(default_factory=dict)
    household_errors: int = 0
    checksum: Optional[str] = None

    @property
    def mcb_speedup(self) -> Dict[int, float]:
        base = self.mcb_seconds.get(1)
        if not base:
            return {}
        return {w: base / t for w, t in sorted(self.mcb_seconds.items()) if t > 0}

    def rows(self) -> List[MeasurementRow]:
        def row(metric, value, unit):
            return MeasurementRow(self.run_id, self.architecture, metric,
                                  value if unit in TEXT_UNITS else float(value), unit)

        rows = [
            row("households", self.household_count, "count"),
            row("cn_count", self.cn_count, "count"),
            row("readings", self.reading_count, "count"),
            row("host_cores", self.host_cores, "count"),
            row("repetitions", self.repetitions, "count"),
            row("methodology", self.methodology, "text"),
        ]
        for day, seconds in enumerate(self.day_seconds):
            rows.append(row(f"ingest_seconds.day{day:02d}", seconds, "s"))
        if self.day_seconds:
            rows.append(row("ingest_seconds_total", sum(self.day_seconds), "s"))
        if self.bill_seconds is not None:
            rows.append(row("bill_seconds", self.bill_seconds, "s"))
        if self.cold_start_seconds is not None:
            rows.append(row("cold_start_seconds", self.cold_start_seconds, "s"))
        for workers, seconds in sorted(self.mcb_seconds.items()):
            rows.append(row(f"mcb_seconds.w{workers}", seconds, "s"))
        for workers, speedup in self.mcb_speedup.items():
            rows.append(row(f"mcb_speedup.w{workers}", speedup, "x"))
        for metric, value in sorted(self.backend_metrics.items()):
            rows.append(row(f"backend.{metric}", value, _backend_unit(metric)))
        rows.append(row("household_errors", self.household_errors, "count"))
        if self.checksum is not None:
            rows.append(row("bill_checksum", self.checksum, "sha256"))
        return rows


def _csv_value(value: Union[float, str]) -> str:
    return value if isinstance(value, str) else repr(float(value))


def emit_csv(rows: Union[ExperimentReport, Sequence[MeasurementRow]], path: Union[str, Path],
             append: bool = True) -> Path:
    """Write rows to path; appends below an existing header unless append is False"""
    if isinstance(rows, ExperimentReport):
        rows = rows.rows()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame = pd.DataFrame(
        [(r.run_id, r.architecture, r.metric, _csv_value(r.value), r.unit) for r in rows],
        columns=COLUMNS,
    )
    has_header = append and path.exists() and path.stat().st_size > 0
    frame.to_csv(path, mode="a" if has_header else "w", header=not has_header, index=False)
    logger.info(f"Wrote {len(frame)} measurement rows to {path}")
    return path


def read_csv(path: Union[str, Path]) -> List[MeasurementRow]:
    frame = pd.read_csv(path, dtype=str, keep_default_na=False)
    missing = [c for c in COLUMNS if c not in frame.columns]
    if missing:
        raise ValueError(f"{path} is missing columns {missing}")
    return [
        MeasurementRow(r.run_id, r.architecture, r.metric,
                       r.value if r.unit in TEXT_UNITS else float(r.value), r.unit)
        for r in frame[COLUMNS].itertuples(index=False)
    ]


def format_value(value: Union[float, str], unit: str) -> str:
    if isinstance(value, str):
        return value
    if unit == "s":
        return f"{value:.6f}"
    if unit == "x":
        return f"{value:.2f}"
    if float(value).is_integer():
        return str(int(value))
    return f"{value:g}"


def render_experiment(rows: Sequence[MeasurementRow]) -> str:
    """Fixed-width table of one run"""
    first = rows[0]
    lines = [
        f"Run {first.run_id} ({first.architecture})",
        f"{'metric':<32}{'value':>20}  unit",
        "-" * 60,
    ]
    for row in rows:
        lines.append(f"{row.metric:<32}{format_value(row.value, row.unit):>20}  {row.unit}")
    return "\n".join(lines) + "\n"


def _sweep_key(metric: str):
    """'mcb_seconds.w4.h10000' -> ('mcb_seconds', 4, 10000)"""
    name, workers, households = metric.split(".")
    return name, int(workers[1:]), int(households[1:])


def is_sweep(rows: Sequence[MeasurementRow]) -> bool:
    return bool(rows) and rows[0].architecture == SWEEP_ARCHITECTURE


def render_speedup(rows: Sequence[MeasurementRow]) -> str:
    """Workers down, household counts across: wall seconds, then speedup"""
    seconds, speedup, cores = {}, {}, None
    for row in rows:
        if row.metric == "host_cores":
            cores = int(row.value)
        elif row.metric.startswith("mcb_seconds."):
            _, w, h = _sweep_key(row.metric)
            seconds[(w, h)] = row.value
        elif row.metric.startswith("mcb_speedup."):
            _, w, h = _sweep_key(row.metric)
            speedup[(w, h)] = row.value

    workers = sorted({w for w, _ in seconds})
    sizes = sorted({h for _, h in seconds})
    time_frame = pd.DataFrame(
        [[seconds.get((w, h)) for h in sizes] for w in workers], index=workers, columns=sizes
    )
    speedup_frame = pd.DataFrame(
        [[speedup.get((w, h)) for h in sizes] for w in workers], index=workers, columns=sizes
    )
    time_frame.index.name = speedup_frame.index.name = "#Workers"
    return "\n".join([
        f"MCB sweep {rows[0].run_id} (host cores: {cores})",
        "Wall time (s)",
        time_frame.to_string(float_format=lambda v: f"{v:.6f}"),
        f"Speedup T({workers[0] if workers else 1})/T(w)",
        speedup_frame.to_string(float_format=lambda v: f"{v:.2f}"),
    ]) + "\n"


def render_rows(rows: Sequence[MeasurementRow]) -> str:
    """Render every run found in rows, in file order"""
    blocks = []
    for _, group in groupby(rows, key=lambda r: r.run_id):
        group = list(group)
        blocks.append(render_speedup(group) if is_sweep(group) else render_experiment(group))
    return "\n".join(blocks)


def emit_table(report: ExperimentReport) -> str:
    return render_experiment(report.rows())
