#!/usr/bin/env python3
"""
Smart-meter storage architecture benchmark

Commands:
1. generate  dump synthetic readings as CSV
2. run       one experiment from a run-config file
3. sweep     MCB speedup grid (workers x households)
4. verify    run every architecture and compare bill checksums
5. report    render tables from a results CSV

Exit codes: 0 success, 2 config or input error, 3 experiment error, 4 verification mismatch.
"""

import argparse
import logging
import os
import sys
import uuid
from datetime import datetime
from pathlib import Path
from typing import List, Optional

from dotenv import load_dotenv

# Load environment variables
load_dotenv()

# Add project root to path
sys.path.insert(0, os.path.dirname(__file__))

from config import settings  # noqa: E402
from models.errors import ConfigError, ExperimentError, SmartGridError, VerificationMismatch  # noqa: E402
from models.run_config import RunConfig, load_run_config  # noqa: E402

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_EXPERIMENT = 3
EXIT_MISMATCH = 4


def _config(path: Optional[str]) -> RunConfig:
    return load_run_config(path) if path else RunConfig()


def cmd_generate(args) -> int:
    from services.bench.experiment import ExperimentPlan
    from services.datagen.generator import dump_csv, household_grid

    config = _config(args.config)
    updates = {}
    if args.seed is not None:
        updates["datagen"] = config.datagen.model_copy(update={"seed": args.seed})
    if args.cn_count is not None:
        updates["cn_count"] = args.cn_count
    if args.households is not None:
        updates["households_per_cn"] = args.households
    if args.days is not None:
        updates["month"] = config.month.model_copy(update={"days": args.days})
    config = config.model_copy(update=updates)
    plan = ExperimentPlan.from_config(config)

    print(f"📊 Generating {config.household_count} household-months for {plan.month.key} (seed {config.datagen.seed})")
    data = plan.generator.generate_month(household_grid(config.cn_count, config.households_per_cn), plan.month)
    path = dump_csv(data, args.out)
    print(f"✅ Wrote {data.wh.size} readings to {path}")
    return EXIT_OK


def cmd_run(args) -> int:
    from services.bench.experiment import run_experiment
    from services.bench.report import emit_table

    config = load_run_config(args.config)
    if args.output_dir:
        config = config.model_copy(update={"output_dir": args.output_dir})
    report = run_experiment(config)
    print(emit_table(report))
    print(f"✅ Run {report.run_id} complete")
    return EXIT_OK


def cmd_sweep(args) -> int:
    from services.bench.report import emit_csv, render_speedup
    from services.bench.sweep import sweep_mcb
    from services.bench.experiment import build_bucket_set

    config = _config(args.config)
    try:
        month = config.month_spec()
        bucket_set = build_bucket_set(config, month)
    except (SmartGridError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    households = args.households or config.sweep_households
    workers = args.workers or config.mcb_workers
    repetitions = args.repetitions or config.repetitions

    print(f"⚙️  Sweeping MCB over households {households} x workers {workers} ({repetitions} repetitions)")
    table = sweep_mcb(households, workers, seed=args.seed if args.seed is not None else config.datagen.seed,
                      month=month, bucket_set=bucket_set, repetitions=repetitions, warmup=config.warmup)
    run_id = f"sweep-{datetime.now():%Y%m%dT%H%M%S}-{uuid.uuid4().hex[:6]}"
    rows = table.rows(run_id)
    out = Path(args.out) if args.out else Path(config.output_dir) / "sweeps.csv"
    emit_csv(rows, out)
    if rows:
        print(render_speedup(rows))
    print(f"✅ Sweep written to {out}")
    return EXIT_OK


def cmd_verify(args) -> int:
    from services.bench.experiment import verify_architectures

    config = load_run_config(args.config)
    checksums = verify_architectures(config)
    for architecture, checksum in checksums.items():
        print(f"   {architecture}: {checksum}")
    print("✅ All architectures produced identical bills")
    return EXIT_OK


def cmd_report(args) -> int:
    from services.bench.report import read_csv, render_rows

    try:
        rows = read_csv(args.csv)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"Cannot read results file {args.csv}: {exc}") from exc
    if not rows:
        print(f"ℹ️  {args.csv} holds no measurements")
        return EXIT_OK
    print(render_rows(rows))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        description="Smart-meter storage architecture benchmark",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  %(prog)s generate --households 100 --out data.csv   # Dump one month of readings
  %(prog)s run configs/example.yaml                   # Run one experiment
  %(prog)s sweep --households 1000 10000 --workers 1 2 4
  %(prog)s verify configs/example.yaml                # Compare A1-A4 bill checksums
  %(prog)s report results/results.csv                 # Render stored results
        """
    )
    sub = parser.add_subparsers(dest="command", required=True)

    generate = sub.add_parser("generate", help="Dump synthetic readings as CSV")
    generate.add_argument("--config", help="Run-config file (datagen, month and grid settings)")
    generate.add_argument("--seed", type=int)
    generate.add_argument("--cn-count", type=int)
    generate.add_argument("--households", type=int, help="Households per CN")
    generate.add_argument("--days", type=int, help="Month length in days")
    generate.add_argument("--out", default="readings.csv")
    generate.set_defaults(handler=cmd_generate)

    run = sub.add_parser("run", help="Run one experiment")
    run.add_argument("config")
    run.add_argument("--output-dir")
    run.set_defaults(handler=cmd_run)

    sweep = sub.add_parser("sweep", help="MCB speedup sweep")
    sweep.add_argument("--config")
    sweep.add_argument("--households", type=int, nargs="+")
    sweep.add_argument("--workers", type=int, nargs="+")
    sweep.add_argument("--seed", type=int)
    sweep.add_argument("--repetitions", type=int)
    sweep.add_argument("--out", help="CSV to append to (default <output_dir>/sweeps.csv)")
    sweep.set_defaults(handler=cmd_sweep)

    verify = sub.add_parser("verify", help="Cross-architecture checksum check")
    verify.add_argument("config")
    verify.set_defaults(handler=cmd_verify)

    report = sub.add_parser("report", help="Render tables from a results CSV")
    report.add_argument("csv")
    report.set_defaults(handler=cmd_report)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=settings.log_level,
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
    )
    logging.getLogger("sqlalchemy.engine").setLevel(logging.WARNING)

    try:
        return args.handler(args)
    except ConfigError as e:
        print(f"❌ Config error: {e}")
        return EXIT_CONFIG
    except VerificationMismatch as e:
        print(f"❌ {e}")
        for architecture, checksum in e.checksums.items():
            print(f"   {architecture}: {checksum}")
        return EXIT_MISMATCH
    except ExperimentError as e:
        print(f"❌ Experiment failed: {e}")
        if e.report is not None:
            print(f"   Partial report kept for run {e.report.run_id}")
        return EXIT_EXPERIMENT
    except OSError as e:
        print(f"❌ File error: {e}")
        return EXIT_EXPERIMENT


if __name__ == "__main__":
    sys.exit(main())
