"""Shared fixtures for the harness test suite"""

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from models.domain import DayType, MonthSpec, SLOTS_PER_DAY  # noqa: E402
from models.run_config import parse_run_config  # noqa: E402
from services.tariff.buckets import BucketClause, BucketSet, PricingScheme, TimeBucket, apply_scheme  # noqa: E402

FIXTURES = Path(__file__).parent / "test_fixtures"


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: full-size acceptance runs (deselect with -m 'not slow')")


def random_bucket_set(rng: np.random.Generator, month: MonthSpec) -> BucketSet:
    """Random valid partition: each day type's day is cut into intervals dealt
    out to 1-6 buckets, optionally with a critical clause on one day"""
    bucket_count = int(rng.integers(1, 7))
    clauses = [[] for _ in range(bucket_count)]
    for day_type in (DayType.WORKDAY, DayType.WEEKEND):
        cuts = sorted(set(rng.integers(1, SLOTS_PER_DAY, size=int(rng.integers(0, 6))).tolist()))
        edges = [0] + cuts + [SLOTS_PER_DAY]
        for start, end in zip(edges, edges[1:]):
            clauses[int(rng.integers(bucket_count))].append(BucketClause(day_type, start, end))

    buckets = [
        TimeBucket(i, f"b{i}", f"0.{int(rng.integers(1, 100)):02d}", tuple(c))
        for i, c in enumerate(clauses)
    ]
    if rng.random() < 0.3:
        start = int(rng.integers(0, SLOTS_PER_DAY - 1))
        end = int(rng.integers(start + 1, SLOTS_PER_DAY + 1))
        critical = BucketClause(None, start, end, {int(rng.integers(month.days))})
        buckets = apply_scheme(buckets, PricingScheme.cpp([critical], "0.45"))
    return BucketSet(tuple(buckets), month)


# Test fixtures
@pytest.fixture
def fixtures_dir():
    return FIXTURES


@pytest.fixture
def month():
    """The default 31-day January"""
    return MonthSpec()


@pytest.fixture
def toy_month():
    return MonthSpec.toy(3)


@pytest.fixture
def rng():
    return np.random.default_rng(20090101)


@pytest.fixture
def toy_config(tmp_path):
    """Factory for small run configs writing under tmp_path"""
    def make(architecture="A1", **overrides):
        data = {
            "run_id": f"test-{architecture.lower()}",
            "architecture": architecture,
            "cn_count": 2,
            "households_per_cn": 5,
            "month": {"days": 2},
            "repetitions": 1,
            "warmup": False,
            "mcb_workers": [1, 2],
            "output_dir": str(tmp_path / "results"),
        }
        data.update(overrides)
        return parse_run_config(data)
    return make
