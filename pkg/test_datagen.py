#!/usr/bin/env python3
"""
Tests for the synthetic load profile generator
"""

import numpy as np
import pandas as pd
import pytest

from models.domain import DayType, HouseholdId, MonthSpec, SLOTS_PER_DAY, validate_household_month
from services.datagen.generator import (
    LoadProfileGenerator,
    NoiseModel,
    dump_csv,
    generate_household_day,
    generate_month,
    household_grid,
)
from services.datagen.profiles import ProfileLibrary, RegressionProfile, baseline, default_profile

SILENT = NoiseModel(amplitude=0)


def test_one_household_month_has_2976_readings(month):
    data = generate_month(42, 1, month)
    assert data.wh.shape == (1, 2976)
    validate_household_month(data.household_readings(0), month)


def test_same_seed_same_data(toy_month):
    first = generate_month(42, household_grid(2, 3), toy_month)
    second = generate_month(42, household_grid(2, 3), toy_month)
    other = generate_month(43, household_grid(2, 3), toy_month)
    assert first.same_as(second)
    assert not np.array_equal(first.wh, other.wh)


def test_streams_independent_of_subset(toy_month):
    """A household's readings do not depend on which other households are generated"""
    grid = household_grid(2, 4)
    full = generate_month(5, grid, toy_month)
    alone = generate_month(5, [HouseholdId(1, 2)], toy_month)
    assert np.array_equal(alone.wh[0], full.wh[grid.index(HouseholdId(1, 2))])

    generator = LoadProfileGenerator(5)
    batch = generator.generate_day_batch(1, grid[4:], toy_month, 2)
    assert np.array_equal(batch.wh, full.day_batch(1, 2).wh)

    day = generate_household_day(5, HouseholdId(0, 1), toy_month, 1)
    assert [r.slot for r in day] == list(range(SLOTS_PER_DAY, 2 * SLOTS_PER_DAY))
    assert [r.wh for r in day] == full.wh[1, SLOTS_PER_DAY:2 * SLOTS_PER_DAY].tolist()


def test_day_type_fidelity(month):
    """Constant profiles with no noise reproduce each day's type exactly"""
    generator = LoadProfileGenerator(1, ProfileLibrary.constant("0.5", "0.2"), SILENT)
    data = generator.generate_month(1, month)
    days = data.wh[0].reshape(month.days, SLOTS_PER_DAY)
    for day in range(month.days):
        expected = 500 if month.day_type(day) == DayType.WORKDAY else 200
        assert (days[day] == expected).all(), day


def test_uniform_noise_bounded(toy_month):
    generator = LoadProfileGenerator(3, ProfileLibrary.constant(1, 1), NoiseModel("uniform", 0.1))
    wh = generator.generate_month(20, toy_month).wh
    assert wh.min() >= 900 and wh.max() <= 1100
    assert len(np.unique(wh)) > 50


def test_readings_never_negative(toy_month):
    generator = LoadProfileGenerator(3, ProfileLibrary.constant("0.05", "0.05"), NoiseModel("gaussian", 1.0))
    wh = generator.generate_month(10, toy_month).wh
    assert wh.min() == 0


def test_relative_noise_scales_with_baseline(toy_month):
    generator = LoadProfileGenerator(9, ProfileLibrary.constant(2, 2), NoiseModel("uniform", 0.05, relative=True))
    wh = generator.generate_month(5, toy_month).wh
    assert wh.min() >= 1900 and wh.max() <= 2100


# Profiles
def test_profile_needs_eleven_coefficients():
    with pytest.raises(ValueError):
        RegressionProfile(1, DayType.WORKDAY, (0.1,) * 10)


def test_default_profile_shape():
    profile = default_profile(1, DayType.WORKDAY)
    assert len(profile.coefficients) == 11
    # evening peak well above the night trough
    assert profile.baseline_wh[78] > 1.5 * profile.baseline_wh[12]
    assert (profile.baseline_wh >= 0).all()


def test_baseline_in_kwh():
    profile = ProfileLibrary.constant("0.25", "0.1").profile_for(3, DayType.WEEKEND)
    assert str(baseline(profile, 0)) == "0.100"
    with pytest.raises(ValueError):
        baseline(profile, SLOTS_PER_DAY)


def test_profile_overrides_from_config():
    library = ProfileLibrary.from_config([{"month": 1, "day_type": "weekend", "coefficients": [0.3] + [0] * 10}])
    assert library.profile_for(1, DayType.WEEKEND).baseline_wh[40] == 300
    assert library.profile_for(1, DayType.WORKDAY) == default_profile(1, DayType.WORKDAY)


def test_dump_csv(tmp_path):
    data = generate_month(42, household_grid(1, 2), MonthSpec.toy(1))
    path = dump_csv(data, tmp_path / "out" / "readings.csv")
    frame = pd.read_csv(path, dtype=str)
    assert list(frame.columns) == ["household", "slot", "kwh"]
    assert len(frame) == 2 * SLOTS_PER_DAY
    assert frame["household"].iloc[-1] == "0-1"
    assert all(len(value.split(".")[1]) == 3 for value in frame["kwh"])
