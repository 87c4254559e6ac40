"""
Synthetic smart-meter readings
reading = clamp(baseline(profile(month, day type), slot) + noise, >= 0), in
watt-hours. Noise for (seed, household, day) comes from its own seed
sequence, so any subset of households or days can be generated in any order
and still match a full run.
"""

import enum
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Union

import numpy as np
import pandas as pd

from models.domain import (
    DailyBatch,
    HouseholdId,
    MeterReading,
    MonthData,
    MonthSpec,
    SLOTS_PER_DAY,
    WH_DTYPE,
    WH_PER_KWH,
)
from services.datagen.profiles import ProfileLibrary

logger = logging.getLogger(__name__)


class NoiseKind(str, enum.Enum):
    UNIFORM = "uniform"
    GAUSSIAN = "gaussian"


@dataclass(frozen=True)
class NoiseModel:
    kind: NoiseKind = NoiseKind.UNIFORM
    amplitude: float = 0.1  # kWh, or a fraction of the baseline when relative
    relative: bool = False

    def __post_init__(self):
        object.__setattr__(self, "kind", NoiseKind(self.kind))
        if self.amplitude < 0:
            raise ValueError("Noise amplitude must be >= 0")

    @staticmethod
    def stream(global_seed: int, household: HouseholdId, day: int) -> np.random.Generator:
        return np.random.default_rng(np.random.SeedSequence([global_seed, household.cn, household.local_index, day]))

    def sample_wh(self, rng: np.random.Generator, baseline_wh: np.ndarray) -> np.ndarray:
        if self.amplitude == 0:
            return np.zeros(baseline_wh.shape, dtype=WH_DTYPE)
        if self.kind is NoiseKind.UNIFORM:
            noise = rng.uniform(-self.amplitude, self.amplitude, baseline_wh.shape)
        else:
            noise = rng.normal(0.0, self.amplitude, baseline_wh.shape)
        if self.relative:
            noise = noise * baseline_wh
        else:
            noise = noise * WH_PER_KWH
        return np.rint(noise).astype(WH_DTYPE)


class LoadProfileGenerator:
    """Deterministic reading generator for one global seed"""

    def __init__(self, global_seed: int, profiles: Optional[ProfileLibrary] = None,
                 noise: Optional[NoiseModel] = None):
        self.global_seed = int(global_seed)
        self.profiles = profiles or ProfileLibrary()
        self.noise = noise if noise is not None else NoiseModel()

    def household_day_wh(self, household: HouseholdId, month: MonthSpec, day: int) -> np.ndarray:
        profile = self.profiles.profile_for(month.month, month.day_type(day))
        base = profile.baseline_wh
        rng = NoiseModel.stream(self.global_seed, household, day)
        return np.maximum(base + self.noise.sample_wh(rng, base), 0)

    def generate_household_day(self, household: HouseholdId, month: MonthSpec, day: int) -> List[MeterReading]:
        first = day * SLOTS_PER_DAY
        return [
            MeterReading(household, first + s, int(wh))
            for s, wh in enumerate(self.household_day_wh(household, month, day))
        ]

    def generate_day_batch(self, cn: int, households: Sequence[HouseholdId], month: MonthSpec,
                           day: int) -> DailyBatch:
        wh = np.empty((len(households), SLOTS_PER_DAY), dtype=WH_DTYPE)
        for row, household in enumerate(households):
            wh[row] = self.household_day_wh(household, month, day)
        return DailyBatch(cn=cn, day=day, households=households, wh=wh)

    def generate_month(self, households: Union[int, Sequence[HouseholdId]], month: MonthSpec) -> MonthData:
        if isinstance(households, int):
            households = household_grid(1, households)
        households = tuple(households)
        wh = np.empty((len(households), month.slots_per_month), dtype=WH_DTYPE)
        for row, household in enumerate(households):
            for day in range(month.days):
                start = day * SLOTS_PER_DAY
                wh[row, start:start + SLOTS_PER_DAY] = self.household_day_wh(household, month, day)
        logger.debug(f"Generated {len(households)} household-months for {month.key} (seed {self.global_seed})")
        return MonthData(month, households, wh)


def household_grid(cn_count: int, households_per_cn: int) -> List[HouseholdId]:
    return [HouseholdId(cn, i) for cn in range(cn_count) for i in range(households_per_cn)]


def generate_household_day(global_seed: int, household: HouseholdId, month: MonthSpec, day: int,
                           profiles: Optional[ProfileLibrary] = None,
                           noise: Optional[NoiseModel] = None) -> List[MeterReading]:
    return LoadProfileGenerator(global_seed, profiles, noise).generate_household_day(household, month, day)


def generate_month(global_seed: int, households: Union[int, Sequence[HouseholdId]], month: MonthSpec,
                   profiles: Optional[ProfileLibrary] = None,
                   noise: Optional[NoiseModel] = None) -> MonthData:
    return LoadProfileGenerator(global_seed, profiles, noise).generate_month(households, month)


def month_frame(data: MonthData) -> pd.DataFrame:
    """Long format: one row per (household, slot)"""
    household_count, slots = data.wh.shape
    wh = data.wh.reshape(-1)
    kwh = [f"{v // WH_PER_KWH}.{v % WH_PER_KWH:03d}" for v in wh.tolist()]
    return pd.DataFrame({
        "household": np.repeat([str(h) for h in data.households], slots) if household_count else [],
        "slot": np.tile(np.arange(slots), household_count),
        "kwh": kwh,
    }, columns=["household", "slot", "kwh"])


def dump_csv(data: MonthData, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    month_frame(data).to_csv(path, index=False)
    logger.info(f"Wrote {data.wh.size} readings for {len(data)} households to {path}")
    return path
