"""
Daily load profiles
One degree-10 polynomial per (month, day type) over normalized time of day
t = slot_of_day / 96. Shipped defaults are least-squares fits of a smooth
template with a morning shoulder and an evening peak; any profile can be
replaced from the run config.
"""

import functools
import logging
import math
from dataclasses import dataclass
from decimal import Decimal
from typing import Dict, Iterable, Mapping, Optional, Sequence, Tuple

import numpy as np

from models.domain import DayType, SLOTS_PER_DAY, WH_DTYPE, WH_PER_KWH

logger = logging.getLogger(__name__)

DEGREE = 10
SLOT_TIMES = np.arange(SLOTS_PER_DAY, dtype=np.float64) / SLOTS_PER_DAY


@dataclass(frozen=True)
class RegressionProfile:
    month: int
    day_type: DayType
    coefficients: Tuple[float, ...]  # c0..c10, lowest order first

    def __post_init__(self):
        object.__setattr__(self, "day_type", DayType(self.day_type))
        object.__setattr__(self, "coefficients", tuple(float(c) for c in self.coefficients))
        if len(self.coefficients) != DEGREE + 1:
            raise ValueError(f"Profile needs {DEGREE + 1} coefficients, got {len(self.coefficients)}")
        if not 1 <= self.month <= 12:
            raise ValueError(f"Invalid month {self.month}")

    def evaluate_kwh(self, t: np.ndarray) -> np.ndarray:
        # Horner's scheme, highest order first
        result = np.zeros_like(np.asarray(t, dtype=np.float64))
        for c in reversed(self.coefficients):
            result = result * t + c
        return np.maximum(result, 0.0)

    @functools.cached_property
    def baseline_wh(self) -> np.ndarray:
        values = np.rint(self.evaluate_kwh(SLOT_TIMES) * WH_PER_KWH).astype(WH_DTYPE)
        values.flags.writeable = False
        return values


def baseline(profile: RegressionProfile, slot_of_day: int) -> Decimal:
    """Clamped, watt-hour rounded baseline consumption in kWh"""
    if not 0 <= slot_of_day < SLOTS_PER_DAY:
        raise ValueError(f"Invalid slot of day {slot_of_day}")
    return Decimal(int(profile.baseline_wh[slot_of_day])).scaleb(-3)


def _bump(hours: np.ndarray, center: float, width: float) -> np.ndarray:
    return np.exp(-((hours - center) / width) ** 2)


def _seasonal_factor(month: int) -> float:
    # heating peak in January, smaller cooling bump in July
    phase = 2 * math.pi * (month - 1) / 12
    return 1.0 + 0.25 * math.cos(phase) + 0.15 * math.cos(2 * phase)


def template_kwh(month: int, day_type: DayType) -> np.ndarray:
    hours = SLOT_TIMES * 24
    if day_type == DayType.WORKDAY:
        shape = 0.12 + 0.18 * _bump(hours, 7.25, 1.0) + 0.05 * _bump(hours, 13.0, 2.5) \
            + 0.40 * _bump(hours, 19.5, 1.75)
    else:
        shape = 0.14 + 0.22 * _bump(hours, 9.5, 1.6) + 0.12 * _bump(hours, 13.5, 2.0) \
            + 0.35 * _bump(hours, 19.75, 2.0)
    return shape * _seasonal_factor(month)


@functools.lru_cache(maxsize=None)
def default_profile(month: int, day_type: DayType) -> RegressionProfile:
    day_type = DayType(day_type)
    coefficients = np.polynomial.polynomial.polyfit(SLOT_TIMES, template_kwh(month, day_type), DEGREE)
    return RegressionProfile(month, day_type, tuple(coefficients.tolist()))


class ProfileLibrary:
    """The 24 (month, day type) profiles, defaults unless overridden"""

    def __init__(self, overrides: Optional[Iterable[RegressionProfile]] = None):
        self._overrides: Dict[Tuple[int, DayType], RegressionProfile] = {}
        for profile in overrides or ():
            self._overrides[(profile.month, profile.day_type)] = profile

    @classmethod
    def from_config(cls, entries: Sequence[Mapping]) -> "ProfileLibrary":
        return cls(
            RegressionProfile(int(e["month"]), DayType(e["day_type"]), tuple(e["coefficients"]))
            for e in entries
        )

    @classmethod
    def constant(cls, workday_kwh, weekend_kwh) -> "ProfileLibrary":
        """Flat profiles for every month, handy for day-type checks"""
        profiles = []
        for month in range(1, 13):
            for day_type, level in ((DayType.WORKDAY, workday_kwh), (DayType.WEEKEND, weekend_kwh)):
                profiles.append(RegressionProfile(month, day_type, (float(level),) + (0.0,) * DEGREE))
        return cls(profiles)

    def profile_for(self, month: int, day_type: DayType) -> RegressionProfile:
        key = (month, DayType(day_type))
        if key in self._overrides:
            return self._overrides[key]
        return default_profile(*key)
