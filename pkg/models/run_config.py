from decimal import Decimal
from pathlib import Path
from typing import Dict, List, Optional, Union

import yaml
from pydantic import BaseModel, Field, ValidationError, field_validator

from config import settings
from models.domain import Architecture, DayType, MonthSpec
from models.errors import ConfigError

PROFILE_COEFFICIENTS = 11


class NoiseConfig(BaseModel):
    kind: str = "uniform"
    amplitude: float = Field(0.1, ge=0)
    relative: bool = False

    @field_validator("kind")
    @classmethod
    def known_kind(cls, value: str) -> str:
        if value not in ("uniform", "gaussian"):
            raise ValueError("kind must be 'uniform' or 'gaussian'")
        return value


class ProfileConfig(BaseModel):
    month: int = Field(ge=1, le=12)
    day_type: DayType
    coefficients: List[float]

    @field_validator("coefficients")
    @classmethod
    def eleven_coefficients(cls, value: List[float]) -> List[float]:
        if len(value) != PROFILE_COEFFICIENTS:
            raise ValueError(f"a profile needs {PROFILE_COEFFICIENTS} coefficients (c0..c10)")
        return value


class DatagenConfig(BaseModel):
    seed: int = 42
    noise: NoiseConfig = Field(default_factory=NoiseConfig)
    profiles: List[ProfileConfig] = Field(default_factory=list)


class ClauseConfig(BaseModel):
    day_type: Optional[DayType] = None
    start: str
    end: str
    days: Optional[List[int]] = None


class BucketConfig(BaseModel):
    label: str
    price: Decimal = Field(ge=0)
    clauses: List[ClauseConfig]


class SchemeConfig(BaseModel):
    kind: str = "TOU"
    critical_price: Decimal = Decimal("0.40")
    critical_clauses: List[ClauseConfig] = Field(default_factory=list)

    @field_validator("kind")
    @classmethod
    def known_kind(cls, value: str) -> str:
        value = value.upper()
        if value not in ("TOU", "CPP"):
            raise ValueError("scheme must be TOU or CPP")
        return value


class MonthConfig(BaseModel):
    year: int = 2009
    month: int = Field(1, ge=1, le=12)
    days: Optional[int] = Field(None, ge=1, le=31)  # omitted: full calendar month
    weekend_days: List[int] = Field(default_factory=lambda: [5, 6])

    def spec(self) -> MonthSpec:
        weekend = frozenset(self.weekend_days)
        if self.days is None:
            return MonthSpec.calendar_month(self.year, self.month, weekend_days=weekend)
        return MonthSpec(self.year, self.month, self.days, weekend, partial=self.days < 28)


class StorageConfig(BaseModel):
    root: Optional[str] = None  # defaults to the run directory
    serialize_payloads: Optional[bool] = None


class RunConfig(BaseModel):
    """One experiment, as read from a YAML run-config file"""
    run_id: Optional[str] = None
    architecture: Architecture = Architecture.A1
    cn_count: int = Field(1, ge=1)
    households_per_cn: int = Field(100, ge=0)
    month: MonthConfig = Field(default_factory=MonthConfig)
    scheme: SchemeConfig = Field(default_factory=SchemeConfig)
    buckets: Optional[List[BucketConfig]] = None
    default_prices: Optional[Dict[DayType, List[Decimal]]] = None
    datagen: DatagenConfig = Field(default_factory=DatagenConfig)
    mcb_workers: List[int] = Field(default_factory=lambda: [1, 2, 4])
    sweep_households: List[int] = Field(default_factory=lambda: [1000, 10000])
    repetitions: int = Field(default_factory=lambda: settings.default_repetitions, ge=1)
    warmup: bool = True
    collect_timeout_seconds: Optional[float] = Field(None, gt=0)
    output_dir: str = "./results"
    storage: StorageConfig = Field(default_factory=StorageConfig)

    @field_validator("mcb_workers", "sweep_households")
    @classmethod
    def positive_list(cls, value: List[int]) -> List[int]:
        if not value or any(v < 1 for v in value):
            raise ValueError("must be a non-empty list of positive integers")
        return sorted(set(value))

    @field_validator("default_prices")
    @classmethod
    def four_prices(cls, value):
        if value is not None and any(len(prices) != 4 for prices in value.values()):
            raise ValueError("default_prices needs night, morning, afternoon and evening prices per day type")
        return value

    @property
    def household_count(self) -> int:
        return self.cn_count * self.households_per_cn

    def month_spec(self) -> MonthSpec:
        return self.month.spec()


def load_run_config(path: Union[str, Path]) -> RunConfig:
    path = Path(path)
    try:
        with open(path, "r", encoding="utf-8") as handle:
            data = yaml.safe_load(handle) or {}
    except OSError as exc:
        raise ConfigError(f"Cannot read run config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"Run config {path} is not valid YAML: {exc}") from exc
    return parse_run_config(data, source=str(path))


def parse_run_config(data: dict, source: str = "run config") -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigError(f"{source} must be a mapping")
    try:
        return RunConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(f"Invalid {source}: {exc}") from exc


def dump_run_config(config: RunConfig, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as handle:
        yaml.safe_dump(config.model_dump(mode="json"), handle, sort_keys=False)
    return path
