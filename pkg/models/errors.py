"""Exception hierarchy for the harness.

Every error carries the identifiers needed to act on it (slot, cn, path,
bucket ids) as attributes, not only inside the message.
"""

from typing import Any, Optional, Sequence


class SmartGridError(Exception):
    """Base class for all harness errors"""


class ConfigError(SmartGridError):
    pass


# Domain / validation

class InvalidTime(SmartGridError):
    def __init__(self, component: str, value: Any):
        self.component = component
        self.value = value
        super().__init__(f"Invalid {component}: {value!r}")


class ReadingValidationError(SmartGridError):
    """A household-month failed validation"""


class MissingSlot(ReadingValidationError):
    def __init__(self, slot: int):
        self.slot = slot
        super().__init__(f"Missing reading for slot {slot}")


class DuplicateSlot(ReadingValidationError):
    def __init__(self, slot: int):
        self.slot = slot
        super().__init__(f"Duplicate reading for slot {slot}")


class MixedHouseholds(ReadingValidationError):
    def __init__(self, households: Sequence[Any]):
        self.households = tuple(households)
        super().__init__(f"Readings belong to several households: {', '.join(map(str, self.households))}")


class InvalidReading(ReadingValidationError):
    def __init__(self, household: Any, slot: int, value: Any):
        self.household = household
        self.slot = slot
        self.value = value
        super().__init__(f"Invalid reading {value!r} for household {household} at slot {slot}")


# Tariff

class PartitionViolation(SmartGridError):
    def __init__(self, slot: int, matching_bucket_ids: Sequence[int]):
        self.slot = slot
        self.matching_bucket_ids = list(matching_bucket_ids)
        if self.matching_bucket_ids:
            detail = f"matches buckets {self.matching_bucket_ids}"
        else:
            detail = "matches no bucket"
        super().__init__(f"Slot {slot} {detail}")


# Billing

class LengthMismatch(SmartGridError):
    def __init__(self, expected: int, actual: int):
        self.expected = expected
        self.actual = actual
        super().__init__(f"Expected {expected} readings, got {actual}")


class BoundaryMismatch(SmartGridError):
    def __init__(self, message: str):
        super().__init__(message)


# Storage

class StorageError(SmartGridError):
    pass


class DuplicateBatch(StorageError):
    def __init__(self, cn: int, day: int):
        self.cn = cn
        self.day = day
        super().__init__(f"Batch for CN {cn}, day {day} was already ingested")


class IncompleteMonth(StorageError):
    def __init__(self, household: Any = None, detail: str = ""):
        self.household = household
        message = "Month is incomplete"
        if household is not None:
            message += f" for household {household}"
        if detail:
            message += f": {detail}"
        super().__init__(message)


class MonthAlreadyInitialized(StorageError):
    def __init__(self, month_key: str):
        self.month_key = month_key
        super().__init__(f"Month {month_key} is already initialized")


class MonthNotInitialized(StorageError):
    def __init__(self, month_key: Optional[str] = None):
        self.month_key = month_key
        if month_key:
            super().__init__(f"Month {month_key} is not initialized")
        else:
            super().__init__("Month is not initialized")


class MissingFile(StorageError):
    def __init__(self, path: Any):
        self.path = str(path)
        super().__init__(f"Missing file: {self.path}")


class CorruptFile(StorageError):
    def __init__(self, path: Any, reason: str):
        self.path = str(path)
        self.reason = reason
        super().__init__(f"Corrupt file {self.path}: {reason}")


class BatchMismatch(StorageError):
    def __init__(self, cn: int, day: int, detail: str):
        self.cn = cn
        self.day = day
        super().__init__(f"Batch for CN {cn}, day {day} rejected: {detail}")


class OutOfOrderBatch(StorageError):
    def __init__(self, cn: int, day: int, expected: int):
        self.cn = cn
        self.day = day
        self.expected = expected
        super().__init__(f"CN {cn} sent day {day}, expected day {expected}")


class StoreError(StorageError):
    """An error raised by one CN's store, attributed to that CN"""

    def __init__(self, cn: int, cause: BaseException):
        self.cn = cn
        self.cause = cause
        super().__init__(f"CN {cn}: {cause}")


# Actors

class ActorError(SmartGridError):
    pass


class UnknownAddress(ActorError):
    def __init__(self, address: str):
        self.address = address
        super().__init__(f"No actor registered at {address!r}")


class UnhandledMessage(ActorError):
    def __init__(self, address: str, message_type: str):
        self.address = address
        self.message_type = message_type
        super().__init__(f"Actor {address!r} has no handler for {message_type}")


class ActorStopped(ActorError):
    def __init__(self, address: str):
        self.address = address
        super().__init__(f"Actor {address!r} is stopped")


class JoinTimeout(ActorError):
    def __init__(self, pending: Sequence[Any], timeout: float):
        self.pending = list(pending)
        self.timeout = timeout
        super().__init__(f"No reply from {self.pending} within {timeout}s")


class CnTimeout(JoinTimeout):
    def __init__(self, cns: Sequence[int], timeout: float):
        super().__init__(cns, timeout)
        self.cns = list(cns)
        self.cn = self.cns[0]
        self.args = (f"CN(s) {self.cns} did not reply within {timeout}s",)


class DayAlreadyRun(ActorError):
    def __init__(self, day: int):
        self.day = day
        super().__init__(f"Day {day} has already been run")


class DayOutOfRange(ActorError):
    def __init__(self, day: int, days: int):
        self.day = day
        self.days = days
        super().__init__(f"Day {day} is outside a {days}-day month")


# Bench

class ExperimentError(SmartGridError):
    def __init__(self, message: str, report: Any = None):
        self.report = report
        super().__init__(message)


class VerificationMismatch(SmartGridError):
    def __init__(self, checksums: dict):
        self.checksums = dict(checksums)
        listing = ", ".join(f"{k}={v[:12]}" for k, v in self.checksums.items())
        super().__init__(f"Bill checksums differ: {listing}")
