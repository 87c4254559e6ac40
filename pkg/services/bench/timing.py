import statistics
import time
from dataclasses import dataclass
from typing import Any, Awaitable, Callable, Optional, Tuple

METHODOLOGY = "monotonic clock (perf_counter); median of N repetitions; warm-up run discarded"


@dataclass(frozen=True)
class Timing:
    samples: Tuple[float, ...]
    warmup: Optional[float] = None

    @property
    def median(self) -> float:
        return statistics.median(self.samples)

    @property
    def repetitions(self) -> int:
        return len(self.samples)


def measure(fn: Callable[[], Any], repetitions: int, warmup: bool = True) -> Tuple[Timing, Any]:
    """Time fn() `repetitions` times; returns the timing and the last result"""
    if repetitions < 1:
        raise ValueError("repetitions must be >= 1")
    warm = None
    if warmup:
        start = time.perf_counter()
        fn()
        warm = time.perf_counter() - start
    samples, result = [], None
    for _ in range(repetitions):
        start = time.perf_counter()
        result = fn()
        samples.append(time.perf_counter() - start)
    return Timing(tuple(samples), warm), result


async def measure_async(fn: Callable[[], Awaitable[Any]], repetitions: int,
                        warmup: bool = True) -> Tuple[Timing, Any]:
    if repetitions < 1:
        raise ValueError("repetitions must be >= 1")
    warm = None
    if warmup:
        start = time.perf_counter()
        await fn()
        warm = time.perf_counter() - start
    samples, result = [], None
    for _ in range(repetitions):
        start = time.perf_counter()
        result = await fn()
        samples.append(time.perf_counter() - start)
    return Timing(tuple(samples), warm), result
