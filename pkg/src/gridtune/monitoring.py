"""Node probes, bounded data buffers and the metrics derived from them."""
from __future__ import annotations

import enum
from collections import deque
from dataclasses import dataclass, field
from itertools import islice
from typing import Iterable, Optional

from .errors import EmptyInputError, TimeRegressionError, UnknownConsumerError


class MetricKind(str, enum.Enum):
    CPU_BUSY = "CpuBusy"          # busy processor-seconds over the probe interval
    MEM_PRESSURE = "MemPressure"  # fraction in [0, 1]
    THREAD_WORK = "ThreadWork"    # work units done by one thread over the interval
    HEARTBEAT = "Heartbeat"       # always 1


@dataclass(frozen=True)
class MetricSample:
    at: float
    node_id: str
    kind: MetricKind
    value: float
    job_id: Optional[str] = None
    thread: Optional[int] = None

    def __post_init__(self):
        if self.kind is MetricKind.MEM_PRESSURE and not 0.0 <= self.value <= 1.0:
            raise ValueError(f"MemPressure out of range: {self.value}")
        if self.kind is MetricKind.HEARTBEAT and self.value != 1:
            raise ValueError("Heartbeat value must be 1")
        if self.kind in (MetricKind.CPU_BUSY, MetricKind.THREAD_WORK) and self.value < 0:
            raise ValueError(f"{self.kind.value} must be non-negative")


@dataclass
class DataBuffer:
    """Bounded, time-ordered sample store with one read cursor per consumer.

    Cursors are absolute sample indices, so eviction never shifts them.
    """

    node_id: str
    capacity: int = 4096
    samples: deque = field(default_factory=deque)
    cursors: dict[str, int] = field(default_factory=dict)
    evicted: int = 0
    dropped: list[MetricSample] = field(default_factory=list)

    def __post_init__(self):
        if self.capacity < 1:
            raise ValueError("capacity must be >= 1")

    @property
    def end(self) -> int:
        return self.evicted + len(self.samples)

    def register(self, consumer: str) -> None:
        """Start delivering samples recorded from now on to ``consumer``."""
        self.cursors.setdefault(consumer, self.end)

    def __len__(self):
        return len(self.samples)


def record_sample(buffer: DataBuffer, sample: MetricSample) -> Optional[MetricSample]:
    """Append ``sample``; returns the evicted oldest sample on overflow."""
    if sample.node_id != buffer.node_id:
        raise ValueError(f"sample for node {sample.node_id} recorded in buffer of {buffer.node_id}")
    if buffer.samples and sample.at < buffer.samples[-1].at:
        raise TimeRegressionError(
            f"sample at {sample.at} precedes last sample at {buffer.samples[-1].at}")
    buffer.samples.append(sample)
    if len(buffer.samples) > buffer.capacity:
        old = buffer.samples.popleft()
        buffer.evicted += 1
        buffer.dropped.append(old)
        return old
    return None


def pull(buffer: DataBuffer, consumer: str) -> list[MetricSample]:
    """Return every sample recorded since ``consumer``'s previous pull."""
    try:
        cursor = buffer.cursors[consumer]
    except KeyError:
        raise UnknownConsumerError(consumer) from None
    fresh = buffer.end - max(cursor, buffer.evicted)
    out = list(islice(reversed(buffer.samples), fresh))[::-1]
    buffer.cursors[consumer] = buffer.end
    return out


def cpu_usage(samples: Iterable[MetricSample], window: float, processors: int,
              now: Optional[float] = None) -> float:
    """Busy fraction of ``processors`` over ``window`` seconds.

    With ``now`` given only CpuBusy samples in ``(now - window, now]`` count;
    otherwise every CpuBusy sample passed in does.
    """
    if window <= 0:
        raise ValueError("window must be > 0")
    busy = 0.0
    for s in samples:
        if s.kind is not MetricKind.CPU_BUSY:
            continue
        if now is not None and not (now - window < s.at <= now):
            continue
        busy += s.value
    return min(1.0, max(0.0, busy / (window * processors)))


def load_imbalance(per_thread_work: Iterable[float]) -> float:
    """``(max - mean) / max`` over per-thread work; 0 when nothing was done."""
    values = list(per_thread_work)
    if not values:
        raise EmptyInputError("load_imbalance needs at least one value")
    if any(v < 0 for v in values):
        raise ValueError("per-thread work must be non-negative")
    top = max(values)
    if top <= 0:
        return 0.0
    mean = sum(values) / len(values)
    return max(0.0, (top - mean) / top)


def thread_shares(threads: int, imbalance: float) -> list[float]:
    """Per-thread work shares (summing to 1) whose load_imbalance is ``imbalance``.

    Thread 0 carries the excess; the imbalance is capped at ``(n-1)/n``, the
    value reached when one thread does all the work.
    """
    if threads <= 1 or imbalance <= 0:
        return [1.0 / threads] * threads
    n = threads
    imbalance = min(imbalance, (n - 1) / n)
    # thread 0 gets a, the rest b = a * (1 - n*i/(n-1)); a + (n-1)*b == 1
    ratio = 1.0 - n * imbalance / (n - 1)
    a = 1.0 / (1.0 + (n - 1) * ratio)
    return [a] + [a * ratio] * (n - 1)
