"""Deterministic discrete-event kernel.

A single clock in integer minutes, one ordered event queue, and the trace
sink every layer writes into. Identical (scenario, seed) inputs replay to
byte-identical traces: the queue orders events by (time, priority, seq)
and nothing else, and the only randomness is the seeded stream used to
resolve fault times declared as ranges.
"""

from __future__ import annotations

import heapq
import random
from dataclasses import dataclass, field
from typing import Any, Callable

KERNEL_LAYER = 0

# Priority bands within one timestamp: layer work in ascending layer order,
# then control events (demand releases, timers, sweeps), then faults.
PRIORITY_CONTROL = 8
PRIORITY_FAULT = 9


class SimulationBugError(Exception):
    """Errors of the aborts-the-run class (exit code 2 at the CLI)."""

    code = "simulation_bug"


class TimeTravelError(SimulationBugError):
    code = "time_travel"


class OutOfOrderEventError(SimulationBugError):
    code = "out_of_order_event"


@dataclass
class Event:
    """One unit of work addressed to a (node, layer) machine.

    `subjects` and `note` feed the delivery record in the trace; `payload`
    carries arbitrary in-process objects for the receiving machine.
    """

    time: int
    priority: int
    seq: int
    node: str
    layer: int
    kind: str
    payload: dict[str, Any] = field(default_factory=dict)
    src_node: str = ""
    src_layer: int = KERNEL_LAYER
    subjects: tuple[str, ...] = ()
    note: dict[str, Any] = field(default_factory=dict)
    cancelled: bool = False

    @property
    def sort_key(self) -> tuple[int, int, int]:
        return (self.time, self.priority, self.seq)


@dataclass(frozen=True)
class TraceEvent:
    """Immutable, timestamped record of one state transition or delivery."""

    t: int
    node: str
    layer: int
    kind: str
    subjects: tuple[str, ...] = ()
    details: dict[str, Any] = field(default_factory=dict)


@dataclass(frozen=True)
class FaultEntry:
    """One planned fault; `time_range` entries get a seeded random time."""

    kind: str
    time: int | None = None
    time_range: tuple[int, int] | None = None
    params: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if (self.time is None) == (self.time_range is None):
            raise ValueError("fault entry needs exactly one of time / time_range")
        if self.time is not None and self.time < 0:
            raise ValueError("fault time must be >= 0")
        if self.time_range is not None:
            lo, hi = self.time_range
            if lo < 0 or hi < lo:
                raise ValueError("fault time_range must be 0 <= lo <= hi")


@dataclass
class FaultPlan:
    entries: list[FaultEntry] = field(default_factory=list)

    def resolved_times(self, rng: random.Random) -> list[tuple[int, FaultEntry]]:
        """Pin every entry to a concrete minute, in plan order."""
        out = []
        for entry in self.entries:
            t = entry.time if entry.time is not None else rng.randint(*entry.time_range)
            out.append((t, entry))
        return out


class Kernel:
    """Clock, queue, seeded randomness and trace sink for one run."""

    def __init__(self, seed: int = 0) -> None:
        self.clock = 0
        self.seed = seed
        self.rng = random.Random(seed)
        self.trace: list[TraceEvent] = []
        self._heap: list[tuple[tuple[int, int, int], Event]] = []
        self._seq = 0

    def schedule(
        self,
        time: int,
        priority: int,
        node: str,
        layer: int,
        kind: str,
        payload: dict[str, Any] | None = None,
        src_node: str = "",
        src_layer: int = KERNEL_LAYER,
        subjects: tuple[str, ...] = (),
        note: dict[str, Any] | None = None,
    ) -> Event:
        if time < self.clock:
            raise TimeTravelError(f"time_travel: scheduling at {time} with clock {self.clock}")
        self._seq += 1
        event = Event(
            time=time,
            priority=priority,
            seq=self._seq,
            node=node,
            layer=layer,
            kind=kind,
            payload=payload or {},
            src_node=src_node,
            src_layer=src_layer,
            subjects=subjects,
            note=note or {},
        )
        heapq.heappush(self._heap, (event.sort_key, event))
        return event

    def cancel(self, event: Event) -> None:
        event.cancelled = True

    def emit(
        self,
        node: str,
        layer: int,
        kind: str,
        subjects: tuple[str, ...] = (),
        details: dict[str, Any] | None = None,
    ) -> None:
        self.trace.append(TraceEvent(self.clock, node, layer, kind, subjects, details or {}))

    def pending(self) -> int:
        return sum(1 for _, e in self._heap if not e.cancelled)

    def run_until(self, t_end: int, dispatch: Callable[[Event], None]) -> list[TraceEvent]:
        """Pop and dispatch events in order until the queue drains or the
        next event lies beyond the horizon. Every delivered event leaves a
        trace record carrying its source (node, layer)."""
        while self._heap and self._heap[0][0][0] <= t_end:
            _key, event = heapq.heappop(self._heap)
            if event.cancelled:
                continue
            if event.time < self.clock:
                raise TimeTravelError("time_travel: queue yielded a past event")
            self.clock = event.time
            details = {"src_node": event.src_node, "src_layer": event.src_layer}
            details.update(event.note)
            self.emit(event.node, event.layer, f"msg.{event.kind}", event.subjects, details)
            dispatch(event)
        return self.trace
