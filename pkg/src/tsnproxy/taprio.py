"""802.1Qbv time-aware gate scheduling, modeled after the taprio qdisc.

Times are integer nanoseconds. Packets queue per priority until a window
open for that priority comes around. Guard bands are not modeled: a frame
that starts inside its window is sent even if it would overrun the window.
"""

from __future__ import annotations

import bisect
from collections import deque
from dataclasses import dataclass, field
from typing import Deque, Dict, FrozenSet, List, Optional, Tuple

from .packet import PacketBuffer

BEST_EFFORT = 0


@dataclass(frozen=True)
class GateWindow:
    start_offset: int
    end_offset: int
    open_priorities: FrozenSet[int]

    def __post_init__(self):
        object.__setattr__(self, "open_priorities", frozenset(self.open_priorities))

    def contains(self, phase: int) -> bool:
        return self.start_offset <= phase < self.end_offset


@dataclass(frozen=True)
class GateControlList:
    cycle_time: int
    windows: Tuple[GateWindow, ...]
    base_time: int = 0

    def __post_init__(self):
        windows = tuple(sorted(self.windows, key=lambda w: w.start_offset))
        object.__setattr__(self, "windows", windows)
        if self.cycle_time <= 0:
            raise ValueError("cycle_time must be positive")
        if not windows:
            raise ValueError("gate control list needs at least one window")
        cursor = 0
        for i, w in enumerate(windows):
            if not 0 <= w.start_offset < w.end_offset <= self.cycle_time:
                raise ValueError(f"window {i} [{w.start_offset}, {w.end_offset}) "
                                 f"is not inside [0, {self.cycle_time})")
            if w.start_offset != cursor:
                kind = "overlap" if w.start_offset < cursor else "gap"
                raise ValueError(f"windows must tile the cycle: {kind} at {cursor} ns")
            cursor = w.end_offset
        if cursor != self.cycle_time:
            raise ValueError(f"windows must tile the cycle: gap at {cursor} ns")

    @property
    def priorities(self) -> FrozenSet[int]:
        return frozenset().union(*(w.open_priorities for w in self.windows))

    def traffic_class(self, priority: int) -> int:
        """Priorities without a window of their own share the best-effort gates."""
        if priority in self.priorities:
            return priority
        if BEST_EFFORT not in self.priorities:
            raise ValueError(f"no window admits priority {priority} and there is "
                             "no best-effort window to fall back to")
        return BEST_EFFORT

    def windows_for(self, priority: int) -> List[GateWindow]:
        tc = self.traffic_class(priority)
        return [w for w in self.windows if tc in w.open_priorities]

    def is_open(self, priority: int, phase: int) -> bool:
        return any(w.contains(phase) for w in self.windows_for(priority))


def paper_gcl(base_time: int = 0) -> GateControlList:
    """40 us cycle: prio 1 in 0-10 us, prio 2 in 10-20 us, best effort 20-40 us."""
    us = 1000
    return GateControlList(
        cycle_time=40 * us,
        windows=(
            GateWindow(0, 10 * us, {1}),
            GateWindow(10 * us, 20 * us, {2}),
            GateWindow(20 * us, 40 * us, {0}),
        ),
        base_time=base_time,
    )


def phase_in_cycle(t: int, gcl: GateControlList) -> int:
    if t < gcl.base_time:
        raise ValueError(f"time {t} precedes the schedule base time {gcl.base_time}")
    return (t - gcl.base_time) % gcl.cycle_time


def next_transmit_time(priority: int, now: int, gcl: GateControlList) -> int:
    """Earliest t >= now at which a gate admitting ``priority`` is open."""
    phase = phase_in_cycle(now, gcl)
    windows = gcl.windows_for(priority)
    wait = None
    for w in windows:
        if w.contains(phase):
            return now
        delta = w.start_offset - phase
        if delta < 0:
            delta += gcl.cycle_time
        if wait is None or delta < wait:
            wait = delta
    return now + wait


@dataclass
class Transmission:
    packet: PacketBuffer
    enqueue_time: int
    start: int
    end: int


@dataclass
class TaprioState:
    """Per-class FIFOs feeding one transmitter.

    Transmit slots are assigned when a packet is enqueued. Because enqueues
    arrive in time order, assigning greedily is the same as serving each
    class FIFO as soon as its gate opens and the wire is free.
    """

    gcl: GateControlList
    serialization: int = 0
    link_rate: Optional[int] = None
    queues: Dict[int, Deque[Tuple[PacketBuffer, int]]] = field(default_factory=dict)
    _class_free_at: Dict[int, int] = field(default_factory=dict, repr=False)
    # Busy wire intervals, sorted by start; only used when frames take time.
    _busy: List[Tuple[int, int]] = field(default_factory=list, repr=False)
    _pending: Dict[int, Deque[Transmission]] = field(default_factory=dict, repr=False)

    def transmission_duration(self, pkt: PacketBuffer) -> int:
        if self.link_rate:
            bits = len(pkt.payload) * 8
            return -(-bits * 1_000_000_000 // self.link_rate)
        return self.serialization

    def _prune(self, now: int) -> None:
        # Intervals never overlap, so sorting by start also sorts by end.
        done = 0
        while done < len(self._busy) and self._busy[done][1] <= now:
            done += 1
        del self._busy[:done]

    def _wire_conflict(self, start: int, end: int) -> Optional[int]:
        for s, e in self._busy:
            if s >= end:
                break
            if e > start:
                return e
        return None

    def enqueue(self, pkt: PacketBuffer, now: int) -> Transmission:
        tc = self.gcl.traffic_class(pkt.priority)
        duration = self.transmission_duration(pkt)
        self.queues.setdefault(tc, deque()).append((pkt, now))

        earliest = max(now, self._class_free_at.get(tc, now))
        if pkt.txtime is not None:
            earliest = max(earliest, pkt.txtime)
        self._prune(now)
        start = next_transmit_time(tc, earliest, self.gcl)
        if duration > 0:
            while (busy_until := self._wire_conflict(start, start + duration)) is not None:
                start = next_transmit_time(tc, busy_until, self.gcl)
            bisect.insort(self._busy, (start, start + duration))
        end = start + duration
        self._class_free_at[tc] = end
        tx = Transmission(pkt, now, start, end)
        self._pending.setdefault(tc, deque()).append(tx)
        return tx

    def dequeue(self, priority: int) -> Transmission:
        """Pop the head of a class queue once its frame has gone on the wire."""
        tc = self.gcl.traffic_class(priority)
        self.queues[tc].popleft()
        return self._pending[tc].popleft()

    def backlog(self) -> int:
        return sum(len(q) for q in self.queues.values())


def enqueue(pkt: PacketBuffer, now: int, state: TaprioState) -> Transmission:
    return state.enqueue(pkt, now)

