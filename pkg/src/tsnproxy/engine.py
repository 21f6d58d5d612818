"""Deterministic discrete-event model of a node's egress path.

One packet walks: talker socket -> pod veth egress (store hook) -> veth
crossing into the host namespace -> host path (clone / drop) -> NIC egress
(restore hook) -> taprio -> wire -> listener.

Events are kept in a heap keyed by ``(time, insertion order)``, so equal-time
events run in the order they were scheduled.
"""

from __future__ import annotations

import heapq
import itertools
import random
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, List, Optional, Tuple

from .cni import NodeState, PodState, detach_clone_probe, node_init, pod_init
from .packet import (
    HOST_NAMESPACE,
    BufferPool,
    NamespaceId,
    PacketBuffer,
    apply_control_messages,
    forward_to_device,
    scrub_packet,
)
from .proxy import (
    DEFAULT_GC_INTERVAL,
    DEFAULT_MAX_AGE,
    KeyStrategy,
    MetadataStore,
    ProxyStats,
    clone_track_hook,
    garbage_collect,
    restore_hook,
    store_hook,
)
from .taprio import GateControlList, TaprioState, paper_gcl, phase_in_cycle


class ScenarioError(ValueError):
    """Invalid scenario; ``field`` names the offending entry."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


@dataclass(frozen=True)
class Talker:
    pod: str
    priority: int
    period: int
    listener: str
    start_offset: int = 0
    payload_size: int = 64
    count: Optional[int] = None
    # Launch time relative to the send instant; None leaves SO_TXTIME unset.
    txtime_offset: Optional[int] = None
    tsa: bool = True


@dataclass(frozen=True)
class HostPath:
    clone_probability: float = 0.0
    drop_probability: float = 0.0
    forward_delay: int = 0


@dataclass(frozen=True)
class GCConfig:
    interval: int = DEFAULT_GC_INTERVAL
    max_age: int = DEFAULT_MAX_AGE


@dataclass(frozen=True)
class Scenario:
    duration: int
    talkers: Tuple[Talker, ...]
    gcl: GateControlList = field(default_factory=paper_gcl)
    seed: int = 0
    proxy_enabled: bool = True
    host_path: HostPath = field(default_factory=HostPath)
    gc: GCConfig = field(default_factory=GCConfig)
    strategy: KeyStrategy = KeyStrategy.BUFFER_ADDRESS
    clone_tracking: bool = True
    serialization: int = 0
    link_rate: Optional[int] = None
    nic: str = "eth0"
    name: str = "scenario"

    def validate(self) -> None:
        if self.duration < 0:
            raise ScenarioError("duration", "must be non-negative")
        if not 0 <= self.seed < 2 ** 64:
            raise ScenarioError("seed", "must be an unsigned 64-bit integer")
        for attr in ("clone_probability", "drop_probability"):
            p = getattr(self.host_path, attr)
            if not 0.0 <= p <= 1.0:
                raise ScenarioError(f"host_path.{attr}", f"{p} is not in [0, 1]")
        if self.host_path.forward_delay < 0:
            raise ScenarioError("host_path.forward_delay", "must be non-negative")
        if self.gc.interval <= 0:
            raise ScenarioError("gc.interval", "must be positive")
        if self.gc.max_age < 0:
            raise ScenarioError("gc.max_age", "must be non-negative")
        if self.serialization < 0:
            raise ScenarioError("serialization", "must be non-negative")
        if self.link_rate is not None and self.link_rate <= 0:
            raise ScenarioError("link_rate", "must be positive")
        tsa_by_pod: Dict[str, bool] = {}
        for i, t in enumerate(self.talkers):
            where = f"talkers[{i}]"
            if t.period <= 0:
                raise ScenarioError(f"{where}.period", "must be positive")
            if t.start_offset < 0:
                raise ScenarioError(f"{where}.start_offset", "must be non-negative")
            if t.payload_size < 0:
                raise ScenarioError(f"{where}.payload_size", "must be non-negative")
            if t.count is not None and t.count < 0:
                raise ScenarioError(f"{where}.count", "must be non-negative")
            if not 0 <= t.priority <= 0xFFFFFFFF:
                raise ScenarioError(f"{where}.priority", "must be an unsigned 32-bit value")
            try:
                self.gcl.traffic_class(t.priority)
            except ValueError as exc:
                raise ScenarioError(f"{where}.priority", str(exc)) from None
            if tsa_by_pod.setdefault(t.pod, t.tsa) != t.tsa:
                raise ScenarioError(f"{where}.tsa", f"pod {t.pod!r} declared both TSA and non-TSA")


@dataclass(frozen=True)
class TraceRecord:
    packet_seq: int
    talker: str
    listener: str
    tx_time: int
    rx_time: Optional[int]
    rx_phase: Optional[int]
    priority_at_rx: Optional[int]
    was_cloned: bool
    was_dropped: bool


@dataclass
class GCPass:
    time: int
    removed: int
    size_after: int
    oldest_age_after: Optional[int]


@dataclass
class RunResult:
    traces: List[TraceRecord]
    stats: ProxyStats
    store: Optional[MetadataStore]
    gc_passes: List[GCPass] = field(default_factory=list)
    store_times: List[int] = field(default_factory=list)
    # (talker, seq) -> payload bytes seen at the listener
    payloads: Dict[Tuple[str, int], bytes] = field(default_factory=dict)
    end_time: int = 0

    @property
    def delivered(self) -> List[TraceRecord]:
        return [r for r in self.traces if not r.was_dropped]


def talker_payload(talker: str, seq: int, size: int) -> bytes:
    # Independent of the run seed so payloads line up across seeds.
    return random.Random(f"{talker}/{seq}").randbytes(size)


class _EventLoop:
    def __init__(self):
        self._heap: List[Tuple[int, int, Callable[[int], None]]] = []
        self._order = itertools.count()
        self.now = 0

    def at(self, t: int, action: Callable[[int], None]) -> None:
        if t < self.now:
            raise RuntimeError(f"event scheduled in the past ({t} < {self.now})")
        heapq.heappush(self._heap, (t, next(self._order), action))

    def run(self) -> None:
        while self._heap:
            t, _, action = heapq.heappop(self._heap)
            self.now = t
            action(t)


class _Run:
    def __init__(self, scenario: Scenario):
        self.sc = scenario
        self.rng = random.Random(scenario.seed)
        self.pool = BufferPool()
        self.loop = _EventLoop()
        self.taprio = TaprioState(scenario.gcl, scenario.serialization, scenario.link_rate)
        self.traces: List[TraceRecord] = []
        self.gc_passes: List[GCPass] = []
        self.store_times: List[int] = []
        self.payloads: Dict[Tuple[str, int], bytes] = {}
        self.node = self._build_node()

    def _build_node(self) -> Optional[NodeState]:
        sc = self.sc
        if not sc.proxy_enabled:
            return None
        node = NodeState(nics=(sc.nic,))
        node_init(node, sc.nic, sc.gc.interval, sc.gc.max_age, sc.strategy)
        for t in sc.talkers:
            if t.pod not in node.pods:
                pod_init(node, t.pod, t.tsa)
        if not sc.clone_tracking:
            detach_clone_probe(node)
        return node

    @property
    def store(self) -> Optional[MetadataStore]:
        return self.node.store if self.node else None

    def pod(self, name: str) -> Optional[PodState]:
        return self.node.pods.get(name) if self.node else None

    def start(self) -> None:
        base = self.sc.gcl.base_time
        for t in self.sc.talkers:
            self._schedule_send(t, 0, base + t.start_offset)
        if self.node is not None and self.sc.duration > 0:
            interval = self.node.gc_interval
            for k in range(1, self.sc.duration // interval + 1):
                self.loop.at(base + k * interval, self._gc)
        self.loop.run()

    def _schedule_send(self, talker: Talker, seq: int, t: int) -> None:
        if talker.count is not None and seq >= talker.count:
            return
        if t >= self.sc.gcl.base_time + self.sc.duration:
            return
        self.loop.at(t, lambda now: self._send(talker, seq, now))

    def _send(self, talker: Talker, seq: int, now: int) -> None:
        self._schedule_send(talker, seq + 1, now + talker.period)
        sc = self.sc
        ns = NamespaceId(talker.pod)
        payload = talker_payload(talker.pod, seq, talker.payload_size)
        pkt = self.pool.make_packet(payload, ns)
        txtime = None if talker.txtime_offset is None else now + talker.txtime_offset
        pkt = apply_control_messages(pkt, talker.priority, txtime)

        pod = self.pod(talker.pod)
        if pod is not None and pod.veth_hook_attached:
            store_hook(pkt, self.store, now)
            self.store_times.append(now)

        pkt = forward_to_device(scrub_packet(pkt, crossing_namespace=True), HOST_NAMESPACE)

        # Fixed draw order per packet: clone, then drop.
        cloned = self.rng.random() < sc.host_path.clone_probability
        dropped = self.rng.random() < sc.host_path.drop_probability
        if cloned:
            clone = self.pool.clone_packet(pkt)
            if self.node is not None and self.node.clone_probe_attached:
                clone_track_hook(pkt, clone, self.store)
            pkt = clone
        if dropped:
            self.traces.append(TraceRecord(seq, talker.pod, talker.listener, now,
                                           None, None, None, cloned, True))
            return
        self.loop.at(now + sc.host_path.forward_delay,
                     lambda t: self._nic_egress(talker, seq, now, pkt, cloned, t))

    def _nic_egress(self, talker: Talker, seq: int, tx_time: int, pkt: PacketBuffer,
                    cloned: bool, now: int) -> None:
        if self.node is not None and self.node.nic_hook_attached:
            pkt = restore_hook(pkt, self.store)
        tx = self.taprio.enqueue(pkt, now)
        self.loop.at(tx.start, lambda t: self._wire(talker, seq, tx_time, pkt, cloned, t))

    def _wire(self, talker: Talker, seq: int, tx_time: int, pkt: PacketBuffer,
              cloned: bool, now: int) -> None:
        self.taprio.dequeue(pkt.priority)
        self.payloads[(talker.pod, seq)] = pkt.payload
        self.traces.append(TraceRecord(
            seq, talker.pod, talker.listener, tx_time, now,
            phase_in_cycle(now, self.sc.gcl), pkt.priority, cloned, False))

    def _gc(self, now: int) -> None:
        store = self.store
        removed = garbage_collect(store, now)
        self.gc_passes.append(GCPass(now, removed, len(store), store.oldest_age(now)))


def run_scenario(scenario: Scenario) -> RunResult:
    scenario.validate()
    run = _Run(scenario)
    run.start()
    stats = replace(run.store.stats) if run.store is not None else ProxyStats()
    return RunResult(run.traces, stats, run.store, run.gc_passes, run.store_times,
                     run.payloads, run.loop.now)


def replay_check(scenario: Scenario) -> bool:
    first = run_scenario(scenario)
    second = run_scenario(scenario)
    return (first.traces == second.traces
            and first.stats == second.stats
            and first.payloads == second.payloads)
