"""TSN metadata proxy: store at pod egress, follow clones, restore at the NIC.

The store is the node-wide hashmap shared by the three hook programs and the
garbage collector. Hooks touch the map with one ``dict`` primitive per key
(assignment, ``get``, ``pop``) and the collector scans a snapshot, so no lock
is held across a GC pass. The simulator drives all of this from one event
loop.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import Dict, Hashable, Optional

from .packet import PacketBuffer

# 4 bytes priority + 8 bytes launch time
RECORD_PAYLOAD_BYTES = 12

SECOND = 1_000_000_000
DEFAULT_GC_INTERVAL = 2 * SECOND
DEFAULT_MAX_AGE = 5 * SECOND


class KeyStrategy(enum.Enum):
    BUFFER_ADDRESS = "buffer"
    DATA_ADDRESS = "data"

    @classmethod
    def parse(cls, value: "str | KeyStrategy") -> "KeyStrategy":
        if isinstance(value, cls):
            return value
        aliases = {
            "buffer": cls.BUFFER_ADDRESS, "bufferaddress": cls.BUFFER_ADDRESS,
            "skb": cls.BUFFER_ADDRESS,
            "data": cls.DATA_ADDRESS, "dataaddress": cls.DATA_ADDRESS,
        }
        try:
            return aliases[str(value).lower().replace("_", "").replace("-", "")]
        except KeyError:
            raise ValueError(f"unknown key strategy {value!r}") from None


@dataclass(frozen=True)
class MetadataRecord:
    priority: int
    txtime: Optional[int]
    inserted_at: int


@dataclass
class ProxyStats:
    stored: int = 0
    restored: int = 0
    cloned_retagged: int = 0
    collected: int = 0
    misses: int = 0

    def as_dict(self) -> Dict[str, int]:
        return {
            "stored": self.stored,
            "restored": self.restored,
            "cloned_retagged": self.cloned_retagged,
            "collected": self.collected,
            "misses": self.misses,
        }


@dataclass
class MetadataStore:
    strategy: KeyStrategy = KeyStrategy.BUFFER_ADDRESS
    max_age: int = DEFAULT_MAX_AGE
    entries: Dict[Hashable, MetadataRecord] = field(default_factory=dict)
    stats: ProxyStats = field(default_factory=ProxyStats)

    def __post_init__(self):
        self.strategy = KeyStrategy.parse(self.strategy)
        if self.max_age < 0:
            raise ValueError("max_age must be non-negative")

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, key) -> bool:
        return key in self.entries

    def oldest_age(self, now: int) -> Optional[int]:
        if not self.entries:
            return None
        return now - min(r.inserted_at for r in list(self.entries.values()))


def key_of(pkt: PacketBuffer, strategy: KeyStrategy) -> Hashable:
    if strategy is KeyStrategy.BUFFER_ADDRESS:
        return pkt.buffer_id
    return pkt.data_id


def store_hook(pkt: PacketBuffer, store: MetadataStore, now: int) -> None:
    """Pod-side tc egress program: copy priority and txtime into the map.

    Priority 0 is stored too; the hook is attached per pod, not per priority.
    """
    store.entries[key_of(pkt, store.strategy)] = MetadataRecord(pkt.priority, pkt.txtime, now)
    store.stats.stored += 1


def clone_track_hook(original: PacketBuffer, clone: PacketBuffer, store: MetadataStore) -> None:
    """fexit probe on skb_clone: re-add the record under the clone's address.

    The source entry is kept because the original buffer can still be sent.
    Under the data-address strategy clones share a key, so nothing is done.
    """
    if store.strategy is KeyStrategy.DATA_ADDRESS:
        return
    record = store.entries.get(original.buffer_id)
    if record is None:
        return
    store.entries[clone.buffer_id] = record
    store.stats.cloned_retagged += 1


def restore_hook(pkt: PacketBuffer, store: MetadataStore) -> PacketBuffer:
    """NIC tc egress program: write the stored metadata back and consume the entry.

    A miss is normal (best-effort host traffic crosses the same hook).
    """
    record = store.entries.pop(key_of(pkt, store.strategy), None)
    if record is None:
        store.stats.misses += 1
        return pkt
    store.stats.restored += 1
    return replace(pkt, priority=record.priority, txtime=record.txtime)


def garbage_collect(store: MetadataStore, now: int) -> int:
    """Remove every entry older than ``store.max_age``; return how many went."""
    removed = 0
    for key, record in list(store.entries.items()):
        if now - record.inserted_at > store.max_age:
            # Skip if a restore consumed or a store replaced the entry meanwhile.
            if store.entries.get(key) is record:
                del store.entries[key]
                removed += 1
    store.stats.collected += removed
    return removed
