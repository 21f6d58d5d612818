"""In-node packet model and the kernel's namespace-crossing metadata rules.

A :class:`PacketBuffer` stands in for an ``sk_buff``: ``buffer_id`` plays the
role of the skb address, ``data_id`` the role of ``skb->data``. Identifiers
come from a :class:`BufferPool` and are never reused within a pool, so stale
store entries can never collide with a fresh buffer.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, replace
from typing import Optional

U32_MAX = 0xFFFFFFFF


@dataclass(frozen=True)
class NamespaceId:
    name: str
    is_host: bool = False


HOST_NAMESPACE = NamespaceId("host", is_host=True)


@dataclass(frozen=True)
class PacketBuffer:
    buffer_id: int
    data_id: int
    payload: bytes
    namespace: NamespaceId
    priority: int = 0
    # None means "unset"; 0 is a valid launch time.
    txtime: Optional[int] = None
    mark: int = 0


class BufferPool:
    """Allocates buffer and payload identifiers for one simulation run."""

    def __init__(self):
        self._buffer_ids = itertools.count(1)
        self._data_ids = itertools.count(1)

    def make_packet(self, payload: bytes, namespace: NamespaceId) -> PacketBuffer:
        return PacketBuffer(
            buffer_id=next(self._buffer_ids),
            data_id=next(self._data_ids),
            payload=bytes(payload),
            namespace=namespace,
        )

    def clone_packet(self, pkt: PacketBuffer) -> PacketBuffer:
        """Copy the buffer header; the payload (and so ``data_id``) is shared."""
        return replace(pkt, buffer_id=next(self._buffer_ids))


_default_pool = BufferPool()


def make_packet(payload: bytes, namespace: NamespaceId,
                pool: Optional[BufferPool] = None) -> PacketBuffer:
    return (pool or _default_pool).make_packet(payload, namespace)


def clone_packet(pkt: PacketBuffer, pool: Optional[BufferPool] = None) -> PacketBuffer:
    return (pool or _default_pool).clone_packet(pkt)


def _check_u32(name: str, value: int) -> None:
    if not 0 <= value <= U32_MAX:
        raise ValueError(f"{name} must be an unsigned 32-bit value, got {value}")


def apply_control_messages(pkt: PacketBuffer, priority: Optional[int] = None,
                           txtime: Optional[int] = None) -> PacketBuffer:
    """Set SO_PRIORITY / SO_TXTIME values; ``None`` leaves a field as it was."""
    changes = {}
    if priority is not None:
        _check_u32("priority", priority)
        changes["priority"] = priority
    if txtime is not None:
        if txtime < 0:
            raise ValueError(f"txtime must be non-negative, got {txtime}")
        changes["txtime"] = txtime
    return replace(pkt, **changes) if changes else pkt


def scrub_packet(pkt: PacketBuffer, crossing_namespace: bool) -> PacketBuffer:
    """skb_scrub_packet analog: tstamp and mark only die on a namespace crossing.

    Priority is left alone here; :func:`forward_to_device` clears it.
    """
    if not crossing_namespace:
        return pkt
    if pkt.txtime is None and pkt.mark == 0:
        return pkt
    return replace(pkt, txtime=None, mark=0)


def forward_to_device(pkt: PacketBuffer, dest_namespace: NamespaceId) -> PacketBuffer:
    """dev_forward_skb analog: move to the peer device, dropping the priority."""
    return replace(pkt, priority=0, namespace=dest_namespace)


def cross_veth(pkt: PacketBuffer, dest_namespace: NamespaceId) -> PacketBuffer:
    """A veth hop between namespaces: scrub followed by forward."""
    crossing = dest_namespace != pkt.namespace
    return forward_to_device(scrub_packet(pkt, crossing), dest_namespace)
