from dataclasses import replace

from hypothesis import given, strategies as st

from tsnproxy.packet import HOST_NAMESPACE, BufferPool, NamespaceId, cross_veth
from tsnproxy.proxy import (
    RECORD_PAYLOAD_BYTES,
    KeyStrategy,
    MetadataRecord,
    MetadataStore,
    clone_track_hook,
    garbage_collect,
    key_of,
    restore_hook,
    store_hook,
)

from conftest import S

POD = NamespaceId("talker1")


def test_record_size():
    assert RECORD_PAYLOAD_BYTES == 4 + 8


class TestKeyOf:
    def test_buffer_and_data(self, pool):
        pkt = pool.make_packet(b"x", POD)
        assert key_of(pkt, KeyStrategy.BUFFER_ADDRESS) == pkt.buffer_id
        assert key_of(pkt, KeyStrategy.DATA_ADDRESS) == pkt.data_id

    def test_clone_shares_data_key(self, pool):
        pkt = pool.make_packet(b"x", POD)
        assert key_of(pool.clone_packet(pkt), KeyStrategy.DATA_ADDRESS) == key_of(
            pkt, KeyStrategy.DATA_ADDRESS)

    def test_parse_aliases(self):
        assert KeyStrategy.parse("DataAddress") is KeyStrategy.DATA_ADDRESS
        assert KeyStrategy.parse("buffer") is KeyStrategy.BUFFER_ADDRESS


class TestStore:
    def test_store_record(self, pool):
        store = MetadataStore()
        pkt = replace(pool.make_packet(b"x", POD), priority=1)
        store_hook(pkt, store, now=100)
        assert store.entries[pkt.buffer_id] == MetadataRecord(1, None, 100)
        assert store.stats.stored == 1

    def test_second_store_wins(self, pool):
        store = MetadataStore()
        pkt = replace(pool.make_packet(b"x", POD), priority=1)
        store_hook(pkt, store, 1)
        store_hook(replace(pkt, priority=2, txtime=50), store, 2)
        assert store.entries[pkt.buffer_id] == MetadataRecord(2, 50, 2)
        assert len(store) == 1

    def test_priority_zero_is_stored(self, pool):
        store = MetadataStore()
        pkt = pool.make_packet(b"x", POD)
        store_hook(pkt, store, 7)
        assert store.entries[pkt.buffer_id] == MetadataRecord(0, None, 7)

    def test_payload_untouched(self, pool):
        store = MetadataStore()
        pkt = pool.make_packet(b"payload", POD)
        store_hook(pkt, store, 0)
        assert pkt.payload == b"payload"


class TestCloneTrack:
    def test_readd_under_clone_address(self, pool):
        store = MetadataStore()
        pkt = replace(pool.make_packet(b"x", POD), priority=1)
        store_hook(pkt, store, 0)
        clone = pool.clone_packet(pkt)
        clone_track_hook(pkt, clone, store)
        assert store.entries[pkt.buffer_id] == store.entries[clone.buffer_id]
        assert store.stats.cloned_retagged == 1

    def test_miss_is_noop(self, pool):
        store = MetadataStore()
        pkt = pool.make_packet(b"x", POD)
        clone_track_hook(pkt, pool.clone_packet(pkt), store)
        assert len(store) == 0
        assert store.stats.cloned_retagged == 0

    def test_data_strategy_noop_but_restores(self, pool):
        store = MetadataStore(strategy=KeyStrategy.DATA_ADDRESS)
        pkt = replace(pool.make_packet(b"x", POD), priority=2)
        store_hook(pkt, store, 0)
        before = dict(store.entries)
        clone = pool.clone_packet(cross_veth(pkt, HOST_NAMESPACE))
        clone_track_hook(pkt, clone, store)
        assert store.entries == before
        assert restore_hook(clone, store).priority == 2


class TestRestore:
    def test_hit_restores_and_consumes(self, pool):
        store = MetadataStore()
        pkt = replace(pool.make_packet(b"x", POD), priority=2)
        store_hook(pkt, store, 0)
        scrubbed = cross_veth(pkt, HOST_NAMESPACE)
        assert (scrubbed.priority, scrubbed.txtime) == (0, None)
        out = restore_hook(scrubbed, store)
        assert out.priority == 2
        assert pkt.buffer_id not in store
        assert store.stats.restored == 1

    def test_miss_passthrough(self, pool):
        store = MetadataStore()
        pkt = pool.make_packet(b"x", HOST_NAMESPACE)
        assert restore_hook(pkt, store) == pkt
        assert store.stats.misses == 1

    def test_second_restore_misses(self, pool):
        store = MetadataStore()
        pkt = replace(pool.make_packet(b"x", POD), priority=1, txtime=5)
        store_hook(pkt, store, 0)
        first = restore_hook(cross_veth(pkt, HOST_NAMESPACE), store)
        assert (first.priority, first.txtime) == (1, 5)
        restore_hook(cross_veth(pkt, HOST_NAMESPACE), store)
        assert store.stats.misses == 1


class TestGarbageCollect:
    def test_removes_only_old(self, pool):
        # Entries inserted at t=0 and t=2s, collected at t=3s: ages 3 s and 1 s.
        store = MetadataStore(max_age=2 * S)
        old = pool.make_packet(b"a", POD)
        young = pool.make_packet(b"b", POD)
        store_hook(old, store, 0)
        store_hook(young, store, 2 * S)
        assert garbage_collect(store, 3 * S) == 1
        assert list(store.entries) == [young.buffer_id]
        assert store.stats.collected == 1

    def test_boundary_age_kept(self, pool):
        store = MetadataStore(max_age=2 * S)
        store_hook(pool.make_packet(b"a", POD), store, 0)
        assert garbage_collect(store, 2 * S) == 0
        assert garbage_collect(store, 2 * S + 1) == 1

    def test_empty(self):
        assert garbage_collect(MetadataStore(), 10 * S) == 0

    def test_dropped_packet_entry_is_reclaimed(self, pool):
        store = MetadataStore(max_age=5 * S)
        pkt = replace(pool.make_packet(b"x", POD), priority=1)
        store_hook(pkt, store, 0)
        # The packet never reaches the NIC (egress policy drop).
        assert garbage_collect(store, 4 * S) == 0
        garbage_collect(store, 6 * S)
        assert pkt.buffer_id not in store


@given(priority=st.integers(0, 2 ** 32 - 1), txtime=st.none() | st.integers(0, 2 ** 62),
       clones=st.integers(0, 6), strategy=st.sampled_from(list(KeyStrategy)))
def test_conservation_through_clone_chains(priority, txtime, clones, strategy):
    pool = BufferPool()
    store = MetadataStore(strategy=strategy)
    pkt = replace(pool.make_packet(b"data", POD), priority=priority, txtime=txtime)
    store_hook(pkt, store, 0)
    pkt = cross_veth(pkt, HOST_NAMESPACE)
    for _ in range(clones):
        clone = pool.clone_packet(pkt)
        clone_track_hook(pkt, clone, store)
        pkt = clone
    out = restore_hook(pkt, store)
    assert (out.priority, out.txtime) == (priority, txtime)
    assert out.payload == b"data"
    assert restore_hook(pkt, store) == pkt
