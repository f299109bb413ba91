import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import ReferenceLRU
from truspy_sim.cache_model import (
    CacheGeometry,
    CacheState,
    HardwareWaySplit,
    Outcome,
    Shared,
    SoftwareSetAllocation,
    WorldTag,
    set_index_of,
)
from truspy_sim.errors import PolicyViolation

REE, TEE = WorldTag.REE, WorldTag.TEE


@pytest.mark.parametrize("address, expected", [(0, 0), (64, 1), (64 * 256, 0), (63, 0), (64 * 257 + 5, 1)])
def test_set_index_of(geometry, address, expected):
    assert set_index_of(address, geometry) == expected


@given(st.integers(min_value=0, max_value=2**40))
def test_set_index_of_is_total_and_in_range(address):
    g = CacheGeometry(256, 8, 64)
    s = set_index_of(address, g)
    assert 0 <= s < 256
    assert s == set_index_of(address, g)


@pytest.mark.parametrize("kwargs", [dict(num_sets=3), dict(associativity=0), dict(line_size=48)])
def test_geometry_rejects_non_powers_of_two(kwargs):
    with pytest.raises(ValueError):
        CacheGeometry(**kwargs)


def test_capacity(geometry):
    assert geometry.capacity == 256 * 8 * 64


def test_cold_miss(geometry):
    cache = CacheState(geometry)
    assert cache.access(REE, 0).outcome is Outcome.MISS_NO_EVICT
    assert cache.access(REE, 0).outcome is Outcome.HIT


def test_tee_evicts_primed_ree_line(geometry):
    cache = CacheState(geometry, Shared())
    assert cache.prime_world_lines(REE, [0]) == 8
    rec = cache.access(TEE, 0)
    assert rec.outcome is Outcome.MISS_EVICT
    assert rec.evicted_world is REE
    assert cache.cross_world_evictions == 1


def test_ns_bit_is_part_of_the_line_key(geometry):
    cache = CacheState(geometry)
    cache.access(REE, 0x40)
    assert cache.access(TEE, 0x40).outcome is Outcome.MISS_NO_EVICT


def test_way_split_protects_ree_lines(geometry):
    policy = HardwareWaySplit(4)
    cache = CacheState(geometry, policy)
    ref = ReferenceLRU(256, 8, 64, policy)
    ree = [(k * 256) * 64 for k in range(4)]
    tee = [(1000 + k) * 256 * 64 for k in range(8)]
    for a in ree:
        assert cache.access(REE, a).outcome.value == ref.access("REE", a)[0]
    before = cache.cross_world_evictions
    for a in tee:
        rec = cache.access(TEE, a)
        expected = ref.access("TEE", a)
        assert (rec.outcome.value, rec.evicted_world and rec.evicted_world.value) == expected
    assert cache.cross_world_evictions == before == 0
    snap = cache.occupancy_snapshot()
    assert snap.count(REE, 0) == 4
    for a in ree:
        assert cache.access(REE, a).hit


def test_way_split_layout_matches_policy(geometry):
    cache = CacheState(geometry, HardwareWaySplit(4))
    cache.prime_world_lines(REE, [3])
    cache.prime_world_lines(TEE, [3])
    world = cache.occupancy_snapshot().world[3]
    assert list(world) == [0, 0, 0, 0, 1, 1, 1, 1]


@pytest.mark.parametrize("tee_ways", [0, 8, -1])
def test_way_split_bounds(geometry, tee_ways):
    with pytest.raises(ValueError):
        CacheState(geometry, HardwareWaySplit(tee_ways))


def test_software_allocation_rejects_foreign_sets(geometry):
    cache = CacheState(geometry, SoftwareSetAllocation(128, 256))
    with pytest.raises(PolicyViolation):
        cache.access(REE, 128 * 64)
    with pytest.raises(PolicyViolation):
        cache.access(TEE, 0)
    cache.access(TEE, 128 * 64)
    cache.access(REE, 127 * 64)


@pytest.mark.parametrize("policy, world, sets, expected", [
    (Shared(), REE, [0], 8),
    (HardwareWaySplit(4), REE, [0], 4),
    (HardwareWaySplit(2), TEE, [0, 1, 2], 6),
])
def test_prime_counts(geometry, policy, world, sets, expected):
    assert CacheState(geometry, policy).prime_world_lines(world, sets) == expected


def test_prime_software_allocation_count(geometry):
    cache = CacheState(geometry, SoftwareSetAllocation(128, 256))
    # Enumerate the lines by hand: every REE set, every way.
    expected = sum(1 for s in range(128) for _ in range(geometry.associativity))
    assert cache.prime_world_lines(REE, range(128)) == expected == 128 * 8
    snap = cache.occupancy_snapshot()
    assert snap.count(REE) == 1024 and snap.count(TEE) == 0


def test_prime_fills_every_eligible_way(geometry):
    cache = CacheState(geometry)
    cache.prime_world_lines(REE, [0])
    snap = cache.occupancy_snapshot()
    assert snap.valid[0].all() and (snap.world[0] == 0).all()
    assert not snap.valid[1:].any()


def test_snapshot_fresh_and_pure(geometry):
    cache = CacheState(geometry)
    snap = cache.occupancy_snapshot()
    assert not snap.valid.any() and (snap.world == -1).all()
    cache.prime_world_lines(REE, [0, 5])
    order = cache.lru_order(0)
    assert cache.occupancy_snapshot() == cache.occupancy_snapshot()
    assert cache.lru_order(0) == order


def test_shared_baseline_contention(geometry):
    cache = CacheState(geometry)
    cache.prime_world_lines(REE, [7])
    for k in range(8):
        cache.access(TEE, (7 + 256 * (5000 + k)) * 64)
    assert cache.occupancy_snapshot().count(REE, 7) == 0
    assert cache.cross_world_evictions == 8


def _lru_ranks_distinct(cache):
    for s in range(cache.geometry.num_sets):
        ranks = [r for r, v in zip(cache.lru_rank[s], cache.valid[s]) if v]
        if len(ranks) != len(set(ranks)):
            return False
    return True


def _random_sequence(rng, policy, geometry, length):
    seq = []
    for _ in range(length):
        world = REE if rng.random() < 0.5 else TEE
        if isinstance(policy, SoftwareSetAllocation):
            sets = range(policy.tee_start, policy.tee_stop) if world is TEE else \
                [s for s in range(geometry.num_sets) if not policy.tee_start <= s < policy.tee_stop]
            s = sets[int(rng.integers(len(sets)))]
        else:
            s = int(rng.integers(geometry.num_sets))
        line = int(rng.integers(12)) * geometry.num_sets + s
        seq.append((world, line * geometry.line_size + int(rng.integers(geometry.line_size))))
    return seq


@pytest.mark.parametrize("policy", [Shared(), HardwareWaySplit(1), HardwareWaySplit(3), SoftwareSetAllocation(1, 3)])
def test_matches_reference_lru(policy):
    g = CacheGeometry(4, 4, 16)
    rng = np.random.default_rng(7)
    for _ in range(300):
        cache = CacheState(g, policy)
        ref = ReferenceLRU(4, 4, 16, policy)
        for world, address in _random_sequence(rng, policy, g, 60):
            rec = cache.access(world, address)
            expected = ref.access(world.value, address)
            assert (rec.outcome.value, rec.evicted_world and rec.evicted_world.value) == expected
        assert cache.cross_world_evictions == ref.cross
        assert _lru_ranks_distinct(cache)


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 3), st.lists(st.tuples(st.booleans(), st.integers(0, 63)), max_size=80))
def test_way_split_never_crosses_worlds(tee_ways, ops):
    g = CacheGeometry(4, 4, 16)
    cache = CacheState(g, HardwareWaySplit(tee_ways))
    for is_tee, line in ops:
        cache.access(TEE if is_tee else REE, line * 16)
        snap = cache.occupancy_snapshot()
        assert not (snap.world[:, : 4 - tee_ways] == 1).any()
        assert not (snap.world[:, 4 - tee_ways:] == 0).any()
    assert cache.cross_world_evictions == 0


@settings(max_examples=200, deadline=None)
@given(st.lists(st.tuples(st.booleans(), st.integers(0, 63)), max_size=80))
def test_software_split_never_crosses_worlds(ops):
    g = CacheGeometry(4, 4, 16)
    cache = CacheState(g, SoftwareSetAllocation(2, 4))
    for is_tee, line in ops:
        s = line % 4
        world = TEE if s >= 2 else REE
        cache.access(world, line * 16)
    assert cache.cross_world_evictions == 0
