"""Shared set-associative cache with NS-bit tagged lines and strict LRU.

Lines are matched on ``(tag, world)``: the NS bit is part of the lookup key,
so the same physical line fetched by REE and by TEE occupies two distinct
cache lines.  LRU ranks are kept per set across both worlds (rank 0 is the
most recently used line); a partition policy only restricts which ways a
world may *fill*.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np

from .errors import PolicyViolation


class WorldTag(enum.Enum):
    REE = "REE"
    TEE = "TEE"

    @property
    def other(self) -> "WorldTag":
        return WorldTag.TEE if self is WorldTag.REE else WorldTag.REE


def _is_pow2(n: int) -> bool:
    return n >= 1 and n & (n - 1) == 0


@dataclass(frozen=True)
class CacheGeometry:
    num_sets: int = 256
    associativity: int = 8
    line_size: int = 64

    def __post_init__(self):
        for name in ("num_sets", "associativity", "line_size"):
            value = getattr(self, name)
            if not isinstance(value, int) or not _is_pow2(value):
                raise ValueError(f"{name} must be a positive power of two, got {value!r}")

    @property
    def capacity(self) -> int:
        return self.num_sets * self.associativity * self.line_size


# -- partition policies ------------------------------------------------------


@dataclass(frozen=True)
class Shared:
    """No partitioning: either world may fill any way of any set."""

    def validate(self, geometry: CacheGeometry) -> None:
        pass

    def ways_for(self, world: WorldTag, geometry: CacheGeometry) -> range:
        return range(geometry.associativity)

    def allows_set(self, world: WorldTag, set_index: int) -> bool:
        return True


@dataclass(frozen=True)
class HardwareWaySplit:
    """Fixed per-set way split.

    Ways ``[0, associativity - tee_ways)`` are REE-only and the remaining
    ``tee_ways`` ways are TEE-only, identically in every set.
    """

    tee_ways: int

    def validate(self, geometry: CacheGeometry) -> None:
        if not 0 < self.tee_ways < geometry.associativity:
            raise ValueError(
                f"tee_ways must lie in (0, {geometry.associativity}), got {self.tee_ways}"
            )

    def ways_for(self, world: WorldTag, geometry: CacheGeometry) -> range:
        ree_ways = geometry.associativity - self.tee_ways
        if world is WorldTag.REE:
            return range(0, ree_ways)
        return range(ree_ways, geometry.associativity)

    def allows_set(self, world: WorldTag, set_index: int) -> bool:
        return True


@dataclass(frozen=True)
class SoftwareSetAllocation:
    """Fixed address allocation: TEE owns sets ``[tee_start, tee_stop)``, REE the rest."""

    tee_start: int
    tee_stop: int

    def validate(self, geometry: CacheGeometry) -> None:
        if not 0 <= self.tee_start < self.tee_stop <= geometry.num_sets:
            raise ValueError(
                f"tee set range [{self.tee_start}, {self.tee_stop}) must be a non-empty "
                f"sub-interval of [0, {geometry.num_sets})"
            )

    def ways_for(self, world: WorldTag, geometry: CacheGeometry) -> range:
        return range(geometry.associativity)

    def allows_set(self, world: WorldTag, set_index: int) -> bool:
        in_tee = self.tee_start <= set_index < self.tee_stop
        return in_tee if world is WorldTag.TEE else not in_tee

    def sets_for(self, world: WorldTag, geometry: CacheGeometry) -> range | list:
        if world is WorldTag.TEE:
            return range(self.tee_start, self.tee_stop)
        return [s for s in range(geometry.num_sets) if not self.tee_start <= s < self.tee_stop]


PartitionPolicy = Shared | HardwareWaySplit | SoftwareSetAllocation


# -- access records ------------------------------------------------------------


class Outcome(enum.Enum):
    HIT = "Hit"
    MISS_NO_EVICT = "MissNoEvict"
    MISS_EVICT = "MissEvict"


@dataclass(frozen=True, slots=True)
class AccessRecord:
    world: WorldTag
    address: int
    outcome: Outcome
    evicted_world: Optional[WorldTag] = None

    @property
    def hit(self) -> bool:
        return self.outcome is Outcome.HIT


def set_index_of(address: int, geometry: CacheGeometry) -> int:
    if address < 0:
        raise ValueError("address must be non-negative")
    return (address // geometry.line_size) % geometry.num_sets


def line_tag_of(address: int, geometry: CacheGeometry) -> int:
    # Full line number; no truncation, so distinct lines never alias.
    return address // geometry.line_size


# Synthetic address regions used when a world primes lines it does not
# otherwise own.  Each base is a multiple of any plausible num_sets so that
# line ``k * num_sets + s`` of a region maps to set ``s``.
SYNTHETIC_REGION_LINE = {WorldTag.REE: 1 << 26, WorldTag.TEE: 1 << 27}


def synthetic_address(world: WorldTag, set_index: int, slot: int, geometry: CacheGeometry) -> int:
    """Byte address of the ``slot``-th synthetic line a world uses in ``set_index``."""
    line = SYNTHETIC_REGION_LINE[world] + slot * geometry.num_sets + set_index
    return line * geometry.line_size


@dataclass(frozen=True)
class Occupancy:
    """Read-only view of which world holds each (set, way)."""

    valid: np.ndarray
    world: np.ndarray  # 0 = REE, 1 = TEE, -1 = invalid

    def count(self, world: WorldTag, set_index: Optional[int] = None) -> int:
        code = 0 if world is WorldTag.REE else 1
        rows = self.world if set_index is None else self.world[set_index]
        return int(np.count_nonzero(rows == code))

    def __eq__(self, other):
        if not isinstance(other, Occupancy):
            return NotImplemented
        return np.array_equal(self.valid, other.valid) and np.array_equal(self.world, other.world)

    __hash__ = None


@dataclass
class CacheState:
    geometry: CacheGeometry = field(default_factory=CacheGeometry)
    policy: PartitionPolicy = field(default_factory=Shared)
    cross_world_evictions: int = 0

    def __post_init__(self):
        self.policy.validate(self.geometry)
        n, a = self.geometry.num_sets, self.geometry.associativity
        self.valid = [[False] * a for _ in range(n)]
        self.tags = [[-1] * a for _ in range(n)]
        self.worlds: list[list[Optional[WorldTag]]] = [[None] * a for _ in range(n)]
        self.lru_rank = [[-1] * a for _ in range(n)]
        self._ree_ways = self.policy.ways_for(WorldTag.REE, self.geometry)
        self._tee_ways = self.policy.ways_for(WorldTag.TEE, self.geometry)
        self._set_restricted = isinstance(self.policy, SoftwareSetAllocation)

    def eligible_ways(self, world: WorldTag) -> range:
        return self._ree_ways if world is WorldTag.REE else self._tee_ways

    def check_policy(self, world: WorldTag, set_index: int) -> None:
        if not self.policy.allows_set(world, set_index):
            raise PolicyViolation(
                f"{world.value} access to set {set_index} is outside its allocation under {self.policy}"
            )

    def access(self, world: WorldTag, address: int) -> AccessRecord:
        outcome, evicted = self._access(world, address)
        return AccessRecord(world, address, outcome, evicted)

    def access_hits(self, world: WorldTag, addresses: Iterable[int]) -> list[bool]:
        """Issue ``addresses`` in order; return only whether each one hit."""
        hit = Outcome.HIT
        step = self._access
        return [step(world, a)[0] is hit for a in addresses]

    def _access(self, world: WorldTag, address: int) -> tuple[Outcome, Optional[WorldTag]]:
        if address < 0:
            raise ValueError("address must be non-negative")
        tag = address // self.geometry.line_size
        s = tag % self.geometry.num_sets
        if self._set_restricted:
            self.check_policy(world, s)
        valid, tags, worlds, ranks = self.valid[s], self.tags[s], self.worlds[s], self.lru_rank[s]
        ways = self._ree_ways if world is WorldTag.REE else self._tee_ways

        for w in ways:
            if tags[w] == tag and valid[w] and worlds[w] is world:
                self._touch(ranks, valid, w)
                return Outcome.HIT, None

        victim_way = None
        for w in ways:
            if not valid[w]:
                victim_way = w
                break
        if victim_way is None:
            victim_way = max(ways, key=ranks.__getitem__)
            evicted = worlds[victim_way]
            if evicted is not world:
                self.cross_world_evictions += 1
            result = Outcome.MISS_EVICT, evicted
        else:
            ranks[victim_way] = len(ranks)  # older than everything; _touch ages the rest
            valid[victim_way] = True
            result = Outcome.MISS_NO_EVICT, None
        tags[victim_way] = tag
        worlds[victim_way] = world
        self._touch(ranks, valid, victim_way)
        return result

    @staticmethod
    def _touch(ranks: list[int], valid: list[bool], way: int) -> None:
        old = ranks[way]
        for w, r in enumerate(ranks):
            if valid[w] and r < old:
                ranks[w] = r + 1
        ranks[way] = 0

    def prime_world_lines(self, world: WorldTag, target_sets: Iterable[int]) -> int:
        """Fill every way ``world`` may use in each target set with its own lines.

        Returns the number of line accesses issued (one per eligible way).
        """
        sets = sorted(set(target_sets))
        for s in sets:
            self.check_policy(world, s)
        addresses = self.synthetic_lines(world, sets)
        self.access_hits(world, addresses)
        return len(addresses)

    def synthetic_lines(self, world: WorldTag, sets: Iterable[int]) -> list[int]:
        """The addresses :meth:`prime_world_lines` uses, ascending by set then slot."""
        ways = len(self.eligible_ways(world))
        return [synthetic_address(world, s, slot, self.geometry) for s in sets for slot in range(ways)]

    def occupancy_snapshot(self) -> Occupancy:
        valid = np.array(self.valid, dtype=bool)
        code = {None: -1, WorldTag.REE: 0, WorldTag.TEE: 1}
        world = np.array([[code[w] for w in row] for row in self.worlds], dtype=np.int8)
        world[~valid] = -1
        return Occupancy(valid=valid, world=world)

    def lru_order(self, set_index: int) -> list[tuple[int, WorldTag]]:
        """Valid lines of a set as ``(tag, world)``, most recently used first."""
        entries = [
            (self.lru_rank[set_index][w], self.tags[set_index][w], self.worlds[set_index][w])
            for w in range(self.geometry.associativity)
            if self.valid[set_index][w]
        ]
        return [(tag, world) for _, tag, world in sorted(entries, key=lambda e: e[0])]

