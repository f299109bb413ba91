"""First-round table-lookup AES victim running in the TEE.

Only the secret-dependent memory accesses are modelled: byte ``i`` of the
state looks up entry ``plaintext[i] ^ key[i]`` of table ``i % num_tables``.
No ciphertext is produced.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .cache_model import (
    CacheGeometry,
    CacheState,
    SoftwareSetAllocation,
    WorldTag,
    set_index_of,
)
from .errors import LayoutError

KEY_BYTES = 16

# Decoy lines live in their own region, away from tables and attacker lines.
DECOY_REGION_LINE = 3 << 26


@dataclass(frozen=True)
class VictimKey:
    bytes: bytes

    def __post_init__(self):
        if len(self.bytes) != KEY_BYTES:
            raise ValueError(f"key must be exactly {KEY_BYTES} bytes, got {len(self.bytes)}")

    @classmethod
    def from_hex(cls, text: str) -> "VictimKey":
        return cls(bytes.fromhex(text))

    @classmethod
    def random(cls, rng: np.random.Generator) -> "VictimKey":
        return cls(rng.bytes(KEY_BYTES))

    def hex(self) -> str:
        return self.bytes.hex()

    def __getitem__(self, i: int) -> int:
        return self.bytes[i]


def _default_bases() -> tuple[int, ...]:
    # Four 1 KiB tables back to back from set 128 of a 256x64 B cache.
    return tuple(0x2000 + i * 0x400 for i in range(4))


@dataclass(frozen=True)
class TableLayout:
    table_base_addresses: tuple[int, ...] = field(default_factory=_default_bases)
    entry_size: int = 4
    entries_per_table: int = 256

    def __post_init__(self):
        object.__setattr__(self, "table_base_addresses", tuple(self.table_base_addresses))
        if not self.table_base_addresses:
            raise LayoutError("at least one lookup table is required")
        if self.entry_size < 1 or self.entry_size & (self.entry_size - 1):
            raise LayoutError(f"entry_size must be a power of two, got {self.entry_size}")
        if self.entries_per_table != 256:
            raise LayoutError("byte-indexed tables have exactly 256 entries")

    @property
    def num_tables(self) -> int:
        return len(self.table_base_addresses)

    @property
    def table_bytes(self) -> int:
        return self.entries_per_table * self.entry_size

    def entries_per_line(self, geometry: CacheGeometry) -> int:
        return geometry.line_size // self.entry_size

    def table_for_byte(self, i: int) -> int:
        return self.table_base_addresses[i % self.num_tables]

    def entry_address(self, byte_index: int, table_index: int) -> int:
        return self.table_for_byte(byte_index) + table_index * self.entry_size

    def table_sets(self, base: int, geometry: CacheGeometry) -> list[int]:
        first = base // geometry.line_size
        last = (base + self.table_bytes - 1) // geometry.line_size
        return sorted({line % geometry.num_sets for line in range(first, last + 1)})

    def validate(self, geometry: CacheGeometry) -> None:
        if self.entries_per_line(geometry) < 1:
            raise LayoutError(
                f"entry_size {self.entry_size} exceeds line_size {geometry.line_size}"
            )
        spans = []
        for base in self.table_base_addresses:
            if base < 0 or base % geometry.line_size:
                raise LayoutError(f"table base {base:#x} is not line-aligned")
            spans.append((base, base + self.table_bytes))
        spans.sort()
        for (_, end), (start, _) in zip(spans, spans[1:]):
            if start < end:
                raise LayoutError("lookup tables overlap")


def check_layout_against(layout: TableLayout, cache: CacheState) -> None:
    """Raise :class:`LayoutError` if any table line falls in a REE-allocated set."""
    layout.validate(cache.geometry)
    policy = cache.policy
    if isinstance(policy, SoftwareSetAllocation):
        for base in layout.table_base_addresses:
            outside = [s for s in layout.table_sets(base, cache.geometry)
                       if not policy.allows_set(WorldTag.TEE, s)]
            if outside:
                raise LayoutError(
                    f"table at {base:#x} overlaps REE-allocated sets {outside[0]}..{outside[-1]}"
                )


@dataclass
class VictimTrace:
    accesses: list[tuple[int, WorldTag]] = field(default_factory=list)

    def __len__(self):
        return len(self.accesses)

    def addresses(self) -> list[int]:
        return [a for a, _ in self.accesses]

    def sets(self, geometry: CacheGeometry) -> list[int]:
        return [set_index_of(a, geometry) for a, _ in self.accesses]


def lookup_addresses(key: VictimKey, layout: TableLayout, plaintext: bytes) -> list[int]:
    if len(plaintext) != KEY_BYTES:
        raise ValueError(f"plaintext must be {KEY_BYTES} bytes")
    return [layout.entry_address(i, plaintext[i] ^ key[i]) for i in range(KEY_BYTES)]


def trigger_victim(key: VictimKey, layout: TableLayout, plaintext: bytes, cache: CacheState,
                   decoys: int = 0, rng: np.random.Generator | None = None) -> VictimTrace:
    """Run one encryption's first-round lookups through ``cache`` as the TEE.

    The run is atomic with respect to the attacker.  ``decoys`` extra TEE
    accesses to random table-external lines (drawn from ``rng``) are issued
    after the lookups.  Only the secret-dependent lookups are returned in the
    trace.
    """
    check_layout_against(layout, cache)
    trace = VictimTrace()
    for address in lookup_addresses(key, layout, plaintext):
        cache.access(WorldTag.TEE, address)
        trace.accesses.append((address, WorldTag.TEE))
    if decoys:
        if rng is None:
            raise ValueError("decoy accesses need a random generator")
        geometry = cache.geometry
        policy = cache.policy
        sets = (list(policy.sets_for(WorldTag.TEE, geometry))
                if isinstance(policy, SoftwareSetAllocation) else range(geometry.num_sets))
        for _ in range(decoys):
            s = sets[int(rng.integers(len(sets)))]
            slot = int(rng.integers(1 << 16))
            line = DECOY_REGION_LINE + slot * geometry.num_sets + s
            cache.access(WorldTag.TEE, line * geometry.line_size)
    return trace


def recoverable_bits(layout: TableLayout, geometry: CacheGeometry) -> int:
    """Key bits per byte a line-granular observer can learn (``8 - log2(entries/line)``)."""
    layout.validate(geometry)
    per_line = layout.entries_per_line(geometry)
    return max(0, 8 - int(math.log2(per_line)))
