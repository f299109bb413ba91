"""Read/write transfer latencies for the REE and TEE data paths.

The NS bit drives a MUX that connects either the REE path or the TEE path to
the CPU.  The TEE path carries the AES engine; the countermeasures either pad
the REE path with a fixed delay (``CTA_DELAY``) or split the TEE crypto work
across parallel engines (``PARALLEL_CRYPTO``).  The delay is applied to every
REE transfer, hit or miss.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .cache_model import WorldTag


class PathScheme(enum.Enum):
    BASELINE = "baseline"
    CTA_DELAY = "cta_delay"
    PARALLEL_CRYPTO = "parallel_crypto"


class Direction(enum.Enum):
    READ = "read"
    WRITE = "write"


class DataPath(enum.Enum):
    REE_PATH = "ree_path"
    TEE_PATH = "tee_path"


@dataclass(frozen=True)
class LatencyParameters:
    dram_cycles: int = 200
    cache_hit_cycles: int = 4
    aes_decrypt_cycles: int = 40
    aes_encrypt_cycles: int = 40
    cta_delay_cycles: int = 40
    parallel_units: int = 1
    jitter_max: int = 0

    def __post_init__(self):
        for name, value in self.__dict__.items():
            if not isinstance(value, int) or isinstance(value, bool) or value < 0:
                raise ValueError(f"{name} must be a non-negative integer, got {value!r}")
        if self.parallel_units < 1:
            raise ValueError("parallel_units must be at least 1")
        if self.cache_hit_cycles >= self.dram_cycles:
            raise ValueError("cache_hit_cycles must be smaller than dram_cycles")

    def aes_cycles(self, direction: Direction) -> int:
        if direction is Direction.READ:
            return self.aes_decrypt_cycles
        return self.aes_encrypt_cycles

    def parallel_aes_cycles(self, direction: Direction) -> int:
        return -(-self.aes_cycles(direction) // self.parallel_units)


@dataclass(frozen=True, slots=True)
class TransferEvent:
    world: WorldTag
    direction: Direction
    hit: bool
    observed_cycles: int


def select_path(ns_bit: WorldTag) -> DataPath:
    return DataPath.REE_PATH if ns_bit is WorldTag.REE else DataPath.TEE_PATH


def path_cost(params: LatencyParameters, scheme: PathScheme, world: WorldTag,
              direction: Direction = Direction.READ) -> int:
    """Deterministic cycles the selected path adds on top of the memory access."""
    if select_path(world) is DataPath.REE_PATH:
        return params.cta_delay_cycles if scheme is PathScheme.CTA_DELAY else 0
    if scheme is PathScheme.PARALLEL_CRYPTO:
        return params.parallel_aes_cycles(direction)
    return params.aes_cycles(direction)


def _transfer_latency(params, scheme, world, hit, rng, direction):
    base = params.cache_hit_cycles if hit else params.dram_cycles
    jitter = int(rng.integers(0, params.jitter_max + 1)) if rng is not None else 0
    return base + path_cost(params, scheme, world, direction) + jitter


def read_transfer_latency(params: LatencyParameters, scheme: PathScheme, world: WorldTag,
                          hit: bool, rng: np.random.Generator | None = None) -> int:
    """Cycles for one load to reach the CPU.

    ``rng`` supplies the uniform jitter in ``[0, jitter_max]``; passing ``None``
    gives the noiseless latency.
    """
    return _transfer_latency(params, scheme, world, hit, rng, Direction.READ)


def write_transfer_latency(params: LatencyParameters, scheme: PathScheme, world: WorldTag,
                           hit: bool, rng: np.random.Generator | None = None) -> int:
    return _transfer_latency(params, scheme, world, hit, rng, Direction.WRITE)


def transfer_latencies(params: LatencyParameters, scheme: PathScheme, world: WorldTag,
                       hits: np.ndarray, rng: np.random.Generator,
                       direction: Direction = Direction.READ) -> np.ndarray:
    """Vectorised :func:`read_transfer_latency` over a boolean hit array.

    Always draws ``len(hits)`` jitter values, even when ``jitter_max`` is 0, so
    the generator advances identically regardless of the noise setting.
    """
    hits = np.asarray(hits, dtype=bool)
    base = np.where(hits, params.cache_hit_cycles, params.dram_cycles)
    jitter = rng.integers(0, params.jitter_max + 1, size=hits.shape)
    return base + path_cost(params, scheme, world, direction) + jitter


def equalization_gap(params: LatencyParameters, scheme: PathScheme,
                     direction: Direction = Direction.READ) -> int:
    return abs(path_cost(params, scheme, WorldTag.REE, direction)
               - path_cost(params, scheme, WorldTag.TEE, direction))


def is_equalized(params: LatencyParameters, scheme: PathScheme, tolerance: int = 0) -> bool:
    """True when both read and write gaps are within ``tolerance`` cycles."""
    return all(equalization_gap(params, scheme, d) <= tolerance for d in Direction)


def labeled_transfers(params: LatencyParameters, scheme: PathScheme, count: int,
                      rng: np.random.Generator, hit_probability: float = 0.0,
                      direction: Direction = Direction.READ) -> list[tuple[WorldTag, int]]:
    """Draw ``count`` transfers with uniformly random world labels.

    Each transfer is a cache hit with ``hit_probability``; the default models
    the DRAM loads whose path latency the countermeasure targets.
    """
    is_tee = rng.random(count) < 0.5
    hits = rng.random(count) < hit_probability
    jitter = rng.integers(0, params.jitter_max + 1, size=count)
    base = np.where(hits, params.cache_hit_cycles, params.dram_cycles)
    cost = np.where(is_tee, path_cost(params, scheme, WorldTag.TEE, direction),
                    path_cost(params, scheme, WorldTag.REE, direction))
    cycles = base + cost + jitter
    return [(WorldTag.TEE if t else WorldTag.REE, int(c)) for t, c in zip(is_tee, cycles)]
