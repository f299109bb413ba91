"""REE-resident prime+probe attacker and its key-recovery analysis.

The five attack steps map onto :func:`identify_target_sets` (find the
victim's sets), :func:`prime` (fill them), the victim trigger inside
:func:`collect_samples`, :func:`probe` (time the reloads) and
:func:`analyze` (rank key-byte guesses).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import stats

from .cache_model import CacheGeometry, CacheState, WorldTag
from .datapath import LatencyParameters, PathScheme, transfer_latencies
from .errors import InsufficientData
from .victim import KEY_BYTES, TableLayout, VictimKey, recoverable_bits, trigger_victim


@dataclass(frozen=True)
class AttackConfig:
    samples_per_byte: int = 200
    probe_threshold_cycles: int = 100
    noise_flip_probability: float = 0.0
    target_sets: tuple[int, ...] = ()
    # Skip sets the partition forbids instead of raising PolicyViolation;
    # skipped sets always read as "not evicted".
    permissive_probe: bool = False

    def __post_init__(self):
        if self.samples_per_byte < 0:
            raise ValueError("samples_per_byte must be non-negative")
        if not 0.0 <= self.noise_flip_probability <= 1.0:
            raise ValueError("noise_flip_probability must lie in [0, 1]")


@dataclass(frozen=True, slots=True)
class ProbeObservation:
    set_index: int
    latency: int
    evicted: bool


@dataclass
class Sample:
    plaintext: bytes
    observations: list[ProbeObservation]
    victim_ran: bool = True


@dataclass
class ByteResult:
    ranked_candidates: list[tuple[int, float]]
    recovered_high_bits: int

    def rank_of(self, guess: int) -> int:
        for position, (g, _) in enumerate(self.ranked_candidates):
            if g == guess:
                return position
        raise KeyError(guess)


@dataclass
class AttackResult:
    per_byte: list[ByteResult]
    samples_used: int
    bits: int
    success: Optional[bool] = None

    def recovered(self) -> list[int]:
        return [b.recovered_high_bits for b in self.per_byte]


def high_bits(key_byte: int, bits: int) -> int:
    return key_byte >> (8 - bits)


def identify_target_sets(layout: TableLayout, geometry: CacheGeometry) -> list[int]:
    layout.validate(geometry)
    sets: set[int] = set()
    for base in layout.table_base_addresses:
        sets.update(layout.table_sets(base, geometry))
    return sorted(sets)


def _reachable(cache: CacheState, target_sets, permissive: bool) -> list[int]:
    ordered = sorted(set(target_sets))
    if not permissive:
        return ordered
    return [s for s in ordered if cache.policy.allows_set(WorldTag.REE, s)]


def prime(cache: CacheState, target_sets: Sequence[int], permissive: bool = False) -> int:
    return cache.prime_world_lines(WorldTag.REE, _reachable(cache, target_sets, permissive))


def probe(cache: CacheState, params: LatencyParameters, scheme: PathScheme,
          target_sets: Sequence[int], config: AttackConfig,
          rng: np.random.Generator) -> list[ProbeObservation]:
    """Reload every primed line, ascending by set, and threshold the slowest load per set.

    The reloads refill the set, so REE occupancy is restored afterwards.
    """
    ordered = sorted(set(target_sets))
    reachable = set(_reachable(cache, ordered, config.permissive_probe))
    ways = len(cache.eligible_ways(WorldTag.REE))
    lines = cache.synthetic_lines(WorldTag.REE, [s for s in ordered if s in reachable])
    hits = cache.access_hits(WorldTag.REE, lines)
    latencies = transfer_latencies(params, scheme, WorldTag.REE, np.array(hits, dtype=bool), rng)
    flips = rng.random(len(ordered)) < config.noise_flip_probability

    observations = []
    cursor = 0
    for s, flip in zip(ordered, flips):
        if s in reachable:
            slowest = int(latencies[cursor:cursor + ways].max())
            cursor += ways
            evicted = slowest > config.probe_threshold_cycles
            observations.append(ProbeObservation(s, slowest, bool(evicted ^ flip)))
        else:
            observations.append(ProbeObservation(s, 0, False))
    return observations


def collect_samples(cache: CacheState, key: VictimKey, layout: TableLayout,
                    params: LatencyParameters, scheme: PathScheme, config: AttackConfig,
                    rng: np.random.Generator, trigger_gate: Optional[Callable[[], bool]] = None,
                    decoys: int = 0) -> list[Sample]:
    """Repeat prime, trigger, probe ``samples_per_byte`` times with fresh plaintexts.

    ``trigger_gate`` is consulted before each victim run; when it returns
    False the victim does not execute and the probe sees only its own lines.
    """
    target = list(config.target_sets) or identify_target_sets(layout, cache.geometry)
    samples = []
    for _ in range(config.samples_per_byte):
        prime(cache, target, config.permissive_probe)
        plaintext = rng.bytes(KEY_BYTES)
        ran = trigger_gate is None or trigger_gate()
        if ran:
            trigger_victim(key, layout, plaintext, cache, decoys=decoys, rng=rng)
        samples.append(Sample(plaintext, probe(cache, params, scheme, target, config, rng), ran))
    return samples


def analyze(samples: Sequence[Sample], layout: TableLayout, geometry: CacheGeometry,
            key: Optional[VictimKey] = None) -> AttackResult:
    """Rank every high-bit guess of each key byte by how often its predicted set was evicted.

    For guess ``g`` the lookup of byte ``i`` is predicted to land in the set of
    entry ``plaintext[i] ^ (g << low_bits)``; its score is the fraction of
    samples in which that set was observed evicted.  Candidates are sorted by
    descending score, ties by ascending guess.  ``success`` is filled in only
    when the true ``key`` is supplied.
    """
    if not samples:
        raise InsufficientData("analysis needs at least one sample")
    bits = recoverable_bits(layout, geometry)
    low_bits = 8 - bits
    guesses = np.arange(1 << bits)

    observed = np.zeros((len(samples), geometry.num_sets), dtype=np.int64)
    for row, sample in enumerate(samples):
        for obs in sample.observations:
            observed[row, obs.set_index] = obs.evicted
    plaintexts = np.frombuffer(b"".join(s.plaintext for s in samples), dtype=np.uint8)
    plaintexts = plaintexts.reshape(len(samples), KEY_BYTES).astype(np.int64)
    rows = np.arange(len(samples))[:, None]

    per_byte = []
    for i in range(KEY_BYTES):
        entries = plaintexts[:, i, None] ^ (guesses[None, :] << low_bits)
        addresses = layout.table_for_byte(i) + entries * layout.entry_size
        predicted = (addresses // geometry.line_size) % geometry.num_sets
        counts = observed[rows, predicted].sum(axis=0)
        order = sorted(range(len(guesses)), key=lambda g: (-counts[g], g))
        ranked = [(int(g), float(counts[g]) / len(samples)) for g in order]
        per_byte.append(ByteResult(ranked, ranked[0][0]))

    result = AttackResult(per_byte, len(samples), bits)
    if key is not None:
        result.success = all(b.recovered_high_bits == high_bits(key[i], bits)
                             for i, b in enumerate(per_byte))
    return result


def true_guess_ranks(result: AttackResult, key: VictimKey) -> list[int]:
    """Zero-based position of the correct high bits in each byte's ranking."""
    return [b.rank_of(high_bits(key[i], result.bits)) for i, b in enumerate(result.per_byte)]


def chance_interval(events: int, bits: int, confidence: float = 0.99) -> tuple[int, int]:
    """Exact binomial interval on correct top-1 guesses for a blind attacker."""
    lo, hi = stats.binom.interval(confidence, events, 1.0 / (1 << bits))
    return int(lo), int(hi)


def world_distinguisher(transfers: Sequence[tuple[WorldTag, int]], split: float = 0.5) -> float:
    """Held-out accuracy of a midpoint-threshold REE/TEE classifier.

    The first ``split`` fraction of ``transfers`` trains the threshold (the
    midpoint of the per-world mean latencies); the rest is classified.  A test
    point lying exactly on the threshold, or any point when both means are
    equal, counts as half correct.
    """
    if not 0.0 < split < 1.0:
        raise ValueError("split must lie strictly between 0 and 1")
    worlds = np.array([w is WorldTag.TEE for w, _ in transfers], dtype=bool)
    cycles = np.array([c for _, c in transfers], dtype=np.float64)
    cut = int(len(transfers) * split)
    train_w, train_c = worlds[:cut], cycles[:cut]
    test_w, test_c = worlds[cut:], cycles[cut:]
    for label, name in ((True, "TEE"), (False, "REE")):
        if np.count_nonzero(train_w == label) < 2 or np.count_nonzero(test_w == label) < 1:
            raise InsufficientData(f"need at least two {name} observations in training and one held out")

    tee_mean = train_c[train_w].mean()
    ree_mean = train_c[~train_w].mean()
    if tee_mean == ree_mean:
        return 0.5
    threshold = (tee_mean + ree_mean) / 2.0
    says_tee = test_c > threshold if tee_mean > ree_mean else test_c < threshold
    credit = np.where(test_c == threshold, 0.5, (says_tee == test_w).astype(np.float64))
    return float(credit.mean())
