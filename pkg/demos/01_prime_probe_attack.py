"""
Prime+probe against a TEE table lookup
=======================================

Walks through the attack by hand on a shared cache: find the victim's sets,
prime them, let the victim run once, probe, and repeat until the key's high
nibbles fall out of the eviction statistics.
"""

import numpy as np

from truspy_sim.attacker import (
    AttackConfig,
    analyze,
    collect_samples,
    identify_target_sets,
    prime,
    probe,
)
from truspy_sim.cache_model import CacheGeometry, CacheState, Shared
from truspy_sim.datapath import LatencyParameters, PathScheme
from truspy_sim.victim import TableLayout, VictimKey, recoverable_bits, trigger_victim

geometry = CacheGeometry(num_sets=256, associativity=8, line_size=64)
layout = TableLayout()  # four 1 KiB tables starting at set 128
params = LatencyParameters()
key = VictimKey.from_hex("2b7e151628aed2a6abf7158809cf4f3c")
rng = np.random.default_rng(0)

targets = identify_target_sets(layout, geometry)
print(f"victim tables cover sets {targets[0]}..{targets[-1]} ({len(targets)} sets)")
print(f"a line-granular observer can learn {recoverable_bits(layout, geometry)} bits per key byte")

###############################################################################
# One round, step by step

cache = CacheState(geometry, Shared())
print("primed lines:", prime(cache, targets))
trigger_victim(key, layout, bytes(16), cache)
observations = probe(cache, params, PathScheme.BASELINE, targets, AttackConfig(), rng)
print("sets that lost a line:", [o.set_index for o in observations if o.evicted])

###############################################################################
# Many rounds, then rank the guesses

config = AttackConfig(samples_per_byte=200, probe_threshold_cycles=100)
samples = collect_samples(cache, key, layout, params, PathScheme.BASELINE, config, rng)
result = analyze(samples, layout, geometry, key)
print("recovered high nibbles:", " ".join(f"{b:x}" for b in result.recovered()))
print("true high nibbles:     ", " ".join(f"{b >> 4:x}" for b in key.bytes))
print("success:", result.success)
print("byte 0 top three:", result.per_byte[0].ranked_candidates[:3])
