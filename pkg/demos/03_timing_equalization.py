"""
Equalizing the REE and TEE data paths
=====================================

Measures how well a threshold classifier tells REE loads from TEE loads
under each path scheme, and how the parallel-crypto gap shrinks with more
AES engines.
"""

import numpy as np

from truspy_sim.attacker import world_distinguisher
from truspy_sim.datapath import LatencyParameters, PathScheme, equalization_gap, labeled_transfers

params = LatencyParameters(aes_decrypt_cycles=40, cta_delay_cycles=40, parallel_units=8, jitter_max=8)

for scheme in PathScheme:
    transfers = labeled_transfers(params, scheme, 10_000, np.random.default_rng(3))
    print(f"{scheme.value:16s} gap={equalization_gap(params, scheme):3d} "
          f"distinguisher accuracy={world_distinguisher(transfers):.3f}")

###############################################################################
# Parallel engines: the gap is the ceiling of aes / units.

for units in (1, 2, 4, 8, 16, 32, 64):
    p = LatencyParameters(aes_decrypt_cycles=40, parallel_units=units)
    print(f"units={units:2d} gap={equalization_gap(p, PathScheme.PARALLEL_CRYPTO)}")
