"""
Zero-contention partitions
==========================

Runs the same attack against the shared cache, a hardware way split and a
software set allocation, and compares recovery with the chance level.
"""

from truspy_sim.attacker import chance_interval
from truspy_sim.harness import ScenarioConfig, run_scenario

policies = {
    "shared": {"kind": "shared"},
    "way split (4 TEE ways)": {"kind": "hardware_way_split", "tee_ways": 4},
    "set allocation [128, 256)": {"kind": "software_set_allocation", "tee_sets": [128, 256]},
}

for name, policy in policies.items():
    config = ScenarioConfig.from_dict({
        "policy": policy,
        "attack": {"samples_per_byte": 100, "permissive_probe": True},
        "distinguisher": {"transfers": 0},
        "trials": 10,
        "seed": 1,
    })
    doc = run_scenario(config).document
    lo, hi = chance_interval(doc["byte_events"], doc["recoverable_bits"])
    print(f"{name:28s} success={doc['success_rate']:.2f} "
          f"top1={doc['top1_correct']}/{doc['byte_events']} (chance 99%: {lo}-{hi}) "
          f"cross-world evictions={doc['cross_world_evictions_total']}")

###############################################################################
# Without the permissive probe, the set allocation refuses the prime outright.

strict = ScenarioConfig.from_dict({"policy": policies["set allocation [128, 256)"], "trials": 2})
print({t["blocked"] for t in run_scenario(strict).trials})
