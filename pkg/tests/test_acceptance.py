"""Exit criteria for the simulator, one test per criterion.

Each test records a PASS/FAIL line that is printed in the pytest terminal
summary (see ``conftest.py``).
"""

import time

import numpy as np
import pytest

from oracles import ReferenceLRU, ceil_div
from truspy_sim.atp import (
    ATP,
    IvpFailure,
    Role,
    SecureStore,
    SubjectIdentity,
    Triple,
    TripleRegistry,
    UnconstrainedItem,
    default_registry,
    ta_direct_access,
    tp_mask,
)
from truspy_sim.attacker import chance_interval, prime, world_distinguisher
from truspy_sim.cache_model import (
    CacheGeometry,
    CacheState,
    HardwareWaySplit,
    Shared,
    SoftwareSetAllocation,
    WorldTag,
)
from truspy_sim.datapath import LatencyParameters, PathScheme, equalization_gap, labeled_transfers
from truspy_sim.errors import PolicyViolation, TokenInvalid, TripleDenied
from truspy_sim.harness import ScenarioConfig, run_scenario
from truspy_sim.victim import TableLayout

RESULTS: list[str] = []

BASE = {
    "geometry": {"num_sets": 256, "associativity": 8, "line_size": 64},
    "victim": {"entry_size": 4, "key": "random"},
    "attack": {"samples_per_byte": 200, "noise_flip_probability": 0.0},
    "latency": {"jitter_max": 0},
    "distinguisher": {"transfers": 0},
    "trials": 20,
    "seed": 2024,
}


def config(**sections):
    doc = {k: dict(v) if isinstance(v, dict) else v for k, v in BASE.items()}
    for key, value in sections.items():
        if isinstance(value, dict):
            doc.setdefault(key, {}).update(value)
        else:
            doc[key] = value
    return ScenarioConfig.from_dict(doc)


def verdict(number, title, ok, detail):
    RESULTS.append(f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {title} ({detail})")
    assert ok, detail


def test_1_baseline_attack_succeeds():
    start = time.perf_counter()
    report = run_scenario(config(policy={"kind": "shared"}))
    elapsed = time.perf_counter() - start
    doc = report.document
    ok = doc["success_rate"] == 1.0 and doc["trials"] == 20 and elapsed < 30.0
    verdict(1, "shared-cache attack recovers every key", ok,
            f"success_rate={doc['success_rate']} over {doc['trials']} keys in {elapsed:.1f}s")


def test_2_hardware_split_defeats_attack():
    report = run_scenario(config(policy={"kind": "hardware_way_split", "tee_ways": 4}))
    doc = report.document
    events = doc["byte_events"]
    lo, hi = chance_interval(events, doc["recoverable_bits"], 0.99)
    evictions = [t["cross_world_evictions"] for t in report.trials]
    ok = all(e == 0 for e in evictions) and events >= 320 and lo <= doc["top1_correct"] <= hi
    verdict(2, "hardware way split leaves only chance recovery", ok,
            f"cross-world evictions per trial max={max(evictions)}, top1 {doc['top1_correct']}/{events}"
            f" in 99% interval [{lo}, {hi}]")


def test_3_software_allocation_defeats_attack():
    geometry = CacheGeometry()
    cache = CacheState(geometry, SoftwareSetAllocation(128, 256))
    layout = TableLayout()
    assert all(128 <= s < 256 for b in layout.table_base_addresses for s in layout.table_sets(b, geometry))
    with pytest.raises(PolicyViolation):
        prime(cache, range(128, 192))
    policy = {"kind": "software_set_allocation", "tee_sets": [128, 256]}
    strict = run_scenario(config(policy=policy))
    blocked = {t["blocked"] for t in strict.trials}
    permissive = run_scenario(config(policy=policy, attack={"permissive_probe": True}))
    doc = permissive.document
    lo, hi = chance_interval(doc["byte_events"], doc["recoverable_bits"], 0.99)
    ok = (blocked == {"PolicyViolation"} and doc["cross_world_evictions_total"] == 0
          and doc["byte_events"] >= 320 and lo <= doc["top1_correct"] <= hi)
    verdict(3, "software set allocation blocks priming", ok,
            f"strict trials blocked by {sorted(blocked)}; permissive top1 {doc['top1_correct']}/"
            f"{doc['byte_events']} in [{lo}, {hi}]")


def test_4_timing_equalization():
    cta = LatencyParameters(aes_decrypt_cycles=40, cta_delay_cycles=40, jitter_max=8)
    gap = equalization_gap(cta, PathScheme.CTA_DELAY)
    accs = [world_distinguisher(labeled_transfers(cta, PathScheme.CTA_DELAY, 10_000, np.random.default_rng(s)))
            for s in range(20)]
    base = LatencyParameters(jitter_max=0)
    base_acc = world_distinguisher(labeled_transfers(base, PathScheme.BASELINE, 10_000, np.random.default_rng(0)))
    ok = gap == 0 and all(0.45 <= a <= 0.55 for a in accs) and base_acc == 1.0
    verdict(4, "CTA delay equalizes REE and TEE paths", ok,
            f"gap={gap}, equalized accuracy in [{min(accs):.4f}, {max(accs):.4f}] over 20 seeds, "
            f"baseline accuracy={base_acc}")


def test_5_parallel_crypto_gap():
    units = [1, 2, 4, 8, 16, 32, 64]
    rows = []
    for aes in (1, 25, 40, 64, 100, 255):
        gaps = [equalization_gap(LatencyParameters(aes_decrypt_cycles=aes, parallel_units=u),
                                 PathScheme.PARALLEL_CRYPTO) for u in units]
        rows.append((gaps, [ceil_div(aes, u) for u in units]))
    ok = all(g == c and all(a >= b for a, b in zip(g, g[1:])) for g, c in rows)
    verdict(5, "parallel crypto gap follows the ceiling law", ok,
            f"aes=40 gaps {rows[2][0]} vs ceiling oracle {rows[2][1]}")


def test_6_atp_integrity_suite():
    rng = np.random.default_rng(99)
    ta = SubjectIdentity("ta", Role.TA)
    app = SubjectIdentity("app", Role.APP, b"pin-0000")
    atp = ATP(SecureStore(), default_registry(), ta, rng)
    session = atp.authenticate_subject(app, b"pin-0000")

    round_trips = 0
    for i in range(1000):
        token = atp.issue_token(session, ttl=50)
        data = rng.bytes(int(rng.integers(1, 80)))
        address = 0x1000 + 16 * (i % 200)
        atp.write_secure(app, token, UnconstrainedItem(tp_mask(data, token), token), address)
        round_trips += tp_mask(atp.read_secure(app, token, address), token) == data

    reasons = {}
    stale = atp.issue_token(session, ttl=5)
    live = atp.issue_token(session, ttl=5)
    for name, presented, expected in (("replaced", stale, IvpFailure.MISMATCH),
                                      ("mismatched", type(live)(bytes([live.nonce[0] ^ 0x80]) + live.nonce[1:],
                                                                live.subject_id, live.issued_at, live.expires_at),
                                       IvpFailure.MISMATCH)):
        try:
            atp.read_secure(app, presented, 0x1000)
        except TokenInvalid as exc:
            reasons[name] = exc.reason is expected
    atp.store.advance(5)
    try:
        atp.read_secure(app, live, 0x1000)
    except TokenInvalid as exc:
        reasons["expired"] = exc.reason is IvpFailure.EXPIRED

    ta_direct_access(ta, 0x1F00, atp.store, b"ta-data")
    ta_ok = ta_direct_access(ta, 0x1F00, atp.store) == b"ta-data" and ta_direct_access(ta, 0x1000, atp.store)

    fresh = ATP(SecureStore(), default_registry(), ta, rng)
    ta_direct_access(ta, 0x1000, fresh.store, b"guarded")
    fresh.store.access_log.clear()
    for presented in (None, stale, live):
        with pytest.raises(TokenInvalid):
            fresh.read_secure(app, presented, 0x1000)
        with pytest.raises(TokenInvalid):
            fresh.write_secure(app, presented, UnconstrainedItem(b"evil", live), 0x1000)
    untouched = fresh.store.access_log == [] and fresh.store.data[0x1000].payload == b"guarded"

    registry = TripleRegistry()
    for op in ("read", "write"):
        registry.certify(Triple(Role.APP, op, "secure_data"), "app")
    sod = ATP(SecureStore(), registry, ta, rng)
    sod_token = sod.issue_token(sod.authenticate_subject(app, b"pin-0000"), 10)
    denials = 0
    for triple in registry.entries:
        try:
            if triple.operation == "write":
                sod.write_secure(app, sod_token, UnconstrainedItem(b"x", sod_token), 0x1000)
            else:
                sod.read_secure(app, sod_token, 0x1000)
        except TripleDenied:
            denials += 1

    ok = (round_trips == 1000 and reasons == {"replaced": True, "mismatched": True, "expired": True}
          and bool(ta_ok) and untouched and denials == len(registry.entries))
    verdict(6, "ATP tokens, IVP, TA bypass and separation of duty", ok,
            f"round trips {round_trips}/1000, denial reasons {reasons}, TA bypass={bool(ta_ok)}, "
            f"untokened log empty={untouched}, SoD denials {denials}/{len(registry.entries)}")


def test_7_lru_oracle_equivalence():
    g = CacheGeometry(4, 4, 16)
    policies = [Shared(), HardwareWaySplit(1), HardwareWaySplit(2), SoftwareSetAllocation(2, 4)]
    rng = np.random.default_rng(7)
    mismatches = 0
    for n in range(10_000):
        policy = policies[n % len(policies)]
        cache, ref = CacheState(g, policy), ReferenceLRU(4, 4, 16, policy)
        for _ in range(40):
            world = WorldTag.TEE if rng.random() < 0.5 else WorldTag.REE
            s = int(rng.integers(4))
            if isinstance(policy, SoftwareSetAllocation):
                s = 2 + s % 2 if world is WorldTag.TEE else s % 2
            address = (int(rng.integers(10)) * 4 + s) * 16
            rec = cache.access(world, address)
            if (rec.outcome.value, rec.evicted_world and rec.evicted_world.value) != ref.access(world.value, address):
                mismatches += 1
        mismatches += cache.cross_world_evictions != ref.cross
    verdict(7, "cache matches brute-force LRU reference", mismatches == 0,
            f"10000 sequences x 40 accesses, {mismatches} mismatches")


def test_8_determinism():
    cfg = config(trials=6, attack={"samples_per_byte": 60, "noise_flip_probability": 0.1},
                 latency={"jitter_max": 8}, distinguisher={"transfers": 500})
    serial_a = run_scenario(cfg).to_json()
    serial_b = run_scenario(cfg).to_json()
    parallel = run_scenario(cfg, workers=3).to_json()
    ok = serial_a == serial_b == parallel
    verdict(8, "fixed config and seed give byte-identical reports", ok,
            f"{len(serial_a)} bytes, serial/serial/parallel identical={ok}")


def test_9_noise_monotonicity():
    flips = [0.0, 0.1, 0.25, 0.4]
    ranks = []
    for p in flips:
        report = run_scenario(config(attack={"samples_per_byte": 30, "noise_flip_probability": p}))
        ranks.append(report.document["mean_true_rank"])
    ok = all(a <= b for a, b in zip(ranks, ranks[1:]))
    verdict(9, "true-guess rank degrades with flip noise", ok,
            "mean rank " + ", ".join(f"p={p}: {r:.4f}" for p, r in zip(flips, ranks)) + " (30 samples, 20 seeds)")
