"""Scenario loading, seeded trial execution, parameter sweeps and report output.

A scenario is a single JSON document; unknown keys are rejected.  Trial ``k``
of a run with master seed ``s`` draws from ``numpy.random.SeedSequence(s + k)``
split into three child streams (key, attack, distinguisher), so any trial can
be replayed on its own.  Reports are serialised with sorted keys; wall-clock
time is kept out of the report document and written to a sidecar instead.
"""

from __future__ import annotations

import copy
import csv
import hashlib
import io
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .atp import ATP, Role, SecureStore, SubjectIdentity, default_registry
from .attacker import (
    AttackConfig,
    analyze,
    collect_samples,
    high_bits,
    identify_target_sets,
    true_guess_ranks,
    world_distinguisher,
)
from .cache_model import (
    CacheGeometry,
    CacheState,
    HardwareWaySplit,
    Shared,
    SoftwareSetAllocation,
    WorldTag,
)
from .datapath import (
    Direction,
    LatencyParameters,
    PathScheme,
    equalization_gap,
    labeled_transfers,
    path_cost,
)
from .errors import ConfigError, IoError, LayoutError, PolicyViolation, UnknownParameter
from .victim import KEY_BYTES, TableLayout, VictimKey, check_layout_against, recoverable_bits

DEFAULTS: dict[str, Any] = {
    "geometry": {"num_sets": 256, "associativity": 8, "line_size": 64},
    "policy": {"kind": "shared", "tee_ways": 4, "tee_sets": [128, 256]},
    "latency": {
        "dram_cycles": 200,
        "cache_hit_cycles": 4,
        "aes_decrypt_cycles": 40,
        "aes_encrypt_cycles": 40,
        "cta_delay_cycles": 40,
        "parallel_units": 1,
        "jitter_max": 0,
    },
    "scheme": "baseline",
    "victim": {
        "table_bases": [0x2000, 0x2400, 0x2800, 0x2C00],
        "entry_size": 4,
        "key": "random",
        "decoys": 0,
    },
    "attack": {
        "samples_per_byte": 200,
        "probe_threshold_cycles": 100,
        "noise_flip_probability": 0.0,
        "permissive_probe": False,
    },
    "distinguisher": {"transfers": 2000, "train_fraction": 0.5, "hit_probability": 0.0},
    "atp": {"ttl": 100, "token_gated_trigger": False},
    "trials": 1,
    "seed": 0,
}

POLICY_KINDS = ("shared", "hardware_way_split", "software_set_allocation")

CSV_HEADER = [
    "report", "trial", "seed", "key", "success", "blocked", "victim_runs",
    "recovered_high_bits", "mean_true_rank", "correct_bytes",
    "cross_world_evictions", "distinguisher_accuracy",
]


def _merge(defaults, given, path=""):
    if not isinstance(given, dict):
        raise ConfigError(path or "<root>", "expected a JSON object")
    merged = copy.deepcopy(defaults)
    for key, value in given.items():
        where = f"{path}.{key}" if path else key
        if key not in defaults:
            raise ConfigError(where, "unknown key")
        if isinstance(defaults[key], dict):
            merged[key] = _merge(defaults[key], value, where)
        else:
            merged[key] = value
    return merged


@dataclass
class ScenarioConfig:
    """Validated scenario plus the plain document it came from."""

    document: dict[str, Any]
    geometry: CacheGeometry = field(init=False)
    policy: Any = field(init=False)
    latency: LatencyParameters = field(init=False)
    scheme: PathScheme = field(init=False)
    layout: TableLayout = field(init=False)
    attack: AttackConfig = field(init=False)

    def __post_init__(self):
        doc = self.document
        self.geometry = _build("geometry", lambda: CacheGeometry(**doc["geometry"]))
        self.policy = _build("policy", lambda: _policy(doc["policy"], self.geometry))
        self.latency = _build("latency", lambda: LatencyParameters(**doc["latency"]))
        self.scheme = _build("scheme", lambda: PathScheme(doc["scheme"]))
        victim = doc["victim"]
        self.layout = _build("victim.table_bases", lambda: TableLayout(
            tuple(int(b) for b in victim["table_bases"]), int(victim["entry_size"])))
        _build("victim.table_bases", lambda: self.layout.validate(self.geometry))
        if victim["key"] != "random":
            _build("victim.key", lambda: VictimKey.from_hex(victim["key"]))
        _check(isinstance(victim["decoys"], int) and victim["decoys"] >= 0,
               "victim.decoys", "must be a non-negative integer")
        attack = doc["attack"]
        self.attack = _build("attack", lambda: AttackConfig(
            samples_per_byte=int(attack["samples_per_byte"]),
            probe_threshold_cycles=int(attack["probe_threshold_cycles"]),
            noise_flip_probability=float(attack["noise_flip_probability"]),
            target_sets=tuple(identify_target_sets(self.layout, self.geometry)),
            permissive_probe=bool(attack["permissive_probe"]),
        ))
        hit = self.latency.cache_hit_cycles + path_cost(self.latency, self.scheme, WorldTag.REE)
        miss = self.latency.dram_cycles + path_cost(self.latency, self.scheme, WorldTag.REE)
        _check(hit < self.attack.probe_threshold_cycles < miss, "attack.probe_threshold_cycles",
               f"must lie strictly between the REE hit ({hit}) and miss ({miss}) latencies")
        dist = doc["distinguisher"]
        _check(isinstance(dist["transfers"], int) and dist["transfers"] >= 0,
               "distinguisher.transfers", "must be a non-negative integer")
        _check(0.0 < dist["train_fraction"] < 1.0, "distinguisher.train_fraction", "must lie in (0, 1)")
        _check(0.0 <= dist["hit_probability"] <= 1.0, "distinguisher.hit_probability", "must lie in [0, 1]")
        _check(isinstance(doc["atp"]["ttl"], int) and doc["atp"]["ttl"] > 0, "atp.ttl", "must be a positive integer")
        _check(isinstance(doc["trials"], int) and doc["trials"] >= 0, "trials", "must be a non-negative integer")
        _check(isinstance(doc["seed"], int) and 0 <= doc["seed"] < 2**64, "seed", "must be a 64-bit unsigned integer")

    @classmethod
    def from_dict(cls, given: dict[str, Any]) -> "ScenarioConfig":
        return cls(_merge(DEFAULTS, given))

    @classmethod
    def from_file(cls, path: str | Path) -> "ScenarioConfig":
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise IoError(f"cannot read config {path}: {exc}") from exc
        try:
            return cls.from_dict(json.loads(text))
        except json.JSONDecodeError as exc:
            raise ConfigError("<root>", f"invalid JSON: {exc}") from exc

    def to_dict(self) -> dict[str, Any]:
        return copy.deepcopy(self.document)

    def with_seed(self, seed: int) -> "ScenarioConfig":
        doc = self.to_dict()
        doc["seed"] = seed
        return ScenarioConfig(doc)

    @property
    def digest(self) -> str:
        canonical = json.dumps(self.document, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode()).hexdigest()


def _check(ok, field_name, message):
    if not ok:
        raise ConfigError(field_name, message)


def _build(field_name, fn):
    try:
        return fn()
    except ConfigError:
        raise
    except (TypeError, ValueError, KeyError, LayoutError) as exc:
        raise ConfigError(field_name, str(exc)) from exc


def _policy(doc, geometry):
    kind = doc["kind"]
    if kind == "shared":
        policy = Shared()
    elif kind == "hardware_way_split":
        policy = HardwareWaySplit(int(doc["tee_ways"]))
    elif kind == "software_set_allocation":
        start, stop = doc["tee_sets"]
        policy = SoftwareSetAllocation(int(start), int(stop))
    else:
        raise ValueError(f"kind must be one of {POLICY_KINDS}, got {kind!r}")
    policy.validate(geometry)
    return policy


# -- trials --------------------------------------------------------------------


def trial_streams(seed: int, index: int) -> list[np.random.Generator]:
    """Independent (key, attack, distinguisher) generators for one trial."""
    children = np.random.SeedSequence(seed + index).spawn(3)
    return [np.random.default_rng(c) for c in children]


def run_trial(config: ScenarioConfig, index: int) -> dict[str, Any]:
    doc = config.document
    seed = doc["seed"] + index
    key_rng, attack_rng, dist_rng = trial_streams(doc["seed"], index)
    if doc["victim"]["key"] == "random":
        key = VictimKey.random(key_rng)
    else:
        key = VictimKey.from_hex(doc["victim"]["key"])

    cache = CacheState(config.geometry, config.policy)
    gate = None
    if doc["atp"]["token_gated_trigger"]:
        # The attacker never authenticates, so it holds no token to present.
        atp = ATP(SecureStore(), default_registry(), SubjectIdentity("ta", Role.TA), key_rng)
        gate = lambda: atp.trigger_gate(None)  # noqa: E731

    row: dict[str, Any] = {
        "trial": index, "seed": seed, "key": key.hex(), "blocked": None,
        "success": False, "victim_runs": 0, "recovered_high_bits": None,
        "true_ranks": None, "cross_world_evictions": 0,
    }
    bits = recoverable_bits(config.layout, config.geometry)
    try:
        check_layout_against(config.layout, cache)
        samples = collect_samples(cache, key, config.layout, config.latency, config.scheme,
                                  config.attack, attack_rng, trigger_gate=gate,
                                  decoys=doc["victim"]["decoys"])
    except (PolicyViolation, LayoutError) as exc:
        row["blocked"] = type(exc).__name__
    else:
        row["victim_runs"] = sum(s.victim_ran for s in samples)
        if samples:
            result = analyze(samples, config.layout, config.geometry, key)
            row["success"] = bool(result.success)
            row["recovered_high_bits"] = result.recovered()
            row["true_ranks"] = true_guess_ranks(result, key)
    row["cross_world_evictions"] = cache.cross_world_evictions
    row["true_high_bits"] = [high_bits(key[i], bits) for i in range(KEY_BYTES)]

    dist = doc["distinguisher"]
    row["distinguisher_accuracy"] = None
    if dist["transfers"]:
        transfers = labeled_transfers(config.latency, config.scheme, dist["transfers"], dist_rng,
                                      hit_probability=dist["hit_probability"])
        row["distinguisher_accuracy"] = world_distinguisher(transfers, dist["train_fraction"])
    return row


def _run_trial_args(args):
    document, index = args
    return run_trial(ScenarioConfig(document), index)


@dataclass
class TrialReport:
    document: dict[str, Any]
    wall_clock_seconds: float = 0.0

    @property
    def success_rate(self):
        return self.document["success_rate"]

    @property
    def trials(self) -> list[dict[str, Any]]:
        return self.document["per_trial"]

    def to_json(self) -> str:
        return json.dumps(self.document, sort_keys=True, indent=2) + "\n"


def _aggregate(config: ScenarioConfig, rows: list[dict[str, Any]]) -> dict[str, Any]:
    ranked = [r["true_ranks"] for r in rows if r["true_ranks"] is not None]
    per_byte_rank = np.mean(ranked, axis=0).tolist() if ranked else []
    correct = sum(r == 0 for ranks in ranked for r in ranks)
    accuracies = [r["distinguisher_accuracy"] for r in rows if r["distinguisher_accuracy"] is not None]
    return {
        "config": config.document,
        "config_digest": config.digest,
        "seed": config.document["seed"],
        "trials": len(rows),
        "successes": sum(r["success"] for r in rows),
        "success_rate": (sum(r["success"] for r in rows) / len(rows)) if rows else None,
        "mean_true_rank_per_byte": per_byte_rank,
        "mean_true_rank": float(np.mean(ranked)) if ranked else None,
        "byte_events": 16 * len(ranked),
        "top1_correct": int(correct),
        "top1_accuracy": correct / (16 * len(ranked)) if ranked else None,
        "blocked_trials": sum(r["blocked"] is not None for r in rows),
        "cross_world_evictions_total": sum(r["cross_world_evictions"] for r in rows),
        "equalization_gap": {
            "read": equalization_gap(config.latency, config.scheme),
            "write": equalization_gap(config.latency, config.scheme, direction=Direction.WRITE),
        },
        "recoverable_bits": recoverable_bits(config.layout, config.geometry),
        "distinguisher_accuracy": float(np.mean(accuracies)) if accuracies else None,
        "per_trial": rows,
    }


def run_scenario(config: ScenarioConfig, workers: int = 1) -> TrialReport:
    """Run every trial of ``config`` and aggregate in trial order.

    ``workers > 1`` spreads trials over processes; output is identical to the
    serial run.
    """
    start = time.perf_counter()
    n = config.document["trials"]
    if workers > 1 and n > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_run_trial_args, [(config.document, i) for i in range(n)]))
    else:
        rows = [run_trial(config, i) for i in range(n)]
    return TrialReport(_aggregate(config, rows), time.perf_counter() - start)


def _parent(document: dict[str, Any], path: str) -> tuple[dict[str, Any], str]:
    *parents, leaf = path.split(".")
    node = document
    for part in parents:
        node = node.get(part) if isinstance(node, dict) else None
    if not isinstance(node, dict) or leaf not in node:
        raise UnknownParameter(path, "no such parameter")
    return node, leaf


def set_parameter(document: dict[str, Any], path: str, value: Any) -> dict[str, Any]:
    doc = copy.deepcopy(document)
    node, leaf = _parent(doc, path)
    node[leaf] = value
    return doc


def sweep(config: ScenarioConfig, path: str, values: Sequence[Any], workers: int = 1) -> list[TrialReport]:
    """One report per value of the dotted ``path``, in the order given.

    ``policy`` may be swept with bare kind names (``"shared"``) as well as
    full policy objects.
    """
    if path == "policy":
        values = [{**config.document["policy"], "kind": v} if isinstance(v, str) else v for v in values]
    _parent(config.document, path)
    reports = []
    for value in values:
        reports.append(run_scenario(ScenarioConfig.from_dict(set_parameter(config.document, path, value)), workers))
    return reports


# -- output --------------------------------------------------------------------


def report_rows(reports: Sequence[TrialReport]) -> list[list[Any]]:
    rows = []
    for r_index, report in enumerate(reports):
        for t in report.trials:
            ranks = t["true_ranks"]
            rows.append([
                r_index, t["trial"], t["seed"], t["key"], int(t["success"]), t["blocked"] or "",
                t["victim_runs"],
                "" if t["recovered_high_bits"] is None else " ".join(map(str, t["recovered_high_bits"])),
                "" if ranks is None else repr(float(np.mean(ranks))),
                "" if ranks is None else sum(r == 0 for r in ranks),
                t["cross_world_evictions"],
                "" if t["distinguisher_accuracy"] is None else repr(t["distinguisher_accuracy"]),
            ])
    return rows


def render(reports: TrialReport | Sequence[TrialReport], fmt: str) -> str:
    single = isinstance(reports, TrialReport)
    reports = [reports] if single else list(reports)
    if fmt == "json":
        if single:
            return reports[0].to_json()
        return json.dumps([r.document for r in reports], sort_keys=True, indent=2) + "\n"
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        writer.writerows(report_rows(reports))
        return buf.getvalue()
    raise ValueError(f"unknown report format {fmt!r}")


def emit_report(reports: TrialReport | Sequence[TrialReport], fmt: str, destination: str | Path) -> Path:
    text = render(reports, fmt)
    destination = Path(destination)
    try:
        destination.write_text(text)
    except OSError as exc:
        raise IoError(f"cannot write {destination}: {exc}") from exc
    return destination


def load_reports(path: str | Path) -> list[TrialReport]:
    """Read a report file written in JSON format (single report or list)."""
    try:
        data = json.loads(Path(path).read_text())
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise IoError(f"{path} is not a JSON report: {exc}") from exc
    if isinstance(data, dict):
        data = [data]
    return [TrialReport(d) for d in data]
