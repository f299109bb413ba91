"""Two-world cache side-channel simulator with partitioning, timing and token defences."""

from .attacker import (
    AttackConfig,
    AttackResult,
    analyze,
    collect_samples,
    identify_target_sets,
    prime,
    probe,
    world_distinguisher,
)
from .atp import ATP, Role, SecureStore, SubjectIdentity, Token, TripleRegistry, tp_mask
from .cache_model import (
    CacheGeometry,
    CacheState,
    HardwareWaySplit,
    Shared,
    SoftwareSetAllocation,
    WorldTag,
    set_index_of,
)
from .datapath import LatencyParameters, PathScheme, equalization_gap, select_path
from .harness import ScenarioConfig, run_scenario, sweep
from .victim import TableLayout, VictimKey, recoverable_bits, trigger_victim

__version__ = "0.1.0"
