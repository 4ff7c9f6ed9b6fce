"""Behavioral simulator for conflict-based side-channel attacks and
defenses on randomized set-associative and skewed last-level caches."""

from .analytics import (AttackTimeEstimate, expected_attack_time, mc_collect,
                        mc_conflict_lru, mc_eviction_rate, p_collect,
                        p_conflict_lru)
from .attacks import (AttackerView, EvictionSet, SearchBudget, SearchResult,
                      ct_search, eviction_test, ge_search,
                      measure_eviction_rate, ppt_search)
from .detector import Detector, DetectorConfig, WindowReport
from .harness import (CampaignSpec, TraceFormatError, TraceReport,
                      replay_trace, run_campaign, sample_congruent, write_csv)
from .hierarchy import (L1_HIT, LLC_HIT, MISS, AccessOutcome, CacheConfig,
                        ConfigError, CounterSnapshot, Hierarchy)
from .indexing import IndexKey, derive_index, fresh_key, index_tuple
from .remap import (ACCESSES, EVICTIONS, MULTI_STEP, SINGLE_STEP,
                    RemapContractError, RemapEngine, RemapPolicy, RemapState)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
