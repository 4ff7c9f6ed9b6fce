"""Inclusive two-level cache hierarchy with a randomized, optionally
skewed last-level cache.

Each core owns a private L1 indexed by low address bits; all cores share
the LLC.  The LLC's W ways are split into K partitions of W/K ways, each
partition indexed independently by the keyed index function.  A fill
picks its partition uniformly at random and the victim inside the
partition-set by the replacement policy.  Inclusion is maintained by
back-invalidating L1 copies whenever the LLC drops a block.

Addresses are synthetic 64-bit line addresses; there is no timing model.
The only externally observable signal is the level an access was served
from, which is what a latency-measuring attacker can distinguish.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from typing import NamedTuple

from .detector import Detector, DetectorConfig
from .indexing import index_tuple, mix64
from .remap import RemapEngine, RemapPolicy

L1_HIT = 0
LLC_HIT = 1
MISS = 2

_LEVEL_NAMES = {L1_HIT: "L1_HIT", LLC_HIT: "LLC_HIT", MISS: "MISS"}


class ConfigError(ValueError):
    pass


@dataclass
class CacheConfig:
    """Geometry and policy knobs of the simulated hierarchy."""

    llc_sets: int = 1024
    llc_ways: int = 16
    partitions: int = 1
    replacement: str = "lru"     # "lru" | "random"
    l1_sets: int = 64
    l1_ways: int = 8
    cores: int = 2

    def __post_init__(self):
        if self.llc_sets < 1 or self.llc_sets & (self.llc_sets - 1):
            raise ConfigError("llc_sets must be a power of two")
        if self.l1_sets < 1 or self.l1_sets & (self.l1_sets - 1):
            raise ConfigError("l1_sets must be a power of two")
        if self.partitions not in (1, 2, 4, 8, 16):
            raise ConfigError("partitions must be one of 1, 2, 4, 8, 16")
        if self.llc_ways % self.partitions:
            raise ConfigError("partitions must divide llc_ways")
        if self.replacement not in ("lru", "random"):
            raise ConfigError(f"unknown replacement policy {self.replacement!r}")
        if self.cores < 1 or self.l1_ways < 1:
            raise ConfigError("cores and l1_ways must be >= 1")

    @property
    def ways_per_partition(self) -> int:
        return self.llc_ways // self.partitions


class AccessOutcome(NamedTuple):
    level: int                                  # L1_HIT | LLC_HIT | MISS
    llc_eviction: tuple[int, int] | None = None  # (set, partition) of demand victim

    @property
    def level_name(self) -> str:
        return _LEVEL_NAMES[self.level]


class CounterSnapshot(NamedTuple):
    llc_accesses: int
    llc_demand_evictions: int
    llc_remap_evictions: int
    l1_hits: int


class Hierarchy:
    """One simulated machine: private L1s in front of a shared randomized
    LLC, plus the remap engine and (optionally) the attack detector.

    Instances are single-threaded; run one experiment trial per instance.
    All randomness (fill partitions, random replacement, key material)
    comes from the seeded `rng`, so whole trials replay exactly.
    """

    __slots__ = ("config", "rng", "_llc", "_loc", "_remapped", "_l1",
                 "_l1_mask", "_l1_ways", "_wp", "_sets", "_partitions",
                 "_lru", "_det", "_engine", "_remap_active",
                 "_key_lo", "_key_hi", "_set_mask", "_pbits",
                 "llc_accesses", "llc_hits", "llc_demand_evictions",
                 "llc_remap_evictions", "l1_hits", "_last_evict")

    def __init__(self, config: CacheConfig | None = None,
                 remap_policy: RemapPolicy | None = None,
                 detector_config: DetectorConfig | None = None,
                 seed: int | None = None,
                 rng: random.Random | None = None,
                 detector_trace_sink=None):
        self.config = config or CacheConfig()
        cfg = self.config
        self.rng = rng if rng is not None else random.Random(seed)
        self._sets = cfg.llc_sets
        self._partitions = cfg.partitions
        self._wp = cfg.ways_per_partition
        self._lru = cfg.replacement == "lru"
        self._llc = [[[] for _ in range(cfg.llc_sets)] for _ in range(cfg.partitions)]
        self._loc: dict[int, tuple[int, int]] = {}
        self._remapped: set[int] = set()
        self._l1 = [[[] for _ in range(cfg.l1_sets)] for _ in range(cfg.cores)]
        self._l1_mask = cfg.l1_sets - 1
        self._l1_ways = cfg.l1_ways
        if detector_config is not None:
            self._det = Detector(detector_config, cfg.llc_sets * cfg.partitions,
                                 trace_sink=detector_trace_sink)
        else:
            self._det = None
        self._engine = RemapEngine(self, remap_policy, self.rng)
        self._remap_active = False
        self._set_mask = cfg.llc_sets - 1
        self._pbits = cfg.partitions.bit_length() - 1
        self._sync_key()
        self.llc_accesses = 0
        self.llc_hits = 0
        self.llc_demand_evictions = 0
        self.llc_remap_evictions = 0
        self.l1_hits = 0
        self._last_evict: tuple[int, int] | None = None

    # ------------------------------------------------------------------
    # the access path

    def access_level(self, core: int, addr: int) -> int:
        """Access one line address from `core`; returns the serving level.

        Fast-path variant of `access`; eviction details of a miss are in
        `last_eviction` until the next access.
        """
        if core >= len(self._l1):
            raise ConfigError(f"unknown core id {core}")
        l1set = self._l1[core][addr & self._l1_mask]
        if addr in l1set:
            if l1set[-1] != addr:
                l1set.remove(addr)
                l1set.append(addr)
            self.l1_hits += 1
            return L1_HIT
        self.llc_accesses += 1
        fired = False
        det = self._det
        if det is not None:
            report = det.record_access()
            if report is not None and report.fired:
                fired = True
        pos = self._loc.get(addr)
        if pos is not None:
            j, s = pos
            ways = self._llc[j][s]
            if ways[-1] != addr:
                ways.remove(addr)
                ways.append(addr)
            self.llc_hits += 1
            self._last_evict = None
            level = LLC_HIT
        else:
            self._fill_demand(addr)
            level = MISS
        if len(l1set) >= self._l1_ways:
            l1set.pop(0)        # silent L1 eviction; block stays in the LLC
        l1set.append(addr)
        eng = self._engine
        if self._remap_active:
            eng.step_remap(eng.rate)
        elif fired:
            eng.maybe_trigger(detector_fired=True)
        elif eng.auto and eng.period_value() >= eng.threshold:
            eng.maybe_trigger()
        return level

    def access(self, core: int, addr: int) -> AccessOutcome:
        """Access one line address; L1 hits never reach the LLC, an LLC
        miss fills a random partition and may evict (back-invalidating
        all L1 copies of the victim)."""
        level = self.access_level(core, addr)
        return AccessOutcome(level, self._last_evict if level == MISS else None)

    @property
    def last_eviction(self) -> tuple[int, int] | None:
        """(set, partition) evicted by the most recent miss, if any."""
        return self._last_evict

    def _sync_key(self) -> None:
        """Mirror the live key for the inlined fill-index computation."""
        key = self._engine.current_key
        self._key_lo = key.lo
        self._key_hi = key.hi

    def _fill_demand(self, addr: int) -> None:
        j = self.rng.getrandbits(self._pbits) if self._pbits else 0
        if self._remap_active:
            s, under_new = self._engine.fill_index(j, addr)
        else:
            # inlined mix64(addr ^ key.lo + key.hi + j * golden) & set mask
            x = ((addr ^ self._key_lo) + self._key_hi + j * 0x9E3779B97F4A7C15) & 0xFFFFFFFFFFFFFFFF
            x ^= x >> 30
            x = (x * 0xBF58476D1CE4E5B9) & 0xFFFFFFFFFFFFFFFF
            x ^= x >> 27
            x = (x * 0x94D049BB133111EB) & 0xFFFFFFFFFFFFFFFF
            s = (x ^ (x >> 31)) & self._set_mask
            under_new = False
        ways = self._llc[j][s]
        if len(ways) >= self._wp:
            vidx = 0 if self._lru else self.rng.randrange(len(ways))
            victim = ways.pop(vidx)
            del self._loc[victim]
            self._remapped.discard(victim)
            self._back_invalidate(victim)
            self.llc_demand_evictions += 1
            if self._det is not None:
                self._det.record_eviction(j * self._sets + s)
            self._last_evict = (s, j)
        else:
            self._last_evict = None
        ways.append(addr)
        self._loc[addr] = (j, s)
        if under_new:
            self._remapped.add(addr)

    def _back_invalidate(self, tag: int) -> None:
        idx = tag & self._l1_mask
        for sets in self._l1:
            lst = sets[idx]
            if tag in lst:
                lst.remove(tag)

    def _on_remap_eviction(self, tag: int) -> None:
        """Bookkeeping for blocks dropped by the relocation sweep; these
        count separately from demand evictions and are invisible to the
        detector and the remap period."""
        self._back_invalidate(tag)
        self.llc_remap_evictions += 1

    # ------------------------------------------------------------------
    # non-access operations

    def flush(self, addr: int) -> None:
        """Purge `addr` from the whole hierarchy.  Not an LLC access, not
        an eviction; flushing an uncached line is a no-op."""
        pos = self._loc.pop(addr, None)
        if pos is not None:
            j, s = pos
            self._llc[j][s].remove(addr)
            self._remapped.discard(addr)
        idx = addr & self._l1_mask
        for sets in self._l1:
            lst = sets[idx]
            if addr in lst:
                lst.remove(addr)

    def is_cached_llc(self, addr: int) -> bool:
        """Ground-truth LLC residency probe (test/metric oracle only)."""
        return addr in self._loc

    def is_cached_l1(self, core: int, addr: int) -> bool:
        return addr in self._l1[core][addr & self._l1_mask]

    def counters(self) -> CounterSnapshot:
        return CounterSnapshot(self.llc_accesses, self.llc_demand_evictions,
                               self.llc_remap_evictions, self.l1_hits)

    @property
    def engine(self) -> RemapEngine:
        return self._engine

    @property
    def detector(self) -> Detector | None:
        return self._det

    # ------------------------------------------------------------------
    # experiment plumbing (harness side, never attacker-visible)

    def ground_truth_indices(self, addr: int) -> tuple[int, ...]:
        """Set index of `addr` in every partition under the live key."""
        return index_tuple(self._engine.current_key, addr, self._sets,
                           self._partitions)

    def set_contents(self, partition: int, set_index: int) -> tuple[int, ...]:
        """Resident tags of one partition-set, LRU first (oracle only)."""
        return tuple(self._llc[partition][set_index])

    def llc_occupancy(self) -> int:
        return len(self._loc)

    def prefill(self, fill_rng: random.Random, occupancy: float = 1.0,
                max_draws: int | None = None) -> int:
        """Fill the LLC with junk blocks placed at their derived indices,
        modeling a warm steady-state machine.  Counters and the detector
        are untouched (the detector is reset afterwards).  Returns the
        number of blocks placed."""
        target = int(occupancy * self._sets * self._partitions * self._wp)
        limit = max_draws if max_draws is not None else 64 * self._sets * self._partitions * self._wp
        key = self._engine.current_key
        placed = 0
        draws = 0
        loc = self._loc
        while placed < target and draws < limit:
            draws += 1
            tag = fill_rng.getrandbits(60)
            j = fill_rng.randrange(self._partitions) if self._partitions > 1 else 0
            s = mix64((tag ^ key.lo) + key.hi + j * 0x9E3779B97F4A7C15) & (self._sets - 1)
            ways = self._llc[j][s]
            if len(ways) < self._wp and tag not in loc:
                ways.append(tag)
                loc[tag] = (j, s)
                placed += 1
        if self._det is not None:
            self._det.reset()
        return placed

    def check_invariants(self) -> None:
        """Assert inclusion, single residency and lookup reachability.
        Test-build helper; raises AssertionError on violation."""
        total = 0
        seen = set()
        for j in range(self._partitions):
            for s in range(self._sets):
                ways = self._llc[j][s]
                assert len(ways) <= self._wp, "overfull partition-set"
                for t in ways:
                    assert t not in seen, f"tag {t:#x} resident twice"
                    seen.add(t)
                    assert self._loc.get(t) == (j, s), "loc index out of sync"
                total += len(ways)
        assert total == len(self._loc), "loc size mismatch"
        for core_sets in self._l1:
            for lst in core_sets:
                assert len(lst) <= self._l1_ways
                for t in lst:
                    assert t in self._loc, f"L1 tag {t:#x} not in LLC (inclusion)"
        # every resident block must be findable through the index rule
        eng = self._engine
        for t, (j, s) in self._loc.items():
            primary, retry = eng.resolve_index(t, j)
            assert s == primary or (retry is not None and s == retry), \
                f"tag {t:#x} resident at {(j, s)} but unreachable"
