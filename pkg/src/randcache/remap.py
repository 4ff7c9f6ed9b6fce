"""Key rotation with gradual relocation of resident cache blocks.

A remap rotates the index key and walks a set-relocation pointer through
the old index space.  Every valid block that has not been relocated yet
is re-placed under the new key; its metadata records that it was moved so
it is never relocated twice.  Two relocation styles are supported:

* single-step: a relocated block that lands in a full set evicts the
  replacement-policy victim of that set (one block moves per relocation).
* multi-step: an unremapped victim is displaced and relocated in a chain,
  which only ends at an empty slot, at an already-remapped victim (which
  is evicted), or at the configured chain cap.  Internally single-step is
  the chain-cap-1 special case.

While a remap is in flight, the set index of an incoming address is taken
from the old key when its old index has not been swept yet (index >=
pointer) and from the new key otherwise; a multi-step cache additionally
retries the new index on a miss because chains can displace blocks out of
unswept sets early.
"""

from __future__ import annotations

import random
from dataclasses import dataclass

from .indexing import IndexKey, derive_index, fresh_key


class RemapContractError(RuntimeError):
    """Raised when the relocation machinery is driven outside its contract."""


SINGLE_STEP = "single_step"
MULTI_STEP = "multi_step"

ACCESSES = "accesses"
EVICTIONS = "evictions"


@dataclass
class RemapPolicy:
    """When to remap and how aggressively to relocate.

    The remap period threshold is `period_per_block * sets * ways`; the
    metric decides whether LLC accesses or LLC demand evictions are
    counted toward it.  `relocation_rate` is the number of sets relocated
    per LLC access while a remap is active (gradual background
    relocation); a rate >= set count makes remaps effectively atomic.
    `max_chain` caps multi-step chains (None = unlimited).
    """

    period_metric: str = EVICTIONS
    period_per_block: int = 10
    relocation: str = SINGLE_STEP
    relocation_rate: int = 1
    max_chain: int | None = None

    def __post_init__(self):
        if self.period_metric not in (ACCESSES, EVICTIONS):
            raise ValueError(f"unknown period metric {self.period_metric!r}")
        if self.relocation not in (SINGLE_STEP, MULTI_STEP):
            raise ValueError(f"unknown relocation mode {self.relocation!r}")
        if self.period_per_block < 1:
            raise ValueError("period_per_block must be >= 1")
        if self.relocation_rate < 1:
            raise ValueError("relocation_rate must be >= 1")
        if self.max_chain is not None and self.max_chain < 1:
            raise ValueError("max_chain must be >= 1 when set")


@dataclass
class RemapState:
    active: bool
    pointer: int
    old_key: IndexKey
    new_key: IndexKey
    retained: int
    evicted_by_remap: int


class RemapEngine:
    """Owns the index keys of one hierarchy and drives its relocations.

    The engine mutates the hierarchy's block storage directly; it is the
    only component allowed to move blocks between sets.
    """

    __slots__ = ("hier", "policy", "rng", "old_key", "new_key", "active",
                 "pointer", "auto", "metric_is_ev", "threshold", "base_acc",
                 "base_ev", "start_valid", "evicted_this_remap", "rate",
                 "chain_cap", "remaps_period", "remaps_detect",
                 "relocations_total", "completed_remaps")

    def __init__(self, hier, policy: RemapPolicy | None, rng: random.Random):
        self.hier = hier
        self.policy = policy
        self.rng = rng
        key = fresh_key(rng)
        self.old_key = key
        self.new_key = key          # inactive: new_key is the live key
        self.active = False
        self.pointer = 0
        self.start_valid = 0
        self.evicted_this_remap = 0
        self.remaps_period = 0
        self.remaps_detect = 0
        self.relocations_total = 0
        self.completed_remaps = 0
        if policy is None:
            self.auto = False
            self.metric_is_ev = True
            self.threshold = 0
            self.rate = hier.config.llc_sets
            self.chain_cap = 1
        else:
            self.auto = True
            self.metric_is_ev = policy.period_metric == EVICTIONS
            cfg = hier.config
            self.threshold = policy.period_per_block * cfg.llc_sets * cfg.llc_ways
            self.rate = policy.relocation_rate
            if policy.relocation == SINGLE_STEP:
                self.chain_cap = 1
            else:
                self.chain_cap = policy.max_chain  # None = unlimited
        self.base_acc = 0
        self.base_ev = 0

    # ------------------------------------------------------------------
    # index resolution

    @property
    def current_key(self) -> IndexKey:
        """The live key while no remap is active."""
        return self.new_key

    def resolve_index(self, addr: int, partition: int) -> tuple[int, int | None]:
        """Effective set index for a lookup, plus an optional retry index.

        Inactive remap: the single live key applies.  Active: the old
        index is authoritative for unswept sets (old >= pointer); swept
        sets resolve under the new key.  Multi-step relocation adds a
        second-try index for unswept sets because a chain may already
        have displaced the block to its new location; the retry counts as
        part of the same LLC access.
        """
        sets = self.hier.config.llc_sets
        if not self.active:
            return derive_index(self.new_key, partition, addr, sets), None
        i_old = derive_index(self.old_key, partition, addr, sets)
        i_new = derive_index(self.new_key, partition, addr, sets)
        if i_old >= self.pointer:
            if self.chain_cap == 1 or i_new == i_old:
                return i_old, None
            return i_old, i_new
        return i_new, None

    def fill_index(self, partition: int, addr: int) -> tuple[int, bool]:
        """Placement set for a demand fill and whether it is already
        under the new key (so the sweep must not relocate it again)."""
        sets = self.hier.config.llc_sets
        if not self.active:
            return derive_index(self.new_key, partition, addr, sets), False
        i_old = derive_index(self.old_key, partition, addr, sets)
        if i_old >= self.pointer:
            return i_old, False
        return derive_index(self.new_key, partition, addr, sets), True

    # ------------------------------------------------------------------
    # triggering

    def period_value(self) -> int:
        """Metric counter accumulated since the last remap started."""
        h = self.hier
        if self.metric_is_ev:
            return h.llc_demand_evictions - self.base_ev
        return h.llc_accesses - self.base_acc

    def maybe_trigger(self, counters=None, detector_fired: bool = False) -> bool:
        """Start a remap if the period threshold was reached or the
        detector fired.  Returns the trigger decision; triggers are
        suppressed while a remap is already in flight.

        `counters` may be a CounterSnapshot to evaluate the period
        against; by default the hierarchy's live counters are used.
        """
        if self.active:
            return False
        if detector_fired:
            self.start_remap(detector_fired=True)
            return True
        if not self.auto:
            return False
        if counters is None:
            value = self.period_value()
        elif self.metric_is_ev:
            value = counters.llc_demand_evictions - self.base_ev
        else:
            value = counters.llc_accesses - self.base_acc
        if value >= self.threshold:
            self.start_remap(detector_fired=False)
            return True
        return False

    def start_remap(self, detector_fired: bool = False) -> None:
        """Rotate keys and begin relocating; resets period and detector."""
        if self.active:
            raise RemapContractError("remap already active")
        h = self.hier
        self.old_key = self.new_key
        self.new_key = fresh_key(self.rng)
        self.active = True
        self.pointer = 0
        self.start_valid = len(h._loc)
        self.evicted_this_remap = 0
        self.base_acc = h.llc_accesses
        self.base_ev = h.llc_demand_evictions
        if detector_fired:
            self.remaps_detect += 1
        else:
            self.remaps_period += 1
        if h._det is not None:
            h._det.reset()
        h._remap_active = True

    # ------------------------------------------------------------------
    # relocation

    def step_remap(self, n_sets: int) -> None:
        """Relocate the next `n_sets` old-index sets (all partitions).

        Relocation is atomic per set: every unremapped block of the set
        is moved before the pointer advances, so in-flight lookups never
        observe a half-relocated set.
        """
        if not self.active:
            raise RemapContractError("step_remap called with no active remap")
        h = self.hier
        partitions = h.config.partitions
        remapped = h._remapped
        llc = h._llc
        loc = h._loc
        for _ in range(n_sets):
            p = self.pointer
            if p >= h.config.llc_sets:
                break
            for j in range(partitions):
                lst = llc[j][p]
                movers = [t for t in lst if t not in remapped]
                for t in movers:
                    lst.remove(t)
                    del loc[t]
                for t in movers:
                    self._relocate_block(j, t)
            self.pointer = p + 1
        if self.pointer >= h.config.llc_sets:
            self._finish()

    def _relocate_block(self, partition: int, tag: int) -> None:
        """Place one in-flight block under the new key, chaining
        displacements until the chain cap, an empty slot, or an
        already-remapped victim (which is evicted)."""
        h = self.hier
        cfg = h.config
        sets = cfg.llc_sets
        wp = cfg.ways_per_partition
        llc_j = h._llc[partition]
        loc = h._loc
        remapped = h._remapped
        lru = cfg.replacement == "lru"
        cap = self.chain_cap
        moved = 1
        while True:
            self.relocations_total += 1
            dest = derive_index(self.new_key, partition, tag, sets)
            lst = llc_j[dest]
            if len(lst) < wp:
                lst.append(tag)
                loc[tag] = (partition, dest)
                remapped.add(tag)
                return
            vidx = 0 if lru else self.rng.randrange(wp)
            victim = lst[vidx]
            if victim in remapped or (cap is not None and moved >= cap):
                lst.pop(vidx)
                remapped.discard(victim)
                del loc[victim]
                h._on_remap_eviction(victim)
                self.evicted_this_remap += 1
                lst.append(tag)
                loc[tag] = (partition, dest)
                remapped.add(tag)
                return
            # displace the unremapped victim and keep the chain going
            lst.pop(vidx)
            del loc[victim]
            lst.append(tag)
            loc[tag] = (partition, dest)
            remapped.add(tag)
            tag = victim
            moved += 1

    def _finish(self) -> None:
        self.active = False
        self.old_key = self.new_key
        self.hier._remapped.clear()
        self.hier._remap_active = False
        self.hier._sync_key()
        self.completed_remaps += 1
        # next period measures from remap completion of the counters
        # snapshotted at start; base counters stay as set in start_remap

    # ------------------------------------------------------------------

    @property
    def state(self) -> RemapState:
        return RemapState(
            active=self.active,
            pointer=self.pointer,
            old_key=self.old_key,
            new_key=self.new_key,
            retained=self.start_valid - self.evicted_this_remap,
            evicted_by_remap=self.evicted_this_remap,
        )
