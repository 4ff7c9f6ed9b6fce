"""Attacker toolkit: eviction-set search and eviction-rate measurement.

Everything here observes the cache only through an AttackerView, which
exposes the attacker's own accesses and flushes (fast/slow), a trigger
for a single victim access of the target, and the public geometry of the
cache.  No set indices, keys, or replacement state leak through it.

Three search strategies are implemented:

* conflict testing (ct): stream fresh random lines; after each one,
  re-time the target through the victim trigger.  A slow re-access means
  the target was just dislodged, which convicts the last streamed line.
* prime + prune + test (ppt): prime the LLC with a large set of random
  lines, prune it until a full re-access pass stays fast (everything
  concurrently cached), then time a sweep after touching the target;
  slow sweep members are congruent candidates.
* group elimination (ge): start from a large set that evicts the target
  and repeatedly drop one of W+1 groups whose removal preserves the
  eviction, condensing toward a W-member set.  Only meaningful for a
  single-partition cache; on skewed caches the group test is too noisy
  and the search is expected to fail.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field

import numpy as np

from .hierarchy import MISS, CounterSnapshot, Hierarchy


class AttackerView:
    """Hit/miss-latency view of the hierarchy for attacker code.

    `access`/`flush` act on the attacker's own lines (core 0 by default);
    `victim_access` tricks the victim core into touching the target once
    and reports whether that access was fast.  Counter snapshots are
    exposed so searches can honestly report their footprint.
    """

    def __init__(self, hier: Hierarchy, target: int,
                 attacker_core: int = 0, victim_core: int = 1):
        self._h = hier
        self._target = target
        self._attacker_core = attacker_core
        self._victim_core = victim_core
        self.sets = hier.config.llc_sets
        self.ways = hier.config.llc_ways
        self.partitions = hier.config.partitions

    def access(self, addr: int) -> bool:
        """Access an attacker line; True means fast (L1 or LLC hit)."""
        return self._h.access_level(self._attacker_core, addr) != MISS

    def flush(self, addr: int) -> None:
        self._h.flush(addr)

    def victim_access(self) -> bool:
        """Trigger one victim access of the target; True means fast."""
        return self._h.access_level(self._victim_core, self._target) != MISS

    def flush_target(self) -> None:
        """Purge the target from the hierarchy.  Experiment scaffolding
        only: a real attacker cannot flush the victim's line.  Used to
        give rate measurements independent per-trial initial placements."""
        self._h.flush(self._target)

    def counters(self) -> CounterSnapshot:
        return self._h.counters()

    @property
    def llc_accesses(self) -> int:
        return self._h.llc_accesses

    @property
    def llc_evictions(self) -> int:
        return self._h.llc_demand_evictions


@dataclass
class EvictionSet:
    """Attacker-held candidate eviction set for one target."""

    members: list[int]
    target: int
    measured_rate: float | None = None

    def __post_init__(self):
        if len(set(self.members)) != len(self.members):
            raise ValueError("eviction set members must be distinct")
        if self.target in self.members:
            raise ValueError("target cannot be a member of its eviction set")


@dataclass
class SearchBudget:
    """Abort limits, measured on the hierarchy counters."""

    max_llc_accesses: int = 1 << 62
    max_llc_evictions: int = 1 << 62

    def __post_init__(self):
        if self.max_llc_accesses <= 0 or self.max_llc_evictions <= 0:
            raise ValueError("budget limits must be positive")


@dataclass
class SearchResult:
    success: bool
    evset: EvictionSet
    llc_accesses: int
    llc_evictions: int
    # (members collected, llc accesses so far, llc evictions so far)
    milestones: list[tuple[int, int, int]] = field(default_factory=list)
    reason: str = ""


def _fresh_lines(rng: random.Random):
    """Endless fresh random line addresses (batched for speed)."""
    gen = np.random.default_rng(rng.getrandbits(64))
    while True:
        yield from gen.integers(1 << 60, size=8192, dtype=np.int64).tolist()


def _one_eviction_test(view: AttackerView, members: list[int]) -> bool:
    for m in members:
        view.flush(m)
    view.victim_access()
    for m in members:
        view.access(m)
    return not view.victim_access()


def eviction_test(view: AttackerView, members: list[int]) -> bool:
    """Check that `members` dislodge the target: flush them, install the
    target, refill, re-time the target.

    The target's in-LLC age is unknown to the attacker (its re-accesses
    are mostly filtered by the victim's L1), so a single positive cycle
    can be an artifact of a target that was already nearly evicted.  A
    positive first cycle ends with the target refetched fresh, making a
    second cycle authoritative; a negative first cycle can only happen
    for a set that is genuinely too weak, since staleness only makes
    eviction easier.
    """
    if not members:
        return False
    if not _one_eviction_test(view, members):
        return False
    return _one_eviction_test(view, members)


def measure_eviction_rate(view: AttackerView, evset: EvictionSet, trials: int,
                          flush_after_probe: bool = True,
                          fresh_target: bool = True) -> float:
    """Fraction of prime-probe cycles in which `evset` evicts the target.

    With flush_after_probe (the flush-instruction reuse trick) the set is
    purged after every probe so each cycle refills it from scratch;
    without it, members stay resident, later cycles stop generating
    conflicts, and the measured rate collapses.

    fresh_target flushes the target between cycles so every cycle starts
    from an independent placement (the independent-experiment protocol
    behind per-size rate tables).  Disable it to measure the rate an
    attacker actually sustains across consecutive uses, where the
    target's residual in-set age carries over between failed cycles.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    members = evset.members
    if not members:
        return 0.0
    for m in members:
        view.flush(m)
    evicted = 0
    for _ in range(trials):
        if fresh_target:
            view.flush_target()
        view.victim_access()
        for m in members:
            view.access(m)
        if not view.victim_access():
            evicted += 1
        if flush_after_probe:
            for m in members:
                view.flush(m)
    return evicted / trials


# ----------------------------------------------------------------------
# conflict testing

def ct_search(view: AttackerView, target: int, size: int,
              budget: SearchBudget, rng: random.Random) -> SearchResult:
    """Collect `size` congruent lines by streaming random lines and
    timing the target after each one.

    Attribution is exact under LRU with one streamed line per probe: a
    slow target re-access means the last streamed line's fill claimed the
    target's slot, so that line is congruent in the partition the target
    occupied.  Each collected member is therefore individually verified
    by the probe that caught it.
    """
    a0, e0 = view.llc_accesses, view.llc_evictions
    max_a, max_e = budget.max_llc_accesses, budget.max_llc_evictions
    members: list[int] = []
    milestones: list[tuple[int, int, int]] = []
    fresh = _fresh_lines(rng)
    view.victim_access()                      # make sure the target is cached
    access = view.access
    probe = view.victim_access
    while len(members) < size:
        if view.llc_accesses - a0 >= max_a or view.llc_evictions - e0 >= max_e:
            return SearchResult(False, EvictionSet(members, target),
                                view.llc_accesses - a0, view.llc_evictions - e0,
                                milestones, "budget exhausted")
        cand = next(fresh)
        access(cand)
        if not probe():                       # slow: cand dislodged the target
            members.append(cand)
            milestones.append((len(members), view.llc_accesses - a0,
                               view.llc_evictions - e0))
    evset = EvictionSet(members, target)
    evset.measured_rate = 1.0 if eviction_test(view, members) else 0.0
    return SearchResult(True, evset, view.llc_accesses - a0,
                        view.llc_evictions - e0, milestones, "")


# ----------------------------------------------------------------------
# prime + prune + test

def _prune(view: AttackerView, cand: list[int], max_passes: int) -> list[int]:
    """Drop members that conflict with the rest of the set until one full
    pass stays fast, i.e. the survivors are concurrently cached.

    A slow member is flushed as soon as it is dropped: its re-access just
    refilled it, and leaving that copy resident would keep evicting
    members we want to keep, shrinking the set far below cache capacity.
    Flushing frees the slot so later refills in the same set stop
    cascading.
    """
    for _ in range(max_passes):
        kept = []
        dirty = False
        for m in cand:
            if view.access(m):
                kept.append(m)
            else:
                view.flush(m)
                dirty = True
        cand = kept
        if not dirty:
            break
    return cand


def ppt_search(view: AttackerView, target: int, size: int,
               budget: SearchBudget, rng: random.Random,
               prime_factor: float = 1.5, plug: int | None = None,
               refill: int | None = None, prune_passes: int = 4) -> SearchResult:
    """Prime the LLC, prune to a concurrently cached set, then harvest
    congruent lines from timed sweeps after victim accesses.

    Pruning certifies the set concurrently cached but leaves most
    contended cache sets one slot short (the final conflict in a set was
    flushed), so the target's install would fill the free slot instead
    of evicting.  Each round therefore tops the set up with fresh lines
    before sweeping: a small plug batch normally suffices, while after a
    harvest the target's set lost all its congruent lines and needs a
    cache-scale refill before it conflicts again.  A clean prune pass
    precedes every sweep, so sweep misses can only come from the
    target-set cascade; collected candidates are flushed so they do not
    perturb later rounds.
    """
    a0, e0 = view.llc_accesses, view.llc_evictions
    max_a, max_e = budget.max_llc_accesses, budget.max_llc_evictions
    capacity = view.sets * view.ways
    if plug is None:
        plug = max(64, capacity // 16)
    if refill is None:
        refill = max(128, capacity // 2)

    def out_of_budget() -> bool:
        return (view.llc_accesses - a0 >= max_a
                or view.llc_evictions - e0 >= max_e)

    fresh = _fresh_lines(rng)
    prime = [next(fresh) for _ in range(int(prime_factor * capacity))]
    for m in prime:
        view.access(m)
    prime = _prune(view, prime, prune_passes)

    members: list[int] = []
    milestones: list[tuple[int, int, int]] = []
    topup = plug
    while len(members) < size:
        if out_of_budget():
            return SearchResult(False, EvictionSet(members, target),
                                view.llc_accesses - a0, view.llc_evictions - e0,
                                milestones, "budget exhausted")
        top = [next(fresh) for _ in range(topup)]
        for m in top:
            view.access(m)
        prime = _prune(view, prime + top, 2)
        view.victim_access()                  # install the target
        found: list[int] = []
        for m in prime:                       # timed sweep of the pruned set
            if not view.access(m):
                found.append(m)
                milestones.append((len(members) + len(found),
                                   view.llc_accesses - a0,
                                   view.llc_evictions - e0))
                if len(members) + len(found) >= size:
                    break
        if found:
            drop = set(found)
            prime = [m for m in prime if m not in drop]
            members.extend(found)
            for m in found:
                view.flush(m)
            topup = refill
        else:
            topup = max(plug, topup)

    evset = EvictionSet(members[:size], target)
    ok = eviction_test(view, evset.members)
    evset.measured_rate = 1.0 if ok else 0.0
    return SearchResult(ok, evset, view.llc_accesses - a0,
                        view.llc_evictions - e0, milestones,
                        "" if ok else "final eviction test failed")


# ----------------------------------------------------------------------
# group elimination

def _evicts(view: AttackerView, lines: list[int]) -> bool:
    """Install the target, touch every line once, re-time the target."""
    view.victim_access()
    access = view.access
    for m in lines:
        access(m)
    return not view.victim_access()


def _flushed_evicts(view: AttackerView, flush_lines: list[int],
                    fill_lines: list[int]) -> bool:
    """Flush `flush_lines`, install the target, refill `fill_lines`,
    re-time the target.

    Flushing first makes every refill reach the LLC (nothing lingers in
    the attacker's private cache) and clears candidate copies sitting
    above the target in its set, so under single-partition LRU the target
    is evicted iff at least W of the filled lines are congruent with it.
    """
    for m in flush_lines:
        view.flush(m)
    view.victim_access()
    access = view.access
    for m in fill_lines:
        access(m)
    return not view.victim_access()


def ge_search(view: AttackerView, target: int, initial_size: int,
              budget: SearchBudget, rng: random.Random,
              candidates: list[int] | None = None,
              retries: int = 3, flush_below: int = 4096) -> SearchResult:
    """Condense a large eviction set into a W-member one by repeatedly
    removing one of W+1 groups whose removal keeps the set evicting.

    While the candidate set is large, groups are tested by plainly
    re-accessing the remainder; the target's private-cache-filtered
    re-accesses make its in-LLC age carry over, so a negative test is
    followed by touching the skipped group (which completes the eviction
    and refetches the target fresh), with a flushed re-prime as fallback.
    Once the set shrinks toward the attacker's own L1 capacity, plain
    re-accesses stop reaching the LLC at all and every test switches to
    a flush-everything-and-refill form, which is exact under LRU.

    A scan that finds no removable group is retried up to `retries`
    times; persistent failure ends the search, which is the expected
    outcome on skewed caches where random partition placement makes the
    group test inherently noisy.
    """
    a0, e0 = view.llc_accesses, view.llc_evictions
    max_a, max_e = budget.max_llc_accesses, budget.max_llc_evictions

    def out_of_budget() -> bool:
        return (view.llc_accesses - a0 >= max_a
                or view.llc_evictions - e0 >= max_e)

    def result(ok: bool, members: list[int], reason: str) -> SearchResult:
        evset = EvictionSet(members, target)
        if ok:
            evset.measured_rate = 1.0
        return SearchResult(ok, evset, view.llc_accesses - a0,
                            view.llc_evictions - e0, milestones, reason)

    shuffle_rng = np.random.default_rng(rng.getrandbits(64))
    if candidates is None:
        fresh = _fresh_lines(rng)
        cand = [next(fresh) for _ in range(initial_size)]
    else:
        cand = list(candidates)
    milestones: list[tuple[int, int, int]] = []
    groups = view.ways + 1

    if not _evicts(view, cand):
        if not _flushed_evicts(view, cand, cand):
            return result(False, cand, "initial set does not evict target")

    attempts = 0
    while len(cand) > view.ways:
        if out_of_budget():
            return result(False, cand, "budget exhausted")
        flush_mode = len(cand) <= flush_below
        order = shuffle_rng.permutation(len(cand))
        cand = [cand[i] for i in order]
        bounds = np.linspace(0, len(cand), groups + 1).astype(int)
        removed = False
        for g in range(groups):
            lo, hi = bounds[g], bounds[g + 1]
            if lo == hi:
                continue
            if out_of_budget():
                return result(False, cand, "budget exhausted")
            remainder = cand[:lo] + cand[hi:]
            if flush_mode:
                positive = _flushed_evicts(view, cand, remainder)
            else:
                positive = _evicts(view, remainder)
            if positive:
                cand = remainder              # probe refetched the target
                removed = True
                break
            if not flush_mode:
                # touch the skipped group so the full set completes the
                # eviction and the probe refetches the target fresh; the
                # group is flushed first so none of its touches can be
                # swallowed by the attacker's own L1
                access = view.access
                for m in cand[lo:hi]:
                    view.flush(m)
                for m in cand[lo:hi]:
                    access(m)
                if view.victim_access():
                    # the set degraded; a flushed re-prime gives one
                    # trustworthy retest before giving up
                    if not _flushed_evicts(view, cand, cand):
                        return result(False, cand, "set stopped evicting target")
        if removed:
            attempts = 0
            milestones.append((len(cand), view.llc_accesses - a0,
                               view.llc_evictions - e0))
        else:
            attempts += 1
            if attempts > retries:
                return result(False, cand, "no removable group")
            if not _flushed_evicts(view, cand, cand):
                return result(False, cand, "set stopped evicting target")

    ok = _flushed_evicts(view, cand, cand)
    return result(ok, cand, "" if ok else "final eviction test failed")
