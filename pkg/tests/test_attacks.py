import random

import pytest

from randcache.attacks import (AttackerView, EvictionSet, SearchBudget,
                               _prune, ct_search, eviction_test, ge_search,
                               measure_eviction_rate, ppt_search)
from randcache.harness import sample_congruent
from randcache.hierarchy import CacheConfig, Hierarchy


def setup(sets=64, ways=4, partitions=1, seed=0, warm=False):
    cfg = CacheConfig(llc_sets=sets, llc_ways=ways, partitions=partitions,
                      l1_sets=4, l1_ways=2)
    h = Hierarchy(cfg, seed=seed)
    rng = random.Random(seed ^ 0x51EE)
    if warm:
        h.prefill(random.Random(seed ^ 0xF111))
    target = rng.getrandbits(60)
    return h, AttackerView(h, target), target, rng


def test_eviction_set_validation():
    with pytest.raises(ValueError):
        EvictionSet([1, 1], target=2)
    with pytest.raises(ValueError):
        EvictionSet([1, 2], target=1)


def test_budget_validation():
    with pytest.raises(ValueError):
        SearchBudget(max_llc_accesses=0)


def test_view_exposes_only_latency_classes():
    h, view, target, rng = setup()
    assert view.access(rng.getrandbits(60)) is False     # cold miss = slow
    a = rng.getrandbits(60)
    view.access(a)
    assert view.access(a) is True                        # hit = fast
    assert view.victim_access() in (True, False)
    assert view.sets == 64 and view.ways == 4 and view.partitions == 1


class ScriptedView:
    """Duck-typed stand-in proving attacks touch only the view surface."""

    def __init__(self):
        self.sets, self.ways, self.partitions = 4, 2, 1
        self.llc_accesses = 0
        self.llc_evictions = 0
        self.installed = False

    def access(self, addr):
        self.llc_accesses += 1
        self.llc_evictions += 1
        return False

    def flush(self, addr):
        pass

    def victim_access(self):
        self.llc_accesses += 0      # filtered by the victim's L1
        # pretend the target is evicted on every other probe
        self.installed = not self.installed
        return self.installed

    def flush_target(self):
        pass

    def counters(self):
        return (self.llc_accesses, self.llc_evictions, 0, 0)


def test_attacks_depend_only_on_view_interface():
    view = ScriptedView()
    r = ct_search(view, target=1, size=3, budget=SearchBudget(200, 200),
                  rng=random.Random(1))
    assert r.llc_accesses <= 200


def test_ct_budget_exhaustion_returns_empty_failure():
    h, view, target, rng = setup(seed=2)
    r = ct_search(view, target, 4, SearchBudget(max_llc_accesses=1), rng)
    assert not r.success and r.evset.members == [] and r.reason


def test_budget_honesty_counters_match_hierarchy_deltas():
    h, view, target, rng = setup(seed=3, warm=True)
    c0 = h.counters()
    r = ct_search(view, target, 4, SearchBudget(50_000, 50_000), rng)
    c1 = h.counters()
    assert r.llc_accesses == c1.llc_accesses - c0.llc_accesses
    assert r.llc_evictions == c1.llc_demand_evictions - c0.llc_demand_evictions


def test_ct_members_are_ground_truth_congruent():
    # collected members are truly congruent with the target in >= 95%
    # of accepted members (here: all of them, LRU attribution is exact)
    ok = total = 0
    for seed in range(6):
        h, view, target, rng = setup(seed=100 + seed, warm=True)
        r = ct_search(view, target, 4, SearchBudget(1 << 30, 1 << 30), rng)
        assert r.success
        ti = h.ground_truth_indices(target)
        total += len(r.evset.members)
        ok += sum(1 for m in r.evset.members
                  if h.ground_truth_indices(m) == ti)
    assert ok / total >= 0.95


def test_ct_milestones_are_monotone():
    h, view, target, rng = setup(seed=5, warm=True)
    r = ct_search(view, target, 4, SearchBudget(1 << 30, 1 << 30), rng)
    ns = [m[0] for m in r.milestones]
    accs = [m[1] for m in r.milestones]
    assert ns == sorted(ns) and accs == sorted(accs)


def test_measure_rate_empty_set_is_zero():
    h, view, target, rng = setup(seed=7)
    assert measure_eviction_rate(view, EvictionSet([], target), 5) == 0.0


def test_measure_rate_full_congruent_set_is_one():
    # K=1 LRU with W fully congruent members evicts deterministically
    cfg = CacheConfig(llc_sets=1024, llc_ways=16, l1_sets=64, l1_ways=8)
    h = Hierarchy(cfg, seed=9)
    rng = random.Random(11)
    target = rng.getrandbits(60)
    members = sample_congruent(h, target, 16, rng)
    view = AttackerView(h, target)
    rate = measure_eviction_rate(view, EvictionSet(members, target), 40)
    assert rate == 1.0


def test_rate_without_flush_collapses():
    # without flush-after-probe the set stops generating conflicts and
    # the per-use eviction probability falls below half its initial value
    # well within 50 uses
    cfg = CacheConfig(llc_sets=1024, llc_ways=16, partitions=2)
    first = later = 0
    trials = 60
    for seed in range(trials):
        h = Hierarchy(cfg, seed=seed)
        rng = random.Random(10_000 + seed)
        target = rng.getrandbits(60)
        members = sample_congruent(h, target, 30, rng)
        view = AttackerView(h, target)
        evset = EvictionSet(members, target)
        outcomes = []
        view.victim_access()
        for _ in range(50):
            view.victim_access()
            for m in members:
                view.access(m)
            outcomes.append(0 if view.victim_access() else 1)
        first += outcomes[0]
        later += sum(outcomes[30:50]) / 20
    assert later / trials < 0.5 * max(first / trials, 0.2)


def test_rate_with_flush_is_stable_across_uses():
    # one set reused 1000 times with flush-after-probe: the rate settles
    # below the independent-placement value (the target lingers in
    # partitions the fixed set covers poorly) but shows no decay trend,
    # unlike the no-flush case
    cfg = CacheConfig(llc_sets=1024, llc_ways=16, partitions=2)
    h = Hierarchy(cfg, seed=21)
    rng = random.Random(23)
    target = rng.getrandbits(60)
    members = sample_congruent(h, target, 30, rng)
    view = AttackerView(h, target)
    outcomes = []
    for m in members:
        view.flush(m)
    for _ in range(1200):
        view.victim_access()
        for m in members:
            view.access(m)
        outcomes.append(0 if view.victim_access() else 1)
        for m in members:
            view.flush(m)
    mid = sum(outcomes[200:700]) / 500          # after burn-in
    late = sum(outcomes[700:1200]) / 500
    assert mid > 0.15 and late > 0.15
    assert abs(mid - late) < 0.10


def test_prune_no_self_conflicts_unchanged():
    h, view, target, rng = setup(sets=1024, ways=16, seed=25)
    cand = [rng.getrandbits(60) for _ in range(50)]
    for m in cand:
        view.access(m)
    assert _prune(view, list(cand), 4) == cand


def test_ppt_finds_full_set_small_cache():
    h, view, target, rng = setup(sets=64, ways=4, seed=27, warm=True)
    r = ppt_search(view, target, 4, SearchBudget(1 << 30, 1 << 30), rng)
    assert r.success
    ti = h.ground_truth_indices(target)
    assert all(h.ground_truth_indices(m) == ti for m in r.evset.members)


def test_ge_trivial_verified_set_returned_unchanged():
    cfg = CacheConfig(llc_sets=64, llc_ways=4, l1_sets=4, l1_ways=2)
    h = Hierarchy(cfg, seed=29)
    rng = random.Random(31)
    target = rng.getrandbits(60)
    members = sample_congruent(h, target, 4, rng)
    view = AttackerView(h, target)
    r = ge_search(view, target, 0, SearchBudget(1 << 30, 1 << 30), rng,
                  candidates=members)
    assert r.success and sorted(r.evset.members) == sorted(members)


def test_ge_condenses_on_single_partition_cache():
    # 4x the cache size keeps the congruent-shortfall probability
    # negligible for this single-seed unit test
    h, view, target, rng = setup(sets=64, ways=4, seed=33, warm=True)
    r = ge_search(view, target, 64 * 4 * 4, SearchBudget(1 << 30, 1 << 30), rng)
    assert r.success and len(r.evset.members) == 4
    ti = h.ground_truth_indices(target)
    assert all(h.ground_truth_indices(m) == ti for m in r.evset.members)


def test_ge_fails_on_skewed_cache():
    fails = 0
    for seed in range(4):
        h, view, target, rng = setup(sets=64, ways=4, partitions=2,
                                     seed=40 + seed, warm=True)
        r = ge_search(view, target, 64 * 4 * 2,
                      SearchBudget(400_000, 400_000), rng)
        if not r.success:
            fails += 1
    assert fails >= 3


def test_eviction_test_rejects_weak_set():
    cfg = CacheConfig(llc_sets=64, llc_ways=4, l1_sets=4, l1_ways=2)
    h = Hierarchy(cfg, seed=51)
    rng = random.Random(53)
    target = rng.getrandbits(60)
    good = sample_congruent(h, target, 4, rng)
    weak = good[:3]
    view = AttackerView(h, target)
    assert eviction_test(view, good)
    assert not eviction_test(view, weak)
