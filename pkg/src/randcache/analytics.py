"""Closed-form attack-cost calculators and their Monte-Carlo oracles.

The closed forms answer two questions about a randomized S-set W-way LLC
with K partitions and LRU replacement:

* how likely is a stream of M random lines to evict a resident target
  (binomial upper tail of set hits at rate 1/S, threshold W), and
* how likely are E LLC evictions to yield a partially congruent eviction
  set of L lines (binomial upper tail at rate 1/(S*K), threshold L*W/K:
  the target moves to a fresh random placement after each of the L
  evictions, and each eviction takes W/K fills of its partition-set).

Both tails are evaluated through the regularized incomplete beta
function, which stays fully accurate for huge E where summing terms
would lose the tiny tail to cancellation.  The Monte-Carlo oracles
sample the underlying mechanism directly and are the ground truth the
formulas (and the full simulator) are checked against.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

SECONDS_PER_YEAR = 365.25 * 24 * 3600.0
DEFAULT_EVICTION_HZ = 8e8
SENTINEL_YEARS = 100.0


def _binom_sf(k: int, n: int, p: float) -> float:
    """P(X >= k) for X ~ Binomial(n, p), stable for huge n."""
    if k <= 0:
        return 1.0
    if k > n:
        return 0.0
    return float(special.betainc(k, n - k + 1, p))


def p_conflict_lru(M: int, S: int, W: int) -> float:
    """Probability that M random lines cause >= W fills of the target's
    set, evicting a resident target under LRU."""
    if S < 1 or W < 1 or M < 0:
        raise ValueError("S, W must be >= 1 and M >= 0")
    return _binom_sf(W, M, 1.0 / S)


def p_collect(E: int, L: int, S: int, W: int, K: int) -> float:
    """Probability that E LLC evictions suffice to collect a partially
    congruent eviction set of L lines via conflict testing."""
    if K < 1 or W % K:
        raise ValueError("K must divide W")
    if L < 1 or E < 0:
        raise ValueError("L must be >= 1 and E >= 0")
    if (L * W) % K:
        raise ValueError("L*W/K must be an integer")
    need = L * W // K
    return _binom_sf(need, E, 1.0 / (S * K))


@dataclass
class AttackTimeEstimate:
    period_per_block: int
    evictions_per_period: int
    success_prob_per_period: float
    eviction_frequency: float
    expected_time: float        # seconds; inf when the probability underflows

    @property
    def exceeds_margin(self) -> bool:
        return self.expected_time > SENTINEL_YEARS * SECONDS_PER_YEAR

    @property
    def magnitude_class(self) -> str:
        """Coarse time class: ms / s / h / y / >100y."""
        t = self.expected_time
        if self.exceeds_margin:
            return ">100y"
        if t < 1e-2:
            return "ms"
        if t < 3600.0:
            return "s"
        if t < SECONDS_PER_YEAR:
            return "h"
        return "y"

    @property
    def display(self) -> str:
        t = self.expected_time
        if self.exceeds_margin:
            return ">100y"
        if t < 1.0:
            return f"{t * 1e3:.2g}ms"
        if t < 3600.0:
            return f"{t:.2g}s"
        if t < 86400.0:
            return f"{t / 3600.0:.2g}h"
        if t < SECONDS_PER_YEAR:
            return f"{t / 86400.0:.2g}d"
        return f"{t / SECONDS_PER_YEAR:.2g}y"


def expected_attack_time(n: int, L: int, S: int, W: int, K: int,
                         frequency: float = DEFAULT_EVICTION_HZ) -> AttackTimeEstimate:
    """Expected time to find an eviction set when the cache remaps every
    n evictions per block: the attacker retries over periods of
    E = n*S*W evictions, succeeding in a period with p_collect."""
    E = n * S * W
    p = p_collect(E, L, S, W, K)
    if p <= 0.0:
        t = math.inf
    else:
        t = E / (frequency * p)
    return AttackTimeEstimate(n, E, p, frequency, t)


# ----------------------------------------------------------------------
# Monte-Carlo oracles

def mc_conflict_lru(M: int, S: int, W: int, trials: int, seed: int = 0) -> float:
    """Single-set LRU simulation: a resident target plus M random lines;
    the target survives until W of them land in its set.  Vectorized,
    but mechanically equivalent to replaying the fills one by one."""
    gen = np.random.default_rng(seed)
    hits = gen.random((trials, M)) < (1.0 / S)
    return float(np.mean(hits.sum(axis=1) >= W))


def mc_collect(E: int, L: int, S: int, W: int, K: int, trials: int,
               seed: int = 0) -> float:
    """Direct sampling of the collection process: each eviction lands in
    the target's current (set, partition) with probability 1/(S*K); the
    L-th collection completes at the (L*W/K)-th landing."""
    need = L * W // K
    gen = np.random.default_rng(seed)
    landings = gen.binomial(E, 1.0 / (S * K), size=trials)
    return float(np.mean(landings >= need))


def mc_eviction_rate(L: int, S: int, W: int, K: int, trials: int,
                     seed: int = 0) -> float:
    """Eviction probability of one prime-probe use of an L-line partially
    congruent eviction set, sampled placement-by-placement.

    Per trial: the target occupies a uniformly random partition; every
    member is congruent in one uniformly random partition and fills a
    uniformly random one.  A member conflicts when both match the
    target's, and LRU evicts the target at the (W/K)-th conflict.  S only
    enters through the (negligible at realistic sizes) chance that a
    member is congruent in more than one partition, which this oracle
    ignores.
    """
    if K < 1 or W % K:
        raise ValueError("K must divide W")
    gen = np.random.default_rng(seed)
    if L < 1:
        return 0.0
    target_part = gen.integers(K, size=(trials, 1))
    good_part = gen.integers(K, size=(trials, L))
    fill_part = gen.integers(K, size=(trials, L))
    conflicts = ((good_part == target_part) & (fill_part == target_part)).sum(axis=1)
    return float(np.mean(conflicts >= W // K))
