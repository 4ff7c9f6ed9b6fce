"""Experiment campaigns, trace replay and CSV emission.

A campaign is a declarative spec (cache geometry, remap/detector policy,
trial count, seed, sweep axes, kind-specific parameters) executed as
independent seeded trials, one fresh hierarchy per trial.  Trials run in
parallel worker processes and results are merged in deterministic order,
so a campaign's CSV is a pure function of its spec.

Campaign kinds:

* evrate     eviction rate of ground-truth partially congruent sets
* search     eviction-set search cost/success for ct / ppt / ge
* retention  blocks retained across a full remap, by relocation policy
* detect     search success under the eviction-concentration detector
* analytic   closed-form curves/tables (no simulation)
* trace      trace replay with miss and remap accounting
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
import random
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Iterable, TextIO

import numpy as np

from . import attacks
from .analytics import expected_attack_time, mc_eviction_rate, p_collect
from .detector import DetectorConfig
from .hierarchy import MISS, CacheConfig, ConfigError, Hierarchy
from .indexing import index_matrix
from .remap import RemapPolicy

SCHEMA_VERSION = 1

CSV_COLUMNS = [
    "kind", "spec", "sweep", "trial", "seed",
    "sets", "ways", "partitions",
    "algo", "size", "relocation", "max_chain",
    "sample_period", "threshold", "period_metric", "period_per_block",
    "outcome", "value",
    "llc_accesses", "llc_demand_evictions", "llc_remap_evictions",
    "remaps_period", "remaps_detect", "detector_firings",
]

KINDS = ("evrate", "search", "retention", "detect", "analytic", "trace")

_KIND_PARAMS = {
    "evrate": {"size", "uses", "flush_after_probe", "fresh_target"},
    "search": {"algo", "size", "budget_accesses", "budget_evictions", "warm",
               "milestones", "prime_factor", "plug", "refill", "prune_passes",
               "initial_factor", "retries", "flush_below", "attempts"},
    "retention": {"occupancy"},
    "detect": {"algo", "size", "budget_evictions", "warm", "initial_factor",
               "dump_scores"},
    "analytic": {"mode", "size", "evictions_grid", "periods", "sizes_by_k"},
    "trace": {"path"},
}


@dataclass
class CampaignSpec:
    kind: str
    cache: CacheConfig = field(default_factory=CacheConfig)
    remap: RemapPolicy | None = None
    detector: DetectorConfig | None = None
    trials: int = 1
    seed: int = 0
    sweep: dict = field(default_factory=dict)    # "cache.partitions" -> [values]
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown campaign kind {self.kind!r}")
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        allowed = _KIND_PARAMS[self.kind]
        for key in self.params:
            if key not in allowed:
                raise ConfigError(f"unknown parameter {key!r} for kind {self.kind!r}")
        for axis in self.sweep:
            self._check_axis(axis)

    def _check_axis(self, axis: str) -> None:
        root, _, name = axis.partition(".")
        targets = {"cache": CacheConfig, "remap": RemapPolicy,
                   "detector": DetectorConfig}
        if root == "params":
            if name not in _KIND_PARAMS[self.kind]:
                raise ConfigError(f"sweep axis names unknown parameter {name!r}")
        elif root in targets:
            if name not in {f.name for f in fields(targets[root])}:
                raise ConfigError(f"sweep axis names unknown field {axis!r}")
        else:
            raise ConfigError(f"sweep axis root must be cache/remap/detector/params, got {axis!r}")

    def spec_hash(self) -> str:
        blob = {
            "kind": self.kind,
            "cache": asdict(self.cache),
            "remap": asdict(self.remap) if self.remap else None,
            "detector": asdict(self.detector) if self.detector else None,
            "trials": self.trials,
            "seed": self.seed,
            "sweep": self.sweep,
            "params": self.params,
        }
        raw = json.dumps(blob, sort_keys=True).encode()
        return hashlib.sha256(raw).hexdigest()[:12]


def _mix_seed(*parts: int) -> int:
    h = hashlib.sha256(repr(parts).encode()).digest()
    return int.from_bytes(h[:8], "little")


def _sweep_points(spec: CampaignSpec) -> list[dict]:
    axes = sorted(spec.sweep)
    points = [{}]
    for axis in axes:
        points = [dict(p, **{axis: v}) for p in points for v in spec.sweep[axis]]
    return points


def _apply_point(spec: CampaignSpec, point: dict) -> CampaignSpec:
    cache, remap, det = spec.cache, spec.remap, spec.detector
    params = dict(spec.params)
    for axis, value in point.items():
        root, _, name = axis.partition(".")
        if root == "cache":
            cache = replace(cache, **{name: value})
        elif root == "remap":
            if remap is None:
                raise ConfigError(f"sweep axis {axis!r} with no remap policy")
            remap = replace(remap, **{name: value})
        elif root == "detector":
            if det is None:
                raise ConfigError(f"sweep axis {axis!r} with no detector config")
            det = replace(det, **{name: value})
        else:
            params[name] = value
    return replace(spec, cache=cache, remap=remap, detector=det,
                   params=params, sweep={})


# ----------------------------------------------------------------------
# ground-truth scaffolding

def sample_congruent(hier: Hierarchy, target: int, size: int,
                     rng: random.Random, fully: bool = False) -> list[int]:
    """Random lines congruent with `target` in at least one partition
    (all partitions when `fully`), found by ground-truth rejection
    sampling over fresh address batches."""
    ti = np.asarray(hier.ground_truth_indices(target), dtype=np.int64)
    key = hier.engine.current_key
    cfg = hier.config
    gen = np.random.default_rng(rng.getrandbits(64))
    members: list[int] = []
    seen = {target}
    while len(members) < size:
        batch = gen.integers(1 << 60, size=16384, dtype=np.int64)
        idx = index_matrix(key, batch.astype(np.uint64), cfg.llc_sets, cfg.partitions)
        match = (idx == ti).all(axis=1) if fully else (idx == ti).any(axis=1)
        for addr in batch[match].tolist():
            if addr not in seen:
                seen.add(addr)
                members.append(addr)
                if len(members) == size:
                    break
    return members


def _build_hierarchy(spec: CampaignSpec, seed: int, detector_sink=None) -> Hierarchy:
    return Hierarchy(spec.cache, remap_policy=spec.remap,
                     detector_config=spec.detector, seed=seed,
                     detector_trace_sink=detector_sink)


def _base_row(spec: CampaignSpec, sweep_idx: int, trial: int, seed: int) -> dict:
    row = {c: "" for c in CSV_COLUMNS}
    row.update(kind=spec.kind, spec=spec.spec_hash(), sweep=sweep_idx,
               trial=trial, seed=seed, sets=spec.cache.llc_sets,
               ways=spec.cache.llc_ways, partitions=spec.cache.partitions)
    if spec.remap is not None:
        row.update(relocation=spec.remap.relocation,
                   max_chain="" if spec.remap.max_chain is None else spec.remap.max_chain,
                   period_metric=spec.remap.period_metric,
                   period_per_block=spec.remap.period_per_block)
    if spec.detector is not None:
        row.update(sample_period=spec.detector.sample_period,
                   threshold=spec.detector.threshold)
    return row


def _fill_counters(row: dict, hier: Hierarchy) -> None:
    row.update(llc_accesses=hier.llc_accesses,
               llc_demand_evictions=hier.llc_demand_evictions,
               llc_remap_evictions=hier.llc_remap_evictions,
               remaps_period=hier.engine.remaps_period,
               remaps_detect=hier.engine.remaps_detect,
               detector_firings=hier.detector.firings if hier.detector else 0)


# ----------------------------------------------------------------------
# per-kind trial runners

def _run_evrate_trial(spec: CampaignSpec, sweep_idx: int, trial: int) -> list[dict]:
    seed = _mix_seed(spec.seed, sweep_idx, trial)
    hier = _build_hierarchy(spec, seed)
    rng = random.Random(_mix_seed(seed, 1))
    size = int(spec.params.get("size", spec.cache.llc_ways))
    uses = int(spec.params.get("uses", 1))
    target = rng.getrandbits(60)
    members = sample_congruent(hier, target, size, rng)
    view = attacks.AttackerView(hier, target)
    rate = attacks.measure_eviction_rate(
        view, attacks.EvictionSet(members, target), uses,
        flush_after_probe=bool(spec.params.get("flush_after_probe", True)),
        fresh_target=bool(spec.params.get("fresh_target", True)))
    row = _base_row(spec, sweep_idx, trial, seed)
    row.update(size=size, outcome="rate", value=repr(rate))
    _fill_counters(row, hier)
    return [row]


def _search_once(cache: CacheConfig, p: dict, view, target: int,
                 rng: random.Random):
    algo = p.get("algo", "ct")
    size = int(p.get("size", cache.llc_ways))
    budget = attacks.SearchBudget(
        int(p.get("budget_accesses", 1 << 62)),
        int(p.get("budget_evictions", 1 << 62)))
    if algo == "ct":
        return attacks.ct_search(view, target, size, budget, rng)
    if algo == "ppt":
        return attacks.ppt_search(
            view, target, size, budget, rng,
            prime_factor=float(p.get("prime_factor", 2.0)),
            plug=int(p["plug"]) if "plug" in p else None,
            refill=int(p["refill"]) if "refill" in p else None,
            prune_passes=int(p.get("prune_passes", 4)))
    if algo == "ge":
        n = int(float(p.get("initial_factor", 1.2))
                * cache.llc_sets * cache.llc_ways)
        return attacks.ge_search(
            view, target, n, budget, rng,
            retries=int(p.get("retries", 3)),
            flush_below=int(p.get("flush_below", 4096)))
    raise ConfigError(f"unknown search algorithm {algo!r}")


def _run_search_trial(spec: CampaignSpec, sweep_idx: int, trial: int) -> list[dict]:
    seed = _mix_seed(spec.seed, sweep_idx, trial)
    hier = _build_hierarchy(spec, seed)
    rng = random.Random(_mix_seed(seed, 1))
    if bool(spec.params.get("warm", True)):
        hier.prefill(random.Random(_mix_seed(seed, 2)))
    target = rng.getrandbits(60)
    view = attacks.AttackerView(hier, target)
    a0, e0 = hier.llc_accesses, hier.llc_demand_evictions
    attempts = int(spec.params.get("attempts", 3))
    result = None
    for _ in range(attempts):
        result = _search_once(spec.cache, spec.params, view, target, rng)
        if result.success or result.reason != "initial set does not evict target":
            break
    rows = []
    algo = spec.params.get("algo", "ct")
    size = int(spec.params.get("size", spec.cache.llc_ways))
    if bool(spec.params.get("milestones", True)):
        for n, acc, ev in result.milestones:
            row = _base_row(spec, sweep_idx, trial, seed)
            row.update(algo=algo, size=n, outcome="milestone", value=n,
                       llc_accesses=acc, llc_demand_evictions=ev)
            rows.append(row)
    row = _base_row(spec, sweep_idx, trial, seed)
    row.update(algo=algo, size=size,
               outcome="success" if result.success else "failure",
               value=len(result.evset.members),
               llc_accesses=hier.llc_accesses - a0,
               llc_demand_evictions=hier.llc_demand_evictions - e0,
               llc_remap_evictions=hier.llc_remap_evictions,
               remaps_period=hier.engine.remaps_period,
               remaps_detect=hier.engine.remaps_detect,
               detector_firings=hier.detector.firings if hier.detector else 0)
    rows.append(row)
    return rows


def _run_retention_trial(spec: CampaignSpec, sweep_idx: int, trial: int) -> list[dict]:
    seed = _mix_seed(spec.seed, sweep_idx, trial)
    if spec.remap is None:
        raise ConfigError("retention campaign needs a remap policy")
    hier = _build_hierarchy(spec, seed)
    placed = hier.prefill(random.Random(_mix_seed(seed, 2)),
                          occupancy=float(spec.params.get("occupancy", 1.0)))
    engine = hier.engine
    engine.start_remap()
    engine.step_remap(spec.cache.llc_sets)
    state = engine.state
    retained = (placed - state.evicted_by_remap) / placed if placed else 0.0
    row = _base_row(spec, sweep_idx, trial, seed)
    row.update(outcome="retained", value=repr(retained))
    _fill_counters(row, hier)
    return [row]


def _run_detect_trial(spec: CampaignSpec, sweep_idx: int, trial: int) -> list[dict]:
    seed = _mix_seed(spec.seed, sweep_idx, trial)
    if spec.remap is None:
        raise ConfigError("detect campaign needs a remap policy")
    dump_path = spec.params.get("dump_scores")
    sink = None
    score_rows: list[tuple] = []
    if dump_path and sweep_idx == 0 and trial == 0:
        sink = lambda win, b, e, wz, az: score_rows.append((win, b, e, wz, az))
    hier = _build_hierarchy(spec, seed, detector_sink=sink)
    rng = random.Random(_mix_seed(seed, 1))
    if bool(spec.params.get("warm", True)):
        hier.prefill(random.Random(_mix_seed(seed, 2)))
    target = rng.getrandbits(60)
    view = attacks.AttackerView(hier, target)
    budget_ev = int(spec.params.get(
        "budget_evictions",
        spec.remap.period_per_block * spec.cache.llc_sets * spec.cache.llc_ways))
    e0 = hier.llc_demand_evictions
    success = False
    while hier.llc_demand_evictions - e0 < budget_ev:
        params = dict(spec.params,
                      budget_evictions=budget_ev - (hier.llc_demand_evictions - e0))
        result = _search_once(spec.cache, params, view, target, rng)
        if result.success:
            success = True
            break
    if sink is not None:
        with open(dump_path, "w") as fh:
            fh.write("window,set,evictions,wz,az\n")
            for win, b, e, wz, az in score_rows:
                fh.write(f"{win},{b},{e},{wz!r},{az!r}\n")
    row = _base_row(spec, sweep_idx, trial, seed)
    row.update(algo=spec.params.get("algo", "ppt"),
               size=int(spec.params.get("size", spec.cache.llc_ways)),
               outcome="success" if success else "failure",
               value=int(success))
    _fill_counters(row, hier)
    return [row]


def _run_analytic(spec: CampaignSpec, sweep_idx: int, trial: int) -> list[dict]:
    p = spec.params
    mode = p.get("mode", "collect-curve")
    cfg = spec.cache
    rows = []
    if mode == "collect-curve":
        size = int(p.get("size", 16))
        grid = [int(x) for x in p.get("evictions_grid", [])]
        if not grid:
            center = size * cfg.llc_ways // cfg.partitions * cfg.llc_sets * cfg.partitions
            grid = [int(center * f) for f in
                    (0.6, 0.7, 0.8, 0.85, 0.9, 0.95, 1.0, 1.05, 1.1, 1.2, 1.4, 1.7)]
        for E in grid:
            prob = p_collect(E, size, cfg.llc_sets, cfg.llc_ways, cfg.partitions)
            row = _base_row(spec, sweep_idx, trial, spec.seed)
            row.update(size=size, outcome="p_collect", value=repr(prob),
                       llc_demand_evictions=E)
            rows.append(row)
    elif mode == "attack-time":
        periods = [int(x) for x in p.get("periods", [100, 50, 20, 10])]
        sizes_by_k = p.get("sizes_by_k",
                           {1: 16, 2: 25, 4: 45, 8: 68, 16: 90})
        for k_str, size in sizes_by_k.items():
            K = int(k_str)
            for n in periods:
                est = expected_attack_time(n, int(size), cfg.llc_sets,
                                           cfg.llc_ways, K)
                row = _base_row(spec, sweep_idx, trial, spec.seed)
                row.update(partitions=K, size=int(size), period_per_block=n,
                           outcome=est.magnitude_class,
                           value=repr(est.expected_time))
                rows.append(row)
    elif mode == "evrate-oracle":
        size = int(p.get("size", 16))
        prob = mc_eviction_rate(size, cfg.llc_sets, cfg.llc_ways,
                                cfg.partitions, 200000, seed=spec.seed)
        row = _base_row(spec, sweep_idx, trial, spec.seed)
        row.update(size=size, outcome="rate", value=repr(prob))
        rows.append(row)
    else:
        raise ConfigError(f"unknown analytic mode {mode!r}")
    return rows


class TraceFormatError(ValueError):
    pass


@dataclass
class TraceReport:
    references: int
    llc_accesses: int
    llc_misses: int
    mpki_proxy: float           # LLC misses per 1000 trace references
    remaps_period: int
    remaps_detect: int
    detector_firings: int


def replay_trace(lines: Iterable[str], cache: CacheConfig,
                 remap: RemapPolicy | None = None,
                 detector: DetectorConfig | None = None,
                 seed: int = 0) -> TraceReport:
    """Stream a `<core> <R|W|F> <hex line address>` trace through a fresh
    hierarchy.  R and W both load (no dirty-line modeling); F flushes."""
    hier = Hierarchy(cache, remap_policy=remap, detector_config=detector,
                     seed=seed)
    refs = 0
    misses = 0
    for lineno, line in enumerate(lines, start=1):
        text = line.strip()
        if not text or text.startswith("#"):
            continue
        parts = text.split()
        if len(parts) != 3:
            raise TraceFormatError(f"line {lineno}: expected '<core> <R|W|F> <addr>'")
        try:
            core = int(parts[0])
            addr = int(parts[2], 16)
        except ValueError as exc:
            raise TraceFormatError(f"line {lineno}: {exc}") from exc
        op = parts[1].upper()
        refs += 1
        if op == "F":
            hier.flush(addr)
        elif op in ("R", "W"):
            try:
                if hier.access_level(core, addr) == MISS:
                    misses += 1
            except ConfigError as exc:
                raise TraceFormatError(f"line {lineno}: {exc}") from exc
        else:
            raise TraceFormatError(f"line {lineno}: unknown op {parts[1]!r}")
    mpki = misses / refs * 1000.0 if refs else 0.0
    return TraceReport(refs, hier.llc_accesses, misses, mpki,
                       hier.engine.remaps_period, hier.engine.remaps_detect,
                       hier.detector.firings if hier.detector else 0)


def _run_trace(spec: CampaignSpec, sweep_idx: int, trial: int) -> list[dict]:
    path = spec.params.get("path")
    if not path or not os.path.exists(path):
        raise ConfigError(f"trace file not found: {path!r}")
    with open(path) as fh:
        report = replay_trace(fh, spec.cache, spec.remap, spec.detector,
                              seed=_mix_seed(spec.seed, sweep_idx, trial))
    row = _base_row(spec, sweep_idx, trial, spec.seed)
    row.update(outcome="mpki_proxy", value=repr(report.mpki_proxy),
               llc_accesses=report.llc_accesses,
               llc_demand_evictions=report.llc_misses,
               remaps_period=report.remaps_period,
               remaps_detect=report.remaps_detect,
               detector_firings=report.detector_firings)
    return [row]


_RUNNERS = {
    "evrate": _run_evrate_trial,
    "search": _run_search_trial,
    "retention": _run_retention_trial,
    "detect": _run_detect_trial,
    "analytic": _run_analytic,
    "trace": _run_trace,
}


def _run_task(args) -> tuple[int, int, list[dict]]:
    spec, sweep_idx, point, trial = args
    sub = _apply_point(spec, point)
    rows = _RUNNERS[spec.kind](sub, sweep_idx, trial)
    campaign_hash = spec.spec_hash()
    for row in rows:
        row["spec"] = campaign_hash
    return sweep_idx, trial, rows


def default_workers() -> int:
    env = os.environ.get("RANDCACHE_WORKERS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def run_campaign(spec: CampaignSpec, workers: int | None = None) -> list[dict]:
    """Execute every (sweep point x trial) and return CSV rows in
    deterministic (sweep, trial) order."""
    points = _sweep_points(spec)
    tasks = [(spec, i, point, t)
             for i, point in enumerate(points)
             for t in range(spec.trials)]
    if workers is None:
        workers = default_workers()
    results: dict[tuple[int, int], list[dict]] = {}
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunk = max(1, len(tasks) // (workers * 8))
            for sweep_idx, trial, rows in pool.map(_run_task, tasks, chunksize=chunk):
                results[(sweep_idx, trial)] = rows
    else:
        for task in tasks:
            sweep_idx, trial, rows = _run_task(task)
            results[(sweep_idx, trial)] = rows
    out: list[dict] = []
    for i in range(len(points)):
        for t in range(spec.trials):
            out.extend(results[(i, t)])
    return out


def write_csv(rows: list[dict], spec: CampaignSpec, out: TextIO) -> None:
    out.write(f"# randcache v{SCHEMA_VERSION} kind={spec.kind} "
              f"spec={spec.spec_hash()} seed={spec.seed}\n")
    writer = csv.DictWriter(out, fieldnames=CSV_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow(row)


def read_csv(path: str) -> list[dict]:
    with open(path) as fh:
        rows = [r for r in csv.DictReader(
            line for line in fh if not line.startswith("#"))]
    return rows
