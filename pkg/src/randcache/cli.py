"""Command-line front end for running campaigns and emitting CSV."""

from __future__ import annotations

import argparse
import json
import sys

from .detector import DetectorConfig
from .harness import CampaignSpec, run_campaign, write_csv
from .hierarchy import CacheConfig, ConfigError
from .remap import RemapPolicy


def _int_list(text: str) -> list[int]:
    return [int(x) for x in text.split(",") if x]


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON campaign config file (CLI flags override)")
    p.add_argument("--sets", type=int, default=1024)
    p.add_argument("--ways", type=int, default=16)
    p.add_argument("--partitions", type=int, default=1)
    p.add_argument("--policy", choices=["lru", "random"], default="lru")
    p.add_argument("--remap-metric", choices=["accesses", "evictions"])
    p.add_argument("--remap-period", type=int,
                   help="remap period in accesses/evictions per cache block")
    p.add_argument("--relocation", choices=["single_step", "multi_step"],
                   default="single_step")
    p.add_argument("--max-chain", type=int, help="multi-step chain cap (default unlimited)")
    p.add_argument("--relocation-rate", type=int, default=1)
    p.add_argument("--detector", action="store_true", help="enable the attack detector")
    p.add_argument("--sample-period", type=int, default=4096)
    p.add_argument("--threshold", type=float, default=5.0)
    p.add_argument("--alpha", type=float, default=1.0 / 32.0)
    p.add_argument("--trials", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="output CSV path (default stdout)")
    p.add_argument("--workers", type=int, help="parallel trial workers "
                   "(default: RANDCACHE_WORKERS or cpu count)")


def _spec_from_args(kind: str, args: argparse.Namespace,
                    params: dict, sweep: dict) -> CampaignSpec:
    base: dict = {}
    if args.config:
        with open(args.config) as fh:
            base = json.load(fh)
    cache = CacheConfig(llc_sets=args.sets, llc_ways=args.ways,
                        partitions=args.partitions, replacement=args.policy)
    if "cache" in base:
        cache = CacheConfig(**base["cache"])
    remap = None
    if args.remap_metric or args.remap_period or kind in ("retention", "detect"):
        remap = RemapPolicy(
            period_metric=args.remap_metric or "evictions",
            period_per_block=args.remap_period or 10,
            relocation=args.relocation,
            relocation_rate=args.relocation_rate,
            max_chain=args.max_chain)
    if "remap" in base and base["remap"] is not None:
        remap = RemapPolicy(**base["remap"])
    detector = None
    if args.detector:
        detector = DetectorConfig(sample_period=args.sample_period,
                                  alpha=args.alpha, threshold=args.threshold)
    if "detector" in base and base["detector"] is not None:
        detector = DetectorConfig(**base["detector"])
    merged_params = dict(base.get("params", {}))
    merged_params.update(params)
    merged_sweep = dict(base.get("sweep", {}))
    merged_sweep.update(sweep)
    return CampaignSpec(kind=kind, cache=cache, remap=remap, detector=detector,
                        trials=base.get("trials", args.trials),
                        seed=base.get("seed", args.seed),
                        sweep=merged_sweep, params=merged_params)


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="randcache",
        description="Behavioral attack/defense experiments on randomized LLCs")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("evrate", help="eviction rate of partially congruent sets")
    _add_common(p)
    p.add_argument("--sizes", type=_int_list, default=[16],
                   help="comma-separated eviction-set sizes")
    p.add_argument("--partitions-list", type=_int_list,
                   help="sweep partition counts")
    p.add_argument("--uses", type=int, default=1)
    p.add_argument("--no-flush", action="store_true",
                   help="skip the flush after each probe")
    p.add_argument("--no-fresh-target", action="store_true",
                   help="carry target placement across uses")

    p = sub.add_parser("search", help="run eviction-set search trials")
    _add_common(p)
    p.add_argument("--algo", choices=["ct", "ppt", "ge"], default="ct")
    p.add_argument("--size", type=int, default=16)
    p.add_argument("--budget-accesses", type=int, default=1 << 62)
    p.add_argument("--budget-evictions", type=int, default=1 << 62)
    p.add_argument("--cold", action="store_true", help="start from an empty LLC")
    p.add_argument("--no-milestones", action="store_true")

    p = sub.add_parser("retention", help="blocks retained across one remap")
    _add_common(p)
    p.add_argument("--caps", help="comma list of chain caps, 0 = unlimited "
                   "(sweeps remap.max_chain with multi-step relocation)")
    p.add_argument("--partitions-list", type=_int_list)

    p = sub.add_parser("detect", help="search success under the detector")
    _add_common(p)
    p.add_argument("--algo", choices=["ct", "ppt", "ge"], default="ppt")
    p.add_argument("--size", type=int, default=16)
    p.add_argument("--budget-evictions", type=int)
    p.add_argument("--dump-scores", help="write per-window detector scores "
                   "(first trial) to this CSV")

    p = sub.add_parser("analytic", help="closed-form curves and time tables")
    _add_common(p)
    p.add_argument("--mode", choices=["collect-curve", "attack-time", "evrate-oracle"],
                   default="collect-curve")
    p.add_argument("--size", type=int, default=16)
    p.add_argument("--evictions-grid", type=_int_list)
    p.add_argument("--periods", type=_int_list)

    p = sub.add_parser("trace", help="replay an access trace")
    _add_common(p)
    p.add_argument("--in", dest="trace_path", required=True)

    args = parser.parse_args(argv)
    kind = args.command
    params: dict = {}
    sweep: dict = {}
    if kind == "evrate":
        sweep["params.size"] = args.sizes
        if args.partitions_list:
            sweep["cache.partitions"] = args.partitions_list
        params.update(uses=args.uses,
                      flush_after_probe=not args.no_flush,
                      fresh_target=not args.no_fresh_target)
    elif kind == "search":
        params.update(algo=args.algo, size=args.size,
                      budget_accesses=args.budget_accesses,
                      budget_evictions=args.budget_evictions,
                      warm=not args.cold,
                      milestones=not args.no_milestones)
    elif kind == "retention":
        if args.caps:
            caps = [None if c == 0 else c for c in _int_list(args.caps)]
            sweep["remap.max_chain"] = caps
            args.relocation = "multi_step"
        if args.partitions_list:
            sweep["cache.partitions"] = args.partitions_list
    elif kind == "detect":
        params.update(algo=args.algo, size=args.size)
        if args.budget_evictions:
            params["budget_evictions"] = args.budget_evictions
        if args.dump_scores:
            params["dump_scores"] = args.dump_scores
    elif kind == "analytic":
        params["mode"] = args.mode
        params["size"] = args.size
        if args.evictions_grid:
            params["evictions_grid"] = args.evictions_grid
        if args.periods:
            params["periods"] = args.periods
    elif kind == "trace":
        params["path"] = args.trace_path

    try:
        spec = _spec_from_args(kind, args, params, sweep)
        rows = run_campaign(spec, workers=args.workers)
    except (ConfigError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if args.out:
        with open(args.out, "w") as fh:
            write_csv(rows, spec, fh)
    else:
        write_csv(rows, spec, sys.stdout)
    return 0


if __name__ == "__main__":
    sys.exit(main())
