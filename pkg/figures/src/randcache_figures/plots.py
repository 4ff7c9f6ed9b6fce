"""Render result figures from randcache campaign CSVs.

Every renderer consumes only the versioned CSV schema written by the
simulator's command-line tool; none of them import simulator internals.
Rendering is deterministic: the same input CSV produces the same plotted
data series.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import pandas as pd

KINDS = ("evrate", "search-success", "retention", "detect-sweep",
         "detect-heatmap")


class SchemaError(ValueError):
    pass


@dataclass
class PlotSpec:
    kind: str
    inputs: list[str]
    output: str
    analytic: str | None = None        # closed-form overlay CSV
    options: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise SchemaError(f"unknown figure kind {self.kind!r}")
        if not self.inputs:
            raise SchemaError("at least one input CSV is required")


def _load(path: str, required: list[str]) -> pd.DataFrame:
    df = pd.read_csv(path, comment="#")
    for col in required:
        if col not in df.columns:
            raise SchemaError(f"{path}: missing column {col!r}")
    return df


def _partition_label(k: int) -> str:
    return "set-associative" if k == 1 else f"{k}-partition skew"


def render(spec: PlotSpec) -> str:
    """Render one figure; returns the output path."""
    fig, ax = plt.subplots(figsize=(6.0, 3.8))
    if spec.kind == "evrate":
        _render_evrate(spec, ax)
    elif spec.kind == "search-success":
        _render_search_success(spec, ax)
    elif spec.kind == "retention":
        _render_retention(spec, ax)
    elif spec.kind == "detect-sweep":
        _render_detect_sweep(spec, ax)
    elif spec.kind == "detect-heatmap":
        _render_heatmap(spec, fig, ax)
    fig.tight_layout()
    fig.savefig(spec.output, dpi=120)
    plt.close(fig)
    return spec.output


def evrate_series(df: pd.DataFrame) -> pd.DataFrame:
    """Mean eviction rate per (partitions, size), the plotted series."""
    df = df[df["outcome"] == "rate"].copy()
    df["value"] = df["value"].astype(float)
    return (df.groupby(["partitions", "size"])["value"]
              .mean().reset_index()
              .sort_values(["partitions", "size"]))


def _render_evrate(spec: PlotSpec, ax) -> None:
    frames = [_load(p, ["partitions", "size", "value", "outcome"])
              for p in spec.inputs]
    series = evrate_series(pd.concat(frames))
    for k, grp in series.groupby("partitions"):
        ax.plot(grp["size"], grp["value"], marker="o",
                label=_partition_label(int(k)))
    ax.set_xlabel("eviction set size (lines)")
    ax.set_ylabel("eviction rate")
    ax.set_ylim(0, 1.05)
    ax.grid(alpha=0.3)
    ax.legend()


def search_success_curve(df: pd.DataFrame, metric: str) -> pd.DataFrame:
    """Empirical success-vs-budget curve from per-trial search rows."""
    finals = df[df["outcome"].isin(["success", "failure"])].copy()
    if finals.empty:
        raise SchemaError("no final search rows in input")
    finals[metric] = finals[metric].astype(int)
    out = []
    for (algo, k, size), grp in finals.groupby(["algo", "partitions", "size"]):
        costs = grp.loc[grp["outcome"] == "success", metric].sort_values()
        n = len(grp)
        budgets = costs.unique()
        cdf = [(b, (costs <= b).sum() / n) for b in budgets]
        for b, p in cdf:
            out.append(dict(algo=algo, partitions=k, size=size,
                            budget=b, probability=p))
    return pd.DataFrame(out)


def _render_search_success(spec: PlotSpec, ax) -> None:
    metric = spec.options.get("metric", "llc_accesses")
    frames = [_load(p, ["algo", "partitions", "size", "outcome", metric])
              for p in spec.inputs]
    curve = search_success_curve(pd.concat(frames), metric)
    for (algo, k, size), grp in curve.groupby(["algo", "partitions", "size"]):
        ax.step(grp["budget"], grp["probability"], where="post",
                marker=".", linestyle="none" if spec.analytic else "-",
                label=f"{algo} measured, {_partition_label(int(k))}, {size} lines")
    if spec.analytic:
        theory = _load(spec.analytic,
                       ["size", "value", "llc_demand_evictions", "outcome"])
        theory = theory[theory["outcome"] == "p_collect"]
        ax.plot(theory["llc_demand_evictions"].astype(int),
                theory["value"].astype(float), "-",
                label="closed form")
    label = ("LLC accesses" if metric == "llc_accesses" else "LLC evictions")
    ax.set_xlabel(f"budget ({label})")
    ax.set_ylabel("probability of finding the set")
    ax.set_ylim(0, 1.05)
    ax.grid(alpha=0.3)
    ax.legend(fontsize=7)


def _render_retention(spec: PlotSpec, ax) -> None:
    frames = [_load(p, ["partitions", "max_chain", "value", "outcome"])
              for p in spec.inputs]
    df = pd.concat(frames)
    df = df[df["outcome"] == "retained"].copy()
    df["value"] = df["value"].astype(float)
    # unlimited chains are written as an empty cell; plot them rightmost
    caps = df["max_chain"].fillna(0).astype(int)
    finite_max = int(caps[caps > 0].max()) if (caps > 0).any() else 1
    df["cap"] = caps.replace(0, finite_max * 2)
    series = (df.groupby(["partitions", "cap"])["value"].mean().reset_index())
    for k, grp in series.groupby("partitions"):
        grp = grp.sort_values("cap")
        ax.plot(grp["cap"], 100 * grp["value"], marker="s",
                label=_partition_label(int(k)))
    ax.set_xscale("log", base=2)
    ax.set_xlabel("relocation chain cap (rightmost = unlimited)")
    ax.set_ylabel("blocks retained (%)")
    ax.grid(alpha=0.3)
    ax.legend()


def _render_detect_sweep(spec: PlotSpec, ax) -> None:
    frames = [_load(p, ["sample_period", "threshold", "value", "outcome"])
              for p in spec.inputs]
    df = pd.concat(frames)
    df = df[df["outcome"].isin(["success", "failure"])].copy()
    df["value"] = df["value"].astype(float)
    series = (df.groupby(["sample_period", "threshold"])["value"]
                .mean().reset_index())
    for period, grp in series.groupby("sample_period"):
        grp = grp.sort_values("threshold")
        ax.plot(grp["threshold"], grp["value"], marker="o",
                label=f"{int(period) // 1024}K-access window")
    ax.set_xlabel("detection threshold")
    ax.set_ylabel("probability of finding the set")
    ax.set_ylim(-0.02, 1.05)
    ax.grid(alpha=0.3)
    ax.legend()


def _render_heatmap(spec: PlotSpec, fig, ax) -> None:
    df = _load(spec.inputs[0], ["window", "set", "az"])
    import numpy as np

    windows = int(df["window"].max()) + 1
    sets = int(df["set"].max()) + 1
    grid = np.zeros((windows, sets))
    grid[df["window"].astype(int), df["set"].astype(int)] = df["az"].astype(float)
    im = ax.imshow(grid, aspect="auto", origin="lower", cmap="inferno",
                   interpolation="nearest")
    ax.set_xlabel("cache set")
    ax.set_ylabel("sample window")
    fig.colorbar(im, ax=ax, label="accumulated score")
