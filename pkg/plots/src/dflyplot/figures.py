"""The five figure kinds, each split into a data loader and a renderer.

Loaders return plain data plus the annotation strings that end up on the
figure, so tests can check the round trip against the CSVs without parsing
images.  Rendering is deterministic: fixed style, fixed SVG hash salt, no
timestamps.
"""

from __future__ import annotations

import math
import statistics

import matplotlib

matplotlib.use("Agg")
matplotlib.rcParams["svg.hashsalt"] = "dflyplot"

import matplotlib.pyplot as plt

from .schema import SchemaError, load_csv

JOB_COLORS = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
              "#8c564b", "#e377c2", "#7f7f7f"]


def color(i: int) -> str:
    return JOB_COLORS[i % len(JOB_COLORS)]


# -- commtime_bars_with_std ------------------------------------------------------


def load_commtime(run_dir: str) -> tuple[list[tuple], list[str]]:
    rows = load_csv(run_dir, "appstats.csv", ["job_id", "rank", "comm_ns"])
    by_job: dict[str, list[float]] = {}
    for r in rows:
        by_job.setdefault(r["job_id"], []).append(float(r["comm_ns"]))
    bars = []
    annotations = []
    for job in sorted(by_job, key=int):
        comm = by_job[job]
        mean = sum(comm) / len(comm)
        std = statistics.pstdev(comm)
        bars.append((job, mean, std))
        annotations.append(f"{mean:.1f}")
    return bars, annotations


def fig_commtime_bars(run_dir: str, compare_dir: str | None = None, **_kw):
    groups = [("run", load_commtime(run_dir))]
    if compare_dir:
        groups.append(("compare", load_commtime(compare_dir)))
    fig, ax = plt.subplots(figsize=(7, 4))
    width = 0.8 / len(groups)
    annotations = []
    for gi, (label, (bars, notes)) in enumerate(groups):
        xs = [i + gi * width for i in range(len(bars))]
        means = [b[1] for b in bars]
        stds = [b[2] for b in bars]
        ax.bar(xs, means, width, yerr=stds, capsize=3,
               color=[color(i) for i in range(len(bars))],
               alpha=1.0 if gi == 0 else 0.6, label=label)
        for x, m, note in zip(xs, means, notes):
            ax.annotate(note, (x, m), ha="center", va="bottom", fontsize=7)
        annotations.extend(notes)
    bars0 = groups[0][1][0]
    ax.set_xticks([i + (len(groups) - 1) * width / 2 for i in range(len(bars0))])
    ax.set_xticklabels([f"job {b[0]}" for b in bars0])
    ax.set_ylabel("communication time (ns)")
    ax.set_title("mean communication time per job (bar) with std (whisker)")
    if compare_dir:
        ax.legend()
    return fig, annotations


# -- latency_box_with_percentiles ------------------------------------------------------


def load_latency(run_dir: str) -> tuple[list[dict], list[str]]:
    rows = load_csv(run_dir, "latency_summary.csv",
                    ["job_id", "packets", "mean_ns", "median_ns", "p25_ns",
                     "p75_ns", "p95_ns", "p99_ns"])
    annotations = [r["p99_ns"] for r in rows]
    return rows, annotations


def fig_latency_box(run_dir: str, compare_dir: str | None = None, **_kw):
    sources = [("run", load_latency(run_dir))]
    if compare_dir:
        sources.append(("compare", load_latency(compare_dir)))
    fig, ax = plt.subplots(figsize=(7, 4))
    annotations = []
    pos = 0
    ticks, labels = [], []
    for si, (label, (rows, notes)) in enumerate(sources):
        for r in rows:
            p25, p75 = float(r["p25_ns"]), float(r["p75_ns"])
            med, p95, p99 = (float(r["median_ns"]), float(r["p95_ns"]),
                             float(r["p99_ns"]))
            ax.bxp([{
                "med": med, "q1": p25, "q3": p75,
                "whislo": p25, "whishi": p95, "fliers": [],
            }], positions=[pos], widths=0.6, showfliers=False)
            ax.plot([pos], [p99], marker="^", color="crimson")
            ax.annotate(r["p99_ns"], (pos, p99), ha="center", va="bottom",
                        fontsize=7)
            ticks.append(pos)
            labels.append(f"{label} job {r['job_id']}")
            pos += 1
        annotations.extend(notes)
    ax.set_xticks(ticks)
    ax.set_xticklabels(labels, rotation=30, ha="right")
    ax.set_ylabel("packet latency (ns)")
    ax.set_title("latency quartiles with p95 whisker and p99 marker")
    return fig, annotations


# -- throughput_timeline ------------------------------------------------------


def load_timeline(run_dir: str) -> tuple[dict[str, list[tuple[float, int]]], list[str]]:
    rows = load_csv(run_dir, "throughput_timeline.csv",
                    ["job_id", "bin_start_ns", "bytes"])
    series: dict[str, list[tuple[float, int]]] = {}
    for r in rows:
        series.setdefault(r["job_id"], []).append(
            (float(r["bin_start_ns"]), int(r["bytes"])))
    annotations = [f"job {j}: {sum(b for _t, b in pts)} B"
                   for j, pts in sorted(series.items(), key=lambda kv: int(kv[0]))]
    return series, annotations


def fig_throughput_timeline(run_dir: str, compare_dir: str | None = None, **_kw):
    sources = [("run", load_timeline(run_dir), "-")]
    if compare_dir:
        sources.append(("compare", load_timeline(compare_dir), "--"))
    fig, ax = plt.subplots(figsize=(7, 4))
    annotations = []
    for label, (series, notes), style in sources:
        for ji, (job, pts) in enumerate(sorted(series.items(), key=lambda kv: int(kv[0]))):
            xs = [t / 1000.0 for t, _b in pts]
            ys = [b for _t, b in pts]
            ax.plot(xs, ys, style, color=color(ji), label=f"{label} job {job}")
        annotations.extend(notes)
    for i, note in enumerate(annotations):
        ax.annotate(note, (0.02, 0.95 - 0.06 * i), xycoords="axes fraction",
                    fontsize=7)
    ax.set_xlabel("time (us)")
    ax.set_ylabel("delivered bytes per bin")
    ax.set_title("delivered throughput along simulated time")
    ax.legend(fontsize=6)
    return fig, annotations


# -- congestion_heatmap ------------------------------------------------------


def load_congestion(run_dir: str) -> tuple[list[list[float]], list[str]]:
    rows = load_csv(run_dir, "congestion_index.csv",
                    ["src_group", "dst_group", "kind", "index"])
    g = max(int(r["src_group"]) for r in rows) + 1
    grid = [[math.nan] * g for _ in range(g)]
    peak = None
    for r in rows:
        sg, dg = int(r["src_group"]), int(r["dst_group"])
        val = float(r["index"])
        if r["kind"] == "local":
            grid[sg][sg] = val
        else:
            grid[sg][dg] = val
        if peak is None or val > peak[0]:
            peak = (val, r["index"], sg, dg, r["kind"])
    annotations = [f"max index {peak[1]} ({peak[4]} {peak[2]}->{peak[3]})"]
    return grid, annotations


def fig_congestion_heatmap(run_dir: str, compare_dir: str | None = None, **_kw):
    grid, annotations = load_congestion(run_dir)
    fig, ax = plt.subplots(figsize=(5.5, 4.5))
    im = ax.imshow(grid, cmap="viridis", vmin=0.0, origin="upper")
    fig.colorbar(im, ax=ax, label="congestion index")
    ax.set_xlabel("destination group")
    ax.set_ylabel("source group")
    ax.set_title("link congestion index (diagonal = local links)")
    ax.annotate(annotations[0], (0.02, 1.02), xycoords="axes fraction", fontsize=7)
    return fig, annotations


# -- stall_graphviz ------------------------------------------------------


def load_stall(run_dir: str, from_group: int = 0):
    links = load_csv(run_dir, "linkstats.csv",
                     ["src_router", "dst_router", "kind", "stall_ns"])
    cong = load_csv(run_dir, "congestion_index.csv", ["src_group", "dst_group", "kind"])
    groups = max(int(r["src_group"]) for r in cong) + 1
    max_router = max(max(int(r["src_router"]), int(r["dst_router"])) for r in links)
    per_group = (max_router + 1) // groups
    local: dict[int, float] = {g: 0.0 for g in range(groups)}
    edges: dict[int, float] = {}
    for r in links:
        sg = int(r["src_router"]) // per_group
        dg = int(r["dst_router"]) // per_group
        stall = float(r["stall_ns"])
        if r["kind"] == "local":
            local[sg] += stall
        elif sg == from_group:
            edges[dg] = edges.get(dg, 0.0) + stall
    annotations = [f"G{g}: {local[g]:.1f}" for g in sorted(local)]
    return groups, local, edges, annotations


def fig_stall_graph(run_dir: str, compare_dir: str | None = None,
                    from_group: int = 0, **_kw):
    groups, local, edges, annotations = load_stall(run_dir, from_group)
    fig, ax = plt.subplots(figsize=(5.5, 5.5))
    coords = {}
    for g in range(groups):
        ang = 2 * math.pi * g / groups
        coords[g] = (math.cos(ang), math.sin(ang))
    max_local = max(local.values()) or 1.0
    max_edge = max(edges.values()) if edges else 1.0
    for dg, stall in sorted(edges.items()):
        x0, y0 = coords[from_group]
        x1, y1 = coords[dg]
        ax.plot([x0, x1], [y0, y1], color=plt.cm.Reds(0.15 + 0.85 * stall / max_edge),
                linewidth=1.5, zorder=1)
    for g, (x, y) in coords.items():
        size = 100 + 1900 * local[g] / max_local
        ax.scatter([x], [y], s=size, color="#1f77b4", zorder=2)
        ax.annotate(f"G{g}: {local[g]:.1f}", (x, y), ha="center", va="center",
                    fontsize=6, color="white", zorder=3)
    ax.set_xlim(-1.3, 1.3)
    ax.set_ylim(-1.3, 1.3)
    ax.set_aspect("equal")
    ax.axis("off")
    ax.set_title(f"stall time: circles = local per group, "
                 f"edges = global from G{from_group} (ns)")
    return fig, annotations


FIGURES = {
    "commtime_bars_with_std": fig_commtime_bars,
    "latency_box_with_percentiles": fig_latency_box,
    "throughput_timeline": fig_throughput_timeline,
    "congestion_heatmap": fig_congestion_heatmap,
    "stall_graphviz": fig_stall_graph,
}


def render(kind: str, out_path: str, run_dir: str, compare_dir: str | None = None,
           from_group: int = 0) -> list[str]:
    """Build one figure and write it; returns the annotation strings."""
    if kind not in FIGURES:
        raise SchemaError(f"unknown figure kind {kind!r}; "
                          f"choose from {sorted(FIGURES)}")
    fig, annotations = FIGURES[kind](run_dir, compare_dir=compare_dir,
                                     from_group=from_group)
    metadata = {"Date": None} if out_path.endswith(".svg") else {}
    fig.savefig(out_path, dpi=120, metadata=metadata)
    plt.close(fig)
    return annotations
