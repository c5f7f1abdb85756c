"""Application- and network-level interference metrics plus CSV emission.

Pure post-processing over immutable run records.  Percentiles use the
nearest-rank method on the exact sample set (sorted sample at index
ceil(p/100 * n)), so results are reproducible and match a sort-based oracle
bit for bit.  Times cross the API in integer picoseconds and are printed as
exact decimal nanoseconds.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

from .engine import PS_PER_NS, Channel, MetricStore, Packet, RankState, fmt_ns


class MetricsError(ValueError):
    pass


# -- communication intensity ------------------------------------------------------


@dataclass(frozen=True)
class IntensityReport:
    job: int
    motif: str
    total_bytes: int
    execution_ps: int
    injection_rate_bytes_per_s: float
    peak_ingress_bytes: int


def injection_rate(total_bytes: int, execution_ps: int) -> float:
    """Average bandwidth requirement in bytes/s: total bytes over execution time."""
    if execution_ps <= 0:
        raise MetricsError("injection rate undefined for a zero-duration job")
    return total_bytes / (execution_ps * 1e-12)


def peak_ingress(steps: list[list[tuple]]) -> int:
    """Max bytes one rank posts before its next blocking synchronization point."""
    peak = 0
    for prog in steps:
        cur = 0
        for step in prog:
            op = step[0]
            if op == "send":
                cur += step[2]
            elif op in ("recv", "waitall"):
                peak = max(peak, cur)
                cur = 0
        peak = max(peak, cur)
    return peak


def job_execution_ps(ranks: list[RankState], job: int) -> int:
    """Last rank end minus first rank start."""
    mine = [r for r in ranks if r.job == job]
    if not mine or any(r.end_ps is None for r in mine):
        raise MetricsError(f"job {job} has not completed")
    return max(r.end_ps for r in mine) - min(r.start_ps for r in mine)


# -- latency ------------------------------------------------------


@dataclass(frozen=True)
class LatencyStats:
    count: int
    mean_ps: float
    median_ps: int
    p95_ps: int
    p99_ps: int
    histogram: tuple[tuple[float, int], ...]  # (bin upper edge ns, count)


def nearest_rank(sorted_samples, p: float):
    """Nearest-rank percentile: element at ceil(p/100 * n), 1-indexed."""
    n = len(sorted_samples)
    idx = max(1, math.ceil(p / 100.0 * n))
    return sorted_samples[idx - 1]


def latency_stats(samples_ps: list[int], bins: int = 24) -> LatencyStats:
    if not samples_ps:
        raise MetricsError("latency stats over an empty sample set")
    s = sorted(samples_ps)
    mean = sum(s) / len(s)
    lo, hi = s[0], s[-1]
    edges = []
    if hi > lo:
        ratio = (hi / lo) ** (1.0 / bins) if lo > 0 else None
        for k in range(1, bins + 1):
            edges.append(lo * ratio ** k if ratio else lo + (hi - lo) * k / bins)
    else:
        edges = [float(hi)]
    hist = []
    i = 0
    for e in edges:
        j = i
        while j < len(s) and s[j] <= e + 1e-9:
            j += 1
        hist.append((e / PS_PER_NS, j - i))
        i = j
    return LatencyStats(
        count=len(s), mean_ps=mean,
        median_ps=nearest_rank(s, 50), p95_ps=nearest_rank(s, 95),
        p99_ps=nearest_rank(s, 99), histogram=tuple(hist))


def packet_latencies_ps(packets: list[Packet], job: int | None = None,
                        window: tuple[int, int] | None = None) -> list[int]:
    """Per-packet latency samples, optionally limited to a delivery window."""
    return [p.deliver_ps - p.inject_ps for p in packets
            if (job is None or p.job == job)
            and (window is None or window[0] <= p.deliver_ps < window[1])]


# -- throughput timeline ------------------------------------------------------


def throughput_timeline(packets: list[Packet], bin_ps: int,
                        job: int | None = None) -> list[tuple[int, int]]:
    """Delivered bytes bucketed by delivery time; bins are contiguous from 0."""
    if bin_ps <= 0:
        raise MetricsError("timeline bin must be positive")
    acc: dict[int, int] = {}
    last = 0
    for p in packets:
        if job is not None and p.job != job:
            continue
        b = p.deliver_ps // bin_ps
        acc[b] = acc.get(b, 0) + p.size
        last = max(last, b)
    if not acc:
        return []
    return [(b * bin_ps, acc.get(b, 0)) for b in range(last + 1)]


# -- congestion index ------------------------------------------------------


def link_congestion_index(ch: Channel, duration_ps: int) -> float:
    """Average throughput over capacity for one directed link, in [0, 1]."""
    if duration_ps <= 0:
        raise MetricsError("congestion index needs a positive duration")
    capacity_bytes = ch.gbps * 1e9 / 8.0 * duration_ps * 1e-12
    return ch.bytes_total / capacity_bytes


def congestion_index(channels: list[Channel], duration_ps: int,
                     groups: int, routers_per_group: int) -> dict[tuple[int, int, str], float]:
    """Per group pair (global) and per group (local) mean congestion index."""
    sums: dict[tuple[int, int, str], list[float]] = {}
    a = routers_per_group
    for ch in channels:
        if ch.kind not in ("local", "global"):
            continue
        sg, dg = ch.src_router // a, ch.dst_router // a
        key = (sg, dg, ch.kind)
        sums.setdefault(key, []).append(link_congestion_index(ch, duration_ps))
    return {key: sum(v) / len(v) for key, v in sorted(sums.items())}


# -- stall report ------------------------------------------------------


@dataclass(frozen=True)
class StallReport:
    per_link: dict[tuple[int, int, str], int]        # (src, dst, kind) -> stall ps
    per_group_local: dict[int, int]                  # group -> summed local stall
    per_group_pair_global: dict[tuple[int, int], int]


def stall_report(channels: list[Channel], routers_per_group: int) -> StallReport:
    per_link = {}
    local: dict[int, int] = {}
    pair: dict[tuple[int, int], int] = {}
    a = routers_per_group
    for ch in channels:
        if ch.kind not in ("local", "global"):
            continue
        per_link[(ch.src_router, ch.dst_router, ch.kind)] = ch.stall_ps
        if ch.kind == "local":
            g = ch.src_router // a
            local[g] = local.get(g, 0) + ch.stall_ps
        else:
            key = (ch.src_router // a, ch.dst_router // a)
            pair[key] = pair.get(key, 0) + ch.stall_ps
    return StallReport(per_link, local, pair)


def comm_time_stats(ranks: list[RankState], job: int) -> tuple[float, float]:
    """Mean and population std of per-rank communication time (ps)."""
    mine = [r.comm_ps for r in ranks if r.job == job]
    if not mine:
        raise MetricsError(f"no ranks for job {job}")
    mean = sum(mine) / len(mine)
    var = sum((x - mean) ** 2 for x in mine) / len(mine)
    return mean, math.sqrt(var)


# -- CSV emission ------------------------------------------------------

PACKETS_HEADER = ["packet_id", "job_id", "src_node", "dst_node", "size_bytes",
                  "inject_ns", "deliver_ns", "hops", "took_nonminimal"]
APPSTATS_HEADER = ["job_id", "rank", "node", "comm_ns", "compute_ns",
                   "start_ns", "end_ns"]
INTENSITY_HEADER = ["job_id", "motif", "ranks", "total_msg_bytes", "execution_ns",
                    "injection_rate_bytes_per_s", "peak_ingress_bytes"]
LATENCY_HEADER = ["job_id", "packets", "mean_ns", "median_ns", "p25_ns",
                  "p75_ns", "p95_ns", "p99_ns"]
CONGESTION_HEADER = ["src_group", "dst_group", "kind", "index"]
TIMELINE_HEADER = ["job_id", "bin_start_ns", "bytes"]


def write_packets_csv(path, packets: list[Packet], node_flat) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(PACKETS_HEADER)
        for p in sorted(packets, key=lambda p: p.pid):
            w.writerow([p.pid, p.job, node_flat(p.src), node_flat(p.dst), p.size,
                        fmt_ns(p.inject_ps), fmt_ns(p.deliver_ps), p.hops,
                        int(p.nonminimal)])


def write_linkstats_csv(path, channels: list[Channel], job_ids: list[int]) -> None:
    rows = [ch for ch in channels if ch.kind in ("local", "global")]
    rows.sort(key=lambda ch: (ch.src_router, ch.dst_router, ch.kind, ch.cid))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["src_router", "dst_router", "kind", "bytes_total"]
                   + [f"bytes_job_{j}" for j in job_ids] + ["stall_ns"])
        for ch in rows:
            w.writerow([ch.src_router, ch.dst_router, ch.kind, ch.bytes_total]
                       + [ch.bytes_by_job.get(j, 0) for j in job_ids]
                       + [fmt_ns(ch.stall_ps)])


def write_appstats_csv(path, ranks: list[RankState]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(APPSTATS_HEADER)
        for r in sorted(ranks, key=lambda r: (r.job, r.rank)):
            w.writerow([r.job, r.rank, r.node, fmt_ns(r.comm_ps),
                        fmt_ns(r.compute_ps), fmt_ns(r.start_ps),
                        fmt_ns(r.end_ps if r.end_ps is not None else -1)])


def write_intensity_csv(path, reports: list[IntensityReport], ranks_by_job) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(INTENSITY_HEADER)
        for r in reports:
            w.writerow([r.job, r.motif, ranks_by_job[r.job], r.total_bytes,
                        fmt_ns(r.execution_ps),
                        f"{r.injection_rate_bytes_per_s:.3f}", r.peak_ingress_bytes])


def write_latency_summary_csv(path, metrics: MetricStore, job_ids: list[int]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(LATENCY_HEADER)
        for job in list(job_ids) + [None]:
            samples = packet_latencies_ps(metrics.packets, job)
            if not samples:
                continue
            st = latency_stats(samples)
            srt = sorted(samples)
            w.writerow(["all" if job is None else job, st.count,
                        f"{st.mean_ps / PS_PER_NS:.3f}", fmt_ns(st.median_ps),
                        fmt_ns(nearest_rank(srt, 25)), fmt_ns(nearest_rank(srt, 75)),
                        fmt_ns(st.p95_ps), fmt_ns(st.p99_ps)])


def write_congestion_csv(path, channels, duration_ps, groups, routers_per_group) -> None:
    agg = congestion_index(channels, duration_ps, groups, routers_per_group)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CONGESTION_HEADER)
        for (sg, dg, kind), idx in agg.items():
            w.writerow([sg, dg, kind, f"{idx:.6f}"])


def write_throughput_csv(path, metrics: MetricStore, job_ids: list[int],
                         bin_ns: int = 100_000) -> None:
    bin_ps = bin_ns * PS_PER_NS
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TIMELINE_HEADER)
        for job in job_ids:
            for start, nbytes in throughput_timeline(metrics.packets, bin_ps, job):
                w.writerow([job, fmt_ns(start), nbytes])
