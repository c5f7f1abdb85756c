"""Acceptance suite: one test per criterion, one PASS/FAIL line each.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the lines as they
print.  Desk-scale scenarios (9 groups, 72 hosts) keep every criterion
within laptop budgets; ordering criteria compare medians over 5 seeds.
"""

import json
import math
import random
import statistics

import pytest

from dflysim.harness import load_scenario, run_scenario, scenario_from_dict
from dflysim.metrics import (
    comm_time_stats,
    latency_stats,
    link_congestion_index,
    nearest_rank,
    packet_latencies_ps,
    peak_ingress,
)
from dflysim.workload import build_motif

from conftest import compute, make_engine, recv, send

HOP_BOUND = {"min": 3, "ugalg": 5, "ugaln": 5, "par": 6, "qadaptive": 5}
ALL_ALGS = ["min", "ugalg", "ugaln", "par", "qadaptive"]
SEEDS = [1, 2, 3, 4, 5]

_audits = []


def record(criterion: str, ok: bool, detail: str = "") -> None:
    print(f"ACCEPTANCE {criterion}: {'PASS' if ok else 'FAIL'}"
          + (f" ({detail})" if detail else ""))
    assert ok, f"{criterion}: {detail}"


def audit_run(alg: str, result) -> dict:
    """Extract the safety/bound audit from a run, then let it be freed."""
    rep = result.report
    m = rep.metrics
    hop_bound = HOP_BOUND[alg]
    hops_ok = all(p.hops <= hop_bound for p in m.packets)
    vc_ok = True
    for p in m.packets:
        prev = {}
        for kind, vc in p.vc_log:
            if kind in ("local", "global"):
                if vc <= prev.get(kind, -1):
                    vc_ok = False
                prev[kind] = vc
        if prev.get("local", 0) > 3 or prev.get("global", 0) > 1:
            vc_ok = False
    occupancy_ok = all(ch.max_occupancy <= ch.capacity for ch in rep.channels)
    credits_ok = all(
        all(0 <= c <= ch.capacity for c in ch.credits) for ch in rep.channels)
    if rep.drained:
        credits_ok = credits_ok and all(
            all(c == ch.capacity for c in ch.credits) for ch in rep.channels)
    job_bytes_ok = all(
        sum(ch.bytes_by_job.values()) == ch.bytes_total for ch in rep.channels)
    duration = max(rep.end_ps, 1)
    cong = [link_congestion_index(ch, duration) for ch in rep.channels
            if ch.kind in ("local", "global")]
    timeline_ok = all(
        rs.comm_ps + rs.compute_ps <= rs.end_ps - rs.start_ps
        for rs in m.ranks if rs.end_ps is not None)
    # up to (hosts + locals + globals) input ports x 4 VCs can stall on one output
    t = result.scenario.topology
    contributors = (t.hosts_per_router + t.routers_per_group - 1
                    + t.global_links_per_router) * 4
    stall_ok = all(ch.stall_ps <= duration * contributors
                   for ch in rep.channels if ch.kind in ("local", "global"))
    audit = {
        "alg": alg,
        "drained": rep.drained,
        "conserved": m.injected == m.delivered,
        "hops_ok": hops_ok,
        "vc_ok": vc_ok,
        "occupancy_ok": occupancy_ok,
        "credits_ok": credits_ok,
        "job_bytes_ok": job_bytes_ok,
        "congestion_ok": all(0.0 <= c <= 1.0 for c in cong),
        "timeline_ok": timeline_ok,
        "stall_ok": stall_ok,
    }
    _audits.append(audit)
    return audit


def run_audited(path_or_scenario, alg, seed):
    if isinstance(path_or_scenario, str):
        scenario = load_scenario(path_or_scenario)
    else:
        scenario = path_or_scenario
    result = run_scenario(scenario, routing=alg, seed=seed)
    audit_run(alg, result)
    return result


# -- shared heavy run groups --------------------------------------------------


@pytest.fixture(scope="module")
def interference_runs():
    """FFT3D standalone / +UR / +Halo3D under PAR, +Halo3D under Q-adaptive."""
    out = {}
    for seed in SEEDS:
        row = {}
        for key, path, alg in (
                ("alone", "scenarios/desk/standalone_fft3d.json", "par"),
                ("ur", "scenarios/desk/pairwise_fft3d_ur.json", "par"),
                ("halo_par", "scenarios/desk/pairwise_fft3d_halo3d.json", "par"),
                ("halo_qa", "scenarios/desk/pairwise_fft3d_halo3d.json", "qadaptive")):
            r = run_audited(path, alg, seed)
            mean, _std = comm_time_stats(r.report.metrics.ranks, 0)
            p99 = latency_stats(packet_latencies_ps(r.report.metrics.packets, 0)).p99_ps
            row[key] = {"comm": mean, "p99": p99,
                        "placement": tuple(r.placements[0])}
        out[seed] = row
    return out


@pytest.fixture(scope="module")
def mixed_runs():
    drain = {}
    for alg in ALL_ALGS:
        r = run_audited("scenarios/desk/mixed_desk.json", alg, 1)
        drain[alg] = r.report.drained
    p99 = {"par": [], "qadaptive": []}
    for seed in SEEDS:
        for alg in ("par", "qadaptive"):
            r = run_audited("scenarios/desk/mixed_desk.json", alg, seed)
            st = latency_stats(packet_latencies_ps(r.report.metrics.packets))
            p99[alg].append(st.p99_ps)
    return {"drain": drain, "p99": p99}


# -- criteria ------------------------------------------------------------------


def test_determinism_byte_identical_csvs(tmp_path):
    s = load_scenario("scenarios/desk/mixed_desk.json")
    dirs = [tmp_path / "a", tmp_path / "b"]
    for d in dirs:
        run_scenario(s, out_dir=str(d), routing="par", seed=7)
    same = all(
        (dirs[0] / f).read_bytes() == (dirs[1] / f).read_bytes()
        for f in ("packets.csv", "linkstats.csv", "appstats.csv"))
    record("determinism", same, "packets/linkstats/appstats byte-identical")


def test_routing_sanity_idle_minimal():
    results = {}
    for alg in ALL_ALGS:
        kw = {"epsilon": 0.01} if alg == "qadaptive" else {}
        eng = make_engine(alg=alg, seed=3, **kw)
        sender = []
        for k in range(200):
            sender.append(compute(1000))
            sender.append(send(1, 512, k))
        eng.install_job(0, [sender, [recv(0, k) for k in range(200)]], [0, 40])
        eng.start()
        rep = eng.run()
        frac = sum(1 for p in rep.metrics.packets if not p.nonminimal) / 200
        results[alg] = frac
    record("routing-sanity-idle", all(f >= 0.99 for f in results.values()),
           " ".join(f"{a}={f:.3f}" for a, f in results.items()))


def test_routing_sanity_adversarial_throughput():
    tp = {}
    for alg in ALL_ALGS:
        r = run_audited("scenarios/desk/adversarial_shift.json", alg, 1)
        total = sum(p.size for p in r.report.metrics.packets)
        tp[alg] = total / (r.report.end_ps * 1e-12)
    ok = (tp["ugalg"] >= 1.2 * tp["min"] and tp["ugaln"] >= 1.2 * tp["min"]
          and tp["par"] >= 1.2 * tp["min"] and tp["qadaptive"] >= tp["min"])
    record("routing-sanity-adversarial", ok,
           " ".join(f"{a}={v / 1e9:.0f}GB/s" for a, v in tp.items()))


def test_interference_ordering(interference_runs):
    med = {k: statistics.median(interference_runs[s][k]["comm"] for s in SEEDS)
           for k in ("alone", "ur", "halo_par", "halo_qa")}
    gap_ur = med["ur"] / med["alone"] - 1
    gap_halo = med["halo_par"] / med["ur"] - 1
    ok = (gap_ur >= 0.05 and gap_halo >= 0.05
          and med["halo_qa"] < med["halo_par"])
    for seed in SEEDS:  # the target's mapping never changes across runs
        row = interference_runs[seed]
        assert row["alone"]["placement"] == row["ur"]["placement"] \
            == row["halo_par"]["placement"]
    record("interference-ordering", ok,
           f"alone={med['alone'] / 1e6:.1f}us +ur={gap_ur * 100:.1f}% "
           f"+halo={gap_halo * 100:.1f}% qa={med['halo_qa'] / 1e6:.1f}us "
           f"< par={med['halo_par'] / 1e6:.1f}us")


def test_tail_latency_ordering(interference_runs):
    qa = [interference_runs[s]["halo_qa"]["p99"] for s in SEEDS]
    par = [interference_runs[s]["halo_par"]["p99"] for s in SEEDS]
    ok = statistics.median(qa) < statistics.median(par)
    record("tail-latency-ordering", ok,
           f"interfered FFT3D p99 qa={statistics.median(qa) / 1e3:.0f}ns "
           f"< par={statistics.median(par) / 1e3:.0f}ns "
           f"(per-seed wins: {sum(1 for a, b in zip(qa, par) if a < b)}/5)")


def test_peak_ingress_bully():
    deltas = {"lqcd": [], "s5d": []}
    for seed in (1, 2, 3):
        lq_alone, _ = comm_time_stats(run_audited(
            "scenarios/desk/standalone_lqcd.json", "par", seed).report.metrics.ranks, 0)
        s5_alone, _ = comm_time_stats(run_audited(
            "scenarios/desk/standalone_stencil5d.json", "par", seed).report.metrics.ranks, 0)
        lq_co, _ = comm_time_stats(run_audited(
            "scenarios/desk/pairwise_lqcd_stencil5d.json", "par", seed).report.metrics.ranks, 0)
        s5_co, _ = comm_time_stats(run_audited(
            "scenarios/desk/pairwise_stencil5d_lqcd.json", "par", seed).report.metrics.ranks, 0)
        deltas["lqcd"].append(lq_co / lq_alone - 1)
        deltas["s5d"].append(s5_co / s5_alone - 1)
    d_lq = statistics.median(deltas["lqcd"])
    d_s5 = statistics.median(deltas["s5d"])
    ok = d_s5 <= 0.05 and d_lq >= 2 * d_s5
    record("peak-ingress-bully", ok,
           f"stencil5d delta={d_s5 * 100:.1f}% <= 5%, "
           f"lqcd delta={d_lq * 100:.1f}% >= 2x")


# Published intensity rows: (total MB, execution ms, listed GB/s).
TABLE_ROWS = [
    ("UR", 11829.48, 13.31, 888.48), ("LU", 13713.22, 13.71, 999.88),
    ("FFT3D", 15781.09, 12.53, 1259.35), ("Halo3D", 47769.10, 10.85, 4403.81),
    ("LQCD", 11924.31, 13.79, 864.70), ("Stencil5D", 9833.95, 13.70, 717.87),
    ("CosmoFlow", 2373.84, 13.65, 173.86), ("DL", 9714.44, 11.86, 819.12),
    ("LULESH", 17900.12, 12.34, 1450.78),
]

# Peak ingress of every shipped full-scale motif config, in exact bytes.
SHIPPED_PEAKS = [
    ("ur", 528, {"msg_bytes": 3072, "rounds": 2, "gap_ns": 0.0}, 3072),
    ("lu", 484, {"msg_bytes": 15000, "iterations": 1, "compute_ns": 0.0,
                 "dims": [22, 22]}, 30000),
    ("fft3d", 528, {"msg_bytes": 51680, "iterations": 1, "compute_ns": 0.0,
                    "dims": [22, 24]}, 51680),
    ("halo3d", 528, {"msg_bytes": 192000, "iterations": 1, "compute_ns": 0.0,
                     "dims": [6, 8, 11]}, 1_152_000),
    ("lqcd", 528, {"msg_bytes": 575000, "iterations": 1, "compute_ns": 0.0,
                   "dims": [3, 4, 4, 11]}, 4_600_000),
    ("stencil5d", 243, {"msg_bytes": 1_400_000, "iterations": 1,
                        "compute_ns": 0.0, "dims": [3, 3, 3, 3, 3]}, 14_000_000),
    ("cosmoflow", 528, {"msg_bytes": 1_126_000, "interval_ns": 0.0,
                        "rounds": 1}, 2_252_000),
    ("dl", 528, {"msg_bytes": 1_150_000, "interval_ns": 0.0, "rounds": 1},
     2_300_000),
    ("lulesh", 512, {"stencil_bytes": 75000, "sweep_bytes": 4970,
                     "iterations": 1, "compute_ns": 0.0}, 1_950_000),
]


def test_metric_exactness():
    from dflysim.metrics import injection_rate

    rates_ok = True
    for app, mb, ms, gbps in TABLE_ROWS:
        rate = injection_rate(round(mb * 1e6), round(ms * 1e9)) / 1e9
        if abs(rate - gbps) / gbps >= 0.01:
            rates_ok = False
    peaks_ok = True
    for motif, ranks, params, want in SHIPPED_PEAKS:
        prog = build_motif(motif, ranks, params, random.Random(0))
        if prog.peak_ingress != want or peak_ingress(prog.steps) != want:
            peaks_ok = False
    rng = random.Random(2024)
    samples = [rng.randrange(1, 10_000_000) for _ in range(100_000)]
    counts = {}
    for x in samples:
        counts[x] = counts.get(x, 0) + 1
    srt = sorted(samples)
    pct_ok = True
    for p in (50, 95, 99):
        need = math.ceil(p / 100 * len(samples))
        seen = 0
        oracle = None
        for v in sorted(counts):
            seen += counts[v]
            if seen >= need:
                oracle = v
                break
        if nearest_rank(srt, p) != oracle:
            pct_ok = False
    cong_ok = all(a["congestion_ok"] for a in _audits)
    record("metric-exactness", rates_ok and peaks_ok and pct_ok and cong_ok,
           f"rates_ok={rates_ok} peaks_ok={peaks_ok} percentiles_ok={pct_ok} "
           f"congestion_in_unit_interval={cong_ok}")


def test_collective_oracles():
    from dflysim.workload import motif_allreduce, motif_alltoall

    matrix_ok = True
    for P in (2, 3, 4, 5, 6, 7, 8):
        prog = motif_alltoall(P, 256)
        pairs = {}
        for r, steps in enumerate(prog.steps):
            for s in steps:
                if s[0] == "send":
                    pairs[(r, s[1])] = pairs.get((r, s[1]), 0) + 1
        want = {(a, b): 1 for a in range(P) for b in range(P) if a != b}
        if pairs != want:
            matrix_ok = False
    sums_ok = True
    for ranks in range(1, 65):
        values = [(r * 13 + 5) % 97 for r in range(ranks)]
        prog = motif_allreduce(ranks, 64, 0.0, 1, values=values)
        eng = make_engine()
        eng.install_job(0, prog.steps, list(range(ranks)))
        eng.start()
        rep = eng.run()
        want = sum(values)
        if any(rs.value != want for rs in rep.metrics.ranks):
            sums_ok = False
    record("collective-oracles", matrix_ok and sums_ok,
           f"alltoall matrices P<=8 ok={matrix_ok}, "
           f"allreduce sums ranks 1..64 ok={sums_ok}")


def test_qlearning_convergence():
    from dflysim.qlearn import Feedback, QTable, q_update
    from dflysim.topology import RouterId, TopologyConfig

    alpha, q0, target = 0.3, 5000.0, 230.0
    table = QTable(lambda _k, _p: q0)
    decay_ok = True
    for n in range(1, 120):
        q_update(table, ("local", 0), ("g", 1),
                 Feedback(0, ("g", 1), 0.0, 0.0, target), alpha)
        got = table.estimate(("g", 1), ("local", 0)) - target
        want = (1 - alpha) ** n * (q0 - target)
        if not math.isclose(got, want, rel_tol=1e-9, abs_tol=1e-9):
            decay_ok = False
    cfg = TopologyConfig(groups=4, routers_per_group=3, hosts_per_router=1,
                         global_links_per_router=1)
    eng = make_engine(alg="qadaptive", seed=5, config=cfg, epsilon=0.05, alpha=0.1)
    top = eng.top
    sender = []
    for k in range(400):
        sender.append(compute(500))
        sender.append(send(1, 512, k))
    dst_node = top.node_flat(next(n for n in top.nodes() if n.group == 2))
    eng.install_job(0, [sender, [recv(0, k) for k in range(400)]], [0, dst_node])
    eng.start()
    eng.run()
    rows = eng.policy.tables[0].level1[2]
    updates = sum(e[1] for e in rows.values())
    best_port = min(rows, key=lambda p: rows[p][0])
    minimal_ports = set()
    for owner, gport in top.global_owners(0, 2):
        if owner == RouterId(0, 0):
            minimal_ports.add(("global", gport))
        else:
            minimal_ports.add(("local", top.local_port(RouterId(0, 0), owner.local).index))
    conv_ok = updates <= 500 and best_port in minimal_ports
    record("qlearning-convergence", decay_ok and conv_ok,
           f"(1-a)^n decay ok={decay_ok}; greedy minimal after "
           f"{updates} updates={conv_ok}")


def test_mixed_workload_drain(mixed_runs):
    drained = all(mixed_runs["drain"].values())
    qa = statistics.median(mixed_runs["p99"]["qadaptive"])
    par = statistics.median(mixed_runs["p99"]["par"])
    record("mixed-workload-drain", drained and qa <= par,
           f"all 5 algorithms drained={drained}; system p99 "
           f"qa={qa / 1e3:.0f}ns <= par={par / 1e3:.0f}ns")


def test_conservation_and_safety_suite(interference_runs, mixed_runs):
    # Runs after the heavy fixtures have populated the audit registry.
    assert _audits, "no runs audited"
    keys = ("conserved", "occupancy_ok", "credits_ok", "job_bytes_ok",
            "timeline_ok", "stall_ok")
    ok = all(all(a[k] for k in keys) for a in _audits)
    record("conservation-safety", ok, f"{len(_audits)} runs audited")


def test_hop_vc_bounds_all_runs(interference_runs, mixed_runs):
    assert _audits, "no runs audited"
    ok = all(a["hops_ok"] and a["vc_ok"] for a in _audits)
    record("hop-vc-bounds", ok,
           f"{len(_audits)} runs: <=3 MIN, <=5 UGAL/Q, <=6 PAR, ascending VCs")
