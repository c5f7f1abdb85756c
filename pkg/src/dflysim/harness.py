"""Experiment orchestration: scenarios, placement, runs, comparison, sweeps.

A scenario JSON names the topology, routing algorithm, jobs, placement
policy, seed, and duration mode.  Every random stream is derived from the
scenario seed with a stable hash, and each job's placement draws from its
own job-keyed stream over the nodes left free by earlier jobs.  A job
listed first therefore keeps a byte-identical process-to-node mapping
whether or not background jobs follow it, which is what makes standalone
versus co-run communication times directly comparable.

Exit codes: 0 success, 2 configuration error, 3 deadlock.
"""

from __future__ import annotations

import hashlib
import json
import multiprocessing
import os
import random
import time
from dataclasses import dataclass, field, replace

from . import __version__, metrics
from .engine import PS_PER_NS, DeadlockError, Engine, SimulationReport
from .qlearn import QAdaptivePolicy
from .routing import make_policy
from .topology import LinkParams, Topology, TopologyConfig, TopologyError, build
from .workload import MotifProgram, WorkloadError, build_motif

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DEADLOCK = 3

ROUTING_ALGORITHMS = ("min", "ugalg", "ugaln", "par", "qadaptive")

CSV_FILES = ("packets.csv", "linkstats.csv", "appstats.csv", "intensity.csv",
             "latency_summary.csv", "congestion_index.csv", "throughput_timeline.csv")


class ConfigError(ValueError):
    pass


class ProtocolError(RuntimeError):
    """The interference-measurement protocol was violated."""


def derive_seed(*parts) -> int:
    """Stable 64-bit sub-seed from the run seed and a purpose label."""
    text = "/".join(str(p) for p in parts)
    return int.from_bytes(hashlib.sha256(text.encode()).digest()[:8], "big")


# -- scenario model ------------------------------------------------------------------


@dataclass
class JobSpec:
    id: int
    motif: str
    ranks: int
    params: dict = field(default_factory=dict)
    placement: str | None = None  # None -> scenario default


@dataclass
class Scenario:
    name: str
    topology: TopologyConfig
    routing: dict
    jobs: list[JobSpec]
    placement: str = "random"
    seed: int = 1
    duration_ns: int | None = None  # None -> run to drain
    q_table_dump: str | None = None

    def to_dict(self) -> dict:
        t = self.topology
        return {
            "name": self.name,
            "topology": {
                "groups": t.groups,
                "routers_per_group": t.routers_per_group,
                "hosts_per_router": t.hosts_per_router,
                "global_links_per_router": t.global_links_per_router,
                "local_link_gbps": t.local_link.bandwidth_gbps,
                "global_link_gbps": t.global_link.bandwidth_gbps,
                "local_latency_ns": t.local_link.latency_ns,
                "global_latency_ns": t.global_link.latency_ns,
            },
            "routing": dict(self.routing),
            "jobs": [
                {"id": j.id, "motif": j.motif, "ranks": j.ranks,
                 "params": dict(j.params),
                 **({"placement": j.placement} if j.placement else {})}
                for j in self.jobs
            ],
            "placement": self.placement,
            "seed": self.seed,
            "duration_ns": self.duration_ns,
            **({"q_table_dump": self.q_table_dump} if self.q_table_dump else {}),
        }


def topology_from_dict(d: dict) -> TopologyConfig:
    known = {"groups", "routers_per_group", "hosts_per_router",
             "global_links_per_router", "local_link_gbps", "global_link_gbps",
             "local_latency_ns", "global_latency_ns"}
    unknown = set(d) - known
    if unknown:
        raise ConfigError(f"unknown topology keys: {sorted(unknown)}")
    return TopologyConfig(
        groups=d.get("groups", 33),
        routers_per_group=d.get("routers_per_group", 8),
        hosts_per_router=d.get("hosts_per_router", 4),
        global_links_per_router=d.get("global_links_per_router", 4),
        local_link=LinkParams(d.get("local_link_gbps", 200.0),
                              d.get("local_latency_ns", 30)),
        global_link=LinkParams(d.get("global_link_gbps", 200.0),
                               d.get("global_latency_ns", 300)),
    )


def scenario_from_dict(d: dict, name: str = "scenario") -> Scenario:
    try:
        topo = topology_from_dict(d.get("topology", {}))
        topo.validate()
    except TopologyError as exc:
        raise ConfigError(f"topology: {exc}") from exc
    routing = dict(d.get("routing", {}))
    routing.setdefault("algorithm", "min")
    if routing["algorithm"] not in ROUTING_ALGORITHMS:
        raise ConfigError(
            f"routing.algorithm must be one of {ROUTING_ALGORITHMS}, "
            f"got {routing['algorithm']!r}")
    jobs_raw = d.get("jobs", [])
    if not isinstance(jobs_raw, list):
        raise ConfigError("jobs must be a list")
    jobs = []
    for i, j in enumerate(jobs_raw):
        if "motif" not in j or "ranks" not in j:
            raise ConfigError(f"job {i} needs 'motif' and 'ranks'")
        jobs.append(JobSpec(
            id=j.get("id", i), motif=j["motif"], ranks=int(j["ranks"]),
            params=dict(j.get("params", {})), placement=j.get("placement")))
    ids = [j.id for j in jobs]
    if len(set(ids)) != len(ids):
        raise ConfigError(f"duplicate job ids: {ids}")
    placement = d.get("placement", "random")
    if placement not in ("random", "contiguous"):
        raise ConfigError(f"placement must be random or contiguous, got {placement!r}")
    duration = d.get("duration_ns")
    if duration is not None and duration <= 0:
        raise ConfigError("duration_ns must be positive")
    total_ranks = sum(j.ranks for j in jobs)
    if total_ranks > topo.num_hosts:
        raise ConfigError(
            f"jobs need {total_ranks} nodes but the topology has {topo.num_hosts}")
    return Scenario(
        name=d.get("name", name), topology=topo, routing=routing, jobs=jobs,
        placement=placement, seed=int(d.get("seed", 1)), duration_ns=duration,
        q_table_dump=d.get("q_table_dump"))


def load_scenario(path) -> Scenario:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot load scenario {path}: {exc}") from exc
    return scenario_from_dict(data, name=os.path.splitext(os.path.basename(path))[0])


# -- placement ------------------------------------------------------------------


def place(jobs: list[JobSpec], topology: Topology, default_policy: str,
          seed: int) -> dict[int, list[int]]:
    """Map every job's ranks to nodes; jobs draw in order from the free pool.

    random: uniform sample without replacement from the free nodes, from a
    job-id-keyed stream.  contiguous: first free nodes in (group, router,
    slot) order.
    """
    free = list(range(topology.config.num_hosts))
    out: dict[int, list[int]] = {}
    for job in jobs:
        policy = job.placement or default_policy
        if job.ranks > len(free):
            raise ConfigError(
                f"job {job.id} needs {job.ranks} nodes, only {len(free)} free "
                f"(short by {job.ranks - len(free)})")
        if policy == "contiguous":
            chosen = free[:job.ranks]
        else:
            rng = random.Random(derive_seed(seed, "place", job.id))
            chosen = rng.sample(free, job.ranks)
        out[job.id] = chosen
        taken = set(chosen)
        free = [n for n in free if n not in taken]
    return out


# -- running ------------------------------------------------------------------


@dataclass
class RunResult:
    scenario: Scenario
    report: SimulationReport
    placements: dict[int, list[int]]
    programs: dict[int, MotifProgram]
    out_dir: str | None
    intensity: list[metrics.IntensityReport]


def build_engine(scenario: Scenario) -> tuple[Engine, dict[int, list[int]], dict[int, MotifProgram]]:
    topo = build(scenario.topology)
    routing = scenario.routing
    alg = routing["algorithm"]
    kwargs = {}
    if alg == "qadaptive":
        kwargs = {"alpha": routing.get("q_alpha", 0.1),
                  "epsilon": routing.get("q_epsilon", 0.05),
                  "initial_ns": routing.get("q_init_ns")}
    policy = make_policy(alg, seed=derive_seed(scenario.seed, "routing"),
                         bias=routing.get("ugal_bias", 0), **kwargs)
    engine = Engine(topo, policy)
    placements = place(scenario.jobs, topo, scenario.placement, scenario.seed)
    programs: dict[int, MotifProgram] = {}
    for job in scenario.jobs:
        rng = random.Random(derive_seed(scenario.seed, "workload", job.id))
        nodes = placements[job.id]
        rank_groups = [topo.node_from_flat(n).group for n in nodes]
        try:
            prog = build_motif(job.motif, job.ranks, job.params, rng,
                               rank_groups=rank_groups,
                               num_groups=topo.config.groups)
        except WorkloadError as exc:
            raise ConfigError(f"job {job.id}: {exc}") from exc
        programs[job.id] = prog
        engine.install_job(job.id, prog.steps, nodes)
    return engine, placements, programs


def run_scenario(scenario: Scenario, out_dir: str | None = None,
                 routing: str | None = None, seed: int | None = None) -> RunResult:
    """Execute one scenario and, if out_dir is given, write all artifacts."""
    if routing is not None:
        new_routing = dict(scenario.routing, algorithm=routing)
        scenario = replace(scenario, routing=new_routing)
    if seed is not None:
        scenario = replace(scenario, seed=seed)
    wall_start = time.time()
    engine, placements, programs = build_engine(scenario)
    engine.start()
    until_ps = scenario.duration_ns * PS_PER_NS if scenario.duration_ns else None
    report = engine.run(until_ps)
    intensity = []
    for job in scenario.jobs:
        prog = programs[job.id]
        ranks = [r for r in report.metrics.ranks if r.job == job.id]
        if all(r.done for r in ranks):
            exec_ps = metrics.job_execution_ps(report.metrics.ranks, job.id)
            rate = metrics.injection_rate(report.metrics.job_bytes[job.id], exec_ps)
            intensity.append(metrics.IntensityReport(
                job.id, prog.name, report.metrics.job_bytes[job.id], exec_ps,
                rate, metrics.peak_ingress(prog.steps)))
    result = RunResult(scenario, report, placements, programs, out_dir, intensity)
    if out_dir is not None:
        write_outputs(result, engine, wall_start)
    return result


def write_outputs(result: RunResult, engine: Engine, wall_start: float) -> None:
    out = result.out_dir
    os.makedirs(out, exist_ok=True)
    s = result.scenario
    m = result.report.metrics
    job_ids = [j.id for j in s.jobs]
    topo = engine.top
    metrics.write_packets_csv(os.path.join(out, "packets.csv"), m.packets,
                              topo.node_flat)
    metrics.write_linkstats_csv(os.path.join(out, "linkstats.csv"),
                                result.report.channels, job_ids)
    metrics.write_appstats_csv(os.path.join(out, "appstats.csv"), m.ranks)
    metrics.write_intensity_csv(os.path.join(out, "intensity.csv"),
                                result.intensity,
                                {j.id: j.ranks for j in s.jobs})
    metrics.write_latency_summary_csv(os.path.join(out, "latency_summary.csv"),
                                      m, job_ids)
    duration = max(result.report.end_ps, 1)
    metrics.write_congestion_csv(os.path.join(out, "congestion_index.csv"),
                                 result.report.channels, duration,
                                 s.topology.groups, s.topology.routers_per_group)
    metrics.write_throughput_csv(os.path.join(out, "throughput_timeline.csv"),
                                 m, job_ids)
    if s.q_table_dump and isinstance(engine.policy, QAdaptivePolicy):
        dump = s.q_table_dump
        if not os.path.isabs(dump):
            dump = os.path.join(out, dump)
        engine.policy.dump_csv(dump)
    scen = s.to_dict()
    blob = json.dumps(scen, sort_keys=True).encode()
    manifest = {
        "scenario": scen,
        "scenario_sha256": hashlib.sha256(blob).hexdigest(),
        "seed": s.seed,
        "routing": s.routing["algorithm"],
        "placements": {str(k): v for k, v in sorted(result.placements.items())},
        "code_version": __version__,
        "drained": result.report.drained,
        "end_ns": result.report.end_ps / PS_PER_NS,
        "events": result.report.events_processed,
        "wall_clock_s": round(time.time() - wall_start, 3),
    }
    with open(os.path.join(out, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


# -- run comparison ------------------------------------------------------------------


def _read_csv(path) -> list[dict]:
    import csv as _csv

    with open(path, newline="") as fh:
        return list(_csv.DictReader(fh))


def compare(base_dir: str, other_dir: str, job_id: int) -> dict:
    """Comm-time and latency deltas for one job across two runs.

    Requires the job's rank-to-node mapping to be identical in both runs;
    anything else breaks the interference-isolation protocol.
    """
    stats = {}
    for label, d in (("base", base_dir), ("other", other_dir)):
        rows = [r for r in _read_csv(os.path.join(d, "appstats.csv"))
                if int(r["job_id"]) == job_id]
        if not rows:
            raise ProtocolError(f"job {job_id} not present in {d}")
        stats[label] = rows
    map_a = {int(r["rank"]): int(r["node"]) for r in stats["base"]}
    map_b = {int(r["rank"]): int(r["node"]) for r in stats["other"]}
    if map_a != map_b:
        raise ProtocolError(
            f"placement mismatch for job {job_id}: runs are not comparable")
    out = {"job": job_id}
    for label, rows in stats.items():
        comm = [float(r["comm_ns"]) for r in rows]
        mean = sum(comm) / len(comm)
        var = sum((c - mean) ** 2 for c in comm) / len(comm)
        out[label] = {"mean_comm_ns": mean, "std_comm_ns": var ** 0.5}
    base_mean = out["base"]["mean_comm_ns"]
    out["comm_delta_pct"] = (
        (out["other"]["mean_comm_ns"] - base_mean) / base_mean * 100.0
        if base_mean else 0.0)
    for label, d in (("base", base_dir), ("other", other_dir)):
        lat = [float(r["deliver_ns"]) - float(r["inject_ns"])
               for r in _read_csv(os.path.join(d, "packets.csv"))
               if int(r["job_id"]) == job_id]
        lat.sort()
        out[label]["p50_ns"] = metrics.nearest_rank(lat, 50)
        out[label]["p95_ns"] = metrics.nearest_rank(lat, 95)
        out[label]["p99_ns"] = metrics.nearest_rank(lat, 99)
    for p in ("p50_ns", "p95_ns", "p99_ns"):
        base_p = out["base"][p]
        out[f"{p[:-3]}_delta_pct"] = (
            (out["other"][p] - base_p) / base_p * 100.0 if base_p else 0.0)
    return out


# -- sweeps ------------------------------------------------------------------


def _sweep_one(args) -> dict:
    scenario_path, routing, seed, out_dir = args
    scenario = load_scenario(scenario_path)
    result = run_scenario(scenario, out_dir=out_dir, routing=routing, seed=seed)
    comm = {}
    for job in result.scenario.jobs:
        mean, std = metrics.comm_time_stats(result.report.metrics.ranks, job.id)
        comm[job.id] = {"mean_comm_ns": mean / PS_PER_NS, "std_comm_ns": std / PS_PER_NS}
    return {"routing": routing, "seed": seed, "out_dir": out_dir,
            "drained": result.report.drained, "jobs": comm}


def sweep(scenario_path: str, routings: list[str], seeds: list[int],
          out_root: str, processes: int | None = None) -> list[dict]:
    """Run routing x seed in parallel OS processes; one engine per process."""
    load_scenario(scenario_path)  # validate before forking
    tasks = []
    for routing in routings:
        if routing not in ROUTING_ALGORITHMS:
            raise ConfigError(f"unknown routing {routing!r} in sweep")
        for seed in seeds:
            out_dir = os.path.join(out_root, f"{routing}_s{seed}")
            tasks.append((scenario_path, routing, seed, out_dir))
    if processes is None:
        processes = int(os.environ.get("DFLYSIM_THREADS", "0")) or os.cpu_count() or 1
    processes = max(1, min(processes, len(tasks)))
    if processes == 1:
        results = [_sweep_one(t) for t in tasks]
    else:
        with multiprocessing.Pool(processes) as pool:
            results = pool.map(_sweep_one, tasks)
    os.makedirs(out_root, exist_ok=True)
    with open(os.path.join(out_root, "sweep_summary.json"), "w") as fh:
        json.dump(results, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return results
