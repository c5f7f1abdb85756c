#!/usr/bin/env python3
"""Regenerate the shipped scenario files.

Full-scale files target the canonical 33-group, 1,056-host system.  Job
sizes follow the published experiment layout: pairwise studies split the
system in half (528 nodes per application; LULESH rounds down to 512 = 8^3
leaving 16 idle, LU to 484 = 22^2), and the mixed workload uses the
published six-job size vector.  Message sizes reproduce each application's
peak ingress volume; round/iteration counts are calibrated so total traffic
matches the published per-application totals to within a few percent.

Desk-scale files run the same motifs on a 9-group, 72-host system with
parameters small enough for laptop-speed runs; the acceptance suite uses
them.
"""

import json
import os

ROOT = os.path.join(os.path.dirname(__file__), "..", "scenarios")

FULL_TOPOLOGY = {"groups": 33, "routers_per_group": 8, "hosts_per_router": 4,
                 "global_links_per_router": 4}
DESK_TOPOLOGY = {"groups": 9, "routers_per_group": 4, "hosts_per_router": 2,
                 "global_links_per_router": 2}

# Full-scale motif parameters at half-system job sizes.
FULL_JOBS = {
    "ur": {"ranks": 528, "params": {"msg_bytes": 3072, "rounds": 7293,
                                    "gap_ns": 1825.0}},
    "lu": {"ranks": 484, "params": {"msg_bytes": 15000, "iterations": 989,
                                    "compute_ns": 300.0}},
    "fft3d": {"ranks": 528, "params": {"msg_bytes": 51680, "iterations": 13,
                                       "compute_ns": 400_000.0,
                                       "dims": [22, 24]}},
    "halo3d": {"ranks": 528, "params": {"msg_bytes": 192_000, "iterations": 90,
                                        "compute_ns": 60_000.0,
                                        "dims": [6, 8, 11]}},
    "lqcd": {"ranks": 528, "params": {"msg_bytes": 575_000, "iterations": 6,
                                      "compute_ns": 1_500_000.0,
                                      "dims": [3, 4, 4, 11]}},
    "stencil5d": {"ranks": 528, "params": {"msg_bytes": 1_400_000,
                                           "iterations": 3,
                                           "compute_ns": 2_500_000.0,
                                           "dims": [2, 2, 2, 6, 11]}},
    "cosmoflow": {"ranks": 528, "params": {"msg_bytes": 1_126_000,
                                           "interval_ns": 5_160_000.0,
                                           "rounds": 2}},
    "dl": {"ranks": 528, "params": {"msg_bytes": 1_150_000,
                                    "interval_ns": 1_100_000.0, "rounds": 8}},
    "lulesh": {"ranks": 512, "params": {"stencil_bytes": 75_000,
                                        "sweep_bytes": 4970, "iterations": 23,
                                        "compute_ns": 300_000.0}},
}

PAIRWISE_TARGETS = ["fft3d", "lu", "lqcd", "cosmoflow", "stencil5d", "lulesh"]
PAIRWISE_BACKGROUNDS = ["ur", "lu", "fft3d", "cosmoflow", "dl", "halo3d"]

# Published mixed-workload job sizes (sums to the full 1,056 hosts).
MIXED_JOBS = [
    ("fft3d", 140, {"msg_bytes": 51680, "iterations": 13,
                    "compute_ns": 400_000.0, "dims": [10, 14]}),
    ("cosmoflow", 138, {"msg_bytes": 1_126_000, "interval_ns": 5_160_000.0,
                        "rounds": 2}),
    ("lu", 140, {"msg_bytes": 15000, "iterations": 989, "compute_ns": 300.0,
                 "dims": [10, 14]}),
    ("ur", 139, {"msg_bytes": 3072, "rounds": 7293, "gap_ns": 1825.0}),
    ("lqcd", 256, {"msg_bytes": 575_000, "iterations": 6,
                   "compute_ns": 1_500_000.0, "dims": [4, 4, 4, 4]}),
    ("stencil5d", 243, {"msg_bytes": 1_400_000, "iterations": 3,
                        "compute_ns": 2_500_000.0, "dims": [3, 3, 3, 3, 3]}),
]

# Desk-scale jobs: same motifs, laptop-sized parameters.
DESK_JOBS = {
    "fft3d": {"ranks": 36, "params": {"msg_bytes": 2048, "iterations": 5,
                                      "compute_ns": 3000.0, "dims": [6, 6]}},
    "ur": {"ranks": 36, "params": {"msg_bytes": 8192, "rounds": 60,
                                   "gap_ns": 100.0}},
    "halo3d": {"ranks": 36, "params": {"msg_bytes": 16384, "iterations": 8,
                                       "compute_ns": 500.0, "dims": [3, 3, 4]}},
    "lqcd": {"ranks": 16, "params": {"msg_bytes": 4096, "iterations": 12,
                                     "compute_ns": 2000.0, "dims": [2, 2, 2, 2]}},
    "stencil5d": {"ranks": 16, "params": {"msg_bytes": 16384, "iterations": 12,
                                          "compute_ns": 500.0,
                                          "dims": [2, 2, 2, 2, 1]}},
}

DESK_MIXED = [
    ("fft3d", 10, {"msg_bytes": 2048, "iterations": 3, "compute_ns": 2000.0,
                   "dims": [2, 5]}),
    ("cosmoflow", 9, {"msg_bytes": 8192, "interval_ns": 20_000.0, "rounds": 3}),
    ("lu", 9, {"msg_bytes": 2048, "iterations": 6, "compute_ns": 500.0,
               "dims": [3, 3]}),
    ("ur", 10, {"msg_bytes": 2048, "rounds": 60, "gap_ns": 1000.0}),
    ("lqcd", 16, {"msg_bytes": 4096, "iterations": 8, "compute_ns": 1000.0,
                  "dims": [2, 2, 2, 2]}),
    ("stencil5d", 16, {"msg_bytes": 8192, "iterations": 8, "compute_ns": 500.0,
                       "dims": [2, 2, 2, 2, 1]}),
]


def scenario(name, topology, jobs, **kw):
    body = {
        "name": name,
        "topology": topology,
        "routing": {"algorithm": kw.pop("routing", "par"), "ugal_bias": 0,
                    "q_alpha": 0.1, "q_epsilon": 0.05},
        "jobs": jobs,
        "placement": kw.pop("placement", "random"),
        "seed": kw.pop("seed", 1),
    }
    body.update(kw)
    return body


def job(motif, spec, job_id):
    return {"id": job_id, "motif": motif, "ranks": spec["ranks"],
            "params": spec["params"]}


def write(path, body):
    os.makedirs(os.path.dirname(path), exist_ok=True)
    with open(path, "w") as fh:
        json.dump(body, fh, indent=2)
        fh.write("\n")
    print(path)


def main():
    # Full-scale pairwise grid: target job first so its placement is stable
    # between the standalone and interfered runs.
    for target in PAIRWISE_TARGETS:
        write(os.path.join(ROOT, "pairwise", f"standalone_{target}.json"),
              scenario(f"standalone_{target}", FULL_TOPOLOGY,
                       [job(target, FULL_JOBS[target], 0)]))
        for bg in PAIRWISE_BACKGROUNDS:
            if bg == target:
                continue
            write(os.path.join(ROOT, "pairwise", f"pairwise_{target}_{bg}.json"),
                  scenario(f"pairwise_{target}_{bg}", FULL_TOPOLOGY,
                           [job(target, FULL_JOBS[target], 0),
                            job(bg, FULL_JOBS[bg], 1)]))
    write(os.path.join(ROOT, "mixed.json"),
          scenario("mixed", FULL_TOPOLOGY,
                   [{"id": i, "motif": m, "ranks": r, "params": p}
                    for i, (m, r, p) in enumerate(MIXED_JOBS)]))

    # Desk-scale acceptance scenarios.
    d = DESK_JOBS
    write(os.path.join(ROOT, "desk", "standalone_fft3d.json"),
          scenario("standalone_fft3d", DESK_TOPOLOGY, [job("fft3d", d["fft3d"], 0)]))
    write(os.path.join(ROOT, "desk", "pairwise_fft3d_ur.json"),
          scenario("pairwise_fft3d_ur", DESK_TOPOLOGY,
                   [job("fft3d", d["fft3d"], 0), job("ur", d["ur"], 1)]))
    write(os.path.join(ROOT, "desk", "pairwise_fft3d_halo3d.json"),
          scenario("pairwise_fft3d_halo3d", DESK_TOPOLOGY,
                   [job("fft3d", d["fft3d"], 0), job("halo3d", d["halo3d"], 1)]))
    write(os.path.join(ROOT, "desk", "standalone_lqcd.json"),
          scenario("standalone_lqcd", DESK_TOPOLOGY, [job("lqcd", d["lqcd"], 0)]))
    write(os.path.join(ROOT, "desk", "standalone_stencil5d.json"),
          scenario("standalone_stencil5d", DESK_TOPOLOGY,
                   [job("stencil5d", d["stencil5d"], 0)]))
    write(os.path.join(ROOT, "desk", "pairwise_lqcd_stencil5d.json"),
          scenario("pairwise_lqcd_stencil5d", DESK_TOPOLOGY,
                   [job("lqcd", d["lqcd"], 0), job("stencil5d", d["stencil5d"], 1)]))
    write(os.path.join(ROOT, "desk", "pairwise_stencil5d_lqcd.json"),
          scenario("pairwise_stencil5d_lqcd", DESK_TOPOLOGY,
                   [job("stencil5d", d["stencil5d"], 0), job("lqcd", d["lqcd"], 1)]))
    write(os.path.join(ROOT, "desk", "mixed_desk.json"),
          scenario("mixed_desk", DESK_TOPOLOGY,
                   [{"id": i, "motif": m, "ranks": r, "params": p}
                    for i, (m, r, p) in enumerate(DESK_MIXED)]))
    write(os.path.join(ROOT, "desk", "adversarial_shift.json"),
          scenario("adversarial_shift", DESK_TOPOLOGY,
                   [{"id": 0, "motif": "shift", "ranks": 72,
                     "params": {"msg_bytes": 2048, "count": 40}}],
                   placement="contiguous"))


if __name__ == "__main__":
    main()
