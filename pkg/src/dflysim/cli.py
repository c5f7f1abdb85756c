"""Command-line interface: simulate, compare, and sweep subcommands."""

from __future__ import annotations

import argparse
import json
import sys

from .engine import DeadlockError
from .harness import (
    EXIT_CONFIG,
    EXIT_DEADLOCK,
    EXIT_OK,
    ConfigError,
    ProtocolError,
    ROUTING_ALGORITHMS,
    compare,
    load_scenario,
    run_scenario,
    sweep,
)
from .topology import TopologyError
from .workload import WorkloadError


def parse_seeds(spec: str) -> list[int]:
    """Accept '5' (1..5), '1..5', or '1,3,9'."""
    spec = spec.strip()
    if ".." in spec:
        lo, hi = spec.split("..", 1)
        return list(range(int(lo), int(hi) + 1))
    if "," in spec:
        return [int(s) for s in spec.split(",")]
    return list(range(1, int(spec) + 1))


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="dflysim",
        description="Deterministic flit-level Dragonfly network simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run one scenario")
    sim.add_argument("--scenario", required=True)
    sim.add_argument("--routing", choices=ROUTING_ALGORITHMS)
    sim.add_argument("--seed", type=int)
    sim.add_argument("--out", required=True)

    cmp_p = sub.add_parser("compare", help="diff one job across two runs")
    cmp_p.add_argument("--base", required=True)
    cmp_p.add_argument("--other", required=True)
    cmp_p.add_argument("--job", type=int, required=True)

    swp = sub.add_parser("sweep", help="run a routing x seed grid")
    swp.add_argument("--scenario", required=True)
    swp.add_argument("--routings", default=",".join(ROUTING_ALGORITHMS))
    swp.add_argument("--seeds", default="5")
    swp.add_argument("--out", required=True)

    args = parser.parse_args(argv)
    try:
        if args.command == "simulate":
            scenario = load_scenario(args.scenario)
            result = run_scenario(scenario, out_dir=args.out,
                                  routing=args.routing, seed=args.seed)
            print(f"{scenario.name}: drained={result.report.drained} "
                  f"end_ns={result.report.end_ps / 1000:.3f} "
                  f"packets={result.report.metrics.delivered} -> {args.out}")
            return EXIT_OK
        if args.command == "compare":
            delta = compare(args.base, args.other, args.job)
            print(json.dumps(delta, indent=2, sort_keys=True))
            return EXIT_OK
        if args.command == "sweep":
            results = sweep(args.scenario, args.routings.split(","),
                            parse_seeds(args.seeds), args.out)
            for r in results:
                jobs = " ".join(
                    f"job{j}:{v['mean_comm_ns']:.0f}ns"
                    for j, v in sorted(r["jobs"].items()))
                print(f"{r['routing']} seed={r['seed']} drained={r['drained']} {jobs}")
            return EXIT_OK
    except (ConfigError, TopologyError, WorkloadError, ProtocolError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DeadlockError as exc:
        print(f"deadlock: {exc}", file=sys.stderr)
        for line in exc.snapshot[:20]:
            print(f"  {line}", file=sys.stderr)
        return EXIT_DEADLOCK
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
