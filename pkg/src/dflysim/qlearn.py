"""Q-adaptive routing: per-router Q-tables of estimated delivery latencies.

Each router keeps a two-level table.  Level 1 estimates, per destination
group and candidate output port, the latency to reach that group; level 2
covers destination routers inside the router's own group.  When a packet's
head flit arrives at a router, the router sends a feedback signal to the
upstream neighbor (one reverse-link latency later, consuming no data-plane
bandwidth) carrying its own best estimate for the packet's destination key
plus the head flit's queueing delay.  The upstream router folds the signal
into its table:

    Q(port, dest) <- (1 - alpha) * Q(port, dest)
                     + alpha * (link_latency + queue_delay + best_estimate)

Source routers pick the candidate port (same candidate universe as UGAL)
with the lowest estimate, exploring uniformly with probability epsilon.
Tables start untrained in every run; estimates are initialized to the idle
minimal-path latency of the topology.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Optional

from . import engine as eng
from .routing import BasePolicy


@dataclass(frozen=True)
class QHyperparams:
    alpha: float = 0.1
    epsilon: float = 0.05
    initial_ns: Optional[float] = None  # derived from topology when None


@dataclass(frozen=True)
class Feedback:
    origin: int                      # flat id of the downstream router
    dest_key: tuple                  # ("g", group) or ("r", local router)
    best_estimate_ps: float
    queue_delay_ps: float
    link_latency_ps: float

    @property
    def target_ps(self) -> float:
        return self.link_latency_ps + self.queue_delay_ps + self.best_estimate_ps


class QTable:
    """Two-level estimate store for one router; rows are created lazily.

    ``init_fn(dest_key, port)`` supplies the untrained estimate, by default
    the idle minimal-path latency through that port.
    """

    __slots__ = ("init_fn", "level1", "level2", "ignored_feedback")

    def __init__(self, init_fn):
        self.init_fn = init_fn
        self.level1: dict[int, dict[tuple, list]] = {}
        self.level2: dict[int, dict[tuple, list]] = {}
        self.ignored_feedback = 0

    def _row(self, dest_key: tuple) -> Optional[dict]:
        level, ident = dest_key
        if level == "g":
            return self.level1.setdefault(ident, {})
        if level == "r":
            return self.level2.setdefault(ident, {})
        return None

    def estimate(self, dest_key: tuple, port: tuple) -> float:
        row = self._row(dest_key)
        entry = row.get(port)
        if entry is None:
            entry = row[port] = [self.init_fn(dest_key, port), 0]
        return entry[0]

    def update(self, port: tuple, dest_key: tuple, fb: Feedback, alpha: float) -> None:
        row = self._row(dest_key)
        if row is None or port[0] not in ("local", "global"):
            self.ignored_feedback += 1
            return
        entry = row.get(port)
        if entry is None:
            entry = row[port] = [self.init_fn(dest_key, port), 0]
        entry[0] = (1.0 - alpha) * entry[0] + alpha * fb.target_ps
        entry[1] += 1
        assert entry[0] >= 0.0


def q_update(table: QTable, port: tuple, dest_key: tuple, fb: Feedback,
             alpha: float) -> None:
    """Apply one feedback signal to a table entry."""
    table.update(port, dest_key, fb, alpha)


class QAdaptivePolicy(BasePolicy):
    """Source-router port selection driven by learned latency estimates.

    Greedy ties go to the earliest candidate in the pool, which lists the
    minimal candidates first, so an untrained router on an idle network
    prefers the minimal path.
    """

    name = "qadaptive"

    def __init__(self, seed: int = 0, alpha: float = 0.1, epsilon: float = 0.05,
                 initial_ns: Optional[float] = None):
        super().__init__(seed)
        self.alpha = alpha
        self.epsilon = epsilon
        self.initial_ns = initial_ns
        self.tables: list[QTable] = []

    def attach(self, engine: "eng.Engine") -> None:
        super().attach(engine)
        if self.initial_ns is not None:
            const = float(self.initial_ns * eng.PS_PER_NS)
            self.tables = [QTable(lambda _k, _p, c=const: c) for _ in engine.routers]
        else:
            self.tables = [QTable(idle_port_init(engine, rf))
                           for rf in range(len(engine.routers))]

    # -- decision --------------------------------------------------------------

    def decide_at_source(self, engine, router, pkt):
        if pkt.dst.group == router.rid.group:
            pkt.phase = eng.MINIMAL_TO_DEST
            return None
        cands = self.build_candidates(engine, router, pkt)
        seenk = set()
        pool = []
        for c in cands.minimal + cands.nonminimal:
            key = (c.channel.cid, c.mid_group)
            if key not in seenk:
                seenk.add(key)
                pool.append(c)
        if self.epsilon > 0.0 and self.rng.random() < self.epsilon:
            chosen = self.rng.choice(pool)
        else:
            table = self.tables[engine.top.router_flat(router.rid)]
            dest_key = ("g", pkt.dst.group)
            chosen = min(
                pool,
                key=lambda c: table.estimate(dest_key, port_key(c.channel)))
        return self.commit_candidate(engine, pkt, chosen, detour=False)

    # -- learning --------------------------------------------------------------

    def on_head_arrival(self, engine, channel, pkt) -> None:
        if channel.kind not in ("local", "global"):
            return
        fb = self.emit_feedback(engine, channel, pkt)
        upstream = channel.src_router
        port = (channel.kind, channel.port_index)
        table = self.tables[upstream]
        engine.schedule(
            engine.now + channel.latency_ps, eng.EV_Q_FEEDBACK,
            lambda: q_update(table, port, fb.dest_key, fb, self.alpha))

    def emit_feedback(self, engine, channel, pkt) -> Feedback:
        """Build the feedback signal the arrival router returns upstream."""
        here = channel.dst_router
        router = engine.routers[here]
        dstg = pkt.dst.group
        dst_flat = engine.top.router_flat(pkt.dst.router)
        up_group = engine.top.router_from_flat(channel.src_router).group
        queue_delay = len(channel.queues[pkt.vc]) * eng.ser_ps(
            engine.params.packet_bytes, channel.gbps)
        link_cost = eng.ser_ps(pkt.size, channel.gbps) + channel.latency_ps
        if here == dst_flat:
            dest_key = ("r", pkt.dst.local) if up_group == dstg else ("g", dstg)
            best = 0.0
        elif router.group == dstg:
            dest_key = ("g", dstg)
            best = 0.0
        else:
            dest_key = ("g", dstg)
            best = self.best_estimate(engine, router, dstg)
        return Feedback(here, dest_key, best, float(queue_delay), float(link_cost))

    def best_estimate(self, engine, router, dst_group: int) -> float:
        """Min estimate over this router's minimal first-hop ports toward a group."""
        table = self.tables[engine.top.router_flat(router.rid)]
        dest_key = ("g", dst_group)
        best = None
        for owner, gport in engine.top.global_owners(router.rid.group, dst_group):
            if owner == router.rid:
                port = ("global", gport)
            else:
                port = ("local", engine.top.local_port(router.rid, owner.local).index)
            est = table.estimate(dest_key, port)
            if best is None or est < best:
                best = est
        return best if best is not None else table.init_ps

    # -- diagnostics -----------------------------------------------------------

    def dump_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["router", "level", "dest_key", "port", "estimate_ns", "updates"])
            for rf, table in enumerate(self.tables):
                for level, rows in (("1", table.level1), ("2", table.level2)):
                    for ident in sorted(rows):
                        for port in sorted(rows[ident]):
                            est, count = rows[ident][port]
                            w.writerow([rf, level, ident, f"{port[0]}{port[1]}",
                                        f"{est / eng.PS_PER_NS:.3f}", count])


def port_key(channel) -> tuple:
    return (channel.kind, channel.port_index)


def idle_port_init(engine: "eng.Engine", router_flat: int):
    """Untrained estimate: idle minimal-path latency from this port onward.

    One hop costs a full packet serialization plus the link latency, the
    same scale the feedback signals report, so an idle network is already a
    fixed point of the update rule and the greedy choice starts minimal.
    """
    top = engine.top
    cfg = top.config
    r = top.router_from_flat(router_flat)
    pkt_bytes = engine.params.packet_bytes
    loc = float(eng.ser_ps(pkt_bytes, cfg.local_link.bandwidth_gbps)
                + cfg.local_link.latency_ns * eng.PS_PER_NS)
    glob = float(eng.ser_ps(pkt_bytes, cfg.global_link.bandwidth_gbps)
                 + cfg.global_link.latency_ns * eng.PS_PER_NS)

    def init(dest_key: tuple, port: tuple) -> float:
        level, ident = dest_key
        if level == "r":
            return loc
        kind, idx = port
        if kind == "global":
            peer = top.global_peer(r, idx)
            if peer is None:
                return loc + glob + loc  # unwired port, never a candidate
            neighbor, hop = peer[0], glob
        else:
            neighbor, hop = top.local_neighbor(r, idx), loc
        if neighbor.group == ident:
            rest = 0.0
        elif any(owner == neighbor for owner, _ in top.global_owners(neighbor.group, ident)):
            rest = glob
        else:
            rest = loc + glob
        return hop + rest

    return init
