"""Deterministic flit-level discrete-event simulation core.

The engine advances an integer-picosecond clock over a single heap of
(time, sequence) ordered events, so two runs with the same inputs produce
identical traces.  Picoseconds keep flit serialization times exact: a 128 B
flit on a 200 Gb/s link takes 5120 ps (5.12 ns).

Routers are input-queued with per-VC packet FIFOs and credit-based flow
control at packet granularity: a head flit may start serializing only if a
full packet credit for the target VC is available, and the credit returns
(one reverse link latency later) when the tail flit departs the downstream
queue.  Flits cut through: a head flit can be forwarded while its tail is
still arriving, so an L-hop path costs one full packet serialization plus
one head-flit serialization and one propagation delay per extra hop.

Virtual channels follow the ascending Dragonfly schedule keyed to the path
segment: source-group local hops use VC0 (VC1 after a PAR revision),
mid-group locals VC2, destination-group locals VC3; the global hop toward
an intermediate group uses VC0 and the one toward the destination group
VC1.  Every legal hop sequence ascends the total order L0 < L1 < G0 < L2 <
G1 < L3 and ejection always drains, so the channel dependency graph is
acyclic and the network cannot credit-deadlock.  (Assigning VCs by the
count of previously traversed hops instead deadlocks: a packet whose source
router owns the global link skips the source local hop and would reuse
local VC0 in its destination group.)
"""

from __future__ import annotations

import heapq
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Optional

from .topology import NodeId, RouterId, Topology

PS_PER_NS = 1000

# Event kinds, used for tracing and tie-step bookkeeping.
EV_FLIT_ARRIVAL = "flit-arrival"
EV_CREDIT_RETURN = "credit-return"
EV_SERIALIZATION_DONE = "serialization-done"
EV_MOTIF_STEP = "motif-step"
EV_METRIC_TICK = "metric-tick"
EV_Q_FEEDBACK = "q-feedback"

# Routing phases of a packet.
AT_SOURCE = 0
MINIMAL_TO_DEST = 1
NONMIN_TO_MID = 2
IN_MID_GROUP = 3
MIN_TO_DEST_GROUP = 4
IN_DEST_GROUP = 5
EJECTED = 6

PHASE_NAMES = {
    AT_SOURCE: "AtSource",
    MINIMAL_TO_DEST: "MinimalToDest",
    NONMIN_TO_MID: "NonminToMid",
    IN_MID_GROUP: "InMidGroup",
    MIN_TO_DEST_GROUP: "MinToDestGroup",
    IN_DEST_GROUP: "InDestGroup",
    EJECTED: "Ejected",
}


class DeadlockError(RuntimeError):
    """Simulation cannot make progress while packets remain in flight."""

    def __init__(self, message: str, snapshot: list[str]):
        super().__init__(message)
        self.snapshot = snapshot


def ser_ps(nbytes: int, gbps: float) -> int:
    """Serialization time of nbytes on a gbps link, in picoseconds."""
    return round(nbytes * 8000 / gbps)


def fmt_ns(ps: int) -> str:
    """Exact decimal nanoseconds with three fractional digits."""
    sign = "-" if ps < 0 else ""
    ps = abs(ps)
    return f"{sign}{ps // 1000}.{ps % 1000:03d}"


@dataclass(frozen=True)
class Flit:
    packet_id: int
    seq: int
    is_head: bool
    is_tail: bool
    size: int


@dataclass(frozen=True)
class EngineParams:
    packet_bytes: int = 512
    flit_bytes: int = 128
    vc_capacity: int = 30  # packets per VC queue
    local_vcs: int = 4
    global_vcs: int = 2
    host_vcs: int = 1
    watchdog_interval_ps: int = 2_000_000_000  # 2 ms simulated


class Packet:
    """One routing unit: up to packet_bytes of a message, split into flits."""

    __slots__ = (
        "pid", "job", "src", "dst", "size", "flit_sizes", "message",
        "phase", "mid_group", "detour_router", "detour_done", "revised",
        "nonminimal", "local_hops", "global_hops", "vc", "vc_log", "hop_log",
        "inject_ps", "deliver_ps", "flit_ready", "route", "wait_since",
    )

    def __init__(self, pid: int, job: int, src: NodeId, dst: NodeId, size: int,
                 flit_bytes: int, message: "Message"):
        self.pid = pid
        self.job = job
        self.src = src
        self.dst = dst
        self.size = size
        nfull, rem = divmod(size, flit_bytes)
        sizes = [flit_bytes] * nfull + ([rem] if rem else [])
        self.flit_sizes = tuple(sizes)
        self.message = message
        self.phase = AT_SOURCE
        self.mid_group: Optional[int] = None
        self.detour_router: Optional[RouterId] = None
        self.detour_done = False
        self.revised = False
        self.nonminimal = False
        self.local_hops = 0
        self.global_hops = 0
        self.vc = 0
        self.vc_log: list[tuple[str, int]] = []
        self.hop_log: list[tuple[int, int]] = []  # (router flat, arrival ps)
        self.inject_ps = -1
        self.deliver_ps = -1
        self.flit_ready: list[int] = []
        self.route: Optional[tuple["Channel", int]] = None
        self.wait_since = 0

    def flits(self) -> list[Flit]:
        n = len(self.flit_sizes)
        return [
            Flit(self.pid, k, k == 0, k == n - 1, s)
            for k, s in enumerate(self.flit_sizes)
        ]

    @property
    def hops(self) -> int:
        """Router-to-router links traversed."""
        return max(0, len(self.hop_log) - 1)


class Message:
    __slots__ = ("job", "src_rank", "dst_rank", "size", "tag", "payload",
                 "packets_total", "packets_arrived")

    def __init__(self, job, src_rank, dst_rank, size, tag, payload):
        self.job = job
        self.src_rank = src_rank
        self.dst_rank = dst_rank
        self.size = size
        self.tag = tag
        self.payload = payload
        self.packets_total = 0
        self.packets_arrived = 0


class Channel:
    """One direction of a link: upstream serializer plus downstream VC queues.

    Credits are the upstream view of free downstream queue slots.  The
    conservation invariant credits + queued + in_transit + returning ==
    capacity is asserted on every mutation.
    """

    __slots__ = (
        "cid", "kind", "src_router", "dst_router", "src_node", "dst_node",
        "gbps", "latency_ps", "capacity", "credits", "queues",
        "in_transit", "returning", "busy", "free_at",
        "requests", "rr_last", "bytes_total", "bytes_by_job", "stall_ps",
        "max_occupancy", "port_index", "_ser_cache",
    )

    def __init__(self, cid, kind, gbps, latency_ps, vcs, capacity,
                 src_router=None, dst_router=None, src_node=None, dst_node=None,
                 port_index=0):
        self.cid = cid
        self.kind = kind  # "local" | "global" | "host_in" | "host_out"
        self.src_router = src_router
        self.dst_router = dst_router
        self.src_node = src_node
        self.dst_node = dst_node
        self.gbps = gbps
        self.latency_ps = latency_ps
        self.capacity = capacity
        self.credits = [capacity] * vcs
        self.queues = [deque() for _ in range(vcs)]
        self.in_transit = [0] * vcs
        self.returning = [0] * vcs
        self.busy = False
        self.free_at = 0
        self.requests: dict[tuple[int, int], Packet] = {}
        self.rr_last: Optional[tuple[int, int]] = None
        self.bytes_total = 0
        self.bytes_by_job: dict[int, int] = {}
        self.stall_ps = 0
        self.max_occupancy = 0
        self.port_index = port_index
        self._ser_cache: dict[int, int] = {}

    def ser(self, nbytes: int) -> int:
        t = self._ser_cache.get(nbytes)
        if t is None:
            t = self._ser_cache[nbytes] = ser_ps(nbytes, self.gbps)
        return t

    def occupancy(self, vc: int) -> int:
        """Downstream-facing queue occupancy as seen through credits."""
        return self.capacity - self.credits[vc]

    def check_conservation(self, vc: int) -> None:
        total = (self.credits[vc] + len(self.queues[vc])
                 + self.in_transit[vc] + self.returning[vc])
        assert total == self.capacity, (
            f"credit conservation broken on channel {self.cid} vc {vc}: "
            f"{self.credits[vc]}+{len(self.queues[vc])}+"
            f"{self.in_transit[vc]}+{self.returning[vc]} != {self.capacity}"
        )


class Router:
    __slots__ = ("rid", "group", "local", "out", "in_channels")

    def __init__(self, rid: RouterId, flat: int):
        self.rid = rid
        self.group = rid.group
        self.local = rid.local
        self.out: dict[tuple[str, int], Channel] = {}
        self.in_channels: list[Channel] = []


class Nic:
    __slots__ = ("node", "host_in", "queue", "rank")

    def __init__(self, node_flat: int, host_in: Channel):
        self.node = node_flat
        self.host_in = host_in
        self.queue: deque[Packet] = deque()
        self.rank: Optional["RankState"] = None


class RankState:
    """Per-rank motif program execution state."""

    __slots__ = ("job", "rank", "node", "program", "pc", "blocked",
                 "comm_ps", "compute_ps", "start_ps", "end_ps",
                 "value", "iter_marks", "pending_inject")

    def __init__(self, job: int, rank: int, node: int, program: list):
        self.job = job
        self.rank = rank
        self.node = node
        self.program = program
        self.pc = 0
        self.blocked = None  # None | ("recv", key, since) | ("waitall", since)
        self.comm_ps = 0
        self.compute_ps = 0
        self.start_ps = 0
        self.end_ps: Optional[int] = None
        self.value = 0
        self.iter_marks: list[tuple[int, int]] = []
        self.pending_inject = 0

    @property
    def done(self) -> bool:
        return self.end_ps is not None


@dataclass
class MetricStore:
    """Raw per-run records the metrics module post-processes."""

    packets: list[Packet] = field(default_factory=list)
    ranks: list[RankState] = field(default_factory=list)
    injected: int = 0
    delivered: int = 0
    messages_sent: dict[int, int] = field(default_factory=dict)
    messages_received: dict[int, int] = field(default_factory=dict)
    job_bytes: dict[int, int] = field(default_factory=dict)


@dataclass
class SimulationReport:
    drained: bool
    end_ps: int
    metrics: MetricStore
    channels: list[Channel]
    events_processed: int


class Engine:
    """Single-threaded deterministic event loop over one topology instance."""

    def __init__(self, topology: Topology, policy, params: EngineParams = EngineParams()):
        self.top = topology
        self.params = params
        self.policy = policy
        self.now = 0
        self._heap: list = []
        self._seq = 0
        self._events_processed = 0
        self._moves = 0
        self._last_activity_ps = 0
        self._watchdog_moves = -1
        self._pid = 0
        self.metrics = MetricStore()
        self._waiting_recv: dict[tuple, RankState] = {}
        self._arrived: dict[tuple, deque[Message]] = {}
        self._job_rank_nodes: dict[int, list[int]] = {}
        self._build_fabric()
        policy.attach(self)

    # -- fabric construction --------------------------------------------------

    def _build_fabric(self) -> None:
        top, p = self.top, self.params
        cfg = top.config
        self.routers: list[Router] = []
        self.channels: list[Channel] = []
        self.nics: list[Nic] = []
        for r in top.routers():
            self.routers.append(Router(r, top.router_flat(r)))

        def new_channel(**kw) -> Channel:
            ch = Channel(cid=len(self.channels), capacity=p.vc_capacity, **kw)
            self.channels.append(ch)
            return ch

        local, glob, host = cfg.local_link, cfg.global_link, cfg.effective_host_link
        for router in self.routers:
            r = router.rid
            rf = top.router_flat(r)
            for nb in range(cfg.routers_per_group):
                if nb == r.local:
                    continue
                peer = RouterId(r.group, nb)
                port = top.local_port(r, nb)
                ch = new_channel(kind="local", gbps=local.bandwidth_gbps,
                                 latency_ps=local.latency_ns * PS_PER_NS,
                                 vcs=p.local_vcs, src_router=rf,
                                 dst_router=top.router_flat(peer),
                                 port_index=port.index)
                router.out[("local", port.index)] = ch
            for k in range(cfg.global_links_per_router):
                peer = top.global_peer(r, k)
                if peer is None:
                    continue
                ch = new_channel(kind="global", gbps=glob.bandwidth_gbps,
                                 latency_ps=glob.latency_ns * PS_PER_NS,
                                 vcs=p.global_vcs, src_router=rf,
                                 dst_router=top.router_flat(peer[0]),
                                 port_index=k)
                router.out[("global", k)] = ch
            for slot in range(cfg.hosts_per_router):
                node = NodeId(r.group, r.local, slot)
                nf = top.node_flat(node)
                out_ch = new_channel(kind="host_out", gbps=host.bandwidth_gbps,
                                     latency_ps=host.latency_ns * PS_PER_NS,
                                     vcs=p.host_vcs, src_router=rf, dst_node=nf,
                                     port_index=slot)
                router.out[("host", slot)] = out_ch
                in_ch = new_channel(kind="host_in", gbps=host.bandwidth_gbps,
                                    latency_ps=host.latency_ns * PS_PER_NS,
                                    vcs=p.host_vcs, src_node=nf, dst_router=rf,
                                    port_index=slot)
                router.in_channels.append(in_ch)
                self.nics.append(Nic(nf, in_ch))
        self.nics.sort(key=lambda n: n.node)
        # Register router-to-router channels as inputs of their sink router.
        for ch in self.channels:
            if ch.kind in ("local", "global"):
                self.routers[ch.dst_router].in_channels.append(ch)
        self._chan_by_id = {ch.cid: ch for ch in self.channels}

    # -- event queue -----------------------------------------------------------

    def schedule(self, time_ps: int, kind: str, fn: Callable[[], None]) -> None:
        if time_ps < self.now:
            raise RuntimeError(
                f"event scheduled in the past: {time_ps} < now {self.now}")
        heapq.heappush(self._heap, (time_ps, self._seq, kind, fn))
        self._seq += 1

    def run(self, until_ps: Optional[int] = None) -> SimulationReport:
        """Process events until drain (until_ps None) or the given time."""
        if self._watchdog_moves < 0 and self._heap:
            self._watchdog_moves = 0
            self._schedule_watchdog()
        heap = self._heap
        while heap:
            if until_ps is not None and heap[0][0] > until_ps:
                break
            time_ps, _seq, kind, fn = heapq.heappop(heap)
            assert time_ps >= self.now, "event clock went backwards"
            self.now = time_ps
            self._events_processed += 1
            if kind != EV_METRIC_TICK:
                self._last_activity_ps = time_ps
            fn()
        drained = (self.metrics.injected == self.metrics.delivered
                   and all(rs.done for rs in self.metrics.ranks)
                   and all(len(nic.queue) == 0 for nic in self.nics))
        if until_ps is None and not drained:
            raise DeadlockError(
                "simulation stalled before drain "
                f"(injected={self.metrics.injected}, delivered={self.metrics.delivered}, "
                f"unfinished ranks={sum(1 for r in self.metrics.ranks if not r.done)})",
                self._queue_snapshot())
        # Trailing watchdog ticks do not extend the reported makespan.
        if until_ps is not None:
            self.now = max(self.now, until_ps)
            end_ps = until_ps
        else:
            end_ps = self._last_activity_ps
        return SimulationReport(
            drained=drained, end_ps=end_ps, metrics=self.metrics,
            channels=self.channels, events_processed=self._events_processed)

    def _schedule_watchdog(self) -> None:
        def tick():
            in_flight = self.metrics.injected - self.metrics.delivered
            ranks_stuck = not all(rs.done for rs in self.metrics.ranks)
            if self._moves == self._watchdog_moves:
                if in_flight > 0:
                    raise DeadlockError(
                        f"no flit progress for {self.params.watchdog_interval_ps} ps "
                        f"with {in_flight} packets in flight", self._queue_snapshot())
                if ranks_stuck and not self._heap:
                    blocked = [f"job {r.job} rank {r.rank}: {r.blocked}"
                               for r in self.metrics.ranks if not r.done]
                    raise DeadlockError(
                        "ranks blocked with nothing in flight "
                        "(unmatched receive?)", blocked)
            self._watchdog_moves = self._moves
            if in_flight > 0 or ranks_stuck:
                self._schedule_watchdog()
        self.schedule(self.now + self.params.watchdog_interval_ps, EV_METRIC_TICK, tick)

    def _queue_snapshot(self) -> list[str]:
        lines = []
        for ch in self.channels:
            for vc, q in enumerate(ch.queues):
                if q:
                    lines.append(
                        f"channel {ch.cid} ({ch.kind} {ch.src_router}->"
                        f"{ch.dst_router if ch.dst_router is not None else ch.dst_node}) "
                        f"vc{vc}: {len(q)} packets, head={q[0].pid}")
        return lines

    # -- workload installation --------------------------------------------------

    def install_job(self, job_id: int, programs: list[list], placement: list[int]) -> None:
        """Install one rank program per rank; placement maps rank -> node flat."""
        assert len(programs) == len(placement)
        self._job_rank_nodes[job_id] = list(placement)
        self.metrics.messages_sent.setdefault(job_id, 0)
        self.metrics.messages_received.setdefault(job_id, 0)
        self.metrics.job_bytes.setdefault(job_id, 0)
        for rank, (prog, node) in enumerate(zip(programs, placement)):
            rs = RankState(job_id, rank, node, prog)
            nic = self.nics[node]
            assert nic.rank is None, f"node {node} already hosts a rank"
            nic.rank = rs
            self.metrics.ranks.append(rs)

    def start(self) -> None:
        """Kick off every installed rank program at t = 0."""
        for rs in self.metrics.ranks:
            self.schedule(self.now, EV_MOTIF_STEP, lambda rs=rs: self._advance_rank(rs))

    # -- rank program execution ---------------------------------------------------

    def _advance_rank(self, rs: RankState) -> None:
        rs.blocked = None
        prog = rs.program
        while rs.pc < len(prog):
            step = prog[rs.pc]
            rs.pc += 1
            op = step[0]
            if op == "compute":
                rs.compute_ps += step[1]
                self.schedule(self.now + step[1], EV_MOTIF_STEP,
                              lambda rs=rs: self._advance_rank(rs))
                return
            if op == "send":
                _, dst_rank, nbytes, tag, payload_mode = step
                payload = rs.value if payload_mode == "value" else None
                self._send_message(rs, dst_rank, nbytes, tag, payload)
                continue
            if op == "recv":
                _, src_rank, tag, mode = step
                key = (rs.job, rs.rank, src_rank, tag)
                pending = self._arrived.get(key)
                if pending:
                    msg = pending.popleft()
                    if not pending:
                        del self._arrived[key]
                    self._apply_payload(rs, msg, mode)
                    continue
                rs.blocked = ("recv", key, self.now)
                assert key not in self._waiting_recv
                self._waiting_recv[key] = rs
                return
            if op == "waitall":
                if rs.pending_inject == 0:
                    continue
                rs.blocked = ("waitall", self.now)
                return
            if op == "iter":
                rs.iter_marks.append((step[1], self.now))
                continue
            if op == "value":
                rs.value = step[1]
                continue
            raise ValueError(f"unknown motif step {op!r}")
        rs.end_ps = self.now

    @staticmethod
    def _apply_payload(rs: RankState, msg: Message, mode) -> None:
        if mode == "add" and msg.payload is not None:
            rs.value += msg.payload
        elif mode == "set" and msg.payload is not None:
            rs.value = msg.payload

    def _send_message(self, rs: RankState, dst_rank: int, nbytes: int, tag: int,
                      payload) -> None:
        assert nbytes >= 1
        job_ranks = self._job_rank_nodes[rs.job]
        dst_node = job_ranks[dst_rank]
        msg = Message(rs.job, rs.rank, dst_rank, nbytes, tag, payload)
        self.metrics.messages_sent[rs.job] += 1
        self.metrics.job_bytes[rs.job] += nbytes
        nic = self.nics[rs.node]
        src_node_id = self.top.node_from_flat(rs.node)
        dst_node_id = self.top.node_from_flat(dst_node)
        pb = self.params.packet_bytes
        remaining = nbytes
        while remaining > 0:
            chunk = min(pb, remaining)
            remaining -= chunk
            pkt = Packet(self._pid, rs.job, src_node_id, dst_node_id, chunk,
                         self.params.flit_bytes, msg)
            self._pid += 1
            msg.packets_total += 1
            nic.queue.append(pkt)
            rs.pending_inject += 1
        self._try_inject(nic)

    # -- injection / transmission ---------------------------------------------------

    def _try_inject(self, nic: Nic) -> None:
        ch = nic.host_in
        if ch.busy or not nic.queue or ch.credits[0] <= 0:
            return
        pkt = nic.queue.popleft()
        pkt.inject_ps = self.now
        self.metrics.injected += 1
        pkt.flit_ready = [self.now] * len(pkt.flit_sizes)
        self._start_transmission(ch, pkt, 0, from_queue=None)

    def _start_transmission(self, ch: Channel, pkt: Packet, out_vc: int,
                            from_queue: Optional[tuple[Channel, int]]) -> None:
        assert not ch.busy, f"grant on busy channel {ch.cid}"
        ch.credits[out_vc] -= 1
        assert ch.credits[out_vc] >= 0, f"negative credits on channel {ch.cid}"
        ch.in_transit[out_vc] += 1
        ch.check_conservation(out_vc)
        ch.busy = True
        self._moves += 1
        if ch.kind == "local":
            pkt.local_hops += 1
        elif ch.kind == "global":
            pkt.global_hops += 1
        pkt.vc = out_vc
        pkt.vc_log.append((ch.kind, out_vc))
        t = self.now
        lat = ch.latency_ps
        ready = pkt.flit_ready
        arrivals = []
        for k, fsize in enumerate(pkt.flit_sizes):
            rk = ready[k]
            if rk > t:
                t = rk
            t += ch.ser(fsize)
            arrivals.append(t + lat)
        tail_end = t
        ch.free_at = tail_end
        next_ready = arrivals
        self.schedule(tail_end, EV_SERIALIZATION_DONE,
                      lambda: self._on_serialization_done(ch, pkt, out_vc, from_queue))
        if ch.kind == "host_out":
            self.schedule(arrivals[-1], EV_FLIT_ARRIVAL,
                          lambda: self._on_delivered(ch, pkt, out_vc))
        else:
            self.schedule(arrivals[0], EV_FLIT_ARRIVAL,
                          lambda: self._on_head_arrival(ch, pkt, out_vc, next_ready))

    def _on_serialization_done(self, ch: Channel, pkt: Packet, out_vc: int,
                               from_queue: Optional[tuple[Channel, int]]) -> None:
        ch.busy = False
        # Bytes count when fully on the wire, so per-window link throughput
        # can never exceed capacity.
        ch.bytes_total += pkt.size
        ch.bytes_by_job[pkt.job] = ch.bytes_by_job.get(pkt.job, 0) + pkt.size
        if from_queue is None:
            # Injection: the packet came straight off the NIC queue.
            nic = self.nics[ch.src_node]
            rank = nic.rank
            rank.pending_inject -= 1
            if rank.pending_inject == 0 and rank.blocked and rank.blocked[0] == "waitall":
                rank.comm_ps += self.now - rank.blocked[1]
                self._advance_rank(rank)
            self._try_inject(nic)
        else:
            in_ch, in_vc = from_queue
            popped = in_ch.queues[in_vc].popleft()
            assert popped is pkt
            in_ch.returning[in_vc] += 1
            in_ch.check_conservation(in_vc)
            self.schedule(self.now + in_ch.latency_ps, EV_CREDIT_RETURN,
                          lambda: self._on_credit_return(in_ch, in_vc))
            queue = in_ch.queues[in_vc]
            if queue:
                router = self.routers[in_ch.dst_router]
                self._route_and_request(router, in_ch, in_vc, queue[0])
        self._try_arbitrate(ch)

    def _on_credit_return(self, ch: Channel, vc: int) -> None:
        ch.returning[vc] -= 1
        ch.credits[vc] += 1
        assert ch.credits[vc] <= ch.capacity
        ch.check_conservation(vc)
        if ch.kind == "host_in":
            self._try_inject(self.nics[ch.src_node])
        else:
            self._try_arbitrate(ch)

    def _on_head_arrival(self, ch: Channel, pkt: Packet, vc: int,
                         arrivals: list[int]) -> None:
        ch.in_transit[vc] -= 1
        router = self.routers[ch.dst_router]
        pkt.hop_log.append((ch.dst_router, self.now))
        pkt.flit_ready = arrivals
        self.policy.on_head_arrival(self, ch, pkt)
        queue = ch.queues[vc]
        queue.append(pkt)
        occ = len(queue)
        assert occ <= ch.capacity, (
            f"VC queue overflow on channel {ch.cid} vc {vc}")
        if occ > ch.max_occupancy:
            ch.max_occupancy = occ
        ch.check_conservation(vc)
        if occ == 1:
            self._route_and_request(router, ch, vc, pkt)

    def _route_and_request(self, router: Router, in_ch: Channel, in_vc: int,
                           pkt: Packet) -> None:
        out_ch, out_vc = self.policy.route(self, router, pkt)
        pkt.route = (out_ch, out_vc)
        pkt.wait_since = self.now
        out_ch.requests[(in_ch.cid, in_vc)] = pkt
        self._try_arbitrate(out_ch)

    def _try_arbitrate(self, ch: Channel) -> None:
        if ch.busy:
            return
        reqs = ch.requests
        if not reqs:
            return
        credits = ch.credits
        eligible = [k for k, pkt in reqs.items() if credits[pkt.route[1]] > 0]
        if not eligible:
            return
        if len(eligible) == 1:
            key = eligible[0]
        else:
            # Round-robin: first key strictly after the last grantee, else wrap.
            eligible.sort()
            key = None
            if ch.rr_last is not None:
                for cand in eligible:
                    if cand > ch.rr_last:
                        key = cand
                        break
            if key is None:
                key = eligible[0]
        ch.rr_last = key
        pkt = reqs.pop(key)
        ch.stall_ps += self.now - pkt.wait_since
        in_ch = self._chan_by_id[key[0]]
        self._start_transmission(ch, pkt, pkt.route[1], from_queue=(in_ch, key[1]))

    # -- delivery / message matching ---------------------------------------------------

    def _on_delivered(self, ch: Channel, pkt: Packet, vc: int) -> None:
        # The receiving NIC drains instantly, so the ejection buffer slot
        # frees as soon as the tail flit lands.
        ch.in_transit[vc] -= 1
        ch.credits[vc] += 1
        ch.check_conservation(vc)
        self._try_arbitrate(ch)
        pkt.deliver_ps = self.now
        pkt.phase = EJECTED
        self.metrics.delivered += 1
        self.metrics.packets.append(pkt)
        self._moves += 1
        msg = pkt.message
        msg.packets_arrived += 1
        if msg.packets_arrived == msg.packets_total:
            self._on_message_complete(msg)

    def _on_message_complete(self, msg: Message) -> None:
        self.metrics.messages_received[msg.job] += 1
        key = (msg.job, msg.dst_rank, msg.src_rank, msg.tag)
        rs = self._waiting_recv.get(key)
        if rs is not None:
            del self._waiting_recv[key]
            assert rs.blocked and rs.blocked[0] == "recv"
            mode = rs.program[rs.pc - 1][3]
            rs.comm_ps += self.now - rs.blocked[2]
            self._apply_payload(rs, msg, mode)
            self._advance_rank(rs)
        else:
            self._arrived.setdefault(key, deque()).append(msg)

