"""Dragonfly topology: fully connected router groups joined by global links.

A system is parameterized by (g, a, p, h): g groups of a routers each, p
hosts per router, h global links per router.  Routers inside a group form a
full mesh over local links; every group pair is joined by floor(a*h/(g-1))
global links.  Global wiring follows a fixed consecutive scheme so that two
builds of the same config are identical: slot s of group i (slots are
numbered r*h + k over routers r and per-router link indexes k) carries the
link to group (i + 1 + s mod (g-1)) mod g.  When (g-1) does not divide a*h,
the trailing slots stay unwired and the corresponding global ports are dead.

All links are full duplex; each direction is an independent channel with its
own credit pool in the engine.  Host links default to the local-link rate.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterator, NamedTuple


class TopologyError(ValueError):
    """A topology config violates a structural constraint."""


class RouterId(NamedTuple):
    group: int
    local: int


class NodeId(NamedTuple):
    group: int
    local: int
    slot: int

    @property
    def router(self) -> RouterId:
        return RouterId(self.group, self.local)


class PortId(NamedTuple):
    router: RouterId
    kind: str  # "host" | "local" | "global"
    index: int


@dataclass(frozen=True)
class LinkParams:
    bandwidth_gbps: float
    latency_ns: int


@dataclass(frozen=True)
class TopologyConfig:
    """Dragonfly shape and link parameters.

    Defaults are the canonical 33-group, 1,056-host system with 200 Gb/s
    links and 30/300 ns local/global latencies.
    """

    groups: int = 33
    routers_per_group: int = 8
    hosts_per_router: int = 4
    global_links_per_router: int = 4
    local_link: LinkParams = field(default_factory=lambda: LinkParams(200.0, 30))
    global_link: LinkParams = field(default_factory=lambda: LinkParams(200.0, 300))
    host_link: LinkParams | None = None

    def validate(self) -> None:
        g, a, p, h = (
            self.groups,
            self.routers_per_group,
            self.hosts_per_router,
            self.global_links_per_router,
        )
        if g < 2:
            raise TopologyError(f"groups must be >= 2, got {g}")
        if a < 2:
            raise TopologyError(f"routers_per_group must be >= 2, got {a}")
        if p < 1:
            raise TopologyError(f"hosts_per_router must be >= 1, got {p}")
        if h < 1:
            raise TopologyError(f"global_links_per_router must be >= 1, got {h}")
        if a * h < g - 1:
            raise TopologyError(
                f"a*h must be >= g-1 so every group pair is connected "
                f"(a*h={a * h}, g-1={g - 1})"
            )
        for name, link in (
            ("local_link", self.local_link),
            ("global_link", self.global_link),
            ("host_link", self.effective_host_link),
        ):
            if link.bandwidth_gbps <= 0:
                raise TopologyError(f"{name} bandwidth must be positive")
            if link.latency_ns < 0:
                raise TopologyError(f"{name} latency must be >= 0")

    @property
    def effective_host_link(self) -> LinkParams:
        # Host links run at the local-link rate unless overridden.
        return self.host_link if self.host_link is not None else self.local_link

    @property
    def num_routers(self) -> int:
        return self.groups * self.routers_per_group

    @property
    def num_hosts(self) -> int:
        return self.num_routers * self.hosts_per_router

    @property
    def parallel_global_links(self) -> int:
        """Global links per group pair."""
        return (self.routers_per_group * self.global_links_per_router) // (self.groups - 1)

    @property
    def num_local_links(self) -> int:
        a = self.routers_per_group
        return self.groups * a * (a - 1) // 2

    @property
    def num_global_links(self) -> int:
        return self.groups * (self.groups - 1) // 2 * self.parallel_global_links


class Topology:
    """Built Dragonfly graph with route enumeration.

    Immutable after construction; safe to share across engine instances.
    """

    def __init__(self, config: TopologyConfig):
        config.validate()
        self.config = config
        g = config.groups
        a = config.routers_per_group
        h = config.global_links_per_router
        self._wired_slots = config.parallel_global_links * (g - 1)
        # owners[(sg, dg)] -> ordered list of (RouterId, global port index),
        # one entry per parallel link from sg toward dg.
        owners: dict[tuple[int, int], list[tuple[RouterId, int]]] = {}
        for sg in range(g):
            for dg in range(g):
                if sg == dg:
                    continue
                offset = (dg - sg) % g
                entries = []
                for parallel in range(config.parallel_global_links):
                    slot = (offset - 1) + parallel * (g - 1)
                    entries.append((RouterId(sg, slot // h), slot % h))
                owners[(sg, dg)] = entries
        self._owners = owners

    # -- structure queries ---------------------------------------------------

    def routers(self) -> Iterator[RouterId]:
        for grp in range(self.config.groups):
            for loc in range(self.config.routers_per_group):
                yield RouterId(grp, loc)

    def nodes(self) -> Iterator[NodeId]:
        for grp in range(self.config.groups):
            for loc in range(self.config.routers_per_group):
                for slot in range(self.config.hosts_per_router):
                    yield NodeId(grp, loc, slot)

    def router_flat(self, r: RouterId) -> int:
        return r.group * self.config.routers_per_group + r.local

    def router_from_flat(self, idx: int) -> RouterId:
        a = self.config.routers_per_group
        return RouterId(idx // a, idx % a)

    def node_flat(self, n: NodeId) -> int:
        p = self.config.hosts_per_router
        return self.router_flat(n.router) * p + n.slot

    def node_from_flat(self, idx: int) -> NodeId:
        p = self.config.hosts_per_router
        r = self.router_from_flat(idx // p)
        return NodeId(r.group, r.local, idx % p)

    def local_port(self, r: RouterId, neighbor_local: int) -> PortId:
        if neighbor_local == r.local:
            raise TopologyError(f"router {r} has no local link to itself")
        idx = neighbor_local if neighbor_local < r.local else neighbor_local - 1
        return PortId(r, "local", idx)

    def local_neighbor(self, r: RouterId, port_index: int) -> RouterId:
        loc = port_index if port_index < r.local else port_index + 1
        return RouterId(r.group, loc)

    def global_peer(self, r: RouterId, port_index: int) -> tuple[RouterId, int] | None:
        """Peer (router, port) of a global port, or None if the slot is unwired."""
        g = self.config.groups
        h = self.config.global_links_per_router
        slot = r.local * h + port_index
        if slot >= self._wired_slots:
            return None
        offset = slot % (g - 1) + 1
        parallel = slot // (g - 1)
        peer_group = (r.group + offset) % g
        peer_slot = (g - offset - 1) + parallel * (g - 1)
        return RouterId(peer_group, peer_slot // h), peer_slot % h

    def global_owners(self, src_group: int, dst_group: int) -> list[tuple[RouterId, int]]:
        """Routers of src_group carrying a global link toward dst_group."""
        return self._owners[(src_group, dst_group)]

    def exit_routers(self, src_group: int, dst_group: int) -> list[RouterId]:
        """Distinct routers of src_group with a link toward dst_group, slot order."""
        seen: list[RouterId] = []
        for router, _ in self._owners[(src_group, dst_group)]:
            if router not in seen:
                seen.append(router)
        return seen

    # -- route enumeration ---------------------------------------------------

    def minimal_route(self, src: RouterId, dst: RouterId, choice: int = 0) -> list[PortId]:
        """Minimal path src -> dst as output ports; pattern in {., L, G, LG, GL, LGL}.

        ``choice`` round-robins over parallel global links when a group pair
        has more than one.
        """
        if src == dst:
            return []
        if src.group == dst.group:
            return [self.local_port(src, dst.local)]
        owners = self._owners[(src.group, dst.group)]
        owner, gport = owners[choice % len(owners)]
        path = []
        cur = src
        if cur != owner:
            path.append(self.local_port(cur, owner.local))
            cur = owner
        peer, _ = self.global_peer(cur, gport)
        path.append(PortId(cur, "global", gport))
        cur = peer
        if cur != dst:
            path.append(self.local_port(cur, dst.local))
        return path

    def nonminimal_route(
        self,
        src: RouterId,
        mid_group: int,
        dst: RouterId,
        visit_random_router: bool = False,
        choice: int = 0,
        detour_choice: int = 0,
    ) -> list[PortId]:
        """Path via an intermediate group; <= 5 router-to-router hops.

        With ``visit_random_router`` the packet is steered through the
        detour router selected by ``detour_choice`` among the mid-group
        routers that can exit toward the destination group, so the hop
        budget still holds.
        """
        if mid_group == src.group or mid_group == dst.group:
            raise TopologyError(
                f"mid group {mid_group} must differ from source group "
                f"{src.group} and destination group {dst.group}"
            )
        path = []
        cur = src
        # Leg 1: minimal toward the intermediate group.
        owners = self._owners[(cur.group, mid_group)]
        owner, gport = owners[choice % len(owners)]
        if cur != owner:
            path.append(self.local_port(cur, owner.local))
            cur = owner
        entry, _ = self.global_peer(cur, gport)
        path.append(PortId(cur, "global", gport))
        cur = entry
        # Leg 2: exit the intermediate group toward the destination group.
        exit_entries = self._owners[(mid_group, dst.group)]
        if visit_random_router:
            exits = self.exit_routers(mid_group, dst.group)
            detour = exits[detour_choice % len(exits)]
            if cur != detour:
                path.append(self.local_port(cur, detour.local))
                cur = detour
            gport2 = next(gp for rtr, gp in exit_entries if rtr == cur)
        else:
            owner2, gport2 = exit_entries[choice % len(exit_entries)]
            if cur != owner2:
                path.append(self.local_port(cur, owner2.local))
                cur = owner2
        peer2, _ = self.global_peer(cur, gport2)
        path.append(PortId(cur, "global", gport2))
        cur = peer2
        if cur != dst:
            path.append(self.local_port(cur, dst.local))
        return path

    # -- serialization for determinism checks ---------------------------------

    def adjacency(self) -> dict[int, list[tuple[int, str]]]:
        """Flat-indexed router adjacency: router -> sorted [(peer, kind)]."""
        adj: dict[int, list[tuple[int, str]]] = {}
        a = self.config.routers_per_group
        for r in self.routers():
            entries = []
            for loc in range(a):
                if loc != r.local:
                    entries.append((self.router_flat(RouterId(r.group, loc)), "local"))
            for k in range(self.config.global_links_per_router):
                peer = self.global_peer(r, k)
                if peer is not None:
                    entries.append((self.router_flat(peer[0]), "global"))
            adj[self.router_flat(r)] = sorted(entries)
        return adj

    def canonical_json(self) -> str:
        adj = {str(k): v for k, v in self.adjacency().items()}
        return json.dumps(adj, sort_keys=True, separators=(",", ":"))


def build(config: TopologyConfig) -> Topology:
    """Validate ``config`` and construct the Dragonfly graph."""
    return Topology(config)
