import random
from collections import deque

import pytest

from dflysim.topology import (
    LinkParams,
    NodeId,
    PortId,
    RouterId,
    Topology,
    TopologyConfig,
    TopologyError,
    build,
)


def desk_config(**kw):
    args = dict(
        groups=9,
        routers_per_group=4,
        hosts_per_router=2,
        global_links_per_router=2,
    )
    args.update(kw)
    return TopologyConfig(**args)


def bfs_hops(adj, src, dst):
    """Shortest-path oracle over the flat router adjacency."""
    if src == dst:
        return 0
    seen = {src}
    frontier = deque([(src, 0)])
    while frontier:
        cur, d = frontier.popleft()
        for peer, _kind in adj[cur]:
            if peer == dst:
                return d + 1
            if peer not in seen:
                seen.add(peer)
                frontier.append((peer, d + 1))
    return None


def follow(topo, src, path):
    """Walk a port path and return the routers visited (including src)."""
    visited = [src]
    cur = src
    for port in path:
        assert port.router == cur, f"path hop {port} not at current router {cur}"
        if port.kind == "local":
            cur = topo.local_neighbor(cur, port.index)
        elif port.kind == "global":
            peer = topo.global_peer(cur, port.index)
            assert peer is not None, f"path uses unwired global port {port}"
            cur = peer[0]
        else:
            raise AssertionError(f"unexpected port kind {port.kind}")
        visited.append(cur)
    return visited


def test_canonical_counts():
    cfg = TopologyConfig()
    assert cfg.num_hosts == 1056
    assert cfg.num_routers == 264
    assert cfg.num_local_links == 33 * 28
    assert cfg.num_global_links == 528
    assert cfg.parallel_global_links == 1


def test_invalid_configs_rejected():
    with pytest.raises(TopologyError, match="routers_per_group"):
        build(desk_config(groups=2, routers_per_group=1))
    with pytest.raises(TopologyError, match="groups"):
        build(desk_config(groups=1))
    with pytest.raises(TopologyError, match="a\\*h"):
        build(desk_config(groups=12))  # a*h = 8 < 11
    with pytest.raises(TopologyError, match="hosts_per_router"):
        build(desk_config(hosts_per_router=0))
    with pytest.raises(TopologyError, match="bandwidth"):
        build(desk_config(local_link=LinkParams(0.0, 30)))


def test_global_wiring_symmetric_and_complete():
    for cfg in (desk_config(), TopologyConfig(), desk_config(groups=5, global_links_per_router=4)):
        topo = build(cfg)
        g = cfg.groups
        counts = {}
        for r in topo.routers():
            for k in range(cfg.global_links_per_router):
                peer = topo.global_peer(r, k)
                if peer is None:
                    continue
                # The peer's port must point straight back.
                back = topo.global_peer(*peer)
                assert back == (r, k)
                counts[(r.group, peer[0].group)] = counts.get((r.group, peer[0].group), 0) + 1
        q = cfg.parallel_global_links
        for sg in range(g):
            for dg in range(g):
                if sg != dg:
                    assert counts[(sg, dg)] == q
                    assert counts[(sg, dg)] == counts[(dg, sg)]


def test_desk_config_connected_all_hosts():
    cfg = desk_config()
    topo = build(cfg)
    assert cfg.num_hosts == 72
    adj = topo.adjacency()
    # Host reachability reduces to router reachability: every node hangs off
    # its router, so check all router pairs.
    flats = list(adj)
    src = flats[0]
    for dst in flats:
        assert bfs_hops(adj, src, dst) is not None


def test_minimal_route_patterns_and_bound():
    topo = build(desk_config())
    a = topo.config.routers_per_group
    assert topo.minimal_route(RouterId(3, 2), RouterId(3, 2)) == []
    same_group = topo.minimal_route(RouterId(3, 2), RouterId(3, 0))
    assert [p.kind for p in same_group] == ["local"]
    adj = topo.adjacency()
    for sg in range(topo.config.groups):
        for sl in range(a):
            for dg in range(topo.config.groups):
                for dl in range(a):
                    src, dst = RouterId(sg, sl), RouterId(dg, dl)
                    path = topo.minimal_route(src, dst)
                    assert len(path) <= 3
                    kinds = "".join(p.kind[0] for p in path)
                    assert kinds in {"", "l", "g", "lg", "gl", "lgl"}
                    visited = follow(topo, src, path)
                    assert visited[-1] == dst
                    oracle = bfs_hops(adj, topo.router_flat(src), topo.router_flat(dst))
                    assert len(path) >= oracle  # never shorter than true shortest


def test_nonminimal_route_exhaustive_bound():
    topo = build(desk_config())
    g = topo.config.groups
    a = topo.config.routers_per_group
    rng = random.Random(7)
    routers = [RouterId(gr, lo) for gr in range(g) for lo in range(a)]
    for src in routers:
        for _ in range(6):
            dst = rng.choice([r for r in routers if r.group != src.group])
            for mid in range(g):
                if mid in (src.group, dst.group):
                    continue
                for visit in (False, True):
                    path = topo.nonminimal_route(src, mid, dst, visit_random_router=visit)
                    assert len(path) <= 5
                    visited = follow(topo, src, path)
                    assert visited[-1] == dst
                    assert any(r.group == mid for r in visited)


def test_nonminimal_pattern_is_lglgl_subsequence():
    topo = build(desk_config())
    src, dst, mid = RouterId(0, 0), RouterId(2, 3), 1
    for visit in (False, True):
        path = topo.nonminimal_route(src, mid, dst, visit_random_router=visit)
        kinds = "".join(p.kind[0] for p in path)
        # subsequence of l,g,l,g,l with both globals present
        assert kinds.count("g") == 2
        full = "lglgl"
        it = iter(full)
        assert all(any(c == f for f in it) for c in kinds), kinds


def test_nonminimal_rejects_bad_mid_group():
    topo = build(desk_config())
    src, dst = RouterId(0, 1), RouterId(2, 3)
    with pytest.raises(TopologyError):
        topo.nonminimal_route(src, src.group, dst)
    with pytest.raises(TopologyError):
        topo.nonminimal_route(src, dst.group, dst)


def test_detour_router_can_always_exit():
    topo = build(desk_config(groups=5, global_links_per_router=4))  # q = 4
    for mid in range(5):
        for dg in range(5):
            if dg == mid:
                continue
            for r in topo.exit_routers(mid, dg):
                assert any(rtr == r for rtr, _ in topo.global_owners(mid, dg))


def test_build_deterministic_serialization():
    a = build(desk_config()).canonical_json()
    b = build(desk_config()).canonical_json()
    assert a == b
    assert a != build(desk_config(groups=5, global_links_per_router=4)).canonical_json()


def test_flat_index_bijections():
    topo = build(desk_config())
    for i, r in enumerate(topo.routers()):
        assert topo.router_flat(r) == i
        assert topo.router_from_flat(i) == r
    for i, n in enumerate(topo.nodes()):
        assert topo.node_flat(n) == i
        assert topo.node_from_flat(i) == n
    n = NodeId(4, 1, 1)
    assert n.router == RouterId(4, 1)


def test_local_port_indexing():
    topo = build(desk_config())
    r = RouterId(2, 2)
    ports = [topo.local_port(r, nb) for nb in range(4) if nb != 2]
    assert [p.index for p in ports] == [0, 1, 2]
    for p in ports:
        nb = topo.local_neighbor(r, p.index)
        assert topo.local_port(r, nb.local) == p
    with pytest.raises(TopologyError):
        topo.local_port(r, 2)
