import pytest

from dflysim.engine import Engine, EngineParams
from dflysim.routing import make_policy
from dflysim.topology import TopologyConfig, build


def desk_config(**kw):
    args = dict(groups=9, routers_per_group=4, hosts_per_router=2,
                global_links_per_router=2)
    args.update(kw)
    return TopologyConfig(**args)


def make_engine(alg="min", seed=1, config=None, params=None, **policy_kw):
    topo = build(config or desk_config())
    policy = make_policy(alg, seed=seed, **policy_kw)
    return Engine(topo, policy, params or EngineParams())


@pytest.fixture
def desk_topology():
    return build(desk_config())


def send(dst, nbytes, tag=0):
    return ("send", dst, nbytes, tag, None)


def recv(src, tag=0):
    return ("recv", src, tag, None)


def compute(ns):
    return ("compute", ns * 1000)


def audit_hops_and_vcs(packets, max_hops):
    """Every packet respects the hop bound and strictly ascending per-kind VCs."""
    for p in packets:
        assert p.hops <= max_hops, f"packet {p.pid} took {p.hops} hops"
        by_kind = {}
        for kind, vc in p.vc_log:
            if kind in ("local", "global"):
                prev = by_kind.get(kind, -1)
                assert vc > prev, f"packet {p.pid} vc_log {p.vc_log}"
                by_kind[kind] = vc
        assert by_kind.get("local", 0) <= 3 and by_kind.get("global", 0) <= 1


def conservation_ok(report):
    m = report.metrics
    assert m.injected == m.delivered, (m.injected, m.delivered)
    for ch in report.channels:
        assert sum(ch.bytes_by_job.values()) == ch.bytes_total
        for vc in range(len(ch.credits)):
            assert ch.credits[vc] == ch.capacity
            assert not ch.queues[vc]
    return True
