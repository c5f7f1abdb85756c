"""Per-packet output selection: MIN, UGALg, UGALn, and PAR.

All algorithms share one phase machine.  A packet decides minimal versus
non-minimal once at its source router (PAR may revise that choice once while
still inside the source group), then follows the committed path: to the
intermediate group, optionally through a detour router there, and minimally
to the destination.  The detour router is drawn among the mid-group routers
that own a global link toward the destination group, which keeps every
non-minimal path within 5 router-to-router hops (6 after a PAR revision)
and inside the engine's VC budget.

The UGAL rule compares the best of two sampled minimal candidates against
the best of two sampled non-minimal candidates using downstream queue
occupancy (buffer capacity minus available credits) of the first-hop port
only.  Minimal wins iff q_min < 2*q_nonmin + bias; an all-idle tie stays
minimal, any other tie goes non-minimal.

Virtual channels are assigned per path segment (see the engine module for
the deadlock argument): local hops use VC0 in the source group, VC1 after a
PAR revision, VC2 in the mid group, VC3 in the destination group; the
global hop toward a mid group uses VC0 and the one toward the destination
group VC1.
"""

from __future__ import annotations

import random
from typing import NamedTuple, Optional

from . import engine as eng
from .topology import RouterId


class Candidate(NamedTuple):
    channel: object
    vc: int
    occupancy: int
    mid_group: Optional[int] = None


class CandidateSet(NamedTuple):
    minimal: tuple[Candidate, ...]
    nonminimal: tuple[Candidate, ...]


def ugal_decide(cands: CandidateSet, bias: int = 0) -> Candidate:
    """Pick a candidate by the UGAL occupancy rule.

    Reads nothing but the occupancies inside ``cands``.  Returns the least
    occupied candidate on the winning side (first sampled wins ties).
    """
    best_min = min(cands.minimal, key=lambda c: c.occupancy)
    if not cands.nonminimal:
        return best_min
    best_non = min(cands.nonminimal, key=lambda c: c.occupancy)
    qm, qn = best_min.occupancy, best_non.occupancy
    if qm == 0 and qn == 0:
        return best_min  # idle network must not detour
    return best_min if qm < 2 * qn + bias else best_non


class BasePolicy:
    """Phase-following route computation shared by every algorithm."""

    name = "base"

    def __init__(self, seed: int = 0):
        self.rng = random.Random(seed)
        self._rr: dict[tuple[int, int], int] = {}

    def attach(self, engine: "eng.Engine") -> None:
        self.engine = engine

    def on_head_arrival(self, engine, channel, pkt) -> None:
        pass

    # -- entry point called by the engine --------------------------------------

    def route(self, engine, router, pkt):
        r = router.rid
        dst = pkt.dst
        if dst.group == r.group and dst.local == r.local:
            return router.out[("host", dst.slot)], 0
        if pkt.phase == eng.AT_SOURCE:
            hop = self.decide_at_source(engine, router, pkt)
            if hop is not None:
                return hop
        elif (pkt.phase == eng.MINIMAL_TO_DEST and r.group == pkt.src.group
              and not pkt.revised):
            hop = self.maybe_revise(engine, router, pkt)
            if hop is not None:
                return hop
        return self.follow(engine, router, pkt)

    # -- algorithm hooks ---------------------------------------------------------

    def decide_at_source(self, engine, router, pkt):
        """Commit the packet's routing mode; may return the first hop directly."""
        pkt.phase = eng.MINIMAL_TO_DEST
        return None

    def maybe_revise(self, engine, router, pkt):
        return None

    # -- committed-path following ---------------------------------------------------

    def local_vc(self, router, pkt) -> int:
        """Segment-based local VC: src 0, src-after-revision 1, mid 2, dst 3."""
        g = router.rid.group
        if g == pkt.dst.group:
            return 3
        if pkt.mid_group is not None and g == pkt.mid_group:
            return 2
        assert g == pkt.src.group, (
            f"packet {pkt.pid} takes a local hop outside src/mid/dst groups")
        return 1 if pkt.revised else 0

    @staticmethod
    def global_vc(pkt) -> int:
        """Global hop toward the mid group rides VC0, toward the destination VC1."""
        return 0 if pkt.phase == eng.NONMIN_TO_MID else 1

    def follow(self, engine, router, pkt):
        r = router.rid
        dstg = pkt.dst.group
        if pkt.phase == eng.NONMIN_TO_MID and r.group == pkt.mid_group:
            pkt.phase = eng.IN_MID_GROUP
        if pkt.phase in (eng.MINIMAL_TO_DEST, eng.MIN_TO_DEST_GROUP) and r.group == dstg:
            pkt.phase = eng.IN_DEST_GROUP
        if pkt.phase in (eng.MINIMAL_TO_DEST, eng.MIN_TO_DEST_GROUP):
            return self.port_toward_group(engine, router, dstg, pkt)
        if pkt.phase == eng.NONMIN_TO_MID:
            return self.port_toward_group(engine, router, pkt.mid_group, pkt)
        if pkt.phase == eng.IN_MID_GROUP:
            if pkt.detour_router is not None and not pkt.detour_done:
                if r == pkt.detour_router:
                    pkt.detour_done = True
                else:
                    detour = pkt.detour_router
                    ch = router.out[("local",
                                     engine.top.local_port(r, detour.local).index)]
                    return ch, self.local_vc(router, pkt)
            hop = self.port_toward_group(engine, router, dstg, pkt)
            if hop[0].kind == "global":
                pkt.phase = eng.MIN_TO_DEST_GROUP
            return hop
        if pkt.phase == eng.IN_DEST_GROUP:
            ch = router.out[("local",
                             engine.top.local_port(r, pkt.dst.local).index)]
            return ch, self.local_vc(router, pkt)
        raise AssertionError(f"unroutable packet {pkt.pid} in phase {pkt.phase}")

    def port_toward_group(self, engine, router, group, pkt):
        """Next hop toward ``group``: own global link or local hop to an owner.

        Parallel links between a group pair are picked round-robin per
        (router, target group).
        """
        r = router.rid
        owners = engine.top.global_owners(r.group, group)
        if len(owners) == 1:
            owner, gport = owners[0]
        else:
            key = (engine.top.router_flat(r), group)
            i = self._rr.get(key, 0)
            self._rr[key] = i + 1
            mine = [(o, gp) for o, gp in owners if o == r]
            pick = mine if mine else owners
            owner, gport = pick[i % len(pick)]
        if owner == r:
            return router.out[("global", gport)], self.global_vc(pkt)
        ch = router.out[("local", engine.top.local_port(r, owner.local).index)]
        return ch, self.local_vc(router, pkt)

    # -- candidate sampling (shared by UGAL variants and Q-adaptive) -------------------

    def build_candidates(self, engine, router, pkt,
                         revision: bool = False) -> CandidateSet:
        """Sample 2 minimal and 2 non-minimal first-hop candidates.

        Occupancies are read at decision time on the VC each candidate
        would ride; ``revision`` marks a PAR re-evaluation, whose local
        hops ride VC1.
        """
        top = engine.top
        r = router.rid
        dstg = pkt.dst.group
        lvc = 1 if revision else 0
        minimal: list[Candidate] = []
        seen = set()
        if dstg == r.group:
            ch = router.out[("local", top.local_port(r, pkt.dst.local).index)]
            minimal.append(Candidate(ch, 3, ch.occupancy(3)))
        else:
            options = []
            for owner, gport in top.global_owners(r.group, dstg):
                if owner == r:
                    ch = router.out[("global", gport)]
                    vc = 1  # global hop toward the destination group
                else:
                    ch = router.out[("local", top.local_port(r, owner.local).index)]
                    vc = lvc
                if ch.cid not in seen:
                    seen.add(ch.cid)
                    options.append(Candidate(ch, vc, ch.occupancy(vc)))
            if len(options) > 2:
                options = self.rng.sample(options, 2)
            minimal.extend(options)
        while len(minimal) < 2:
            minimal.append(minimal[0])
        mids = [g for g in range(top.config.groups) if g not in (r.group, dstg)]
        nonminimal: list[Candidate] = []
        if mids and dstg != r.group:
            picked = self.rng.sample(mids, min(2, len(mids)))
            for mid in picked:
                owners = top.global_owners(r.group, mid)
                owner, gport = owners[0]
                if owner == r:
                    ch = router.out[("global", gport)]
                    vc = 0  # global hop toward a mid group
                else:
                    ch = router.out[("local", top.local_port(r, owner.local).index)]
                    vc = lvc
                nonminimal.append(Candidate(ch, vc, ch.occupancy(vc), mid))
            while len(nonminimal) < 2:
                nonminimal.append(nonminimal[0])
        return CandidateSet(tuple(minimal), tuple(nonminimal))

    def commit_candidate(self, engine, pkt, cand: Candidate, detour: bool):
        """Commit a source decision; returns the decided first hop."""
        if cand.mid_group is None:
            pkt.phase = eng.MINIMAL_TO_DEST
        else:
            pkt.phase = eng.NONMIN_TO_MID
            pkt.mid_group = cand.mid_group
            pkt.nonminimal = True
            if detour:
                exits = engine.top.exit_routers(cand.mid_group, pkt.dst.group)
                pkt.detour_router = self.rng.choice(exits)
        return cand.channel, cand.vc


class MinPolicy(BasePolicy):
    name = "min"


class UgalPolicy(BasePolicy):
    """UGALg: one-time source decision, minimal inside the mid group."""

    name = "ugalg"
    detour = False

    def __init__(self, seed: int = 0, bias: int = 0):
        super().__init__(seed)
        self.bias = bias

    def decide_at_source(self, engine, router, pkt):
        if pkt.dst.group == router.rid.group:
            pkt.phase = eng.MINIMAL_TO_DEST
            return None
        cands = self.build_candidates(engine, router, pkt)
        chosen = ugal_decide(cands, self.bias)
        return self.commit_candidate(engine, pkt, chosen, self.detour)


class UgalNPolicy(UgalPolicy):
    """UGALn: like UGALg plus a random exit-capable detour router in the mid group."""

    name = "ugaln"
    detour = True


class ParPolicy(UgalNPolicy):
    """Progressive adaptive routing: source-group routers may revise once."""

    name = "par"

    def maybe_revise(self, engine, router, pkt):
        if pkt.dst.group == router.rid.group:
            return None
        cands = self.build_candidates(engine, router, pkt, revision=True)
        chosen = ugal_decide(cands, self.bias)
        if chosen.mid_group is None:
            return None
        pkt.revised = True
        return self.commit_candidate(engine, pkt, chosen, True)


def make_policy(name: str, seed: int = 0, bias: int = 0, **q_kwargs):
    """Instantiate a routing policy by config name."""
    name = name.lower()
    if name == "min":
        return MinPolicy(seed)
    if name == "ugalg":
        return UgalPolicy(seed, bias)
    if name == "ugaln":
        return UgalNPolicy(seed, bias)
    if name == "par":
        return ParPolicy(seed, bias)
    if name == "qadaptive":
        from .qlearn import QAdaptivePolicy

        return QAdaptivePolicy(seed=seed, **q_kwargs)
    raise ValueError(f"unknown routing algorithm {name!r}")
