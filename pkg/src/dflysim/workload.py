"""Communication motifs as per-rank step programs.

A program is a list of steps per rank over a simplified message layer:
sends are non-blocking (the NIC queues without bound), receives block until
the matching message has fully arrived, and ``waitall`` blocks until every
packet this rank has queued is on the wire.  Steps:

    ("compute", ps)
    ("send", dst_rank, nbytes, tag, payload_mode)   payload_mode: None | "value"
    ("recv", src_rank, tag, mode)                   mode: None | "add" | "set"
    ("waitall",)
    ("iter", index)
    ("value", v)                                    set the rank's value register

The nine shipped motifs: ur (uniform random), lu (2-D sweep), fft3d
(row/column ring alltoalls), halo3d / lqcd / stencil5d (3/4/5-D stencils),
cosmoflow / dl (binary-tree allreduce), lulesh (26-point stencil plus 3-D
sweep).  A tenth synthetic motif, shift, aims every group's traffic at one
other group for adversarial-load experiments.

Default message sizes and iteration counts are calibrated to the published
per-application totals at half-system scale; scenario files override them.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field

PS_PER_NS = 1000


class WorkloadError(ValueError):
    """A motif was given an invalid rank count or parameter set."""


@dataclass
class MotifProgram:
    name: str
    ranks: int
    steps: list[list[tuple]]
    total_bytes: int
    peak_ingress: int  # analytic: max bytes posted before a blocking step
    meta: dict = field(default_factory=dict)


def _compute(ns: float) -> tuple:
    return ("compute", round(ns * PS_PER_NS))


def _send(dst: int, nbytes: int, tag: int, payload=None) -> tuple:
    return ("send", dst, nbytes, tag, payload)


def _recv(src: int, tag: int, mode=None) -> tuple:
    return ("recv", src, tag, mode)


def balanced_dims(n: int, k: int) -> list[int]:
    """Deterministic near-balanced factorization of n into k extents."""
    best = None

    def rec(remaining, factors_left, minf, acc):
        nonlocal best
        if factors_left == 1:
            if remaining >= minf:
                cand = acc + [remaining]
                score = (max(cand) - min(cand), tuple(cand))
                if best is None or score < best[0]:
                    best = (score, cand)
            return
        f = minf
        while f ** factors_left <= remaining:
            if remaining % f == 0:
                rec(remaining // f, factors_left - 1, f, acc + [f])
            f += 1

    rec(n, k, 1, [])
    if best is None:
        raise WorkloadError(f"cannot factor {n} ranks into {k} dimensions")
    return best[1]


def _grid_coords(dims: list[int]) -> list[tuple[int, ...]]:
    coords = [()]
    for d in dims:
        coords = [c + (i,) for c in coords for i in range(d)]
    return coords


def _grid_rank(coord: tuple[int, ...], dims: list[int]) -> int:
    r = 0
    for c, d in zip(coord, dims):
        r = r * d + c
    return r


# -- uniform random ------------------------------------------------------------------


def motif_ur(ranks: int, msg_bytes: int = 3072, rounds: int = 3647,
             gap_ns: float = 3650.0, rng: random.Random | None = None) -> MotifProgram:
    """Each rank sends one message per round to a random other rank.

    Rounds are random cycles so every send has a matching receive and rounds
    cannot deadlock; the per-round target is uniform over the other ranks.
    """
    if ranks < 2:
        raise WorkloadError(f"ur needs >= 2 ranks, got {ranks}")
    rng = rng or random.Random(0)
    steps = [[] for _ in range(ranks)]
    for rnd in range(rounds):
        order = list(range(ranks))
        rng.shuffle(order)
        for j, r in enumerate(order):
            target = order[(j + 1) % ranks]
            source = order[(j - 1) % ranks]
            steps[r].append(("iter", rnd))
            steps[r].append(_compute(gap_ns))
            steps[r].append(_send(target, msg_bytes, rnd))
            steps[r].append(_recv(source, rnd))
    return MotifProgram("ur", ranks, steps, ranks * rounds * msg_bytes, msg_bytes,
                        {"msg_bytes": msg_bytes, "rounds": rounds})


# -- wavefront sweeps ------------------------------------------------------------------


def motif_sweep(dims: list[int], msg_bytes: int, iterations: int,
                compute_ns: float, name: str = "sweep") -> MotifProgram:
    """2-D wavefront: receive from up/left, compute, send to down/right."""
    rows, cols = dims
    ranks = rows * cols
    steps = [[] for _ in range(ranks)]
    for it in range(iterations):
        base = it * 2
        for i in range(rows):
            for j in range(cols):
                r = i * cols + j
                prog = steps[r]
                prog.append(("iter", it))
                if i > 0:
                    prog.append(_recv((i - 1) * cols + j, base))
                if j > 0:
                    prog.append(_recv(i * cols + (j - 1), base + 1))
                prog.append(_compute(compute_ns))
                if i < rows - 1:
                    prog.append(_send((i + 1) * cols + j, msg_bytes, base))
                if j < cols - 1:
                    prog.append(_send(i * cols + (j + 1), msg_bytes, base + 1))
                prog.append(("waitall",))
    total = iterations * (rows * (cols - 1) + cols * (rows - 1)) * msg_bytes
    peak = (2 if rows > 1 and cols > 1 else 1) * msg_bytes
    return MotifProgram(name, ranks, steps, total, peak,
                        {"dims": dims, "msg_bytes": msg_bytes})


def motif_sweep_lu(ranks: int, msg_bytes: int = 15000, iterations: int = 461,
                   compute_ns: float = 300.0, dims: list[int] | None = None) -> MotifProgram:
    """LU solver skeleton: square-grid wavefront sweep."""
    if dims is None:
        n = math.isqrt(ranks)
        if n * n != ranks:
            raise WorkloadError(f"lu needs a square rank count, got {ranks}")
        dims = [n, n]
    if dims[0] * dims[1] != ranks:
        raise WorkloadError(f"lu dims {dims} do not cover {ranks} ranks")
    return motif_sweep(dims, msg_bytes, iterations, compute_ns, name="lu")


# -- ring alltoall / FFT3D ------------------------------------------------------------------


def alltoall_ring_steps(steps: list[list[tuple]], comm: list[int], msg_bytes: int,
                        tag_base: int) -> None:
    """Append one ring alltoall over ``comm``: round i sends to N+i, receives from N-i."""
    P = len(comm)
    for pos, r in enumerate(comm):
        prog = steps[r]
        for i in range(1, P):
            prog.append(_send(comm[(pos + i) % P], msg_bytes, tag_base + i))
            prog.append(_recv(comm[(pos - i) % P], tag_base + i))


def motif_alltoall(ranks: int, msg_bytes: int = 51680, rounds: int = 1) -> MotifProgram:
    """One communicator-wide ring alltoall, repeated ``rounds`` times."""
    if ranks < 2:
        raise WorkloadError(f"alltoall needs >= 2 ranks, got {ranks}")
    steps = [[] for _ in range(ranks)]
    for rnd in range(rounds):
        for prog in steps:
            prog.append(("iter", rnd))
        alltoall_ring_steps(steps, list(range(ranks)), msg_bytes, rnd * ranks)
    total = rounds * ranks * (ranks - 1) * msg_bytes
    return MotifProgram("alltoall", ranks, steps, total, msg_bytes,
                        {"msg_bytes": msg_bytes})


def motif_fft3d(ranks: int, msg_bytes: int = 51680, iterations: int = 5,
                compute_ns: float = 1_150_000.0,
                dims: list[int] | None = None) -> MotifProgram:
    """2-D process array; rows then columns run ring alltoalls between FFT computes."""
    if dims is None:
        dims = balanced_dims(ranks, 2)
    rows, cols = dims
    if rows * cols != ranks:
        raise WorkloadError(f"fft3d dims {dims} do not cover {ranks} ranks")
    if rows < 2 or cols < 2:
        raise WorkloadError(f"fft3d needs a 2-D grid, got {dims}")
    steps = [[] for _ in range(ranks)]
    tag = 0
    for it in range(iterations):
        for prog in steps:
            prog.append(("iter", it))
            prog.append(_compute(compute_ns))
        for i in range(rows):
            comm = [i * cols + j for j in range(cols)]
            alltoall_ring_steps(steps, comm, msg_bytes, tag)
        tag += cols
        for prog in steps:
            prog.append(_compute(compute_ns))
        for j in range(cols):
            comm = [i * cols + j for i in range(rows)]
            alltoall_ring_steps(steps, comm, msg_bytes, tag)
        tag += rows
    total = iterations * (rows * cols * (cols - 1) + cols * rows * (rows - 1)) * msg_bytes
    return MotifProgram("fft3d", ranks, steps, total, msg_bytes,
                        {"dims": dims, "msg_bytes": msg_bytes})


# -- stencils ------------------------------------------------------------------


def motif_stencil(dims: list[int], msg_bytes: int, iterations: int,
                  compute_ns: float, name: str = "stencil") -> MotifProgram:
    """Nearest-neighbor exchange in both directions along every dimension.

    Boundaries are non-periodic: ranks on grid faces have fewer neighbors
    and finish their exchanges sooner.
    """
    ranks = math.prod(dims)
    ndims = len(dims)
    coords = _grid_coords(dims)
    steps = [[] for _ in range(ranks)]
    total = 0
    peak = 0
    for it in range(iterations):
        base = it * 2 * ndims
        for coord in coords:
            r = _grid_rank(coord, dims)
            prog = steps[r]
            prog.append(("iter", it))
            prog.append(_compute(compute_ns))
            neighbors = []
            for d in range(ndims):
                for side, delta in ((0, -1), (1, +1)):
                    nc = coord[d] + delta
                    if 0 <= nc < dims[d]:
                        nco = coord[:d] + (nc,) + coord[d + 1:]
                        neighbors.append((d, side, _grid_rank(nco, dims)))
            for d, side, nb in neighbors:
                prog.append(_send(nb, msg_bytes, base + d * 2 + side))
            for d, side, nb in neighbors:
                # The neighbor sent in the opposite direction of this tag.
                prog.append(_recv(nb, base + d * 2 + (1 - side)))
            total += len(neighbors) * msg_bytes
            peak = max(peak, len(neighbors) * msg_bytes)
    return MotifProgram(name, ranks, steps, total, peak,
                        {"dims": dims, "msg_bytes": msg_bytes})


def motif_halo3d(ranks: int, msg_bytes: int = 192000, iterations: int = 44,
                 compute_ns: float = 180_000.0, dims=None) -> MotifProgram:
    dims = dims or balanced_dims(ranks, 3)
    if math.prod(dims) != ranks or len(dims) != 3:
        raise WorkloadError(f"halo3d dims {dims} do not cover {ranks} ranks")
    return motif_stencil(dims, msg_bytes, iterations, compute_ns, name="halo3d")


def motif_lqcd(ranks: int, msg_bytes: int = 575000, iterations: int = 3,
               compute_ns: float = 4_300_000.0, dims=None) -> MotifProgram:
    dims = dims or balanced_dims(ranks, 4)
    if math.prod(dims) != ranks or len(dims) != 4:
        raise WorkloadError(f"lqcd dims {dims} do not cover {ranks} ranks")
    return motif_stencil(dims, msg_bytes, iterations, compute_ns, name="lqcd")


def motif_stencil5d(ranks: int, msg_bytes: int = 1_400_000, iterations: int = 1,
                    compute_ns: float = 500_000.0, dims=None) -> MotifProgram:
    dims = dims or balanced_dims(ranks, 5)
    if math.prod(dims) != ranks or len(dims) != 5:
        raise WorkloadError(f"stencil5d dims {dims} do not cover {ranks} ranks")
    return motif_stencil(dims, msg_bytes, iterations, compute_ns, name="stencil5d")


# -- binary-tree allreduce ------------------------------------------------------------------


def motif_allreduce(ranks: int, msg_bytes: int, interval_ns: float, rounds: int,
                    name: str = "allreduce", values: list[int] | None = None) -> MotifProgram:
    """Compute interval, then reduce leaf-to-root and broadcast root-to-leaf.

    Rank r's children are 2r+1 and 2r+2.  When ``values`` is given, the
    reduction result (sum over ranks) lands in every rank's value register.
    """
    if ranks < 1:
        raise WorkloadError(f"allreduce needs >= 1 rank, got {ranks}")
    steps = [[] for _ in range(ranks)]
    payload = values is not None
    if payload:
        for r in range(ranks):
            steps[r].append(("value", values[r]))
    for rnd in range(rounds):
        up, down = rnd * 2, rnd * 2 + 1
        for r in range(ranks):
            prog = steps[r]
            prog.append(("iter", rnd))
            prog.append(_compute(interval_ns))
            children = [c for c in (2 * r + 1, 2 * r + 2) if c < ranks]
            for c in children:
                prog.append(_recv(c, up, "add" if payload else None))
            if r != 0:
                prog.append(_send((r - 1) // 2, msg_bytes, up,
                                  "value" if payload else None))
                prog.append(_recv((r - 1) // 2, down, "set" if payload else None))
            for c in children:
                prog.append(_send(c, msg_bytes, down, "value" if payload else None))
    total = rounds * 2 * (ranks - 1) * msg_bytes
    peak = min(2, max(0, ranks - 1)) * msg_bytes
    return MotifProgram(name, ranks, steps, total, peak,
                        {"msg_bytes": msg_bytes, "rounds": rounds})


def motif_cosmoflow(ranks: int, msg_bytes: int = 1_126_000,
                    interval_ns: float = 5_160_000.0, rounds: int = 2) -> MotifProgram:
    """Data-parallel DL skeleton: 28.15 MB / 129 ms allreduce scaled down 25x."""
    return motif_allreduce(ranks, msg_bytes, interval_ns, rounds, name="cosmoflow")


def motif_dl(ranks: int, msg_bytes: int = 1_150_000,
             interval_ns: float = 1_100_000.0, rounds: int = 8) -> MotifProgram:
    """Heavier allreduce: similar message size, ~4.7x higher injection rate."""
    return motif_allreduce(ranks, msg_bytes, interval_ns, rounds, name="dl")


# -- LULESH ------------------------------------------------------------------


def motif_lulesh(ranks: int, stencil_bytes: int = 75000, sweep_bytes: int = 4970,
                 iterations: int = 23, compute_ns: float = 300_000.0) -> MotifProgram:
    """26-point 3-D stencil followed by a 3-D wavefront sweep each iteration."""
    n = round(ranks ** (1 / 3))
    if n * n * n != ranks:
        raise WorkloadError(f"lulesh needs a cubic rank count, got {ranks}")
    dims = [n, n, n]
    coords = _grid_coords(dims)
    steps = [[] for _ in range(ranks)]
    total = 0
    peak = 0
    offsets = [(dx, dy, dz)
               for dx in (-1, 0, 1) for dy in (-1, 0, 1) for dz in (-1, 0, 1)
               if (dx, dy, dz) != (0, 0, 0)]
    off_tag = {o: i for i, o in enumerate(offsets)}
    for it in range(iterations):
        st_base = it * 32
        sw_base = it * 32 + 26
        for coord in coords:
            r = _grid_rank(coord, dims)
            prog = steps[r]
            prog.append(("iter", it))
            prog.append(_compute(compute_ns))
            nbrs = []
            for off in offsets:
                nc = tuple(c + d for c, d in zip(coord, off))
                if all(0 <= v < n for v in nc):
                    nbrs.append((off, _grid_rank(nc, dims)))
            for off, nb in nbrs:
                prog.append(_send(nb, stencil_bytes, st_base + off_tag[off]))
            for off, nb in nbrs:
                back = tuple(-d for d in off)
                prog.append(_recv(nb, st_base + off_tag[back]))
            total += len(nbrs) * stencil_bytes
            peak = max(peak, len(nbrs) * stencil_bytes)
            # sweep3d: wavefront from the origin corner
            for d in range(3):
                if coord[d] > 0:
                    up = coord[:d] + (coord[d] - 1,) + coord[d + 1:]
                    prog.append(_recv(_grid_rank(up, dims), sw_base + d))
            for d in range(3):
                if coord[d] < n - 1:
                    down = coord[:d] + (coord[d] + 1,) + coord[d + 1:]
                    prog.append(_send(_grid_rank(down, dims), sweep_bytes, sw_base + d))
                    total += sweep_bytes
            prog.append(("waitall",))
    return MotifProgram("lulesh", ranks, steps, total, peak,
                        {"dims": dims, "stencil_bytes": stencil_bytes,
                         "sweep_bytes": sweep_bytes})


# -- adversarial group-shift traffic ------------------------------------------------------------------


def motif_shift(ranks: int, msg_bytes: int, count: int, rank_groups: list[int],
                num_groups: int, rng: random.Random, offset: int = 1) -> MotifProgram:
    """Every rank bursts ``count`` messages at random ranks one group over.

    ``rank_groups`` maps each rank to its topology group (placement aware).
    Classic adversarial load: each group sends solely to one other group.
    """
    if ranks < 2:
        raise WorkloadError(f"shift needs >= 2 ranks, got {ranks}")
    by_group: dict[int, list[int]] = {}
    for r, grp in enumerate(rank_groups):
        by_group.setdefault(grp, []).append(r)
    steps = [[] for _ in range(ranks)]
    incoming: dict[int, list[tuple[int, int]]] = {r: [] for r in range(ranks)}
    for r in range(ranks):
        grp = rank_groups[r]
        targets = by_group.get((grp + offset) % num_groups)
        if not targets:
            raise WorkloadError(
                f"no ranks placed in group {(grp + offset) % num_groups} "
                f"for shift traffic from group {grp}")
        for k in range(count):
            dst = targets[rng.randrange(len(targets))]
            steps[r].append(_send(dst, msg_bytes, k))
            incoming[dst].append((r, k))
    for r in range(ranks):
        for src, k in sorted(incoming[r]):
            steps[r].append(_recv(src, k))
    return MotifProgram("shift", ranks, steps, ranks * count * msg_bytes,
                        count * msg_bytes, {"msg_bytes": msg_bytes, "count": count})


# -- registry used by the harness ------------------------------------------------------------------


def build_motif(name: str, ranks: int, params: dict, rng: random.Random,
                rank_groups: list[int] | None = None,
                num_groups: int | None = None) -> MotifProgram:
    """Build a motif by scenario name; unknown keys raise WorkloadError."""
    p = dict(params)
    try:
        if name == "ur":
            return motif_ur(ranks, rng=rng, **p)
        if name == "lu":
            return motif_sweep_lu(ranks, **p)
        if name == "alltoall":
            return motif_alltoall(ranks, **p)
        if name == "fft3d":
            return motif_fft3d(ranks, **p)
        if name == "halo3d":
            return motif_halo3d(ranks, **p)
        if name == "lqcd":
            return motif_lqcd(ranks, **p)
        if name == "stencil5d":
            return motif_stencil5d(ranks, **p)
        if name == "cosmoflow":
            return motif_cosmoflow(ranks, **p)
        if name == "dl":
            return motif_dl(ranks, **p)
        if name == "lulesh":
            return motif_lulesh(ranks, **p)
        if name == "allreduce":
            return motif_allreduce(ranks, **p)
        if name == "shift":
            return motif_shift(ranks, rank_groups=rank_groups,
                               num_groups=num_groups, rng=rng, **p)
    except TypeError as exc:
        raise WorkloadError(f"bad parameters for motif {name!r}: {exc}") from exc
    raise WorkloadError(f"unknown motif {name!r}")


MOTIF_NAMES = ["ur", "lu", "alltoall", "fft3d", "halo3d", "lqcd", "stencil5d",
               "cosmoflow", "dl", "lulesh", "allreduce", "shift"]
