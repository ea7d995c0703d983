"""Genealogical observables of a completed arena.

Everything here is read-only over the flat forest: latest common
ancestors, the ultrametric genealogical distance, production numbers
(distinct ancestor counts of the hitter set), ancestor-keyed frontier
clusters with heterogeneity records, barrier crossings and near-frontier
particle counts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .engine import GenealogyArena, frontier_set
from .errors import InvalidNode
from .ratefn import Asymptote

QUALITY_EXACT = "exact"
QUALITY_APPROX = "approx"


def _check_node(arena: GenealogyArena, v: int) -> None:
    if not (0 <= v < arena.n_nodes):
        raise InvalidNode(f"node {v} out of range [0, {arena.n_nodes})")


def ancestors_at(arena: GenealogyArena, nodes, gen: int) -> np.ndarray:
    """Generation-``gen`` ancestor of each node (identity if born there)."""
    nodes = np.asarray(nodes, dtype=np.int64)
    if nodes.size and (nodes.min() < 0 or nodes.max() >= arena.n_nodes):
        raise InvalidNode("node index out of range")
    parents = arena.parents
    births = arena.birth_gens[nodes].astype(np.int64)
    if nodes.size and births.min() < gen:
        raise InvalidNode(f"node born before generation {gen}")
    cur = nodes.copy()
    while True:
        above = births > gen
        if not above.any():
            return cur
        cur[above] = parents[cur[above]]
        births[above] -= 1


def lca(arena: GenealogyArena, v: int, w: int) -> int:
    """Latest common ancestor by depth equalization and lock-step ascent."""
    _check_node(arena, v)
    _check_node(arena, w)
    parents = arena.parents
    gv, gw = arena.birth_gen_of(v), arena.birth_gen_of(w)
    while gv > gw:
        v = int(parents[v])
        gv -= 1
    while gw > gv:
        w = int(parents[w])
        gw -= 1
    while v != w:
        v, w = int(parents[v]), int(parents[w])
    return v


def genealogical_distance(arena: GenealogyArena, v: int, w: int) -> int:
    """d_G(v, w) = (common generation) - (birth generation of the lca)."""
    _check_node(arena, v)
    _check_node(arena, w)
    t = arena.birth_gen_of(v)
    if arena.birth_gen_of(w) != t:
        raise InvalidNode("genealogical distance requires equal generations")
    return t - arena.birth_gen_of(lca(arena, v, w))


def _backward_sweep(arena: GenealogyArena, hitters: np.ndarray, t: int) -> np.ndarray:
    """P_n = #distinct generation-n ancestors of the hitters, n = 0..t."""
    p = np.zeros(t + 1, dtype=np.int64)
    if len(hitters) == 0:
        return p
    parents = arena.parents
    cur = np.unique(np.asarray(hitters, dtype=np.int64))
    p[t] = len(cur)
    for n in range(t - 1, -1, -1):
        cur = np.unique(parents[cur])
        p[n] = len(cur)
    return p


def production_numbers(
    arena: GenealogyArena, pivot: np.ndarray, x: float, t: int
) -> np.ndarray:
    """Ancestor counts of the level-``x`` hitter set at generation ``t``."""
    hitters = frontier_set(arena, pivot, x, gen=t)
    return _backward_sweep(arena, hitters, t)


def production_numbers_band(
    arena: GenealogyArena,
    pivot: np.ndarray,
    x: float,
    t: int,
    half_width: float = 0.5,
) -> np.ndarray:
    """Same sweep for hitters with pivot coordinate in [x-hw, x+hw]."""
    idx = arena.generation_indices(t)
    pc = arena.pivot_coords(pivot, t)
    band = idx[(pc >= x - half_width) & (pc <= x + half_width)]
    return _backward_sweep(arena, band, t)


@dataclass(frozen=True)
class HeterogeneityRecord:
    """Block-level ancestry summary.

    h is the age (in generations) of the block's latest common ancestor;
    g places the lca's pivot coordinate as x + g - m_{h-K}; u holds its
    transverse coordinates in the pivot-orthogonal frame.  When h - K < 2
    the log term in m is undefined and c1*(h-K) is used instead, recorded
    in ``flags``.
    """

    h: int
    g: float
    u: tuple
    lca_node: int
    flags: tuple = ()


@dataclass(frozen=True)
class BlockStats:
    cardinality: int
    dispersion: float
    lca_age: int


@dataclass(frozen=True)
class ClusterPartition:
    """Ancestor-keyed partition of the frontier at generation ``t``.

    Two hitters share a block iff they have the same ancestor at
    ``anchor_gen`` = t - anchor_lag.
    """

    frontier: tuple
    blocks: tuple
    anchor_gen: int
    stats: tuple
    records: tuple
    quality: str = QUALITY_EXACT

    @property
    def n_blocks(self) -> int:
        return len(self.blocks)


def _block_lca(arena: GenealogyArena, members: np.ndarray) -> int:
    """lca of same-generation members via simultaneous unique ascent."""
    parents = arena.parents
    cur = np.unique(members)
    while len(cur) > 1:
        cur = np.unique(parents[cur])
    return int(cur[0])


def clusters(
    arena: GenealogyArena,
    pivot: np.ndarray,
    x: float,
    t: int,
    anchor_lag: int,
    asym: Asymptote | None = None,
    lag_k: int = 0,
    quality: str = QUALITY_EXACT,
) -> ClusterPartition:
    """Partition the frontier by generation-(t - anchor_lag) ancestry.

    Heterogeneity records need the asymptote evaluator for m_{h-K}; when
    ``asym`` is omitted, g is reported relative to x alone (flagged).
    """
    if anchor_lag < 0 or anchor_lag > t:
        raise ValueError("anchor_lag must lie in [0, t]")
    pivot = np.asarray(pivot, dtype=float)
    hitters = frontier_set(arena, pivot, x, gen=t)
    anchor_gen = t - anchor_lag
    if len(hitters) == 0:
        return ClusterPartition(
            frontier=(), blocks=(), anchor_gen=anchor_gen, stats=(), records=(),
            quality=quality,
        )
    anchors = ancestors_at(arena, hitters, anchor_gen)
    order = np.argsort(anchors, kind="stable")
    anchors_sorted = anchors[order]
    hitters_sorted = hitters[order]
    cuts = np.flatnonzero(np.diff(anchors_sorted)) + 1
    groups = np.split(hitters_sorted, cuts)

    d = arena.dimension
    if d > 1 and asym is not None:
        frame = asym.constants.frame_array
    else:
        frame = None
    positions = arena.positions

    blocks, stats, records = [], [], []
    for members in groups:
        members = np.sort(members)
        blocks.append(tuple(int(m) for m in members))
        if frame is not None and len(members) > 1:
            trans = positions[members] @ frame.T
            diff = trans[:, None, :] - trans[None, :, :]
            dispersion = float(np.sqrt((diff * diff).sum(axis=-1)).max())
        else:
            dispersion = 0.0
        node = _block_lca(arena, members) if len(members) > 1 else int(members[0])
        h = t - arena.birth_gen_of(node)
        stats.append(BlockStats(cardinality=len(members), dispersion=dispersion, lca_age=h))

        pc = float(positions[node] @ pivot)
        flags = []
        if asym is None:
            m_val = 0.0
            flags.append("no_asymptote")
        elif h - lag_k < 2:
            m_val = asym.constants.c1 * (h - lag_k)
            flags.append("linear_m_fallback")
        else:
            m_val = asym.m_of_n(h - lag_k)
        g = pc - x + m_val
        if frame is not None:
            u = tuple(float(c) for c in positions[node] @ frame.T)
        else:
            u = ()
        records.append(
            HeterogeneityRecord(h=h, g=g, u=u, lca_node=node, flags=tuple(flags))
        )

    return ClusterPartition(
        frontier=tuple(int(v) for v in hitters),
        blocks=tuple(blocks),
        anchor_gen=anchor_gen,
        stats=tuple(stats),
        records=tuple(records),
        quality=quality,
    )


def barrier_crossings(
    arena: GenealogyArena,
    pivot: np.ndarray,
    beta: float,
    n: int,
    asym: Asymptote,
) -> tuple[bool, int | None]:
    """Earliest generation at which some particle exceeds the barrier.

    The barrier at step k is k*m_n/n + beta + (6/c2)(log min(k, n-k))_+.
    """
    if n < 1 or n > arena.n_generations:
        raise ValueError("arena not complete to generation n")
    m_n = asym.m_of_n(n)
    c2 = asym.constants.c2
    for k in range(1, n + 1):
        pc = arena.pivot_coords(pivot, k)
        if len(pc) == 0:
            break
        edge = min(k, n - k)
        bump = (6.0 / c2) * max(math.log(edge), 0.0) if edge >= 1 else 0.0
        if pc.max() >= k * m_n / n + beta + bump:
            return True, k
    return False, None


def particle_count_profile(
    arena: GenealogyArena,
    pivot: np.ndarray,
    n: int,
    x_grid,
    asym: Asymptote,
) -> np.ndarray:
    """#{v alive at n : pivot coordinate >= m_n - x} for each x in the grid."""
    if n < 1 or n > arena.n_generations:
        raise ValueError("arena not complete to generation n")
    pc = np.sort(arena.pivot_coords(pivot, n))
    m_n = asym.m_of_n(n)
    x_grid = np.asarray(x_grid, dtype=float)
    return len(pc) - np.searchsorted(pc, m_n - x_grid, side="left")
