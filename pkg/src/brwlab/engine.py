"""Generation-by-generation branching random walk with full genealogy.

The arena is an append-only flat forest: every stored particle carries a
parent index, displacement and absolute position.  Frontier pruning
(window below the running pivot maximum plus a capacity cap) keeps the
population simulable out to the first-passage horizon; the per-generation
maximum is never pruned, so running maxima are those of the pruned process
itself.

Randomness contract (relied on by the reference-simulator tests): each
generation first draws one uniform per alive particle for the offspring
counts (parent index order), then one increment per child (children
grouped by parent, in parent order).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import CapacityExceeded, EmptyGeneration, InvalidNode, RestartBudgetExhausted
from .laws import IncrementLaw, OffspringLaw

ROOT = -1

TARGET_HIT = "target_hit"
EXTINCT = "extinct"
HORIZON_REACHED = "horizon_reached"
SURVIVED = "survived"

MODE_OFF = "off"
MODE_CAPACITY = "capacity"
MODE_WINDOW = "window"
MODE_BOTH = "both"


def substream(seed: int, *key: int) -> np.random.Generator:
    """Deterministic independent stream for (seed, replication path)."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=tuple(key)))


def default_pivot(dimension: int) -> np.ndarray:
    e1 = np.zeros(dimension)
    e1[0] = 1.0
    return e1


@dataclass
class PrunePolicy:
    """Frontier-pruning configuration.

    ``window_w0`` defaults to 15/tilt and the retained band below the
    running pivot maximum widens like (3/tilt) * log(n+2); ``tilt`` is the
    c2 constant of the pivot projection and is required for window modes.
    """

    mode: str = MODE_BOTH
    capacity: int = 200_000
    window_w0: float | None = None
    tilt: float | None = None
    hard_limit: int = 50_000_000

    def __post_init__(self):
        if self.mode not in (MODE_OFF, MODE_CAPACITY, MODE_WINDOW, MODE_BOTH):
            raise ValueError(f"unknown prune mode {self.mode!r}")
        if self.mode in (MODE_WINDOW, MODE_BOTH) and self.tilt is None:
            raise ValueError("window pruning requires the tilt constant c2")

    @classmethod
    def off(cls, hard_limit: int = 50_000_000) -> "PrunePolicy":
        return cls(mode=MODE_OFF, hard_limit=hard_limit)

    def window_at(self, gen: int) -> float:
        w0 = self.window_w0 if self.window_w0 is not None else 15.0 / self.tilt
        return w0 + (3.0 / self.tilt) * math.log(gen + 2.0)


class GenealogyArena:
    """Append-only flat forest of particle records.

    Nodes are stored in topological order (parent index < child index);
    generation g occupies the contiguous index range
    [offsets[g], offsets[g+1]).  The root sits at index 0 with position 0.
    """

    def __init__(self, dimension: int):
        self.dimension = dimension
        self._parent_chunks = [np.array([ROOT], dtype=np.int64)]
        self._disp_chunks = [np.zeros((1, dimension))]
        self._pos_chunks = [np.zeros((1, dimension))]
        self._offsets = [0, 1]
        self._flat = None  # cached concatenated arrays

    # ------------------------------------------------------------- growing

    def append_generation(self, parents: np.ndarray, disp: np.ndarray, pos: np.ndarray):
        self._parent_chunks.append(np.asarray(parents, dtype=np.int64))
        self._disp_chunks.append(disp)
        self._pos_chunks.append(pos)
        self._offsets.append(self._offsets[-1] + len(parents))
        self._flat = None

    # ------------------------------------------------------------ topology

    @property
    def n_nodes(self) -> int:
        return self._offsets[-1]

    @property
    def n_generations(self) -> int:
        """Largest generation index present (root is generation 0)."""
        return len(self._offsets) - 2

    @property
    def generation_offsets(self) -> np.ndarray:
        return np.asarray(self._offsets, dtype=np.int64)

    def generation_slice(self, gen: int) -> slice:
        if gen < 0 or gen > self.n_generations:
            raise EmptyGeneration(f"generation {gen} not present")
        return slice(self._offsets[gen], self._offsets[gen + 1])

    def generation_indices(self, gen: int) -> np.ndarray:
        s = self.generation_slice(gen)
        return np.arange(s.start, s.stop, dtype=np.int64)

    @property
    def alive(self) -> np.ndarray:
        """Indices of the current (last appended) generation."""
        return np.arange(self._offsets[-2], self._offsets[-1], dtype=np.int64)

    @property
    def alive_positions(self) -> np.ndarray:
        return self._pos_chunks[-1]

    # ----------------------------------------------------------- flat views

    def _ensure_flat(self):
        if self._flat is None:
            self._flat = (
                np.concatenate(self._parent_chunks),
                np.concatenate(self._disp_chunks, axis=0),
                np.concatenate(self._pos_chunks, axis=0),
            )

    @property
    def parents(self) -> np.ndarray:
        self._ensure_flat()
        return self._flat[0]

    @property
    def displacements(self) -> np.ndarray:
        self._ensure_flat()
        return self._flat[1]

    @property
    def positions(self) -> np.ndarray:
        self._ensure_flat()
        return self._flat[2]

    @property
    def birth_gens(self) -> np.ndarray:
        counts = np.diff(self._offsets)
        return np.repeat(np.arange(len(counts), dtype=np.int32), counts)

    def birth_gen_of(self, node: int) -> int:
        if node < 0 or node >= self.n_nodes:
            raise InvalidNode(f"node {node} out of range")
        return int(np.searchsorted(self.generation_offsets, node, side="right") - 1)

    def pivot_coords(self, pivot: np.ndarray, gen: int | None = None) -> np.ndarray:
        if gen is None:
            return self.alive_positions @ pivot
        s = self.generation_slice(gen)
        return self.positions[s] @ pivot


@dataclass
class RunOutcome:
    status: str
    tau: int | None
    arena: GenealogyArena
    prune_log: np.ndarray  # discarded count per generation step
    restarts: int = 0
    hit_nodes: tuple = ()


# ----------------------------------------------------------------- stepping


def _spawn(arena: GenealogyArena, inc: IncrementLaw, off: OffspringLaw, rng):
    """Draw offspring and displacements for the alive generation."""
    alive = arena.alive
    counts = off.sample(rng, len(alive))
    total = int(counts.sum())
    if total == 0:
        return None
    parents = np.repeat(alive, counts)
    disp = inc.sample(rng, total)
    local = np.repeat(np.arange(len(alive)), counts)
    pos = arena.alive_positions[local] + disp
    return parents, disp, pos


def _select(pivot_coord: np.ndarray, policy: PrunePolicy, gen: int) -> np.ndarray:
    """Indices (ascending) of the newborns retained under the policy."""
    m = len(pivot_coord)
    keep = np.arange(m)
    if policy.mode in (MODE_WINDOW, MODE_BOTH):
        level = pivot_coord.max() - policy.window_at(gen)
        keep = keep[pivot_coord >= level]
    if policy.mode in (MODE_CAPACITY, MODE_BOTH) and len(keep) > policy.capacity:
        sub = np.argpartition(-pivot_coord[keep], policy.capacity - 1)[: policy.capacity]
        keep = np.sort(keep[sub])
    return keep


def step(
    arena: GenealogyArena,
    inc: IncrementLaw,
    off: OffspringLaw,
    policy: PrunePolicy,
    pivot: np.ndarray,
    rng: np.random.Generator,
) -> int:
    """Advance one generation in place; returns the number pruned away."""
    if len(arena.alive) == 0:
        raise EmptyGeneration("cannot step an extinct arena")
    spawned = _spawn(arena, inc, off, rng)
    gen = arena.n_generations + 1
    if spawned is None:
        arena.append_generation(
            np.empty(0, dtype=np.int64),
            np.empty((0, arena.dimension)),
            np.empty((0, arena.dimension)),
        )
        return 0
    parents, disp, pos = spawned
    if policy.mode == MODE_OFF:
        if arena.n_nodes + len(parents) > policy.hard_limit:
            raise CapacityExceeded(
                f"unpruned run would exceed {policy.hard_limit} stored particles"
            )
        arena.append_generation(parents, disp, pos)
        return 0
    keep = _select(pos @ pivot, policy, gen)
    arena.append_generation(parents[keep], disp[keep], pos[keep])
    return len(parents) - len(keep)


# --------------------------------------------------------------- full runs


def run_growth(
    inc: IncrementLaw,
    off: OffspringLaw,
    policy: PrunePolicy,
    horizon: int,
    rng: np.random.Generator,
    pivot: np.ndarray | None = None,
) -> RunOutcome:
    """Run without a target: useful for maximum and genealogy statistics."""
    if pivot is None:
        pivot = default_pivot(inc.dimension)
    arena = GenealogyArena(inc.dimension)
    prune_log = np.zeros(horizon, dtype=np.int64)
    for gen in range(1, horizon + 1):
        prune_log[gen - 1] = step(arena, inc, off, policy, pivot, rng)
        if len(arena.alive) == 0:
            return RunOutcome(EXTINCT, None, arena, prune_log[:gen])
    return RunOutcome(SURVIVED, None, arena, prune_log)


def run_first_passage(
    inc: IncrementLaw,
    off: OffspringLaw,
    policy: PrunePolicy,
    target_center: np.ndarray,
    target_radius: float,
    horizon: int,
    rng: np.random.Generator,
    pivot: np.ndarray | None = None,
) -> RunOutcome:
    """Step until a particle enters the closed target ball.

    Hits are tested on every newborn generation before pruning; a hitting
    particle is always retained so the arena witnesses the hit.
    """
    if target_radius <= 0:
        raise ValueError("target_radius must be positive")
    if pivot is None:
        pivot = default_pivot(inc.dimension)
    center = np.asarray(target_center, dtype=float)
    arena = GenealogyArena(inc.dimension)
    if float(np.linalg.norm(center)) <= target_radius:
        return RunOutcome(TARGET_HIT, 0, arena, np.zeros(0, dtype=np.int64), hit_nodes=(0,))
    prune_log = np.zeros(horizon, dtype=np.int64)
    r2 = target_radius * target_radius
    for gen in range(1, horizon + 1):
        spawned = _spawn(arena, inc, off, rng)
        if spawned is None:
            arena.append_generation(
                np.empty(0, dtype=np.int64),
                np.empty((0, arena.dimension)),
                np.empty((0, arena.dimension)),
            )
            return RunOutcome(EXTINCT, None, arena, prune_log[:gen])
        parents, disp, pos = spawned
        delta = pos - center
        hits = np.flatnonzero(np.einsum("ij,ij->i", delta, delta) <= r2)
        if policy.mode == MODE_OFF:
            if arena.n_nodes + len(parents) > policy.hard_limit:
                raise CapacityExceeded(
                    f"unpruned run would exceed {policy.hard_limit} stored particles"
                )
            keep = np.arange(len(parents))
        else:
            keep = _select(pos @ pivot, policy, gen)
            if len(hits):
                keep = np.union1d(keep, hits)
        prune_log[gen - 1] = len(parents) - len(keep)
        start = arena.n_nodes
        arena.append_generation(parents[keep], disp[keep], pos[keep])
        if len(hits):
            hit_global = start + np.searchsorted(keep, hits)
            return RunOutcome(
                TARGET_HIT, gen, arena, prune_log[:gen], hit_nodes=tuple(int(h) for h in hit_global)
            )
    return RunOutcome(HORIZON_REACHED, None, arena, prune_log)


def run_conditioned_on_survival(
    inc: IncrementLaw,
    off: OffspringLaw,
    policy: PrunePolicy,
    target_center: np.ndarray,
    target_radius: float,
    horizon: int,
    seed_seq: np.random.SeedSequence,
    max_restarts: int = 1000,
    pivot: np.ndarray | None = None,
) -> RunOutcome:
    """Rejection conditioning: re-run on extinction with a fresh substream."""
    for attempt in range(max_restarts + 1):
        rng = np.random.default_rng(seed_seq.spawn(1)[0])
        out = run_first_passage(
            inc, off, policy, target_center, target_radius, horizon, rng, pivot=pivot
        )
        if out.status != EXTINCT:
            out.restarts = attempt
            return out
    raise RestartBudgetExhausted(f"no surviving run within {max_restarts} restarts")


# -------------------------------------------------------------- inspection


def max_position(arena: GenealogyArena, pivot: np.ndarray, gen: int | None = None):
    """(value, node index) of the pivot-coordinate argmax over a generation.

    Ties break to the lowest node index.
    """
    if gen is None:
        gen = arena.n_generations
    idx = arena.generation_indices(gen)
    if len(idx) == 0:
        raise EmptyGeneration(f"generation {gen} is empty")
    pc = arena.pivot_coords(pivot, gen)
    k = int(np.argmax(pc))
    return float(pc[k]), int(idx[k])


def frontier_set(
    arena: GenealogyArena, pivot: np.ndarray, level: float, gen: int | None = None
) -> np.ndarray:
    """Indices (ascending) of generation-``gen`` particles at or above level."""
    if gen is None:
        gen = arena.n_generations
    idx = arena.generation_indices(gen)
    pc = arena.pivot_coords(pivot, gen)
    return idx[pc >= level]


def verify_arena(arena: GenealogyArena, atol: float = 1e-12) -> None:
    """Debug assertion of the structural invariants; raises on violation."""
    parents = arena.parents
    births = arena.birth_gens
    pos = arena.positions
    disp = arena.displacements
    if arena.n_nodes == 0 or parents[0] != ROOT:
        raise AssertionError("missing root")
    for g in range(1, arena.n_generations + 1):
        s = arena.generation_slice(g)
        p = parents[s]
        if len(p) == 0:
            continue
        if not (p < s.start).all() or not (births[p] == g - 1).all():
            raise AssertionError("parent links must point one generation back")
        err = np.abs(pos[s] - (pos[p] + disp[s])).max()
        if err > atol:
            raise AssertionError(f"position mismatch {err}")


def arena_to_csv(arena: GenealogyArena, path) -> None:
    """Columnar dump: node_id, parent_id, birth_gen, pos_0..pos_{d-1}."""
    d = arena.dimension
    header = "node_id,parent_id,birth_gen," + ",".join(f"pos_{j}" for j in range(d))
    cols = [
        np.arange(arena.n_nodes),
        arena.parents,
        arena.birth_gens,
    ] + [arena.positions[:, j] for j in range(d)]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(header + "\r\n")
        for row in zip(*cols):
            fh.write(",".join(repr(v.item()) if hasattr(v, "item") else repr(v) for v in row) + "\r\n")
