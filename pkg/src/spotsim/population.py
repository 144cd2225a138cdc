"""Node universe generation: uniform honest KIDs plus a clustered adversary.

Honest nodes get independent uniform KIDs (hash outputs in the real
protocol).  The adversary controls m nodes and places them deliberately;
the strongest placement packs floor(l) sybils at consecutive KID values
inside one dyadic block, so any spot whose radius covers the block captures
the whole cluster at once.  Clusters are spread evenly over the KID space,
either on a deterministic lattice with one random global offset
(``ClusteredEven``) or one uniform draw per equal slice of the space
(``ClusteredStratified``).  ``UniformRandom`` scatters the sybils with no
structure and serves as an ablation baseline.

All generation is deterministic given a seed.  The universe keeps its
nodes sorted by KID so that spot selection can binary-search the dyadic
ball blocks.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

from .kid_space import check_bits, check_kid

_RETRY_BUDGET = 200


class Allegiance(enum.Enum):
    HONEST = "honest"
    ADVERSARIAL = "adversarial"


class PlacementStrategy(enum.Enum):
    CLUSTERED_EVEN = "even"
    CLUSTERED_STRATIFIED = "stratified"
    UNIFORM_RANDOM = "uniform"


@dataclass(frozen=True)
class Node:
    kid: int
    allegiance: Allegiance
    index: int  # stable id: generation order, honest first

    @property
    def adversarial(self) -> bool:
        return self.allegiance is Allegiance.ADVERSARIAL


def as_generator(seed) -> np.random.Generator:
    """Accept an int seed, a SeedSequence, or a ready Generator."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def _kid_dtype(b: int):
    return np.uint64 if b <= 64 else object


def _draw_uniform_kids(rng: np.random.Generator, count: int, b: int) -> np.ndarray:
    if b <= 64:
        return rng.integers(0, 1 << b, size=count, dtype=np.uint64)
    # wide path: two 64-bit halves per kid
    hi = rng.integers(0, 1 << (b - 64), size=count, dtype=np.uint64)
    lo = rng.integers(0, 1 << 64, size=count, dtype=np.uint64)
    return np.array([(int(h) << 64) | int(l) for h, l in zip(hi, lo)], dtype=object)


def _filter_out(values: np.ndarray, exclude_sorted: np.ndarray) -> np.ndarray:
    """Drop entries of values present in exclude_sorted (which is sorted)."""
    if len(exclude_sorted) == 0 or len(values) == 0:
        return values
    pos = np.searchsorted(exclude_sorted, values)
    pos = np.minimum(pos, len(exclude_sorted) - 1)
    return values[exclude_sorted[pos] != values]


def draw_distinct_kids(
    rng: np.random.Generator,
    count: int,
    b: int,
    exclude_sorted: np.ndarray | None = None,
) -> np.ndarray:
    """count distinct uniform KIDs in draw order, avoiding the sorted exclude set.

    Truncation happens in stream order, never on sorted values, so the kept
    sample stays uniform.  At b=64 the first slightly-oversized draw succeeds
    essentially always; toy spaces (b=8) fall back to an incremental redraw
    loop that tolerates dense occupancy.
    """
    check_bits(b)
    space = 1 << b
    excluded = 0 if exclude_sorted is None else len(exclude_sorted)
    if count > space - excluded:
        raise ValueError(f"cannot draw {count} distinct {b}-bit KIDs ({space - excluded} free)")
    if count == 0:
        return np.empty(0, dtype=_kid_dtype(b))
    if exclude_sorted is None:
        exclude_sorted = np.empty(0, dtype=_kid_dtype(b))

    fresh = _draw_uniform_kids(rng, count + max(8, count >> 6), b)
    fresh = _filter_out(fresh, exclude_sorted)
    if len(fresh) >= count and len(np.unique(fresh)) == len(fresh):
        return fresh[:count].copy()

    # collision path: incremental set building, deterministic in draw order
    seen = {int(x) for x in exclude_sorted}
    out: list[int] = []
    draws_left = 64 * (count + 16)
    while len(out) < count and draws_left > 0:
        chunk = _draw_uniform_kids(rng, min(max(32, 2 * (count - len(out))), draws_left), b)
        draws_left -= len(chunk)
        for v in chunk:
            v = int(v)
            if v not in seen:
                seen.add(v)
                out.append(v)
                if len(out) == count:
                    break
    if len(out) < count:
        raise ValueError("exceeded retry budget drawing distinct KIDs")
    return np.array(out, dtype=_kid_dtype(b))


def generate_honest(count: int, rng_seed, b: int = 64) -> list[Node]:
    """count honest nodes with distinct uniform KIDs; deterministic per seed."""
    if count < 0:
        raise ValueError("count must be non-negative")
    rng = as_generator(rng_seed)
    kids = draw_distinct_kids(rng, count, b)
    return [Node(int(k), Allegiance.HONEST, i) for i, k in enumerate(kids)]


def cluster_block_size(cluster_size: int) -> int:
    """Smallest power of two >= cluster_size: the dyadic block a cluster packs into."""
    if cluster_size < 1:
        raise ValueError("cluster_size must be >= 1")
    return 1 << (cluster_size - 1).bit_length()


def _cluster_kids(anchors: np.ndarray, cluster_size: int, b: int) -> np.ndarray:
    """Expand anchors into clusters of consecutive KIDs inside one aligned block."""
    block = cluster_block_size(cluster_size)
    if b <= 64:
        bases = (anchors // np.uint64(block)) * np.uint64(block)
        offsets = np.arange(cluster_size, dtype=np.uint64)
        return (bases[:, None] + offsets[None, :]).ravel()
    out = []
    for anchor in anchors:
        base = (int(anchor) // block) * block
        out.extend(base + j for j in range(cluster_size))
    return np.array(out, dtype=object)


def _has_collision(kids: np.ndarray, exclude_sorted: np.ndarray) -> bool:
    if len(kids) != len(np.unique(kids)):
        return True
    return len(_filter_out(kids, exclude_sorted)) != len(kids)


def _draw_anchors(
    rng: np.random.Generator,
    z: int,
    spacing: int,
    strategy: PlacementStrategy,
    b: int,
) -> np.ndarray:
    """Cluster anchors: a shifted lattice (even) or one draw per slice (stratified)."""
    space = 1 << b
    if b <= 64:
        idx = np.arange(z, dtype=np.uint64)
        if strategy is PlacementStrategy.CLUSTERED_EVEN:
            offset = _draw_uniform_kids(rng, 1, b)[0]
            anchors = offset + idx * np.uint64(spacing)  # wraps mod 2^64
            if b < 64:
                anchors %= np.uint64(space)
            return anchors
        jitter = rng.integers(0, spacing, size=z, dtype=np.uint64)
        return idx * np.uint64(spacing) + jitter
    if strategy is PlacementStrategy.CLUSTERED_EVEN:
        offset = int(_draw_uniform_kids(rng, 1, b)[0])
        return np.array([(offset + i * spacing) % space for i in range(z)], dtype=object)
    # wide path: modulo jitter; bias is immaterial at 2^b scale slice widths
    wide = _draw_uniform_kids(rng, z, b)
    return np.array([i * spacing + int(w) % spacing for i, w in enumerate(wide)], dtype=object)


def _stratified_sequential(
    rng: np.random.Generator,
    z: int,
    spacing: int,
    cluster_size: int,
    b: int,
    exclude_sorted: np.ndarray,
) -> np.ndarray:
    """Slice-by-slice cluster placement for densely occupied toy spaces."""
    block = cluster_block_size(cluster_size)
    taken = {int(x) for x in exclude_sorted}
    out: list[int] = []
    for i in range(z):
        for _ in range(_RETRY_BUDGET):
            anchor = i * spacing + int(rng.integers(0, spacing))
            base = (anchor // block) * block
            kids = range(base, base + cluster_size)
            if all(k not in taken for k in kids):
                taken.update(kids)
                out.extend(kids)
                break
        else:
            raise ValueError("exceeded retry budget placing adversary clusters")
    return np.array(out, dtype=_kid_dtype(b))


def place_adversary(
    m: int,
    cluster_size: int,
    strategy: PlacementStrategy,
    rng_seed,
    b: int = 64,
    existing_kids: Sequence[int] | np.ndarray = (),
) -> list[Node]:
    """m adversarial nodes: z = m // cluster_size packed clusters plus uniform leftovers.

    The attacker chooses KIDs directly (no hash), so cluster members sit at
    consecutive values.  Placements colliding with existing KIDs are redrawn
    up to a retry budget.  Node indices start at 0; build_universe reindexes.
    """
    if m < 0:
        raise ValueError("m must be non-negative")
    if cluster_size < 1:
        raise ValueError("cluster_size must be >= 1")
    check_bits(b)
    rng = as_generator(rng_seed)
    exclude = np.sort(np.asarray(existing_kids, dtype=_kid_dtype(b)))
    kids = _place_adversary_kids(rng, m, cluster_size, strategy, b, exclude)
    return [Node(int(k), Allegiance.ADVERSARIAL, i) for i, k in enumerate(kids)]


def _place_adversary_kids(
    rng: np.random.Generator,
    m: int,
    cluster_size: int,
    strategy: PlacementStrategy,
    b: int,
    exclude_sorted: np.ndarray,
) -> np.ndarray:
    space = 1 << b
    if m == 0:
        return np.empty(0, dtype=_kid_dtype(b))
    if strategy is PlacementStrategy.UNIFORM_RANDOM:
        return draw_distinct_kids(rng, m, b, exclude_sorted)

    z = m // cluster_size
    leftovers = m % cluster_size
    clustered = np.empty(0, dtype=_kid_dtype(b))
    if z > 0:
        spacing = space // z
        for _ in range(8):  # fast path: draw all anchors at once
            anchors = _draw_anchors(rng, z, spacing, strategy, b)
            clustered = _cluster_kids(anchors, cluster_size, b)
            if not _has_collision(clustered, exclude_sorted):
                break
        else:
            if strategy is PlacementStrategy.CLUSTERED_EVEN:
                # the lattice moves as one rigid body; no local repair possible
                raise ValueError("exceeded retry budget placing adversary clusters")
            clustered = _stratified_sequential(
                rng, z, spacing, cluster_size, b, exclude_sorted
            )

    if leftovers:
        taken = np.sort(np.concatenate([exclude_sorted, clustered]))
        extra = draw_distinct_kids(rng, leftovers, b, taken)
        return np.concatenate([clustered, extra])
    return clustered


@dataclass
class Universe:
    """All potential committee members, sorted ascending by KID.

    kids / adversarial / indices are aligned arrays in sorted-KID order.
    ``indices`` holds each node's stable generation index (honest nodes
    come first: 0 .. n_honest-1, adversarial nodes follow).
    """

    kids: np.ndarray
    adversarial: np.ndarray
    indices: np.ndarray
    bit_width: int
    n_bad: int

    @property
    def n_total(self) -> int:
        return len(self.kids)

    @property
    def n_honest(self) -> int:
        return self.n_total - self.n_bad

    @classmethod
    def from_nodes(cls, nodes: Sequence[Node], b: int) -> "Universe":
        check_bits(b)
        dtype = _kid_dtype(b)
        kids = np.array([n.kid for n in nodes], dtype=dtype)
        bad = np.array([n.adversarial for n in nodes], dtype=bool)
        idx = np.array([n.index for n in nodes], dtype=np.int64)
        if len(np.unique(kids)) != len(kids):
            raise ValueError("duplicate KIDs in universe")
        for n in nodes:
            check_kid(n.kid, b)
        order = np.argsort(kids, kind="stable")
        return cls(kids[order], bad[order], idx[order], b, int(bad.sum()))

    def node_at(self, pos: int) -> Node:
        alg = Allegiance.ADVERSARIAL if self.adversarial[pos] else Allegiance.HONEST
        return Node(int(self.kids[pos]), alg, int(self.indices[pos]))

    def __iter__(self) -> Iterator[Node]:
        return (self.node_at(i) for i in range(self.n_total))

    def dump_lines(self) -> list[str]:
        """Serialize as ``kid_hex,allegiance,index`` lines (sorted by KID)."""
        width = (self.bit_width + 3) // 4
        return [
            f"{int(k):0{width}x},{'adversarial' if a else 'honest'},{int(i)}"
            for k, a, i in zip(self.kids, self.adversarial, self.indices)
        ]


def build_universe(params, m: int, strategy: PlacementStrategy, rng_seed) -> Universe:
    """N - m honest plus m adversarial nodes, merged and sorted by KID.

    params is a SelectionParams; its spot cap floor(l) sets the adversary's
    cluster size.  Honest KIDs are drawn first; adversary placement then
    avoids them, so every KID in the universe is distinct.  Deterministic
    per seed.
    """
    n = params.n_nodes
    b = params.b
    if m > n:
        raise ValueError(f"m={m} exceeds universe size N={n}")
    rng = as_generator(rng_seed)
    n_honest = n - m
    honest = draw_distinct_kids(rng, n_honest, b)
    bad = _place_adversary_kids(rng, m, params.spot_cap, strategy, b, np.sort(honest))

    kids = np.concatenate([honest, bad])
    adversarial = np.zeros(n, dtype=bool)
    adversarial[n_honest:] = True
    indices = np.arange(n, dtype=np.int64)
    order = np.argsort(kids, kind="stable")
    return Universe(kids[order], adversarial[order], indices[order], b, m)
