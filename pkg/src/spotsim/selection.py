"""Committee selection: capped spots around pseudo-random centers.

A committee <i, r> is the union of gamma spots.  Spot j is anchored at the
center ``hash(R_{r-e}, i, j)`` where R is the public randomness of the
lookahead round; its members are the nodes within XOR distance
``floor(2^b * beta / N)`` of the center, ranked by distance and truncated
to the ``floor(l)`` closest.  ``beta = k(1+alpha)/(2*gamma)`` aims the
expected spot population at the middle of the acceptable committee size
range ``[k, alpha*k]``; the cap ``l = k / gamma^rho`` stops an attacker
from flooding a whole committee through a single spot.

Wire-level center derivation (a compatibility contract):

    center_j = top_b_bits( SHA256( R || BE64(i) || BE64(j) ) ),  j = 1..gamma

with R the raw 32 seed bytes and BE64 an 8-byte big-endian unsigned
encoding.  Selection is a pure function of (universe, seed, id, params);
ranking ties cannot occur because XOR distances from a fixed center are
distinct (bijection property of the metric).

Spot membership resolves through the dyadic ball decomposition plus binary
search on the KID-sorted universe; behavior is identical to a linear scan,
which the tests enforce.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from math import floor
from typing import Sequence

import numpy as np

from .kid_space import check_bits, kid_from_digest, xor_ball_blocks
from .population import Node, Universe

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK64 = (1 << 64) - 1

ROUND_SEED_BYTES = 32


class InconsistentClaim(ValueError):
    """A claimed spot member set contradicts the selection rule itself."""


@dataclass(frozen=True)
class SelectionParams:
    """Knobs of the selection procedure (plus the universe geometry).

    k: desired minimum committee size.
    alpha: robustness multiplier; committee sizes target [k, alpha*k].
    gamma: spots per committee.
    rho: cap exponent in l = k / gamma^rho, 0 < rho < 1.
    n_nodes: universe size N.
    b: KID bit width.
    lookahead_e: rounds of advance notice (seed of round r-e selects round r).
    """

    k: int
    alpha: float
    gamma: int
    rho: float
    n_nodes: int
    b: int = 64
    lookahead_e: int = 1

    def __post_init__(self):
        check_bits(self.b)
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if not self.alpha > 1:
            raise ValueError("alpha must be > 1")
        if self.gamma < 1:
            raise ValueError("gamma must be >= 1")
        if not 0 < self.rho < 1:
            raise ValueError("rho must be in (0, 1)")
        if self.n_nodes < 1:
            raise ValueError("n_nodes must be >= 1")
        if self.lookahead_e < 0:
            raise ValueError("lookahead_e must be >= 0")
        if self.beta_fraction < 1:
            raise ValueError(
                f"beta = k(1+alpha)/(2 gamma) = {float(self.beta_fraction):.3f} < 1: "
                "spots would be expected-empty"
            )
        if self.beta_fraction >= self.n_nodes:
            raise ValueError("beta >= N: spot radius would cover the whole KID space")
        if self.spot_cap < 1:
            raise ValueError("spot cap floor(k / gamma^rho) is 0: unusable parameters")
        if self.spot_radius < 1:
            raise ValueError("spot radius floor(2^b beta / N) is 0: degenerate spot")

    @property
    def beta_fraction(self) -> Fraction:
        # Fraction(alpha) is exact for the binary float the caller passed.
        return Fraction(self.k) * (1 + Fraction(self.alpha)) / (2 * self.gamma)

    @property
    def beta(self) -> float:
        return float(self.beta_fraction)

    @property
    def spot_radius(self) -> int:
        """floor(2^b * beta / N), in exact integer arithmetic."""
        frac = self.beta_fraction
        return ((1 << self.b) * frac.numerator) // (frac.denominator * self.n_nodes)

    @property
    def cap_real(self) -> float:
        """The uncapped limit l = k / gamma^rho."""
        return self.k / self.gamma**self.rho

    @property
    def spot_cap(self) -> int:
        """floor(l): per-spot member limit."""
        return floor(self.cap_real)


@dataclass(frozen=True)
class CommitteeId:
    """Identifier <i, r>: shard index i within the round, round number r."""

    index: int
    round_no: int

    def __post_init__(self):
        if self.index < 0:
            raise ValueError("committee index must be >= 0")
        if self.round_no < 0:
            raise ValueError("round number must be >= 0")


@dataclass(frozen=True)
class RoundSeed:
    """32 bytes of unbiased public randomness for one round."""

    value: bytes

    def __post_init__(self):
        if len(self.value) != ROUND_SEED_BYTES:
            raise ValueError(f"round seed must be {ROUND_SEED_BYTES} bytes")

    @classmethod
    def from_int(cls, n: int) -> "RoundSeed":
        return cls(n.to_bytes(ROUND_SEED_BYTES, "big"))

    @classmethod
    def from_rng(cls, rng: np.random.Generator) -> "RoundSeed":
        return cls(rng.bytes(ROUND_SEED_BYTES))


@dataclass(frozen=True)
class Spot:
    center: int
    radius: int
    members: tuple[Node, ...]  # ascending XOR distance to center
    truncated: bool  # candidates exceeded the cap

    @property
    def member_kids(self) -> tuple[int, ...]:
        return tuple(n.kid for n in self.members)


@dataclass(frozen=True)
class Committee:
    id: CommitteeId
    spots: tuple[Spot, ...]
    members: tuple[Node, ...]  # union over spots, de-duplicated, sorted by kid

    @property
    def size(self) -> int:
        return len(self.members)

    @property
    def bad_count(self) -> int:
        return sum(1 for n in self.members if n.adversarial)


def derive_centers(seed: RoundSeed, cid: CommitteeId, params: SelectionParams) -> list[int]:
    """gamma pseudo-random centers for committee <i, r>; see the wire contract."""
    i_enc = cid.index.to_bytes(8, "big")
    out = []
    for j in range(1, params.gamma + 1):
        digest = hashlib.sha256(seed.value + i_enc + j.to_bytes(8, "big")).digest()
        out.append(kid_from_digest(digest, params.b))
    return out


def spot_radius(params: SelectionParams) -> int:
    return params.spot_radius


def spot_cap(params: SelectionParams) -> int:
    return params.spot_cap


@lru_cache(maxsize=64)
def _radius_pattern(radius: int, b: int):
    """Center-independent ball decomposition of a fixed radius.

    Returns (prefixes, shifts, spans) arrays: block start for center v is
    ((v ^ prefix) >> shift) << shift and the block covers span = 2^shift
    KIDs.  spans is capped at 2^63 - safe arithmetic because radius < 2^b
    and b <= 64 on the fast path; the object-dtype path holds Python ints.
    """
    check_bits(b)
    if not 1 <= radius < (1 << b):
        raise ValueError("pattern radius must be in [1, 2^b)")
    prefixes, shifts = [], []
    for i in reversed(range(b)):
        if radius >> i & 1:
            prefixes.append((radius >> (i + 1)) << (i + 1))
            shifts.append(i)
    if b <= 64:
        return (
            np.array(prefixes, dtype=np.uint64),
            np.array(shifts, dtype=np.uint64),
            np.array([(1 << s) - 1 for s in shifts], dtype=np.uint64),
        )
    return (
        np.array(prefixes, dtype=object),
        np.array(shifts, dtype=object),
        np.array([(1 << s) - 1 for s in shifts], dtype=object),
    )


def _spot_members_batch(universe: Universe, centers: np.ndarray, params: SelectionParams):
    """Post-cap members for a batch of spots, via ball blocks + binary search.

    Returns (node_pos, spot_of, candidate_counts): node positions into the
    sorted universe arrays and their spot index, ordered by (spot, distance)
    ascending and truncated to the cap per spot; candidate_counts is the
    pre-cap ball population of every spot.
    """
    kids = universe.kids
    n_spots = len(centers)
    cap = params.spot_cap
    empty = np.empty(0, dtype=np.int64)
    if universe.n_total == 0 or n_spots == 0:
        return empty, empty, np.zeros(n_spots, dtype=np.int64)

    prefixes, shifts, spans = _radius_pattern(params.spot_radius, params.b)
    starts = ((centers[:, None] ^ prefixes[None, :]) >> shifts) << shifts
    lasts = starts + spans  # inclusive block ends; no wraparound at 2^b
    lo = np.searchsorted(kids, starts.ravel(), side="left")
    hi = np.searchsorted(kids, lasts.ravel(), side="right")
    lens = (hi - lo).astype(np.int64)
    counts = lens.reshape(n_spots, -1).sum(axis=1)
    total = int(lens.sum())
    if total == 0:
        return empty, empty, counts

    # expand [lo, hi) ranges into one flat candidate index stream
    csum = np.cumsum(lens) - lens
    pos = np.arange(total, dtype=np.int64)
    cand = np.repeat(lo.astype(np.int64), lens) + (pos - np.repeat(csum, lens))
    spot_of = np.repeat(
        np.repeat(np.arange(n_spots, dtype=np.int64), len(prefixes)), lens
    )

    dist = kids[cand] ^ centers[spot_of]
    radius = params.spot_radius
    if params.b <= 64 and n_spots * radius <= (1 << 64):
        # distances stay below the radius, so (spot, distance) packs into one
        # uint64 sort key; distinct keys make sort stability irrelevant
        key = spot_of.astype(np.uint64) * np.uint64(radius) + dist
        order = np.argsort(key)
    else:
        order = np.lexsort((dist, spot_of))
    cand = cand[order]
    spot_of = spot_of[order]

    group_start = np.cumsum(counts) - counts
    rank = pos - np.repeat(group_start, counts)
    keep = rank < cap
    return cand[keep], spot_of[keep], counts


def _centers_array(centers: Sequence[int], b: int) -> np.ndarray:
    return np.array(centers, dtype=np.uint64 if b <= 64 else object)


def select_spot(universe: Universe, center: int, params: SelectionParams) -> Spot:
    """The capped spot around one center: closest-first, at most floor(l) nodes."""
    pos, _, counts = _spot_members_batch(
        universe, _centers_array([center], params.b), params
    )
    members = tuple(universe.node_at(int(p)) for p in pos)
    return Spot(center, params.spot_radius, members, bool(counts[0] > params.spot_cap))


def select_committee(
    universe: Universe, seed: RoundSeed, cid: CommitteeId, params: SelectionParams
) -> Committee:
    """Union of the gamma spots derived from (seed, id); pure and deterministic."""
    centers = derive_centers(seed, cid, params)
    pos, spot_of, counts = _spot_members_batch(
        universe, _centers_array(centers, params.b), params
    )
    spots = []
    for j in range(params.gamma):
        members = tuple(universe.node_at(int(p)) for p in pos[spot_of == j])
        spots.append(
            Spot(centers[j], params.spot_radius, members, bool(counts[j] > params.spot_cap))
        )
    union = tuple(universe.node_at(int(p)) for p in np.unique(pos))
    return Committee(cid, tuple(spots), union)


def verify_spot_membership(kid: int, center: int, params: SelectionParams) -> bool:
    """Local necessary condition: within the spot radius of the center.

    This proves candidacy only; whether the node survived the cap depends on
    who else sits near the center (see verify_committee_membership).
    """
    return (kid ^ center) < params.spot_radius


def verify_committee_membership(
    kid: int,
    cid: CommitteeId,
    seed: RoundSeed,
    params: SelectionParams,
    spot_member_kids: Sequence[set[int]],
) -> bool:
    """Check kid against claimed per-spot member sets.

    True iff kid appears in a claimed set that is internally consistent:
    every claimed member inside the spot radius, at most floor(l) members,
    and kid among the floor(l) closest of the claim.  Inconsistent claims
    raise InconsistentClaim rather than returning False; omissions of
    closer real nodes are undetectable without global knowledge.
    """
    if len(spot_member_kids) != params.gamma:
        raise InconsistentClaim(
            f"expected {params.gamma} spot member sets, got {len(spot_member_kids)}"
        )
    centers = derive_centers(seed, cid, params)
    cap = params.spot_cap
    for center, claimed in zip(centers, spot_member_kids):
        for member in claimed:
            if not verify_spot_membership(member, center, params):
                raise InconsistentClaim(
                    f"claimed member {member:#x} outside radius of center {center:#x}"
                )
        if len(claimed) > cap:
            raise InconsistentClaim(
                f"claimed spot has {len(claimed)} members, cap is {cap}"
            )
        if kid in claimed:
            closest = sorted(claimed, key=lambda u: u ^ center)[:cap]
            if kid in closest:
                return True
    return False


def assign_to_committee(payload: bytes, n_committees: int) -> int:
    """Map a payload to a committee index with FNV-1a 64 (stable, non-cryptographic)."""
    if n_committees < 1:
        raise ValueError("n_committees must be >= 1")
    h = _FNV_OFFSET
    for byte in payload:
        h = ((h ^ byte) * _FNV_PRIME) & _MASK64
    return h % n_committees


def brute_force_spot(universe: Universe, center: int, params: SelectionParams) -> Spot:
    """Linear-scan oracle for select_spot; O(N), test and cross-check use only."""
    in_ball = [
        (node.kid ^ center, node)
        for node in universe
        if (node.kid ^ center) < params.spot_radius
    ]
    in_ball.sort(key=lambda t: t[0])
    members = tuple(node for _, node in in_ball[: params.spot_cap])
    return Spot(center, params.spot_radius, members, len(in_ball) > params.spot_cap)
