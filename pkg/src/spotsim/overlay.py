"""In-process kademlia overlay: tables, iterative lookups, intra-spot gossip.

The overlay is built in its idealized steady state: node KIDs already exist,
and each node's bucket for prefix length t holds up to bucket_capacity
uniformly sampled peers among those sharing exactly t leading bits with the
owner (equivalently, XOR distance in [2^(b-1-t), 2^(b-t))).  No join or
refresh protocol is simulated; the measured claims (hop counts, delivery
coverage) concern the steady state.

Bucket sampling takes a deterministic prefix of one full random permutation
per (node, bucket).  That costs O(N) permuted elements per node but makes
tables at a larger bucket_capacity strict supersets of tables built at a
smaller one under the same seed, which turns the coverage-monotonicity
property into something a test can check directly.

Message delivery to a committee runs one iterative lookup per spot center,
hands the message to the closest true spot member found, then floods it
within the spot: every informed member forwards to the contacts in its own
routing table that pass the local membership check (distance to the center
below the spot radius).  Adversarial members can be configured to receive
without forwarding, which models the denial-of-service threat.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .population import Node, Universe, as_generator
from .selection import (
    Committee,
    CommitteeId,
    RoundSeed,
    SelectionParams,
    Spot,
    select_committee,
)

DEFAULT_BUCKET_CAPACITY = 20
DEFAULT_LOOKUP_PARALLELISM = 3


@dataclass
class Overlay:
    """Immutable-after-build routing state over a universe."""

    universe: Universe
    bucket_capacity: int
    hop_limit: int
    contacts_flat: np.ndarray  # node positions, grouped by (owner, bucket t asc)
    offsets: np.ndarray  # (N+1,) owner -> slice of contacts_flat
    bucket_sizes: np.ndarray  # (N, b) contacts per bucket

    def contacts_of(self, pos: int) -> np.ndarray:
        return self.contacts_flat[self.offsets[pos] : self.offsets[pos + 1]]

    def bucket(self, pos: int, t: int) -> np.ndarray:
        """Contacts of node pos sharing exactly t leading bits with it."""
        start = self.offsets[pos] + int(self.bucket_sizes[pos, :t].sum())
        return self.contacts_flat[start : start + int(self.bucket_sizes[pos, t])]

    def table_size(self, pos: int) -> int:
        return int(self.offsets[pos + 1] - self.offsets[pos])

    def position_of(self, kid: int) -> int:
        kids = self.universe.kids
        i = int(np.searchsorted(kids, kid))
        if i == len(kids) or int(kids[i]) != kid:
            raise ValueError(f"KID {kid:#x} not present in overlay")
        return i


def build_overlay(
    universe: Universe,
    bucket_capacity: int = DEFAULT_BUCKET_CAPACITY,
    rng_seed=0,
    hop_limit: int | None = None,
) -> Overlay:
    """Fill every node's buckets by sampling eligible peers; deterministic per seed.

    Peers sharing exactly t leading bits with an owner occupy the sibling
    dyadic block at depth t+1, a contiguous range of the sorted KID array,
    so eligibility resolves with two binary searches per bucket.
    """
    if bucket_capacity < 1:
        raise ValueError("bucket_capacity must be >= 1")
    rng = as_generator(rng_seed)
    n = universe.n_total
    b = universe.bit_width
    kids = universe.kids
    if hop_limit is None:
        hop_limit = 4 * b

    bucket_sizes = np.zeros((n, b), dtype=np.int32)
    per_node: list[list[np.ndarray]] = [[] for _ in range(n)]
    if n > 1:
        if b <= 64:
            shifts = np.array([b - 1 - t for t in range(b)], dtype=np.uint64)
            starts = ((kids[:, None] >> shifts) ^ np.uint64(1)) << shifts
            spans = (np.uint64(1) << shifts) - np.uint64(1)
        else:
            shifts = np.array([b - 1 - t for t in range(b)], dtype=object)
            starts = ((kids[:, None] >> shifts) ^ 1) << shifts
            spans = np.array([(1 << int(s)) - 1 for s in shifts], dtype=object)
        lo = np.searchsorted(kids, starts.ravel(), side="left").reshape(n, b)
        hi = np.searchsorted(kids, (starts + spans).ravel(), side="right").reshape(n, b)
        counts = (hi - lo).astype(np.int64)
        for pos in range(n):
            for t in range(b):
                c = int(counts[pos, t])
                if c == 0:
                    continue
                base = int(lo[pos, t])
                take = min(c, bucket_capacity)
                # full permutation first: rng consumption independent of
                # capacity, so bigger-capacity tables nest smaller ones
                picks = np.sort(rng.permutation(c)[:take]) + base
                per_node[pos].append(picks.astype(np.int64))
                bucket_sizes[pos, t] = take

    flat_parts, offsets = [], np.zeros(n + 1, dtype=np.int64)
    for pos in range(n):
        chunk = (
            np.concatenate(per_node[pos]) if per_node[pos] else np.empty(0, dtype=np.int64)
        )
        flat_parts.append(chunk)
        offsets[pos + 1] = offsets[pos] + len(chunk)
    contacts_flat = (
        np.concatenate(flat_parts) if flat_parts else np.empty(0, dtype=np.int64)
    )
    return Overlay(universe, bucket_capacity, hop_limit, contacts_flat, offsets, bucket_sizes)


@dataclass
class LookupStats:
    hops: int
    messages: int
    contacted: list[int]  # KIDs in query order
    failed: bool = False


def _cast_kid(kid: int, b: int):
    return np.uint64(kid) if b <= 64 else kid


def _closest_contacts(overlay: Overlay, pos: int, target_cast, k: int):
    """A node's answer to a find-node query: its k closest contacts to target."""
    cps = overlay.contacts_of(pos)
    if len(cps) == 0:
        return cps, []
    d = overlay.universe.kids[cps] ^ target_cast
    if len(cps) > k:
        idx = np.argsort(d)[:k] if d.dtype == object else np.argpartition(d, k)[:k]
        return cps[idx], d[idx]
    return cps, d


def _lookup(
    overlay: Overlay, origin_pos: int, target: int, parallelism: int
) -> tuple[list[int], LookupStats]:
    """Iterative find-node toward target; returns positions, closest first.

    Maintains the shortlist of the bucket_capacity closest discovered nodes;
    each step queries the `parallelism` closest not yet queried, each
    answering with its closest contacts.  Stops when every shortlist node
    has been queried (the closest-known set has stabilized) or when a
    queried node sits at distance 0, which cannot be improved on.
    """
    uni = overlay.universe
    k = overlay.bucket_capacity
    target_cast = _cast_kid(target, uni.bit_width)
    known: dict[int, int] = {origin_pos: int(int(uni.kids[origin_pos]) ^ target)}
    queried = {origin_pos}
    best_queried = known[origin_pos]
    contacted: list[int] = []
    hops = 0
    failed = False

    cps, dists = _closest_contacts(overlay, origin_pos, target_cast, k)
    for p, d in zip(cps, dists):
        known.setdefault(int(p), int(d))

    while best_queried != 0:
        shortlist = sorted(known.items(), key=lambda item: item[1])[:k]
        pending = [p for p, _ in shortlist if p not in queried]
        if not pending:
            break
        if hops >= overlay.hop_limit:
            failed = True
            break
        hops += 1
        for p in pending[:parallelism]:
            queried.add(p)
            best_queried = min(best_queried, known[p])
            contacted.append(int(uni.kids[p]))
            cps, dists = _closest_contacts(overlay, p, target_cast, k)
            for q, d in zip(cps, dists):
                known.setdefault(int(q), int(d))

    closest = [p for p, _ in sorted(known.items(), key=lambda item: item[1])[:k]]
    return closest, LookupStats(hops, len(contacted), contacted, failed)


def iterative_find_node(
    overlay: Overlay,
    origin: int,
    target: int,
    lookup_parallelism: int = DEFAULT_LOOKUP_PARALLELISM,
) -> tuple[list[Node], LookupStats]:
    """Public lookup: origin and target given as KIDs; origin must exist."""
    origin_pos = overlay.position_of(origin)
    positions, stats = _lookup(overlay, origin_pos, target, lookup_parallelism)
    return [overlay.universe.node_at(p) for p in positions], stats


@dataclass
class GossipResult:
    reached: set[int]  # member positions that received the message
    reached_honest: set[int]
    rounds: int
    messages: int


def _gossip(
    overlay: Overlay,
    entry_pos: int,
    center: int,
    radius: int,
    member_pos: set[int],
    drop_by_adversarial: bool,
) -> GossipResult:
    uni = overlay.universe
    center_cast = _cast_kid(center, uni.bit_width)
    radius_cast = _cast_kid(radius, uni.bit_width)
    informed = {entry_pos}
    frontier = [entry_pos]
    rounds = 0
    messages = 0
    while frontier:
        new: set[int] = set()
        for p in sorted(frontier):
            if drop_by_adversarial and uni.adversarial[p]:
                continue  # receives but never forwards
            cps = overlay.contacts_of(p)
            if len(cps) == 0:
                continue
            in_ball = cps[(uni.kids[cps] ^ center_cast) < radius_cast]
            messages += len(in_ball)
            for q in in_ball:
                q = int(q)
                if q in member_pos and q not in informed:
                    new.add(q)
        if not new:
            break
        informed |= new
        frontier = sorted(new)
        rounds += 1
    reached_honest = {p for p in informed if not uni.adversarial[p]}
    return GossipResult(informed, reached_honest, rounds, messages)


def gossip_within_spot(
    overlay: Overlay, entry: Node, spot: Spot, drop_by_adversarial: bool = False
) -> GossipResult:
    """Synchronous-round flooding among spot members, entry first.

    Forward targets are the sender's routing-table contacts that pass the
    local membership check (XOR distance to the center below the radius);
    only actual post-cap members join the informed set and forward further.
    """
    member_pos = {overlay.position_of(k) for k in spot.member_kids}
    entry_pos = overlay.position_of(entry.kid)
    if entry_pos not in member_pos:
        raise ValueError("gossip entry node is not a member of the spot")
    return _gossip(overlay, entry_pos, spot.center, spot.radius, member_pos, drop_by_adversarial)


@dataclass
class SpotDelivery:
    center: int
    entry_kid: int | None
    lookup_hops: int
    lookup_messages: int
    lookup_failed: bool
    gossip_rounds: int
    gossip_messages: int
    honest_reached: int
    honest_total: int

    @property
    def delivered(self) -> bool:
        return self.entry_kid is not None


@dataclass
class DeliveryReport:
    committee: Committee
    spots: list[SpotDelivery]
    messages: int
    max_hops: int

    @property
    def honest_total(self) -> int:
        return sum(s.honest_total for s in self.spots)

    @property
    def honest_reached(self) -> int:
        return sum(s.honest_reached for s in self.spots)

    @property
    def coverage(self) -> float:
        total = self.honest_total
        return self.honest_reached / total if total else 1.0

    @property
    def failures(self) -> int:
        return sum(1 for s in self.spots if not s.delivered and s.honest_total > 0)


def deliver_to_committee(
    overlay: Overlay,
    origin: int,
    cid: CommitteeId,
    seed: RoundSeed,
    params: SelectionParams,
    lookup_parallelism: int = DEFAULT_LOOKUP_PARALLELISM,
    drop_by_adversarial: bool = False,
) -> DeliveryReport:
    """One lookup per spot center, then gossip from the closest member found."""
    uni = overlay.universe
    origin_pos = overlay.position_of(origin)
    committee = select_committee(uni, seed, cid, params)
    deliveries = []
    messages = 0
    max_hops = 0
    for spot in committee.spots:
        member_pos = {overlay.position_of(k) for k in spot.member_kids}
        honest_total = sum(1 for p in member_pos if not uni.adversarial[p])
        found, stats = _lookup(overlay, origin_pos, spot.center, lookup_parallelism)
        messages += stats.messages
        max_hops = max(max_hops, stats.hops)
        entry_pos = next((p for p in found if p in member_pos), None)
        if entry_pos is None:
            deliveries.append(
                SpotDelivery(
                    spot.center, None, stats.hops, stats.messages, stats.failed,
                    0, 0, 0, honest_total,
                )
            )
            continue
        gossip = _gossip(
            overlay, entry_pos, spot.center, spot.radius, member_pos, drop_by_adversarial
        )
        messages += gossip.messages
        deliveries.append(
            SpotDelivery(
                spot.center,
                int(uni.kids[entry_pos]),
                stats.hops,
                stats.messages,
                stats.failed,
                gossip.rounds,
                gossip.messages,
                len(gossip.reached_honest),
                honest_total,
            )
        )
    return DeliveryReport(committee, deliveries, messages, max_hops)


@dataclass
class ExchangeReport:
    messages: int
    knowledge: dict[int, set[int]]  # member kid -> spot indices whose roster it holds
    gamma: int

    @property
    def full_roster_kids(self) -> list[int]:
        return sorted(k for k, known in self.knowledge.items() if len(known) == self.gamma)

    @property
    def full_roster_fraction(self) -> float:
        if not self.knowledge:
            return 1.0
        return len(self.full_roster_kids) / len(self.knowledge)


def exchange_member_lists(
    overlay: Overlay,
    committee: Committee,
    lookup_parallelism: int = DEFAULT_LOOKUP_PARALLELISM,
) -> ExchangeReport:
    """Pre-consensus preparation: every spot ships its roster to every other spot.

    Each member of spot j runs one lookup toward every other spot's center
    and the roster is gossiped inside the receiving spot, mirroring the
    one-shot delivery mechanics.  Members start out knowing their own
    spot's roster.
    """
    uni = overlay.universe
    gamma = len(committee.spots)
    member_pos_by_spot = [
        {overlay.position_of(k) for k in spot.member_kids} for spot in committee.spots
    ]
    knowledge: dict[int, set[int]] = {}
    for j, spot in enumerate(committee.spots):
        for p in member_pos_by_spot[j]:
            knowledge[int(uni.kids[p])] = {j}
    messages = 0
    for j, spot in enumerate(committee.spots):
        senders = sorted(member_pos_by_spot[j])
        for target_j, target_spot in enumerate(committee.spots):
            if target_j == j or not member_pos_by_spot[target_j]:
                continue
            for sender in senders:
                found, stats = _lookup(overlay, sender, target_spot.center, lookup_parallelism)
                messages += stats.messages
                entry_pos = next((p for p in found if p in member_pos_by_spot[target_j]), None)
                if entry_pos is None:
                    continue
                gossip = _gossip(
                    overlay, entry_pos, target_spot.center, target_spot.radius,
                    member_pos_by_spot[target_j], drop_by_adversarial=False,
                )
                messages += gossip.messages
                for p in gossip.reached:
                    knowledge[int(uni.kids[p])].add(j)
    return ExchangeReport(messages, knowledge, gamma)


@dataclass
class RouteProfile:
    lookup_hops: list[int]
    delivery_messages: list[int]
    honest_reached: int
    honest_total: int
    failures: int
    samples: int

    @property
    def mean_hops(self) -> float:
        return sum(self.lookup_hops) / len(self.lookup_hops)

    @property
    def p99_hops(self) -> int:
        ordered = sorted(self.lookup_hops)
        return ordered[max(0, -(-99 * len(ordered) // 100) - 1)]

    @property
    def max_hops(self) -> int:
        return max(self.lookup_hops)

    @property
    def mean_messages(self) -> float:
        return sum(self.delivery_messages) / len(self.delivery_messages)

    @property
    def coverage(self) -> float:
        return self.honest_reached / self.honest_total if self.honest_total else 1.0


def route_cost_profile(
    overlay: Overlay,
    params: SelectionParams,
    samples: int,
    rng_seed,
    lookup_parallelism: int = DEFAULT_LOOKUP_PARALLELISM,
    drop_by_adversarial: bool = False,
) -> RouteProfile:
    """Hop/message/coverage distributions over random (origin, committee) pairs."""
    if samples < 1:
        raise ValueError("samples must be >= 1")
    rng = as_generator(rng_seed)
    uni = overlay.universe
    hops: list[int] = []
    msgs: list[int] = []
    reached = total = failures = 0
    for s in range(samples):
        origin_pos = int(rng.integers(0, uni.n_total))
        seed = RoundSeed.from_rng(rng)
        cid = CommitteeId(int(rng.integers(0, 1 << 16)), s)
        rep = deliver_to_committee(
            overlay, int(uni.kids[origin_pos]), cid, seed, params,
            lookup_parallelism, drop_by_adversarial,
        )
        hops.extend(d.lookup_hops for d in rep.spots)
        msgs.append(rep.messages)
        reached += rep.honest_reached
        total += rep.honest_total
        failures += rep.failures
    return RouteProfile(hops, msgs, reached, total, failures, samples)
