"""Spot-based committee selection over a kademlia-style XOR identifier space.

Deterministic simulator and analysis toolkit: committee selection from
public round randomness, Sybil-adversary Monte Carlo, closed-form
robustness/security bounds, and an in-process overlay for committee-targeted
message delivery.
"""

from .attack_sim import (
    RoundOutcome,
    SizeStats,
    Table1Cell,
    ThreatParams,
    TrialReport,
    committee_size_stats,
    estimate_attack_probability,
    run_round,
    strategy_comparison,
    table1,
    table1_cell_config,
    wilson_interval,
)
from .bounds import (
    BoundReport,
    CaptureProbability,
    binomial_cdf,
    binomial_tail_geq,
    chernoff_attack_bound,
    exact_spot_shortfall,
    normal_cdf,
    required_gamma,
    robustness_shortfall,
    spot_capture_probability,
)
from .kid_space import (
    AlignedBlock,
    count_within,
    kid_from_digest,
    xor_ball_blocks,
    xor_distance,
)
from .overlay import (
    DeliveryReport,
    ExchangeReport,
    GossipResult,
    LookupStats,
    Overlay,
    RouteProfile,
    build_overlay,
    deliver_to_committee,
    exchange_member_lists,
    gossip_within_spot,
    iterative_find_node,
    route_cost_profile,
)
from .population import (
    Allegiance,
    Node,
    PlacementStrategy,
    Universe,
    build_universe,
    generate_honest,
    place_adversary,
)
from .selection import (
    Committee,
    CommitteeId,
    InconsistentClaim,
    RoundSeed,
    SelectionParams,
    Spot,
    assign_to_committee,
    brute_force_spot,
    derive_centers,
    select_committee,
    select_spot,
    spot_cap,
    spot_radius,
    verify_committee_membership,
    verify_spot_membership,
)

__version__ = "0.1.0"
