"""Closed-form companions to the simulation: shortfall and attack bounds.

Two families of results get cross-checked against the Monte Carlo engine:

* robustness: the pre-cap spot population Y is Binomial(N, radius/2^b);
  P[Y < l] controls how often a spot falls short of its cap.  The normal
  approximation Phi((l - beta) / sqrt(beta (1 - beta/N))) is reported next
  to the exact binomial CDF so the approximation error is visible.

* security: with m sybils packed into z = floor(m / floor(l)) clusters,
  a spot fully captures some cluster with probability
  p = z * (radius - floor(l)) / 2^b.  Captures across the gamma spots of a
  committee are (approximately) independent Bernoulli trials, so the number
  of captured spots X is Binomial(gamma, p) and a committee needs
  z_bar = ceil(k_bar / floor(l)) captures to go bad.  The multiplicative
  Chernoff bound P[X >= (1+d) mu] <= (e^d / (1+d)^(1+d))^mu with
  (1+d) mu = z_bar bounds the per-committee probability; multiplying by the
  number of committees bounds a whole round.

Exact expressions (with the floors) are the primary values; the smooth
asymptotic forms that drive the limit theorems are reported alongside.
The floored quantities make the exact bound non-monotone in gamma (the cap
and z_bar move in steps); the asymptotic form decreases monotonically.

Everything here is pure float/int arithmetic on the parameter objects; the
binomial oracles are deliberately independent of the simulation path.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from fractions import Fraction

from .attack_sim import ThreatParams
from .selection import SelectionParams


def normal_cdf(x: float) -> float:
    """Standard normal CDF via erfc; absolute error well under 1e-7."""
    return 0.5 * math.erfc(-x / math.sqrt(2.0))


def binomial_pmf_log(n: int, p: float, j: int) -> float:
    if p == 0.0:
        return 0.0 if j == 0 else -math.inf
    if p == 1.0:
        return 0.0 if j == n else -math.inf
    return (
        math.lgamma(n + 1)
        - math.lgamma(j + 1)
        - math.lgamma(n - j + 1)
        + j * math.log(p)
        + (n - j) * math.log1p(-p)
    )


def binomial_cdf(n: int, p: float, j: int) -> float:
    """P[Binomial(n, p) <= j] by stable log-space summation."""
    if j < 0:
        return 0.0
    if j >= n:
        return 1.0
    logs = [binomial_pmf_log(n, p, i) for i in range(j + 1)]
    top = max(logs)
    if top == -math.inf:
        return 0.0
    return math.exp(top) * sum(math.exp(l - top) for l in logs)


def binomial_tail_geq(n: int, p: float, j: int) -> float:
    """P[Binomial(n, p) >= j] by direct summation (exact oracle, small n)."""
    if j <= 0:
        return 1.0
    if j > n:
        return 0.0
    total = 0.0
    for i in range(j, n + 1):
        total += math.comb(n, i) * p**i * (1 - p) ** (n - i)
    return min(1.0, total)


def _ball_probability(params: SelectionParams) -> float:
    """Per-node probability of landing in one spot's ball: radius / 2^b exactly."""
    return float(Fraction(params.spot_radius, 1 << params.b))


def robustness_shortfall(params: SelectionParams) -> float:
    """Normal approximation of P[Y < l] for the pre-cap spot population Y."""
    beta = params.beta
    n = params.n_nodes
    if beta >= n:
        raise ValueError("beta must be < N for the shortfall approximation")
    sigma = math.sqrt(beta * (1 - beta / n))
    return normal_cdf((params.cap_real - beta) / sigma)


def exact_spot_shortfall(params: SelectionParams) -> float:
    """Exact P[Y <= floor(l)], Y ~ Binomial(N, radius/2^b).

    This is the selection rule's own semantics: strict radius inequality and
    the floored cap, so it doubles as the oracle for the normal
    approximation and for the simulated unfilled-spot rate.
    """
    return binomial_cdf(params.n_nodes, _ball_probability(params), params.spot_cap)


@dataclass(frozen=True)
class CaptureProbability:
    """Probability that one spot fully contains some adversary cluster."""

    exact: float  # z * (radius - floor(l)) / 2^b
    z_clusters: int
    approx_zbeta: float  # z * beta / N
    approx_asymptotic: float  # m (1 + alpha) / (2 N gamma^(1-rho))
    relative_gap: float  # |approx_asymptotic - exact| / exact


def spot_capture_probability(params: SelectionParams, threat: ThreatParams) -> CaptureProbability:
    cap = params.spot_cap
    radius = params.spot_radius
    if radius <= cap:
        raise ValueError("spot radius <= cap: degenerate capture geometry")
    z = threat.m // cap
    exact = float(z * Fraction(radius - cap, 1 << params.b))
    approx_zbeta = z * params.beta / params.n_nodes
    approx_asym = (
        threat.m
        * (1 + params.alpha)
        / (2 * params.n_nodes * params.gamma ** (1 - params.rho))
    )
    gap = abs(approx_asym - exact) / exact if exact > 0 else 0.0
    return CaptureProbability(exact, z, approx_zbeta, approx_asym, gap)


@dataclass(frozen=True)
class BoundReport:
    """Chernoff upper bound on bad-committee probability, exact and asymptotic forms.

    per_committee_bound bounds P[captured spots >= z_bar] for one committee;
    total_bound multiplies by the number of committees in a round.  Both may
    exceed 1 (they are bounds); clamp only for display.  vacuous marks the
    z_bar <= mu regime where the bound degenerates to 1.  q and s echo the
    intermediate variables of the asymptotic manipulation (s = k_bar / k).
    """

    params: SelectionParams
    threat: ThreatParams
    n_committees: int
    p_exact: float
    p_approx: float
    mu: float
    delta: float
    z_bar: int
    per_committee_bound: float
    total_bound: float
    vacuous: bool
    q: float
    s: float
    asymptotic_per_committee: float
    asymptotic_total: float

    @property
    def value(self) -> float:
        return self.total_bound

    @property
    def display_value(self) -> float:
        return min(1.0, self.total_bound)


def _chernoff_log_bound(mu: float, threshold: float) -> float:
    """log of (e^d / (1+d)^(1+d))^mu with (1+d) mu = threshold; requires threshold > mu > 0."""
    return (threshold - mu) - threshold * math.log(threshold / mu)


def chernoff_attack_bound(
    params: SelectionParams, threat: ThreatParams, n_committees_total: int
) -> BoundReport:
    """Bound the probability of any bad committee among n_committees_total.

    Reported as vacuous (bound 1) when z_bar <= mu; exact capture
    probability feeds the primary bound, the smooth un-floored form feeds
    the asymptotic companion.
    """
    if n_committees_total < 1:
        raise ValueError("n_committees_total must be >= 1")
    cap = params.spot_cap
    z_bar = math.ceil(threat.k_bar / cap)
    capture = spot_capture_probability(params, threat)
    mu = params.gamma * capture.exact

    if mu == 0.0:
        per_committee = 0.0
        delta = math.inf
        vacuous = False
    elif z_bar <= mu:
        per_committee = 1.0
        delta = z_bar / mu - 1
        vacuous = True
    else:
        delta = z_bar / mu - 1
        per_committee = math.exp(_chernoff_log_bound(mu, z_bar))
        vacuous = False

    q = 2 * threat.k_bar / (threat.m * params.k * (1 + params.alpha)) if threat.m else math.inf
    s = threat.m * (1 + params.alpha) * q / 2 if threat.m else math.nan

    # smooth companion: no floors anywhere
    mu_a = params.gamma * capture.approx_asymptotic
    z_bar_a = params.gamma**params.rho * threat.k_bar / params.k
    if mu_a <= 0:
        asym = 0.0
    elif z_bar_a <= mu_a:
        asym = 1.0
    else:
        asym = math.exp(_chernoff_log_bound(mu_a, z_bar_a))

    return BoundReport(
        params=params,
        threat=threat,
        n_committees=n_committees_total,
        p_exact=capture.exact,
        p_approx=capture.approx_asymptotic,
        mu=mu,
        delta=delta,
        z_bar=z_bar,
        per_committee_bound=per_committee,
        total_bound=n_committees_total * per_committee,
        vacuous=vacuous,
        q=q,
        s=s,
        asymptotic_per_committee=asym,
        asymptotic_total=n_committees_total * asym,
    )


def required_gamma(
    params: SelectionParams,
    threat: ThreatParams,
    n_committees_total: int,
    target: float,
    gamma_max: int = 64,
) -> tuple[int | None, list[BoundReport]]:
    """Smallest gamma whose (clamped) total bound meets the target.

    Scans gamma = 1 .. gamma_max with the other parameters fixed; gammas
    where the parameters degenerate (cap 0, empty spots, radius <= cap) are
    skipped.  Returns (None, reports) when the target is unattainable.
    """
    if not 0 < target <= 1:
        raise ValueError("target must be in (0, 1]")
    reports = []
    for gamma in range(1, gamma_max + 1):
        try:
            candidate = replace(params, gamma=gamma)
            report = chernoff_attack_bound(candidate, threat, n_committees_total)
        except ValueError:
            continue
        reports.append(report)
        if min(1.0, report.total_bound) <= target:
            return gamma, reports
    return None, reports
