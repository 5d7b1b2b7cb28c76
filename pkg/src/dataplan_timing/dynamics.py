"""Scenario configuration and closed-form subscriber trajectories.

Times are in months.  ``NEVER`` (``math.inf``) marks a provider that never
upgrades; every function branches on it explicitly rather than relying on
``exp(-inf)`` arithmetic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

from .costs import CostSummary, TariffPlan, UsageModel

NEVER = math.inf
SHARE_SUM_TOL = 1e-12


class ConfigError(ValueError):
    """Scenario parameters violate a model invariant."""


def is_never(t: float) -> bool:
    return t == NEVER


def check_time(t: float) -> float:
    t = float(t)
    if math.isnan(t) or t < 0:
        raise ConfigError(f"upgrade time must be >= 0 or NEVER, got {t}")
    return t


@dataclass(frozen=True)
class ChurnRates:
    """Existing-user churn rate ``lam`` and new-user arrival rate ``lam0``."""

    lam: float
    lam0: float

    def __post_init__(self):
        if not (self.lam > self.lam0 > 0):
            raise ConfigError(f"need lambda > lambda0 > 0, got lambda={self.lam}, lambda0={self.lam0}")

    @property
    def gap(self) -> float:
        return self.lam - self.lam0


@dataclass(frozen=True)
class MarketConfig:
    """Full scenario.

    ``n`` is N (half the existing user population); provider k holds
    ``2 * shares[k] * n`` users.  Costs are computed from the plan and usage
    models unless ``costs`` is given directly.
    """

    n: float
    shares: tuple
    eta0: float
    alpha: float
    rates: ChurnRates
    discount: float
    plan: Optional[TariffPlan] = None
    light: Optional[UsageModel] = None
    heavy: Optional[UsageModel] = None
    costs: Optional[CostSummary] = field(default=None)

    def __post_init__(self):
        object.__setattr__(self, "shares", tuple(float(s) for s in self.shares))
        if self.n < 0:
            raise ConfigError(f"N must be >= 0, got {self.n}")
        if len(self.shares) < 2:
            raise ConfigError("need at least two providers")
        if any(not 0 <= s <= 1 for s in self.shares):
            raise ConfigError(f"shares must lie in [0, 1], got {self.shares}")
        if abs(sum(self.shares) - 1.0) > SHARE_SUM_TOL:
            raise ConfigError(f"shares must sum to 1, got {sum(self.shares)!r}")
        if self.eta0 < 0:
            raise ConfigError(f"eta0 must be >= 0, got {self.eta0}")
        if not 0 < self.alpha <= 1:
            raise ConfigError(f"alpha must lie in (0, 1], got {self.alpha}")
        if not self.discount > 0:
            raise ConfigError(f"discount rate S must be > 0, got {self.discount}")
        if self.costs is None:
            if self.plan is None or self.light is None or self.heavy is None:
                raise ConfigError("give either costs or plan + light + heavy usage models")
            if self.light.D > self.plan.B:
                raise ConfigError(f"light usage max D={self.light.D} exceeds quota B={self.plan.B}")
            object.__setattr__(self, "costs", CostSummary.compute(self.plan, self.light, self.heavy, self.alpha))

    # shorthands used throughout the profit formulas
    @property
    def S(self) -> float:
        return self.discount

    @property
    def lam(self) -> float:
        return self.rates.lam

    @property
    def lam0(self) -> float:
        return self.rates.lam0

    @property
    def n0(self) -> float:
        return self.eta0 * self.n

    @property
    def m(self) -> int:
        return len(self.shares)

    def n_of(self, i: int) -> float:
        return self.shares[i] * self.n

    def other(self, i: int) -> int:
        if self.m != 2:
            raise ConfigError("duopoly analysis requires exactly two providers")
        return 1 - i

    def with_shares(self, shares: Sequence[float]) -> "MarketConfig":
        return replace(self, shares=tuple(shares))

    def with_duopoly_share(self, eta_i: float, i: int = 0) -> "MarketConfig":
        shares = [1.0 - eta_i, 1.0 - eta_i]
        shares[i] = eta_i
        return replace(self, shares=tuple(shares))

    def with_costs(self, **changes) -> "MarketConfig":
        return replace(self, costs=replace(self.costs, **changes))

    def replace(self, **changes) -> "MarketConfig":
        return replace(self, **changes)


# -- share trajectories -------------------------------------------------------

def laggard_share(eta_j: float, rates: ChurnRates, t: float, t_lead: float) -> float:
    """Share still held by the provider that has not upgraded."""
    if is_never(t_lead):
        return eta_j
    if t < t_lead:
        raise ConfigError("laggard trajectory starts at the leader's upgrade time")
    if is_never(t):
        return 0.0
    return eta_j * math.exp(-rates.lam * (t - t_lead))


def new_pool_share(eta0: float, rates: ChurnRates, t: float, t_lead: float) -> float:
    """Share of new users not yet subscribed to any provider."""
    if is_never(t_lead):
        return eta0
    if t < t_lead:
        raise ConfigError("new-user pool only drains after the first upgrade")
    if is_never(t):
        return 0.0
    return eta0 * math.exp(-rates.lam0 * (t - t_lead))


def leader_share(cfg: MarketConfig, i: int, t: float, t_i: float, t_j: float) -> float:
    """Share of the first upgrader during the window in which it is alone."""
    j = cfg.other(i)
    if not t_i <= t <= t_j:
        raise ConfigError(f"leader trajectory needs t_i <= t <= t_j, got {t_i}, {t}, {t_j}")
    eta_i, eta_j = cfg.shares[i], cfg.shares[j]
    if is_never(t):
        return eta_i + eta_j + cfg.eta0
    dt = t - t_i
    return eta_i + (1 - math.exp(-cfg.lam * dt)) * eta_j + (1 - math.exp(-cfg.lam0 * dt)) * cfg.eta0


def _decay(rate: float, span: float) -> float:
    """``exp(-rate * span)`` with ``span`` possibly infinite."""
    if is_never(span):
        return 0.0
    return math.exp(-rate * span)


@dataclass(frozen=True)
class RolloverCounts:
    """Heavy-user headcounts at time ``t`` for providers ``i`` and ``j``."""

    existing_i: float      # own users locked with i (or still with i)
    existing_j: float
    switched_to_i: float   # moved from j to i
    switched_to_j: float
    new_i: float           # new users subscribed to i
    new_j: float
    pool_left: float       # heavy users in the new pool, unsubscribed

    @property
    def total_i(self) -> float:
        return self.existing_i + self.switched_to_i + self.new_i

    @property
    def total_j(self) -> float:
        return self.existing_j + self.switched_to_j + self.new_j


def rollover_phase_counts(cfg: MarketConfig, i: int, t: float, t_i: float, t_j: float) -> RolloverCounts:
    """Heavy-user headcounts under the three-phase rollover timeline."""
    j = cfg.other(i)
    lead, lag = (i, j) if t_i <= t_j else (j, i)
    a, b = min(t_i, t_j), max(t_i, t_j)
    base = {k: 2 * cfg.alpha * cfg.n_of(k) for k in (i, j)}
    pool = 2 * cfg.alpha * cfg.n0
    sw = {i: 0.0, j: 0.0}
    new = {i: 0.0, j: 0.0}
    own = dict(base)
    left = pool
    if not is_never(a) and t > a:
        mid = min(t, b)
        moved = base[lag] * (1 - _decay(cfg.lam, mid - a))
        sw[lead] = moved
        own[lag] = base[lag] - moved
        joined = pool * (1 - _decay(cfg.lam0, mid - a))
        new[lead] = joined
        left = pool - joined
        if not is_never(b) and t > b:
            remaining_at_b = pool * _decay(cfg.lam0, b - a)
            each = 0.5 * remaining_at_b * (1 - _decay(cfg.lam0, t - b))
            new[lead] += each
            new[lag] += each
            left = remaining_at_b - 2 * each
    return RolloverCounts(own[i], own[j], sw[i], sw[j], new[i], new[j], left)


@dataclass(frozen=True)
class SharedCounts:
    """Family headcounts at time ``t`` for the shared-plan timeline.

    ``categories`` maps the Phase II labels (i)-(viii) to the number of
    families subscribed to the leader's shared plan.  The ``*_i``/``*_j``
    totals split every (heavy, heavy) and (heavy, light) family by where it
    stands, so each family type sums to its population at every ``t``.
    """

    categories: dict
    phase3_mixed_hh_each: float
    phase3_mixed_hl_each: float
    phase3_new_hh_each: float
    phase3_new_hl_each: float
    shared_i: dict        # families on i's shared plan, by type
    shared_j: dict
    individual: dict      # existing families still paying individually, by type
    individual_i: dict    # i's billing weight in those families (mixed count 1/2)
    individual_j: dict
    pool_left: dict       # new families not yet subscribed, by type


def shared_phase_counts(cfg: MarketConfig, i: int, t: float, t_i: float, t_j: float) -> SharedCounts:
    """Family counts under the shared-plan timeline (leader is the earlier of i, j)."""
    j = cfg.other(i)
    lead, lag = (i, j) if t_i <= t_j else (j, i)
    a, b = min(t_i, t_j), max(t_i, t_j)
    al, N, N0 = cfg.alpha, cfg.n, cfg.n0
    e_l, e_g = cfg.shares[lead], cfg.shares[lag]
    w = {"hh": al**2, "hl": 2 * al * (1 - al)}

    started = not is_never(a) and t > a
    mid = min(t, b) if started else a
    g2 = (1 - _decay(cfg.lam, mid - a)) if started else 0.0
    g02 = (1 - _decay(cfg.lam0, mid - a)) if started else 0.0

    cats = {
        "pure_hh_from_leader": e_l**2 * w["hh"] * N if started else 0.0,
        "pure_hh_from_laggard": e_g**2 * w["hh"] * N * g2,
        "mixed_hh": 2 * e_l * e_g * w["hh"] * N * g2,
        "pure_hl_from_leader": e_l**2 * w["hl"] * N if started else 0.0,
        "pure_hl_from_laggard": e_g**2 * w["hl"] * N * g2,
        "mixed_hl": 2 * e_l * e_g * w["hl"] * N * g2,
        "new_hh": w["hh"] * N0 * g02,
        "new_hl": w["hl"] * N0 * g02,
    }

    in3 = started and not is_never(b) and t > b
    k_mix = _decay(cfg.lam, b - a) * (1 - _decay(cfg.lam, t - b)) if in3 else 0.0
    k_new = _decay(cfg.lam0, b - a) * (1 - _decay(cfg.lam0, t - b)) if in3 else 0.0
    mixed_each = {ty: e_l * e_g * w[ty] * N * k_mix for ty in w}
    new_each = {ty: 0.5 * w[ty] * N0 * k_new for ty in w}

    shared = {lead: {}, lag: {}}
    indiv_w = {lead: {}, lag: {}}
    individual, pool_left = {}, {}
    for ty in w:
        pure_lead = cats[f"pure_{ty}_from_leader"]
        pure_lag_moved = cats[f"pure_{ty}_from_laggard"]
        mixed_moved = cats[f"mixed_{ty}"]
        new_moved = cats[f"new_{ty}"]
        pure_lag_total = e_g**2 * w[ty] * N
        mixed_total = 2 * e_l * e_g * w[ty] * N
        pure_lag_upgraded = (pure_lag_total - pure_lag_moved) if in3 else 0.0
        shared[lead][ty] = pure_lead + pure_lag_moved + mixed_moved + new_moved + mixed_each[ty] + new_each[ty]
        shared[lag][ty] = pure_lag_upgraded + mixed_each[ty] + new_each[ty]
        pure_lead_total = e_l**2 * w[ty] * N
        mixed_open = mixed_total - mixed_moved - 2 * mixed_each[ty]
        indiv_w[lead][ty] = (pure_lead_total - pure_lead) + 0.5 * mixed_open
        indiv_w[lag][ty] = (pure_lag_total - pure_lag_moved - pure_lag_upgraded) + 0.5 * mixed_open
        individual[ty] = indiv_w[lead][ty] + indiv_w[lag][ty]
        pool_left[ty] = w[ty] * N0 - new_moved - 2 * new_each[ty]

    return SharedCounts(
        categories=cats,
        phase3_mixed_hh_each=mixed_each["hh"],
        phase3_mixed_hl_each=mixed_each["hl"],
        phase3_new_hh_each=new_each["hh"],
        phase3_new_hl_each=new_each["hl"],
        shared_i=shared[i],
        shared_j=shared[j],
        individual=individual,
        individual_i=indiv_w[i],
        individual_j=indiv_w[j],
        pool_left=pool_left,
    )
