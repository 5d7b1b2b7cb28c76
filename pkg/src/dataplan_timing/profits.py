"""Discounted long-run profits for rollover and shared data plans.

All closed forms are assembled from two exact integrals of exponentials, so
every (t_i, t_j) pair including NEVER is handled by case analysis on the
interval ends instead of by ``inf`` arithmetic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .dynamics import NEVER, ConfigError, MarketConfig, check_time, is_never, rollover_phase_counts, shared_phase_counts

ORACLE_HORIZON_FACTOR = 60.0
ORACLE_TAIL_TOL = 1e-9


@dataclass(frozen=True)
class ProfitBreakdown:
    """Discounted profit split over [0, first), [first, second), [second, inf)."""

    phase1: float
    phase2: float
    phase3: float

    @property
    def total(self) -> float:
        return self.phase1 + self.phase2 + self.phase3

    def __float__(self) -> float:
        return self.total


def _never(x) -> bool:
    """Scalar NEVER test; array arguments are finite by construction."""
    return np.ndim(x) == 0 and is_never(x)


def disc(S: float, x, y, rate: float = 0.0, anchor=0.0):
    """Exact value of  int_x^y exp(-rate (t - anchor)) exp(-S t) dt  for 0 <= anchor <= x <= y <= inf.

    Scalars take a fast path; arrays broadcast (with finite ``x``).
    """
    k = rate + S
    if np.ndim(x) == 0 and np.ndim(y) == 0 and np.ndim(anchor) == 0:
        if is_never(x) or y <= x:
            return 0.0
        head = math.exp(-rate * (x - anchor) - S * x)
        if is_never(y):
            return head / k
        return head * -math.expm1(-k * (y - x)) / k
    x, y, anchor = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float), np.asarray(anchor, float))
    head = np.exp(-rate * (x - anchor) - S * x)
    open_end = np.isinf(y)
    span = np.where(open_end, 0.0, y - x)
    frac = np.where(open_end, 1.0, -np.expm1(-k * span))
    return np.where(open_end | (span > 0), head * frac / k, 0.0)


def _decay(rate: float, span):
    if np.ndim(span) == 0:
        return 0.0 if is_never(span) else math.exp(-rate * span)
    return np.exp(-rate * np.asarray(span, float))


# -- rollover -----------------------------------------------------------------

def profit_rollover_never(cfg: MarketConfig, i: int) -> float:
    return 2 * cfg.alpha * cfg.n_of(i) * cfg.costs.ec_heavy / cfg.S


def _rollover_early(cfg: MarketConfig, i: int, a: float, b: float) -> ProfitBreakdown:
    """Provider i upgrades at a, the rival at b >= a."""
    j = cfg.other(i)
    S, lam, lam0 = cfg.S, cfg.lam, cfg.lam0
    h_i, h_j, h0 = (2 * cfg.alpha * x for x in (cfg.n_of(i), cfg.n_of(j), cfg.n0))
    ec_h, ec_r = cfg.costs.ec_heavy, cfg.costs.ec_heavy_rollover

    p1 = h_i * ec_h * disc(S, 0, a)
    if _never(a):
        return ProfitBreakdown(p1, 0.0, 0.0)
    flat = disc(S, a, b)
    p2 = ec_r * (
        (h_i + h_j + h0) * flat
        - h_j * disc(S, a, b, lam, a)
        - h0 * disc(S, a, b, lam0, a)
    )
    if _never(b):
        return ProfitBreakdown(p1, p2, 0.0)
    left = _decay(lam, b - a)
    pool = _decay(lam0, b - a)
    flat3 = disc(S, b, math.inf)
    p3 = ec_r * (
        (h_j * (1 - left) + h_i + h0 * (1 - pool)) * flat3
        + 0.5 * h0 * pool * (flat3 - disc(S, b, math.inf, lam0, b))
    )
    return ProfitBreakdown(p1, p2, p3)


def _rollover_late(cfg: MarketConfig, i: int, a: float, b: float) -> ProfitBreakdown:
    """Provider i upgrades at a, the rival earlier at b < a."""
    S, lam, lam0 = cfg.S, cfg.lam, cfg.lam0
    h_i, h0 = 2 * cfg.alpha * cfg.n_of(i), 2 * cfg.alpha * cfg.n0
    ec_h, ec_r = cfg.costs.ec_heavy, cfg.costs.ec_heavy_rollover

    p1 = h_i * ec_h * disc(S, 0, b)
    p2 = h_i * ec_h * disc(S, b, a, lam, b)
    if _never(a):
        return ProfitBreakdown(p1, p2, 0.0)
    flat3 = disc(S, a, math.inf)
    p3 = ec_r * (
        h_i * _decay(lam, a - b) * flat3
        + 0.5 * h0 * _decay(lam0, a - b) * (flat3 - disc(S, a, math.inf, lam0, a))
    )
    return ProfitBreakdown(p1, p2, p3)


def profit_rollover(cfg: MarketConfig, i: int, t_i: float, t_j: float) -> ProfitBreakdown:
    t_i, t_j = check_time(t_i), check_time(t_j)
    if t_i <= t_j:
        return _rollover_early(cfg, i, t_i, t_j)
    return _rollover_late(cfg, i, t_i, t_j)


def profit_rollover_branch(cfg: MarketConfig, i: int, t_i: float, t_j: float, branch: str) -> float:
    """Evaluate one branch formula regardless of ordering (used for continuity checks).

    The late formula needs a rival that has upgraded, so it is NaN against NEVER.
    """
    if branch == "early":
        return _rollover_early(cfg, i, t_i, t_j).total
    if branch == "late":
        return math.nan if is_never(t_j) else _rollover_late(cfg, i, t_i, t_j).total
    raise ValueError(f"unknown branch {branch!r}")


# -- shared -------------------------------------------------------------------

def profit_shared_never(cfg: MarketConfig, i: int) -> float:
    c = cfg.costs
    return (2 * cfg.alpha * cfg.n_of(i) * c.ec_heavy
            + 2 * cfg.n_of(i) * cfg.alpha * (1 - cfg.alpha) * c.ec_light) / cfg.S


def _agg(cfg: MarketConfig):
    c = cfg.costs
    if math.isnan(c.agg_d) or math.isnan(c.agg_e):
        raise ConfigError("shared-plan analysis needs family cost aggregates")
    return c.agg_d, c.agg_e


def _shared_early(cfg: MarketConfig, i: int, a: float, b: float) -> ProfitBreakdown:
    j = cfg.other(i)
    S, lam, lam0 = cfg.S, cfg.lam, cfg.lam0
    e_i, e_j, N, N0 = cfg.shares[i], cfg.shares[j], cfg.n, cfg.n0
    D, E = _agg(cfg)
    pure, mixed, movable = e_i**2, e_i * e_j, e_j**2 + 2 * e_i * e_j

    p1 = e_i * N * D * disc(S, 0, a)
    if _never(a):
        return ProfitBreakdown(p1, 0.0, 0.0)
    flat = disc(S, a, b)
    dec = disc(S, a, b, lam, a)
    p2 = (E * N * ((pure + movable) * flat - movable * dec)
          + mixed * N * D * dec
          + N0 * E * (flat - disc(S, a, b, lam0, a)))
    if _never(b):
        return ProfitBreakdown(p1, p2, 0.0)
    left = _decay(lam, b - a)
    pool = _decay(lam0, b - a)
    flat3 = disc(S, b, math.inf)
    dec3 = disc(S, b, math.inf, lam, b)
    p3 = (E * N * (pure + movable * (1 - left)) * flat3
          + mixed * N * left * (E * (flat3 - dec3) + D * dec3)
          + N0 * E * (1 - pool) * flat3
          + 0.5 * N0 * E * pool * (flat3 - disc(S, b, math.inf, lam0, b)))
    return ProfitBreakdown(p1, p2, p3)


def _shared_late(cfg: MarketConfig, i: int, a: float, b: float) -> ProfitBreakdown:
    j = cfg.other(i)
    S, lam, lam0 = cfg.S, cfg.lam, cfg.lam0
    e_i, e_j, N, N0 = cfg.shares[i], cfg.shares[j], cfg.n, cfg.n0
    D, E = _agg(cfg)

    p1 = e_i * N * D * disc(S, 0, b)
    p2 = e_i * N * D * disc(S, b, a, lam, b)
    if _never(a):
        return ProfitBreakdown(p1, p2, 0.0)
    left = _decay(lam, a - b)
    flat3 = disc(S, a, math.inf)
    dec3 = disc(S, a, math.inf, lam, a)
    p3 = (e_i**2 * N * left * E * flat3
          + e_i * e_j * N * left * (E * (flat3 - dec3) + D * dec3)
          + 0.5 * N0 * E * _decay(lam0, a - b) * (flat3 - disc(S, a, math.inf, lam0, a)))
    return ProfitBreakdown(p1, p2, p3)


def profit_shared(cfg: MarketConfig, i: int, t_i: float, t_j: float) -> ProfitBreakdown:
    t_i, t_j = check_time(t_i), check_time(t_j)
    if t_i <= t_j:
        return _shared_early(cfg, i, t_i, t_j)
    return _shared_late(cfg, i, t_i, t_j)


def profit_shared_branch(cfg: MarketConfig, i: int, t_i: float, t_j: float, branch: str) -> float:
    if branch == "early":
        return _shared_early(cfg, i, t_i, t_j).total
    if branch == "late":
        return math.nan if is_never(t_j) else _shared_late(cfg, i, t_i, t_j).total
    raise ValueError(f"unknown branch {branch!r}")


def shared_display_early(cfg: MarketConfig, i: int, t_i: float, t_j: float) -> float:
    """Fully expanded early-upgrade shared profit, finite times only."""
    j = cfg.other(i)
    S, lam, lam0 = cfg.S, cfg.lam, cfg.lam0
    e_i, e_j, N, N0 = cfg.shares[i], cfg.shares[j], cfg.n, cfg.n0
    D, E = _agg(cfg)
    g, g0 = 1 / S - 1 / (lam + S), 1 / S - 1 / (lam0 + S)
    return ((E * N * g + e_i**2 * N * E / (lam + S) - e_i * N * D / S
             + e_i * e_j * N * D / (lam + S) + N0 * E * g0) * math.exp(-S * t_i)
            - (1 - e_i) * N * E * g * math.exp(-(lam + S) * t_j + lam * t_i)
            - 0.5 * N0 * E * g0 * math.exp(-(lam0 + S) * t_j + lam0 * t_i)
            + e_i * N * D / S)


def shared_display_late(cfg: MarketConfig, i: int, t_i: float, t_j: float) -> float:
    """Fully expanded late-upgrade shared profit, finite times only."""
    j = cfg.other(i)
    S, lam, lam0 = cfg.S, cfg.lam, cfg.lam0
    e_i, e_j, N, N0 = cfg.shares[i], cfg.shares[j], cfg.n, cfg.n0
    D, E = _agg(cfg)
    return (e_i * N * D / S
            - e_i * N * D * (1 / S - 1 / (lam + S)) * math.exp(-S * t_j)
            + e_i * N * (E / S - e_j * E / (lam + S) - e_i * D / (lam + S))
            * math.exp(-(lam + S) * t_i + lam * t_j)
            + 0.5 * N0 * E * (1 / S - 1 / (lam0 + S)) * math.exp(-(lam0 + S) * t_i + lam0 * t_j))


def profit(cfg: MarketConfig, i: int, t_i: float, t_j: float, plan_type: str = "rollover") -> float:
    if plan_type == "rollover":
        return profit_rollover(cfg, i, t_i, t_j).total
    if plan_type == "shared":
        return profit_shared(cfg, i, t_i, t_j).total
    raise ValueError(f"unknown plan type {plan_type!r}")


def profit_curve(cfg: MarketConfig, i: int, own_times, t_j: float, plan_type: str = "rollover") -> np.ndarray:
    """Provider i's profit for each of its candidate times against a fixed rival time."""
    ts = np.asarray(own_times, float)
    out = np.empty_like(ts)
    early_fn, late_fn = (_rollover_early, _rollover_late) if plan_type == "rollover" else (_shared_early, _shared_late)
    if plan_type not in ("rollover", "shared"):
        raise ValueError(f"unknown plan type {plan_type!r}")
    inf = np.isinf(ts)
    early = ~inf & (ts <= t_j)
    late = ~inf & (ts > t_j)
    if early.any():
        out[early] = early_fn(cfg, i, ts[early], t_j).total
    if late.any():
        out[late] = late_fn(cfg, i, ts[late], t_j).total
    if inf.any():
        out[inf] = profit(cfg, i, NEVER, t_j, plan_type)
    return out


def profit_never(cfg: MarketConfig, i: int, plan_type: str = "rollover") -> float:
    if plan_type == "rollover":
        return profit_rollover_never(cfg, i)
    if plan_type == "shared":
        return profit_shared_never(cfg, i)
    raise ValueError(f"unknown plan type {plan_type!r}")


# -- substituted equilibrium profits -------------------------------------------

def _delay_powers(cfg: MarketConfig, kappa: float):
    """(1/kappa)^((lam+S)/gap) and (1/kappa)^((lam0+S)/gap)."""
    gap = cfg.rates.gap
    if math.isinf(kappa):
        return 0.0, 0.0
    if kappa <= 0:
        raise ConfigError("delayed-upgrade formulas need kappa > 0")
    return kappa ** (-(cfg.lam + cfg.S) / gap), kappa ** (-(cfg.lam0 + cfg.S) / gap)


def equilibrium_profit_formulas(cfg: MarketConfig, i: int, which: str, kappa: float | None = None) -> float:
    """Substituted equilibrium profits.

    ``which`` is ``<plan>-both-immediate`` (both at 0), ``<plan>-leader`` (i at
    0, rival at its delay) or ``<plan>-follower`` (i delayed, rival at 0), with
    ``<plan>`` either ``rollover`` or ``shared``.  ``kappa`` is the delaying
    provider's ratio; by default it is computed from ``cfg``.
    """
    from .rollover import kappa as kappa_r
    from .shared import kappa_shared

    j = cfg.other(i)
    S, lam, lam0 = cfg.S, cfg.lam, cfg.lam0
    al, N, N0 = cfg.alpha, cfg.n, cfg.n0
    N_i, N_j = cfg.n_of(i), cfg.n_of(j)
    c = cfg.costs
    g, g0 = 1 / S - 1 / (lam + S), 1 / S - 1 / (lam0 + S)

    if which == "rollover-both-immediate":
        return 2 * al * N_i * c.ec_heavy_rollover / S + al * N0 * g0 * c.ec_heavy_rollover
    if which == "rollover-leader":
        k = kappa_r(cfg, j) if kappa is None else kappa
        pw, pw0 = _delay_powers(cfg, k)
        r = c.ec_heavy_rollover
        return (2 * al * N * r / S - 2 * al * N_j * r / (S + lam) - 2 * al * N_j * r * g * pw
                + 2 * al * N0 * g0 * r - al * N0 * g0 * pw0 * r)
    if which == "rollover-follower":
        k = kappa_r(cfg, i) if kappa is None else kappa
        pw, pw0 = _delay_powers(cfg, k)
        return (2 * al * N_i / (lam + S) * c.ec_heavy * (1 - pw)
                + 2 * al * N_i / S * c.ec_heavy_rollover * pw
                + al * N0 * g0 * pw0 * c.ec_heavy_rollover)

    D, E = _agg(cfg)
    e_i, e_j = cfg.shares[i], cfg.shares[j]
    if which == "shared-both-immediate":
        return e_i * N * E / S + e_i * e_j * N * (D - E) / (lam + S) + 0.5 * N0 * E * g0
    if which == "shared-leader":
        k = kappa_shared(cfg, j) if kappa is None else kappa
        pw, pw0 = _delay_powers(cfg, k)
        return (E * N * g + e_i**2 * N * E / (lam + S) + e_i * e_j * N * D / (lam + S) + N0 * E * g0
                - (1 - e_i) * N * E * g * pw - 0.5 * N0 * E * g0 * pw0)
    if which == "shared-follower":
        k = kappa_shared(cfg, i) if kappa is None else kappa
        pw, pw0 = _delay_powers(cfg, k)
        return (e_i * N * D / (lam + S) * (1 - pw) + e_i * N * E / S * pw
                + e_i * e_j * N * (D - E) / (lam + S) * pw + 0.5 * N0 * E * g0 * pw0)
    raise ValueError(f"unknown formula {which!r}")


# -- quadrature oracle ----------------------------------------------------------

def _revenue_rate(cfg: MarketConfig, i: int, t: float, t_i: float, t_j: float, plan_type: str) -> float:
    c = cfg.costs
    if plan_type == "rollover":
        cnt = rollover_phase_counts(cfg, i, t, t_i, t_j)
        return cnt.total_i * (c.ec_heavy_rollover if t > t_i else c.ec_heavy)
    cnt = shared_phase_counts(cfg, i, t, t_i, t_j)
    shared_cost = {"hh": c.ec_family_hh, "hl": c.ec_family_hl}
    indiv_cost = {"hh": 2 * c.ec_heavy, "hl": c.ec_heavy + c.ec_light}
    return sum(cnt.shared_i[ty] * shared_cost[ty] + cnt.individual_i[ty] * indiv_cost[ty] for ty in shared_cost)


def quadrature_profit_oracle(cfg: MarketConfig, i: int, t_i: float, t_j: float, plan_type: str = "rollover",
                             horizon: float | None = None, tail_tol: float = ORACLE_TAIL_TOL) -> float:
    """Integrate headcount x cost x exp(-S t) numerically, phase by phase."""
    if plan_type == "shared" and (math.isnan(cfg.costs.ec_family_hh) or math.isnan(cfg.costs.ec_family_hl)):
        raise ConfigError("shared oracle needs per-family expected costs")
    S = cfg.S
    T = ORACLE_HORIZON_FACTOR / S if horizon is None else float(horizon)
    # tail: at most every user/family is billed at the largest unit cost
    c = cfg.costs
    people = 2 * (cfg.n + cfg.n0)
    unit = max(x for x in (c.ec_heavy, c.ec_heavy_rollover, c.ec_light, c.ec_family_hh, c.ec_family_hl)
               if not math.isnan(x))
    tail = people * unit * math.exp(-S * T) / S
    scale = abs(profit(cfg, i, t_i, t_j, plan_type)) or 1.0
    if tail > tail_tol * scale:
        raise ConfigError(f"quadrature horizon {T} too short: tail bound {tail:.3g} exceeds tolerance")

    knots = sorted({0.0, T, *(x for x in (t_i, t_j) if x < T)})
    total = 0.0
    for lo, hi in zip(knots[:-1], knots[1:]):
        val, _ = integrate.quad(lambda t: _revenue_rate(cfg, i, t, t_i, t_j, plan_type) * math.exp(-S * t),
                                lo, hi, epsabs=1e-12, epsrel=1e-12, limit=200)
        total += val
    return total
