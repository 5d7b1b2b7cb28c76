"""Agent-based Monte Carlo market used as an independent check of the closed forms.

Every heavy user (rollover game) or every family with a heavy member (shared
game) carries its own exponential switching clock.  Bills are drawn month by
month from the usage models and charged pro rata for the part of the month a
subscriber spends with a provider on a given plan, discounted exactly over
that part.  Replication ``r`` draws from the ``r``-th stream spawned from
``SeedSequence(seed)``, so results do not depend on execution order.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .dynamics import ConfigError, MarketConfig, check_time, is_never

TAIL_FACTOR = 40.0
MIN_REPLICATIONS_FOR_CI = 100


@dataclass(frozen=True)
class SimConfig:
    """Monte Carlo settings.

    ``months`` defaults to ceil(40/S).  ``dt = 0`` uses exact switching times;
    ``dt > 0`` moves each switch to the end of its ``dt`` window.
    """

    seed: int = 0
    replications: int = 200
    months: int | None = None
    dt: float = 0.0
    reset_leftover_on_switch: bool = False

    def horizon(self, cfg: MarketConfig) -> int:
        months = math.ceil(TAIL_FACTOR / cfg.S) if self.months is None else int(self.months)
        if months < TAIL_FACTOR / cfg.S:
            raise ConfigError(f"horizon of {months} months is below 40/S = {TAIL_FACTOR / cfg.S:.6g}")
        return months

    def __post_init__(self):
        if self.replications < 2:
            raise ConfigError("need at least 2 replications for a standard error")
        if self.dt < 0:
            raise ConfigError(f"dt must be >= 0, got {self.dt}")


@dataclass
class SimResult:
    """Per-provider means and standard errors plus the per-replication records."""

    mean: np.ndarray
    se: np.ndarray
    profit: np.ndarray        # (replications, providers)
    n_switched: np.ndarray    # subscribers (users or families) won from the rival
    n_new: np.ndarray         # subscribers drawn from the untapped pool
    extra: dict = field(default_factory=dict)

    def rows(self):
        for r in range(self.profit.shape[0]):
            for k in range(self.profit.shape[1]):
                yield r, k, float(self.profit[r, k]), int(self.n_switched[r, k]), int(self.n_new[r, k])

    def write_csv(self, path_or_file) -> None:
        own = isinstance(path_or_file, str)
        fh = open(path_or_file, "w", newline="") if own else path_or_file
        try:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["rep", "provider", "profit", "n_switched", "n_new"])
            for r, k, p, s, n in self.rows():
                w.writerow([r, k, f"{p:.12g}", s, n])
        finally:
            if own:
                fh.close()


def _streams(seed: int, n: int) -> list[np.random.Generator]:
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n)]


def _need_models(cfg: MarketConfig):
    if cfg.plan is None or cfg.heavy is None or cfg.light is None:
        raise ConfigError("simulation needs the tariff plan and both usage models, not just expected costs")


def _switch_time(rng, start: float, rate: float, size: int, dt: float) -> np.ndarray:
    if is_never(start):
        return np.full(size, np.inf)
    wait = rng.exponential(1.0 / rate, size)
    if dt > 0:
        wait = np.ceil(wait / dt) * dt
    return start + wait


def _weights(S: float, lo: np.ndarray, hi: np.ndarray, months: int) -> np.ndarray:
    """Discount mass of [lo, hi) falling in each month: shape (len(lo), months)."""
    m = np.arange(months, dtype=float)
    a = np.maximum(lo[:, None], m[None, :])
    b = np.minimum(hi[:, None], m[None, :] + 1.0)
    a_fin = np.where(np.isfinite(a), a, 0.0)
    b_fin = np.where(np.isfinite(b), b, 0.0)
    w = (np.exp(-S * a_fin) - np.exp(-S * b_fin)) / S
    return np.where(b > a, w, 0.0)


def _order(cfg: MarketConfig, t_i: float, t_j: float):
    t_i, t_j = check_time(t_i), check_time(t_j)
    lead = 0 if t_i <= t_j else 1
    return lead, 1 - lead, min(t_i, t_j), max(t_i, t_j)


# -- rollover ------------------------------------------------------------------

def _rollover_paths(cfg: MarketConfig, rng, a: float, b: float, lead: int, lag: int, dt: float):
    """Sample heavy-user counts and clocks.  Returns per-user origin info for both groups."""
    al = cfg.alpha
    h = [rng.binomial(int(round(2 * cfg.n_of(k))), al) for k in (0, 1)]
    h0 = rng.binomial(int(round(2 * cfg.n0)), al)
    tau = _switch_time(rng, a, cfg.lam, h[lag], dt)       # laggard users' switch clocks
    tau0 = _switch_time(rng, a, cfg.lam0, h0, dt)         # new users' arrival clocks
    coin = rng.integers(0, 2, h0)
    return h, tau, tau0, coin


def _rollover_bills(cfg: MarketConfig, rng, n_users: int, months: int):
    P, B, p = cfg.plan.P, cfg.plan.B, cfg.plan.p
    u = cfg.heavy.sample(rng, (n_users, months + 1))      # column 0 is the month before the horizon
    trad = P + p * np.maximum(u[:, 1:] - B, 0.0)
    left = np.maximum(B - u[:, :-1], 0.0)
    roll = P + p * np.maximum(u[:, 1:] - B - left, 0.0)
    roll_fresh = trad  # leftover cleared: quota is just B
    return trad, roll, roll_fresh


def simulate_rollover(cfg: MarketConfig, sim: SimConfig, t_i: float, t_j: float) -> SimResult:
    """Discounted heavy-user revenue per provider when providers upgrade to rollover at (t_i, t_j)."""
    _need_models(cfg)
    if cfg.m != 2:
        raise ConfigError("the simulator covers two providers")
    months = sim.horizon(cfg)
    lead, lag, a, b = _order(cfg, t_i, t_j)
    S = cfg.S
    reps = sim.replications
    profit = np.zeros((reps, 2))
    n_sw = np.zeros((reps, 2), int)
    n_new = np.zeros((reps, 2), int)
    for r, rng in enumerate(_streams(sim.seed, reps)):
        h, tau, tau0, coin = _rollover_paths(cfg, rng, a, b, lead, lag, sim.dt)
        rev = np.zeros(2)
        # leader's own users: traditional until a, rollover after
        trad, roll, _ = _rollover_bills(cfg, rng, h[lead], months)
        zeros, inf = np.zeros(h[lead]), np.full(h[lead], np.inf)
        at = np.full(h[lead], a)
        rev[lead] += np.sum(trad * _weights(S, zeros, at, months)) + np.sum(roll * _weights(S, at, inf, months))
        # laggard's users: switch to the leader before b, otherwise stay and upgrade at b
        trad, roll, fresh = _rollover_bills(cfg, rng, h[lag], months)
        moved = tau < b
        stop = np.where(moved, tau, b)
        rev[lag] += np.sum(trad * _weights(S, np.zeros(h[lag]), stop, months))
        rev[lag] += np.sum((roll * _weights(S, np.where(moved, np.inf, b), np.full(h[lag], np.inf), months)))
        w_moved = _weights(S, np.where(moved, tau, np.inf), np.full(h[lag], np.inf), months)
        if sim.reset_leftover_on_switch:
            first = _first_month_mask(np.where(moved, tau, np.inf), months)
            roll = np.where(first, fresh, roll)
        rev[lead] += np.sum(roll * w_moved)
        n_sw[r, lead] = int(moved.sum())
        # new users: leader before b, a fair coin afterwards
        _, roll, _ = _rollover_bills(cfg, rng, len(tau0), months)
        dest = np.where(tau0 < b, lead, np.where(coin == 1, lead, lag))
        w_new = _weights(S, tau0, np.full(len(tau0), np.inf), months)
        joined = np.isfinite(tau0)
        for k in (0, 1):
            sel = dest == k
            rev[k] += np.sum(roll[sel] * w_new[sel])
            n_new[r, k] = int(np.sum(sel & joined))
        profit[r] = rev
    return _summarize(profit, n_sw, n_new)


def _first_month_mask(start: np.ndarray, months: int) -> np.ndarray:
    m = np.arange(months)[None, :]
    s = np.where(np.isfinite(start), np.floor(start), -1)[:, None]
    return m == s


def _summarize(profit, n_sw, n_new, **extra) -> SimResult:
    reps = profit.shape[0]
    return SimResult(profit.mean(axis=0), profit.std(axis=0, ddof=1) / math.sqrt(reps), profit, n_sw, n_new, extra)


def simulate_rollover_counts(cfg: MarketConfig, sim: SimConfig, t_i: float, t_j: float,
                             times: Sequence[float]) -> tuple[np.ndarray, np.ndarray]:
    """Mean and standard error of each provider's heavy subscribers at ``times``: arrays (len(times), 2)."""
    if cfg.m != 2:
        raise ConfigError("the simulator covers two providers")
    lead, lag, a, b = _order(cfg, t_i, t_j)
    ts = np.asarray(times, float)
    out = np.zeros((sim.replications, len(ts), 2))
    for r, rng in enumerate(_streams(sim.seed, sim.replications)):
        h, tau, tau0, coin = _rollover_paths(cfg, rng, a, b, lead, lag, sim.dt)
        moved = tau < b
        gone = (tau[None, :] <= ts[:, None]) & moved[None, :]
        arrived = tau0[None, :] <= ts[:, None]
        to_lead = (tau0 < b) | (coin == 1)
        out[r, :, lag] = h[lag] - gone.sum(axis=1) + (arrived & ~to_lead[None, :]).sum(axis=1)
        out[r, :, lead] = h[lead] + gone.sum(axis=1) + (arrived & to_lead[None, :]).sum(axis=1)
    return out.mean(axis=0), out.std(axis=0, ddof=1) / math.sqrt(sim.replications)


# -- shared ---------------------------------------------------------------------

def _family_bills(cfg: MarketConfig, rng, n: int, kind: str, months: int):
    """(member-1 bill, member-2 bill, family bill) matrices; member 1 is heavy."""
    P, B, p = cfg.plan.P, cfg.plan.B, cfg.plan.p
    u1 = cfg.heavy.sample(rng, (n, months))
    u2 = (cfg.heavy if kind == "hh" else cfg.light).sample(rng, (n, months))
    b1 = P + p * np.maximum(u1 - B, 0.0)
    b2 = P + p * np.maximum(u2 - B, 0.0)
    fam = 2 * P + p * np.maximum(u1 + u2 - 2 * B, 0.0)
    return b1, b2, fam


def simulate_shared(cfg: MarketConfig, sim: SimConfig, t_i: float, t_j: float) -> SimResult:
    """Discounted revenue from families with a heavy member when providers offer sharing at (t_i, t_j)."""
    _need_models(cfg)
    if cfg.m != 2:
        raise ConfigError("the simulator covers two providers")
    months = sim.horizon(cfg)
    lead, lag, a, b = _order(cfg, t_i, t_j)
    S, al = cfg.S, cfg.alpha
    e = cfg.shares
    origin_p = [e[lead] ** 2, 2 * e[lead] * e[lag], e[lag] ** 2]
    type_p = [al**2, 2 * al * (1 - al), (1 - al) ** 2]
    reps = sim.replications
    profit = np.zeros((reps, 2))
    n_sw = np.zeros((reps, 2), int)
    n_new = np.zeros((reps, 2), int)
    hl_count = np.zeros(reps, int)
    for r, rng in enumerate(_streams(sim.seed, reps)):
        origin = rng.multinomial(int(round(cfg.n)), origin_p)
        rev = np.zeros(2)
        for o, n_o in zip(("pure_lead", "mixed", "pure_lag"), origin):
            types = rng.multinomial(n_o, type_p)
            for kind, n in zip(("hh", "hl"), types[:2]):
                if kind == "hl":
                    hl_count[r] += n
                if n == 0:
                    continue
                b1, b2, fam = _family_bills(cfg, rng, n, kind, months)
                zeros, inf = np.zeros(n), np.full(n, np.inf)
                if o == "pure_lead":
                    rev[lead] += np.sum((b1 + b2) * _weights(S, zeros, np.full(n, a), months))
                    rev[lead] += np.sum(fam * _weights(S, np.full(n, a), inf, months))
                    continue
                tau = _switch_time(rng, a, cfg.lam, n, sim.dt)
                if o == "pure_lag":
                    moved = tau < b
                    stop = np.where(moved, tau, b)
                    rev[lag] += np.sum((b1 + b2) * _weights(S, zeros, stop, months))
                    rev[lag] += np.sum(fam * _weights(S, np.where(moved, np.inf, b), inf, months))
                    rev[lead] += np.sum(fam * _weights(S, np.where(moved, tau, np.inf), inf, months))
                    n_sw[r, lead] += int(moved.sum())
                    continue
                # mixed: members pay their own providers until the family joins one shared plan
                heavy_at = np.where(rng.integers(0, 2, n) == 1, lead, lag)
                w_ind = _weights(S, zeros, tau, months)
                for k in (0, 1):
                    rev[k] += np.sum(np.where((heavy_at == k)[:, None], b1, b2) * w_ind)
                dest = np.where(tau < b, lead, np.where(rng.integers(0, 2, n) == 1, lead, lag))
                w_sh = _weights(S, tau, inf, months)
                for k in (0, 1):
                    sel = dest == k
                    rev[k] += np.sum(fam[sel] * w_sh[sel])
                    n_sw[r, k] += int(np.sum(sel & np.isfinite(tau)))
        new_types = rng.multinomial(int(round(cfg.n0)), type_p)
        for kind, n in zip(("hh", "hl"), new_types[:2]):
            if kind == "hl":
                hl_count[r] += n
            if n == 0:
                continue
            _, _, fam = _family_bills(cfg, rng, n, kind, months)
            tau0 = _switch_time(rng, a, cfg.lam0, n, sim.dt)
            dest = np.where(tau0 < b, lead, np.where(rng.integers(0, 2, n) == 1, lead, lag))
            w_new = _weights(S, tau0, np.full(n, np.inf), months)
            for k in (0, 1):
                sel = dest == k
                rev[k] += np.sum(fam[sel] * w_new[sel])
                n_new[r, k] += int(np.sum(sel & np.isfinite(tau0)))
        profit[r] = rev
    return _summarize(profit, n_sw, n_new, hl_families=hl_count)
