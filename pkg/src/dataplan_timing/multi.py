"""Rollover timing equilibria for two or more providers.

Dynamics: once any provider has upgraded, every provider that has not yet
upgraded loses heavy users at rate lam, and the untapped pool subscribes at
rate lam0.  Both flows split equally among the providers that have upgraded
at that moment.  An upgrading provider locks in whatever users it still has.
With two providers this reproduces the duopoly closed forms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import optimize

from . import game as gm
from .dynamics import NEVER, MarketConfig, check_time, is_never
from .profits import disc

REFINE_XTOL = 1e-10
MAX_SWEEPS = 200


def symmetric_immediate_condition(cfg: MarketConfig, m: int | None = None) -> bool:
    """True when symmetric providers all upgrade at once (strict inequality; ``m`` does not enter)."""
    c = cfg.costs
    margin = c.ec_heavy - c.ec_heavy_rollover * (cfg.lam + cfg.S) / cfg.S
    return bool(margin < cfg.eta0 * c.ec_heavy_rollover * cfg.lam0 / cfg.S)


def _heavy(cfg: MarketConfig) -> tuple[np.ndarray, float]:
    h = 2 * cfg.alpha * cfg.n * np.asarray(cfg.shares, float)
    return h, 2 * cfg.alpha * cfg.n0


def multi_profit_curve(cfg: MarketConfig, k: int, own_times, times: Sequence[float]) -> np.ndarray:
    """Provider k's profit for each entry of ``own_times``, the others fixed at ``times``."""
    S, lam, lam0 = cfg.S, cfg.lam, cfg.lam0
    ec_h, ec_r = cfg.costs.ec_heavy, cfg.costs.ec_heavy_rollover
    h, h0 = _heavy(cfg)
    x = np.asarray(own_times, float).ravel()
    n, m = x.size, cfg.m
    T = np.tile(np.asarray([check_time(t) for t in times], float), (n, 1))
    T[:, k] = x
    order = np.argsort(T, axis=1, kind="stable")
    Ts = np.take_along_axis(T, order, axis=1)
    hs = h[order]
    rank_k = np.argmax(order == k, axis=1)
    first = Ts[:, 0]
    started = np.isfinite(first)
    anchor = np.where(started, first, 0.0)

    # before and after own upgrade, on own users
    own = h[k] * ec_h * disc(S, np.zeros(n), first)
    pre = disc(S, anchor, np.where(started, x, 0.0), lam, anchor)
    own += h[k] * ec_h * np.where(started, pre, 0.0)
    fin = np.isfinite(x)
    xs = np.where(fin, x, 0.0)
    own += np.where(fin, h[k] * ec_r * np.exp(-lam * (xs - anchor) - S * xs) / S, 0.0)

    # acquired users, each worth ec_r exp(-S s)/S when acquired at s
    tail = np.cumsum(hs[:, ::-1], axis=1)[:, ::-1]
    gains = np.zeros(n)
    for j in range(m):
        start = Ts[:, j]
        end = Ts[:, j + 1] if j + 1 < m else np.full(n, np.inf)
        live = np.isfinite(start) & (end > start) & (rank_k <= j)
        if not live.any():
            continue
        s0 = np.where(live, start, 0.0)
        e0 = np.where(live, end, 0.0)
        left = tail[:, j + 1] if j + 1 < m else np.zeros(n)
        flow = lam * left * disc(S, s0, e0, lam, anchor) + lam0 * h0 * disc(S, s0, e0, lam0, anchor)
        gains += np.where(live, flow / (j + 1), 0.0)
    return own + ec_r * gains / S


def multi_profit(cfg: MarketConfig, i: int, times: Sequence[float]) -> float:
    return float(multi_profit_curve(cfg, i, [times[i]], times)[0])


def timing_pattern(times: Sequence[float], together: float = 0.0) -> str:
    """Profile shape such as '0,late,later' or '0,late,late'.

    Positive times closer than ``together`` to the previous distinct time share its token.
    """
    groups: list[float] = []
    for t in sorted(t for t in times if not is_never(t) and t > 0):
        if not groups or t - groups[-1] > together:
            groups.append(t)
    names = ["late", "later"] + [f"late{k}" for k in range(3, len(groups) + 1)]

    def token(t):
        if is_never(t):
            return "inf"
        if t == 0:
            return "0"
        return names[max(r for r, g in enumerate(groups) if g <= t)]
    return ",".join(token(t) for t in times)


def default_grid_step(cfg: MarketConfig) -> float:
    return 0.05 / min(cfg.S, cfg.rates.gap)


def _pick_index(vals: np.ndarray, grid: np.ndarray) -> int:
    """Earliest near-optimal time, except that a late time tied with NEVER is NEVER.

    Far-future upgrades are indistinguishable from never upgrading once
    discounting pushes their effect below the tie tolerance.
    """
    best = float(np.max(vals))
    tol = gm.TIE_RTOL * max(abs(best), 1.0)
    idx = int(np.flatnonzero(vals >= best - tol)[0])  # grid is ascending, NEVER last
    if grid[idx] > 0 and is_never(grid[-1]) and vals[-1] >= best - tol:
        return grid.size - 1
    return idx


def _refine(cfg: MarketConfig, k: int, times: list, t0: float, v0: float, step: float) -> tuple[float, float]:
    """Continuous improvement of a grid optimum inside [t0 - step, t0 + step]."""
    if is_never(t0):
        return t0, v0
    lo, hi = max(0.0, t0 - step), t0 + step
    cuts = sorted({lo, hi, *(t for j, t in enumerate(times) if j != k and not is_never(t) and lo < t < hi)})
    f = lambda t: -multi_profit_curve(cfg, k, [t], times)[0]
    best = (t0, v0)
    for a, b in zip(cuts[:-1], cuts[1:]):
        for t in (a, b):
            v = -f(t)
            if v > best[1] + gm.TIE_RTOL * max(abs(best[1]), 1.0) or (abs(v - best[1]) <= gm.TIE_RTOL * max(abs(v), 1.0) and t < best[0]):
                best = (t, v)
        r = optimize.minimize_scalar(f, bounds=(a, b), method="bounded", options={"xatol": REFINE_XTOL})
        if -r.fun > best[1] + gm.TIE_RTOL * max(abs(best[1]), 1.0):
            best = (float(r.x), float(-r.fun))
    return best


def best_response_multi(cfg: MarketConfig, k: int, times: Sequence[float], grid: np.ndarray,
                        refine: bool = False) -> tuple[float, float]:
    times = list(times)
    vals = multi_profit_curve(cfg, k, grid, times)
    idx = _pick_index(vals, grid)
    t, v = float(grid[idx]), float(vals[idx])
    if refine:
        step = float(grid[1] - grid[0]) if grid.size > 2 else 1.0
        t, v = _refine(cfg, k, times, t, v, step)
    return t, v


def certify_multi(cfg: MarketConfig, times: Sequence[float], step: float = gm.DEFAULT_CERT_STEP,
                  t_max: float | None = None, rel_eps: float = gm.EPS_NASH_RTOL) -> gm.NashCertificate:
    t_max = gm.default_t_max(cfg, times) if t_max is None else t_max
    return gm.certify_profile(
        lambda k, grid, ts: multi_profit_curve(cfg, k, grid, ts),
        lambda k, ts: multi_profit(cfg, k, ts),
        tuple(times), t_max, step, rel_eps,
    )


def _grid_gain(cfg: MarketConfig, times: tuple, grid: np.ndarray) -> float:
    gain = -math.inf
    for k in range(cfg.m):
        own = multi_profit(cfg, k, times)
        gain = max(gain, float(np.max(multi_profit_curve(cfg, k, grid, times))) - own)
    return gain


def _iterate(cfg: MarketConfig, start: list, grid: np.ndarray, refine: bool):
    """Ascending-order best responses, restarting from provider 0 after any change."""
    prof = list(start)
    seen = {tuple(prof)}
    visited = [tuple(prof)]
    for _ in range(MAX_SWEEPS):
        changed = False
        for k in range(cfg.m):
            t, _ = best_response_multi(cfg, k, prof, grid, refine)
            same = (is_never(t) and is_never(prof[k])) or (not is_never(t) and not is_never(prof[k])
                                                          and abs(t - prof[k]) <= 1e-9 * max(1.0, t))
            if not same:
                prof[k] = t
                changed = True
                break
        if not changed:
            return tuple(prof), visited, None
        key = tuple(prof)
        if not refine and key in seen:
            return None, visited, f"best-response cycle revisiting {gm.fmt_profile(key)}"
        seen.add(key)
        visited.append(key)
    return None, visited, f"no fixed point after {MAX_SWEEPS} best-response updates"


def _never_count(times: Sequence[float]) -> int:
    return sum(is_never(t) for t in times)


def solve_multi(cfg: MarketConfig, grid_step: float | None = None, t_max: float | None = None,
                certify: bool = True, cert_step: float = gm.DEFAULT_CERT_STEP,
                starts: Sequence[Sequence[float]] | None = None) -> gm.EquilibriumResult:
    """Iterated best response on {0, step, ..., t_max, NEVER}, polished off-grid.

    Iteration runs from all-NEVER and then from all-0.  Every fixed point found
    is listed in ``notes``.  The first one with the fewest NEVER entries is
    returned, which matches the duopoly classification whenever never
    upgrading coexists with an upgrading equilibrium.
    """
    step = default_grid_step(cfg) if grid_step is None else grid_step
    t_max = gm.default_t_max(cfg) if t_max is None else t_max
    grid = gm.deviation_grid(t_max, step)
    starts = [[NEVER] * cfg.m, [0.0] * cfg.m] if starts is None else [list(s) for s in starts]
    notes, found, trail = [], [], []
    for start in starts:
        fixed, visited, diag = _iterate(cfg, start, grid, refine=False)
        trail.extend(visited)
        if fixed is None:
            notes.append(f"start {gm.fmt_profile(start)}: {diag}")
            continue
        polished, _, diag = _iterate(cfg, list(fixed), grid, refine=True)
        if polished is None:
            notes.append(f"start {gm.fmt_profile(start)}: off-grid polishing failed ({diag}); grid profile kept")
            polished = fixed
        if not any(np.allclose(polished, f, rtol=0, atol=1e-9) or polished == f for f in found):
            found.append(tuple(polished))
    if not found:
        gains = [(_grid_gain(cfg, p, grid), p) for p in trail]
        g, best = min(gains, key=lambda x: x[0])
        scale = max(abs(multi_profit(cfg, k, best)) for k in range(cfg.m))
        if g > gm.EPS_NASH_RTOL * scale:
            raise gm.SolverError(f"no fixed point; smallest deviation gain {g:.6g} at {gm.fmt_profile(best)}")
        notes.append(f"kept best grid profile {gm.fmt_profile(best)}")
        found.append(best)
    if len(found) > 1:
        notes.append("fixed points: " + "; ".join(gm.fmt_profile(f) for f in found))
    times = min(found, key=_never_count)
    prof = tuple(multi_profit(cfg, k, times) for k in range(cfg.m))
    res = gm.EquilibriumResult(times, prof, timing_pattern(times, step), None, "rollover",
                               theorem_times=tuple(found), notes=notes)
    if certify:
        res.certificate = certify_multi(cfg, times, step=cert_step, t_max=max(t_max, gm.default_t_max(cfg, times)))
    return res


@dataclass(frozen=True)
class SweepRow:
    ec_heavy: float
    times: tuple
    pattern: str
    certified: bool


def cost_sweep(cfg: MarketConfig, ec_values: Sequence[float], **kw) -> list[SweepRow]:
    """solve_multi across heavy-user traditional costs, other costs fixed."""
    rows = []
    for ec in ec_values:
        c = cfg.with_costs(ec_heavy=float(ec))
        r = solve_multi(c, **kw)
        rows.append(SweepRow(float(ec), r.times, r.regime, r.certificate.passed if r.certificate else False))
    return rows


def crossovers(rows: Sequence[SweepRow]) -> list[tuple[float, str, str]]:
    """(first cost, old pattern, new pattern) wherever the pattern changes along a sweep."""
    return [(b.ec_heavy, a.pattern, b.pattern) for a, b in zip(rows[:-1], rows[1:]) if a.pattern != b.pattern]
