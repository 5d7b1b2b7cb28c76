"""Timing-game machinery shared by the rollover and shared-plan solvers."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import optimize

from . import profits
from .dynamics import NEVER, MarketConfig, check_time, is_never

SCAN_POINTS = 512
ROOT_XTOL = 1e-12
TIE_RTOL = 1e-12
NASH_RTOL = 1e-9
EPS_NASH_RTOL = 1e-6
DEFAULT_CERT_STEP = 1e-3


class SolverError(RuntimeError):
    """Root bracketing or equilibrium search failed."""


class UnsupportedRegimeError(SolverError):
    """Cost reduction beyond the range the closed-form classification covers."""


def find_roots(fn: Callable, lo: float, hi: float, n: int = SCAN_POINTS) -> list[float]:
    """All sign changes of a vectorized ``fn`` on a uniform scan, refined with brentq."""
    if not hi > lo:
        return []
    xs = np.linspace(lo, hi, n + 1)
    ys = np.asarray(fn(xs), float)
    roots = []
    for k in range(n):
        y0, y1 = ys[k], ys[k + 1]
        if y0 == 0.0:
            roots.append(float(xs[k]))
        elif y0 * y1 < 0:
            roots.append(optimize.brentq(lambda x: float(fn(np.array([x]))[0]), xs[k], xs[k + 1], xtol=ROOT_XTOL))
    if ys[-1] == 0.0:
        roots.append(float(xs[-1]))
    return roots


def bracket_root(fn: Callable, lo: float, hi: float, name: str) -> float:
    """Single root of a scalar ``fn`` on [lo, hi]; raises with diagnostics if no sign change."""
    f_lo, f_hi = fn(lo), fn(hi)
    if f_lo == 0:
        return lo
    if f_hi == 0:
        return hi
    if f_lo * f_hi > 0:
        raise SolverError(f"cannot bracket {name}: f({lo:.6g})={f_lo:.6g}, f({hi:.6g})={f_hi:.6g} share a sign")
    return optimize.brentq(fn, lo, hi, xtol=ROOT_XTOL)


def delay_after(cfg: MarketConfig, kappa: float) -> float:
    """Optimal lag behind an earlier rival: log(kappa)/(lam - lam0), 0 if kappa <= 1."""
    if kappa <= 1:
        return 0.0
    if math.isinf(kappa):
        return NEVER
    return math.log(kappa) / cfg.rates.gap


@dataclass(frozen=True)
class TimingGame:
    """Plan-specific pieces a generic best response needs."""

    plan_type: str
    kappa: Callable[[MarketConfig, int], float]
    early_slope: Callable[[MarketConfig, int, np.ndarray, float], np.ndarray]

    def profit(self, cfg: MarketConfig, i: int, t_i: float, t_j: float) -> float:
        return profits.profit(cfg, i, t_i, t_j, self.plan_type)

    def curve(self, cfg: MarketConfig, i: int, ts, t_j: float) -> np.ndarray:
        return profits.profit_curve(cfg, i, ts, t_j, self.plan_type)

    def never(self, cfg: MarketConfig, i: int) -> float:
        return profits.profit_never(cfg, i, self.plan_type)


@dataclass(frozen=True)
class BestResponse:
    time: float
    profit: float
    candidates: tuple  # (time, profit) pairs that were compared


def _pick(cands: Sequence[tuple]) -> tuple:
    """Highest profit; near-ties resolve toward the earliest time."""
    best = max(v for _, v in cands)
    tol = TIE_RTOL * max(abs(best), 1.0)
    return min((c for c in cands if c[1] >= best - tol), key=lambda c: c[0])


def best_response_detail(game: TimingGame, cfg: MarketConfig, i: int, t_j: float) -> BestResponse:
    t_j = check_time(t_j)
    cfg.other(i)  # duopoly only
    if is_never(t_j):
        # against a rival that never moves, profit is affine in exp(-S t_i)
        cands = [(0.0, game.profit(cfg, i, 0.0, NEVER)), (NEVER, game.never(cfg, i))]
        t, v = _pick(cands)
        return BestResponse(t, v, tuple(cands))
    times = [0.0]
    if t_j > 0:
        times.append(t_j)
        times.extend(r for r in find_roots(lambda a: game.early_slope(cfg, i, a, t_j), 0.0, t_j) if 0 < r < t_j)
    k = game.kappa(cfg, i)
    if k > 1:
        times.append(t_j + delay_after(cfg, k))
    cands = [(t, game.profit(cfg, i, t, t_j)) for t in times]
    t, v = _pick(cands)
    return BestResponse(t, v, tuple(cands))


def best_response(game: TimingGame, cfg: MarketConfig, i: int, t_j: float) -> float:
    return best_response_detail(game, cfg, i, t_j).time


def nash_gap(game: TimingGame, cfg: MarketConfig, times: Sequence[float]) -> float:
    """Largest exact best-response gain over the profile, relative to the largest |profit|."""
    gains, scale = [], 1e-300
    for i in (0, 1):
        j = 1 - i
        own = game.profit(cfg, i, times[i], times[j])
        br = best_response_detail(game, cfg, i, times[j])
        gains.append(br.profit - own)
        scale = max(scale, abs(own))
    return max(gains) / scale


def is_exact_nash(game: TimingGame, cfg: MarketConfig, times: Sequence[float], rtol: float = NASH_RTOL) -> bool:
    return nash_gap(game, cfg, times) <= rtol


def default_t_max(cfg: MarketConfig, times: Sequence[float] = ()) -> float:
    finite = [t for t in times if not is_never(t)]
    return 10.0 * max(1.0 / cfg.S, 1.0 / cfg.rates.gap) + max(finite, default=0.0)


def deviation_grid(t_max: float, step: float) -> np.ndarray:
    n = int(math.floor(t_max / step + 1e-9))
    return np.append(np.arange(n + 1) * step, NEVER)


@dataclass(frozen=True)
class NashCertificate:
    passed: bool
    max_gain: float
    epsilon: float
    worst_provider: int
    worst_time: float
    grid_step: float
    t_max: float


def certify_profile(curve_fn: Callable, profit_fn: Callable, times: Sequence[float], t_max: float,
                    step: float = DEFAULT_CERT_STEP, rel_eps: float = EPS_NASH_RTOL) -> NashCertificate:
    """epsilon-Nash check over the grid {0, step, ..., t_max, NEVER}.

    ``curve_fn(k, grid, times)`` gives provider k's profit for each grid time
    with the others fixed; ``profit_fn(k, times)`` its profit at the profile.
    """
    grid = deviation_grid(t_max, step)
    base = [profit_fn(k, times) for k in range(len(times))]
    eps = rel_eps * max(abs(v) for v in base)
    worst = (-math.inf, 0, 0.0)
    for k in range(len(times)):
        vals = curve_fn(k, grid, times)
        idx = int(np.argmax(vals))
        gain = float(vals[idx] - base[k])
        if gain > worst[0]:
            worst = (gain, k, float(grid[idx]))
    return NashCertificate(worst[0] <= eps, worst[0], eps, worst[1], worst[2], step, t_max)


def certify_duopoly(game: TimingGame, cfg: MarketConfig, times: Sequence[float], step: float = DEFAULT_CERT_STEP,
                    t_max: Optional[float] = None, rel_eps: float = EPS_NASH_RTOL) -> NashCertificate:
    t_max = default_t_max(cfg, times) if t_max is None else t_max
    return certify_profile(
        lambda k, grid, ts: game.curve(cfg, k, grid, ts[1 - k]),
        lambda k, ts: game.profit(cfg, k, ts[k], ts[1 - k]),
        times, t_max, step, rel_eps,
    )


@dataclass
class EquilibriumResult:
    times: tuple
    profits: tuple
    regime: str
    thresholds: object = None
    plan_type: str = "rollover"
    theorem_regime: str = ""
    theorem_times: tuple = ()
    theorem_consistent: bool = True
    certificate: Optional[NashCertificate] = None
    notes: list = field(default_factory=list)


def select_equilibrium(game: TimingGame, cfg: MarketConfig, preferred: tuple, fallbacks: Sequence[tuple]):
    """Return (times, consistent, notes): ``preferred`` if it is a Nash equilibrium, else a fallback."""
    gap = nash_gap(game, cfg, preferred)
    if gap <= NASH_RTOL:
        return preferred, True, []
    notes = [f"classified profile {fmt_profile(preferred)} is not an equilibrium (relative gain {gap:.3g})"]
    seen = {preferred}
    for cand in fallbacks:
        if cand in seen:
            continue
        seen.add(cand)
        if nash_gap(game, cfg, cand) <= NASH_RTOL:
            notes.append(f"selected {fmt_profile(cand)} instead")
            return cand, False, notes
    # best-response iteration from the classified profile
    prof = list(preferred)
    for _ in range(50):
        changed = False
        for k in (0, 1):
            t = best_response(game, cfg, k, prof[1 - k])
            if t != prof[k] and abs(t - prof[k]) > 1e-12:
                prof[k] = t
                changed = True
        if not changed:
            break
    if nash_gap(game, cfg, tuple(prof)) <= NASH_RTOL:
        notes.append(f"best-response iteration reached {fmt_profile(tuple(prof))}")
        return tuple(prof), False, notes
    raise SolverError(f"no equilibrium among candidates; smallest relative gain {gap:.3g} at {fmt_profile(preferred)}")


def fmt_time(t: float) -> str:
    return "inf" if is_never(t) else f"{t:.6g}"


def fmt_profile(times: Sequence[float]) -> str:
    return "(" + ", ".join(fmt_time(t) for t in times) + ")"


def structural_label(family: str, times: Sequence[float]) -> str:
    """Label that matches the actual profile within the closed-form regime family.

    An asymmetric classification whose laggard delay is zero is reported as both-immediate.
    """
    if family == "medium":
        return "medium-both-immediate" if all(t == 0 for t in times) else "medium-asymmetric"
    if family == "small":
        return "small-no-upgrade" if all(is_never(t) for t in times) else "small-asymmetric"
    return family
