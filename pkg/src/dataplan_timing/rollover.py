"""Rollover timing game: kappa, best responses, thresholds and classification."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import game as gm
from .dynamics import NEVER, ConfigError, MarketConfig
from .profits import equilibrium_profit_formulas, profit_rollover, profit_rollover_never


def reduction_margin(cfg: MarketConfig) -> float:
    """EC_h - EC_h^r (lam+S)/S: positive when rollover cuts revenue by more than a mild amount."""
    c = cfg.costs
    return c.ec_heavy - c.ec_heavy_rollover * (cfg.lam + cfg.S) / cfg.S


def _pull(cfg: MarketConfig) -> float:
    return cfg.costs.ec_heavy_rollover * cfg.lam0 / cfg.S


def kappa_from_share(cfg: MarketConfig, eta, eta0=None):
    eta0 = cfg.eta0 if eta0 is None else eta0
    num = 2 * np.asarray(eta, float) * reduction_margin(cfg)
    den = eta0 * _pull(cfg)
    if den == 0:
        return np.where(num > 0, np.inf, 0.0) if np.ndim(num) else (math.inf if num > 0 else 0.0)
    return num / den


def kappa(cfg: MarketConfig, i: int) -> float:
    return float(kappa_from_share(cfg, cfg.shares[i]))


def early_slope(cfg: MarketConfig, i: int, a, b: float):
    """d/dt_i of the early-upgrade profit at t_i = a <= t_j = b."""
    j = cfg.other(i)
    S, lam, lam0 = cfg.S, cfg.lam, cfg.lam0
    al, N0 = cfg.alpha, cfg.n0
    N_i, N_j = cfg.n_of(i), cfg.n_of(j)
    c = cfg.costs
    r = c.ec_heavy_rollover
    a = np.asarray(a, float)
    lead = (2 * al * (N_i * c.ec_heavy - (N_i + N_j) * r + N_j * S / (lam + S) * r)
            - 2 * al * N0 * lam0 / (lam0 + S) * r)
    return (lead * np.exp(-S * a)
            - 2 * al * N_j * (lam / S - lam / (lam + S)) * r * np.exp(-S * b - lam * (b - a))
            - al * N0 * (lam0 / S - lam0 / (lam0 + S)) * r * np.exp(-S * b - lam0 * (b - a)))


def late_slope(cfg: MarketConfig, i: int, a, b: float):
    """d/dt_i of the late-upgrade profit at t_i = a > t_j = b."""
    S, lam, lam0 = cfg.S, cfg.lam, cfg.lam0
    a = np.asarray(a, float)
    return (2 * cfg.alpha * cfg.n_of(i) * reduction_margin(cfg) * np.exp(lam * b - (lam + S) * a)
            - cfg.alpha * cfg.n0 * _pull(cfg) * np.exp(lam0 * b - (lam0 + S) * a))


GAME = gm.TimingGame("rollover", kappa, early_slope)


def best_response_rollover(cfg: MarketConfig, i: int, t_j: float) -> float:
    return gm.best_response(GAME, cfg, i, t_j)


# -- thresholds ------------------------------------------------------------------

def g_function(cfg: MarketConfig, eta_i, eta0=None):
    """Slope of the leader's profit at t_i = 0 when the rival waits its optimal delay.

    Negative means leading at 0 is locally optimal.  Vectorized in ``eta_i``.
    """
    eta0 = cfg.eta0 if eta0 is None else eta0
    S, lam, lam0, gap = cfg.S, cfg.lam, cfg.lam0, cfg.rates.gap
    c, al, N = cfg.costs, cfg.alpha, cfg.n
    r = c.ec_heavy_rollover
    eta_i = np.asarray(eta_i, float)
    eta_j = 1 - eta_i
    k_j = kappa_from_share(cfg, eta_j, eta0)
    with np.errstate(divide="ignore"):
        inv = np.where(np.isinf(k_j), 0.0, 1.0 / np.where(k_j > 0, k_j, 1.0))
    p1 = inv ** ((lam + S) / gap)
    p0 = inv ** ((lam0 + S) / gap)
    N_i, N_j, N0 = eta_i * N, eta_j * N, eta0 * N
    return (2 * al * (N_i * c.ec_heavy - N * r + N_j * S / (lam + S) * r)
            - 2 * al * N_j * (lam / S - lam / (lam + S)) * r * p1
            - al * N0 * (lam0 / S - lam0 / (lam0 + S)) * r * p0
            - 2 * al * N0 * lam0 / (lam0 + S) * r)


def phi_function(cfg: MarketConfig, eta0):
    """g at equal shares, as a function of the new-user proportion."""
    return np.array([float(g_function(cfg, 0.5, e)) for e in np.atleast_1d(eta0)])


@dataclass(frozen=True)
class RegimeThresholds:
    margin: float                  # EC_h - EC_h^r (lam+S)/S
    large_bound: float
    eta0_bar: float
    eta_r_bar: float
    eta_r_underline: float
    eta_r_tilde: float
    q: float                       # eta0 / large_bound
    notes: tuple = ()

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in ("margin", "large_bound", "eta0_bar", "eta_r_bar",
                                             "eta_r_underline", "eta_r_tilde", "q")}


def _clamp01(x: float) -> float:
    return min(1.0, max(0.0, x))


def eta0_bar(cfg: MarketConfig, large_bound: float) -> float:
    hi = large_bound / 2
    return gm.bracket_root(lambda e: float(g_function(cfg, 0.5, e)), 0.0, hi, "eta0_bar (phi)")


def eta_r_bar(cfg: MarketConfig, q: float) -> float:
    """Root of g in eta_i on [0, 1-q]; clamped to the interval ends when g keeps one sign."""
    hi = 1.0 - q
    if hi <= 0:
        return 0.0
    roots = gm.find_roots(lambda x: g_function(cfg, x), 0.0, hi)
    if roots:
        return roots[0]
    return hi if float(g_function(cfg, hi)) < 0 else 0.0


def profit_gap_early_late(cfg: MarketConfig, eta_i: float) -> float:
    """First-mover equilibrium profit minus delayed-mover equilibrium profit at share eta_i."""
    c2 = cfg.with_duopoly_share(eta_i)
    return equilibrium_profit_formulas(c2, 0, "rollover-leader") - equilibrium_profit_formulas(c2, 0, "rollover-follower")


def eta_r_tilde(cfg: MarketConfig, q: float) -> float:
    """Share at which leading and lagging pay the same; NaN when both kappas cannot exceed 1."""
    lo, hi = q, 1.0 - q
    if not hi > lo:
        return math.nan
    eps = 1e-9 * (hi - lo)
    fn = np.vectorize(lambda x: profit_gap_early_late(cfg, float(x)))
    roots = gm.find_roots(fn, lo + eps, hi - eps)
    if roots:
        return roots[0]
    return hi if profit_gap_early_late(cfg, 0.5) > 0 else lo


def compute_thresholds(cfg: MarketConfig) -> RegimeThresholds:
    """Share-independent thresholds for the scenario's eta0."""
    m = reduction_margin(cfg)
    if m <= 0:
        return RegimeThresholds(m, 0.0, math.nan, math.nan, math.nan, math.nan, math.nan)
    large = 2 * cfg.S * m / (cfg.lam0 * cfg.costs.ec_heavy_rollover)
    e0bar = eta0_bar(cfg, large)
    q = cfg.eta0 / large
    notes = []
    if cfg.eta0 >= large:
        return RegimeThresholds(m, large, e0bar, math.nan, math.nan, math.nan, q)
    ebar = eta_r_bar(cfg, q)
    etil = eta_r_tilde(cfg, q)
    term = min(max(1 - ebar, q), min(ebar, 1 - q))
    under = term if math.isnan(etil) else max(1 - etil, term)
    if not 0 <= under <= 0.5:
        notes.append(f"eta_r_underline={under:.6g} outside [0, 0.5]; clamped")
        under = min(0.5, _clamp01(under))
    if e0bar > large / 2:
        notes.append("eta0_bar exceeds half the large-regime bound")
    return RegimeThresholds(m, large, e0bar, ebar, under, etil, q, tuple(notes))


# -- classification ----------------------------------------------------------------

def _delay_profile(cfg: MarketConfig, leader: int) -> tuple:
    lag = 1 - leader
    times = [0.0, 0.0]
    times[lag] = gm.delay_after(cfg, kappa(cfg, lag))
    return tuple(times)


def theorem_profile(cfg: MarketConfig, th: RegimeThresholds) -> tuple[str, str, tuple]:
    """(label, family, times) exactly as the closed-form classification states."""
    e_i = cfg.shares[0]
    if th.margin <= 0:
        return "mild-reduction-immediate", "mild", (0.0, 0.0)
    if cfg.eta0 >= th.large_bound:
        return "large-eta0-immediate", "large", (0.0, 0.0)
    if cfg.eta0 > th.eta0_bar:
        u = th.eta_r_underline
        if e_i < u:
            return "medium-asymmetric", "medium", _delay_profile(cfg, 0)
        if e_i > 1 - u:
            return "medium-asymmetric", "medium", _delay_profile(cfg, 1)
        return "medium-both-immediate", "medium", (0.0, 0.0)
    b = th.eta_r_bar
    if b < e_i < 1 - b:
        return "small-no-upgrade", "small", (NEVER, NEVER)
    return "small-asymmetric", "small", _delay_profile(cfg, 0 if e_i <= 0.5 else 1)


def fallback_profiles(cfg: MarketConfig) -> list:
    small = 0 if cfg.shares[0] <= cfg.shares[1] else 1
    return [(0.0, 0.0), _delay_profile(cfg, small), _delay_profile(cfg, 1 - small), (NEVER, NEVER)]


def check_supported(cfg: MarketConfig):
    c = cfg.costs
    if c.ec_heavy >= c.ec_heavy_rollover * (2 * cfg.lam + cfg.S) / cfg.S:
        raise gm.UnsupportedRegimeError(
            f"EC_h={c.ec_heavy:.6g} is not below EC_h^r (2 lambda + S)/S = "
            f"{c.ec_heavy_rollover * (2 * cfg.lam + cfg.S) / cfg.S:.6g}; closed-form classification does not cover it")


def classify_and_solve(cfg: MarketConfig, thresholds: RegimeThresholds | None = None,
                       certify: bool = False, cert_step: float = gm.DEFAULT_CERT_STEP) -> gm.EquilibriumResult:
    if cfg.m != 2:
        raise ConfigError("rollover classification is for two providers")
    check_supported(cfg)
    th = compute_thresholds(cfg) if thresholds is None else thresholds
    label, family, t_times = theorem_profile(cfg, th)
    times, consistent, notes = gm.select_equilibrium(GAME, cfg, t_times, fallback_profiles(cfg))
    regime = gm.structural_label(family, times) if family in ("medium", "small") else label
    prof = tuple(profit_rollover(cfg, k, times[k], times[1 - k]).total for k in (0, 1))
    res = gm.EquilibriumResult(times, prof, regime, th, "rollover", label, t_times, consistent,
                               notes=list(th.notes) + notes)
    if certify:
        res.certificate = gm.certify_duopoly(GAME, cfg, times, step=cert_step)
    return res


def certify(cfg: MarketConfig, times, step: float = gm.DEFAULT_CERT_STEP, t_max=None) -> gm.NashCertificate:
    return gm.certify_duopoly(GAME, cfg, times, step=step, t_max=t_max)


# -- profit threshold ------------------------------------------------------------

GAIN_RTOL = 1e-9

def equilibrium_gain(cfg: MarketConfig, eta_i: float, thresholds: RegimeThresholds | None = None) -> float:
    """Provider 0's equilibrium profit minus its no-upgrade profit at share eta_i."""
    c2 = cfg.with_duopoly_share(eta_i)
    res = classify_and_solve(c2, thresholds)
    return res.profits[0] - profit_rollover_never(c2, 0)


def profit_threshold(cfg: MarketConfig, i: int = 0, n_scan: int = gm.SCAN_POINTS) -> float:
    """Largest share at which upgrading in equilibrium still gains money.

    Scans eta_i over [0, 1] (rival holds 1 - eta_i).  Gains within a relative
    1e-9 of zero (the no-upgrade band, where nothing changes) count as neither
    gain nor loss; the nonzero signs must turn from gain to loss exactly once,
    otherwise ``SolverError`` is raised.  The boundary is refined by bisection
    on "gain is positive".
    """
    if cfg.eta0 >= 1:
        raise ConfigError("profit threshold needs eta0 < 1")
    th = compute_thresholds(cfg)
    tol = GAIN_RTOL * profit_rollover_never(cfg.with_duopoly_share(1.0), 0)
    etas = np.linspace(0.0, 1.0, n_scan + 1)
    gains = np.array([equilibrium_gain(cfg, float(e), th) for e in etas])
    sign = np.where(gains > tol, 1, np.where(gains < -tol, -1, 0))
    nz = np.nonzero(sign)[0]
    flips = nz[:-1][sign[nz[:-1]] != sign[nz[1:]]]
    if len(flips) > 1:
        where = ", ".join(f"{etas[k]:.4g}" for k in flips)
        raise gm.SolverError(f"profit gain changes sign {len(flips)} times (near eta_i = {where})")
    if len(flips) == 1 and sign[flips[0]] < 0:
        raise gm.SolverError("profit gain turns from loss to gain as the share grows")
    positive = np.nonzero(sign > 0)[0]
    if len(positive) == 0:
        return 0.0
    k = positive[-1]
    if k == n_scan:
        return 1.0
    lo, hi = float(etas[k]), float(etas[k + 1])
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if equilibrium_gain(cfg, mid, th) > tol:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-10:
            break
    return lo
