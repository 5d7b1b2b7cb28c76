"""Shared-plan timing game: thresholds, classification and the zero-new-user conditions."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import game as gm
from .dynamics import NEVER, ConfigError, MarketConfig
from .profits import _agg, equilibrium_profit_formulas, profit_shared


def kappa_shared_from_share(cfg: MarketConfig, eta, eta0=None):
    D, E = _agg(cfg)
    eta0 = cfg.eta0 if eta0 is None else eta0
    eta = np.asarray(eta, float)
    num = (D - E) * eta**2 - E * cfg.lam / cfg.S * eta
    den = 0.5 * E * eta0 * cfg.lam0 / cfg.S
    if den == 0:
        out = np.where(num > 0, np.inf, 0.0)
        return out if np.ndim(out) else float(out)
    return num / den


def kappa_shared(cfg: MarketConfig, i: int) -> float:
    return float(kappa_shared_from_share(cfg, cfg.shares[i]))


def early_slope_shared(cfg: MarketConfig, i: int, a, b: float):
    """d/dt_i of the early-upgrade shared profit at t_i = a <= t_j = b."""
    j = cfg.other(i)
    S, lam, lam0 = cfg.S, cfg.lam, cfg.lam0
    e_i, e_j, N, N0 = cfg.shares[i], cfg.shares[j], cfg.n, cfg.n0
    D, E = _agg(cfg)
    g, g0 = 1 / S - 1 / (lam + S), 1 / S - 1 / (lam0 + S)
    A = E * N * g + e_i**2 * N * E / (lam + S) - e_i * N * D / S + e_i * e_j * N * D / (lam + S) + N0 * E * g0
    B = (1 - e_i) * N * E * g
    C = 0.5 * N0 * E * g0
    a = np.asarray(a, float)
    return (-S * A * np.exp(-S * a)
            - lam * B * np.exp(lam * a - (lam + S) * b)
            - lam0 * C * np.exp(lam0 * a - (lam0 + S) * b))


GAME = gm.TimingGame("shared", kappa_shared, early_slope_shared)


def best_response_shared(cfg: MarketConfig, i: int, t_j: float) -> float:
    return gm.best_response(GAME, cfg, i, t_j)


# -- thresholds -------------------------------------------------------------------

def immediate_share_bound(cfg: MarketConfig, eta0=None) -> float:
    """Largest share for which upgrading at 0 against a rival at 0 is a best response."""
    D, E = _agg(cfg)
    eta0 = cfg.eta0 if eta0 is None else eta0
    if D <= E:
        return math.inf
    x = E * cfg.lam / cfg.S
    return (x + math.sqrt(x * x + 2 * (D - E) * E * eta0 * cfg.lam0 / cfg.S)) / (2 * (D - E))


def v_function(cfg: MarketConfig, eta_i, eta0=None):
    """Leader's normalized profit slope at t_i = 0 when the rival waits its optimal delay."""
    D, E = _agg(cfg)
    eta0 = cfg.eta0 if eta0 is None else eta0
    S, lam, lam0, gap = cfg.S, cfg.lam, cfg.lam0, cfg.rates.gap
    eta_i = np.asarray(eta_i, float)
    eta_j = 1 - eta_i
    k_j = kappa_shared_from_share(cfg, eta_j, eta0)
    with np.errstate(divide="ignore"):
        inv = np.where(np.isinf(k_j), 0.0, 1.0 / np.where(k_j > 0, k_j, 1.0))
    return (D * eta_i * (lam / (lam + S) + eta_i * S / (lam + S))
            - E * (lam / (lam + S) + eta_i**2 * S / (lam + S))
            - E * eta0 * lam0 / (lam0 + S)
            - eta_j * E * (lam / S - lam / (lam + S)) * inv ** ((lam + S) / gap)
            - 0.5 * E * eta0 * lam0**2 / (S * (lam0 + S)) * inv ** ((lam0 + S) / gap))


def chi_function(cfg: MarketConfig, eta0):
    return np.array([float(v_function(cfg, 0.5, e)) for e in np.atleast_1d(eta0)])


@dataclass(frozen=True)
class SharedThresholds:
    mild: bool                     # D <= E (lam+S)/S
    large_bound_s: float
    eta0_bar_s: float
    small_bound_s: float
    small_regime_top: float        # min of the clamped bounds; small regime is eta0 below it
    eta_s_underline: float
    eta_s_hat: float
    eta_s_tilde: float
    r: float                       # immediate-upgrade share bound
    notes: tuple = ()

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in ("large_bound_s", "eta0_bar_s", "small_bound_s", "small_regime_top",
                                             "eta_s_underline", "eta_s_hat", "eta_s_tilde", "r")}


def eta0_bar_s(cfg: MarketConfig, small_bound: float) -> float:
    """Root of chi on [0, small_bound]; NaN if the domain is empty, clamped at its ends otherwise."""
    if small_bound <= 0:
        return math.nan
    f0 = float(v_function(cfg, 0.5, 0.0))
    f1 = float(v_function(cfg, 0.5, small_bound))
    if f0 <= 0:
        return 0.0
    if f1 > 0:
        return small_bound
    return gm.bracket_root(lambda e: float(v_function(cfg, 0.5, e)), 0.0, small_bound, "eta0_bar_s (chi)")


def eta_s_hat(cfg: MarketConfig, r: float) -> float:
    hi = 1.0 - r
    if hi <= 0:
        return 0.0
    roots = gm.find_roots(lambda x: v_function(cfg, x), 0.0, hi)
    if roots:
        return roots[0]
    return hi if float(v_function(cfg, hi)) < 0 else 0.0


def profit_gap_early_late_shared(cfg: MarketConfig, eta_i: float) -> float:
    c2 = cfg.with_duopoly_share(eta_i)
    return equilibrium_profit_formulas(c2, 0, "shared-leader") - equilibrium_profit_formulas(c2, 0, "shared-follower")


def eta_s_tilde(cfg: MarketConfig, r: float) -> float:
    lo, hi = r, 1.0 - r
    if not hi > lo:
        return math.nan
    eps = 1e-9 * (hi - lo)
    fn = np.vectorize(lambda x: profit_gap_early_late_shared(cfg, float(x)))
    roots = gm.find_roots(fn, lo + eps, hi - eps)
    if roots:
        return roots[0]
    return hi if profit_gap_early_late_shared(cfg, 0.5) > 0 else lo


def compute_shared_thresholds(cfg: MarketConfig) -> SharedThresholds:
    D, E = _agg(cfg)
    S, lam, lam0 = cfg.S, cfg.lam, cfg.lam0
    mild = D * S <= E * (lam + S)
    large = 2 * (D * S - E * (lam + S)) / (E * lam0)
    small = (D * S - E * (2 * lam + S)) / (2 * E * lam0)
    if mild or cfg.eta0 >= large:
        return SharedThresholds(mild, large, math.nan, small, 0.0, math.nan, math.nan, math.nan,
                                immediate_share_bound(cfg))
    e0bar = eta0_bar_s(cfg, small)
    top = min(max(0.0, e0bar if not math.isnan(e0bar) else 0.0), max(0.0, small))
    r = immediate_share_bound(cfg)
    hat = eta_s_hat(cfg, r)
    til = eta_s_tilde(cfg, r)
    term = min(max(1 - hat, r), min(hat, 1 - r))
    under = term if math.isnan(til) else max(1 - til, term)
    notes = []
    if not 0 <= under <= 0.5:
        notes.append(f"eta_s_underline={under:.6g} outside [0, 0.5]; clamped")
        under = min(0.5, max(0.0, under))
    return SharedThresholds(mild, large, e0bar, small, top, under, hat, til, r, tuple(notes))


# -- classification -----------------------------------------------------------------

def _delay_profile(cfg: MarketConfig, leader: int) -> tuple:
    lag = 1 - leader
    times = [0.0, 0.0]
    times[lag] = gm.delay_after(cfg, kappa_shared(cfg, lag))
    return tuple(times)


def theorem_profile_shared(cfg: MarketConfig, th: SharedThresholds) -> tuple[str, str, tuple]:
    e_i = cfg.shares[0]
    if th.mild:
        return "mild-reduction-immediate", "mild", (0.0, 0.0)
    if cfg.eta0 >= th.large_bound_s:
        return "large-eta0-immediate", "large", (0.0, 0.0)
    if th.small_regime_top > 0 and cfg.eta0 < th.small_regime_top:
        h = th.eta_s_hat
        if h < e_i < 1 - h:
            return "small-no-upgrade", "small", (NEVER, NEVER)
        return "small-asymmetric", "small", _delay_profile(cfg, 0 if e_i <= 0.5 else 1)
    u = th.eta_s_underline
    if e_i < u:
        return "medium-asymmetric", "medium", _delay_profile(cfg, 0)
    if e_i > 1 - u:
        return "medium-asymmetric", "medium", _delay_profile(cfg, 1)
    return "medium-both-immediate", "medium", (0.0, 0.0)


def fallback_profiles_shared(cfg: MarketConfig) -> list:
    small = 0 if cfg.shares[0] <= cfg.shares[1] else 1
    return [(0.0, 0.0), _delay_profile(cfg, small), _delay_profile(cfg, 1 - small), (NEVER, NEVER)]


def check_supported_shared(cfg: MarketConfig):
    D, E = _agg(cfg)
    if D * cfg.S >= E * (4 * cfg.lam + cfg.S):
        raise gm.UnsupportedRegimeError(
            f"D={D:.6g} is not below E (4 lambda + S)/S = {E * (4 * cfg.lam + cfg.S) / cfg.S:.6g}; "
            "closed-form classification does not cover it")


def classify_and_solve_shared(cfg: MarketConfig, thresholds: SharedThresholds | None = None,
                              certify: bool = False, cert_step: float = gm.DEFAULT_CERT_STEP) -> gm.EquilibriumResult:
    if cfg.m != 2:
        raise ConfigError("shared-plan classification is for two providers")
    check_supported_shared(cfg)
    th = compute_shared_thresholds(cfg) if thresholds is None else thresholds
    label, family, t_times = theorem_profile_shared(cfg, th)
    times, consistent, notes = gm.select_equilibrium(GAME, cfg, t_times, fallback_profiles_shared(cfg))
    regime = gm.structural_label(family, times) if family in ("medium", "small") else label
    prof = tuple(profit_shared(cfg, k, times[k], times[1 - k]).total for k in (0, 1))
    res = gm.EquilibriumResult(times, prof, regime, th, "shared", label, t_times, consistent,
                               notes=list(th.notes) + notes)
    if certify:
        res.certificate = gm.certify_duopoly(GAME, cfg, times, step=cert_step)
    return res


def certify_shared(cfg: MarketConfig, times, step: float = gm.DEFAULT_CERT_STEP, t_max=None) -> gm.NashCertificate:
    return gm.certify_duopoly(GAME, cfg, times, step=step, t_max=t_max)


# -- zero new users ------------------------------------------------------------------

@dataclass(frozen=True)
class ZeroNewUserReport:
    hl_ratio: float            # (EC_h + EC_l) / EC_hl
    hh_ratio: float            # 2 EC_h / EC_hh
    bound: float               # (2 lam + S) / S
    alpha_threshold: float
    branch: str                # large-hh-mild | large-hl-mild | both-mild | never-holds
    branch_holds: bool
    master_inequality: bool    # D S <= E (2 lam + S)
    consistent: bool


def zero_new_user_conditions(cfg: MarketConfig) -> ZeroNewUserReport:
    c = cfg.costs
    S, lam, al = cfg.S, cfg.lam, cfg.alpha
    bound = (2 * lam + S) / S
    hl = (c.ec_heavy + c.ec_light) / c.ec_family_hl
    hh = 2 * c.ec_heavy / c.ec_family_hh
    den = 2 * c.ec_light + (c.ec_family_hh - 2 * c.ec_family_hl) * bound
    a_th = 2 * (c.ec_heavy + c.ec_light - bound * c.ec_family_hl) / den if den != 0 else math.nan
    if hl > bound and hh <= bound:
        branch, holds = "large-hh-mild", al >= a_th
    elif hl <= bound and hh > bound:
        branch, holds = "large-hl-mild", al <= a_th
    elif hl <= bound and hh <= bound:
        branch, holds = "both-mild", True
    else:
        branch, holds = "never-holds", False
    D, E = _agg(cfg)
    master = D * S <= E * (2 * lam + S)
    return ZeroNewUserReport(hl, hh, bound, a_th, branch, bool(holds), bool(master), bool(holds) == bool(master))
