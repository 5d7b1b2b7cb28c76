import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dataplan_timing import game as gm
from dataplan_timing import profits as pf
from dataplan_timing import shared as sh
from dataplan_timing.costs import CostSummary
from dataplan_timing.dynamics import NEVER

from factories import BRANCHES, family_cfg, shared_cfg

seeds = st.integers(0, 2**32 - 1)


def test_kappa_examples():
    cfg = shared_cfg(np.random.default_rng(0))
    assert sh.kappa_shared(cfg.with_duopoly_share(0.0), 0) == 0
    # aggregate costs exactly at the mild boundary: kappa vanishes for a monopolist
    al, lam, S = 0.4, 1.0, 1.0
    E = al**2 * 60 + 2 * al * (1 - al) * 35
    ec_h = (E * (lam + S) / S - 2 * al * (1 - al) * 20) / (2 * al)
    c = family_cfg(al, ec_h, 60, 35, eta0=0.3, shares=(1.0, 0.0))
    assert c.costs.agg_d == pytest.approx(c.costs.agg_e * (lam + S) / S, rel=1e-14)
    assert sh.kappa_shared(c, 0) == pytest.approx(0.0, abs=1e-12)


@settings(max_examples=40)
@given(seed=seeds)
def test_kappa_sign_matches_late_slope(seed):
    cfg = shared_cfg(np.random.default_rng(seed))
    for i in (0, 1):
        k = sh.kappa_shared(cfg, i)
        if not math.isfinite(k) or abs(k - 1) < 1e-3:
            continue
        h = 1e-6
        slope = (pf.profit_shared_branch(cfg, i, h, 0.0, "late") - pf.profit_shared_branch(cfg, i, 0.0, 0.0, "late")) / h
        assert (slope > 0) == (k > 1)


@settings(max_examples=30)
@given(seed=seeds)
def test_immediate_share_bound_is_the_slope_root(seed):
    cfg = shared_cfg(np.random.default_rng(seed))
    r = sh.immediate_share_bound(cfg)
    if not 0.01 < r < 0.99 or cfg.eta0 == 0:
        return
    h = 1e-7
    for e, sign in ((r - 5e-3, -1), (r + 5e-3, 1)):
        c = cfg.with_duopoly_share(e)
        slope = (pf.profit_shared_branch(c, 0, h, 0.0, "late") - pf.profit_shared_branch(c, 0, 0.0, 0.0, "late")) / h
        assert np.sign(slope) == sign
    assert sh.kappa_shared(cfg.with_duopoly_share(r), 0) == pytest.approx(1.0, rel=1e-9)


def test_early_slope_is_the_derivative():
    cfg = shared_cfg(np.random.default_rng(5))
    b, h = 2.5, 1e-6
    for a in (0.1, 1.0, 2.0):
        fd = (pf.profit_shared_branch(cfg, 0, a + h, b, "early") - pf.profit_shared_branch(cfg, 0, a - h, b, "early")) / (2 * h)
        assert float(sh.early_slope_shared(cfg, 0, a, b)) == pytest.approx(fd, rel=1e-5, abs=1e-6)


def test_mild_family_reduction_upgrades_immediately():
    rng = np.random.default_rng(1)
    for _ in range(20):
        base = shared_cfg(rng)
        al, lam, S = base.alpha, base.lam, base.S
        c = base.costs
        E = c.agg_e
        target = float(rng.uniform(1.0, (lam + S) / S)) * E
        ec_h = (target - 2 * al * (1 - al) * c.ec_light) / (2 * al)
        cfg = base.replace(costs=CostSummary.from_family(al, c.ec_light, ec_h, ec_h, c.ec_family_hh, c.ec_family_hl))
        res = sh.classify_and_solve_shared(cfg)
        assert res.times == (0.0, 0.0) and res.regime == "mild-reduction-immediate"


def test_no_new_users_without_small_regime_still_upgrade():
    cfg = family_cfg(*BRANCHES["both-mild"], eta0=0.0)
    th = sh.compute_shared_thresholds(cfg)
    assert th.small_bound_s <= 0
    res = sh.classify_and_solve_shared(cfg, certify=True)
    assert res.times == (0.0, 0.0) and res.certificate.passed


def test_unsupported_reduction_is_rejected():
    al = 0.5
    cfg = family_cfg(al, 400.0, 60.0, 35.0)
    assert cfg.costs.agg_d >= cfg.costs.agg_e * 5
    with pytest.raises(gm.UnsupportedRegimeError):
        sh.classify_and_solve_shared(cfg)


@settings(max_examples=30)
@given(seed=seeds)
def test_classified_profiles_are_certified(seed):
    cfg = shared_cfg(np.random.default_rng(seed))
    res = sh.classify_and_solve_shared(cfg, certify=True, cert_step=1e-2)
    assert res.certificate.passed, (res.times, res.certificate)
    assert gm.is_exact_nash(sh.GAME, cfg, res.times)


@settings(max_examples=30)
@given(seed=seeds)
def test_mirrored_shares_mirror_the_equilibrium(seed):
    cfg = shared_cfg(np.random.default_rng(seed))
    if cfg.shares[0] == cfg.shares[1]:
        return
    a = sh.classify_and_solve_shared(cfg)
    b = sh.classify_and_solve_shared(cfg.with_shares(cfg.shares[::-1]))
    assert b.times == pytest.approx(a.times[::-1], rel=1e-9)
    assert b.regime == a.regime


def test_no_upgrade_band_grows_with_new_users():
    cfg = family_cfg(*BRANCHES["never-holds"], eta0=0.0)
    top = sh.compute_shared_thresholds(cfg).small_regime_top
    assert top > 0
    vals = [sh.compute_shared_thresholds(cfg.replace(eta0=float(e))).eta_s_hat for e in np.linspace(0, top, 21)]
    assert np.all(np.diff(vals) >= -1e-9)


@pytest.mark.parametrize("name", sorted(BRANCHES))
def test_zero_new_user_branches(name):
    cfg = family_cfg(*BRANCHES[name], eta0=0.0)
    z = sh.zero_new_user_conditions(cfg)
    assert z.branch == name.split()[0]
    expect = name == "both-mild" or name.endswith(" holds")
    assert z.branch_holds is expect
    assert z.consistent and z.master_inequality is expect
    res = sh.classify_and_solve_shared(cfg)
    if expect:
        assert res.times == (0.0, 0.0)
    else:
        assert res.times == (NEVER, NEVER)


@given(alpha=st.floats(0.02, 0.98))
def test_zero_new_user_branch_agrees_with_master_inequality(alpha):
    for _, ec_h, ec_hh, ec_hl in BRANCHES.values():
        z = sh.zero_new_user_conditions(family_cfg(alpha, ec_h, ec_hh, ec_hl))
        if abs(alpha - z.alpha_threshold) > 1e-9:
            assert z.consistent
