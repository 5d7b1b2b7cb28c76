"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line."""

import math
import time

import numpy as np
import pytest

from dataplan_timing import costs as cm
from dataplan_timing import game as gm
from dataplan_timing import multi as mu
from dataplan_timing import profits as pf
from dataplan_timing import rollover as ro
from dataplan_timing import shared as sh
from dataplan_timing import simulate as sm
from dataplan_timing.cli import default_config_path
from dataplan_timing.config import load_config
from dataplan_timing.dynamics import NEVER

from factories import (BRANCHES, TABLE_SHARES, direct_cfg, family_cfg, multi_cfg, rollover_cfg, shared_cfg,
                       symmetric_cfg, table_cfg, usage_cfg)


def random_plan(rng):
    plan = cm.TariffPlan(float(rng.uniform(1, 50)), float(rng.uniform(1, 5)), float(rng.uniform(1, 20)))
    Dh = float(rng.uniform(1.05, 8) * plan.B)
    Dl = float(rng.uniform(0.1, 1) * plan.B)
    return plan, Dh, Dl


def random_time(rng):
    u = rng.random()
    return 0.0 if u < 0.15 else NEVER if u < 0.3 else float(rng.uniform(0, 12))


def test_c01_cost_closed_forms(criterion):
    rng = np.random.default_rng(101)
    start = time.perf_counter()
    worst = 0.0
    for _ in range(50):
        plan, Dh, Dl = random_plan(rng)
        heavy, light = cm.UsageModel("heavy", 0.0, Dh), cm.UsageModel("light", 0.0, Dl)
        pairs = [
            (cm.closed_form_traditional(plan, Dh), cm.expected_cost_traditional(plan, heavy)),
            (cm.closed_form_rollover(plan, Dh), cm.expected_cost_rollover(plan, heavy)),
            (cm.closed_form_family_hh(plan, Dh), cm.expected_cost_family(plan, heavy, heavy)),
            (cm.closed_form_family_hl(plan, Dh, Dl), cm.expected_cost_family(plan, heavy, light)),
        ]
        worst = max(worst, max(abs(a - b) / abs(b) for a, b in pairs))
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-8 and elapsed < 5
    criterion(1, "closed-form costs match quadrature", ok, f"max rel err {worst:.2e}, {elapsed:.2f} s")
    assert ok


def test_c02_rollover_dominance_and_reduction_curve(criterion):
    rng = np.random.default_rng(102)
    start = time.perf_counter()
    dominated = True
    for _ in range(100):
        plan, Dh, _ = random_plan(rng)
        u = cm.UsageModel("heavy", float(rng.uniform(0, 0.9) * plan.B), Dh)
        dominated &= cm.expected_cost_rollover(plan, u) <= cm.expected_cost_traditional(plan, u) + 1e-12
    ds = np.linspace(3.0, 30.0, 271)
    red = np.asarray(cm.cost_reduction_curve(cm.TariffPlan(20.0, 3.0, 10.0), ds))
    steps = np.sign(np.diff(red))
    peak = int(np.argmax(red))
    unimodal = bool(np.all(steps[:peak] > 0) and np.all(steps[peak:] < 0))
    elapsed = time.perf_counter() - start
    ok = dominated and abs(red[0]) < 1e-12 and bool(np.all(red[1:] > 0)) and unimodal and elapsed < 1
    criterion(2, "rollover dominance and reduction curve shape", ok,
              f"peak at D_h={ds[peak]:.1f}, {elapsed:.2f} s")
    assert ok


def test_c03_profit_boundary_continuity(criterion):
    rng = np.random.default_rng(103)
    worst, identity = 0.0, 0.0
    for _ in range(100):
        T = float(rng.uniform(0, 20))
        for branch, cfg in ((pf.profit_rollover_branch, usage_cfg(rng)), (pf.profit_shared_branch, shared_cfg(rng))):
            for i in (0, 1):
                early, late = branch(cfg, i, T, T, "early"), branch(cfg, i, T, T, "late")
                worst = max(worst, abs(early - late) / abs(early))
        cfg = shared_cfg(rng)
        closed = pf.profit_shared_branch(cfg, 0, 0.0, 0.0, "early")
        identity = max(identity, abs(closed - pf.equilibrium_profit_formulas(cfg, 0, "shared-both-immediate")) / abs(closed))
    ok = worst <= 1e-9 and identity <= 1e-12
    criterion(3, "early and late branches agree on the diagonal", ok,
              f"max rel gap {worst:.2e}, simultaneous identity {identity:.2e}")
    assert ok


def test_c04_profit_closed_form_vs_quadrature(criterion):
    rng = np.random.default_rng(104)
    start = time.perf_counter()
    worst = 0.0
    for _ in range(50):
        cfg = usage_cfg(rng, s_range=(0.3, 1.0))
        t_i, t_j = random_time(rng), random_time(rng)
        for plan in ("rollover", "shared"):
            for i, (a, b) in enumerate(((t_i, t_j), (t_j, t_i))):
                got = pf.profit(cfg, i, a, b, plan)
                want = pf.quadrature_profit_oracle(cfg, i, a, b, plan)
                worst = max(worst, abs(got - want) / abs(want))
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-7 and elapsed < 30
    criterion(4, "profits match quadrature", ok, f"max rel err {worst:.2e}, {elapsed:.1f} s")
    assert ok


def test_c05_closed_form_vs_monte_carlo(criterion):
    rng = np.random.default_rng(105)
    start = time.perf_counter()
    zs = []
    for k in range(10):
        cfg = usage_cfg(rng, n=2000.0, s_range=(0.5, 1.0))
        t_i = float(rng.uniform(0, 3))
        t_j = float(rng.choice([0.0, float(rng.uniform(0, 4)), NEVER]))
        for plan, fn in (("rollover", sm.simulate_rollover), ("shared", sm.simulate_shared)):
            res = fn(cfg, sm.SimConfig(seed=k, replications=200), t_i, t_j)
            for i, (a, b) in enumerate(((t_i, t_j), (t_j, t_i))):
                zs.append((res.mean[i] - pf.profit(cfg, i, a, b, plan)) / res.se[i])
    elapsed = time.perf_counter() - start
    worst = float(np.max(np.abs(zs)))
    ok = worst <= 3 and elapsed < 300
    criterion(5, "Monte Carlo within 3 standard errors", ok, f"max |z| {worst:.2f} over {len(zs)}, {elapsed:.0f} s")
    assert ok


def test_c06_best_response_vs_grid(criterion):
    rng = np.random.default_rng(106)
    start = time.perf_counter()
    step, mismatches, checked = 1e-3, [], 0
    for _ in range(50):
        cfg = rollover_cfg(rng)
        for rival in (0.0, float(rng.uniform(0.1, 8))):
            for i in (0, 1):
                t_br = ro.best_response_rollover(cfg, i, rival)
                v_br = pf.profit(cfg, i, t_br, rival)
                grid = gm.deviation_grid(gm.default_t_max(cfg, [rival]), step)
                vals = pf.profit_curve(cfg, i, grid, rival)
                k = int(np.argmax(vals))
                t_grid, v_grid = float(grid[k]), float(vals[k])
                close = t_br == t_grid or abs(t_br - t_grid) <= step
                tie = abs(v_br - v_grid) <= 1e-9 * abs(v_grid)
                checked += 1
                if v_br < v_grid - 1e-10 * abs(v_grid) or not (close or tie):
                    mismatches.append((t_br, t_grid))
    elapsed = time.perf_counter() - start
    ok = not mismatches and elapsed < 120
    criterion(6, "best response matches exhaustive grid", ok,
              f"{checked - len(mismatches)}/{checked} agree, {elapsed:.1f} s")
    assert ok, mismatches[:5]


def _spanning(make, solve, rng, n=30, families=("mild", "large", "medium", "small")):
    """Draw configs until every regime family holds its share of the n slots."""
    quota = math.ceil(n / len(families))
    picked, counts = [], dict.fromkeys(families, 0)
    while len(picked) < n:
        cfg = make(rng)
        fam = solve(cfg).theorem_regime.split("-")[0]
        if counts[fam] < quota:
            counts[fam] += 1
            picked.append(cfg)
    return picked, counts


def test_c07_equilibria_certified(criterion):
    rng = np.random.default_rng(107)
    failures, details = [], []
    for name, make, solve in (("rollover", rollover_cfg, ro.classify_and_solve),
                              ("shared", shared_cfg, sh.classify_and_solve_shared)):
        cfgs, counts = _spanning(make, solve, rng)
        for cfg in cfgs:
            res = solve(cfg, certify=True)
            if not res.certificate.passed:
                failures.append((name, res.times))
        details.append(f"{name} {counts}")
    patterns = set()
    for _ in range(30):
        res = mu.solve_multi(multi_cfg(rng))
        patterns.add(res.regime)
        if not res.certificate.passed:
            failures.append(("multi", res.times))
    details.append(f"multi patterns {len(patterns)}")
    ok = not failures
    criterion(7, "returned equilibria pass the deviation test", ok, "; ".join(details))
    assert ok, failures


def test_c08_trivial_branches(criterion):
    rng = np.random.default_rng(108)
    bad = []
    for _ in range(20):
        cfg = rollover_cfg(rng)
        mild = cfg.with_costs(ec_heavy=float(rng.uniform(1, 1 + cfg.lam / cfg.S)) * cfg.costs.ec_heavy_rollover)
        if ro.classify_and_solve(mild).times != (0.0, 0.0):
            bad.append("rollover mild")
        base = shared_cfg(rng)
        c = base.costs
        al = base.alpha
        target = float(rng.uniform(0.5, (base.lam + base.S) / base.S)) * c.agg_e
        ec_h = (target - 2 * al * (1 - al) * c.ec_light) / (2 * al)
        fam = base.replace(costs=cm.CostSummary.from_family(al, c.ec_light, ec_h, ec_h, c.ec_family_hh,
                                                            c.ec_family_hl))
        if fam.costs.agg_d > fam.costs.agg_e * (fam.lam + fam.S) / fam.S or \
                sh.classify_and_solve_shared(fam).times != (0.0, 0.0):
            bad.append("shared mild")
    never = 0
    while never < 20:
        cfg = rollover_cfg(rng).replace(eta0=0.0)
        th = ro.compute_thresholds(cfg)
        if th.margin <= 0 or not th.eta_r_bar < 0.5:
            continue
        e = float(rng.uniform(th.eta_r_bar, 1 - th.eta_r_bar))
        never += 1
        if ro.classify_and_solve(cfg.with_duopoly_share(e)).times != (NEVER, NEVER):
            bad.append("no new users")
    ok = not bad
    criterion(8, "trivial branches are exact", ok, f"60 configs, {len(bad)} wrong")
    assert ok, bad


def test_c09_profit_threshold(criterion):
    rng = np.random.default_rng(109)
    bad, n = [], 0
    while n < 20:
        cfg = rollover_cfg(rng)
        c = cfg.costs
        if c.ec_heavy <= c.ec_heavy_rollover * (cfg.lam + cfg.S) / cfg.S or cfg.eta0 >= 1:
            continue
        n += 1
        tol = ro.GAIN_RTOL * pf.profit_rollover_never(cfg.with_duopoly_share(1.0), 0)
        try:
            th = ro.profit_threshold(cfg)
        except gm.SolverError as e:
            bad.append(str(e))
            continue
        below, above = cfg.with_duopoly_share(max(th - 1e-4, 0.0)), cfg.with_duopoly_share(min(th + 1e-4, 1.0))
        certified = all(ro.classify_and_solve(x, certify=True, cert_step=1e-2).certificate.passed
                        for x in (below, above))
        edges = ro.equilibrium_gain(cfg, 0.01) > 0 and ro.equilibrium_gain(cfg, 0.99) < 0
        bracket = ro.equilibrium_gain(cfg, th - 1e-4) > tol and ro.equilibrium_gain(cfg, th + 1e-4) <= tol
        if not (certified and edges and bracket):
            bad.append((th, certified, edges, bracket))
    ok = not bad
    criterion(9, "single certified profit threshold", ok, f"{20 - len(bad)}/20")
    assert ok, bad


def test_c10_zero_new_user_branches(criterion):
    bad = []
    for name, args in BRANCHES.items():
        cfg = family_cfg(*args, eta0=0.0)
        z = sh.zero_new_user_conditions(cfg)
        expect = name == "both-mild" or name.endswith(" holds")
        times = sh.classify_and_solve_shared(cfg).times
        want = (0.0, 0.0) if expect else (NEVER, NEVER)
        if z.branch != name.split()[0] or z.branch_holds is not expect or not z.consistent or times != want:
            bad.append(name)
    ok = not bad
    criterion(10, "zero-new-user branch logic", ok, f"{len(BRANCHES) - len(bad)}/{len(BRANCHES)} cases")
    assert ok, bad


TABLE_GRID = np.linspace(3.25, 19.0, 64)
STAGES = ["0,0,0", "0,0,late", "0,late,later", "inf,inf,inf"]


@pytest.fixture(scope="module")
def table_sweep():
    return mu.cost_sweep(table_cfg(3.0), TABLE_GRID, certify=False)


def test_c11_table_pattern(criterion, table_sweep):
    order = [STAGES.index(r.pattern) if r.pattern in STAGES else -1 for r in table_sweep]
    ordered = -1 not in order and order == sorted(order) and set(order) == set(range(len(STAGES)))
    reps = {r.pattern: r.ec_heavy for r in table_sweep}
    certified = all(mu.certify_multi(table_cfg(ec), next(r.times for r in table_sweep if r.ec_heavy == ec)).passed
                    for ec in reps.values())
    low = mu.solve_multi(table_cfg(5.5, eta0=0.1))
    high = mu.solve_multi(table_cfg(5.5, eta0=0.3))
    largest = int(np.argmax(TABLE_SHARES))
    delayed = low.times[largest] > 0 and all(t == 0 for k, t in enumerate(low.times) if k != largest) \
        and all(t == 0 for t in high.times)
    ok = ordered and certified and delayed
    cross = ", ".join(f"{a} -> {b} by {ec:.2f}" for ec, a, b in mu.crossovers(table_sweep))
    criterion(11, "multi-provider progression as costs rise", ok, cross)
    assert ok, [r.pattern for r in table_sweep]


@pytest.mark.xfail(strict=True, reason="the two later providers never upgrade together at a positive time")
def test_c11_table_late_together_stage(criterion, table_sweep):
    fine = mu.cost_sweep(table_cfg(3.0), np.linspace(8.0, 17.5, 39), certify=False)
    seen = any(r.pattern == "0,late,late" for r in list(table_sweep) + fine)
    criterion(11, "late-together stage of the progression", seen,
              "profit kink at a rival's upgrade is convex, so joining it is never a best response")
    assert seen


@pytest.mark.parametrize("m", [2, 3, 5])
def test_c12_symmetric_immediate_condition(criterion, m):
    boundary = 3.0 * (1.8 + 0.3 * 0.36)
    bad = []
    for ec in boundary + np.array([-0.5, -0.05, -1e-3, 1e-3, 0.05, 0.5]):
        cfg = symmetric_cfg(m, float(ec))
        res = mu.solve_multi(cfg)
        if not res.certificate.passed or all(t == 0 for t in res.times) != mu.symmetric_immediate_condition(cfg):
            bad.append((float(ec), res.times))
    ok = not bad
    criterion(12, f"symmetric immediate-upgrade condition, {m} providers", ok, f"boundary {boundary:.4f}")
    assert ok, bad


def test_c13_symmetry_and_monotone_thresholds(criterion):
    base = load_config(default_config_path()).market
    shares = np.linspace(0, 1, 21)
    asym = []
    for plan, solve, thresholds in (("rollover", ro.classify_and_solve, ro.compute_thresholds),
                                    ("shared", sh.classify_and_solve_shared, sh.compute_shared_thresholds)):
        for eta0 in np.linspace(0, 0.6, 21):
            cfg = base.replace(eta0=float(eta0))
            th = thresholds(cfg)
            for e in shares:
                a = solve(cfg.with_duopoly_share(float(e)), th)
                b = solve(cfg.with_duopoly_share(float(1 - e)), th)
                if a.regime != b.regime or not np.allclose(a.times, b.times[::-1], rtol=1e-9, atol=0):
                    asym.append((plan, float(eta0), float(e)))
    rollover = direct_cfg(8.0, 3.0, eta0=0.0)
    top_r = ro.compute_thresholds(rollover.replace(eta0=0.0)).eta0_bar
    bars = [ro.compute_thresholds(rollover.replace(eta0=float(x))).eta_r_bar for x in np.linspace(0, top_r, 21)]
    shared = family_cfg(*BRANCHES["never-holds"])
    top_s = sh.compute_shared_thresholds(shared).small_regime_top
    hats = [sh.compute_shared_thresholds(shared.replace(eta0=float(x))).eta_s_hat for x in np.linspace(0, top_s, 21)]
    mono = bool(np.all(np.diff(bars) >= -1e-12) and np.all(np.diff(hats) >= -1e-12))
    ok = not asym and mono
    criterion(13, "mirror symmetry and monotone share bands", ok,
              f"{len(asym)} asymmetric cells; band {bars[0]:.3f}->{bars[-1]:.3f}, {hats[0]:.3f}->{hats[-1]:.3f}")
    assert ok, asym[:5]
