import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate

from dataplan_timing import costs as cm
from dataplan_timing.costs import CostModelError, CostSummary, TariffPlan, UsageModel

PLAN = TariffPlan(20, 3, 10)


def heavy(D, d=0.0):
    return UsageModel("heavy", d, D)


def light(D, d=0.0):
    return UsageModel("light", d, D)


# -- independent oracles: nested quadrature split at the kinks of the overage ------

def oracle_traditional(plan, lo, hi):
    val, _ = integrate.quad(lambda u: max(u - plan.B, 0.0) / (hi - lo), lo, hi, points=[plan.B], epsabs=1e-12)
    return plan.P + plan.p * val


def oracle_rollover(plan, lo, hi):
    """Two independent months; last month's leftover extends this month's quota."""
    B = plan.B

    def inner(u):  # u: last month's usage
        q = B + max(B - u, 0.0)
        val, _ = integrate.quad(lambda v: max(v - q, 0.0), lo, hi, points=[min(max(q, lo), hi)],
                                epsabs=1e-13, epsrel=1e-12)
        return val

    pts = [B] if lo < B < hi else None
    val, _ = integrate.quad(inner, lo, hi, points=pts, epsabs=1e-12, epsrel=1e-12)
    return plan.P + plan.p * val / (hi - lo) ** 2


def oracle_family(plan, a, b):
    (la, ha), (lb, hb) = a, b
    q = 2 * plan.B

    def inner(x):
        k = min(max(q - x, lb), hb)
        val, _ = integrate.quad(lambda y: max(x + y - q, 0.0), lb, hb, points=[k], epsabs=1e-13, epsrel=1e-12)
        return val

    pts = [p for p in (q - hb, q - lb) if la < p < ha] or None
    val, _ = integrate.quad(inner, la, ha, points=pts, epsabs=1e-12, epsrel=1e-12)
    return 2 * plan.P + plan.p * val / ((ha - la) * (hb - lb))


# -- traditional ---------------------------------------------------------------------

def test_traditional_examples():
    assert cm.expected_cost_traditional(PLAN, heavy(3)) == 20
    assert cm.expected_cost_traditional(PLAN, heavy(6)) == pytest.approx(27.5, rel=1e-12)
    assert cm.expected_cost_traditional(PLAN, light(2)) == 20
    assert cm.expected_cost_traditional(PLAN, heavy(6)) == pytest.approx(oracle_traditional(PLAN, 0, 6), rel=1e-10)


def test_traditional_general_lower_bound():
    # d > 0 goes through the general integral; the d = 0 closed form would be wrong here
    got = cm.expected_cost_traditional(PLAN, heavy(7, d=2))
    assert got == pytest.approx(oracle_traditional(PLAN, 2, 7), rel=1e-10)
    assert got != pytest.approx(cm.closed_form_traditional(PLAN, 7), rel=1e-3)


@given(B=st.floats(0.5, 5), dB=st.floats(0.01, 2), p=st.floats(0, 20), dp=st.floats(0.01, 5),
       D=st.floats(0.6, 20), dD=st.floats(0.01, 5))
def test_traditional_monotone(B, dB, p, dp, D, dD):
    u = heavy(D)
    base = cm.expected_cost_traditional(TariffPlan(10, B, p), u)
    assert cm.expected_cost_traditional(TariffPlan(10, B + dB, p), u) <= base + 1e-12
    assert cm.expected_cost_traditional(TariffPlan(10, B, p + dp), u) >= base - 1e-12
    assert cm.expected_cost_traditional(TariffPlan(10, B, p), heavy(D + dD)) >= base - 1e-12


# -- rollover --------------------------------------------------------------------------

def test_rollover_examples():
    assert cm.expected_cost_rollover(PLAN, heavy(3)) == 20
    assert cm.expected_cost_rollover(PLAN, heavy(6)) == pytest.approx(25.0, rel=1e-10)
    assert oracle_rollover(PLAN, 0, 6) == pytest.approx(25.0, rel=1e-9)


def test_rollover_rejects_light_users():
    with pytest.raises(CostModelError):
        cm.expected_cost_rollover(PLAN, light(2))


@pytest.mark.parametrize("lo,hi", [(0, 4.5), (0, 9), (1, 8), (2.5, 4)])
def test_rollover_matches_product_quadrature(lo, hi):
    assert cm.expected_cost_rollover(PLAN, heavy(hi, lo)) == pytest.approx(oracle_rollover(PLAN, lo, hi), rel=1e-8)


@given(B=st.floats(0.5, 5), p=st.floats(0, 20), lo=st.floats(0, 5), width=st.floats(0.01, 20))
def test_rollover_never_costs_more(B, p, lo, width):
    plan = TariffPlan(5, B, p)
    u = heavy(lo + width, lo)
    assert cm.expected_cost_rollover(plan, u) <= cm.expected_cost_traditional(plan, u) + 1e-12


@given(D=st.floats(0.2, 30), B=st.floats(0.5, 5))
def test_uniform_closed_forms_match_quadrature(D, B):
    plan = TariffPlan(7, B, 3)
    u = heavy(D)
    assert cm.closed_form_traditional(plan, D) == pytest.approx(cm.expected_cost_traditional(plan, u), rel=1e-8)
    assert cm.closed_form_rollover(plan, D) == pytest.approx(cm.expected_cost_rollover(plan, u), rel=1e-8)
    assert cm.closed_form_family_hh(plan, D) == pytest.approx(cm.expected_cost_family(plan, u, u), rel=1e-8)
    Dl = 0.7 * B
    assert cm.closed_form_family_hl(plan, D, Dl) == pytest.approx(
        cm.expected_cost_family(plan, u, light(Dl)), rel=1e-8)


def test_reduction_curve_shape():
    Ds = np.linspace(3, 30, 271)
    red = cm.cost_reduction_curve(PLAN, Ds)
    assert red[0] == 0
    assert np.all(red[1:] > 0)
    k = int(np.argmax(red))
    assert 0 < k < len(Ds) - 1
    assert np.all(np.diff(red[: k + 1]) > 0) and np.all(np.diff(red[k:]) < 0)


# -- families --------------------------------------------------------------------------

def test_family_density_examples():
    f = cm.family_usage_density(light(2), heavy(4))
    assert f.pdf(1.0) == pytest.approx(1 / 8, rel=1e-9)
    assert cm.family_usage_density(heavy(4), heavy(4)).pdf(4.0) == pytest.approx(1 / 4, rel=1e-9)
    mass, _ = integrate.quad(f.pdf, f.lo, f.hi, points=list(f.knots), epsabs=1e-12)
    assert mass == pytest.approx(1.0, abs=1e-9)


@given(a=st.floats(0.3, 6), b=st.floats(0.3, 6), x=st.floats(0, 1))
def test_family_density_matches_direct_convolution(a, b, x):
    Dl, Dh = min(a, b), max(a, b)
    u = x * (Dl + Dh)
    f = cm.family_usage_density(light(Dl), heavy(Dh))
    direct, _ = integrate.quad(lambda s: (0 <= u - s <= Dh) / (Dl * Dh), 0, Dl,
                               points=[min(max(u - Dh, 0), Dl), min(u, Dl)], epsabs=1e-13)
    assert f.pdf(u) == pytest.approx(direct, abs=1e-9)
    assert f.pdf(u) == pytest.approx(cm.closed_form_family_density(u, Dl, Dh), abs=1e-12)
    assert f.pdf(u) >= 0


def test_family_examples():
    assert cm.expected_cost_family(PLAN, heavy(4), light(2)) == pytest.approx(40.0, abs=1e-12)
    assert cm.expected_cost_family(PLAN, heavy(4), heavy(4)) == pytest.approx(40 + 40 / 48, rel=1e-10)
    # above twice the quota; the product quadrature gives 40 + 10 * 164 / 64
    hh8 = cm.expected_cost_family(PLAN, heavy(8), heavy(8))
    assert hh8 == pytest.approx(oracle_family(PLAN, (0, 8), (0, 8)), rel=1e-9)
    assert hh8 == pytest.approx(65.625, rel=1e-10)


@pytest.mark.parametrize("a,b", [((1, 5), (0, 2.5)), ((0, 7), (0.5, 1)), ((2, 9), (1, 8))])
def test_family_general_bounds(a, b):
    got = cm.expected_cost_family(PLAN, heavy(a[1], a[0]), heavy(b[1], b[0]))
    assert got == pytest.approx(oracle_family(PLAN, a, b), rel=1e-8)


# -- aggregates -------------------------------------------------------------------------

def test_aggregate_example():
    agg_d, agg_e = cm.aggregates(PLAN, light(2), heavy(4), 0.5)
    ec_h = cm.expected_cost_traditional(PLAN, heavy(4))
    assert ec_h == pytest.approx(21.25, rel=1e-12)
    assert agg_d == pytest.approx(ec_h + 0.5 * 20, rel=1e-12)
    assert agg_e == pytest.approx(0.25 * (40 + 40 / 48) + 0.5 * 40, rel=1e-10)


def test_aggregates_vanish_without_heavy_users():
    agg_d, agg_e = cm.aggregates(PLAN, light(2), heavy(6), 1e-9)
    assert agg_d < 1e-6 and agg_e < 1e-6
    with pytest.raises(CostModelError):
        cm.aggregates(PLAN, light(2), heavy(6), 0.0)


@given(alpha=st.floats(0.01, 1.0), Dh=st.floats(3.2, 12), Dl=st.floats(0.1, 3))
def test_sharing_reduces_revenue(alpha, Dh, Dl):
    s = CostSummary.compute(PLAN, light(Dl), heavy(Dh), alpha)
    assert s.agg_e < s.agg_d
    assert s.ec_heavy_rollover <= s.ec_heavy
    assert min(s.ec_light, s.ec_heavy, s.ec_heavy_rollover) >= PLAN.P
    assert min(s.ec_family_hh, s.ec_family_hl) >= 2 * PLAN.P


# -- validation and tabulated densities -------------------------------------------------------

def test_invalid_inputs():
    with pytest.raises(CostModelError):
        TariffPlan(-1, 3, 10)
    with pytest.raises(CostModelError):
        TariffPlan(1, 0, 10)
    with pytest.raises(CostModelError):
        UsageModel("heavy", 5, 4)
    with pytest.raises(CostModelError):
        UsageModel("medium", 0, 4)
    with pytest.raises(CostModelError, match="integrates"):
        UsageModel("heavy", 0, 4, ([0, 4], [0.3, 0.3]))


def test_tabulated_uniform_matches_uniform():
    tab = UsageModel("heavy", 1, 7, ([1, 3, 7], [1 / 6, 1 / 6, 1 / 6]))
    uni = heavy(7, 1)
    for fn in (cm.expected_cost_traditional, cm.expected_cost_rollover):
        assert fn(PLAN, tab) == pytest.approx(fn(PLAN, uni), rel=1e-9)
    assert cm.expected_cost_family(PLAN, tab, tab) == pytest.approx(cm.expected_cost_family(PLAN, uni, uni), rel=1e-8)


def test_tabulated_triangle_against_quadrature():
    # density 2u/36 on [0, 6]
    tab = UsageModel("heavy", 0, 6, ([0, 6], [0, 1 / 3]))
    want = 20 + 10 * integrate.quad(lambda u: max(u - 3, 0) * u / 18, 0, 6, points=[3])[0]
    assert cm.expected_cost_traditional(PLAN, tab) == pytest.approx(want, rel=1e-9)
    rng = np.random.default_rng(0)
    x = tab.sample(rng, 200_000)
    assert x.mean() == pytest.approx(4.0, abs=0.02)
    assert math.isclose(float(x.min()), 0, abs_tol=0.1) and float(x.max()) <= 6
