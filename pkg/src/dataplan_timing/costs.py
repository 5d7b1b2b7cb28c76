"""Expected monthly costs under traditional, rollover and shared data plans.

The general path integrates the defining expectations numerically for any
usage density on ``[d, D]``.  The uniform closed forms (``closed_form_*``)
assume ``d = 0``, as the original derivations do, and exist so the two
routes can be checked against each other.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Literal, Optional, Sequence

import numpy as np
from scipy import integrate

QUAD_EPSABS = 1e-10
QUAD_EPSREL = 1e-9
NORMALIZATION_TOL = 1e-9

UsageClass = Literal["light", "heavy"]


class CostModelError(ValueError):
    """Invalid tariff, usage model or cost request."""


@dataclass(frozen=True)
class TariffPlan:
    """Two-part tariff: lump fee ``P`` for quota ``B``, overage price ``p``."""

    P: float
    B: float
    p: float

    def __post_init__(self):
        if self.P < 0 or self.B <= 0 or self.p < 0:
            raise CostModelError(f"invalid tariff plan {self!r}: need P >= 0, B > 0, p >= 0")


@dataclass(frozen=True)
class UsageModel:
    """Monthly usage of one user class on ``[d, D]``.

    ``density`` is ``"uniform"`` or a tabulated pair ``(xs, ys)`` that is
    interpolated piecewise-linearly and must integrate to one.
    """

    cls: UsageClass
    d: float
    D: float
    density: object = "uniform"
    _xs: Optional[np.ndarray] = field(default=None, init=False, repr=False, compare=False)
    _ys: Optional[np.ndarray] = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.cls not in ("light", "heavy"):
            raise CostModelError(f"usage class must be 'light' or 'heavy', got {self.cls!r}")
        if not (0 <= self.d <= self.D):
            raise CostModelError(f"need 0 <= d <= D, got d={self.d}, D={self.D}")
        if isinstance(self.density, str):
            if self.density != "uniform":
                raise CostModelError(f"unknown density {self.density!r}")
            if self.D == self.d:
                raise CostModelError("uniform usage needs D > d")
            return
        xs, ys = (np.asarray(a, dtype=float) for a in self.density)
        if xs.ndim != 1 or xs.shape != ys.shape or len(xs) < 2:
            raise CostModelError("tabulated density needs matching 1-D xs, ys of length >= 2")
        if np.any(np.diff(xs) <= 0):
            raise CostModelError("tabulated density abscissae must be strictly increasing")
        if not (np.isclose(xs[0], self.d) and np.isclose(xs[-1], self.D)):
            raise CostModelError("tabulated density must span exactly [d, D]")
        if np.any(ys < 0):
            raise CostModelError("tabulated density must be non-negative")
        mass = float(np.trapezoid(ys, xs))
        if abs(mass - 1.0) > NORMALIZATION_TOL:
            raise CostModelError(f"tabulated density integrates to {mass!r}, not 1")
        object.__setattr__(self, "_xs", xs)
        object.__setattr__(self, "_ys", ys)

    @property
    def is_uniform(self) -> bool:
        return self._xs is None

    @property
    def breakpoints(self) -> np.ndarray:
        if self.is_uniform:
            return np.array([self.d, self.D])
        return self._xs

    def pdf(self, u):
        u = np.asarray(u, dtype=float)
        inside = (u >= self.d) & (u <= self.D)
        if self.is_uniform:
            out = np.where(inside, 1.0 / (self.D - self.d), 0.0)
        else:
            out = np.where(inside, np.interp(u, self._xs, self._ys), 0.0)
        return out if out.ndim else float(out)

    def expected_excess(self, q: float) -> float:
        """``E[(u - q)^+]`` by adaptive quadrature."""
        lo = max(q, self.d)
        if lo >= self.D:
            return 0.0
        if self.is_uniform:
            # The integrand is linear; a single quad panel is exact.
            val, _ = integrate.quad(
                lambda u: (u - q) / (self.D - self.d), lo, self.D,
                epsabs=QUAD_EPSABS, epsrel=QUAD_EPSREL,
            )
            return val
        return _piecewise_quad(lambda u: (u - q) * self.pdf(u), lo, self.D, self._xs)

    def expected_shortfall(self, q: float) -> float:
        """``E[(q - u)^+]``: leftover quota below ``q``."""
        hi = min(q, self.D)
        if hi <= self.d:
            return 0.0
        if self.is_uniform:
            val, _ = integrate.quad(
                lambda u: (q - u) / (self.D - self.d), self.d, hi,
                epsabs=QUAD_EPSABS, epsrel=QUAD_EPSREL,
            )
            return val
        return _piecewise_quad(lambda u: (q - u) * self.pdf(u), self.d, hi, self._xs)

    def sample(self, rng: np.random.Generator, size) -> np.ndarray:
        if self.is_uniform:
            return rng.uniform(self.d, self.D, size=size)
        # inverse-CDF on the piecewise-linear density
        xs, ys = self._xs, self._ys
        fine = np.unique(np.concatenate([xs, np.linspace(xs[0], xs[-1], 4097)]))
        fine_pdf = np.interp(fine, xs, ys)
        fine_cdf = np.concatenate([[0.0], np.cumsum(0.5 * (fine_pdf[1:] + fine_pdf[:-1]) * np.diff(fine))])
        fine_cdf /= fine_cdf[-1]
        return np.interp(rng.uniform(size=size), fine_cdf, fine)


def _piecewise_quad(fn: Callable[[float], float], lo: float, hi: float, knots: np.ndarray) -> float:
    pts = [float(k) for k in knots if lo < k < hi]
    edges = [lo, *pts, hi]
    total = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        val, _ = integrate.quad(fn, a, b, epsabs=QUAD_EPSABS, epsrel=QUAD_EPSREL)
        total += val
    return total


def uniform(cls: UsageClass, d: float, D: float) -> UsageModel:
    return UsageModel(cls, d, D)


def _check_pair(plan: TariffPlan, usage: UsageModel):
    if usage.cls == "light" and usage.D > plan.B:
        raise CostModelError(f"light usage max D={usage.D} exceeds quota B={plan.B}")


def expected_cost_traditional(plan: TariffPlan, usage: UsageModel) -> float:
    """``P + p E[(u - B)^+]``; exactly ``P`` for light users."""
    _check_pair(plan, usage)
    if usage.cls == "light":
        return plan.P
    return plan.P + plan.p * usage.expected_excess(plan.B)


def expected_cost_rollover(plan: TariffPlan, usage: UsageModel) -> float:
    """Expected heavy-user cost when last month's unused quota carries over.

    Consecutive months are i.i.d.  The effective quota this month is
    ``B + (B - v)^+`` with ``v`` last month's usage, so the overage is the
    expected excess over that shifted quota, averaged over ``v``.
    """
    _check_pair(plan, usage)
    if usage.cls != "heavy":
        raise CostModelError("rollover cost is only defined for heavy users")
    B = plan.B
    if usage.D <= B:
        return plan.P

    def inner(v):
        return usage.pdf(v) * usage.expected_excess(2 * B - v)

    # months with v >= B leave no leftover: plain excess over B
    p_no_left = _mass(usage, max(B, usage.d), usage.D)
    carry = 0.0
    if usage.d < B:
        knots = usage.breakpoints
        # kink where the shifted quota 2B - v crosses D
        extra = [2 * B - usage.D, 2 * B - usage.d]
        carry = _piecewise_quad(inner, usage.d, min(B, usage.D), np.concatenate([knots, extra]))
    return plan.P + plan.p * (p_no_left * usage.expected_excess(B) + carry)


def _mass(usage: UsageModel, lo: float, hi: float) -> float:
    if hi <= lo:
        return 0.0
    if usage.is_uniform:
        return (hi - lo) / (usage.D - usage.d)
    return _piecewise_quad(usage.pdf, lo, hi, usage.breakpoints)


def rollover_shifted_quota(plan: TariffPlan, usage: UsageModel) -> float:
    """``B + E[(B - u)^+]``, the mean effective quota under rollover."""
    return plan.B + usage.expected_shortfall(plan.B)


@dataclass(frozen=True)
class FamilyDensity:
    """Density of combined monthly usage of two independent members."""

    a: UsageModel
    b: UsageModel

    @property
    def lo(self) -> float:
        return self.a.d + self.b.d

    @property
    def hi(self) -> float:
        return self.a.D + self.b.D

    @property
    def knots(self) -> np.ndarray:
        ka, kb = self.a.breakpoints, self.b.breakpoints
        return np.unique(np.add.outer(ka, kb).ravel())

    def pdf(self, u):
        scalar = np.ndim(u) == 0
        us = np.atleast_1d(np.asarray(u, dtype=float))
        if self.a.is_uniform and self.b.is_uniform:
            out = _trapezoid_pdf(us, self.a.d, self.a.D, self.b.d, self.b.D)
        else:
            out = np.array([self._convolve(x) for x in us])
        return float(out[0]) if scalar else out

    def _convolve(self, u: float) -> float:
        lo = max(self.a.d, u - self.b.D)
        hi = min(self.a.D, u - self.b.d)
        if hi <= lo:
            return 0.0
        knots = np.concatenate([self.a.breakpoints, u - self.b.breakpoints])
        return _piecewise_quad(lambda x: self.a.pdf(x) * self.b.pdf(u - x), lo, hi, knots)


def _trapezoid_pdf(u, da, Da, db, Db):
    wa, wb = Da - da, Db - db
    short, long_ = min(wa, wb), max(wa, wb)
    x = u - (da + db)
    rise = np.clip(x, 0.0, short)
    fall = np.clip(wa + wb - x, 0.0, short)
    height = np.minimum(rise, fall) / (wa * wb)
    inside = (x >= 0) & (x <= wa + wb)
    # plateau between short and long has height short/(wa*wb) = 1/long_
    return np.where(inside, np.minimum(height, 1.0 / long_), 0.0)


def family_usage_density(a: UsageModel, b: UsageModel) -> FamilyDensity:
    return FamilyDensity(a, b)


def expected_cost_family(plan: TariffPlan, a: UsageModel, b: UsageModel) -> float:
    """``2P + p E[(u_a + u_b - 2B)^+]`` for a two-member family on ``(2P, 2B, p)``."""
    _check_pair(plan, a)
    _check_pair(plan, b)
    q = 2 * plan.B
    if a.D + b.D <= q:
        return 2 * plan.P
    # condition on member a, then the excess of b over the remaining quota
    knots = np.concatenate([a.breakpoints, q - b.breakpoints])
    lo, hi = a.d, a.D
    if a.d == a.D:
        return 2 * plan.P + plan.p * b.expected_excess(q - a.d)
    over = _piecewise_quad(lambda x: a.pdf(x) * b.expected_excess(q - x), lo, hi, knots)
    return 2 * plan.P + plan.p * over


def aggregates(plan: TariffPlan, light: UsageModel, heavy: UsageModel, alpha: float):
    """Family-weighted costs before (``D``) and after (``E``) sharing."""
    if not 0 < alpha <= 1:
        raise CostModelError(f"alpha must lie in (0, 1], got {alpha}")
    ec_l = expected_cost_traditional(plan, light)
    ec_h = expected_cost_traditional(plan, heavy)
    ec_hh = expected_cost_family(plan, heavy, heavy)
    ec_hl = expected_cost_family(plan, heavy, light)
    return aggregate_values(alpha, ec_l, ec_h, ec_hh, ec_hl)


def aggregate_values(alpha: float, ec_l: float, ec_h: float, ec_hh: float, ec_hl: float):
    agg_d = 2 * alpha * ec_h + 2 * alpha * (1 - alpha) * ec_l
    agg_e = alpha**2 * ec_hh + 2 * alpha * (1 - alpha) * ec_hl
    return agg_d, agg_e


@dataclass(frozen=True)
class CostSummary:
    """All expected monthly costs a scenario needs.

    Fields not relevant to an analysis may be NaN (e.g. family costs when
    only the rollover game is studied with given costs).
    """

    ec_light: float
    ec_heavy: float
    ec_heavy_rollover: float
    ec_family_hh: float = float("nan")
    ec_family_hl: float = float("nan")
    agg_d: float = float("nan")
    agg_e: float = float("nan")

    @classmethod
    def compute(cls, plan: TariffPlan, light: UsageModel, heavy: UsageModel, alpha: float) -> "CostSummary":
        ec_l = expected_cost_traditional(plan, light)
        ec_h = expected_cost_traditional(plan, heavy)
        ec_r = expected_cost_rollover(plan, heavy)
        ec_hh = expected_cost_family(plan, heavy, heavy)
        ec_hl = expected_cost_family(plan, heavy, light)
        agg_d, agg_e = aggregate_values(alpha, ec_l, ec_h, ec_hh, ec_hl)
        return cls(ec_l, ec_h, ec_r, ec_hh, ec_hl, agg_d, agg_e)

    @classmethod
    def from_family(cls, alpha: float, ec_light: float, ec_heavy: float, ec_heavy_rollover: float,
                    ec_family_hh: float, ec_family_hl: float) -> "CostSummary":
        agg_d, agg_e = aggregate_values(alpha, ec_light, ec_heavy, ec_family_hh, ec_family_hl)
        return cls(ec_light, ec_heavy, ec_heavy_rollover, ec_family_hh, ec_family_hl, agg_d, agg_e)

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


# -- closed forms for uniform usage on [0, D] ---------------------------------

def closed_form_traditional(plan: TariffPlan, D_h: float) -> float:
    if D_h <= plan.B:
        return plan.P
    return plan.P + plan.p * (D_h - plan.B) ** 2 / (2 * D_h)


def closed_form_rollover(plan: TariffPlan, D_h: float) -> float:
    B = plan.B
    if D_h <= B:
        return plan.P
    val = 2 * (D_h - B) ** 3 / (3 * D_h**2)
    if D_h > 2 * B:
        val -= (D_h - 2 * B) ** 3 / (6 * D_h**2)
    return plan.P + plan.p * val


def closed_form_family_hh(plan: TariffPlan, D_h: float) -> float:
    B = plan.B
    if D_h <= B:
        return 2 * plan.P
    if D_h <= 2 * B:
        return 2 * plan.P + 4 * plan.p * (D_h - B) ** 3 / (3 * D_h**2)
    return 2 * plan.P + plan.p * (D_h**3 - 2 * B * D_h**2 + 4 * B**3 / 3) / D_h**2


def closed_form_family_hl(plan: TariffPlan, D_h: float, D_l: float) -> float:
    B = plan.B
    if D_h + D_l <= 2 * B:
        return 2 * plan.P
    if D_h <= 2 * B:
        return 2 * plan.P + plan.p * (D_h + D_l - 2 * B) ** 3 / (6 * D_h * D_l)
    return 2 * plan.P + plan.p / D_h * (
        D_h**2 / 2 - 2 * B * D_h + 2 * B**2 + D_l**2 / 6 + D_h * D_l / 2 - B * D_l
    )


def closed_form_family_density(u, D_l: float, D_h: float):
    """Triangular/trapezoidal density of ``u_h + u_l`` for uniforms on [0, D]."""
    u = np.asarray(u, dtype=float)
    out = np.where(
        (u >= 0) & (u <= D_l), u / (D_l * D_h),
        np.where((u > D_l) & (u <= D_h), 1.0 / D_h,
                 np.where((u > D_h) & (u <= D_l + D_h), (D_l + D_h - u) / (D_l * D_h), 0.0)),
    )
    return out if out.ndim else float(out)


def cost_reduction_curve(plan: TariffPlan, D_values: Sequence[float]) -> np.ndarray:
    """Heavy-user saving ``E C_h - E C_h^r`` for uniform usage on ``[0, D]``."""
    out = []
    for D in D_values:
        heavy = UsageModel("heavy", 0.0, float(D))
        out.append(expected_cost_traditional(plan, heavy) - expected_cost_rollover(plan, heavy))
    return np.array(out)
