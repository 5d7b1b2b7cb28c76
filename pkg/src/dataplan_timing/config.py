"""Strict JSON scenario loader.

Layout::

    {"plan": {"P": 30, "B": 3, "p": 10},
     "users": {"alpha": 0.4, "light": {"d": 0, "D": 2.5}, "heavy": {"d": 0, "D": 8}},
     "market": {"N": 1000, "shares": [0.4, 0.6], "eta0": 0.3},
     "rates": {"lambda": 1.0, "lambda0": 0.4},
     "discount": {"S": 0.5}}

Optional sections: ``costs`` (expected monthly costs given directly, in
which case ``plan`` and the usage ranges may be omitted), ``simulation``
(Monte Carlo settings) and ``sweep`` (heavy-cost range for the multi-provider
sweep).  Unknown keys are rejected with the path of the offending field.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Any

from .costs import CostModelError, CostSummary, TariffPlan, UsageModel
from .dynamics import ChurnRates, ConfigError, MarketConfig
from .simulate import SimConfig


class ConfigFieldError(ConfigError):
    def __init__(self, path: str, msg: str):
        super().__init__(f"{path}: {msg}")
        self.path = path


_USAGE_KEYS = {"d", "D", "density"}
_SCHEMA = {
    "plan": {"P", "B", "p"},
    "users": {"alpha", "light", "heavy"},
    "market": {"N", "shares", "eta0"},
    "rates": {"lambda", "lambda0"},
    "discount": {"S"},
    "costs": {"ec_light", "ec_heavy", "ec_heavy_rollover", "ec_family_hh", "ec_family_hl"},
    "simulation": {"replications", "months", "dt", "reset_leftover_on_switch"},
    "sweep": {"ec_heavy_min", "ec_heavy_max"},
}
_REQUIRED = ("market", "rates", "discount", "users")


@dataclass(frozen=True)
class Scenario:
    market: MarketConfig
    simulation: SimConfig
    sweep: tuple | None = None


def _section(doc: dict, key: str, required: bool = True) -> dict | None:
    if key not in doc:
        if required:
            raise ConfigFieldError(key, "missing section")
        return None
    sec = doc[key]
    if not isinstance(sec, dict):
        raise ConfigFieldError(key, "must be an object")
    extra = set(sec) - _SCHEMA[key]
    if extra:
        raise ConfigFieldError(f"{key}.{sorted(extra)[0]}", "unknown key")
    return sec


def _num(sec: dict, path: str, key: str, default: Any = None, integer: bool = False):
    if key not in sec:
        if default is None:
            raise ConfigFieldError(f"{path}.{key}", "missing")
        return default
    v = sec[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigFieldError(f"{path}.{key}", f"expected a number, got {v!r}")
    if not math.isfinite(v):
        raise ConfigFieldError(f"{path}.{key}", "must be finite")
    if integer:
        if int(v) != v:
            raise ConfigFieldError(f"{path}.{key}", f"expected an integer, got {v!r}")
        return int(v)
    return float(v)


def _usage(sec: dict, path: str, cls: str) -> UsageModel:
    if not isinstance(sec, dict):
        raise ConfigFieldError(path, "must be an object")
    extra = set(sec) - _USAGE_KEYS
    if extra:
        raise ConfigFieldError(f"{path}.{sorted(extra)[0]}", "unknown key")
    density: Any = "uniform"
    if "density" in sec:
        dens = sec["density"]
        if dens == "uniform":
            pass
        elif isinstance(dens, dict) and set(dens) == {"xs", "ys"}:
            density = (dens["xs"], dens["ys"])
        else:
            raise ConfigFieldError(f"{path}.density", 'expected "uniform" or {"xs": [...], "ys": [...]}')
    try:
        return UsageModel(cls, _num(sec, path, "d"), _num(sec, path, "D"), density)
    except CostModelError as e:
        raise ConfigFieldError(path, str(e)) from None


def parse_config(doc: Any) -> Scenario:
    if not isinstance(doc, dict):
        raise ConfigFieldError("<root>", "must be an object")
    extra = set(doc) - set(_SCHEMA)
    if extra:
        raise ConfigFieldError(sorted(extra)[0], "unknown key")
    for key in _REQUIRED:
        _section(doc, key)
    costs_sec = _section(doc, "costs", required=False)
    plan_sec = _section(doc, "plan", required=costs_sec is None)

    users = doc["users"]
    extra = set(users) - _SCHEMA["users"]
    if extra:
        raise ConfigFieldError(f"users.{sorted(extra)[0]}", "unknown key")
    alpha = _num(users, "users", "alpha")
    plan = light = heavy = None
    if plan_sec is not None:
        try:
            plan = TariffPlan(_num(plan_sec, "plan", "P"), _num(plan_sec, "plan", "B"), _num(plan_sec, "plan", "p"))
        except CostModelError as e:
            raise ConfigFieldError("plan", str(e)) from None
    if "light" in users or costs_sec is None:
        light = _usage(users.get("light"), "users.light", "light") if "light" in users else None
        heavy = _usage(users.get("heavy"), "users.heavy", "heavy") if "heavy" in users else None
        if costs_sec is None and (light is None or heavy is None):
            raise ConfigFieldError("users", "light and heavy usage ranges are required without a costs section")

    costs = None
    if costs_sec is not None:
        nan = float("nan")
        vals = {k: _num(costs_sec, "costs", k, default=nan) for k in _SCHEMA["costs"]}
        for k in ("ec_light", "ec_heavy", "ec_heavy_rollover"):
            if math.isnan(vals[k]):
                raise ConfigFieldError(f"costs.{k}", "missing")
        costs = CostSummary.from_family(alpha, vals["ec_light"], vals["ec_heavy"], vals["ec_heavy_rollover"],
                                        vals["ec_family_hh"], vals["ec_family_hl"])

    m = doc["market"]
    shares = m.get("shares")
    if not isinstance(shares, list) or not all(isinstance(s, (int, float)) and not isinstance(s, bool) for s in shares):
        raise ConfigFieldError("market.shares", "expected a list of numbers")
    r, d = doc["rates"], doc["discount"]
    try:
        rates = ChurnRates(_num(r, "rates", "lambda"), _num(r, "rates", "lambda0"))
    except ConfigFieldError:
        raise
    except ConfigError as e:
        raise ConfigFieldError("rates", str(e)) from None
    try:
        market = MarketConfig(
            n=_num(m, "market", "N"), shares=tuple(float(s) for s in shares), eta0=_num(m, "market", "eta0"),
            alpha=alpha, rates=rates, discount=_num(d, "discount", "S"),
            plan=plan, light=light, heavy=heavy, costs=costs,
        )
    except ConfigFieldError:
        raise
    except (ConfigError, CostModelError) as e:
        raise ConfigFieldError("market", str(e)) from None

    sim_sec = _section(doc, "simulation", required=False) or {}
    try:
        sim = SimConfig(
            replications=_num(sim_sec, "simulation", "replications", default=200, integer=True),
            months=_num(sim_sec, "simulation", "months", default=0, integer=True) or None,
            dt=_num(sim_sec, "simulation", "dt", default=0.0),
            reset_leftover_on_switch=bool(sim_sec.get("reset_leftover_on_switch", False)),
        )
    except ConfigFieldError:
        raise
    except ConfigError as e:
        raise ConfigFieldError("simulation", str(e)) from None
    if "reset_leftover_on_switch" in sim_sec and not isinstance(sim_sec["reset_leftover_on_switch"], bool):
        raise ConfigFieldError("simulation.reset_leftover_on_switch", "expected true or false")

    sweep = None
    sw = _section(doc, "sweep", required=False)
    if sw is not None:
        sweep = (_num(sw, "sweep", "ec_heavy_min"), _num(sw, "sweep", "ec_heavy_max"))
        if not sweep[1] > sweep[0]:
            raise ConfigFieldError("sweep", "ec_heavy_max must exceed ec_heavy_min")
    return Scenario(market, sim, sweep)


def load_config(path: str) -> Scenario:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except OSError as e:
        raise ConfigFieldError("<file>", f"cannot read {path}: {e.strerror}") from None
    except json.JSONDecodeError as e:
        raise ConfigFieldError("<file>", f"invalid JSON at line {e.lineno} column {e.colno}: {e.msg}") from None
    return parse_config(doc)
