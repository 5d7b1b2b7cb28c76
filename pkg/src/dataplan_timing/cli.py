"""Command-line front end: every command writes one plot-ready CSV.

Exit codes: 0 success, 2 bad configuration, 3 solver failure, 4 verification failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import math
import sys
from importlib import resources
from typing import Iterable, Sequence

import numpy as np

from . import costs as cm
from . import game as gm
from . import multi as mu
from . import profits as pf
from . import rollover as ro
from . import shared as sh
from . import simulate as sm
from .config import Scenario, load_config
from .dynamics import NEVER, ConfigError, MarketConfig, rollover_phase_counts, shared_phase_counts

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_VERIFY = 0, 2, 3, 4
DEFAULT_GRID = 101


class VerificationFailure(Exception):
    pass


def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        if math.isnan(x):
            return "nan"
        return f"{float(x):.12g}"
    return str(x)


def write_csv(out, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    w = csv.writer(out, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) for v in row])


def default_config_path() -> str:
    return str(resources.files("dataplan_timing").joinpath("data/default.json"))


def parse_time(s: str) -> float:
    if s.lower() in ("inf", "never"):
        return NEVER
    v = float(s)
    if not v >= 0:
        raise argparse.ArgumentTypeError(f"time must be >= 0 or 'inf', got {s!r}")
    return v


def _duopoly(cfg: MarketConfig) -> None:
    if cfg.m != 2:
        raise ConfigError("market.shares: this command needs exactly two providers")


def _solver(plan: str):
    return (ro.classify_and_solve, ro.GAME) if plan == "rollover" else (sh.classify_and_solve_shared, sh.GAME)


def _eta0_top(cfg: MarketConfig, plan: str) -> float:
    """Upper end of eta0 sweeps: past the large-regime bound when it exists."""
    if plan == "rollover":
        bound = ro.compute_thresholds(cfg).large_bound
    else:
        bound = sh.compute_shared_thresholds(cfg).large_bound_s
    return 1.25 * bound if math.isfinite(bound) and bound > 0 else 1.0


# -- commands ------------------------------------------------------------------------

def cmd_costs(sc: Scenario, args, out) -> int:
    cfg = sc.market
    if args.grid:
        if cfg.plan is None:
            raise ConfigError("plan: the cost-reduction curve needs a tariff plan")
        B = cfg.plan.B
        top = max(cfg.heavy.D if cfg.heavy is not None else 10 * B, 1.01 * B)
        ds = np.linspace(B, top, args.grid)
        red = cm.cost_reduction_curve(cfg.plan, ds)
        write_csv(out, ["heavy_max_usage", "cost_reduction"], zip(ds, red))
        return EXIT_OK
    write_csv(out, ["quantity", "value"], cfg.costs.as_dict().items())
    return EXIT_OK


def cmd_trajectory(sc: Scenario, args, out) -> int:
    cfg = sc.market
    _duopoly(cfg)
    t0, t1 = args.times
    t_max = gm.default_t_max(cfg, (t0, t1))
    ts = np.linspace(0.0, t_max, args.grid or DEFAULT_GRID)
    if args.plan == "rollover":
        header = ["t", "heavy_0", "heavy_1", "pool_left"]
        rows = []
        for t in ts:
            c = rollover_phase_counts(cfg, 0, t, t0, t1)
            rows.append((t, c.total_i, c.total_j, c.pool_left))
    else:
        header = ["t", "shared_0", "shared_1", "individual_0", "individual_1", "pool_left"]
        rows = []
        for t in ts:
            c = shared_phase_counts(cfg, 0, t, t0, t1)
            rows.append((t, sum(c.shared_i.values()), sum(c.shared_j.values()),
                         sum(c.individual_i.values()), sum(c.individual_j.values()), sum(c.pool_left.values())))
    write_csv(out, header, rows)
    return EXIT_OK


def cmd_profit(sc: Scenario, args, out) -> int:
    cfg = sc.market
    _duopoly(cfg)
    times = args.times
    rows = []
    for i in (0, 1):
        ti, tj = times[i], times[1 - i]
        if args.plan == "rollover":
            b = pf.profit_rollover(cfg, i, ti, tj)
            early = pf.profit_rollover_branch(cfg, i, ti, tj, "early")
            late = pf.profit_rollover_branch(cfg, i, ti, tj, "late")
        else:
            b = pf.profit_shared(cfg, i, ti, tj)
            early = pf.profit_shared_branch(cfg, i, ti, tj, "early")
            late = pf.profit_shared_branch(cfg, i, ti, tj, "late")
        rows.append((i, ti, tj, "early" if ti <= tj else "late", early, late, b.phase1, b.phase2, b.phase3, b.total))
    write_csv(out, ["provider", "t_own", "t_rival", "branch", "early_formula", "late_formula",
                    "phase1", "phase2", "phase3", "total"], rows)
    return EXIT_OK


def cmd_best_response(sc: Scenario, args, out) -> int:
    cfg = sc.market
    _duopoly(cfg)
    _, game = _solver(args.plan)
    rows = []
    for i in (0, 1):
        br = gm.best_response_detail(game, cfg, i, args.rival)
        rows.append((i, args.rival, br.time, br.profit, game.kappa(cfg, i), len(br.candidates)))
    write_csv(out, ["provider", "rival_time", "best_time", "profit", "kappa", "candidates"], rows)
    return EXIT_OK


def _result_rows(res: gm.EquilibriumResult) -> list:
    rows = [("plan", res.plan_type), ("regime", res.regime), ("theorem_regime", res.theorem_regime),
            ("theorem_consistent", res.theorem_consistent)]
    rows += [(f"time_{k}", t) for k, t in enumerate(res.times)]
    rows += [(f"profit_{k}", v) for k, v in enumerate(res.profits)]
    if res.thresholds is not None:
        rows += sorted(res.thresholds.as_dict().items())
    if res.certificate is not None:
        c = res.certificate
        rows += [("certified", c.passed), ("max_deviation_gain", c.max_gain), ("epsilon", c.epsilon),
                 ("certificate_step", c.grid_step), ("certificate_t_max", c.t_max)]
    return rows


def cmd_equilibrium(sc: Scenario, args, out) -> int:
    cfg = sc.market
    _duopoly(cfg)
    solve, _ = _solver(args.plan)
    res = solve(cfg, certify=args.certify)
    for n in res.notes:
        print(f"note: {n}", file=sys.stderr)
    write_csv(out, ["field", "value"], _result_rows(res))
    if args.certify and not res.certificate.passed:
        return EXIT_VERIFY
    return EXIT_OK


def _share_grid(n: int) -> np.ndarray:
    return np.arange(n) / (n - 1)


def cmd_regime_map(sc: Scenario, args, out) -> int:
    cfg = sc.market
    _duopoly(cfg)
    n = args.grid or DEFAULT_GRID
    if n < 2:
        raise ConfigError("--grid must be at least 2")
    solve, _ = _solver(args.plan)
    top = _eta0_top(cfg, args.plan)
    header = ["eta_0_share", "eta0", "regime", "time_0", "time_1", "theorem_consistent"]
    if args.certify:
        header.append("certified")
    rows, failed = [], False
    for eta0 in top * _share_grid(n):
        base = cfg.replace(eta0=float(eta0))
        th = (ro.compute_thresholds(base) if args.plan == "rollover" else sh.compute_shared_thresholds(base))
        for e in _share_grid(n):
            c = base.with_duopoly_share(float(e))
            res = solve(c, thresholds=th, certify=args.certify)
            row = [e, eta0, res.regime, res.times[0], res.times[1], res.theorem_consistent]
            if args.certify:
                row.append(res.certificate.passed)
                failed |= not res.certificate.passed
            rows.append(row)
    write_csv(out, header, rows)
    return EXIT_VERIFY if failed else EXIT_OK


def cmd_profit_curves(sc: Scenario, args, out) -> int:
    """Equilibrium profits versus own share for one eta0 per regime, and versus eta0 at the configured share."""
    cfg = sc.market
    _duopoly(cfg)
    n = args.grid or DEFAULT_GRID
    solve, _ = _solver(args.plan)
    top = _eta0_top(cfg, args.plan)
    rows = []
    picks = sorted({cfg.eta0, 0.0, 0.5 * top / 1.25, top})
    for eta0 in picks:
        base = cfg.replace(eta0=float(eta0))
        th = ro.compute_thresholds(base) if args.plan == "rollover" else sh.compute_shared_thresholds(base)
        for e in _share_grid(n):
            r = solve(base.with_duopoly_share(float(e)), thresholds=th)
            rows.append(("share", e, eta0, r.regime, r.times[0], r.times[1], r.profits[0], r.profits[1]))
    for eta0 in top * _share_grid(n):
        r = solve(cfg.replace(eta0=float(eta0)))
        rows.append(("eta0", cfg.shares[0], eta0, r.regime, r.times[0], r.times[1], r.profits[0], r.profits[1]))
    write_csv(out, ["sweep", "eta_0_share", "eta0", "regime", "time_0", "time_1", "profit_0", "profit_1"], rows)
    return EXIT_OK


def cmd_multi(sc: Scenario, args, out) -> int:
    cfg = sc.market
    if args.plan != "rollover":
        raise ConfigError("--plan: the multi-provider solver covers the rollover plan only")
    c = cfg.costs
    if sc.sweep is not None:
        lo, hi = sc.sweep
    else:
        lo = c.ec_heavy_rollover
        hi = max(2 * c.ec_heavy, c.ec_heavy_rollover * (2 * cfg.lam + cfg.S) / cfg.S)
    ecs = np.linspace(lo, hi, args.grid or 41)[1:] if lo == c.ec_heavy_rollover else np.linspace(lo, hi, args.grid or 41)
    rows, failed = [], False
    for ec in ecs:
        r = mu.solve_multi(cfg.with_costs(ec_heavy=float(ec)), certify=args.certify)
        row = [ec, r.regime, *r.times]
        if args.certify:
            row.append(r.certificate.passed)
            failed |= not r.certificate.passed
        rows.append(row)
    pats = [(row[0], row[1]) for row in rows]
    for (a, pa), (b, pb) in zip(pats[:-1], pats[1:]):
        if pa != pb:
            print(f"crossover in ({fmt(a)}, {fmt(b)}]: {pa} -> {pb}", file=sys.stderr)
    header = ["ec_heavy", "pattern", *[f"time_{k}" for k in range(cfg.m)]]
    if args.certify:
        header.append("certified")
    write_csv(out, header, rows)
    return EXIT_VERIFY if failed else EXIT_OK


def cmd_simulate(sc: Scenario, args, out) -> int:
    cfg = sc.market
    _duopoly(cfg)
    sim = sm.SimConfig(seed=args.seed, replications=sc.simulation.replications, months=sc.simulation.months,
                       dt=sc.simulation.dt, reset_leftover_on_switch=sc.simulation.reset_leftover_on_switch)
    t0, t1 = args.times
    fn = sm.simulate_rollover if args.plan == "rollover" else sm.simulate_shared
    res = fn(cfg, sim, t0, t1)
    for k in (0, 1):
        closed = pf.profit(cfg, k, args.times[k], args.times[1 - k], args.plan)
        print(f"provider {k}: simulated {fmt(res.mean[k])} +- {fmt(res.se[k])}, closed form {fmt(closed)}, "
              f"z = {fmt((res.mean[k] - closed) / res.se[k])}", file=sys.stderr)
    res.write_csv(out)
    return EXIT_OK


# -- verification suites ---------------------------------------------------------------

def _suite_costs(cfg: MarketConfig) -> list[tuple[str, bool, str]]:
    out = []
    if cfg.plan is None or cfg.heavy is None:
        return [("costs: skipped (costs given directly)", True, "")]
    rng = np.random.default_rng(0)
    worst = 0.0
    for _ in range(20):
        plan = cm.TariffPlan(float(rng.uniform(1, 50)), float(rng.uniform(1, 5)), float(rng.uniform(1, 20)))
        Dh = float(rng.uniform(1.05, 8) * plan.B)
        Dl = float(rng.uniform(0.1, 1) * plan.B)
        heavy, light = cm.UsageModel("heavy", 0.0, Dh), cm.UsageModel("light", 0.0, Dl)
        pairs = [
            (cm.expected_cost_traditional(plan, heavy), cm.closed_form_traditional(plan, Dh)),
            (cm.expected_cost_rollover(plan, heavy), cm.closed_form_rollover(plan, Dh)),
            (cm.expected_cost_family(plan, heavy, heavy), cm.closed_form_family_hh(plan, Dh)),
            (cm.expected_cost_family(plan, heavy, light), cm.closed_form_family_hl(plan, Dh, Dl)),
        ]
        worst = max(worst, max(abs(a - b) / abs(b) for a, b in pairs))
    out.append(("costs: closed forms vs quadrature", worst <= 1e-8, f"max relative error {worst:.3g}"))
    c = cfg.costs
    out.append(("costs: rollover never costs more", c.ec_heavy_rollover <= c.ec_heavy + 1e-12,
                f"E C_h^r={c.ec_heavy_rollover:.6g}, E C_h={c.ec_heavy:.6g}"))
    return out


def _suite_profits(cfg: MarketConfig) -> list[tuple[str, bool, str]]:
    out = []
    pairs = [(0.0, 0.0), (0.0, 1.5), (2.0, 0.5), (1.0, NEVER), (NEVER, 0.7), (NEVER, NEVER)]
    for plan in ("rollover", "shared"):
        if plan == "shared" and math.isnan(cfg.costs.agg_d):
            out.append(("profits: shared skipped (no family costs)", True, ""))
            continue
        worst = 0.0
        for ti, tj in pairs:
            for i in (0, 1):
                t = (ti, tj) if i == 0 else (tj, ti)
                a = pf.profit(cfg, i, t[0], t[1], plan)
                b = pf.quadrature_profit_oracle(cfg, i, t[0], t[1], plan)
                worst = max(worst, abs(a - b) / max(abs(b), 1e-300))
        out.append((f"profits: {plan} closed form vs quadrature", worst <= 1e-7, f"max relative error {worst:.3g}"))
    return out


def _suite_nash(cfg: MarketConfig) -> list[tuple[str, bool, str]]:
    out = []
    for plan in ("rollover", "shared"):
        if plan == "shared" and math.isnan(cfg.costs.agg_d):
            out.append(("nash: shared skipped (no family costs)", True, ""))
            continue
        solve, _ = _solver(plan)
        ok, worst = True, 0.0
        for e in (0.1, 0.3, 0.5, cfg.shares[0]):
            for eta0 in (0.0, cfg.eta0, 2 * cfg.eta0 + 0.1):
                try:
                    r = solve(cfg.replace(eta0=eta0).with_duopoly_share(e), certify=True, cert_step=1e-2)
                except gm.UnsupportedRegimeError:
                    continue
                ok &= r.certificate.passed
                worst = max(worst, r.certificate.max_gain / max(r.certificate.epsilon, 1e-300))
        out.append((f"nash: {plan} equilibria certified", ok, f"worst gain/epsilon {worst:.3g}"))
    return out


SUITES = {"costs": _suite_costs, "profits": _suite_profits, "nash": _suite_nash}


def cmd_verify(sc: Scenario, args, out) -> int:
    cfg = sc.market
    _duopoly(cfg)
    names = list(SUITES) if args.suite == "all" else [args.suite]
    results = [r for name in names for r in SUITES[name](cfg)]
    write_csv(out, ["check", "passed", "detail"], results)
    return EXIT_OK if all(ok for _, ok, _ in results) else EXIT_VERIFY


COMMANDS = {
    "costs": cmd_costs, "trajectory": cmd_trajectory, "profit": cmd_profit, "best-response": cmd_best_response,
    "equilibrium": cmd_equilibrium, "regime-map": cmd_regime_map, "profit-curves": cmd_profit_curves,
    "multi": cmd_multi, "verify": cmd_verify, "simulate": cmd_simulate,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dataplan-timing", description="Data-plan upgrade timing games.")
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", default=None, help="scenario JSON (default: the bundled example)")
    p.add_argument("--plan", choices=("rollover", "shared"), default="rollover")
    p.add_argument("--out", default=None, help="CSV destination (default: stdout)")
    p.add_argument("--grid", type=int, default=None, help="points per sweep axis")
    p.add_argument("--seed", type=int, default=0, help="Monte Carlo seed")
    p.add_argument("--certify", action="store_true", help="attach an epsilon-Nash certificate to every profile")
    p.add_argument("--suite", choices=("costs", "profits", "nash", "all"), default="all")
    p.add_argument("--times", type=parse_time, nargs=2, default=(0.0, NEVER), metavar=("T0", "T1"),
                   help="upgrade times of providers 0 and 1 ('inf' for never)")
    p.add_argument("--rival", type=parse_time, default=0.0, help="rival upgrade time for best-response")
    return p


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.grid is not None and args.grid < 2:
        print("error: --grid must be at least 2", file=sys.stderr)
        return EXIT_CONFIG
    if args.seed < 0 or args.seed >= 2**64:
        print("error: --seed must be an unsigned 64-bit integer", file=sys.stderr)
        return EXIT_CONFIG
    try:
        sc = load_config(args.config or default_config_path())
        buf = io.StringIO()
        code = COMMANDS[args.command](sc, args, buf)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except cm.CostModelError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except gm.SolverError as e:
        print(f"solver error: {e}", file=sys.stderr)
        return EXIT_SOLVER
    if args.out:
        with open(args.out, "w", newline="") as fh:
            fh.write(buf.getvalue())
    else:
        sys.stdout.write(buf.getvalue())
    return code


if __name__ == "__main__":
    sys.exit(main())
