"""``lobkit`` command-line interface.

Exit codes: 0 success, 1 validation error (bad flags, inputs or configs),
2 I/O error.  Errors go to stderr prefixed with ``E:<code>:``.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

log = logging.getLogger("lobkit")

EXIT_OK, EXIT_VALIDATION, EXIT_IO = 0, 1, 2


class CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise CliError(EXIT_VALIDATION, message)


# -- schemas and output ---------------------------------------------------------------


def load_schema(name: str) -> dict:
    return json.loads(resources.files("lobkit").joinpath("schemas", f"{name}.schema.json").read_text())


def check_schema(obj, name: str):
    try:
        jsonschema.validate(obj, load_schema(name))
    except jsonschema.ValidationError as exc:
        path = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise CliError(EXIT_VALIDATION, f"{name}: {path}: {exc.message}") from None
    return obj


def _jsonable(o):
    if isinstance(o, dict):
        return {str(k): _jsonable(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_jsonable(v) for v in o]
    if isinstance(o, np.ndarray):
        return _jsonable(o.tolist())
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating, float)):
        v = float(o)
        return v if math.isfinite(v) else None
    if isinstance(o, np.bool_):
        return bool(o)
    return o


def emit_json(obj, schema: str | None, out: str | None):
    obj = _jsonable(obj)
    if schema:
        check_schema(obj, schema)
    text = json.dumps(obj, indent=1, sort_keys=False) + "\n"
    if out:
        _write(out, text)
    else:
        sys.stdout.write(text)


def _write(path, text: str):
    try:
        p = Path(path)
        if p.parent and not p.parent.exists():
            p.parent.mkdir(parents=True)
        p.write_text(text)
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot write {path}: {exc.strerror or exc}") from None


def _read_json(path) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot read {path}: {exc.strerror or exc}") from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise CliError(EXIT_VALIDATION, f"{path}: invalid JSON: {exc}") from None


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _load_series(path):
    from .trade_tape import TradeClockSeries

    d = check_schema(_read_json(path), "series")
    return TradeClockSeries.from_dict(d)


# -- commands -------------------------------------------------------------------------


def cmd_ingest(a):
    from .trade_tape import build_series, filter_tape, ingest

    recs = ingest(a.tape, a.tick)
    kept, rep = filter_tape(recs)
    ser = build_series(kept, a.tick)
    text = json.dumps(check_schema(ser.to_dict(), "series"))
    _write(a.out, text)
    report = {"n_in": rep.n_in, "n_special": rep.n_special, "n_hidden": rep.n_hidden, "n_kept": rep.n_kept,
              "fraction_dropped": rep.fraction_dropped, "n_rejected_off_quote": len(ser.rejected),
              "n_trades": len(ser), "series": str(a.out)}
    emit_json(report, "ingest_report", a.report)


def cmd_synth(a):
    from .synthetic import TapeParams, generate_synthetic_tape

    law = {}
    for part in a.spread_law.split(","):
        k, v = part.split(":")
        law[int(k)] = float(v)
    params = TapeParams(n_trades=a.n_trades, tick=a.tick, base_price=a.base_price, spread_law=law,
                        impact_compliance=a.impact_compliance, recovery_compliance=a.recovery_compliance,
                        recovery_bound=a.recovery_bound, special_rate=a.special_rate,
                        hidden_rate=a.hidden_rate)
    try:
        generate_synthetic_tape(a.out, params, a.seed)
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot write {a.out}: {exc.strerror or exc}") from None


def cmd_validate(a):
    from .sfe_discrete import validate

    emit_json(validate(_load_series(a.series)).to_dict(), "validation_report", a.out)


def _parse_window(text):
    if text is None:
        return None
    try:
        lo, hi = (int(v) for v in text.split(":"))
    except ValueError:
        raise CliError(EXIT_VALIDATION, f"window must look like a:b, got {text!r}") from None
    return lo, hi


def cmd_toxicity(a):
    from .sfe_discrete import StatisticError, quad_covariation_path, toxicity_ratio, toxicity_rho

    ser = _load_series(a.series)
    win = _parse_window(a.window)
    try:
        rho = toxicity_rho(ser, win)
    except StatisticError as exc:
        log.warning("rho undefined: %s", exc)
        rho = None
    try:
        tr = toxicity_ratio(ser, win)
        r_d, sc, ic = tr.ratio, tr.spread_component, tr.impact_component
    except StatisticError as exc:
        log.warning("ratio undefined: %s", exc)
        r_d, sc, ic = None, 0.0, 0.0
    n = len(ser) if win is None else win[1] - win[0] + 1
    emit_json({"window": list(win) if win else None, "rho_d": rho, "r_d": r_d, "spread_component": sc,
               "impact_component": ic, "n_trades": n}, "toxicity_report", a.out)
    if a.covariation_csv:
        q = quad_covariation_path(ser)
        _write(a.covariation_csv, _csv_text(["n", "covariation"], [[i, repr(float(v))] for i, v in enumerate(q)]))


def _book_costs(path, n):
    from .lob_core import OrderBook, legendre, shape_from_book

    d = _read_json(path)
    books = d if isinstance(d, list) else [d]
    costs = [legendre(shape_from_book(OrderBook.from_json(json.dumps(b)))) for b in books]
    if len(costs) == 1:
        return costs * n
    if len(costs) != n:
        raise CliError(EXIT_VALIDATION, f"{path}: expected 1 or {n} books, got {len(costs)}")
    return costs


def cmd_reconstruct(a):
    from .sfe_discrete import WealthModel, reconstruct_wealth
    from .trade_tape import build_ledger

    ser = _load_series(a.series)
    model = WealthModel(a.model)
    costs = None
    if model is WealthModel.GENERAL_BOOK:
        if not a.book_costs:
            raise CliError(EXIT_VALIDATION, "--book-costs is required for the general model")
        costs = _book_costs(a.book_costs, len(ser))
    ledger = build_ledger(ser)
    X = reconstruct_wealth(ser, model, costs)
    models = [m for m in WealthModel if m is not WealthModel.GENERAL_BOOK]
    cols = {m.value: reconstruct_wealth(ser, m) for m in models}
    cols[model.value] = X
    names = ["n", "ledger"] + list(cols)
    rows = [[n, repr(float(ledger.X[n]))] + [repr(float(c[n])) for c in cols.values()] for n in range(len(ser) + 1)]
    _write(a.out, _csv_text(names, rows))


def cmd_simulate(a):
    from .diffusion.limits import general_cost_limit_check, recovery_limit_check, spread_cost_limit_check
    from .diffusion.simulate import SimConfig, coefficients_from_config
    from .diffusion.supply_demand import flat_book_identity_check, supply_demand_check
    from .lob_core import CostFunction, OrderBook, legendre, shape_from_book

    cfg_d = check_schema(_read_json(a.config), "simulate_config")
    coeffs = coefficients_from_config(cfg_d["coefficients"])
    sim = dict(cfg_d.get("sim", {}))
    seed = a.seed if a.seed is not None else sim.pop("seed", 0)
    sim.pop("seed", None)
    cfg = SimConfig(seed=seed, threads=a.threads, **sim)

    def cost():
        c = cfg_d.get("cost")
        if not c:
            raise CliError(EXIT_VALIDATION, f"check {a.check} needs a 'cost' entry")
        (kind, val), = c.items()
        if kind == "quadratic":
            return CostFunction.quadratic(val)
        if kind == "bid_ask":
            return CostFunction.bid_ask(val)
        return legendre(shape_from_book(OrderBook.from_json(json.dumps(val))))

    if a.check == "spread-limit":
        rep = spread_cost_limit_check(coeffs, cfg).to_dict()
    elif a.check == "recovery":
        t1, t2 = cfg_d.get("window", [0.0, cfg.T])
        rep = recovery_limit_check(coeffs, cfg, t1, t2).to_dict()
    elif a.check == "general-cost":
        rep = general_cost_limit_check(coeffs, cost(), cfg).to_dict()
    elif a.check == "supply-demand":
        rep = supply_demand_check(coeffs, cost(), cfg, cfg_d.get("driver", "inventory")).to_dict()
    else:
        fb = cfg_d.get("flat_book", {})
        rep = flat_book_identity_check(cfg, fb.get("lambda", 1.0), fb.get("m", 1.0), coeffs).to_dict()
    emit_json({"check": a.check, "seed": seed, "report": rep}, "simulate_report", a.out)


def _payoff(text):
    from .applications.hedging import call_payoff, payoff_from_csv, put_payoff

    if text.startswith(("call:", "put:")):
        kind, rest = text.split(":", 1)
        try:
            K = float(rest.split("=", 1)[1] if "=" in rest else rest)
        except ValueError:
            raise CliError(EXIT_VALIDATION, f"bad strike in {text!r}") from None
        return (call_payoff(K) if kind == "call" else put_payoff(K)), K, kind
    try:
        return payoff_from_csv(text), None, "custom"
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot read {text}: {exc.strerror or exc}") from None


def cmd_hedge(a):
    from .applications.hedging import (GridSpec, HedgeProblem, bs_price, hedge_inventory_vol,
                                       hedge_pde_solve)

    f, K, kind = _payoff(a.payoff)
    try:
        Np, Nt = (int(v) for v in a.grid.lower().split("x"))
    except ValueError:
        raise CliError(EXIT_VALIDATION, f"grid must look like 400x400, got {a.grid!r}") from None
    center = K if K is not None else a.center
    if center is None:
        raise CliError(EXIT_VALIDATION, "custom payoffs need --center")
    if a.lam <= 0.5:
        raise CliError(EXIT_VALIDATION, "--lambda must exceed 1/2")
    sd = math.sqrt(2 * a.lam - 1) * a.sigma * math.sqrt(a.T)
    grid = GridSpec(center * math.exp(-a.width * sd), center * math.exp(a.width * sd), Np, Nt, "log", center)
    prob = HedgeProblem(f, a.sigma, a.lam, a.T, grid)
    surf = hedge_pde_solve(prob)
    cls = hedge_inventory_vol(surf)
    pts = [float(v) for v in a.points.split(",")] if a.points else [center * m for m in (0.8, 0.9, 1.0, 1.1, 1.2)]
    vals = surf.value_at(pts)
    js = [int(np.argmin(np.abs(surf.p - x))) for x in pts]
    out = []
    for x, v, j in zip(pts, vals, js):
        bs = float(bs_price(x, K, a.T, sd / math.sqrt(a.T), kind)) if kind in ("call", "put") else None
        out.append({"p": x, "value": float(v), "delta": float(surf.greeks.delta[0, j]),
                    "gamma": float(surf.greeks.gamma[0, j]), "l": float(cls.l[0, j]),
                    "order_type": cls.order_type[0, j].value, "bs_value": bs})
    counts = {k: int(v) for k, v in zip(*np.unique([o.value for o in cls.order_type[0]], return_counts=True))}
    emit_json({"lambda": a.lam, "sigma": a.sigma, "T": a.T,
               "grid": {"Np": Np, "Nt": Nt, "p_min": grid.p_min, "p_max": grid.p_max, "spacing": "log"},
               "points": out, "order_type_counts": counts, "diagnostics": surf.diagnostics}, "hedge_report", a.out)
    if a.surface_csv:
        rows = [[repr(float(p)), repr(float(v)), repr(float(d)), repr(float(g))]
                for p, v, d, g in zip(surf.p, surf.v[0], surf.greeks.delta[0], surf.greeks.gamma[0])]
        _write(a.surface_csv, _csv_text(["p", "value", "delta", "gamma"], rows))


def cmd_mm(a):
    from .applications.market_making import (FILL_FUNCTIONS, RHO_FUNCTIONS, BlackScholes, Martingale,
                                             MMProblem, OrnsteinUhlenbeck, explicit_pair_spread,
                                             mm_optimal_rescaled_spread, mm_solve)

    f, r = FILL_FUNCTIONS[a.f], RHO_FUNCTIONS[a.rho]
    if a.model == "martingale":
        model = Martingale()
    elif a.model == "bs":
        model = BlackScholes(a.mu, a.sigma)
    else:
        model = OrnsteinUhlenbeck(a.kappa, a.p0, a.sigma)
    t = np.linspace(0.0, a.T, a.steps + 1)
    p = np.full_like(t, a.p if a.p is not None else a.p0)
    # price-unit volatility along a flat path: sigma p for Black-Scholes, sigma otherwise
    sig = a.sigma * p if a.model == "bs" else np.full_like(t, a.sigma)
    path = mm_solve(MMProblem(f, r, model, a.T), t, p, sig)
    m1 = mm_optimal_rescaled_spread(1.0, f, r)
    explicit = explicit_pair_spread(1.0) if (a.f, a.rho) == ("inv-square", "inv") else None
    emit_json({"model": a.model, "T": a.T, "m_of_1": m1.m, "M_of_1": m1.M, "explicit_pair": explicit,
               "path": path.to_dict()}, "mm_report", a.out)


def cmd_covartest(a):
    from .stat_tests import reject_null

    rep = reject_null(_load_series(a.series), a.window, a.level)
    emit_json(rep.to_dict(paths=not a.summary), "covartest_report", a.out)


def cmd_report(a):
    from .stat_tests import ReportRow, report_table

    d = Path(a.inputs)
    if not d.is_dir():
        raise CliError(EXIT_IO, f"{d} is not a directory")
    entries = []
    for f in sorted(d.glob("*.json")):
        rep = check_schema(_read_json(f), "covartest_report")
        n = rep["n_trades"]
        entries.append((f.stem, ReportRow(f.stem, rep["overall_rejection"], rep["impact_violations"], n,
                                          100.0 * rep["impact_violations"] / n if n else 0.0,
                                          100.0 * rep["recovery_violations"] / n if n else 0.0)))
    table = report_table(entries)
    text = table.to_csv() if a.format == "csv" else table.to_text()
    if a.out:
        _write(a.out, text)
    else:
        sys.stdout.write(text)


def cmd_selfcheck(a):
    from .selfcheck import run_selfcheck

    res = run_selfcheck(a.seed if a.seed is not None else 0)
    ok = all(r.passed for r in res)
    if a.out:
        emit_json({"passed": ok, "criteria": [r.to_dict() for r in res]}, "selfcheck_report", a.out)
    if not ok:
        raise CliError(EXIT_VALIDATION, "selfcheck failed")


# -- parser ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="64-bit RNG seed")
    common.add_argument("--threads", type=int, default=argparse.SUPPRESS, help="worker threads for path generation")
    common.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)

    p = _Parser(prog="lobkit", description="Limit-order-book wealth accounting and diffusion-limit toolkit.",
                parents=[common])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("ingest", parents=[common], help="tape CSV -> filtered trade-clock series JSON")
    s.add_argument("--tape", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--tick", type=float, default=1e-4)
    s.add_argument("--report", help="write the filter report here instead of stdout")
    s.set_defaults(fn=cmd_ingest)

    s = sub.add_parser("synth", parents=[common], help="generate a synthetic at-quotes tape CSV")
    s.add_argument("--out", required=True)
    s.add_argument("--n-trades", type=int, default=2000)
    s.add_argument("--tick", type=float, default=1e-4)
    s.add_argument("--base-price", type=float, default=100.0)
    s.add_argument("--spread-law", default="1:0.6,2:0.3,3:0.1", help="ticks:prob pairs")
    s.add_argument("--impact-compliance", type=float, default=1.0)
    s.add_argument("--recovery-compliance", type=float, default=1.0)
    s.add_argument("--recovery-bound", choices=["spread", "half", "exact_half"], default="spread")
    s.add_argument("--special-rate", type=float, default=0.0)
    s.add_argument("--hidden-rate", type=float, default=0.0)
    s.set_defaults(fn=cmd_synth)

    s = sub.add_parser("validate", parents=[common], help="count impact and recovery violations")
    s.add_argument("--series", required=True)
    s.add_argument("--out")
    s.set_defaults(fn=cmd_validate)

    s = sub.add_parser("toxicity", parents=[common], help="toxicity indexes rho_d and r_d")
    s.add_argument("--series", required=True)
    s.add_argument("--window", help="inclusive trade range a:b")
    s.add_argument("--out")
    s.add_argument("--covariation-csv", help="also write the running covariation path")
    s.set_defaults(fn=cmd_toxicity)

    s = sub.add_parser("reconstruct", parents=[common], help="wealth paths under each model (CSV)")
    s.add_argument("--series", required=True)
    s.add_argument("--model", choices=["proposed", "classical", "frictionless", "general"], default="proposed")
    s.add_argument("--book-costs", help="JSON book (or list of books, one per trade) for the general model")
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_reconstruct)

    s = sub.add_parser("simulate", parents=[common], help="Monte Carlo check of a diffusion limit")
    s.add_argument("--config", required=True)
    s.add_argument("--check", required=True,
                   choices=["spread-limit", "recovery", "general-cost", "supply-demand", "flat-book"])
    s.add_argument("--out")
    s.set_defaults(fn=cmd_simulate)

    s = sub.add_parser("hedge", parents=[common], help="solve the hedging PDE")
    s.add_argument("--payoff", required=True, help="call:K=100, put:K=100 or a p,f CSV file")
    s.add_argument("--lambda", dest="lam", type=float, default=1.0)
    s.add_argument("--sigma", type=float, default=0.2, help="lognormal volatility")
    s.add_argument("--T", type=float, default=1.0)
    s.add_argument("--grid", default="400x400", help="NpxNt")
    s.add_argument("--width", type=float, default=8.0, help="half-width in standard deviations")
    s.add_argument("--center", type=float, help="grid centre for custom payoffs")
    s.add_argument("--points", help="comma-separated prices to report")
    s.add_argument("--out")
    s.add_argument("--surface-csv")
    s.set_defaults(fn=cmd_hedge)

    s = sub.add_parser("mm", parents=[common], help="market-maker optimal spread")
    s.add_argument("--model", choices=["martingale", "bs", "ou"], default="martingale")
    s.add_argument("--f", default="inv-square", choices=["inv-square", "exp"])
    s.add_argument("--rho", default="inv", choices=["inv", "zero", "one"])
    s.add_argument("--T", type=float, default=1.0)
    s.add_argument("--sigma", type=float, default=1.0)
    s.add_argument("--mu", type=float, default=0.0)
    s.add_argument("--kappa", type=float, default=1.0)
    s.add_argument("--p0", type=float, default=100.0)
    s.add_argument("--p", type=float, help="price held along the path (default p0)")
    s.add_argument("--steps", type=int, default=100)
    s.add_argument("--out")
    s.set_defaults(fn=cmd_mm)

    s = sub.add_parser("covartest", parents=[common], help="windowed rejection test of rho > 0")
    s.add_argument("--series", required=True)
    s.add_argument("--window", type=int, default=100)
    s.add_argument("--level", type=float, default=0.95)
    s.add_argument("--summary", action="store_true", help="omit the C/V/CI paths")
    s.add_argument("--out")
    s.set_defaults(fn=cmd_covartest)

    s = sub.add_parser("report", parents=[common], help="summary table from covartest JSON files")
    s.add_argument("--inputs", required=True)
    s.add_argument("--out")
    s.add_argument("--format", choices=["csv", "text"], default="csv")
    s.set_defaults(fn=cmd_report)

    s = sub.add_parser("selfcheck", parents=[common], help="fast acceptance subset")
    s.add_argument("--out")
    s.set_defaults(fn=cmd_selfcheck)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        args.seed = getattr(args, "seed", None)
        args.threads = getattr(args, "threads", 1)
        logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                            format="%(levelname)s:%(name)s:%(message)s")
        if args.threads < 1:
            raise CliError(EXIT_VALIDATION, "--threads must be >= 1")
        if args.command == "synth" and args.seed is None:
            args.seed = 0
        args.fn(args)
        return EXIT_OK
    except CliError as exc:
        print(f"E:{exc.code}:{exc}", file=sys.stderr)
        return exc.code
    except OSError as exc:
        print(f"E:{EXIT_IO}:{exc}", file=sys.stderr)
        return EXIT_IO
    except (ValueError, KeyError, TypeError) as exc:
        print(f"E:{EXIT_VALIDATION}:{type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
