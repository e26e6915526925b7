"""Fast subset of the acceptance criteria, runnable from the command line."""
from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

__all__ = ["CheckResult", "run_selfcheck"]


@dataclass
class CheckResult:
    id: int
    name: str
    passed: bool
    detail: str
    seconds: float

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'} [{self.id:2d}] {self.name}: {self.detail} ({self.seconds:.2f}s)"

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def _accounting(seed):
    from .sfe_discrete import reconstruct_wealth
    from .synthetic import TapeParams, generate_series
    from .trade_tape import build_ledger

    rng = np.random.default_rng(seed)
    worst = 0
    for k in range(50):
        n = int(rng.integers(1, 2000))
        ser = generate_series(TapeParams(n_trades=n, impact_compliance=0.9, recovery_compliance=0.9), seed + k)
        worst = max(worst, int(np.max(np.abs(reconstruct_wealth(ser, "proposed", exact=True) - build_ledger(ser).X_h))))
    return worst == 0, f"max |proposed - ledger| = {worst} half-ticks over 50 tapes"


def _frictionless(seed):
    from .sfe_discrete import reconstruct_wealth
    from .synthetic import TapeParams, generate_series

    ser = generate_series(TapeParams(n_trades=5000, spread_law={2: 0.5, 4: 0.5}, recovery_bound="exact_half"), seed)
    a = reconstruct_wealth(ser, "proposed", exact=True)
    b = reconstruct_wealth(ser, "frictionless", exact=True)
    return bool(np.array_equal(a, b)), f"identical paths over {len(ser)} trades: {bool(np.array_equal(a, b))}"


def _legendre(seed):
    from .lob_core import execution_consistency
    from .synthetic import random_book

    rng = np.random.default_rng(seed)
    f = c = 0.0
    for _ in range(100):
        r = execution_consistency(random_book(rng))
        f, c = max(f, r["fenchel_max_rel"]), max(c, r["cash_max_rel"])
    return f <= 1e-12 and c <= 1e-12, f"fenchel {f:.1e}, cash {c:.1e} (100 books)"


def _spread(seed):
    from .diffusion.limits import spread_cost_limit_check
    from .diffusion.simulate import ItoCoefficients, SimConfig

    r = spread_cost_limit_check(ItoCoefficients(s=0.02, l=1.0), SimConfig(N=4000, M=100, seed=seed))
    return r.passed, f"mean {r.mean:.7f} target {r.target:.7f} se {r.stderr:.1e} bias {r.bias_allowance:.1e}"


def _recovery(seed):
    from .diffusion.limits import recovery_limit_check
    from .diffusion.simulate import ItoCoefficients, SimConfig

    r = recovery_limit_check(ItoCoefficients(s=1.0, sigma=math.sqrt(2 / math.pi)), SimConfig(N=4000, M=100, seed=seed))
    ok = abs(r.mean - r.target) <= 3 * r.stderr
    return ok, f"mean {r.mean:.2e} target 0 se {r.stderr:.1e}"


def _general(seed):
    from .diffusion.limits import general_cost_limit_check
    from .diffusion.simulate import ItoCoefficients, SimConfig
    from .lob_core import CostFunction

    r = general_cost_limit_check(ItoCoefficients(l=1.0), CostFunction.quadratic(1.0), SimConfig(N=4000, M=100, seed=seed))
    ok = abs(r.mean - 0.5) <= 3 * r.stderr
    return ok, f"mean {r.mean:.5f} target 0.5 se {r.stderr:.1e}"


def _hedge(seed):
    from .applications.hedging import HedgeProblem, bs_price, call_payoff, hedge_pde_solve

    S = np.array([80.0, 90.0, 100.0, 110.0, 120.0])
    worst = 0.0
    for lam in (0.75, 1.0, 1.5):
        s = hedge_pde_solve(HedgeProblem.standard(call_payoff(100.0), 0.2, lam, 1.0, 100.0))
        bs = bs_price(S, 100.0, 1.0, math.sqrt(2 * lam - 1) * 0.2)
        worst = max(worst, float(np.max(np.abs(s.value_at(S) / bs - 1))))
    return worst <= 1e-3, f"max relative error {worst:.1e} (400x400)"


def _mm(seed):
    from .applications.market_making import (FILL_FUNCTIONS, RHO_FUNCTIONS, MMProblem, Martingale,
                                             mm_objective, mm_optimal_rescaled_spread, mm_solve)

    f, r = FILL_FUNCTIONS["inv-square"], RHO_FUNCTIONS["inv"]
    sols = [mm_optimal_rescaled_spread(a, f, r) for a in (0.25, 0.5, 1.0, 2.0, 4.0)]
    pos = all(s.m > 0 for s in sols)
    dec = all(x.M > y.M for x, y in zip(sols, sols[1:]))
    path = mm_solve(MMProblem(f, r, Martingale(), 1.0), np.linspace(0, 1, 51), 100.0, 0.3)
    const = bool(np.all(path.spread == path.spread[0]))
    xs = np.linspace(0.0, sols[2].bracket, 100_001)
    ys = mm_objective(1.0, xs, f, r)
    i = int(np.argmax(ys))
    y0, y1, y2 = ys[i - 1], ys[i], ys[i + 1]
    h = xs[1] - xs[0]
    xg = xs[i] + 0.5 * h * (y0 - y2) / (y0 - 2 * y1 + y2)
    agree = abs(xg - sols[2].m) <= 1e-6
    return pos and dec and const and agree, \
        f"m(1)={sols[2].m:.6f} M decreasing={dec} constant spread={const} grid gap={abs(xg - sols[2].m):.1e}"


def _supply(seed):
    from .diffusion.simulate import ItoCoefficients, SimConfig
    from .diffusion.supply_demand import supply_demand_check
    from .lob_core import CostFunction

    r = supply_demand_check(ItoCoefficients(l=1.0, recovery_coeff=1.0), CostFunction.quadratic(1.0),
                            SimConfig(N=4000, M=100, seed=seed))
    ok = r.vol.within() and abs(r.covariation.mean + 1.0) <= 3 * r.covariation.stderr
    return ok, f"vol {r.vol.mean:.4f} cov {r.covariation.mean:.4f} (lambda 1)"


def _flat(seed):
    from .diffusion.simulate import SimConfig
    from .diffusion.supply_demand import flat_book_identity_check

    r = flat_book_identity_check(SimConfig(N=10_000, M=4, seed=seed))
    return r.verified_residual <= 1e-12, \
        f"verified residual {r.verified_residual:.1e}, uncorrected form residual {r.printed_residual:.2f}"


def _clt(seed):
    from .diffusion.simulate import ItoCoefficients, SimConfig, simulate_paths
    from .stat_tests import ci, clt_stats, reject_null

    b = simulate_paths(ItoCoefficients(rho=-0.5), SimConfig(N=1000, M=200, seed=seed))
    hit = 0
    for i in range(b.M):
        C, V = clt_stats(b.p[i], b.L[i], b.N)
        lo, hi = ci(C[-1], V[-1], b.N, 0.95)
        hit += lo <= -0.5 <= hi
    cov = hit / b.M
    band = 3 * math.sqrt(0.95 * 0.05 / b.M)
    rj = reject_null(simulate_paths(ItoCoefficients(rho=-0.8), SimConfig(N=10_000, M=1, seed=seed + 1)))
    ok = abs(cov - 0.95) <= band and rj.overall_rejection >= 0.99
    return ok, f"coverage {cov:.3f} (200 reps), rejection {rj.overall_rejection:.6f}"


def _report(seed):
    from .stat_tests import ReportRow, parse_report_csv, report_table

    t = report_table([("KO", ReportRow("KO", 0.9876695, 72, 20362, 100 * 72 / 20362, 13.932816))])
    text = t.to_csv()
    return parse_report_csv(text).to_csv() == text and text.splitlines()[1] == \
        "KO,0.9876695,72,20362,0.3535998,13.932816", text.splitlines()[1]


CHECKS = [
    (1, "accounting exactness", _accounting),
    (2, "frictionless recovery", _frictionless),
    (3, "conjugacy and execution cash", _legendre),
    (4, "spread-cost limit", _spread),
    (5, "recovery boundary", _recovery),
    (6, "general-cost limit", _general),
    (7, "hedging PDE vs Black-Scholes", _hedge),
    (8, "market-maker spread", _mm),
    (9, "supply-demand moments", _supply),
    (10, "flat-book identity", _flat),
    (11, "CLT coverage and rejection", _clt),
    (12, "report fidelity", _report),
]


def run_selfcheck(seed: int = 0, echo=print) -> list[CheckResult]:
    out = []
    for cid, name, fn in CHECKS:
        t0 = time.perf_counter()
        try:
            ok, detail = fn(seed)
        except Exception as exc:  # a crash is a failed check, not an aborted run
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        res = CheckResult(cid, name, bool(ok), detail, time.perf_counter() - t0)
        if echo:
            echo(res.line())
        out.append(res)
    return out
