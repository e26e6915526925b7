"""Monte Carlo checks of the diffusion limits of the discrete wealth equations."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from ..lob_core import CostFunction, DomainError
from .gaussian import SQRT_2_OVER_PI, cost_functionals
from .simulate import ItoCoefficients, PathBundle, SimConfig, mc_mean, simulate_paths

__all__ = [
    "GrowthError",
    "ConvergenceReport",
    "bias_allowance",
    "spread_cost_statistic",
    "spread_cost_limit_check",
    "recovery_statistic",
    "recovery_limit_check",
    "general_cost_statistic",
    "general_cost_limit_check",
    "check_growth",
]

COARSEN = 4


class GrowthError(ValueError):
    """Cost function grows faster than quadratically (or has bounded domain)."""


@dataclass
class ConvergenceReport:
    """``passed`` iff ``|mean - target| <= 3 stderr + bias_allowance``.

    ``mean`` and ``stderr`` refer to ``statistic - target`` per path when
    the target is path dependent; ``target`` is then the mean target.
    """

    name: str
    N: int
    M: int
    T: float
    mean: float
    stderr: float
    target: float
    coarse_N: int
    coarse_mean: float
    bias_allowance: float
    passed: bool = False
    details: dict = field(default_factory=dict)

    def __post_init__(self):
        self.passed = bool(abs(self.mean - self.target) <= 3 * self.stderr + self.bias_allowance)

    @property
    def error(self) -> float:
        return self.mean - self.target

    def to_dict(self) -> dict:
        d = asdict(self)
        d["error"] = self.error
        return d


def bias_allowance(mean_fine: float, N_fine: int, mean_coarse: float, N_coarse: int) -> float:
    """``|C| / sqrt(N_fine)`` with ``C`` fitted from ``mean = m + C / sqrt(N)`` at two N."""
    denom = 1 / math.sqrt(N_fine) - 1 / math.sqrt(N_coarse)
    C = (mean_fine - mean_coarse) / denom
    return abs(C) / math.sqrt(N_fine)


def _report(name, bundle: PathBundle, stat: Callable[[PathBundle], tuple[np.ndarray, np.ndarray]],
            T: float, details=None) -> ConvergenceReport:
    """``stat`` returns per-path (value, target) arrays."""
    val, tgt = stat(bundle)
    diff = val - tgt
    m, se = mc_mean(diff)
    target = float(np.mean(tgt))
    coarse = bundle.coarsen(COARSEN)
    cval, ctgt = stat(coarse)
    cm = float(np.mean(cval - ctgt))
    allow = bias_allowance(m, bundle.N, cm, coarse.N)
    return ConvergenceReport(name, bundle.N, bundle.M, T, m + target, se, target, coarse.N,
                             cm + target, allow, details=details or {})


def _grid_values(coef, t) -> np.ndarray:
    return np.array([coef(ti) for ti in t], dtype=float)


# -- spread costs ---------------------------------------------------------------


def spread_cost_statistic(bundle: PathBundle) -> np.ndarray:
    """``S_N = sum_n (1 / 2N) s(n/N) |sqrt(N) dL_n|`` per path."""
    rn = math.sqrt(bundle.N)
    return (bundle.s[:-1] / (2 * bundle.N) * np.abs(rn * bundle.dL)).sum(axis=1)


def spread_cost_limit_check(coeffs: ItoCoefficients, cfg: SimConfig,
                            bundle: PathBundle | None = None) -> ConvergenceReport:
    """``S_N`` against ``int s_t |l_t| / sqrt(2 pi) dt`` (Riemann sum on the grid)."""
    bundle = bundle if bundle is not None else simulate_paths(coeffs, cfg)

    def stat(b):
        t = b.t[:-1]
        tgt = float(np.sum(b.s[:-1] * np.abs(_grid_values(coeffs.l, t)))) / b.N / math.sqrt(2 * math.pi)
        return spread_cost_statistic(b), np.full(b.M, tgt)

    return _report("spread-limit", bundle, stat, cfg.T)


# -- price recovery -------------------------------------------------------------


def _window(b: PathBundle, t1: float, t2: float) -> slice:
    K = b.t.size - 1
    n1 = int(math.floor(t1 * b.N + 1e-9))
    n2 = min(int(math.floor(t2 * b.N + 1e-9)), K)
    if not 0 <= n1 < n2:
        raise ValueError("need 0 <= t1 < t2 <= T")
    return slice(n1, n2)


def _sigma_grid(coeffs: ItoCoefficients, b: PathBundle, sl: slice) -> np.ndarray:
    idx = range(sl.start, sl.stop)
    if coeffs.sigma.uses_p:
        return np.stack([np.asarray(coeffs.sigma(b.t[n], b.p[:, n]), dtype=float) for n in idx], axis=1)
    return np.broadcast_to(np.array([coeffs.sigma(b.t[n]) for n in idx], dtype=float), (b.M, len(idx)))


def recovery_statistic(bundle: PathBundle, t1: float, t2: float) -> np.ndarray:
    """``(1/N) sum_{t1 N <= n < t2 N} ((sqrt N dp_n)^2 - s_n |sqrt N dp_n|)`` per path."""
    sl = _window(bundle, t1, t2)
    y = math.sqrt(bundle.N) * bundle.dp[:, sl]
    return (y * y - bundle.s[sl] * np.abs(y)).sum(axis=1) / bundle.N


def recovery_limit_check(coeffs: ItoCoefficients, cfg: SimConfig, t1: float = 0.0, t2: float | None = None,
                         bundle: PathBundle | None = None) -> ConvergenceReport:
    """Recovery statistic against ``int (sigma - sqrt(2/pi) s) sigma dt`` over ``[t1, t2)``."""
    t2 = cfg.T if t2 is None else t2
    bundle = bundle if bundle is not None else simulate_paths(coeffs, cfg)

    def stat(b):
        sl = _window(b, t1, t2)
        sg = _sigma_grid(coeffs, b, sl)
        tgt = ((sg - SQRT_2_OVER_PI * b.s[sl]) * sg).sum(axis=1) / b.N
        return recovery_statistic(b, t1, t2), tgt

    return _report("recovery", bundle, stat, cfg.T, {"t1": t1, "t2": t2})


# -- general costs --------------------------------------------------------------


def check_growth(c: CostFunction, C: float | None = None) -> None:
    """Reject costs that are infinite somewhere or grow faster than ``l^2``.

    Sampled at ``l = +-2^k``; the ratio ``c(l) / (1 + l^2)`` must stay bounded
    (by ``C`` when given, else must not keep growing over the last decades).
    """
    lo, hi = c.domain
    if np.isfinite(lo) or np.isfinite(hi):
        raise GrowthError("cost function is infinite beyond a finite volume")
    x = 2.0 ** np.arange(0, 41)
    for sgn in (1.0, -1.0):
        r = np.asarray(c(sgn * x), dtype=float) / (1 + x * x)
        if not np.all(np.isfinite(r)):
            raise GrowthError("non-finite cost value")
        if C is not None and np.any(r > C):
            raise GrowthError(f"c(l) exceeds {C} (1 + l^2)")
        if r[-1] > 1.01 * r[-11] + 1e-300 and r[-1] > 2 * r[-20]:
            raise GrowthError("cost grows faster than quadratically")


def _cost_at(cost, t) -> CostFunction:
    return cost(t) if callable(cost) and not isinstance(cost, CostFunction) else cost


def general_cost_statistic(bundle: PathBundle, cost) -> np.ndarray:
    """``(1/N) sum_n c_{n/N}(-sqrt(N) dL_n)`` per path; ``-dL`` is the taker volume."""
    y = -math.sqrt(bundle.N) * bundle.dL
    if isinstance(cost, CostFunction):
        vals = cost.evaluate(y.ravel()).reshape(y.shape)
    else:
        vals = np.stack([_cost_at(cost, bundle.t[n]).evaluate(y[:, n]) for n in range(y.shape[1])], axis=1)
    if not np.all(np.isfinite(vals)):
        raise DomainError("volume outside cost domain")
    return vals.sum(axis=1) / bundle.N


def general_cost_limit_check(coeffs: ItoCoefficients, cost, cfg: SimConfig,
                             bundle: PathBundle | None = None) -> ConvergenceReport:
    """Cost sum against ``int Phi_{l_t}(c_t) dt``; ``details["vol_bound"]`` checks
    ``(1/N) sum ((sqrt N dp)^2 - c'(-sqrt N dL)^2)`` against
    ``int (sigma^2 - Phi_{l_t}((c'_t)^2)) dt``.

    ``cost`` is a :class:`CostFunction` or a function ``t -> CostFunction``.
    """
    bundle = bundle if bundle is not None else simulate_paths(coeffs, cfg)
    cache: dict = {}

    def functionals(t):
        c = _cost_at(cost, t)
        key = id(c)
        if key not in cache:
            check_growth(c)
            cache[key] = (c, cost_functionals(c))
        return cache[key]

    def phi_at(t, name):
        c, f = functionals(t)
        return f[name].gaussian_expectation(abs(float(coeffs.l(t))))

    def stat(b):
        t = b.t[:-1]
        tgt = sum(phi_at(ti, "c") for ti in t) / b.N
        return general_cost_statistic(b, cost), np.full(b.M, tgt)

    def vol_stat(b):
        t = b.t[:-1]
        K = t.size
        y = -math.sqrt(b.N) * b.dL
        dc = np.stack([functionals(t[n])[0].derivative_array(y[:, n], "inner") for n in range(K)], axis=1) \
            if not isinstance(cost, CostFunction) else cost.derivative_array(y.ravel(), "inner").reshape(y.shape)
        x = math.sqrt(b.N) * b.dp
        val = (x * x - dc * dc).sum(axis=1) / b.N
        sg = _sigma_grid(coeffs, b, slice(0, K))
        tgt = (sg * sg).sum(axis=1) / b.N - sum(phi_at(ti, "dc_sq") for ti in t) / b.N
        return val, tgt

    vb = _report("vol-bound", bundle, vol_stat, cfg.T)
    return _report("general-cost", bundle, stat, cfg.T, {"vol_bound": vb.to_dict()})
