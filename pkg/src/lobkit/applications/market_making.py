"""Risk-neutral market maker: rescaled optimal spread ``m(alpha)`` maximising
``F_a(x) = x f(x) / sqrt(2 pi) - a rho(x) f(x)`` and the ``alpha_t`` closed forms."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import optimize

__all__ = [
    "MMInputError",
    "PriceModel",
    "Martingale",
    "BlackScholes",
    "OrnsteinUhlenbeck",
    "MMProblem",
    "MMSolution",
    "MMPath",
    "FILL_FUNCTIONS",
    "RHO_FUNCTIONS",
    "mm_objective",
    "mm_optimal_rescaled_spread",
    "mm_alpha",
    "mm_solve",
    "explicit_pair_spread",
]

SQRT_2PI = math.sqrt(2 * math.pi)


class MMInputError(ValueError):
    pass


FILL_FUNCTIONS: dict[str, Callable] = {
    "inv-square": lambda x: 1.0 / (1.0 + x) ** 2,
    "exp": lambda x: np.exp(-x),
}
RHO_FUNCTIONS: dict[str, Callable] = {
    "inv": lambda x: 1.0 / (1.0 + x),
    "zero": lambda x: 0.0 * x,
    "one": lambda x: 1.0 + 0.0 * x,
}


def mm_objective(a: float, x, f: Callable, rho_fn: Callable):
    """``F_a(x) = x f(x) / sqrt(2 pi) - a rho(x) f(x)``."""
    x = np.asarray(x, dtype=float)
    fx = f(x)
    return x * fx / SQRT_2PI - a * rho_fn(x) * fx


def explicit_pair_spread(a: float) -> dict:
    """Stationary point for ``f = 1/(1+x)^2``, ``rho = 1/(1+x)``, from
    ``x^2 = 1 + 3 sqrt(2 pi) a``, next to the uncorrected ``sqrt(1 + 3 a)``."""
    return {"derived": math.sqrt(1 + 3 * SQRT_2PI * a), "printed": math.sqrt(1 + 3 * a)}


@dataclass
class MMSolution:
    a: float
    m: float
    M: float
    local_maxima: list[tuple[float, float]] = field(default_factory=list)
    bracket: float = 0.0

    def to_dict(self) -> dict:
        return {"a": self.a, "m": self.m, "M": self.M, "bracket": self.bracket,
                "local_maxima": [list(t) for t in self.local_maxima]}


def _check_inputs(xs: np.ndarray, f: Callable, rho_fn: Callable):
    fx = np.asarray(f(xs), dtype=float)
    if not np.all(np.isfinite(fx)) or np.any(fx <= 0):
        raise MMInputError("fill intensity f must be positive and finite")
    if np.any(np.diff(fx) > 1e-12 * np.abs(fx[:-1])):
        raise MMInputError("fill intensity f must be decreasing")
    r = np.asarray(rho_fn(xs), dtype=float) * np.ones_like(xs)
    if np.any(r < 0) or np.any(r > 1) or not np.all(np.isfinite(r)):
        raise MMInputError("rho must take values in [0, 1]")


def mm_optimal_rescaled_spread(a: float, f: Callable, rho_fn: Callable, *, scan: int = 4001,
                               xtol: float = 1e-10, x0: float = 1.0, max_doublings: int = 60
                               ) -> MMSolution:
    """Global maximiser ``m(a)`` and maximum ``M(a)`` of ``F_a`` on ``[0, inf)``.

    The scan interval ``[0, beta]`` starts at ``max(x0, a + 1)`` and doubles
    until ``F_a`` has decreased over three consecutive doublings; a uniform
    scan then locates local maxima, each refined by golden section.  Ties go
    to the smallest ``x``.
    """
    if not a > 0:
        raise MMInputError("a must be positive")
    F = lambda x: mm_objective(a, x, f, rho_fn)
    beta = max(x0, a + 1.0)
    prev = float(F(beta))
    down = 0
    for _ in range(max_doublings):
        beta *= 2
        cur = float(F(beta))
        down = down + 1 if cur < prev else 0
        prev = cur
        if down == 3:
            break
    else:
        raise MMInputError("F_a keeps increasing; x f(x) must eventually decrease")
    xs = np.linspace(0.0, beta, scan)
    _check_inputs(xs, f, rho_fn)
    ys = F(xs)
    maxima = []
    if ys[0] >= ys[1]:
        maxima.append((0.0, float(ys[0])))
    idx = np.flatnonzero((ys[1:-1] >= ys[:-2]) & (ys[1:-1] > ys[2:])) + 1
    for i in idx:
        lo, mid, hi = xs[i - 1], xs[i], xs[i + 1]
        res = optimize.minimize_scalar(lambda x: -float(F(x)), bracket=(lo, mid, hi), method="golden",
                                       tol=xtol / max(mid, 1.0))
        x = float(res.x) if lo <= res.x <= hi else float(mid)
        maxima.append((x, float(F(x))))
    best = max(v for _, v in maxima)
    tie = 1e-14 * max(abs(best), 1e-300)
    m = min(x for x, v in maxima if v >= best - tie)
    return MMSolution(float(a), m, float(F(m)), sorted(maxima), beta)


# -- price models -----------------------------------------------------------------


class PriceModel(enum.Enum):
    MARTINGALE = "martingale"
    BLACK_SCHOLES = "bs"
    OU = "ou"


@dataclass(frozen=True)
class Martingale:
    kind = PriceModel.MARTINGALE


@dataclass(frozen=True)
class BlackScholes:
    mu: float
    sigma: float
    kind = PriceModel.BLACK_SCHOLES


@dataclass(frozen=True)
class OrnsteinUhlenbeck:
    kappa: float
    p0: float
    sigma: float
    kind = PriceModel.OU


def mm_alpha(model, t, p, T: float):
    """``alpha_t`` for the three closed-form price models (``tau = T - t``).

    Martingale: 1.  Black-Scholes: ``(mu/sigma^2)(e^{mu tau} - 1) + e^{mu tau}``.
    OU: ``-(kappa/sigma^2)(p - p0)^2 (e^{-kappa tau} - 1) + e^{-kappa tau}``.
    """
    t = np.asarray(t, dtype=float)
    if np.any(t > T + 1e-12):
        raise MMInputError("t must not exceed T")
    tau = T - t
    p = np.asarray(p, dtype=float)
    if isinstance(model, Martingale):
        out = np.ones(np.broadcast(t, p).shape)
    elif isinstance(model, BlackScholes):
        e = np.exp(model.mu * tau)
        out = (model.mu / model.sigma**2) * (e - 1) + e + 0 * p
    elif isinstance(model, OrnsteinUhlenbeck):
        e = np.exp(-model.kappa * tau)
        out = -(model.kappa / model.sigma**2) * (p - model.p0) ** 2 * (e - 1) + e
    else:
        raise MMInputError(f"unsupported price model {model!r}")
    return out if out.ndim else float(out)


@dataclass
class MMProblem:
    f: Callable
    rho_fn: Callable
    model: object
    T: float


@dataclass
class MMPath:
    t: np.ndarray
    alpha: np.ndarray
    m: np.ndarray
    M: np.ndarray
    spread: np.ndarray
    inventory_vol: np.ndarray
    expected_pnl: float

    def to_dict(self) -> dict:
        return {k: (v.tolist() if isinstance(v, np.ndarray) else v) for k, v in self.__dict__.items()}


def mm_solve(problem: MMProblem, t, p, sigma) -> MMPath:
    """Spread ``s = sigma m(alpha)``, P&L ``int M(alpha) sigma^2 dt`` (trapezoid) and
    inventory volatility ``sigma f(m(alpha))`` along a path."""
    t = np.asarray(t, dtype=float)
    p = np.broadcast_to(np.asarray(p, dtype=float), t.shape)
    sigma = np.broadcast_to(np.asarray(sigma, dtype=float), t.shape)
    if np.any(sigma <= 0):
        raise MMInputError("sigma must be positive")
    alpha = np.asarray(mm_alpha(problem.model, t, p, problem.T), dtype=float) * np.ones_like(t)
    cache: dict[float, MMSolution] = {}
    m = np.empty_like(t)
    M = np.empty_like(t)
    for i, a in enumerate(alpha):
        a = float(a)
        if a not in cache:
            cache[a] = mm_optimal_rescaled_spread(a, problem.f, problem.rho_fn)
        m[i], M[i] = cache[a].m, cache[a].M
    integrand = M * sigma**2
    pnl = float(np.trapezoid(integrand, t)) if t.size > 1 else 0.0
    inv = sigma * np.asarray(problem.f(m), dtype=float)
    return MMPath(t, alpha, m, M, sigma * m, inv, pnl)
