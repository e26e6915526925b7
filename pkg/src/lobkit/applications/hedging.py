"""Hedging PDE ``v_t + (lambda - 1/2) sigma(t, p)^2 v_pp = 0`` and the order-type
reading of the hedge's inventory volatility ``l = Gamma sigma``."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.linalg import solve_banded
from scipy.special import ndtr

__all__ = [
    "HedgeError",
    "GridSpec",
    "HedgeProblem",
    "Greeks",
    "HedgeSurface",
    "OrderType",
    "HedgeClassification",
    "call_payoff",
    "put_payoff",
    "payoff_from_csv",
    "bs_price",
    "hedge_pde_solve",
    "hedge_inventory_vol",
]


class HedgeError(ValueError):
    pass


def call_payoff(K: float) -> Callable:
    return lambda p: np.maximum(np.asarray(p, dtype=float) - K, 0.0)


def put_payoff(K: float) -> Callable:
    return lambda p: np.maximum(K - np.asarray(p, dtype=float), 0.0)


def payoff_from_csv(path) -> Callable:
    """Piecewise-linear payoff through ``p,f`` rows, extended linearly beyond the ends."""
    data = np.loadtxt(path, delimiter=",", ndmin=2, comments="#",
                      skiprows=1 if _has_header(path) else 0)
    if data.shape[1] != 2 or data.shape[0] < 2:
        raise HedgeError("payoff CSV needs at least two rows of p,f")
    order = np.argsort(data[:, 0])
    xp, fp = data[order, 0], data[order, 1]
    if np.any(np.diff(xp) <= 0):
        raise HedgeError("payoff abscissae must be distinct")
    sl, sr = (fp[1] - fp[0]) / (xp[1] - xp[0]), (fp[-1] - fp[-2]) / (xp[-1] - xp[-2])

    def f(p):
        p = np.asarray(p, dtype=float)
        out = np.interp(p, xp, fp)
        out = np.where(p < xp[0], fp[0] + sl * (p - xp[0]), out)
        return np.where(p > xp[-1], fp[-1] + sr * (p - xp[-1]), out)

    return f


def _has_header(path) -> bool:
    with open(path) as fh:
        first = fh.readline()
    try:
        [float(v) for v in first.split(",")]
        return False
    except ValueError:
        return True


def bs_price(S, K: float, T: float, vol: float, kind: str = "call"):
    """Zero-rate Black-Scholes price."""
    S = np.asarray(S, dtype=float)
    if vol * math.sqrt(T) == 0:
        intrinsic = np.maximum(S - K, 0) if kind == "call" else np.maximum(K - S, 0)
        return intrinsic
    sd = vol * math.sqrt(T)
    d1 = (np.log(S / K) + 0.5 * sd * sd) / sd
    d2 = d1 - sd
    call = S * ndtr(d1) - K * ndtr(d2)
    return call if kind == "call" else call - S + K


@dataclass(frozen=True)
class GridSpec:
    """``Np`` price intervals and ``Nt`` time steps on ``[p_min, p_max]``.

    ``spacing="log"`` places nodes geometrically (``p_min > 0``), ``"linear"``
    uniformly.  ``center`` (e.g. the strike) is snapped onto a node.
    """

    p_min: float
    p_max: float
    Np: int = 400
    Nt: int = 400
    spacing: str = "log"
    center: float | None = None
    rannacher_steps: int = 2

    def __post_init__(self):
        if self.Np < 4 or self.Nt < 1:
            raise HedgeError("grid needs Np >= 4 and Nt >= 1")
        if not self.p_max > self.p_min:
            raise HedgeError("p_max must exceed p_min")
        if self.spacing not in ("log", "linear"):
            raise HedgeError(f"unknown spacing {self.spacing!r}")
        if self.spacing == "log" and self.p_min <= 0:
            raise HedgeError("log spacing needs p_min > 0")

    def nodes(self) -> np.ndarray:
        fwd, inv = (np.log, np.exp) if self.spacing == "log" else (lambda x: x, lambda x: x)
        a, b = fwd(self.p_min), fwd(self.p_max)
        if self.center is not None and self.p_min < self.center < self.p_max:
            c = fwd(self.center)
            h = (b - a) / self.Np
            k = round((c - a) / h)
            a = c - k * h
            b = a + self.Np * h
        x = inv(np.linspace(a, b, self.Np + 1))
        if self.center is not None and self.p_min < self.center < self.p_max:
            x[round((fwd(self.center) - a) / ((b - a) / self.Np))] = self.center
        return x


@dataclass
class HedgeProblem:
    """Terminal-value problem for the hedging PDE.

    ``sigma`` is the absolute price volatility ``sigma(t, p)`` (a number or
    a function); with ``lognormal=True`` a number is read as ``sigma * p``.
    ``mu`` does not enter the PDE and is carried for completeness.
    """

    payoff: Callable
    sigma: object
    lam: float
    T: float
    grid: GridSpec
    mu: object = 0.0
    lognormal: bool = True

    def __post_init__(self):
        if not self.lam > 0.5:
            raise HedgeError("spread/vol ratio must exceed 1/2")
        if not self.T > 0:
            raise HedgeError("maturity must be positive")

    def local_vol(self, t: float, p: np.ndarray) -> np.ndarray:
        if callable(self.sigma):
            v = np.asarray(self.sigma(t, p), dtype=float) * np.ones_like(p)
        elif self.lognormal:
            v = float(self.sigma) * p
        else:
            v = np.full_like(p, float(self.sigma))
        return v

    @classmethod
    def standard(cls, payoff, sigma: float, lam: float, T: float, K: float, Np: int = 400,
                 Nt: int = 400, width: float = 8.0) -> "HedgeProblem":
        """Lognormal problem on ``K exp(+-width * sqrt(2 lam - 1) sigma sqrt(T))``."""
        sd = math.sqrt(2 * lam - 1) * sigma * math.sqrt(T)
        grid = GridSpec(K * math.exp(-width * sd), K * math.exp(width * sd), Np, Nt, "log", K)
        return cls(payoff, sigma, lam, T, grid)


@dataclass
class Greeks:
    delta: np.ndarray
    gamma: np.ndarray
    theta: np.ndarray


@dataclass
class HedgeSurface:
    """Values ``v[i, j] = v(t_i, p_j)`` with Greeks on the same grid."""

    t: np.ndarray
    p: np.ndarray
    v: np.ndarray
    greeks: Greeks
    problem: HedgeProblem
    diagnostics: dict = field(default_factory=dict)

    def value_at(self, S, t_index: int = 0):
        """Cubic-spline interpolation of ``v(t_i, .)`` in the grid coordinate."""
        S = np.asarray(S, dtype=float)
        if np.any(S < self.p[0]) or np.any(S > self.p[-1]):
            raise HedgeError("evaluation point outside the price grid")
        if self.problem.grid.spacing == "log":
            return CubicSpline(np.log(self.p), self.v[t_index])(np.log(S))
        return CubicSpline(self.p, self.v[t_index])(S)


def _d1_d2(p: np.ndarray):
    """Three-point first/second derivative weights on a non-uniform grid (interior nodes)."""
    hm = p[1:-1] - p[:-2]
    hp = p[2:] - p[1:-1]
    d1 = (-hp / (hm * (hm + hp)), (hp - hm) / (hm * hp), hm / (hp * (hm + hp)))
    d2 = (2 / (hm * (hm + hp)), -2 / (hm * hp), 2 / (hp * (hm + hp)))
    return d1, d2


def _apply(w, v):
    return w[0] * v[..., :-2] + w[1] * v[..., 1:-1] + w[2] * v[..., 2:]


def hedge_pde_solve(problem: HedgeProblem) -> HedgeSurface:
    """Crank-Nicolson backward solve with Rannacher start-up.

    ``Gamma = 0`` at both ends, so boundary values keep their terminal
    payoff.  Greeks use three-point differences; ``theta`` is central in t.
    """
    g = problem.grid
    p = g.nodes()
    t = np.linspace(0.0, problem.T, g.Nt + 1)
    dt = problem.T / g.Nt
    f = np.asarray(problem.payoff(p), dtype=float)
    if not np.all(np.isfinite(f)):
        raise HedgeError("payoff not finite on the grid")
    _, w2 = _d1_d2(p)
    n = p.size - 2
    v = np.empty((g.Nt + 1, p.size))
    v[-1] = f
    coef = problem.lam - 0.5
    max_ratio = 0.0

    def op(ti):
        sg = problem.local_vol(ti, p[1:-1])
        if not np.all(np.isfinite(sg)) or np.any(sg <= 0):
            raise HedgeError("local volatility must be positive and finite on the grid")
        a = coef * sg * sg
        return a * w2[0], a * w2[1], a * w2[2]

    def step(cur, t_new, t_old, h, theta):
        lo_n, di_n, up_n = op(t_new)
        rhs = cur[1:-1].copy()
        if theta < 1:
            lo_o, di_o, up_o = op(t_old)
            rhs += (1 - theta) * h * (lo_o * cur[:-2] + di_o * cur[1:-1] + up_o * cur[2:])
        ab = np.zeros((3, n))
        ab[0, 1:] = -theta * h * up_n[:-1]
        ab[1] = 1 - theta * h * di_n
        ab[2, :-1] = -theta * h * lo_n[1:]
        rhs[0] += theta * h * lo_n[0] * cur[0]
        rhs[-1] += theta * h * up_n[-1] * cur[-1]
        out = cur.copy()
        out[1:-1] = solve_banded((1, 1), ab, rhs)
        return out

    ran = min(g.rannacher_steps, g.Nt)
    for i in range(g.Nt - 1, -1, -1):
        cur = v[i + 1]
        if g.Nt - 1 - i < ran:
            half = 0.5 * dt
            mid = step(cur, t[i] + half, t[i + 1], half, 1.0)
            v[i] = step(mid, t[i], t[i] + half, half, 1.0)
        else:
            v[i] = step(cur, t[i], t[i + 1], dt, 0.5)
        lo_n, di_n, _ = op(t[i])
        max_ratio = max(max_ratio, float(np.max(-di_n) * dt / 2))
    if not np.all(np.isfinite(v)):
        raise HedgeError("non-finite values in the solution")

    w1, _ = _d1_d2(p)
    delta = np.empty_like(v)
    gamma = np.zeros_like(v)
    delta[:, 1:-1] = _apply(w1, v)
    delta[:, 0] = (v[:, 1] - v[:, 0]) / (p[1] - p[0])
    delta[:, -1] = (v[:, -1] - v[:, -2]) / (p[-1] - p[-2])
    gamma[:, 1:-1] = _apply(w2, v)
    theta = np.gradient(v, t, axis=0)
    diag = {
        "cn_ratio_max": max_ratio,
        "oscillation_risk": bool(max_ratio > 1.0),
        "rannacher_steps": ran,
        "Np": g.Np,
        "Nt": g.Nt,
    }
    return HedgeSurface(t, p, v, Greeks(delta, gamma, theta), problem, diag)


class OrderType(enum.Enum):
    LIMIT = "LIMIT"
    MARKET = "MARKET"
    NONE = "NONE"


@dataclass
class HedgeClassification:
    l: np.ndarray
    order_type: np.ndarray  # object array of OrderType
    tol: float

    def counts(self) -> dict:
        return {k.value: int(np.sum(self.order_type == k)) for k in OrderType}


def hedge_inventory_vol(surface: HedgeSurface, sigma: object = None, tol: float | None = None
                        ) -> HedgeClassification:
    """``l = Gamma sigma(t, p)``; LIMIT where ``l < -tol``, MARKET where ``l > tol``.

    The default ``tol`` is ``1e-9 * max|v| / min(p)^2 * max(sigma)``, i.e. a
    dollar-gamma threshold far above finite-difference rounding noise.
    """
    prob = surface.problem
    if sigma is None:
        sg = np.stack([prob.local_vol(ti, surface.p) for ti in surface.t])
    elif callable(sigma):
        sg = np.stack([np.asarray(sigma(ti, surface.p), dtype=float) * np.ones_like(surface.p)
                       for ti in surface.t])
    else:
        sg = np.full_like(surface.v, float(sigma))
    l = surface.greeks.gamma * sg
    if tol is None:
        scale = max(float(np.max(np.abs(surface.v))), 1.0) / float(np.min(np.abs(surface.p[surface.p != 0]))) ** 2
        tol = 1e-9 * scale * float(np.max(sg))
    kind = np.full(l.shape, OrderType.NONE, dtype=object)
    kind[l > tol] = OrderType.MARKET
    kind[l < -tol] = OrderType.LIMIT
    return HedgeClassification(l, kind, tol)
