"""Gaussian expectations ``Phi_sigma(F) = E[F(Z)]``, ``Z ~ N(0, sigma^2)``.

Closed forms are used for the functionals that appear in the limit theorems
(absolute moment, second moment, their combination, and piecewise
polynomials such as transaction-cost functions).  Anything else goes through
adaptive Gauss-Hermite quadrature, with a kink-aware adaptive fallback.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np
from scipy import integrate, special

from ..lob_core import _ConvexPWQ

__all__ = [
    "QuadratureError",
    "Abs",
    "Square",
    "SquareMinusAbs",
    "PiecewisePoly",
    "phi",
    "phi_quadrature",
    "cost_functionals",
]

SQRT_2_OVER_PI = math.sqrt(2.0 / math.pi)


class QuadratureError(ArithmeticError):
    pass


@dataclass(frozen=True)
class Abs:
    """``y -> k |y|``"""

    k: float = 1.0

    def __call__(self, y):
        return self.k * np.abs(y)

    def gaussian_expectation(self, sigma: float) -> float:
        return self.k * sigma * SQRT_2_OVER_PI


@dataclass(frozen=True)
class Square:
    """``y -> k y^2``"""

    k: float = 1.0

    def __call__(self, y):
        return self.k * np.square(y)

    def gaussian_expectation(self, sigma: float) -> float:
        return self.k * sigma * sigma


@dataclass(frozen=True)
class SquareMinusAbs:
    """``y -> y^2 - s |y|``; its expectation vanishes at ``sigma = sqrt(2/pi) s``."""

    s: float

    def __call__(self, y):
        return np.square(y) - self.s * np.abs(y)

    def gaussian_expectation(self, sigma: float) -> float:
        return sigma * sigma - self.s * sigma * SQRT_2_OVER_PI


def _truncated_moments(a: float, b: float, sigma: float, kmax: int) -> list[float]:
    """``int_a^b y^k phi_sigma(y) dy`` for k = 0..kmax."""

    def dens(x):
        if not np.isfinite(x):
            return 0.0
        return math.exp(-0.5 * (x / sigma) ** 2) / (sigma * math.sqrt(2 * math.pi))

    def pw(x, k):
        # x^k * density, with 0 at infinite endpoints
        if not np.isfinite(x):
            return 0.0
        return x**k * dens(x)

    za = -np.inf if a == -np.inf else a / sigma
    zb = np.inf if b == np.inf else b / sigma
    m = [float(special.ndtr(zb) - special.ndtr(za))]
    if kmax >= 1:
        m.append(sigma * sigma * (dens(a) - dens(b)))
    for k in range(2, kmax + 1):
        m.append((k - 1) * sigma * sigma * m[k - 2] + sigma * sigma * (pw(a, k - 1) - pw(b, k - 1)))
    return m


@dataclass(frozen=True)
class PiecewisePoly:
    """Piecewise polynomial ``sum_k coeffs[k] y^k`` on ``(x0, x1)`` plus point masses.

    ``atoms`` are ``(x, weight)`` pairs contributing ``weight * density(x)``
    to the expectation, the Gaussian pairing of a Dirac mass.
    """

    pieces: tuple[tuple[float, float, tuple[float, ...]], ...]
    atoms: tuple[tuple[float, float], ...] = ()

    def __call__(self, y):
        y = np.asarray(y, dtype=float)
        out = np.zeros_like(y)
        for x0, x1, coeffs in self.pieces:
            sel = (y >= x0) & (y < x1) if x1 != np.inf else (y >= x0)
            out[sel] = np.polynomial.polynomial.polyval(y[sel], coeffs)
        return out

    @property
    def kinks(self) -> list[float]:
        pts = {x for x0, x1, _ in self.pieces for x in (x0, x1) if np.isfinite(x)}
        return sorted(pts)

    def gaussian_expectation(self, sigma: float) -> float:
        if sigma == 0:
            return float(self(np.array([0.0]))[0]) + 0.0
        total = 0.0
        for x0, x1, coeffs in self.pieces:
            if x1 <= x0:
                continue
            mom = _truncated_moments(x0, x1, sigma, len(coeffs) - 1)
            total += sum(c * mk for c, mk in zip(coeffs, mom))
        for x, w in self.atoms:
            total += w * math.exp(-0.5 * (x / sigma) ** 2) / (sigma * math.sqrt(2 * math.pi))
        return float(total)


def cost_functionals(c: _ConvexPWQ) -> dict[str, PiecewisePoly]:
    """Functionals of a piecewise-quadratic convex ``c`` used by the limit theorems.

    Keys: ``"c"``, ``"dc"`` (c'), ``"d2c"`` (c'' incl. jump atoms),
    ``"id_dc"`` (y c'(y)), ``"dc_sq"`` (c'(y)^2).  Raises if ``c`` has a
    bounded domain, since Gaussian arguments then leave it with positive
    probability.
    """
    if c.is_bounded_domain():
        raise QuadratureError("cost function with bounded domain has infinite Gaussian expectation")
    P = np.polynomial.polynomial
    pc, pdc, pd2c, pid, psq = [], [], [], [], []
    for x0, x1, a, b, k, ref in c.pieces():
        # a + b (y - ref) + k/2 (y - ref)^2 expanded in powers of y
        val = (a - b * ref + 0.5 * k * ref * ref, b - k * ref, 0.5 * k)
        der = (b - k * ref, k)
        pc.append((x0, x1, val))
        pdc.append((x0, x1, der))
        pd2c.append((x0, x1, (k,)))
        pid.append((x0, x1, tuple(P.polymul((0.0, 1.0), der))))
        psq.append((x0, x1, tuple(P.polymul(der, der))))
    jumps = tuple((float(x), float(hi - lo)) for x, lo, hi in zip(c._kx, c._dlo, c._dhi) if hi > lo)
    return {
        "c": PiecewisePoly(tuple(pc)),
        "dc": PiecewisePoly(tuple(pdc)),
        "d2c": PiecewisePoly(tuple(pd2c), jumps),
        "id_dc": PiecewisePoly(tuple(pid)),
        "dc_sq": PiecewisePoly(tuple(psq)),
    }


@lru_cache(maxsize=32)
def _hermgauss(n: int):
    x, w = special.roots_hermitenorm(n)
    return x, w / math.sqrt(2.0 * math.pi)


def _gauss_hermite(sigma: float, F: Callable, n: int) -> float:
    x, w = _hermgauss(n)
    vals = np.asarray(F(sigma * x), dtype=float)
    return float(w @ vals)


def phi_quadrature(sigma: float, F: Callable, kinks: Sequence[float] = (0.0,)) -> float:
    """Adaptive quadrature of ``F`` against the ``N(0, sigma^2)`` density,
    split at ``kinks``; independent of the closed forms."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")

    def integrand(y):
        return float(np.asarray(F(np.array([y])), dtype=float)[0]) * math.exp(-0.5 * (y / sigma) ** 2)

    pts = sorted(set(float(k) for k in kinks))
    edges = [-np.inf] + pts + [np.inf]
    total = 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        if lo == hi:
            continue
        val, _ = integrate.quad(integrand, lo, hi, epsabs=0.0, epsrel=1e-13, limit=400)
        total += val
    res = total / (sigma * math.sqrt(2 * math.pi))
    if not np.isfinite(res):
        raise QuadratureError("non-finite Gaussian expectation")
    return res


def phi(sigma: float, F, *, nodes: int = 64, rtol: float = 1e-10, max_nodes: int = 1024,
        kinks: Sequence[float] | None = None) -> float:
    """``E[F(Z)]`` for ``Z ~ N(0, sigma^2)``.

    ``F`` may carry its own ``gaussian_expectation`` (closed form), be a
    convex cost function (handled exactly), or be any vectorised callable.
    For callables the Gauss-Hermite node count doubles from ``nodes`` until
    the relative change drops below ``rtol``; past ``max_nodes`` the result
    comes from kink-split adaptive quadrature instead.
    """
    sigma = abs(float(sigma))
    if hasattr(F, "gaussian_expectation"):
        res = F.gaussian_expectation(sigma)
    elif isinstance(F, _ConvexPWQ):
        res = cost_functionals(F)["c"].gaussian_expectation(sigma)
    elif sigma == 0:
        res = float(np.asarray(F(np.array([0.0])), dtype=float)[0])
    else:
        prev = _gauss_hermite(sigma, F, nodes)
        n = nodes
        res = None
        while n < max_nodes:
            n *= 2
            cur = _gauss_hermite(sigma, F, n)
            if abs(cur - prev) <= rtol * max(abs(cur), 1e-300):
                res = cur
                break
            prev = cur
        if res is None:
            res = phi_quadrature(sigma, F, kinks if kinks is not None else (0.0,))
    if not np.isfinite(res):
        raise QuadratureError("non-finite Gaussian expectation")
    return float(res)
