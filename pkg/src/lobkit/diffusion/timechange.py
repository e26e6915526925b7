"""Deterministic time changes ``d tau = n_t^2 dt`` of Ito coefficients."""
from __future__ import annotations

import numpy as np
from scipy import integrate, interpolate

from .simulate import Coefficient, ItoCoefficients, SimulationError

__all__ = ["TimeChange", "time_change"]


class TimeChange:
    """``tau(t) = int_0^t n_u^2 du``: cumulative Simpson on a fine grid, then
    cubic Hermite interpolation using ``tau' = n^2`` (exact for constant ``n``)."""

    def __init__(self, n, horizon: float = 1.0, grid: int = 4097, eps: float = 1e-8):
        self.const = None if callable(n) else float(n)
        self.n = (lambda t: self.const) if self.const is not None else n
        tg = np.linspace(0.0, horizon, grid)
        nv = np.array([self.n(t) for t in tg], dtype=float)
        if not np.all(np.isfinite(nv)) or nv.min() < eps:
            raise SimulationError(f"time-change rate must stay above {eps}")
        self.horizon = horizon
        self._t = tg
        self._tau = None
        if self.const is None:
            tau = np.concatenate([[0.0], integrate.cumulative_simpson(nv * nv, x=tg)])
            self._tau = interpolate.CubicHermiteSpline(tg, tau, nv * nv)

    def tau(self, t):
        if self.const is not None:
            return self.const**2 * t
        if np.any(np.asarray(t) > self.horizon * (1 + 1e-12)):
            raise SimulationError("time outside the time-change horizon")
        return self._tau(t)


def time_change(coeffs: ItoCoefficients, n, horizon: float = 1.0, grid: int = 4097,
                eps: float = 1e-8) -> ItoCoefficients:
    """Coefficients of ``t -> (p, L)_{tau(t)}``.

    ``mu~ = n^2 mu(tau)``, ``b~ = n^2 b(tau)``, ``sigma~ = n sigma(tau)``,
    ``l~ = n l(tau)``, ``s~ = n s(tau)``, ``rho~ = rho(tau)``.  Both ratio
    constants are preserved since the spread and volatility scale alike.
    """
    tc = TimeChange(n, horizon, grid, eps)
    nf, tau = tc.n, tc.tau

    def state(c: Coefficient, power: int) -> Coefficient:
        if c.uses_p:
            return Coefficient(lambda t, p: nf(t) ** power * c(tau(t), p), uses_p=True)
        return Coefficient(lambda t: nf(t) ** power * c(tau(t)))

    def plain(c: Coefficient, power: int) -> Coefficient:
        return Coefficient(lambda t: nf(t) ** power * c(tau(t)))

    return ItoCoefficients(
        mu=state(coeffs.mu, 2),
        sigma=state(coeffs.sigma, 1),
        b=plain(coeffs.b, 2),
        l=plain(coeffs.l, 1),
        rho=plain(coeffs.rho, 0),
        s=plain(coeffs.s, 1),
        spread_vol_ratio=coeffs.spread_vol_ratio,
        recovery_coeff=coeffs.recovery_coeff,
        p0=coeffs.p0,
        L0=coeffs.L0,
    )
