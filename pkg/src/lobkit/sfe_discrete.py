"""Discrete self-financing equations on a trade-clock series: wealth
reconstructions, microstructure validation and toxicity indexes."""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .lob_core import CostFunction, DomainError
from .trade_tape import TradeClockSeries

__all__ = [
    "WealthModel",
    "Increments",
    "StatisticError",
    "ValidationReport",
    "ToxicityRatio",
    "increments",
    "wealth_increments",
    "reconstruct_wealth",
    "validate",
    "toxicity_rho",
    "toxicity_ratio",
    "quad_covariation_path",
]


class WealthModel(enum.Enum):
    FRICTIONLESS = "frictionless"  # dX = L dp
    CLASSICAL = "classical"        # dX = L dp + s/2 |dL|
    PROPOSED = "proposed"          # dX = L dp + s/2 |dL| + dp dL
    GENERAL_BOOK = "general"       # dX = L dp + c_n(-dL) + dp dL


class StatisticError(ValueError):
    """Statistic undefined on the given data (zero variance, zero denominator)."""


class Increments(NamedTuple):
    """Forward increments on a trade clock; ``L`` is the inventory before each step."""

    dp: np.ndarray
    dL: np.ndarray
    s: np.ndarray
    L: np.ndarray


def increments(data, exact: bool = False) -> Increments:
    """Increments of a :class:`TradeClockSeries` (or pass-through).

    With ``exact=True`` prices and spreads stay in integer half-ticks.
    """
    if isinstance(data, Increments):
        return data
    if isinstance(data, TradeClockSeries):
        if exact:
            dp, s = data.dp_h, data.spread_h
        else:
            dp, s = data.dp, data.s
        dL = data.dL
        L = np.concatenate([[0], np.cumsum(dL)[:-1]]).astype(dL.dtype) if dL.size else dL
        return Increments(dp, dL, s, L)
    raise TypeError(f"cannot take increments of {type(data).__name__}")


def _window(inc: Increments, window) -> Increments:
    if window is None:
        return inc
    a, b = window
    n = inc.dL.shape[0]
    if not (0 <= a <= b < n):
        raise IndexError(f"window {a}:{b} outside 0:{n - 1}")
    sl = slice(a, b + 1)
    return Increments(inc.dp[sl], inc.dL[sl], inc.s[sl], inc.L[sl])


def wealth_increments(data, model: WealthModel | str,
                      costs: Sequence[CostFunction] | CostFunction | None = None,
                      exact: bool = False) -> np.ndarray:
    """Per-step wealth increments under ``model``.

    For the three bid/ask models with ``exact=True`` the result is an int64
    array in half-ticks.
    """
    model = WealthModel(model) if isinstance(model, str) else model
    inc = increments(data, exact=exact and model is not WealthModel.GENERAL_BOOK)
    dp, dL, s, L = inc
    if exact and model is not WealthModel.GENERAL_BOOK:
        half = s // 2
    else:
        half = s / 2
    if model is WealthModel.FRICTIONLESS:
        return L * dp
    if model is WealthModel.CLASSICAL:
        return L * dp + half * np.abs(dL)
    if model is WealthModel.PROPOSED:
        return L * dp + half * np.abs(dL) + dp * dL
    if costs is None:
        raise ValueError("GENERAL_BOOK needs one cost function per step")
    n = dL.shape[0]
    if isinstance(costs, CostFunction):
        costs = [costs] * n
    if len(costs) != n:
        raise ValueError(f"expected {n} cost functions, got {len(costs)}")
    spread_cost = np.empty(n)
    for i, c in enumerate(costs):
        lo, hi = c.domain
        l = -float(dL[i])
        if l < lo or l > hi:
            raise DomainError(f"step {i}: volume {dL[i]} outside cost domain")
        spread_cost[i] = c(l)
    return L * dp + spread_cost + dp * dL


def reconstruct_wealth(data, model: WealthModel | str,
                       costs: Sequence[CostFunction] | CostFunction | None = None,
                       exact: bool = False) -> np.ndarray:
    """Wealth path ``X_0 = 0, ..., X_N`` as cumulative model increments.

    ``exact=True`` keeps bid/ask models in integer half-ticks, matching
    :func:`lobkit.trade_tape.build_ledger` bit for bit.
    """
    model = WealthModel(model) if isinstance(model, str) else model
    integral = isinstance(data, TradeClockSeries) and model is not WealthModel.GENERAL_BOOK
    d = wealth_increments(data, model, costs, exact=integral)
    out = np.zeros(d.shape[0] + 1, dtype=d.dtype)
    np.cumsum(d, out=out[1:])
    if integral and not exact:
        return out * data.half_tick
    return out


@dataclass(frozen=True)
class ValidationReport:
    n_trades: int
    impact_violations: int
    recovery_violations: int
    impact_indices: tuple[int, ...]
    recovery_indices: tuple[int, ...]

    @property
    def impact_fraction(self) -> float:
        return self.impact_violations / self.n_trades if self.n_trades else 0.0

    @property
    def recovery_fraction(self) -> float:
        return self.recovery_violations / self.n_trades if self.n_trades else 0.0

    def to_dict(self) -> dict:
        return {
            "n_trades": self.n_trades,
            "impact_violations": self.impact_violations,
            "impact_fraction": float(f"{self.impact_fraction:.4g}"),
            "recovery_violations": self.recovery_violations,
            "recovery_fraction": float(f"{self.recovery_fraction:.4g}"),
            "impact_indices": list(self.impact_indices),
            "recovery_indices": list(self.recovery_indices),
        }


def validate(data) -> ValidationReport:
    """Count steps with ``dL * dp > 0`` (impact) and ``|dp| > s`` (recovery)."""
    exact = isinstance(data, TradeClockSeries)
    dp, dL, s, _ = increments(data, exact=exact)
    impact = np.flatnonzero(dL * dp > 0)
    recovery = np.flatnonzero(np.abs(dp) > s)
    return ValidationReport(int(dL.shape[0]), int(impact.size), int(recovery.size),
                            tuple(int(i) for i in impact), tuple(int(i) for i in recovery))


def toxicity_rho(data, window: tuple[int, int] | None = None) -> float:
    """Negative Pearson correlation of inventory and price increments."""
    dp, dL, _, _ = _window(increments(data), window)
    if dL.shape[0] < 2:
        raise StatisticError("need at least two steps")
    x = dL.astype(float) - dL.mean()
    y = dp.astype(float) - dp.mean()
    sx, sy = np.sqrt(x @ x), np.sqrt(y @ y)
    if sx == 0 or sy == 0:
        raise StatisticError("zero variance in window")
    return float(-(x @ y) / (sx * sy))


@dataclass(frozen=True)
class ToxicityRatio:
    """Impact-to-spread ratio together with its two wealth components."""

    ratio: float
    spread_component: float  # sum of s/2 |dL|
    impact_component: float  # sum of dp dL

    def to_dict(self) -> dict:
        return {"r_d": self.ratio, "spread_component": self.spread_component,
                "impact_component": self.impact_component}


def toxicity_ratio(data, window: tuple[int, int] | None = None) -> ToxicityRatio:
    """``-2 sum(dp dL) / sum(s |dL|)``."""
    dp, dL, s, _ = _window(increments(data), window)
    spread = float(np.sum(s * np.abs(dL))) / 2
    impact = float(np.sum(dp * dL))
    if spread == 0:
        raise StatisticError("zero spread component")
    return ToxicityRatio(-impact / spread, spread, impact)


def quad_covariation_path(data) -> np.ndarray:
    """Running sum of ``dp * dL`` (entry n covers steps 0..n)."""
    dp, dL, _, _ = increments(data)
    return np.cumsum(dp * dL)
