"""Deterministic synthetic execution tapes with controllable violation rates."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .lob_core import OrderBook
from .trade_tape import Aggressor, Flag, TradeClockSeries, TradeRecord, write_tape

__all__ = ["TapeParams", "generate_records", "generate_series", "generate_synthetic_tape", "random_book"]


@dataclass
class TapeParams:
    """Generator settings.

    ``spread_law`` maps spread sizes (in ticks) to probabilities.  Each step
    independently violates the impact inequality with probability
    ``1 - impact_compliance`` and the recovery inequality with probability
    ``1 - recovery_compliance``.  ``recovery_bound`` caps compliant price
    moves at one spread (``"spread"``) or half a spread (``"half"``);
    ``"exact_half"`` forces every move to exactly half a spread against the
    provider, which is the frictionless-recovery construction.
    """

    n_trades: int = 1000
    tick: float = 1e-4
    base_price: float = 100.0
    spread_law: dict = field(default_factory=lambda: {1: 0.6, 2: 0.3, 3: 0.1})
    impact_compliance: float = 1.0
    recovery_compliance: float = 1.0
    recovery_bound: str = "spread"
    max_lots: int = 10
    lot_size: int = 100
    special_rate: float = 0.0
    hidden_rate: float = 0.0

    def check(self):
        for name in ("impact_compliance", "recovery_compliance", "special_rate", "hidden_rate"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        if self.n_trades < 0:
            raise ValueError("n_trades must be non-negative")
        if self.recovery_bound not in ("spread", "half", "exact_half"):
            raise ValueError(f"unknown recovery_bound {self.recovery_bound!r}")
        if not self.spread_law or any(int(k) <= 0 for k in self.spread_law):
            raise ValueError("spread_law needs positive tick sizes")
        probs = np.array(list(self.spread_law.values()), dtype=float)
        if np.any(probs < 0) or not np.isclose(probs.sum(), 1.0):
            raise ValueError("spread_law probabilities must be non-negative and sum to 1")


def _draw(params: TapeParams, seed: int) -> dict:
    """Vectorised tape arrays; trade n's quotes reflect the move after trade n-1."""
    params.check()
    rng = np.random.default_rng(seed)
    sizes = np.array(sorted(int(k) for k in params.spread_law))
    probs = np.array([params.spread_law[k] if k in params.spread_law else params.spread_law[str(k)]
                      for k in sizes], dtype=float)
    if params.recovery_bound == "exact_half":
        if np.any(sizes % 2):
            raise ValueError("exact half-spread moves need even spreads")
    n = params.n_trades
    spreads = rng.choice(sizes, size=n, p=probs / probs.sum())
    sign = np.where(rng.random(n) < 0.5, 1, -1)  # +1: SELL aggressor, provider buys
    lots = rng.integers(1, params.max_lots + 1, size=n) * params.lot_size
    impact_bad = rng.random(n) >= params.impact_compliance
    recovery_bad = rng.random(n) >= params.recovery_compliance
    special = rng.random(n) < params.special_rate
    hidden = rng.random(n) < params.hidden_rate
    gaps = rng.integers(1_000, 5_000_000, size=n)

    base_ticks = round(params.base_price / params.tick)
    moves = _moves(rng, spreads, impact_bad, recovery_bad, params.recovery_bound)
    direction = np.where(impact_bad[:-1], sign[:-1], -sign[:-1])
    mid0 = 2 * base_ticks + (int(spreads[0]) % 2 if n else 0)
    mid_h = mid0 + np.concatenate([[0], np.cumsum(direction * moves)]).astype(np.int64)
    if n and mid_h.min() <= 2 * int(sizes.max()) + 4:
        raise ValueError("price walked to zero; raise base_price")
    bid = (mid_h - spreads) // 2
    ask = bid + spreads
    ts = 34_200_000_000_000 + np.cumsum(gaps)
    return {"sign": sign, "lots": lots, "bid": bid, "ask": ask, "ts": ts, "special": special, "hidden": hidden}


def generate_records(params: TapeParams, seed: int) -> list[TradeRecord]:
    """Generate an at-quotes tape; trade n's quotes reflect the move after trade n-1."""
    d = _draw(params, seed)
    sign, bid, ask = d["sign"], d["bid"], d["ask"]
    records = []
    for i in range(sign.size):
        aggr = Aggressor.SELL if sign[i] > 0 else Aggressor.BUY
        flags = set()
        if d["special"][i]:
            flags.add(Flag.SPECIAL_DEAL)
        if d["hidden"][i]:
            flags.add(Flag.HIDDEN)
        price = bid[i] if aggr is Aggressor.SELL else ask[i]
        records.append(TradeRecord(i + 1, int(d["ts"][i]), int(price), int(d["lots"][i]), aggr,
                                   frozenset(flags), int(bid[i]), int(ask[i])))
    return records


def _moves(rng, spreads, impact_bad, recovery_bad, bound):
    """Absolute mid moves (half-ticks) between consecutive trades.

    Parity must equal that of the spread change so the next quotes land on ticks.
    """
    s = spreads[:-1].astype(np.int64)
    parity = (spreads[1:] - spreads[:-1]) % 2
    if bound == "exact_half":
        return s
    cap = 2 * s if bound == "spread" else s
    lo = impact_bad[:-1].astype(np.int64)
    start = lo + (parity - lo) % 2
    count = np.where(start <= cap, (cap - start) // 2 + 1, 0)
    fallback = count == 0
    start = np.where(fallback, cap + 1 + (parity - cap - 1) % 2, start)
    count = np.where(fallback, 1, count)
    ok = start + 2 * rng.integers(0, count)
    first_bad = 2 * s + 1 + (parity - 2 * s - 1) % 2
    bad = first_bad + 2 * rng.integers(0, 2, size=s.size)
    return np.where(recovery_bad[:-1], bad, ok)


def generate_synthetic_tape(path, params: TapeParams, seed: int) -> list[TradeRecord]:
    """Write the generated tape as CSV and return the records."""
    recs = generate_records(params, seed)
    write_tape(recs, path, params.tick)
    return recs


def generate_series(params: TapeParams, seed: int) -> TradeClockSeries:
    """Series of ``params.n_trades`` trades whose closing mid comes from one extra
    generated trade, so the last price increment follows the same law."""
    extra = TapeParams(**{**params.__dict__, "n_trades": params.n_trades + 1})
    d = _draw(extra, seed)
    bid, ask = d["bid"].astype(np.int64), d["ask"].astype(np.int64)
    dL = (d["sign"] * d["lots"]).astype(np.int64)[:-1]
    mid_h = bid + ask if params.n_trades else bid[:0]
    spread_h = 2 * (ask - bid)[:-1]
    dK_h = np.where(dL >= 0, -2 * bid[:-1] * dL, -2 * ask[:-1] * dL)
    return TradeClockSeries(params.tick, mid_h, spread_h, dL, dK_h)


def random_book(rng: np.random.Generator, max_levels: int = 20, tick: float = 1e-4,
                mid_ticks: int = 1_000_000) -> OrderBook:
    """Random two-sided book with gaps between levels and lognormal volumes."""
    nb, na = rng.integers(1, max_levels + 1, size=2)
    spread = int(rng.integers(1, 6))
    best_bid = mid_ticks - spread // 2
    bid_px = best_bid - np.concatenate([[0], np.cumsum(rng.integers(1, 4, size=nb - 1))])
    ask_px = best_bid + spread + np.concatenate([[0], np.cumsum(rng.integers(1, 4, size=na - 1))])
    vol = lambda k: np.round(rng.lognormal(5.0, 1.0, size=k)) + 1
    bids = tuple((int(p), float(v)) for p, v in zip(bid_px[::-1], vol(nb)))
    asks = tuple((int(p), float(v)) for p, v in zip(ask_px, vol(na)))
    return OrderBook(bids, asks, tick)
