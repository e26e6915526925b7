"""Execution tapes: CSV ingestion, filtering, trade-clock series and the
aggregate provider ledger.

All monetary arrays are kept as ``int64`` counts of half-ticks so that cash
and wealth accounting is exact.  A mid-price sits on a half-tick whenever the
spread is an odd number of ticks, hence the half-tick unit.
"""
from __future__ import annotations

import csv
import enum
import json
import logging
from dataclasses import dataclass, field
from decimal import Decimal, InvalidOperation
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

log = logging.getLogger(__name__)

__all__ = [
    "TapeError",
    "Aggressor",
    "Flag",
    "TradeRecord",
    "FilterReport",
    "TradeClockSeries",
    "ProviderLedger",
    "ingest",
    "filter_tape",
    "build_series",
    "build_ledger",
    "write_tape",
]

TAPE_COLUMNS = ("seq", "ts_ns", "price", "size", "aggressor", "flags", "bid", "ask")


class TapeError(ValueError):
    """Schema or content violation in a tape; ``line`` is 1-based when known."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class Aggressor(enum.Enum):
    BUY = "B"
    SELL = "S"


class Flag(enum.Enum):
    SPECIAL_DEAL = "C"
    HIDDEN = "H"


@dataclass(frozen=True)
class TradeRecord:
    """One execution; prices are integer tick counts."""

    seq: int
    ts_ns: int
    price: int
    size: int
    aggressor: Aggressor
    flags: frozenset = frozenset()
    bid_before: int = 0
    ask_before: int = 0

    @property
    def at_quotes(self) -> bool:
        return self.price in (self.bid_before, self.ask_before)


def _parse_price(text: str, tick: Decimal, line: int, name: str) -> int:
    try:
        d = Decimal(text.strip())
    except InvalidOperation:
        raise TapeError(f"{name}: not a decimal: {text!r}", line) from None
    if d.as_tuple().exponent < -4:
        raise TapeError(f"{name}: more than 4 fractional digits: {text!r}", line)
    if d <= 0:
        raise TapeError(f"{name}: must be positive, got {text}", line)
    q = d / tick
    if q != q.to_integral_value():
        raise TapeError(f"{name}: {text} is not a multiple of tick {tick}", line)
    return int(q)


def ingest(path, tick: float = 1e-4) -> list[TradeRecord]:
    """Read a tape CSV with header ``seq,ts_ns,price,size,aggressor,flags,bid,ask``."""
    tick_d = Decimal(str(tick))
    records: list[TradeRecord] = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise TapeError("empty file: header required") from None
        header = [h.strip() for h in header]
        missing = [c for c in TAPE_COLUMNS if c not in header]
        if missing:
            raise TapeError(f"missing column(s): {', '.join(missing)}", 1)
        col = {c: header.index(c) for c in TAPE_COLUMNS}
        prev_seq = None
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not x.strip() for x in row):
                continue
            if len(row) < len(header):
                raise TapeError(f"expected {len(header)} fields, got {len(row)}", lineno)
            get = lambda c: row[col[c]].strip()  # noqa: E731
            try:
                seq = int(get("seq"))
                ts = int(get("ts_ns"))
                size = int(get("size"))
            except ValueError as e:
                raise TapeError(f"integer field malformed ({e})", lineno) from None
            if size <= 0:
                raise TapeError(f"size must be positive, got {size}", lineno)
            price = _parse_price(get("price"), tick_d, lineno, "price")
            bid = _parse_price(get("bid"), tick_d, lineno, "bid")
            ask = _parse_price(get("ask"), tick_d, lineno, "ask")
            if not bid < ask:
                raise TapeError(f"bid {get('bid')} must be below ask {get('ask')}", lineno)
            try:
                aggr = Aggressor(get("aggressor"))
            except ValueError:
                raise TapeError(f"aggressor must be B or S, got {get('aggressor')!r}", lineno) from None
            flags = set()
            for f in filter(None, (x.strip() for x in get("flags").split(";"))):
                try:
                    flags.add(Flag(f))
                except ValueError:
                    raise TapeError(f"unknown flag {f!r}", lineno) from None
            if prev_seq is not None and seq <= prev_seq:
                raise TapeError(f"non-monotone seq: {prev_seq} followed by {seq}", lineno)
            prev_seq = seq
            records.append(TradeRecord(seq, ts, price, size, aggr, frozenset(flags), bid, ask))
    return records


def _fmt(ticks: int, tick_d: Decimal) -> str:
    return str((Decimal(ticks) * tick_d).normalize().quantize(Decimal("0.0001")))


def write_tape(records: Iterable[TradeRecord], path, tick: float = 1e-4) -> None:
    tick_d = Decimal(str(tick))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TAPE_COLUMNS)
        for r in records:
            flags = ";".join(sorted(f.value for f in r.flags))
            w.writerow([r.seq, r.ts_ns, _fmt(r.price, tick_d), r.size, r.aggressor.value, flags,
                        _fmt(r.bid_before, tick_d), _fmt(r.ask_before, tick_d)])


@dataclass(frozen=True)
class FilterReport:
    n_in: int
    n_special: int
    n_hidden: int
    n_kept: int

    @property
    def n_dropped(self) -> int:
        return self.n_in - self.n_kept

    @property
    def fraction_dropped(self) -> float:
        return self.n_dropped / self.n_in if self.n_in else 0.0


def filter_tape(records: Sequence[TradeRecord]) -> tuple[list[TradeRecord], FilterReport]:
    """Drop special deals and hidden executions."""
    kept = [r for r in records if not r.flags & {Flag.SPECIAL_DEAL, Flag.HIDDEN}]
    report = FilterReport(
        n_in=len(records),
        n_special=sum(Flag.SPECIAL_DEAL in r.flags for r in records),
        n_hidden=sum(Flag.HIDDEN in r.flags for r in records),
        n_kept=len(kept),
    )
    if records and not kept:
        log.warning("all %d records were filtered out", len(records))
    return kept, report


@dataclass(frozen=True)
class TradeClockSeries:
    """Per-trade arrays in the trade clock.

    ``mid_h`` has one more entry than the others: its last value is the mid
    after the final trade (defaults to the last pre-trade mid).  Units are
    half-ticks for prices/cash and shares for volume.
    """

    tick: float
    mid_h: np.ndarray
    spread_h: np.ndarray
    dL: np.ndarray
    dK_h: np.ndarray
    rejected: tuple[int, ...] = field(default=())

    def __post_init__(self):
        n = self.dL.shape[0]
        if not (self.spread_h.shape[0] == self.dK_h.shape[0] == n):
            raise ValueError("series arrays must have equal length")
        if self.mid_h.shape[0] != (n + 1 if n else 0) and not (n == 0 and self.mid_h.shape[0] <= 1):
            raise ValueError("mid_h must have one entry more than the trade arrays")
        if n and np.any(self.spread_h <= 0):
            raise ValueError("spreads must be positive")

    def __len__(self) -> int:
        return int(self.dL.shape[0])

    @property
    def half_tick(self) -> float:
        return self.tick / 2

    # float views in currency units
    @property
    def p(self) -> np.ndarray:
        return self.mid_h * self.half_tick

    @property
    def s(self) -> np.ndarray:
        return self.spread_h * self.half_tick

    @property
    def dK(self) -> np.ndarray:
        return self.dK_h * self.half_tick

    @property
    def dp_h(self) -> np.ndarray:
        return np.diff(self.mid_h)

    @property
    def dp(self) -> np.ndarray:
        return self.dp_h * self.half_tick

    @classmethod
    def from_arrays(cls, mid_h, spread_h, dL, tick: float = 1e-4) -> "TradeClockSeries":
        """Series for at-quotes trades, with cash from the bid/ask rule."""
        mid_h = np.asarray(mid_h, dtype=np.int64)
        spread_h = np.asarray(spread_h, dtype=np.int64)
        dL = np.asarray(dL, dtype=np.int64)
        if np.any(spread_h % 2):
            raise ValueError("spread must be a whole number of ticks")
        dK_h = -mid_h[:-1] * dL + (spread_h // 2) * np.abs(dL) if dL.size else dL.copy()
        return cls(tick, mid_h, spread_h, dL, dK_h)

    def to_dict(self) -> dict:
        return {
            "tick": self.tick,
            "mid_h": self.mid_h.tolist(),
            "spread_h": self.spread_h.tolist(),
            "dL": self.dL.tolist(),
            "dK_h": self.dK_h.tolist(),
            "rejected": list(self.rejected),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TradeClockSeries":
        return cls(
            float(d["tick"]),
            np.asarray(d["mid_h"], dtype=np.int64),
            np.asarray(d["spread_h"], dtype=np.int64),
            np.asarray(d["dL"], dtype=np.int64),
            np.asarray(d["dK_h"], dtype=np.int64),
            tuple(d.get("rejected", ())),
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path) -> "TradeClockSeries":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def window(self, start: int, stop: int) -> "TradeClockSeries":
        """Trades ``start..stop`` inclusive."""
        sl = slice(start, stop + 1)
        return TradeClockSeries(self.tick, self.mid_h[start:stop + 2], self.spread_h[sl],
                                self.dL[sl], self.dK_h[sl])


def build_series(records: Sequence[TradeRecord], tick: float = 1e-4,
                 close_mid_h: int | None = None) -> TradeClockSeries:
    """Trade-clock series from filtered records.

    Records priced off the pre-trade quotes are excluded and their ``seq``
    listed in ``rejected``.  ``close_mid_h`` is the mid (in half-ticks) after
    the last trade; without it the last price increment is zero.
    """
    good = []
    rejected = []
    for r in records:
        if r.at_quotes:
            good.append(r)
        else:
            rejected.append(r.seq)
            log.info("rejected trade seq=%d: price %d not at quotes (%d, %d)",
                     r.seq, r.price, r.bid_before, r.ask_before)
    if rejected:
        log.warning("%d trade(s) priced off the quotes were rejected", len(rejected))
    n = len(good)
    bid = np.fromiter((r.bid_before for r in good), np.int64, n)
    ask = np.fromiter((r.ask_before for r in good), np.int64, n)
    size = np.fromiter((r.size for r in good), np.int64, n)
    sign = np.fromiter((1 if r.aggressor is Aggressor.SELL else -1 for r in good), np.int64, n)
    mid_h = bid + ask
    if n:
        close = mid_h[-1] if close_mid_h is None else int(close_mid_h)
        mid_h = np.append(mid_h, close)
    spread_h = 2 * (ask - bid)
    dL = sign * size
    # provider pays the bid when buying, receives the ask when selling
    dK_h = np.where(dL >= 0, -2 * bid * dL, -2 * ask * dL)
    return TradeClockSeries(tick, mid_h, spread_h, dL, dK_h, tuple(rejected))


@dataclass(frozen=True)
class ProviderLedger:
    """Cumulative inventory, cash (half-ticks) and mid-marked wealth (half-ticks)."""

    L: np.ndarray
    K_h: np.ndarray
    X_h: np.ndarray
    tick: float

    @property
    def K(self) -> np.ndarray:
        return self.K_h * (self.tick / 2)

    @property
    def X(self) -> np.ndarray:
        return self.X_h * (self.tick / 2)


def build_ledger(series: TradeClockSeries) -> ProviderLedger:
    """``L_n``, ``K_n`` as cumulative sums from zero and ``X_n = p_n L_n + K_n``."""
    L = np.concatenate([[0], np.cumsum(series.dL)]).astype(np.int64)
    K = np.concatenate([[0], np.cumsum(series.dK_h)]).astype(np.int64)
    if len(series):
        X = series.mid_h * L + K
    else:
        X = np.zeros(1, dtype=np.int64)
    return ProviderLedger(L, K, X, series.tick)
