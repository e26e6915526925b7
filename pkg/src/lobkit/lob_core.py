"""Order books as pairs of discrete measures, market-order execution, and the
shape-function / transaction-cost (Legendre) calculus.

Prices inside an :class:`OrderBook` are integer multiples of ``tick``; volumes
are floats.  Shape and cost functions share one representation: the graph of
their (maximal monotone) derivative as a polyline in the plane.  Conjugation
is then the swap of the two coordinates, which keeps it exact.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "BookError",
    "NonConvexError",
    "DomainError",
    "OrderBook",
    "Execution",
    "ShapeFunction",
    "CostFunction",
    "best_quotes",
    "execute_market_order",
    "taker_optimal_order",
    "taker_expected_gain",
    "shape_from_book",
    "legendre",
    "legendre_inverse",
    "impact_price",
    "flat_book",
]

DEFAULT_TICK = 1e-4


class BookError(ValueError):
    """Invalid order book or invalid order against it."""


class NonConvexError(ValueError):
    """Derivative data that is not non-decreasing."""


class DomainError(ValueError):
    """Argument outside the effective domain of a cost function."""


def to_ticks(price, tick: float) -> int:
    """Convert a currency price to an integer number of ticks.

    Raises if ``price`` is not on the tick grid (up to float noise).
    """
    q = Fraction(str(price)) / Fraction(str(tick))
    n = round(q)
    if abs(q - n) > Fraction(1, 10**6):
        raise BookError(f"price {price} is not a multiple of tick {tick}")
    return int(n)


def _alpha_in_ticks(alpha: float, tick: float) -> float:
    x = alpha / tick
    r = round(x)
    return float(r) if abs(x - r) < 1e-7 else x


# ---------------------------------------------------------------------------
# Order book
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class OrderBook:
    """Bid and ask measures, each a strictly increasing tuple of
    ``(price_in_ticks, volume)`` levels with positive volume."""

    bids: tuple[tuple[int, float], ...] = ()
    asks: tuple[tuple[int, float], ...] = ()
    tick: float = DEFAULT_TICK

    def __post_init__(self):
        if not self.tick > 0:
            raise BookError("tick must be positive")
        for side, levels in (("bids", self.bids), ("asks", self.asks)):
            prev = None
            for price, vol in levels:
                if not isinstance(price, (int, np.integer)):
                    raise BookError(f"{side}: price {price!r} must be an integer tick count")
                if price <= 0:
                    raise BookError(f"{side}: non-positive price level {price}")
                if not vol > 0 or not np.isfinite(vol):
                    raise BookError(f"{side}: volume at {price} must be positive and finite")
                if prev is not None and price <= prev:
                    raise BookError(f"{side}: price levels must be strictly increasing")
                prev = price
        if self.bids and self.asks and self.bids[-1][0] >= self.asks[0][0]:
            raise BookError("book is crossed: best bid >= best ask")

    @classmethod
    def from_prices(cls, bids: Iterable[Sequence[float]] = (), asks: Iterable[Sequence[float]] = (),
                    tick: float = DEFAULT_TICK) -> "OrderBook":
        """Build from currency prices; merges duplicate levels and drops empty ones."""

        def norm(levels):
            acc: dict[int, float] = {}
            for price, vol in levels:
                if vol < 0:
                    raise BookError(f"negative volume {vol} at {price}")
                t = to_ticks(price, tick)
                acc[t] = acc.get(t, 0.0) + float(vol)
            return tuple((t, v) for t, v in sorted(acc.items()) if v > 0)

        return cls(norm(bids), norm(asks), tick)

    def to_json(self) -> str:
        return json.dumps({
            "tick": self.tick,
            "bids": [[_fmt_price(p, self.tick), v] for p, v in self.bids],
            "asks": [[_fmt_price(p, self.tick), v] for p, v in self.asks],
        })

    @classmethod
    def from_json(cls, text: str) -> "OrderBook":
        d = json.loads(text)
        return cls.from_prices(d.get("bids", []), d.get("asks", []), d.get("tick", DEFAULT_TICK))

    def price(self, ticks) -> float:
        return ticks * self.tick

    @property
    def bid_volume(self) -> float:
        return float(sum(v for _, v in self.bids))

    @property
    def ask_volume(self) -> float:
        return float(sum(v for _, v in self.asks))


def _fmt_price(ticks: int, tick: float) -> float:
    return float(Fraction(ticks) * Fraction(str(tick)))


@dataclass(frozen=True)
class Execution:
    """Provider-side changes caused by one market order at price ``alpha``."""

    delta_L: float
    delta_K: float
    alpha: float


def best_quotes(book: OrderBook) -> tuple[float | None, float | None]:
    """Best bid and best ask in currency; ``None`` for an empty side."""
    bid = book.price(book.bids[-1][0]) if book.bids else None
    ask = book.price(book.asks[0][0]) if book.asks else None
    return bid, ask


def execute_market_order(book: OrderBook, alpha: float) -> tuple[Execution, OrderBook]:
    """Execute the single-number market order ``alpha`` against ``book``.

    Every bid at a price >= alpha and every ask at a price <= alpha is filled
    in full.  Returns the provider's inventory/cash change and the book with
    the filled levels removed.
    """
    if not alpha > 0:
        raise BookError(f"market order price must be positive, got {alpha}")
    a = _alpha_in_ticks(alpha, book.tick)
    hit_bids = [(p, v) for p, v in book.bids if p >= a]
    hit_asks = [(p, v) for p, v in book.asks if p <= a]
    dL = sum(v for _, v in hit_bids) - sum(v for _, v in hit_asks)
    dK = book.tick * (sum(p * v for p, v in hit_asks) - sum(p * v for p, v in hit_bids))
    rest = OrderBook(
        tuple(lv for lv in book.bids if lv[0] < a),
        tuple(lv for lv in book.asks if lv[0] > a),
        book.tick,
    )
    return Execution(float(dL), float(dK), float(alpha)), rest


def taker_expected_gain(book: OrderBook, alpha: float, expected_price: float) -> float:
    """Taker's expected wealth change ``-E[p] dL - dK`` for the order ``alpha``."""
    ex, _ = execute_market_order(book, alpha)
    return -expected_price * ex.delta_L - ex.delta_K


def taker_optimal_order(book: OrderBook, expected_price: float) -> float:
    """Risk-neutral taker's optimal single-number order: the expected price.

    Any other maximiser lies in a zero-mass interval around ``expected_price``
    and yields the same execution, so this choice is canonical.
    """
    if not expected_price > 0:
        raise BookError("expected price must be positive")
    bid, ask = best_quotes(book)
    if bid is not None and ask is not None and not bid < ask:
        raise BookError("book exhibits arbitrage")
    return float(expected_price)


# ---------------------------------------------------------------------------
# Monotone-graph convex functions
# ---------------------------------------------------------------------------


class _ConvexPWQ:
    """Convex function ``F`` with ``F(0) = 0`` given by the graph of ``F'``.

    The graph is a polyline through ``(xs[k], ds[k])`` with both coordinates
    non-decreasing.  Vertical segments are jumps of ``F'``; horizontal
    segments are kinks of the conjugate.  Beyond the end vertices the graph
    continues along rays ``left_ray`` / ``right_ray`` given as non-negative
    ``(dx, dd)`` directions (the left ray points towards decreasing x, d).
    A ray with ``dx == 0`` ends the effective domain at that vertex.
    """

    def __init__(self, xs, ds, left_ray=(1.0, 0.0), right_ray=(1.0, 0.0)):
        xs = np.asarray(xs, dtype=float)
        ds = np.asarray(ds, dtype=float)
        if xs.ndim != 1 or xs.shape != ds.shape or xs.size == 0:
            raise ValueError("graph needs matching 1-d coordinate arrays")
        if np.any(np.diff(xs) < 0) or np.any(np.diff(ds) < 0):
            raise NonConvexError("derivative graph must be non-decreasing in both coordinates")
        for ray in (left_ray, right_ray):
            if ray[0] < 0 or ray[1] < 0 or (ray[0] == 0 and ray[1] == 0):
                raise NonConvexError(f"invalid ray direction {ray}")
        self.xs = xs
        self.ds = ds
        self.left_ray = (float(left_ray[0]), float(left_ray[1]))
        self.right_ray = (float(right_ray[0]), float(right_ray[1]))
        self._build()

    def _build(self):
        xs, ds = self.xs, self.ds
        # collapse vertical runs into knots with left/right derivative limits
        knots, lo, hi = [xs[0]], [ds[0]], [ds[0]]
        for x, d in zip(xs[1:], ds[1:]):
            if x == knots[-1]:
                hi[-1] = d
            else:
                knots.append(x)
                lo.append(d)
                hi.append(d)
        self._kx = np.array(knots)
        self._dlo = np.array(lo)
        self._dhi = np.array(hi)
        if self.left_ray[0] == 0:
            self._dlo[0] = -np.inf
        if self.right_ray[0] == 0:
            self._dhi[-1] = np.inf
        lo_dom, hi_dom = self.domain
        if not lo_dom <= 0 <= hi_dom:
            raise DomainError("0 must lie in the effective domain")
        # values at knots, anchored so that F(0) = 0
        seg = np.diff(self._kx) * 0.5 * (self._dhi[:-1] + self._dlo[1:])
        cum = np.concatenate([[0.0], np.cumsum(seg)])
        self._kv = cum - self._raw_value(0.0, cum)

    # slope of the derivative on the tails
    def _tail_slope(self, ray):
        return ray[1] / ray[0] if ray[0] > 0 else np.inf

    def _raw_value(self, x: float, kv) -> float:
        kx, lo, hi = self._kx, self._dlo, self._dhi
        if x < kx[0]:
            if self.left_ray[0] == 0:
                return np.inf
            k = self._tail_slope(self.left_ray)
            h = kx[0] - x
            return kv[0] - lo[0] * h + 0.5 * k * h * h
        if x > kx[-1]:
            if self.right_ray[0] == 0:
                return np.inf
            k = self._tail_slope(self.right_ray)
            h = x - kx[-1]
            return kv[-1] + hi[-1] * h + 0.5 * k * h * h
        i = int(np.searchsorted(kx, x, side="right")) - 1
        i = min(i, kx.size - 1)
        if kx[i] == x or i == kx.size - 1:
            return kv[i]
        h = x - kx[i]
        k = (lo[i + 1] - hi[i]) / (kx[i + 1] - kx[i])
        return kv[i] + hi[i] * h + 0.5 * k * h * h

    # -- public evaluation -------------------------------------------------

    @property
    def domain(self) -> tuple[float, float]:
        lo = self._kx[0] if self.left_ray[0] == 0 else -np.inf
        hi = self._kx[-1] if self.right_ray[0] == 0 else np.inf
        return float(lo), float(hi)

    @property
    def breakpoints(self) -> np.ndarray:
        return self._kx.copy()

    def __call__(self, x):
        """Evaluate the function; ``inf`` outside the effective domain."""
        if np.ndim(x) == 0:
            return float(self._raw_value(float(x), self._kv))
        return self.evaluate(np.asarray(x, dtype=float))

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        """Vectorised evaluation."""
        x = np.asarray(x, dtype=float)
        kx, lo, hi, kv = self._kx, self._dlo, self._dhi, self._kv
        out = np.empty_like(x)
        left = x < kx[0]
        right = x > kx[-1]
        mid = ~(left | right)
        if left.any():
            if self.left_ray[0] == 0:
                out[left] = np.inf
            else:
                h = kx[0] - x[left]
                out[left] = kv[0] - lo[0] * h + 0.5 * self._tail_slope(self.left_ray) * h * h
        if right.any():
            if self.right_ray[0] == 0:
                out[right] = np.inf
            else:
                h = x[right] - kx[-1]
                out[right] = kv[-1] + hi[-1] * h + 0.5 * self._tail_slope(self.right_ray) * h * h
        if mid.any():
            xm = x[mid]
            i = np.clip(np.searchsorted(kx, xm, side="right") - 1, 0, kx.size - 1)
            j = np.minimum(i + 1, kx.size - 1)
            width = kx[j] - kx[i]
            with np.errstate(invalid="ignore", divide="ignore"):
                k = np.where(width > 0, (lo[j] - hi[i]) / np.where(width > 0, width, 1.0), 0.0)
            h = xm - kx[i]
            with np.errstate(invalid="ignore"):
                val = kv[i] + hi[i] * h + 0.5 * k * h * h
            # at a knot the slope may be infinite (end of a bounded domain)
            out[mid] = np.where(h == 0, kv[i], val)
        return out

    def subdifferential(self, x: float) -> tuple[float, float]:
        """Interval ``[F'(x-), F'(x+)]``."""
        kx, lo, hi = self._kx, self._dlo, self._dhi
        lo_dom, hi_dom = self.domain
        if x < lo_dom or x > hi_dom:
            raise DomainError(f"{x} outside domain [{lo_dom}, {hi_dom}]")
        if x < kx[0]:
            return (lo[0] - self._tail_slope(self.left_ray) * (kx[0] - x),) * 2
        if x > kx[-1]:
            return (hi[-1] + self._tail_slope(self.right_ray) * (x - kx[-1]),) * 2
        i = int(np.searchsorted(kx, x, side="right")) - 1
        if kx[i] == x:
            return float(lo[i]), float(hi[i])
        k = (lo[i + 1] - hi[i]) / (kx[i + 1] - kx[i])
        d = hi[i] + k * (x - kx[i])
        return float(d), float(d)

    def derivative(self, x: float, select: str = "outer") -> float:
        """A selection from the subdifferential at ``x``.

        ``"outer"`` picks the endpoint farthest from zero (right limit for
        ``x > 0``, left limit for ``x < 0``); ``"inner"`` picks the one
        closest to zero.  At ``x == 0`` both return the projection of 0.
        """
        a, b = self.subdifferential(x)
        if x == 0:
            return float(min(max(0.0, a), b))
        if select == "outer":
            return b if x > 0 else a
        if select == "inner":
            return a if x > 0 else b
        raise ValueError(f"unknown selection {select!r}")

    def derivative_array(self, x: np.ndarray, select: str = "outer") -> np.ndarray:
        x = np.asarray(x, dtype=float)
        kx, lo, hi = self._kx, self._dlo, self._dhi
        lo_dom, hi_dom = self.domain
        if np.any(x < lo_dom) or np.any(x > hi_dom):
            raise DomainError("argument outside effective domain")
        out = np.empty_like(x)
        left = x < kx[0]
        right = x > kx[-1]
        mid = ~(left | right)
        if left.any():
            out[left] = lo[0] - self._tail_slope(self.left_ray) * (kx[0] - x[left])
        if right.any():
            out[right] = hi[-1] + self._tail_slope(self.right_ray) * (x[right] - kx[-1])
        if mid.any():
            xm = x[mid]
            i = np.clip(np.searchsorted(kx, xm, side="right") - 1, 0, kx.size - 1)
            j = np.minimum(i + 1, kx.size - 1)
            width = kx[j] - kx[i]
            with np.errstate(invalid="ignore", divide="ignore"):
                k = np.where(width > 0, (lo[j] - hi[i]) / np.where(width > 0, width, 1.0), 0.0)
            d = hi[i] + k * (xm - kx[i])
            on = kx[i] == xm
            pos = xm > 0
            outer = np.where(pos, hi[i], lo[i])
            inner = np.where(pos, lo[i], hi[i])
            pick = outer if select == "outer" else inner
            d = np.where(on, pick, d)
            zero = xm == 0
            d = np.where(zero, np.clip(0.0, lo[i], hi[i]), d)
            out[mid] = d
        return out

    def pieces(self):
        """Quadratic pieces ``(x0, x1, a, b, c)`` meaning ``a + b (x - x0) + c/2 (x - x0)^2``
        on ``[x0, x1]``; tails use ``x0 = +-inf`` conventions handled by callers."""
        kx, lo, hi, kv = self._kx, self._dlo, self._dhi, self._kv
        out = []
        if self.left_ray[0] > 0:
            out.append((-np.inf, kx[0], kv[0], lo[0], self._tail_slope(self.left_ray), kx[0]))
        for i in range(kx.size - 1):
            k = (lo[i + 1] - hi[i]) / (kx[i + 1] - kx[i])
            out.append((kx[i], kx[i + 1], kv[i], hi[i], k, kx[i]))
        if self.right_ray[0] > 0:
            out.append((kx[-1], np.inf, kv[-1], hi[-1], self._tail_slope(self.right_ray), kx[-1]))
        return out

    def graph(self) -> tuple[np.ndarray, np.ndarray]:
        return self.xs.copy(), self.ds.copy()

    def is_bounded_domain(self) -> bool:
        lo, hi = self.domain
        return np.isfinite(lo) or np.isfinite(hi)


class ShapeFunction(_ConvexPWQ):
    """Order-book shape ``gamma`` around the quoted price ``p``.

    ``gamma(u)`` is the integral from 0 to u of ``a(0, p+x] - b[p+x, inf)``;
    its derivative is the negative of the provider's inventory change for a
    market order at ``p + u``.
    """

    def __init__(self, xs, ds, left_ray=(1.0, 0.0), right_ray=(1.0, 0.0), p: float = 0.0):
        super().__init__(xs, ds, left_ray, right_ray)
        self.p = float(p)
        if self.derivative(0.0) != 0.0 or self.subdifferential(0.0) != (0.0, 0.0):
            raise ValueError("shape function needs gamma'(0) = 0")

    @classmethod
    def from_breakpoints(cls, u: Sequence[float], slopes: Sequence[float], p: float = 0.0,
                         tail_curvature: float = 0.0) -> "ShapeFunction":
        """Piecewise-constant ``gamma'``: ``slopes[i]`` holds on ``[u[i], u[i+1])`` for
        ``u[i] > 0`` and on ``(u[i-1], u[i]]`` mirrored for negative offsets.

        ``u`` is sorted; ``slopes`` must be 0 at the interval containing 0.
        """
        u = np.asarray(u, dtype=float)
        s = np.asarray(slopes, dtype=float)
        if u.shape != s.shape:
            raise ValueError("u and slopes must have equal length")
        if np.any(np.diff(u) <= 0):
            raise ValueError("breakpoints must be strictly increasing")
        if np.any(np.diff(s) < 0):
            raise NonConvexError("slopes must be non-decreasing")
        neg = u < 0
        xs, ds = [], []
        neg_u, neg_s = u[neg], s[neg]
        for k, (ui, si) in enumerate(zip(neg_u, neg_s)):
            nxt = neg_s[k + 1] if k + 1 < neg_s.size else 0.0
            xs += [ui, ui]
            ds += [si, nxt]
        xs.append(0.0)
        ds.append(0.0)
        pos_u, pos_s = u[~neg], s[~neg]
        prev = 0.0
        for ui, si in zip(pos_u, pos_s):
            xs += [ui, ui]
            ds += [prev, si]
            prev = si
        ray = (1.0, tail_curvature)
        return cls(xs, ds, ray, ray, p=p)

    @classmethod
    def quadratic(cls, m: float, p: float = 0.0) -> "ShapeFunction":
        """Flat book ``gamma(u) = m u^2 / 2``."""
        if not m > 0:
            raise ValueError("curvature must be positive")
        return cls([0.0], [0.0], (1.0, m), (1.0, m), p=p)


class CostFunction(_ConvexPWQ):
    """Transaction cost ``c(l) = sup_u (u l - gamma(u))`` of a taker volume ``l``.

    ``c`` is infinite outside ``domain`` (the available book depth).
    """

    @classmethod
    def quadratic(cls, m: float) -> "CostFunction":
        """``c(l) = l^2 / (2 m)``."""
        return legendre(ShapeFunction.quadratic(m))

    @classmethod
    def bid_ask(cls, half_spread: float) -> "CostFunction":
        """``c(l) = half_spread * |l|`` (unbounded depth at the touch)."""
        h = float(half_spread)
        return cls([0.0, 0.0], [-h, h], (1.0, 0.0), (1.0, 0.0))


def shape_from_book(book: OrderBook, p: float | None = None) -> ShapeFunction:
    """Shape function of ``book`` around the quoted price ``p`` (mid by default)."""
    bid, ask = best_quotes(book)
    if p is None:
        if bid is None or ask is None:
            raise BookError("mid-price needs both sides of the book")
        p = 0.5 * (bid + ask)
    if (bid is not None and not p > bid) or (ask is not None and not p < ask):
        raise BookError(f"quoted price {p} must lie strictly inside the spread ({bid}, {ask})")
    xs: list[float] = []
    ds: list[float] = []
    cum = 0.0
    for price, vol in reversed(book.bids):
        x = book.price(price) - p
        xs += [x, x]
        ds += [-cum, -(cum + vol)]
        cum += vol
    xs.reverse()
    ds.reverse()
    xs.append(0.0)
    ds.append(0.0)
    cum = 0.0
    for price, vol in book.asks:
        x = book.price(price) - p
        xs += [x, x]
        ds += [cum, cum + vol]
        cum += vol
    return ShapeFunction(xs, ds, p=p)


def legendre(gamma: ShapeFunction) -> CostFunction:
    """Exact convex conjugate: swap the coordinates of the derivative graph."""
    if not isinstance(gamma, _ConvexPWQ):
        raise TypeError("expected a ShapeFunction")
    lr, rr = gamma.left_ray, gamma.right_ray
    return CostFunction(gamma.ds, gamma.xs, (lr[1], lr[0]), (rr[1], rr[0]))


def legendre_inverse(c: CostFunction, p: float = 0.0) -> ShapeFunction:
    """Conjugate back to the shape function (biconjugation is the identity here)."""
    lr, rr = c.left_ray, c.right_ray
    return ShapeFunction(c.ds, c.xs, (lr[1], lr[0]), (rr[1], rr[0]), p=p)


def impact_price(c: CostFunction, delta_L: float) -> float:
    """Post-trade price offset ``c'(-delta_L)`` from the quoted price.

    The selection is the one closest to zero, i.e. the deepest level the
    trade actually reached.
    """
    lo, hi = c.domain
    l = -float(delta_L)
    if l < lo or l > hi:
        raise DomainError(f"volume {delta_L} exceeds book depth [{-hi}, {-lo}]")
    if l != 0 and (l == lo or l == hi):
        # on the depth boundary the subdifferential is unbounded on one side
        a, b = c.subdifferential(l)
        return a if l > 0 else b
    return c.derivative(l, "inner")


def flat_book(m: float, n_levels: int, mid_ticks: int = 1_000_000, tick: float = DEFAULT_TICK) -> OrderBook:
    """Dense book with volume ``m * tick`` on every tick for ``n_levels`` each side.

    With a one-tick spread the quoted mid sits half a tick from each touch, so
    ``gamma`` agrees with ``m u^2 / 2`` exactly at whole-tick offsets.
    """
    vol = m * tick
    bids = tuple((mid_ticks - k, vol) for k in range(n_levels - 1, -1, -1))
    asks = tuple((mid_ticks + 1 + k, vol) for k in range(n_levels))
    return OrderBook(bids, asks, tick)


def execution_consistency(book: OrderBook, p: float | None = None) -> dict:
    """Largest relative residuals of the conjugacy and execution-cash identities.

    At every vertex and segment midpoint ``(u, l)`` of the graph of ``gamma'``: ``gamma(u) + c(l) = u l``.
    For a market order sweeping each level in turn:
    ``dK = -p dL + c(-dL)``.  Returns the maxima together with the count of
    executable volumes visited.
    """
    gamma = shape_from_book(book, p)
    p = gamma.p
    c = legendre(gamma)
    fenchel = 0.0
    us = np.concatenate([gamma.xs, 0.5 * (gamma.xs[1:] + gamma.xs[:-1])])
    ls = np.concatenate([gamma.ds, 0.5 * (gamma.ds[1:] + gamma.ds[:-1])])
    for u, l in zip(us, ls):
        lhs = gamma(u) + c(l)
        fenchel = max(fenchel, abs(lhs - u * l) / max(abs(u * l), abs(lhs), 1e-300))
    cash = 0.0
    n = 0
    for level, _ in list(book.asks) + list(book.bids):
        ex, _ = execute_market_order(book, book.price(level))
        rhs = -p * ex.delta_L + c(-ex.delta_L)
        cash = max(cash, abs(ex.delta_K - rhs) / max(abs(ex.delta_K), 1e-300))
        n += 1
    return {"fenchel_max_rel": fenchel, "cash_max_rel": cash, "volumes": n}
