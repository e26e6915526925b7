"""Correlated Ito price/inventory paths on the ``1/N`` trade-clock grid."""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

__all__ = [
    "SimulationError",
    "Coefficient",
    "ItoCoefficients",
    "SimConfig",
    "PathBundle",
    "simulate_paths",
    "path_normals",
    "mc_mean",
    "coefficient_from_config",
    "coefficients_from_config",
]


class SimulationError(ValueError):
    pass


class Coefficient:
    """A coefficient ``f(t)`` or ``f(t, p)``; constants are recognised for fast paths.

    ``uses_p`` tells whether the function reads the state.
    """

    def __init__(self, value, uses_p: bool = False, label: str | None = None):
        if isinstance(value, Coefficient):
            self.const, self.fn, self.uses_p, self.label = value.const, value.fn, value.uses_p, value.label
            return
        if callable(value):
            self.const = None
            self.fn = value
            self.uses_p = uses_p
        else:
            self.const = float(value)
            self.fn = None
            self.uses_p = False
        self.label = label

    def __call__(self, t, p=None):
        if self.const is not None:
            if p is None:
                return self.const
            return np.full(np.shape(p), self.const)
        if self.uses_p:
            return self.fn(t, p)
        v = self.fn(t)
        return v if p is None else np.broadcast_to(v, np.shape(p)).astype(float)

    def __repr__(self):
        return f"Coefficient({self.const if self.const is not None else self.label or self.fn!r})"


def _t_only(v) -> Coefficient:
    c = Coefficient(v)
    if c.uses_p:
        raise SimulationError("coefficient may depend on t only")
    return c


@dataclass
class ItoCoefficients:
    """Coefficients of ``dp = mu dt + sigma dW`` and ``dL = b dt + l dW'``.

    ``mu`` and ``sigma`` may depend on ``(t, p)``; the rest on ``t`` only.
    Pass a number for a constant, ``Coefficient(fn, uses_p=True)`` for a
    state-dependent function, or a plain ``fn(t)`` otherwise.  ``s`` is
    the spread in tick units.  ``l < 0`` models limit-order inventory.
    """

    mu: object = 0.0
    sigma: object = 1.0
    b: object = 0.0
    l: object = 1.0
    rho: object = 0.0
    s: object = 1.0
    spread_vol_ratio: float | None = None
    recovery_coeff: float = 1.0
    p0: float = 0.0
    L0: float = 0.0

    def __post_init__(self):
        self.mu = Coefficient(self.mu, uses_p=getattr(self.mu, "uses_p", False))
        self.sigma = Coefficient(self.sigma, uses_p=getattr(self.sigma, "uses_p", False))
        self.b = _t_only(self.b)
        self.l = _t_only(self.l)
        self.rho = _t_only(self.rho)
        self.s = _t_only(self.s)
        if self.sigma.const is not None and not self.sigma.const > 0:
            raise SimulationError("sigma must be positive")
        if self.s.const is not None and self.s.const < 0:
            raise SimulationError("spread must be non-negative")
        if self.rho.const is not None and abs(self.rho.const) > 1:
            raise SimulationError("|rho| must not exceed 1")
        if not 0 < self.recovery_coeff <= 1:
            raise SimulationError("recovery coefficient must lie in (0, 1]")
        if self.spread_vol_ratio is not None and self.spread_vol_ratio <= 0:
            raise SimulationError("spread/vol ratio must be positive")


@dataclass(frozen=True)
class SimConfig:
    N: int = 10_000
    M: int = 200
    T: float = 1.0
    seed: int = 0
    threads: int = 1
    scheme: str = "euler"

    def __post_init__(self):
        if self.N < 2 or self.M < 1 or not self.T > 0:
            raise SimulationError("need N >= 2, M >= 1, T > 0")
        if self.scheme != "euler":
            raise SimulationError("only the Euler-Maruyama scheme is available")
        if self.threads < 1:
            raise SimulationError("threads must be >= 1")

    @property
    def steps(self) -> int:
        return int(math.floor(self.N * self.T + 1e-9))


@dataclass
class PathBundle:
    """Paths on ``t_n = n / N``; arrays are ``(M, steps + 1)``."""

    N: int
    t: np.ndarray
    p: np.ndarray
    L: np.ndarray
    s: np.ndarray  # spread in tick units at t_n
    extra: dict = field(default_factory=dict)

    @property
    def M(self) -> int:
        return self.p.shape[0]

    @property
    def s_N(self) -> np.ndarray:
        """Renormalised spread ``s(n/N) / sqrt(N)``."""
        return self.s / math.sqrt(self.N)

    @property
    def dp(self) -> np.ndarray:
        return np.diff(self.p, axis=1)

    @property
    def dL(self) -> np.ndarray:
        return np.diff(self.L, axis=1)

    def coarsen(self, factor: int) -> "PathBundle":
        """Same paths observed every ``factor`` steps (grid ``N / factor``)."""
        if factor < 1 or self.N % factor:
            raise SimulationError("coarsening factor must divide N")
        k = (self.t.size - 1) // factor * factor
        sl = slice(0, k + 1, factor)
        return PathBundle(self.N // factor, self.t[sl], self.p[:, sl], self.L[:, sl], self.s[sl])


def path_normals(seed: int, M: int, steps: int, threads: int = 1) -> np.ndarray:
    """Standard normals ``(M, steps, 2)``; path ``i`` uses its own spawned stream,
    so the draws do not depend on ``threads``."""
    children = np.random.SeedSequence(seed).spawn(M)
    out = np.empty((M, steps, 2))

    def fill(idx):
        for i in idx:
            out[i] = np.random.default_rng(children[i]).standard_normal((steps, 2))

    chunks = np.array_split(np.arange(M), min(threads, M))
    if threads == 1:
        fill(chunks[0])
    else:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            list(ex.map(fill, chunks))
    return out


def _check(x, name):
    if not np.all(np.isfinite(x)):
        raise SimulationError(f"non-finite {name} coefficient")
    return x


def simulate_paths(coeffs: ItoCoefficients, cfg: SimConfig, threads: int | None = None) -> PathBundle:
    """Euler-Maruyama with ``dW' = rho dW + sqrt(1 - rho^2) dB``."""
    K = cfg.steps
    dt = 1.0 / cfg.N
    sq = math.sqrt(dt)
    t = np.arange(K + 1) * dt
    Z = path_normals(cfg.seed, cfg.M, K, threads or cfg.threads)
    rho = np.array([coeffs.rho(ti) for ti in t[:-1]], dtype=float)
    _check(rho, "rho")
    if np.any(np.abs(rho) > 1):
        raise SimulationError("|rho| must not exceed 1")
    dW = Z[:, :, 0] * sq
    dWp = (rho * Z[:, :, 0] + np.sqrt(1.0 - rho * rho) * Z[:, :, 1]) * sq

    b = _check(np.array([coeffs.b(ti) for ti in t[:-1]], dtype=float), "b")
    lv = _check(np.array([coeffs.l(ti) for ti in t[:-1]], dtype=float), "l")
    L = np.empty((cfg.M, K + 1))
    L[:, 0] = coeffs.L0
    np.cumsum(b * dt + lv * dWp, axis=1, out=L[:, 1:])
    L[:, 1:] += coeffs.L0

    p = np.empty((cfg.M, K + 1))
    p[:, 0] = coeffs.p0
    if not coeffs.mu.uses_p and not coeffs.sigma.uses_p:
        mu = _check(np.array([coeffs.mu(ti) for ti in t[:-1]], dtype=float), "mu")
        sg = _check(np.array([coeffs.sigma(ti) for ti in t[:-1]], dtype=float), "sigma")
        np.cumsum(mu * dt + sg * dW, axis=1, out=p[:, 1:])
        p[:, 1:] += coeffs.p0
    else:
        for n in range(K):
            cur = p[:, n]
            mu = _check(coeffs.mu(t[n], cur), "mu")
            sg = _check(coeffs.sigma(t[n], cur), "sigma")
            p[:, n + 1] = cur + mu * dt + sg * dW[:, n]
    s = _check(np.array([coeffs.s(ti) for ti in t], dtype=float), "s")
    return PathBundle(cfg.N, t, p, L, s)


def mc_mean(x: np.ndarray) -> tuple[float, float]:
    """Mean and standard error over the path axis (fixed-order pairwise sums)."""
    x = np.asarray(x, dtype=float)
    m = float(np.mean(x))
    if x.size < 2:
        return m, float("nan")
    return m, float(np.std(x, ddof=1) / math.sqrt(x.size))


# -- JSON configuration -------------------------------------------------------


def coefficient_from_config(spec, state: bool = False) -> Coefficient:
    """Parse ``number``, ``{"constant": v}``, ``{"affine": [a, b]}`` or
    ``{"ou": {"kappa": k, "theta": th}}``.

    ``affine`` means ``a + b p`` for state coefficients and ``a + b t``
    otherwise; ``ou`` (state only) is the mean-reverting drift ``k (th - p)``.
    """
    if isinstance(spec, (int, float)):
        return Coefficient(float(spec))
    if not isinstance(spec, dict) or len(spec) != 1:
        raise SimulationError(f"bad coefficient specification {spec!r}")
    (kind, arg), = spec.items()
    if kind == "constant":
        return Coefficient(float(arg))
    if kind == "affine":
        a, b = (float(v) for v in arg)
        if state:
            return Coefficient(lambda t, p: a + b * np.asarray(p), uses_p=True, label=f"{a}+{b}p")
        return Coefficient(lambda t: a + b * t, label=f"{a}+{b}t")
    if kind == "ou":
        if not state:
            raise SimulationError("ou form applies to the price drift only")
        k, th = float(arg["kappa"]), float(arg["theta"])
        return Coefficient(lambda t, p: k * (th - np.asarray(p)), uses_p=True, label=f"ou({k},{th})")
    raise SimulationError(f"unknown coefficient form {kind!r}")


def coefficients_from_config(d: dict) -> ItoCoefficients:
    state = {"mu", "sigma"}
    kw = {}
    for key in ("mu", "sigma", "b", "l", "rho", "s"):
        if key in d:
            kw[key] = coefficient_from_config(d[key], key in state)
    for key in ("spread_vol_ratio", "recovery_coeff", "p0", "L0"):
        if key in d and d[key] is not None:
            kw[key] = float(d[key])
    unknown = set(d) - set(kw) - {"spread_vol_ratio"}
    if unknown:
        raise SimulationError(f"unknown coefficient keys {sorted(unknown)}")
    return ItoCoefficients(**kw)
