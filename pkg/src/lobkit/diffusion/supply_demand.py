"""Supply-and-demand model: one of (price, inventory) is an Ito process and the
other is built trade by trade from the book, ``dp = lambda c'(-dL)`` or
``dL = -gamma'(dp / lambda)``."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from ..lob_core import CostFunction, ShapeFunction, legendre, legendre_inverse
from .gaussian import cost_functionals
from .simulate import ItoCoefficients, PathBundle, SimConfig, mc_mean, simulate_paths

__all__ = [
    "Driver",
    "supply_demand_simulate",
    "MomentEstimate",
    "SupplyDemandReport",
    "supply_demand_moments",
    "supply_demand_targets",
    "supply_demand_check",
    "FlatBookReport",
    "flat_book_wealth",
    "flat_book_identity_check",
]


class Driver(enum.Enum):
    INVENTORY_GIVEN = "inventory"
    PRICE_GIVEN = "price"


def _as_cost(book) -> CostFunction:
    return legendre(book) if isinstance(book, ShapeFunction) else book


def _as_shape(book) -> ShapeFunction:
    return legendre_inverse(book) if isinstance(book, CostFunction) else book


def supply_demand_simulate(coeffs: ItoCoefficients, book, cfg: SimConfig,
                           driver: Driver | str = Driver.INVENTORY_GIVEN,
                           bundle: PathBundle | None = None) -> PathBundle:
    """Simulate the driver and construct the other path with the renormalised
    book ``c^N(l) = c(sqrt(N) l) / N`` (``gamma^N`` likewise).

    ``book`` is a :class:`CostFunction` or :class:`ShapeFunction`; it is
    converted by conjugation when the other one is needed.  Raises
    :class:`DomainError` when a volume leaves the book's depth.
    """
    driver = Driver(driver)
    lam = coeffs.recovery_coeff
    b = bundle if bundle is not None else simulate_paths(coeffs, cfg)
    rn = math.sqrt(b.N)
    if driver is Driver.INVENTORY_GIVEN:
        c = _as_cost(book)
        dL = b.dL
        dp = lam / rn * c.derivative_array((-rn * dL).ravel(), "inner").reshape(dL.shape)
        p = np.empty_like(b.p)
        p[:, 0] = coeffs.p0
        np.cumsum(dp, axis=1, out=p[:, 1:])
        p[:, 1:] += coeffs.p0
        return PathBundle(b.N, b.t, p, b.L, b.s, {"driver": driver.value})
    g = _as_shape(book)
    dp = b.dp
    dL = -g.derivative_array((rn * dp / lam).ravel(), "outer").reshape(dp.shape) / rn
    L = np.empty_like(b.L)
    L[:, 0] = coeffs.L0
    np.cumsum(dL, axis=1, out=L[:, 1:])
    L[:, 1:] += coeffs.L0
    return PathBundle(b.N, b.t, b.p, L, b.s, {"driver": driver.value})


@dataclass(frozen=True)
class MomentEstimate:
    mean: float
    stderr: float
    target: float

    def within(self, k: float = 3.0) -> bool:
        return abs(self.mean - self.target) <= k * self.stderr

    def to_dict(self) -> dict:
        return {"mean": self.mean, "stderr": self.stderr, "target": self.target, "within_3se": self.within()}


@dataclass
class SupplyDemandReport:
    driver: str
    drift: MomentEstimate
    vol: MomentEstimate
    covariation: MomentEstimate
    details: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.drift.within() and self.vol.within() and self.covariation.within()

    def to_dict(self) -> dict:
        return {"driver": self.driver, "drift": self.drift.to_dict(), "vol": self.vol.to_dict(),
                "covariation": self.covariation.to_dict(), "passed": self.passed, "details": self.details}


def supply_demand_targets(coeffs: ItoCoefficients, book, driver: Driver | str, t: float = 0.0) -> dict:
    """Limit drift, volatility and ``d[p, L]/dt`` of the constructed path at time ``t``.

    Inventory given: ``-lambda b Phi_l(c'')``, ``lambda sqrt(Phi_l(c'^2))``,
    ``-lambda Phi_l(id c')``.  Price given: ``-(mu / lambda) Phi_sigma(gamma''(./lambda))``,
    ``sqrt(Phi_sigma(gamma'(./lambda)^2))``, ``-Phi_sigma(id gamma'(./lambda))``.
    """
    driver = Driver(driver)
    lam = coeffs.recovery_coeff
    if driver is Driver.INVENTORY_GIVEN:
        f = cost_functionals(_as_cost(book))
        sd = abs(float(coeffs.l(t)))
        return {
            "drift": -lam * float(coeffs.b(t)) * f["d2c"].gaussian_expectation(sd) + 0.0,
            "vol": lam * math.sqrt(f["dc_sq"].gaussian_expectation(sd)),
            "covariation": -lam * f["id_dc"].gaussian_expectation(sd),
        }
    if coeffs.mu.uses_p or coeffs.sigma.uses_p:
        raise ValueError("price-given targets need state-independent coefficients")
    # gamma'(y / lambda) = d/dy [lambda gamma(y / lambda)]; same functionals on the scaled variable
    f = cost_functionals(_as_shape(book))
    sd = abs(float(coeffs.sigma(t))) / lam
    return {
        "drift": -float(coeffs.mu(t)) / lam * f["d2c"].gaussian_expectation(sd) + 0.0,
        "vol": math.sqrt(f["dc_sq"].gaussian_expectation(sd)),
        "covariation": -lam * f["id_dc"].gaussian_expectation(sd),
    }


def supply_demand_moments(bundle: PathBundle, driver: Driver | str, T: float) -> dict:
    """Per-path drift ``(x_T - x_0)/T``, volatility ``sqrt(sum dx^2 / T)`` of the
    constructed path and realised ``sum dp dL / T``; mean and stderr over paths."""
    driver = Driver(driver)
    x = bundle.p if driver is Driver.INVENTORY_GIVEN else bundle.L
    dx = np.diff(x, axis=1)
    span = (x.shape[1] - 1) / bundle.N if T is None else T
    return {
        "drift": mc_mean((x[:, -1] - x[:, 0]) / span),
        "vol": mc_mean(np.sqrt((dx * dx).sum(axis=1) / span)),
        "covariation": mc_mean((bundle.dp * bundle.dL).sum(axis=1) / span),
    }


def supply_demand_check(coeffs: ItoCoefficients, book, cfg: SimConfig,
                        driver: Driver | str = Driver.INVENTORY_GIVEN) -> SupplyDemandReport:
    """MC moments of the constructed path against the limit targets (constant coefficients)."""
    driver = Driver(driver)
    b = supply_demand_simulate(coeffs, book, cfg, driver)
    est = supply_demand_moments(b, driver, cfg.steps / cfg.N)
    tgt = supply_demand_targets(coeffs, book, driver)
    mk = {k: MomentEstimate(est[k][0], est[k][1], tgt[k]) for k in ("drift", "vol", "covariation")}
    return SupplyDemandReport(driver.value, mk["drift"], mk["vol"], mk["covariation"],
                              {"N": cfg.N, "M": cfg.M, "lambda": coeffs.recovery_coeff})


# -- flat book --------------------------------------------------------------------


def flat_book_wealth(L: np.ndarray, lam: float, m: float) -> tuple[np.ndarray, np.ndarray]:
    """Microscopic flat-book wealth along inventory paths ``L`` (last axis = time).

    ``dp = -(lam/m) dL`` and ``dX = L dp + c(-dL) + dp dL`` with ``c(l) = l^2/(2m)``.
    Returns ``(p - p_0, X - X_0)``.
    """
    L = np.asarray(L, dtype=float)
    dL = np.diff(L, axis=-1)
    dp = -(lam / m) * dL
    dX = L[..., :-1] * dp + dL * dL / (2 * m) + dp * dL
    zero = np.zeros(L.shape[:-1] + (1,))
    return np.concatenate([zero, np.cumsum(dp, axis=-1)], axis=-1), \
        np.concatenate([zero, np.cumsum(dX, axis=-1)], axis=-1)


@dataclass
class FlatBookReport:
    """Residuals of three closed forms for ``X_n - X_0``, scaled by ``max(1, max|X|)``.

    ``verified``: ``-(L^2 - L_0^2)/2`` (holds for lam = m = 1).
    ``general``: ``-(lam/2m)(L^2 - L_0^2) + ((1 - lam)/2m) sum dL^2`` (any lam, m).
    ``printed``: ``-(L^2 - L_0^2)``, the uncorrected form, reported for reference.
    """

    steps: int
    paths: int
    lam: float
    m: float
    verified_residual: float
    general_residual: float
    printed_residual: float
    tol: float = 1e-12

    @property
    def passed(self) -> bool:
        return self.general_residual <= self.tol and (
            self.verified_residual <= self.tol if self.lam == 1 and self.m == 1 else True)

    def to_dict(self) -> dict:
        return {"steps": self.steps, "paths": self.paths, "lambda": self.lam, "m": self.m,
                "verified_identity": "X - X0 = -(L^2 - L0^2)/2",
                "verified_residual": self.verified_residual,
                "general_residual": self.general_residual,
                "printed_identity": "X - X0 = -(L^2 - L0^2)",
                "printed_residual": self.printed_residual,
                "tol": self.tol, "passed": self.passed}


def flat_book_identity_check(cfg: SimConfig, lam: float = 1.0, m: float = 1.0,
                             inventory: ItoCoefficients | None = None,
                             L: np.ndarray | None = None) -> FlatBookReport:
    """Verify the telescoping flat-book wealth identities on simulated (or given) inventory."""
    if L is None:
        inventory = inventory or ItoCoefficients(l=1.0)
        L = simulate_paths(inventory, cfg).L
    L = np.atleast_2d(np.asarray(L, dtype=float))
    _, X = flat_book_wealth(L, lam, m)
    dL = np.diff(L, axis=-1)
    d2 = L * L - L[:, :1] ** 2
    qv = np.concatenate([np.zeros((L.shape[0], 1)), np.cumsum(dL * dL, axis=-1)], axis=-1)
    scale = max(1.0, float(np.max(np.abs(X))), float(np.max(np.abs(d2))))
    verified = float(np.max(np.abs(X + d2 / 2))) / scale
    general = float(np.max(np.abs(X + lam / (2 * m) * d2 - (1 - lam) / (2 * m) * qv))) / scale
    printed = float(np.max(np.abs(X + d2))) / scale
    return FlatBookReport(L.shape[1] - 1, L.shape[0], lam, m, verified, general, printed)
