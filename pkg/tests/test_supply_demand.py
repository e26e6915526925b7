import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lobkit.diffusion.simulate import ItoCoefficients, SimConfig, simulate_paths
from lobkit.diffusion.supply_demand import (Driver, flat_book_identity_check, flat_book_wealth,
                                            supply_demand_check, supply_demand_simulate, supply_demand_targets)
from lobkit.lob_core import CostFunction, DomainError, OrderBook, ShapeFunction, legendre, shape_from_book


def test_inventory_driver_flat_book_price_moves_against_provider():
    c = CostFunction.quadratic(2.0)
    coeffs = ItoCoefficients(l=1.0, recovery_coeff=0.5)
    b = supply_demand_simulate(coeffs, c, SimConfig(N=100, M=3, seed=0))
    # c'(l) = l / m, so dp = -(lam / m) dL
    np.testing.assert_allclose(b.dp, -0.25 * b.dL, atol=1e-15)


def test_price_driver_inverts_inventory_driver():
    g = ShapeFunction.quadratic(2.0)
    coeffs = ItoCoefficients(sigma=1.0, recovery_coeff=0.5)
    b = supply_demand_simulate(coeffs, g, SimConfig(N=100, M=3, seed=0), "price")
    # gamma'(u) = m u, dL = -(m / lam) dp
    np.testing.assert_allclose(b.dL, -4.0 * b.dp, atol=1e-14)


def test_targets_flat_book():
    c = CostFunction.quadratic(1.0)
    for lam in (0.5, 1.0):
        t = supply_demand_targets(ItoCoefficients(l=1.0, b=0.0, recovery_coeff=lam), c, Driver.INVENTORY_GIVEN)
        assert t["vol"] == pytest.approx(lam)
        assert t["covariation"] == pytest.approx(-lam)
        assert t["drift"] == 0.0
    t = supply_demand_targets(ItoCoefficients(mu=0.3, sigma=0.8, recovery_coeff=0.5), c, "price")
    # L = -(m / lam) p: drift -(mu m / lam), vol sigma m / lam, d[p, L] = -(m / lam) sigma^2
    assert t["drift"] == pytest.approx(-0.6)
    assert t["vol"] == pytest.approx(1.6)
    assert t["covariation"] == pytest.approx(-0.5 * 0.64 / 0.25)


def test_price_given_covariation_equals_exact_flat_book_relation():
    lam, sigma = 0.5, 0.8
    t = supply_demand_targets(ItoCoefficients(sigma=sigma, recovery_coeff=lam), CostFunction.quadratic(1.0), "price")
    assert t["covariation"] == pytest.approx(-(1 / lam) * sigma**2)


def test_bid_ask_inventory_driver_matches_closed_forms():
    h = 0.2
    t = supply_demand_targets(ItoCoefficients(l=1.0, b=0.4, recovery_coeff=1.0), CostFunction.bid_ask(h),
                              Driver.INVENTORY_GIVEN)
    # c' = h sign: vol = h, d[p, L] = -h E|Z|, drift = -b * 2h * density(0)
    assert t["vol"] == pytest.approx(h)
    assert t["covariation"] == pytest.approx(-h * math.sqrt(2 / math.pi))
    assert t["drift"] == pytest.approx(-0.4 * 2 * h / math.sqrt(2 * math.pi))


@pytest.mark.parametrize("lam", [0.5, 1.0])
def test_supply_demand_moments_small(lam):
    r = supply_demand_check(ItoCoefficients(l=1.0, recovery_coeff=lam), CostFunction.quadratic(1.0),
                            SimConfig(N=2000, M=100, seed=21))
    assert r.vol.within() and r.covariation.within()
    assert r.passed


def test_supply_demand_price_driver_small():
    r = supply_demand_check(ItoCoefficients(mu=0.2, sigma=0.7, recovery_coeff=0.8), CostFunction.quadratic(1.5),
                            SimConfig(N=2000, M=100, seed=3), "price")
    assert r.passed


def test_book_depth_exceeded_raises():
    book = OrderBook.from_prices(bids=[(99.99, 1)], asks=[(100.01, 1)])
    with pytest.raises(DomainError):
        supply_demand_simulate(ItoCoefficients(l=100.0), legendre(shape_from_book(book)),
                               SimConfig(N=100, M=2, seed=0))


def test_flat_book_identity_default():
    r = flat_book_identity_check(SimConfig(N=10_000, M=4, seed=0))
    assert r.verified_residual <= 1e-12
    assert r.printed_residual > 0.1
    assert r.passed


def test_round_trip_inventory_has_zero_wealth_change():
    L = np.array([[0.0, 1.0, 3.0, -2.0, 0.5, 0.0]])
    _, X = flat_book_wealth(L, 1.0, 1.0)
    assert X[0, -1] == pytest.approx(0.0, abs=1e-15)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.05, 1.0), st.floats(0.1, 10.0), st.integers(0, 2**32 - 1))
def test_general_flat_book_identity(lam, m, seed):
    L = np.cumsum(np.random.default_rng(seed).standard_normal((2, 500)), axis=1)
    r = flat_book_identity_check(SimConfig(N=500, M=2), lam, m, L=L)
    assert r.general_residual <= 1e-12


def test_flat_book_uses_given_inventory_paths():
    cfg = SimConfig(N=200, M=2, seed=4)
    L = simulate_paths(ItoCoefficients(l=2.0), cfg).L
    a = flat_book_identity_check(cfg, inventory=ItoCoefficients(l=2.0))
    b = flat_book_identity_check(cfg, L=L)
    assert a.verified_residual == b.verified_residual
