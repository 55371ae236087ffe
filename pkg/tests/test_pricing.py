"""Pricing-layer tests: payoffs, Black-Scholes utilities, vol surfaces."""

from __future__ import annotations

import math
import warnings

import numpy as np
import pytest

from fastconv import pricing
from fastconv.engine import TimeGrid, build_grid, time_grid_for
from fastconv.joint import IntegratedSquareRecursion, UGrid, joint_propagate
from fastconv.models import Measure, PiecewiseParams, VnbParams
from fastconv.pricing import (
    OptionContract,
    PricingResult,
    bs_price,
    bs_put,
    build_surface,
    implied_vol,
    martingale_ratio_piecewise,
    martingale_ratio_vnb,
    price_asian,
    price_vanilla_piecewise,
    price_vnb,
)


class TestContract:
    def test_log_moneyness(self):
        c = OptionContract(spot=100.0, strike=110.0, rate=0.03, t0=0.0, T=1.0)
        assert c.log_moneyness == pytest.approx(math.log(1.1))
        assert c.discounted_spot == pytest.approx(100.0 * math.exp(-0.03))

    def test_validation(self):
        with pytest.raises(ValueError):
            OptionContract(spot=-1.0, strike=100.0, rate=0.0, t0=0.0, T=1.0)
        with pytest.raises(ValueError):
            OptionContract(spot=100.0, strike=100.0, rate=0.0, t0=1.0, T=1.0)
        with pytest.raises(ValueError):
            OptionContract(spot=100.0, strike=100.0, rate=0.0, t0=0.0, T=1.0, kind="straddle")
        with pytest.raises(ValueError):
            OptionContract(spot=100.0, strike=100.0, rate=0.0, t0=0.0, T=1.0, style="bermudan")

    def test_result_rejects_negative_price(self):
        with pytest.raises(ValueError):
            PricingResult(price=-1.0, mass_deficit=0.0, grid_meta={})


class TestBlackScholes:
    def test_reference_value(self):
        assert bs_price(100, 100, 0.0, 0.2, 1.0) == pytest.approx(7.965567455405804, rel=1e-12)

    def test_zero_vol_limit(self):
        assert bs_price(100, 90, 0.05, 1e-12, 1.0) == pytest.approx(
            100 - 90 * math.exp(-0.05), rel=1e-9
        )
        assert bs_price(100, 120, 0.0, 0.0, 1.0) == 0.0

    def test_k_to_zero(self):
        assert bs_price(100, 1e-12, 0.03, 0.4, 2.0) == pytest.approx(100.0, rel=1e-9)

    def test_parity_exact(self):
        for k in (60, 100, 140):
            gap = bs_price(100, k, 0.04, 0.35, 1.7) - bs_put(100, k, 0.04, 0.35, 1.7)
            assert gap == pytest.approx(100 - k * math.exp(-0.04 * 1.7), abs=1e-10)


class TestImpliedVol:
    def test_round_trip(self):
        rng = np.random.default_rng(9)
        for _ in range(200):
            sigma = rng.uniform(0.05, 1.5)
            k_over_s = rng.uniform(0.5, 2.0)
            T = rng.uniform(0.1, 3.0)
            r = rng.uniform(0.0, 0.08)
            price = bs_price(100.0, 100.0 * k_over_s, r, sigma, T)
            assert implied_vol(price, 100.0, 100.0 * k_over_s, r, T) == pytest.approx(
                sigma, abs=1e-8
            )

    def test_out_of_band_flags(self):
        intrinsic = max(100 - 90 * math.exp(-0.03), 0.0)
        assert math.isnan(implied_vol(intrinsic, 100.0, 90.0, 0.03, 1.0))
        assert math.isnan(implied_vol(100.0, 100.0, 90.0, 0.03, 1.0))
        assert math.isnan(implied_vol(-1.0, 100.0, 90.0, 0.03, 1.0))


@pytest.fixture(scope="module")
def rn_setup():
    """Small risk-neutral propagation shared across pricing tests."""
    pw = PiecewiseParams(sigma=1.0, epsilon=2.0, r=0.03)
    grid = build_grid(-10.24, 2**10)
    timegrid = time_grid_for(2.0, 2e-3)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        legs = pricing._piecewise_legs(pw, grid, timegrid)
    return pw, grid, timegrid, legs


class TestVanillaPiecewise:
    def test_k_to_zero_recovers_spot(self, rn_setup):
        pw, grid, timegrid, legs = rn_setup
        c = OptionContract(spot=100.0, strike=1e-8, rate=0.03, t0=0.0, T=1.0)
        res = price_vanilla_piecewise(c, pw, grid, timegrid, legs=legs)
        assert abs(res.price / 100.0 - 1.0) < 3e-3

    def test_monotone_in_strike_and_bounded(self, rn_setup):
        pw, grid, timegrid, legs = rn_setup
        prices = []
        for k in (80.0, 90.0, 100.0, 110.0, 120.0):
            c = OptionContract(spot=100.0, strike=k, rate=0.03, t0=0.0, T=1.0)
            prices.append(price_vanilla_piecewise(c, pw, grid, timegrid, legs=legs).price)
        assert all(a >= b for a, b in zip(prices, prices[1:]))
        assert all(0.0 <= p <= 100.0 for p in prices)

    def test_parity(self, rn_setup):
        pw, grid, timegrid, legs = rn_setup
        call = price_vanilla_piecewise(
            OptionContract(100.0, 100.0, 0.03, 0.0, 1.0, "call"), pw, grid, timegrid, legs=legs
        ).price
        put = price_vanilla_piecewise(
            OptionContract(100.0, 100.0, 0.03, 0.0, 1.0, "put"), pw, grid, timegrid, legs=legs
        ).price
        gap = call - put - 100.0 + 100.0 * math.exp(-0.03)
        assert abs(gap) <= 0.003 * 100.0

    def test_deep_otm_negligible_for_thin_tails(self):
        # epsilon = 0.5 and a short maturity: exponential tails decay fast
        # enough that a strike at 100 S0 is worthless.  (At the fat-tailed
        # reference parameters the model genuinely assigns such strikes
        # nonzero value, so this bound is a thin-tail statement.)
        pw = PiecewiseParams(sigma=1.0, epsilon=0.5, r=0.03)
        grid = build_grid(-10.24, 2**10)
        timegrid = time_grid_for(0.5, 1e-3)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            c = OptionContract(spot=100.0, strike=10000.0, rate=0.03, t0=0.0, T=0.0625)
            res = price_vanilla_piecewise(c, pw, grid, timegrid)
        assert res.price < 1e-6 * 100.0

    def test_martingale_ratio(self, rn_setup):
        pw, grid, timegrid, _ = rn_setup
        ratio = martingale_ratio_piecewise(pw, grid, timegrid)
        assert abs(ratio - 1.0) <= 3e-3

    def test_t0_must_be_zero(self, rn_setup):
        pw, grid, timegrid, _ = rn_setup
        c = OptionContract(spot=100.0, strike=100.0, rate=0.03, t0=0.5, T=1.5)
        with pytest.raises(ValueError):
            price_vanilla_piecewise(c, pw, grid, timegrid)

    def test_timegrid_must_land_on_maturity(self, rn_setup):
        pw, grid, _, _ = rn_setup
        c = OptionContract(spot=100.0, strike=100.0, rate=0.03, t0=0.0, T=1.0)
        with pytest.raises(ValueError):
            price_vanilla_piecewise(c, pw, grid, TimeGrid(1e-3, 100))


class TestAsian:
    @pytest.fixture(scope="class")
    def asian_setup(self):
        pw = PiecewiseParams(sigma=1.0, epsilon=2.0, r=0.03)
        zg = build_grid(-10.24, 2**9)
        ug = UGrid(-2.56, 2**10)
        timegrid = time_grid_for(2.0, 2e-3)
        from fastconv.joint import GeometricAverageRecursion

        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            J = joint_propagate(
                pw, Measure.RISK_NEUTRAL, GeometricAverageRecursion(model=pw, t0=0.0),
                zg, ug, timegrid,
            )
        return pw, zg, ug, timegrid, J

    def test_monotone_in_strike(self, asian_setup):
        pw, zg, ug, timegrid, J = asian_setup
        prices = []
        for k in (80.0, 90.0, 100.0, 110.0, 120.0):
            c = OptionContract(100.0, k, 0.03, 0.0, 1.0, "call", "geometric-asian-piecewise")
            prices.append(price_asian(c, pw, zg, ug, timegrid, joint_density=J).price)
        assert all(a >= b for a, b in zip(prices, prices[1:]))

    def test_asian_below_vanilla(self, asian_setup):
        pw, zg, ug, timegrid, J = asian_setup
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            legs = pricing._piecewise_legs(pw, zg, timegrid)
        for k in (90.0, 100.0, 110.0):
            asian = price_asian(
                OptionContract(100.0, k, 0.03, 0.0, 1.0, "call", "geometric-asian-piecewise"),
                pw, zg, ug, timegrid, joint_density=J,
            ).price
            vanilla = price_vanilla_piecewise(
                OptionContract(100.0, k, 0.03, 0.0, 1.0, "call"), pw, zg, timegrid, legs=legs
            ).price
            assert asian <= vanilla

    def test_put_payoff_supported(self, asian_setup):
        pw, zg, ug, timegrid, J = asian_setup
        put = price_asian(
            OptionContract(100.0, 100.0, 0.03, 0.0, 1.0, "put", "geometric-asian-piecewise"),
            pw, zg, ug, timegrid, joint_density=J,
        )
        assert put.price > 0.0


class TestVnb:
    @pytest.fixture(scope="class")
    def vnb_setup(self):
        vp = VnbParams(alpha=0.1, sigma=0.3, t0=0.2, T=0.7, r=0.03, omega0=0.0)
        zg = build_grid(-10.24, 2**9)
        ug = UGrid(-5.12, 2**10)
        timegrid = time_grid_for(math.log(0.7 / 0.2), 2.5e-3)
        J = joint_propagate(
            vp, Measure.RISK_NEUTRAL, IntegratedSquareRecursion(vp), zg, ug, timegrid
        )
        return vp, zg, ug, timegrid, J

    def test_parity(self, vnb_setup):
        vp, zg, ug, timegrid, J = vnb_setup
        call = price_vnb(
            OptionContract(100.0, 100.0, 0.03, 0.2, 0.7, "call", "vanilla-vnb"),
            vp, zg, ug, timegrid, joint_density=J,
        ).price
        put = price_vnb(
            OptionContract(100.0, 100.0, 0.03, 0.2, 0.7, "put", "vanilla-vnb"),
            vp, zg, ug, timegrid, joint_density=J,
        ).price
        gap = call - put - 100.0 + 100.0 * math.exp(-0.03 * 0.5)
        assert abs(gap) <= 0.003 * 100.0

    def test_martingale(self, vnb_setup):
        vp, zg, ug, timegrid, J = vnb_setup
        assert abs(martingale_ratio_vnb(J, vp, zg, ug) - 1.0) <= 3e-3

    def test_joint_reuse_matches_fresh(self, vnb_setup):
        vp, zg, ug, timegrid, J = vnb_setup
        c = OptionContract(100.0, 110.0, 0.03, 0.2, 0.7, "call", "vanilla-vnb")
        reused = price_vnb(c, vp, zg, ug, timegrid, joint_density=J).price
        fresh = price_vnb(c, vp, zg, ug, timegrid).price
        assert reused == pytest.approx(fresh, rel=1e-12)


class TestSurface:
    def test_small_surface_shape_and_flags(self):
        vp = VnbParams(alpha=0.1, sigma=0.3, t0=0.2, T=0.7, r=0.03, omega0=0.0)
        zg = build_grid(-10.24, 2**8)
        ug = UGrid(-5.12, 2**9)
        surf = build_surface(vp, 100.0, [80.0, 100.0, 120.0], [0.3, 0.5], zg, ug, dtau=5e-3)
        assert surf.vols.shape == (2, 3)
        assert all(f == "ok" for row in surf.flags for f in row)
        assert np.all(surf.vols > 0.0)
        assert np.all(np.isfinite(surf.prices))
        # ATM vol of the omega0 = 0 surface stays within the sanity band
        assert 0.3 * 0.8 <= surf.vols[1, 1] <= 0.3 * 1.2

    def test_flagged_cells_never_silently_zero(self):
        vp = VnbParams(alpha=0.1, sigma=0.3, t0=0.2, T=0.7, r=0.03, omega0=0.0)
        zg = build_grid(-10.24, 2**8)
        ug = UGrid(-5.12, 2**9)
        # a strike far beyond any support: the call is worth ~0, below the
        # no-arbitrage band, so the cell must be flagged with a NaN vol
        surf = build_surface(vp, 100.0, [100000.0], [0.5], zg, ug, dtau=5e-3)
        assert math.isnan(surf.vols[0, 0])
        assert surf.flags[0][0] == "price-outside-band"

    def test_empty_inputs_rejected(self):
        vp = VnbParams(alpha=0.1, sigma=0.3, t0=0.2, T=0.7, r=0.03)
        zg = build_grid(-10.24, 2**8)
        ug = UGrid(-5.12, 2**9)
        with pytest.raises(ValueError):
            build_surface(vp, 100.0, [], [0.5], zg, ug)
