"""Black-Scholes utilities: prices against a lognormal quadrature oracle,
greeks against finite differences, implied-vol inversion, and the quadratic
vol-surface regression."""

from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad
from scipy.stats import norm

from garchhedge import (
    InsufficientDataError,
    InversionError,
    IvSurface,
    ParamError,
    adhoc_bs_delta,
    bs_delta,
    bs_price,
    bs_vega,
    fit_iv_surface,
    implied_vol,
)

GRID = [
    # s, k, t, r, sigma
    (100.0, 100.0, 0.25, 0.0, 0.2),
    (100.0, 110.0, 1.0, 0.05, 0.2),
    (100.0, 90.0, 0.5, 0.03, 0.35),
    (50.0, 55.0, 2.0, -0.01, 0.15),
    (100.0, 100.0, 30.0, 2.8e-5, 0.01),  # daily units: 30 steps, vol/sqrt(day)
    (1.0, 1.2, 0.1, 0.0, 0.9),
]


def _quad_price(s, k, t, r, sigma, call=True):
    """Discounted lognormal expectation of the payoff by quadrature."""

    def terminal(z):
        return s * math.exp((r - 0.5 * sigma * sigma) * t + sigma * math.sqrt(t) * z)

    if call:
        z_star = (math.log(k / s) - (r - 0.5 * sigma * sigma) * t) / (sigma * math.sqrt(t))
        val, _ = quad(lambda z: (terminal(z) - k) * norm.pdf(z), z_star, z_star + 45.0, limit=300)
    else:
        z_star = (math.log(k / s) - (r - 0.5 * sigma * sigma) * t) / (sigma * math.sqrt(t))
        val, _ = quad(lambda z: (k - terminal(z)) * norm.pdf(z), z_star - 45.0, z_star, limit=300)
    return math.exp(-r * t) * val


# ---------------------------------------------------------------------------
# prices
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("s,k,t,r,sigma", GRID)
@pytest.mark.parametrize("call", [True, False])
def test_price_matches_lognormal_quadrature(s, k, t, r, sigma, call):
    got = bs_price(s, k, t, r, sigma, call=call)
    want = _quad_price(s, k, t, r, sigma, call=call)
    assert got == pytest.approx(want, rel=1e-9, abs=1e-12)


@pytest.mark.parametrize("s,k,t,r,sigma", GRID)
def test_put_call_parity(s, k, t, r, sigma):
    c = bs_price(s, k, t, r, sigma, call=True)
    p = bs_price(s, k, t, r, sigma, call=False)
    assert c - p == pytest.approx(s - k * math.exp(-r * t), rel=1e-12, abs=1e-12)


def test_price_stays_inside_no_arbitrage_band():
    for s, k, t, r, sigma in GRID:
        c = bs_price(s, k, t, r, sigma, call=True)
        assert max(s - k * math.exp(-r * t), 0.0) < c < s


def test_price_intrinsic_zone():
    # zero maturity: discounted intrinsic collapses to plain intrinsic
    assert bs_price(105.0, 100.0, 0.0, 0.05, 0.2) == 5.0
    assert bs_price(95.0, 100.0, 0.0, 0.05, 0.2) == 0.0
    assert bs_price(95.0, 100.0, 0.0, 0.05, 0.2, call=False) == 5.0
    # zero vol with time left: strike discounts
    t, r = 2.0, 0.05
    assert bs_price(105.0, 100.0, t, r, 0.0) == pytest.approx(
        105.0 - 100.0 * math.exp(-r * t), rel=1e-15
    )
    assert bs_price(50.0, 100.0, t, r, 0.0) == 0.0


def test_price_rejects_negative_maturity():
    with pytest.raises(ParamError):
        bs_price(100.0, 100.0, -0.1, 0.0, 0.2)


def test_price_vectorizes_over_strikes():
    ks = np.array([80.0, 90.0, 100.0, 110.0, 120.0])
    vec = bs_price(100.0, ks, 0.5, 0.02, 0.25)
    assert isinstance(vec, np.ndarray)
    for kk, v in zip(ks, vec):
        assert v == bs_price(100.0, float(kk), 0.5, 0.02, 0.25)
    # call prices decrease in strike
    assert np.all(np.diff(vec) < 0.0)


# ---------------------------------------------------------------------------
# greeks
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("s,k,t,r,sigma", GRID)
@pytest.mark.parametrize("call", [True, False])
def test_delta_matches_finite_difference(s, k, t, r, sigma, call):
    h = 1e-5 * s
    fd = (
        bs_price(s + h, k, t, r, sigma, call=call)
        - bs_price(s - h, k, t, r, sigma, call=call)
    ) / (2.0 * h)
    assert bs_delta(s, k, t, r, sigma, call=call) == pytest.approx(fd, rel=2e-6, abs=1e-9)


def test_put_delta_is_call_delta_minus_one():
    for s, k, t, r, sigma in GRID:
        assert bs_delta(s, k, t, r, sigma, call=False) == pytest.approx(
            bs_delta(s, k, t, r, sigma, call=True) - 1.0, abs=1e-15
        )


@pytest.mark.parametrize("s,k,t,r,sigma", GRID)
def test_vega_matches_finite_difference(s, k, t, r, sigma):
    h = 1e-6
    fd = (bs_price(s, k, t, r, sigma + h) - bs_price(s, k, t, r, sigma - h)) / (2.0 * h)
    v = bs_vega(s, k, t, r, sigma)
    assert v > 0.0
    assert v == pytest.approx(fd, rel=2e-6)


def test_greek_guards():
    for bad in [dict(sigma=0.0), dict(t=0.0), dict(sigma=-0.1), dict(t=-1.0)]:
        kw = dict(s=100.0, k=100.0, t=1.0, r=0.0, sigma=0.2)
        kw.update(bad)
        with pytest.raises(ParamError):
            bs_delta(**kw)
        with pytest.raises(ParamError):
            bs_vega(**kw)


# ---------------------------------------------------------------------------
# implied vol
# ---------------------------------------------------------------------------


def test_implied_vol_canonical_roundtrip():
    price = bs_price(100.0, 100.0, 0.25, 0.0, 0.2)
    iv = implied_vol(price, 100.0, 100.0, 0.25, 0.0)
    assert abs(iv - 0.2) < 1e-10
    assert abs(bs_price(100.0, 100.0, 0.25, 0.0, iv) - price) < 1e-10


@pytest.mark.parametrize("s,k,t,r,sigma", GRID)
@pytest.mark.parametrize("call", [True, False])
def test_implied_vol_roundtrip_grid(s, k, t, r, sigma, call):
    price = bs_price(s, k, t, r, sigma, call=call)
    iv = implied_vol(price, s, k, t, r, call=call)
    assert iv == pytest.approx(sigma, rel=1e-9, abs=1e-12)
    assert abs(bs_price(s, k, t, r, iv, call=call) - price) <= 1e-10 * max(1.0, price)


def test_implied_vol_brackets_above_initial_guess():
    # vols far above the starting bracket of the solver still invert
    price = bs_price(100.0, 100.0, 1.0, 0.0, 3.0)
    assert implied_vol(price, 100.0, 100.0, 1.0, 0.0) == pytest.approx(3.0, rel=1e-9)


def test_implied_vol_band_rejections():
    s, k, t, r = 100.0, 100.0, 0.5, 0.03
    intrinsic = max(s - k * math.exp(-r * t), 0.0)
    with pytest.raises(InversionError):
        implied_vol(s, s, k, t, r)  # price == spot: upper bound
    with pytest.raises(InversionError):
        implied_vol(s + 1.0, s, k, t, r)
    with pytest.raises(InversionError):
        implied_vol(intrinsic, s, k, t, r)  # price == lower bound
    with pytest.raises(InversionError):
        implied_vol(intrinsic - 0.5, s, k, t, r)
    with pytest.raises(InversionError):
        implied_vol(0.0, s, k, t, r)


def test_implied_vol_rejects_zero_maturity():
    with pytest.raises(InversionError):
        implied_vol(5.0, 100.0, 100.0, 0.0, 0.0)


def test_implied_vol_put_band():
    s, k, t, r = 100.0, 110.0, 0.5, 0.02
    price = bs_price(s, k, t, r, 0.3, call=False)
    assert implied_vol(price, s, k, t, r, call=False) == pytest.approx(0.3, rel=1e-9)
    with pytest.raises(InversionError):
        implied_vol(k * math.exp(-r * t), s, k, t, r, call=False)  # upper bound


@settings(max_examples=40, deadline=None)
@given(
    m=st.floats(0.75, 1.3),
    t=st.floats(0.05, 3.0),
    r=st.floats(-0.02, 0.08),
    sigma=st.floats(0.02, 1.5),
)
def test_implied_vol_roundtrip_property(m, t, r, sigma):
    s, k = 100.0, 100.0 * m
    price = bs_price(s, k, t, r, sigma)
    lower = max(s - k * math.exp(-r * t), 0.0)
    if price - lower <= 1e-9 * s:
        # deep ITM at low vol the price sits within rounding of intrinsic;
        # it carries essentially no volatility information, so a refusal is
        # as correct as a roundtrip -- only require that a returned vol
        # still reprices
        try:
            iv = implied_vol(price, s, k, t, r)
        except InversionError:
            return
    else:
        iv = implied_vol(price, s, k, t, r)
    assert abs(bs_price(s, k, t, r, iv) - price) <= 1e-10 * max(1.0, price)


# ---------------------------------------------------------------------------
# surface
# ---------------------------------------------------------------------------


def _synthetic_quotes(vol_fn, s=100.0, r=0.001):
    """Price synthetic calls from a strike/maturity vol rule, then invert
    them back to implied vols -- the exact pipeline the backtest runs."""
    strikes, maturities, vols = [], [], []
    for k in (90.0, 95.0, 100.0, 105.0, 110.0):
        for t in (10.0, 30.0, 60.0, 120.0):
            sigma = vol_fn(k, t)
            price = bs_price(s, k, t, r, sigma)
            strikes.append(k)
            maturities.append(t)
            vols.append(implied_vol(price, s, k, t, r))
    return np.array(strikes), np.array(maturities), np.array(vols)


def test_surface_flat_vol_recovery():
    k, t, v = _synthetic_quotes(lambda k, t: 0.02)
    surf = fit_iv_surface(k, t, v)
    assert surf.n_used == k.size
    # everywhere on the quote hull, not just at the nodes
    kk, tt = np.meshgrid(np.linspace(90.0, 110.0, 9), np.linspace(10.0, 120.0, 9))
    dev = np.abs(surf(kk.ravel(), tt.ravel()) - 0.02)
    assert dev.max() < 1e-6


def test_surface_linear_in_strike_recovery():
    a0, a1 = 0.05, -2.5e-4
    k, t, v = _synthetic_quotes(lambda k, t: a0 + a1 * k)
    surf = fit_iv_surface(k, t, v)
    assert surf.coef[1] == pytest.approx(a1, abs=1e-6)
    assert abs(surf.coef[2]) < 1e-7
    assert abs(surf.coef[3]) < 1e-7
    assert surf(97.3, 45.0) == pytest.approx(a0 + a1 * 97.3, abs=1e-6)


def test_surface_full_quadratic_recovery():
    coef = np.array([0.3, -4e-3, 1.8e-5, 1e-4, -4e-7, -6e-7])

    def vol_fn(k, t):
        return (
            coef[0]
            + coef[1] * k
            + coef[2] * k * k
            + coef[3] * t
            + coef[4] * t * t
            + coef[5] * k * t
        )

    k, t, v = _synthetic_quotes(vol_fn)
    surf = fit_iv_surface(k, t, v)
    np.testing.assert_allclose(surf.coef, coef, rtol=0, atol=2e-7)


def test_surface_requires_six_quotes():
    k = np.array([90.0, 95.0, 100.0, 105.0, 110.0])
    with pytest.raises(InsufficientDataError):
        fit_iv_surface(k, np.full(5, 30.0), np.full(5, 0.2))


def test_surface_drops_nonfinite_quotes():
    k = np.array([88.0, 90.0, 95.0, 100.0, 105.0, 110.0, 115.0, 120.0])
    t = np.array([10.0, 20.0, 30.0, 40.0, 50.0, 60.0, 70.0, 80.0])
    v = np.full(8, 0.25)
    v[0] = np.nan
    t_bad = t.copy()
    t_bad[7] = np.inf
    surf = fit_iv_surface(k, t_bad, v)
    assert surf.n_used == 6
    assert surf(100.0, 40.0) == pytest.approx(0.25, abs=1e-10)
    # dropping one more valid point pushes it under the minimum
    v[1] = np.nan
    with pytest.raises(InsufficientDataError):
        fit_iv_surface(k, t_bad, v)


def test_surface_shape_guard():
    with pytest.raises(ParamError):
        fit_iv_surface(np.ones(6), np.ones(5), np.ones(6))
    with pytest.raises(ParamError):
        fit_iv_surface(np.ones((3, 2)), np.ones((3, 2)), np.ones((3, 2)))


def test_surface_evaluation_floor():
    surf = IvSurface(coef=np.array([-1.0, 0.0, 0.0, 0.0, 0.0, 0.0]), n_used=6)
    assert surf(100.0, 30.0) == 1e-4
    vals = surf(np.array([50.0, 150.0]), np.array([10.0, 200.0]))
    assert np.all(vals == 1e-4)


# ---------------------------------------------------------------------------
# practitioner delta
# ---------------------------------------------------------------------------


def _flat_surface(level):
    return IvSurface(coef=np.array([level, 0.0, 0.0, 0.0, 0.0, 0.0]), n_used=6)


def test_adhoc_delta_flat_surface_atm():
    surf = _flat_surface(0.2)
    got = adhoc_bs_delta(surf, 100.0, 100.0, 0.25, 0.0)
    assert got == pytest.approx(float(norm.cdf(0.05)), abs=1e-14)
    assert got == pytest.approx(0.5199, abs=1e-4)


def test_adhoc_delta_deep_strikes():
    surf = _flat_surface(0.2)
    assert adhoc_bs_delta(surf, 100.0, 1e-6, 0.25, 0.0) == pytest.approx(1.0, abs=1e-12)
    assert adhoc_bs_delta(surf, 100.0, 1e6, 0.25, 0.0) == pytest.approx(0.0, abs=1e-12)


def test_adhoc_delta_reads_surface_smile():
    # a skewed surface must change the delta exactly as bs_delta at that vol
    surf = IvSurface(coef=np.array([0.6, -4e-3, 1e-5, 0.0, 0.0, 0.0]), n_used=6)
    s, k, t, r = 100.0, 105.0, 0.5, 0.01
    vol = float(surf(k, t))
    assert vol != pytest.approx(0.6)  # the smile actually moved it
    assert adhoc_bs_delta(surf, s, k, t, r) == bs_delta(s, k, t, r, vol)


def test_adhoc_delta_put():
    surf = _flat_surface(0.2)
    c = adhoc_bs_delta(surf, 100.0, 100.0, 0.25, 0.0, call=True)
    p = adhoc_bs_delta(surf, 100.0, 100.0, 0.25, 0.0, call=False)
    assert p == pytest.approx(c - 1.0, abs=1e-15)
