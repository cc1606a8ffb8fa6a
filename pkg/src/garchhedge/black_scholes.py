"""Black-Scholes utilities and the practitioner implied-vol surface.

Units are whatever the caller uses consistently: with per-day rates and
maturities in trading days, the implied volatilities are per square-root
day.  The surface is the usual quadratic-in-strike-and-maturity regression

    iv(K, T) = c0 + c1 K + c2 K^2 + c3 T + c4 T^2 + c5 K T,

fit by least squares to one quote date's inverted vols and floored at a
small positive value when evaluated.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq
from scipy.stats import norm

from .errors import InsufficientDataError, InversionError, ParamError

__all__ = [
    "bs_price",
    "bs_delta",
    "bs_vega",
    "implied_vol",
    "IvSurface",
    "fit_iv_surface",
    "adhoc_bs_delta",
]

_MIN_VOL = 1e-4  # floor applied when evaluating a fitted surface


def _d1(s, k, t, r, sigma):
    return (np.log(s / k) + (r + 0.5 * sigma * sigma) * t) / (sigma * np.sqrt(t))


def bs_price(s, k, t, r, sigma, call: bool = True):
    """Black-Scholes price of a European option; at t == 0 (or zero vol)
    the discounted intrinsic value."""
    if np.any(np.asarray(t) < 0.0):
        raise ParamError("maturity must be >= 0")
    s, k, t, r, sigma = map(np.asarray, (s, k, t, r, sigma))
    intrinsic_zone = (t <= 0.0) | (sigma <= 0.0)
    tt = np.where(intrinsic_zone, 1.0, t)
    sg = np.where(intrinsic_zone, 1.0, sigma)
    d1 = _d1(s, k, tt, r, sg)
    d2 = d1 - sg * np.sqrt(tt)
    if call:
        live = s * norm.cdf(d1) - k * np.exp(-r * tt) * norm.cdf(d2)
        dead = np.maximum(s - k * np.exp(-r * t), 0.0)
    else:
        live = k * np.exp(-r * tt) * norm.cdf(-d2) - s * norm.cdf(-d1)
        dead = np.maximum(k * np.exp(-r * t) - s, 0.0)
    out = np.where(intrinsic_zone, dead, live)
    return float(out) if out.ndim == 0 else out


def bs_delta(s, k, t, r, sigma, call: bool = True):
    """Black-Scholes spot delta N(d1) (calls) or N(d1) - 1 (puts)."""
    if sigma <= 0.0 or t <= 0.0:
        raise ParamError("bs_delta needs sigma > 0 and t > 0")
    d1 = _d1(s, k, t, r, sigma)
    out = norm.cdf(d1)
    return float(out if call else out - 1.0)


def bs_vega(s, k, t, r, sigma):
    """dPrice/dSigma."""
    if sigma <= 0.0 or t <= 0.0:
        raise ParamError("bs_vega needs sigma > 0 and t > 0")
    d1 = _d1(s, k, t, r, sigma)
    return float(s * norm.pdf(d1) * np.sqrt(t))


def implied_vol(price, s, k, t, r, call: bool = True) -> float:
    """Invert the Black-Scholes formula for volatility.

    The price must lie strictly inside the no-arbitrage band
    (discounted intrinsic, spot) for calls -- analogously for puts -- else
    InversionError is raised.  The root is bracketed and solved to machine
    precision; the returned vol reproduces the price to well within 1e-10.
    """
    price, s, k, t, r = map(float, (price, s, k, t, r))
    if t <= 0.0:
        raise InversionError("cannot invert at zero maturity")
    if call:
        lower, upper = max(s - k * np.exp(-r * t), 0.0), s
    else:
        lower, upper = max(k * np.exp(-r * t) - s, 0.0), k * np.exp(-r * t)
    if not lower < price < upper:
        raise InversionError(
            f"price {price:.6g} outside the no-arbitrage band ({lower:.6g}, {upper:.6g})"
        )

    def gap(sigma):
        return bs_price(s, k, t, r, sigma, call) - price

    lo = 1e-12
    hi = 0.5
    while gap(hi) < 0.0:
        hi *= 2.0
        if hi > 1e6:  # pragma: no cover - unreachable inside the band
            raise InversionError("failed to bracket the implied volatility")
    vol = brentq(gap, lo, hi, xtol=1e-14, rtol=8.9e-16, maxiter=200)
    if abs(gap(vol)) > 1e-10 * max(1.0, price):
        raise InversionError(f"root polish failed (residual {gap(vol):.3e})")
    return float(vol)


@dataclass(frozen=True)
class IvSurface:
    """Fitted quadratic implied-vol surface for one quote date."""

    coef: np.ndarray  # (c0, c1, c2, c3, c4, c5)
    n_used: int

    def __call__(self, strike, maturity):
        k = np.asarray(strike, dtype=float)
        t = np.asarray(maturity, dtype=float)
        c = self.coef
        iv = c[0] + c[1] * k + c[2] * k * k + c[3] * t + c[4] * t * t + c[5] * k * t
        out = np.maximum(iv, _MIN_VOL)
        return float(out) if out.ndim == 0 else out


def fit_iv_surface(strikes, maturities, vols, min_quotes: int = 6) -> IvSurface:
    """Least-squares fit of the quadratic surface to one date's implied
    vols.  Raises InsufficientDataError with fewer than ``min_quotes``
    valid points (the regression has six coefficients)."""
    k = np.asarray(strikes, dtype=float)
    t = np.asarray(maturities, dtype=float)
    v = np.asarray(vols, dtype=float)
    if not (k.shape == t.shape == v.shape) or k.ndim != 1:
        raise ParamError("strikes, maturities and vols must be equal-length 1-d arrays")
    good = np.isfinite(k) & np.isfinite(t) & np.isfinite(v)
    k, t, v = k[good], t[good], v[good]
    if k.size < min_quotes:
        raise InsufficientDataError(
            f"only {k.size} valid quotes; need at least {min_quotes} for the surface"
        )
    design = np.column_stack([np.ones_like(k), k, k * k, t, t * t, k * t])
    coef, *_ = np.linalg.lstsq(design, v, rcond=None)
    return IvSurface(coef=coef, n_used=int(k.size))


def adhoc_bs_delta(surface: IvSurface, s, k, t, r, call: bool = True) -> float:
    """Black-Scholes delta evaluated at the surface vol for (K, T) -- the
    practitioner benchmark hedge."""
    return bs_delta(s, k, t, r, float(surface(k, t)), call=call)
