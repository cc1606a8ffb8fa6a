"""Small-interval (diffusion) limit of the NGARCH hedging model.

A family of models indexed by the observation interval h is pinned down by
rate parameters (w0, w1, w2, w3) and the innovation moments (m3, m4):

    alpha0(h) = w0 * h,
    alpha1(h) = sqrt(w2 * h),
    gamma(h)  = w3,
    beta1(h)  = 1 - alpha1(h) (1 + w3^2) - w1 * h,

so that alpha0(h)/h -> w0, alpha1(h)^2/h -> w2, and the per-unit-time mean
reversion (1 - alpha1(h)(1+w3^2) - beta1(h))/h -> w1.  Returns over [t, t+h]
follow  y = (r + lam*sig - kappa(sig)) h + sqrt(h) sig eps,  with sig^2 the
per-unit-time conditional variance.

As h -> 0 the variance/price pair converges to a bivariate diffusion; the
one-step variance-on-price regression slope converges to

    VM -> (sig / S) sqrt(w2) (m3 - 2 w3),

and the market price of risk to  lam + (sig^2/2 - kappa(sig))/sig.  The
functions below evaluate the h-indexed quantities exactly (no simulation)
so convergence can be checked numerically.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InadmissibleHError, ParamError
from .hedging import _qvm_bracket
from .model import NgarchParams

__all__ = [
    "LimitParams",
    "HFamily",
    "limit_params_from_ngarch",
    "make_h_family",
    "market_price_of_risk",
    "limit_market_price_of_risk",
    "vm_of_h",
    "limit_vega_multiplier",
    "vm_convergence_study",
    "limit_drift_coefficients",
    "limit_diffusion_coefficients",
    "DEFAULT_H_GRID",
]

DEFAULT_H_GRID = (1.0, 1e-1, 1e-2, 1e-3, 1e-4, 1e-5)


@dataclass(frozen=True)
class LimitParams:
    """Rate parameters of the h-family plus the third/fourth raw moments of
    the innovation law.  m4 - m3^2 - 1 >= 0 always holds for genuine
    moments (Cauchy-Schwarz); it is validated because the limit diffusion
    coefficient takes its square root."""

    w0: float
    w1: float
    w2: float
    w3: float
    m3: float
    m4: float

    def __post_init__(self):
        vals = (self.w0, self.w1, self.w2, self.w3, self.m3, self.m4)
        if not all(np.isfinite(v) for v in vals):
            raise ParamError(f"non-finite limit parameter in {vals}")
        if self.w0 <= 0.0 or self.w2 < 0.0:
            raise ParamError(f"need w0 > 0 and w2 >= 0, got w0={self.w0}, w2={self.w2}")
        if self.m4 - self.m3 * self.m3 - 1.0 < -1e-12:
            raise ParamError(
                f"m4 - m3^2 - 1 = {self.m4 - self.m3**2 - 1.0:.3e} < 0: not valid moments"
            )


def limit_params_from_ngarch(params: NgarchParams, dist) -> LimitParams:
    """Rate parameters whose h=1 member is exactly ``params`` (with the
    moments taken from ``dist``)."""
    return LimitParams(
        w0=params.alpha0,
        w1=1.0 - params.beta1 - params.alpha1 * (1.0 + params.gamma**2),
        w2=params.alpha1**2,
        w3=params.gamma,
        m3=dist.m3,
        m4=dist.m4,
    )


@dataclass(frozen=True)
class HFamily:
    """One member of the h-family: the induced GARCH coefficients at
    observation interval h, in per-unit-time variance units."""

    h: float
    alpha0: float
    alpha1: float
    beta1: float
    gamma: float
    limit: LimitParams

    def step_params(self, lam: float, r: float) -> NgarchParams:
        """Equivalent per-step NGARCH parameters for the simulation engine,
        where one engine step spans h units of time and variances are
        per-step: alpha0 picks up a factor h, the premium and rate scale as
        lam*sqrt(h) and r*h.  A per-unit-time variance v corresponds to the
        per-step variance h*v."""
        return NgarchParams(
            alpha0=self.alpha0 * self.h,
            alpha1=self.alpha1,
            beta1=self.beta1,
            gamma=self.gamma,
            lam=lam * np.sqrt(self.h),
            r=r * self.h,
        )


def make_h_family(limit: LimitParams, h: float) -> HFamily:
    """Induced GARCH coefficients at observation interval h.

    Raises InadmissibleHError when beta1(h) would be negative (h too large
    for the requested rates)."""
    if not (np.isfinite(h) and h > 0.0):
        raise ParamError(f"h must be finite and > 0, got {h}")
    a1 = np.sqrt(limit.w2 * h)
    b1 = 1.0 - a1 * (1.0 + limit.w3**2) - limit.w1 * h
    if b1 < 0.0:
        raise InadmissibleHError(
            f"beta1(h) = {b1:.6f} < 0 at h = {h}: interval too coarse for these rates"
        )
    return HFamily(
        h=h,
        alpha0=limit.w0 * h,
        alpha1=a1,
        beta1=b1,
        gamma=limit.w3,
        limit=limit,
    )


def market_price_of_risk(lam: float, dist, sigma: float, h: float) -> float:
    """Per-unit-time market price of risk of the h-model at per-unit-time
    volatility sigma:

        rho(h) = lam + (kappa(sqrt(h) sigma)/h - kappa(sigma)) / sigma.

    At h = 1 this is lam exactly; for Gaussian innovations it is lam for
    every h (the convexity corrections cancel)."""
    if not (np.isfinite(sigma) and sigma > 0.0):
        raise ParamError(f"sigma must be finite and > 0, got {sigma}")
    if not (np.isfinite(h) and h > 0.0):
        raise ParamError(f"h must be finite and > 0, got {h}")
    if getattr(dist, "kind", None) == "gaussian":
        # kappa(z) = z^2/2 makes the correction identically zero; skipping
        # the float roundtrip keeps rho(h) == lam exact.
        return lam
    k_h = dist.cgf(np.sqrt(h) * sigma).value
    k_1 = dist.cgf(sigma).value
    return lam + (k_h / h - k_1) / sigma


def limit_market_price_of_risk(lam: float, dist, sigma: float) -> float:
    """h -> 0 limit of :func:`market_price_of_risk`:
    lam + (sigma^2/2 - kappa(sigma)) / sigma."""
    if not (np.isfinite(sigma) and sigma > 0.0):
        raise ParamError(f"sigma must be finite and > 0, got {sigma}")
    return lam + (0.5 * sigma * sigma - dist.cgf(sigma).value) / sigma


def vm_of_h(
    limit: LimitParams,
    dist,
    s: float,
    sigma: float,
    h: float,
    lam: float = 0.0,
    r: float = 0.0,
) -> float:
    """Exact one-step variance-on-price regression slope of the h-model
    under its shift-type risk-neutral measure, in per-unit-time variance
    units:

        VM(h) = alpha1(h) sig^2 / (e^{rh} S) *
                [kappa'(u)^2 - 2(sqrt(h) rho(h) + w3) kappa'(u) + kappa''(u) - 1]
                / (exp(kappa(2u) - 2 kappa(u)) - 1),        u = sqrt(h) sig,

    with rho(h) the market price of risk.  At h = 1 this coincides with
    :func:`garchhedge.hedging.vega_multiplier_q` for the member parameters.
    """
    fam = make_h_family(limit, h)
    rho = market_price_of_risk(lam, dist, sigma, h)
    u = np.sqrt(h) * sigma
    c = np.sqrt(h) * rho + limit.w3
    num, den = _qvm_bracket(dist, u, c)
    if den <= 0.0:
        raise ParamError(f"degenerate one-step price variance at h={h}")
    return fam.alpha1 * sigma * sigma * num / (np.exp(r * h) * s * den)


def limit_vega_multiplier(limit: LimitParams, s: float, sigma: float) -> float:
    """h -> 0 limit of :func:`vm_of_h`:  (sigma / S) sqrt(w2) (m3 - 2 w3)."""
    return sigma / s * np.sqrt(limit.w2) * (limit.m3 - 2.0 * limit.w3)


def vm_convergence_study(
    limit: LimitParams,
    dist,
    s: float,
    sigma: float,
    lam: float = 0.0,
    r: float = 0.0,
    h_grid=DEFAULT_H_GRID,
):
    """Tabulate VM(h) against its small-h limit over a grid of intervals.

    Returns a pandas DataFrame with columns (h, vm, vm_limit, abs_err,
    rel_err), ordered as given (conventionally decreasing h).
    """
    import pandas as pd

    vm_lim = limit_vega_multiplier(limit, s, sigma)
    rows = []
    for h in h_grid:
        vm = vm_of_h(limit, dist, s, sigma, h, lam=lam, r=r)
        abs_err = abs(vm - vm_lim)
        rel_err = abs_err / abs(vm_lim) if vm_lim != 0.0 else np.inf
        rows.append({"h": h, "vm": vm, "vm_limit": vm_lim, "abs_err": abs_err, "rel_err": rel_err})
    return pd.DataFrame(rows)


def limit_drift_coefficients(limit: LimitParams) -> dict:
    """Drift coefficient of the limiting variance diffusion under each
    risk-neutral kernel, as callables of (sig2, rho):

        shift kernel:               w0 - (w1 - 2 sqrt(w2) w3 rho) sig2,
        minimal-martingale kernel:  w0 - (w1 + sqrt(w2)(m3 - 2 w3) rho) sig2.

    Their difference is sqrt(w2) * m3 * rho * sig2 -- zero for symmetric
    innovations, where the two kernels share the same limit."""
    sw2 = np.sqrt(limit.w2)
    w0, w1, w3, m3 = limit.w0, limit.w1, limit.w3, limit.m3

    def drift_egp(sig2, rho):
        return w0 - (w1 - 2.0 * sw2 * w3 * rho) * sig2

    def drift_mmm(sig2, rho):
        return w0 - (w1 + sw2 * (m3 - 2.0 * w3) * rho) * sig2

    return {"egp": drift_egp, "mmm": drift_mmm}


def limit_diffusion_coefficients(limit: LimitParams) -> tuple:
    """Diffusion coefficients of the limiting variance process (shared by
    both kernels): the loading on the price-driving Brownian motion and on
    the orthogonal one,

        b1(sig2) = sqrt(w2) (m3 - 2 w3) sig2,
        b2(sig2) = sqrt(w2) sqrt(m4 - m3^2 - 1) sig2.
    """
    sw2 = np.sqrt(limit.w2)
    c1 = limit.m3 - 2.0 * limit.w3
    c2 = np.sqrt(max(limit.m4 - limit.m3**2 - 1.0, 0.0))

    def b1(sig2):
        return sw2 * c1 * sig2

    def b2(sig2):
        return sw2 * c2 * sig2

    return b1, b2
