"""Asymmetric NGARCH(1,1) return dynamics.

Log returns y_t under the physical measure follow

    y_t     = r + lam * sig_t - kappa(sig_t) + sig_t * eps_t,
    sig2_{t+1} = alpha0 + alpha1 * sig2_t * (eps_t - gamma)^2 + beta1 * sig2_t,

with eps_t a standardized innovation (see :mod:`garchhedge.distributions`)
and kappa its cumulant generating function; the convexity correction makes
exp(-r t) E[S_t] grow at exactly the equity premium lam*sig.  Under the
exponential-affine (conditional Esscher / extended Girsanov) risk-neutral
measure the same innovation law drives

    y_t     = r - kappa(sig_t) + sig_t * eps*_t,
    sig2_{t+1} = alpha0 + alpha1 * sig2_t * (eps*_t - lam - gamma)^2 + beta1 * sig2_t,

where eps*_t = eps_t + lam.  Given an observed return path the two
recursions produce the *same* variance sequence, which is what makes the
filter below measure-free.

All rates are per trading day and variances per trading day squared; time is
measured in trading days throughout the package.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import NonFiniteError, NonStationaryError, ParamError

__all__ = [
    "NgarchParams",
    "VarianceState",
    "FilterResult",
    "persistence",
    "unconditional_variance",
    "variance_update",
    "filter_variance",
    "step_p",
    "step_q_egp",
    "step_q_generic",
    "GenericRiskNeutral",
]

# A filtered/simulated conditional variance larger than this multiple of the
# stationary variance (or of the initial variance when non-stationary) is
# treated as numerical blow-up.
_VAR_BLOWUP_FACTOR = 1e6


@dataclass(frozen=True)
class NgarchParams:
    """Static NGARCH(1,1) parameter set.

    alpha0 > 0, alpha1 >= 0, beta1 >= 0 are enforced at construction;
    stationarity (persistence < 1) is *not*, so that near- and non-stationary
    sets can still be filtered and diagnosed -- quantities that genuinely
    require stationarity raise NonStationaryError instead.
    """

    alpha0: float
    alpha1: float
    beta1: float
    gamma: float
    lam: float
    r: float = 0.0

    def __post_init__(self):
        vals = (self.alpha0, self.alpha1, self.beta1, self.gamma, self.lam, self.r)
        if not all(np.isfinite(v) for v in vals):
            raise ParamError(f"non-finite NGARCH parameter in {vals}")
        if self.alpha0 <= 0.0:
            raise ParamError(f"alpha0 must be > 0, got {self.alpha0}")
        if self.alpha1 < 0.0 or self.beta1 < 0.0:
            raise ParamError(
                f"alpha1, beta1 must be >= 0, got {self.alpha1}, {self.beta1}"
            )

    @property
    def persistence(self) -> float:
        """alpha1 * (1 + gamma^2) + beta1 -- the AR(1) coefficient of the
        variance recursion."""
        return self.alpha1 * (1.0 + self.gamma * self.gamma) + self.beta1


@dataclass(frozen=True)
class VarianceState:
    """Markov state carried between steps: current conditional variance and
    the integer time index it applies to."""

    var: float
    t: int = 0

    def __post_init__(self):
        if not (np.isfinite(self.var) and self.var > 0.0):
            raise ParamError(f"conditional variance must be finite and > 0, got {self.var}")


def persistence(params: NgarchParams) -> float:
    return params.persistence


def unconditional_variance(params: NgarchParams) -> float:
    """Stationary variance alpha0 / (1 - persistence).

    Raises NonStationaryError when persistence >= 1.
    """
    p = params.persistence
    if p >= 1.0:
        raise NonStationaryError(
            f"persistence {p:.6f} >= 1: unconditional variance does not exist"
        )
    return params.alpha0 / (1.0 - p)


def variance_update(params: NgarchParams, var, eps):
    """One application of the physical-measure variance recursion.

    Works elementwise on arrays.  ``eps`` is the standardized innovation of
    the step whose conditional variance was ``var``.
    """
    dev = eps - params.gamma
    return params.alpha0 + (params.alpha1 * dev * dev + params.beta1) * var


def _blowup_level(params: NgarchParams, var_init: float) -> float:
    if params.persistence < 1.0:
        base = max(unconditional_variance(params), var_init)
    else:
        base = var_init
    return _VAR_BLOWUP_FACTOR * base


class FilterResult(NamedTuple):
    """Output of :func:`filter_variance`: per-observation conditional
    variances and innovations, plus the one-step-ahead variance after the
    last observation."""

    variances: np.ndarray
    innovations: np.ndarray
    next_var: float


def filter_variance(
    params: NgarchParams,
    dist,
    returns: np.ndarray,
    var_init: float | None = None,
) -> FilterResult:
    """Run the variance filter along an observed return path.

    For each observation t the implied standardized innovation is

        eps_t = (y_t - r - lam*sig_t + kappa(sig_t)) / sig_t,

    after which the variance recursion advances.  Because the risk-neutral
    recursion written in terms of eps*_t = eps_t + lam produces the same
    next variance for the same observed y_t, the filtered variance path is
    identical under both measures.

    Parameters
    ----------
    params, dist : model parameters and innovation law.
    returns : 1-d array of log returns.
    var_init : starting conditional variance; defaults to the stationary
        variance (requires persistence < 1).

    Returns
    -------
    (variances, innovations, next_var) where ``variances[t]`` is the
    conditional variance of ``returns[t]``, ``innovations[t]`` the implied
    eps_t, and ``next_var`` the one-step-ahead variance after the last
    observation (the natural seed for pricing/hedging at the end of the
    sample).

    Raises NonFiniteError if the returns contain non-finite values or the
    recursion overflows.
    """
    y = np.asarray(returns, dtype=float)
    if y.ndim != 1 or y.size == 0:
        raise ParamError("returns must be a non-empty 1-d array")
    if not np.all(np.isfinite(y)):
        raise NonFiniteError("returns contain non-finite values")
    if var_init is None:
        var_init = unconditional_variance(params)
    if not (np.isfinite(var_init) and var_init > 0.0):
        raise ParamError(f"var_init must be finite and > 0, got {var_init}")

    cap = _blowup_level(params, var_init)
    n = y.size
    variances = np.empty(n)
    innovations = np.empty(n)
    var = float(var_init)
    for t in range(n):
        sig = np.sqrt(var)
        kap = dist.cgf(sig).value
        eps = (y[t] - params.r - params.lam * sig + kap) / sig
        variances[t] = var
        innovations[t] = eps
        var = variance_update(params, var, eps)
        if not np.isfinite(var) or var > cap:
            raise NonFiniteError(
                f"variance recursion overflowed at t={t} (var={var:.3e})"
            )
    return FilterResult(variances, innovations, float(var))


def step_p(params: NgarchParams, dist, state: VarianceState, eps: float):
    """Advance one step under the physical measure.

    Returns ``(y, next_state)`` for the supplied standardized innovation.
    """
    sig = np.sqrt(state.var)
    kap = dist.cgf(sig).value
    y = params.r + params.lam * sig - kap + sig * eps
    nxt = variance_update(params, state.var, eps)
    return y, VarianceState(float(nxt), state.t + 1)


def step_q_egp(params: NgarchParams, dist, state: VarianceState, eps_star: float):
    """Advance one step under the exponential-affine risk-neutral measure,
    where eps*_t is again standardized under that measure.

    Returns ``(y, next_state)``.
    """
    sig = np.sqrt(state.var)
    kap = dist.cgf(sig).value
    y = params.r - kap + sig * eps_star
    dev = eps_star - params.lam - params.gamma
    nxt = params.alpha0 + (params.alpha1 * dev * dev + params.beta1) * state.var
    return y, VarianceState(float(nxt), state.t + 1)


@dataclass(frozen=True)
class GenericRiskNeutral:
    """A general exponential-affine risk-neutral specification in which the
    level, news-impact and persistence coefficients, the news-impact shift
    and the innovation law may all differ from their physical counterparts.

    The concrete measures used elsewhere in the package are special cases;
    this container exists so that code written against the general shape
    keeps working if another measure is wired in later.
    """

    alpha0_fn: object  # callable t, var -> alpha0*
    alpha1_fn: object
    beta1_fn: object
    shift_fn: object  # callable t, var -> news-impact shift
    dist: object
    r: float


def step_q_generic(spec: GenericRiskNeutral, state: VarianceState, eps_star: float):
    """One step of the generic risk-neutral recursion above."""
    sig = np.sqrt(state.var)
    kap = spec.dist.cgf(sig).value
    y = spec.r - kap + sig * eps_star
    a0 = spec.alpha0_fn(state.t, state.var)
    a1 = spec.alpha1_fn(state.t, state.var)
    b1 = spec.beta1_fn(state.t, state.var)
    dev = eps_star - spec.shift_fn(state.t, state.var)
    nxt = a0 + (a1 * dev * dev + b1) * state.var
    return y, VarianceState(float(nxt), state.t + 1)
