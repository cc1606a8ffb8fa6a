"""Risk-neutral measure changes for the NGARCH model.

Three pricing kernels are supported:

* ``"egp"``     -- the exponential-affine change that shifts the innovation
  by the unit equity premium (eps* = eps + lam) while keeping its law; the
  resulting dynamics can be simulated directly, so no reweighting is needed.
* ``"esscher"`` -- the conditional exponential tilt whose per-step parameter
  theta_t solves the one-step martingale equation; simulation stays under
  the physical measure and paths carry Radon-Nikodym weights.  For Gaussian
  innovations the tilt coincides with the egp change.
* ``"mmm"``     -- the minimal martingale measure, represented through its
  density factors N_t estimated from a physical-measure ensemble.  The
  factors may be negative (a signed measure), which is reported rather than
  hidden.

Functions here operate on plain arrays or on path ensembles duck-typed from
:mod:`garchhedge.engine` (attributes ``prices``, ``variances``,
``path_probs``, ...); nothing below imports the engine.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegenerateBlockError,
    FrequencyError,
    NoRootError,
    ParamError,
    SignedMeasureWarning,
)
from .model import NgarchParams

__all__ = [
    "PricingKernel",
    "egp_rn_derivative",
    "esscher_theta",
    "esscher_theta_bisection",
    "esscher_rn_derivative",
    "SdfFactors",
    "mmm_factors",
]

_KERNEL_KINDS = ("egp", "esscher", "mmm")


@dataclass(frozen=True)
class PricingKernel:
    """Which martingale measure prices and hedges are computed under.

    ``j`` is the hedging/rebalancing interval in steps; it only affects the
    minimal-martingale kernel, whose density factors depend on the block
    length.
    """

    kind: str
    j: int = 1

    def __post_init__(self):
        if self.kind not in _KERNEL_KINDS:
            raise ParamError(f"unknown kernel kind {self.kind!r}, expected one of {_KERNEL_KINDS}")
        if self.j < 1:
            raise ParamError(f"kernel interval j must be >= 1, got {self.j}")


# ---------------------------------------------------------------------------
# exponential-affine (shift) kernel
# ---------------------------------------------------------------------------


def egp_rn_derivative(params: NgarchParams, dist, innovations) -> float | np.ndarray:
    """Radon-Nikodym derivative dQ/dP along one or more innovation paths.

    The per-step factor is f(eps_t + lam) / f(eps_t) with f the innovation
    density; the product telescopes over the path.  ``innovations`` may be a
    single path (1-d) or a matrix of paths (paths x steps), in which case a
    vector of per-path derivatives is returned.  Computed in log space.
    """
    eps = np.asarray(innovations, dtype=float)
    log_factors = dist.logpdf(eps + params.lam) - dist.logpdf(eps)
    out = np.exp(np.sum(log_factors, axis=-1))
    return float(out) if np.ndim(out) == 0 else out


# ---------------------------------------------------------------------------
# conditional Esscher kernel
# ---------------------------------------------------------------------------


def _martingale_gap(params: NgarchParams, dist, sigma, theta):
    """g(theta) = kappa((theta+1) sigma) - kappa(theta sigma) + lam*sigma
    - kappa(sigma); the tilt parameter solves g = 0.  Strictly increasing in
    theta."""
    k1 = dist.cgf((theta + 1.0) * sigma).value
    k0 = dist.cgf(theta * sigma).value
    return k1 - k0 + params.lam * sigma - dist.cgf(sigma).value


def esscher_theta(params: NgarchParams, dist, sigma):
    """Per-step exponential-tilt parameter solving the one-step martingale
    equation at conditional volatility ``sigma`` (scalar or array).

    For Gaussian innovations the root is -lam/sigma.  For NIG innovations it
    is available in closed form: with display-scale parameters kh = k*s,
    d = sigma*s and c = kappa(sigma) - (lam + loc)*sigma,

        theta = -1/2 - a/sigma + c/(2*sigma*s) * sqrt(4*kh^2/(d^2+c^2) - 1),

    valid whenever the square root is real and the implied tilt keeps both
    CGF arguments inside the steepness domain; otherwise NoRootError is
    raised.  The returned root is verified to satisfy the martingale
    equation to 1e-10.
    """
    sig = np.asarray(sigma, dtype=float)
    scalar = sig.ndim == 0
    sig = np.atleast_1d(sig)
    if np.any(~np.isfinite(sig)) or np.any(sig <= 0.0):
        raise ParamError("sigma must be finite and > 0")

    if dist.kind == "gaussian":
        theta = -params.lam / sig
    elif dist.kind == "nig":
        k, a, s = dist.k, dist.a, dist.s
        kh = k * s
        d = sig * s
        c = dist.cgf(sig).value - (params.lam + dist.loc) * sig
        radicand = 4.0 * kh * kh / (d * d + c * c) - 1.0
        if np.any(radicand < 0.0):
            raise NoRootError(
                "martingale tilt equation has no real root at this state "
                f"(max sigma {sig.max():.6g})"
            )
        root = np.sqrt(radicand)
        # both sqrt terms of the underlying quadratic must be positive for
        # the root to lie inside the CGF domain
        half_sum = 0.5 * (c + d * root)  # s*sqrt(k^2 - (a + theta*sigma)^2)
        half_dif = half_sum - c  # s*sqrt(k^2 - (a + (theta+1)*sigma)^2)
        if np.any(half_sum <= 0.0) or np.any(half_dif <= 0.0):
            raise NoRootError("tilt root falls outside the CGF domain")
        theta = -0.5 - a / sig + c * root / (2.0 * d)
    else:
        raise ParamError(f"no closed-form tilt for distribution kind {dist.kind!r}")

    if np.any(~np.isfinite(theta)):
        raise NoRootError("tilt parameter diverged (sigma too small?)")
    gap = _martingale_gap(params, dist, sig, theta)
    if np.any(np.abs(gap) > 1e-10):
        raise NoRootError(
            f"tilt root fails the martingale equation (max residual {np.max(np.abs(gap)):.3e})"
        )
    if scalar:
        return float(theta[0])
    return theta


def esscher_theta_bisection(params: NgarchParams, dist, sigma: float, xtol: float = 1e-13) -> float:
    """Root of the one-step martingale equation by bracketed bisection.

    Slower than :func:`esscher_theta` but makes no use of the closed form;
    kept as an independent cross-check.  Scalar only.
    """
    sigma = float(sigma)
    if not (np.isfinite(sigma) and sigma > 0.0):
        raise ParamError("sigma must be finite and > 0")
    if dist.kind == "nig":
        z_lo, z_hi = dist.cgf_domain()
        # need theta*sigma and (theta+1)*sigma inside (z_lo, z_hi)
        lo = z_lo / sigma
        hi = z_hi / sigma - 1.0
        shrink = 1e-9 * (hi - lo)
        lo, hi = lo + shrink, hi - shrink
    else:
        lo, hi = -1e12, 1e12
    g_lo = _martingale_gap(params, dist, sigma, lo)
    g_hi = _martingale_gap(params, dist, sigma, hi)
    if not (g_lo < 0.0 < g_hi):
        raise NoRootError(
            f"martingale equation not bracketed on [{lo:.6g}, {hi:.6g}] "
            f"(g_lo={g_lo:.3e}, g_hi={g_hi:.3e})"
        )
    while hi - lo > xtol * max(1.0, abs(lo), abs(hi)):
        mid = 0.5 * (lo + hi)
        if _martingale_gap(params, dist, sigma, mid) < 0.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def esscher_rn_derivative(params: NgarchParams, dist, sigmas, innovations) -> float | np.ndarray:
    """Radon-Nikodym derivative of the conditional-tilt measure along one or
    more physical-measure paths.

    ``sigmas`` and ``innovations`` hold the per-step conditional volatility
    and standardized innovation, shaped (steps,) or (paths, steps).  The
    per-step log factor is theta_t*sigma_t*eps_t - kappa(theta_t*sigma_t).
    """
    sig = np.asarray(sigmas, dtype=float)
    eps = np.asarray(innovations, dtype=float)
    if sig.shape != eps.shape:
        raise ParamError(f"sigma/innovation shape mismatch: {sig.shape} vs {eps.shape}")
    theta = esscher_theta(params, dist, sig.ravel()).reshape(sig.shape)
    z = theta * sig
    log_f = z * eps - dist.cgf(z).value
    out = np.exp(np.sum(log_f, axis=-1))
    return float(out) if np.ndim(out) == 0 else out


# ---------------------------------------------------------------------------
# minimal martingale measure
# ---------------------------------------------------------------------------


@dataclass
class SdfFactors:
    """Density factors of the minimal martingale measure on a j-spaced grid.

    ``factors[i, b]`` multiplies path i over block b (covering steps
    ((b)*j, (b+1)*j]); ``z`` is the per-path product over all blocks.  A
    negative factor makes the measure signed on that path; the
    probability-weighted fraction of such paths is recorded.
    """

    factors: np.ndarray
    block_times: np.ndarray
    z: np.ndarray
    negative_fraction: float
    j: int
    conditioning: str
    per_block_negative: np.ndarray = field(default=None, repr=False)


def _weighted_mean(x, w):
    return float(np.dot(w, x))


def mmm_factors(ensemble, j: int = 1, conditioning: str = "auto") -> SdfFactors:
    """Estimate the minimal-martingale density factors from a physical
    ensemble.

    For each block end t (multiples of j) the factor is

        N_t = 1 - E[D] * (X_t - E[X_t]) / Var(D),

    with X the discounted price, D = X_t - X_{t-j} the block increment, and
    the moments taken conditionally on time-(t-j) information.

    Two estimators of those conditional moments are available:

    * ``"pooled"``: moments are pooled across all paths alive at t-j.  This
      is the production choice for Monte Carlo ensembles started from a
      single known state, where the cross-sectional pool *is* the natural
      sample of the block distribution.
    * ``"state"``: paths are grouped by their exact Markov state
      (price, next-step variance) at t-j and moments are computed within
      each group, probability-weighted.  Only sensible for enumerated
      ensembles (exact ``path_probs``) where states repeat exactly.

    ``"auto"`` picks "state" when the ensemble carries exact path
    probabilities and "pooled" otherwise.

    Raises FrequencyError unless j divides the horizon, and
    DegenerateBlockError when a conditioning group has (numerically) zero
    variance.
    """
    if conditioning not in ("auto", "pooled", "state"):
        raise ParamError(f"unknown conditioning {conditioning!r}")
    if ensemble.measure != "p":
        raise ParamError("minimal-martingale factors require a physical-measure ensemble")
    T = ensemble.horizon
    if j < 1 or T % j != 0:
        raise FrequencyError(f"block length j={j} does not divide horizon T={T}")
    if conditioning == "auto":
        conditioning = "state" if ensemble.path_probs is not None else "pooled"

    n = ensemble.n_paths
    r = ensemble.r
    if ensemble.path_probs is not None:
        w = ensemble.path_probs / ensemble.path_probs.sum()
    else:
        w = np.full(n, 1.0 / n)

    tgrid = np.arange(T + 1)
    disc = np.exp(-r * tgrid)
    X = ensemble.prices * disc  # discounted prices

    n_blocks = T // j
    factors = np.empty((n, n_blocks))
    block_times = np.arange(1, n_blocks + 1) * j

    for b, tb in enumerate(block_times):
        ta = tb - j
        D = X[:, tb] - X[:, ta]
        if conditioning == "pooled":
            groups = [np.arange(n)]
        else:
            state = np.column_stack((ensemble.prices[:, ta], ensemble.variances[:, ta]))
            _, inverse = np.unique(state, axis=0, return_inverse=True)
            order = np.argsort(inverse, kind="stable")
            bounds = np.searchsorted(inverse[order], np.arange(inverse.max() + 2))
            groups = [order[bounds[g]: bounds[g + 1]] for g in range(inverse.max() + 1)]
        for idx in groups:
            wg = w[idx]
            tot = wg.sum()
            if tot <= 0.0 or idx.size == 0:
                raise DegenerateBlockError(f"empty conditioning group at block end t={tb}")
            wn = wg / tot
            d = D[idx]
            e = _weighted_mean(d, wn)
            v = _weighted_mean((d - e) ** 2, wn)
            scale = _weighted_mean(np.abs(X[idx, ta]), wn)
            if not np.isfinite(v) or v <= 1e-24 * max(scale * scale, 1.0):
                raise DegenerateBlockError(
                    f"conditioning group at block end t={tb} has degenerate variance {v:.3e}"
                )
            xb = X[idx, tb]
            xb_mean = _weighted_mean(xb, wn)
            factors[idx, b] = 1.0 - e * (xb - xb_mean) / v

    z = factors.prod(axis=1)
    neg_any = (factors <= 0.0).any(axis=1)
    negative_fraction = float(np.dot(w, neg_any))
    per_block = np.array([float(np.dot(w, factors[:, b] <= 0.0)) for b in range(n_blocks)])
    if negative_fraction > 0.0:
        warnings.warn(
            f"minimal-martingale factors negative on a weighted fraction "
            f"{negative_fraction:.4%} of paths (signed measure)",
            SignedMeasureWarning,
            stacklevel=2,
        )
    return SdfFactors(
        factors=factors,
        block_times=block_times,
        z=z,
        negative_fraction=negative_fraction,
        j=j,
        conditioning=conditioning,
        per_block_negative=per_block,
    )
