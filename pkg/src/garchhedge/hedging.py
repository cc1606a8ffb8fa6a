"""Quadratic and sensitivity-based hedge ratios on simulated ensembles.

All hedges are computed for a position opened at the ensemble's time origin;
to hedge mid-life, simulate a fresh ensemble from the current state.  Two
families are provided:

* local risk minimization under a martingale measure ("q" variant) or under
  the physical measure with minimal-martingale density factors ("p"
  variant): the ratio is a covariance-to-variance quotient of discounted
  quantities over one rebalancing interval of j steps;

* sensitivity-based ratios: the spot delta, the variance vega (pathwise
  derivative of the option value in the next-period conditional variance),
  the one-step variance/price regression slope ("vega multiplier") that
  converts the vega into spot units, and their combination, the
  stochastic-volatility-adjusted delta.

Standard errors are delta-method estimates from per-path influence values;
for enumerated ensembles (exact path probabilities) they are reported as 0.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .engine import PathEnsemble, conditional_expectation, ensemble_under_kernel
from .errors import (
    DegenerateVarianceError,
    FrequencyError,
    ParamError,
)
from .measures import esscher_theta, mmm_factors
from .model import NgarchParams

__all__ = [
    "HedgeRequest",
    "HedgeResult",
    "call_payoff",
    "put_payoff",
    "compute_hedges",
    "lrm_q_hedge",
    "lrm_p_hedge",
    "delta_s",
    "vega_sigma2",
    "vega_multiplier_q",
    "vega_multiplier_q_mc",
    "vega_multiplier_p",
    "delta_sv",
    "total_derivative_vm",
]


def call_payoff(strike: float):
    """European call payoff max(S_T - K, 0) as a callable on terminal spots."""

    def pay(st):
        return np.maximum(st - strike, 0.0)

    pay.strike = strike
    pay.kind = "call"
    return pay


def put_payoff(strike: float):
    """European put payoff max(K - S_T, 0)."""

    def pay(st):
        return np.maximum(strike - st, 0.0)

    pay.strike = strike
    pay.kind = "put"
    return pay


@dataclass
class HedgeResult:
    """A hedge ratio with its sampling error, the option value on the same
    ensemble, and method-specific diagnostics."""

    ratio: float
    se: float
    price: float
    price_se: float
    method: str
    j: int = 1
    components: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# weighted-moment helpers
# ---------------------------------------------------------------------------


def _wstats(ensemble: PathEnsemble, vals: np.ndarray) -> tuple[float, float]:
    """Weighted mean and its standard error (0 for enumerated ensembles)."""
    w = ensemble.weights()
    m = float(np.dot(w, vals))
    if ensemble.path_probs is not None:
        return m, 0.0
    se = float(np.sqrt(np.dot(w * w, (vals - m) ** 2)))
    return m, se


def _require_martingale_kernel(ensemble: PathEnsemble, who: str) -> str:
    kernel = ensemble.kernel
    if ensemble.measure == "q_egp":
        return kernel or "egp"
    if ensemble.measure == "p" and kernel == "esscher":
        return "esscher"
    raise ParamError(
        f"{who} needs an ensemble under a martingale pricing kernel "
        f"(got measure={ensemble.measure!r}, kernel={kernel!r})"
    )


# ---------------------------------------------------------------------------
# local risk minimization under a martingale measure
# ---------------------------------------------------------------------------


def lrm_q_hedge(
    ensemble: PathEnsemble,
    payoff,
    j: int = 1,
    denominator: str = "auto",
    enforce_grid: bool = True,
) -> HedgeResult:
    """Locally risk-minimizing hedge ratio over one j-step interval under a
    martingale kernel:

        xi = exp(-r(T)) E[H(S_T) (exp(-r j) S_j - S_0)] / Var[exp(-r j) S_j - S_0],

    all moments under the kernel carried by the ensemble.  With j = 1 the
    denominator has a closed form -- s0^2 (exp(kappa(2 sig1) - 2 kappa(sig1))
    - 1) for the shift kernel and its tilted analogue for the Esscher kernel
    -- selected by ``denominator="closed"`` (the default when j == 1);
    ``"mc"`` uses the weighted sample variance instead.

    ``enforce_grid=True`` raises FrequencyError when j does not divide the
    horizon (rebalancing at the chosen frequency could not reach maturity);
    backtests hedging between irregularly spaced quote dates disable it.
    """
    T = ensemble.horizon
    if j < 1:
        raise ParamError(f"j must be >= 1, got {j}")
    if j > T:
        raise FrequencyError(f"hedge interval j={j} exceeds horizon T={T}")
    if enforce_grid and T % j != 0:
        raise FrequencyError(f"hedge interval j={j} does not divide horizon T={T}")
    kernel = _require_martingale_kernel(ensemble, "lrm_q_hedge")
    if denominator == "auto":
        denominator = "closed" if j == 1 else "mc"
    if denominator not in ("closed", "mc"):
        raise ParamError(f"unknown denominator choice {denominator!r}")

    params, dist = ensemble.params, ensemble.dist
    r, s0 = ensemble.r, ensemble.s0
    w = ensemble.weights()
    disc_T = np.exp(-r * T)
    H = payoff(ensemble.terminal)
    X = np.exp(-r * j) * ensemble.prices[:, j] - s0

    phi = disc_T * H * X
    num = float(np.dot(w, phi))

    if denominator == "closed":
        if j != 1:
            raise ParamError("closed-form denominator is only available for j=1")
        sig1 = np.sqrt(ensemble.var1)
        if kernel == "egp":
            expo = dist.cgf(2.0 * sig1).value - 2.0 * dist.cgf(sig1).value
        else:
            th = esscher_theta(params, dist, sig1)
            expo = (
                dist.cgf((th + 2.0) * sig1).value
                + dist.cgf(th * sig1).value
                - 2.0 * dist.cgf((th + 1.0) * sig1).value
            )
        den = s0 * s0 * np.expm1(expo)
    else:
        xbar = float(np.dot(w, X))
        den = float(np.dot(w, (X - xbar) ** 2))

    if not np.isfinite(den) or den <= 1e-30 * s0 * s0:
        raise DegenerateVarianceError(
            f"price-increment variance over j={j} steps is degenerate ({den:.3e})"
        )
    ratio = num / den

    # delta-method standard error of the ratio
    if ensemble.path_probs is not None:
        se = 0.0
    elif denominator == "closed":
        _, phi_se = _wstats(ensemble, phi)
        se = phi_se / den
    else:
        xbar = float(np.dot(w, X))
        infl = (phi - ratio * (X - xbar) ** 2) / den
        mu = float(np.dot(w, infl))
        se = float(np.sqrt(np.dot(w * w, (infl - mu) ** 2)))

    price, price_se = conditional_expectation(ensemble, H, disc_T)
    return HedgeResult(
        ratio=ratio,
        se=se,
        price=price,
        price_se=price_se,
        method="lrm_q",
        j=j,
        components={"numerator": num, "denominator": den, "denominator_mode": denominator},
        diagnostics={"kernel": kernel},
    )


def lrm_p_hedge(
    ensemble: PathEnsemble,
    payoff,
    j: int = 1,
    conditioning: str = "auto",
    enforce_grid: bool = True,
) -> HedgeResult:
    """Locally risk-minimizing hedge under the physical measure using
    minimal-martingale density factors:

        xi = Cov(exp(-rT) H(S_T) * prod_{b>=2} N_b,  X_j - X_0) / Var(X_j - X_0),

    with X the discounted spot and N_b the block density factors (the first
    block's factor is excluded from the numerator product).  The option
    value is E[exp(-rT) H * prod_{b>=1} N_b].

    The ensemble must be simulated under the physical measure with unit
    weights.  Negative factors are tolerated (the measure turns signed);
    their weighted share is reported in the diagnostics and triggers a
    SignedMeasureWarning inside the factor estimator.
    """
    T = ensemble.horizon
    if j < 1:
        raise ParamError(f"j must be >= 1, got {j}")
    if j > T:
        raise FrequencyError(f"hedge interval j={j} exceeds horizon T={T}")
    if enforce_grid and T % j != 0:
        raise FrequencyError(f"hedge interval j={j} does not divide horizon T={T}")
    if ensemble.measure != "p":
        raise ParamError("lrm_p_hedge needs a physical-measure ensemble")
    if not np.all(ensemble.rn_weights == 1.0):
        raise ParamError("lrm_p_hedge needs unit Radon-Nikodym weights")

    factors = mmm_factors(ensemble, j=j, conditioning=conditioning)
    r, s0 = ensemble.r, ensemble.s0
    w = ensemble.weights()
    disc_T = np.exp(-r * T)
    H = payoff(ensemble.terminal)
    X = np.exp(-r * j) * ensemble.prices[:, j] - s0

    z_tail = factors.factors[:, 1:].prod(axis=1) if factors.factors.shape[1] > 1 else np.ones(
        ensemble.n_paths
    )
    G = disc_T * H * z_tail

    gbar = float(np.dot(w, G))
    xbar = float(np.dot(w, X))
    num = float(np.dot(w, (G - gbar) * (X - xbar)))
    den = float(np.dot(w, (X - xbar) ** 2))
    if not np.isfinite(den) or den <= 1e-30 * s0 * s0:
        raise DegenerateVarianceError(
            f"price-increment variance over j={j} steps is degenerate ({den:.3e})"
        )
    ratio = num / den

    value_vals = disc_T * H * factors.z
    price, price_se = _wstats(ensemble, value_vals)

    if ensemble.path_probs is not None:
        se = 0.0
    else:
        infl = ((G - gbar) * (X - xbar) - ratio * (X - xbar) ** 2) / den
        mu = float(np.dot(w, infl))
        se = float(np.sqrt(np.dot(w * w, (infl - mu) ** 2)))

    return HedgeResult(
        ratio=ratio,
        se=se,
        price=price,
        price_se=price_se,
        method="lrm_p",
        j=j,
        components={"numerator": num, "denominator": den},
        diagnostics={
            "negative_fraction": factors.negative_fraction,
            "conditioning": factors.conditioning,
        },
    )


# ---------------------------------------------------------------------------
# sensitivity hedges
# ---------------------------------------------------------------------------


def _indicator_sign(ensemble: PathEnsemble, strike: float, call: bool):
    st = ensemble.terminal
    if call:
        return (st > strike).astype(float), 1.0
    return (st < strike).astype(float), -1.0


def _delta_vals(ensemble: PathEnsemble, strike: float, call: bool) -> np.ndarray:
    ind, sign = _indicator_sign(ensemble, strike, call)
    disc = np.exp(-ensemble.r * ensemble.horizon)
    return sign * disc * (ensemble.terminal / ensemble.s0) * ind


def _vega_vals(ensemble: PathEnsemble, strike: float, call: bool) -> np.ndarray:
    """Per-path pathwise derivative of the discounted payoff in the
    next-period conditional variance.

    Writing P_l for the variance-recursion slope at step l and B(l) for the
    running product P_1 ... P_{l-1} (= d sig2_l / d sig2_1), each step
    contributes B(l) * (eps_l - kappa'(sig_l)) / (2 sig_l) to
    d log S_T / d sig2_1 (with the innovation expressed under the ensemble's
    simulation measure).
    """
    params = ensemble.params
    dist = ensemble.dist
    T = ensemble.horizon
    eps = ensemble.innovations
    var = ensemble.variances[:, :T]
    sig = np.sqrt(var)
    kp = dist.cgf(sig).d1

    if ensemble.measure == "q_egp":
        dev = eps - params.lam - params.gamma
        score = eps - kp
    else:  # physical paths (tilt-weighted); same pathwise derivative
        dev = eps - params.gamma
        score = eps + params.lam - kp

    slope = params.alpha1 * dev * dev + params.beta1  # P_l, l = 1..T
    B = np.empty_like(slope)
    B[:, 0] = 1.0
    if T > 1:
        B[:, 1:] = np.cumprod(slope[:, :-1], axis=1)
    dlogS = np.sum(B * score / sig, axis=1)

    ind, sign = _indicator_sign(ensemble, strike, call)
    disc = np.exp(-ensemble.r * T)
    return sign * 0.5 * disc * ensemble.terminal * dlogS * ind


def _sensitivity_result(
    ensemble: PathEnsemble, strike: float, call: bool, vals: np.ndarray, method: str
) -> HedgeResult:
    ratio, se = _wstats(ensemble, vals)
    pay = call_payoff(strike) if call else put_payoff(strike)
    price, price_se = conditional_expectation(
        ensemble, pay, np.exp(-ensemble.r * ensemble.horizon)
    )
    return HedgeResult(
        ratio=ratio,
        se=se,
        price=price,
        price_se=price_se,
        method=method,
        j=1,
        diagnostics={"kernel": ensemble.kernel},
    )


def delta_s(ensemble: PathEnsemble, strike: float, call: bool = True) -> HedgeResult:
    """Spot delta of a European option by the homogeneity identity
    exp(-rT) E[(S_T / S_0) 1_{S_T > K}] (sign-flipped indicator for puts)."""
    _require_martingale_kernel(ensemble, "delta_s")
    vals = _delta_vals(ensemble, strike, call)
    return _sensitivity_result(ensemble, strike, call, vals, "delta_s")


def vega_sigma2(ensemble: PathEnsemble, strike: float, call: bool = True) -> HedgeResult:
    """Pathwise derivative of the option value in the next-period
    conditional variance sig2_1."""
    _require_martingale_kernel(ensemble, "vega_sigma2")
    vals = _vega_vals(ensemble, strike, call)
    return _sensitivity_result(ensemble, strike, call, vals, "vega_sigma2")


def _qvm_bracket(dist, u: float, c: float) -> tuple[float, float]:
    """Numerator bracket and expm1 denominator of the one-step
    variance-on-price regression slope at volatility u with news-impact
    shift c."""
    kv = dist.cgf(u)
    k2 = dist.cgf(2.0 * u)
    num = kv.d1 * kv.d1 - 2.0 * c * kv.d1 + kv.d2 - 1.0
    den = np.expm1(k2.value - 2.0 * kv.value)
    return num, den


def vega_multiplier_q(
    params: NgarchParams, dist, s_t: float, var_next: float, kernel: str = "egp"
) -> float:
    """One-step conditional regression slope Cov(sig2_{t+2}, S_{t+1}) /
    Var(S_{t+1}) under a martingale kernel, in closed form.

    For the shift kernel:

        VM = alpha1 * sig2 / (e^r S) * [kappa'(u)^2 - 2(lam+gamma) kappa'(u)
             + kappa''(u) - 1] / (exp(kappa(2u) - 2 kappa(u)) - 1),   u = sig.

    The Esscher variant evaluates the same moments under the tilted law.
    """
    if not (np.isfinite(var_next) and var_next > 0.0):
        raise ParamError(f"var_next must be finite and > 0, got {var_next}")
    u = np.sqrt(var_next)
    if kernel == "egp":
        num, den = _qvm_bracket(dist, u, params.lam + params.gamma)
    elif kernel == "esscher":
        th = esscher_theta(params, dist, u)
        k0 = dist.cgf(th * u)
        k1 = dist.cgf((th + 1.0) * u)
        k2 = dist.cgf((th + 2.0) * u)
        g = params.gamma
        num = (k1.d1 - g) ** 2 + k1.d2 - (k0.d1 - g) ** 2 - k0.d2
        den = np.expm1(k2.value + k0.value - 2.0 * k1.value)
    else:
        raise ParamError(f"unknown kernel {kernel!r} for the variance multiplier")
    if den <= 0.0:
        raise DegenerateVarianceError(f"one-step price variance is degenerate (den={den:.3e})")
    return params.alpha1 * var_next * num / (np.exp(params.r) * s_t * den)


def _one_step_slope(s1: np.ndarray, v2: np.ndarray) -> tuple[float, float]:
    sbar = s1.mean()
    vbar = v2.mean()
    ds = s1 - sbar
    var_s = np.mean(ds * ds)
    slope = np.mean(ds * (v2 - vbar)) / var_s
    infl = (ds * (v2 - vbar) - slope * ds * ds) / var_s
    se = infl.std() / np.sqrt(s1.size)
    return float(slope), float(se)


def vega_multiplier_q_mc(
    params: NgarchParams,
    dist,
    s_t: float,
    var_next: float,
    n_paths: int = 1_000_000,
    seed=0,
) -> tuple[float, float]:
    """Monte Carlo estimate of the shift-kernel variance multiplier
    (one-step regression of sig2_{t+2} on S_{t+1}); cross-check for the
    closed form.  Returns (value, std_error)."""
    rng = np.random.default_rng(seed)
    u = np.sqrt(var_next)
    eps = dist.sample(rng, n_paths)
    kap = dist.cgf(u).value
    s1 = s_t * np.exp(params.r - kap + u * eps)
    dev = eps - params.lam - params.gamma
    v2 = params.alpha0 + (params.alpha1 * dev * dev + params.beta1) * var_next
    return _one_step_slope(s1, v2)


def vega_multiplier_p(
    params: NgarchParams,
    dist,
    s_t: float,
    var_next: float,
    n_paths: int = 1_000_000,
    seed=0,
) -> tuple[float, float]:
    """One-step regression slope of sig2_{t+2} on S_{t+1} under the
    *physical* measure, by Monte Carlo.  Returns (value, std_error)."""
    rng = np.random.default_rng(seed)
    u = np.sqrt(var_next)
    eps = dist.sample(rng, n_paths)
    kap = dist.cgf(u).value
    s1 = s_t * np.exp(params.r + params.lam * u - kap + u * eps)
    dev = eps - params.gamma
    v2 = params.alpha0 + (params.alpha1 * dev * dev + params.beta1) * var_next
    return _one_step_slope(s1, v2)


def delta_sv(
    ensemble: PathEnsemble,
    strike: float,
    call: bool = True,
    vm: float | None = None,
) -> HedgeResult:
    """Stochastic-volatility-adjusted delta: spot delta plus the variance
    vega converted to spot units through the one-step variance multiplier,

        xi = Delta_S + VM * Delta_sig2,

    all three pieces evaluated on the same ensemble (and, for VM, the same
    kernel).  Pass ``vm`` to override the closed-form multiplier.
    """
    kernel = _require_martingale_kernel(ensemble, "delta_sv")
    if vm is None:
        vm = vega_multiplier_q(
            ensemble.params, ensemble.dist, ensemble.s0, ensemble.var1, kernel=kernel
        )
    dvals = _delta_vals(ensemble, strike, call)
    vvals = _vega_vals(ensemble, strike, call)
    combo = dvals + vm * vvals
    ratio, se = _wstats(ensemble, combo)
    d, d_se = _wstats(ensemble, dvals)
    v, v_se = _wstats(ensemble, vvals)

    pay = call_payoff(strike) if call else put_payoff(strike)
    price, price_se = conditional_expectation(
        ensemble, pay, np.exp(-ensemble.r * ensemble.horizon)
    )
    return HedgeResult(
        ratio=ratio,
        se=se,
        price=price,
        price_se=price_se,
        method="delta_sv",
        j=1,
        components={"delta_s": d, "delta_s_se": d_se, "vega_sigma2": v, "vega_sigma2_se": v_se, "vm": vm},
        diagnostics={"kernel": kernel},
    )


def total_derivative_vm(params: NgarchParams, s_t, sigma_t, eps_t):
    """Deterministic one-step total derivative d sig2_{t+1} / d S_t along
    the realized path: 2 alpha1 sigma_t (eps_t - gamma) / S_t.  Negative
    when the innovation falls below the asymmetry centre -- the leverage
    effect."""
    return 2.0 * params.alpha1 * sigma_t * (eps_t - params.gamma) / s_t


# ---------------------------------------------------------------------------
# one-call orchestration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class HedgeRequest:
    """A single hedging problem: the contract, the market state at the hedge
    date, the pricing kernel, the rebalancing interval and the simulation
    budget.  ``horizon`` counts steps to maturity from the hedge date."""

    strike: float
    horizon: int
    s0: float
    var1: float
    call: bool = True
    j: int = 1
    kernel: object = "egp"
    n_paths: int = 100_000
    seed: object = None
    ems: bool = True

    def __post_init__(self):
        if not (np.isfinite(self.strike) and self.strike > 0.0):
            raise ParamError(f"strike must be finite and > 0, got {self.strike}")
        if self.horizon < 1:
            raise ParamError(f"horizon must be >= 1, got {self.horizon}")
        if self.j < 1 or self.j > self.horizon:
            raise FrequencyError(
                f"hedge interval j={self.j} outside [1, horizon={self.horizon}]"
            )
        if self.horizon % self.j != 0:
            raise FrequencyError(
                f"hedge interval j={self.j} does not divide horizon {self.horizon}"
            )


def compute_hedges(params: NgarchParams, dist, req: HedgeRequest) -> dict:
    """Evaluate every hedge construction for one request on one shared
    ensemble.

    Returns a dict with the option value ("price", "price_se") and
    HedgeResult entries "lrm", "delta_s", "vega_sigma2", "delta_sv" plus the
    scalar "vm".  Under the minimal-martingale kernel only the physical-LRM
    ratio is defined and the sensitivity entries are omitted.
    """
    ens = ensemble_under_kernel(
        params,
        dist,
        req.kernel,
        s0=req.s0,
        n_paths=req.n_paths,
        horizon=req.horizon,
        seed=req.seed,
        var1=req.var1,
        ems=req.ems,
    )
    pay = call_payoff(req.strike) if req.call else put_payoff(req.strike)
    out: dict = {}
    if ens.kernel == "mmm":
        lrm = lrm_p_hedge(ens, pay, j=req.j)
    else:
        lrm = lrm_q_hedge(ens, pay, j=req.j)
        d = delta_s(ens, req.strike, req.call)
        dsv = delta_sv(ens, req.strike, req.call)
        out["delta_s"] = d
        out["vega_sigma2"] = HedgeResult(
            ratio=dsv.components["vega_sigma2"],
            se=dsv.components["vega_sigma2_se"],
            price=dsv.price,
            price_se=dsv.price_se,
            method="vega_sigma2",
            diagnostics={"kernel": ens.kernel},
        )
        out["vm"] = dsv.components["vm"]
        out["delta_sv"] = dsv
    out["lrm"] = lrm
    out["price"] = lrm.price
    out["price_se"] = lrm.price_se
    return out
