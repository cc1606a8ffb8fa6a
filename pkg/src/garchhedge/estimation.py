"""Maximum-likelihood estimation of the NGARCH model.

The likelihood is the standard prediction-error decomposition: filter the
conditional variance along the return path, back out the standardized
innovations, and sum their log-density minus half the log-variance.  The
sequential filter is the hot loop (one pass per objective evaluation), so it
is compiled with numba; the innovation log-density is vectorized numpy.

Optimization runs in an unconstrained reparametrization -- log variance
level, logistic persistence and news-impact share, free asymmetry/premium,
log tail weight and bounded-asymmetry for the NIG shape -- from several
deterministic starts, so every iterate is automatically admissible and
covariance-stationary.  Standard errors are outer-product-of-gradients
estimates from per-observation score contributions.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from numba import njit
from scipy.optimize import minimize
from scipy.special import expit, logit

from .distributions import Gaussian, Nig
from .errors import NonConvergenceError, NonFiniteError, ParamError
from .model import NgarchParams, unconditional_variance

__all__ = [
    "FitResult",
    "log_likelihood",
    "log_likelihood_terms",
    "fit",
    "save_model",
    "load_model",
    "simulate_returns",
]


# ---------------------------------------------------------------------------
# fast filter
# ---------------------------------------------------------------------------


@njit(cache=True)
def _filter_njit(y, a0, a1, b1, g, lam, r, var0, cap, is_nig, k, a, s, loc, sg):
    """Sequential variance filter; returns (variances, innovations, ok)."""
    n = y.shape[0]
    variances = np.empty(n)
    innovations = np.empty(n)
    v = var0
    for t in range(n):
        sig = np.sqrt(v)
        if is_nig:
            u = a + sig
            bound = k * (1.0 - 1e-10)
            if u >= bound or u <= -bound:
                return variances, innovations, False
            kap = loc * sig + s * (sg - np.sqrt(k * k - u * u))
        else:
            kap = 0.5 * v
        eps = (y[t] - r - lam * sig + kap) / sig
        variances[t] = v
        innovations[t] = eps
        d = eps - g
        v = a0 + (a1 * d * d + b1) * v
        if not np.isfinite(v) or v > cap:
            return variances, innovations, False
    return variances, innovations, True


def _run_filter(params: NgarchParams, dist, y: np.ndarray, var_init: float):
    if params.persistence < 1.0:
        cap = 1e6 * max(unconditional_variance(params), var_init)
    else:
        cap = 1e6 * var_init
    if dist.kind == "nig":
        args = (True, dist.k, dist.a, dist.s, dist.loc, dist._g)
    else:
        args = (False, 0.0, 0.0, 0.0, 0.0, 0.0)
    return _filter_njit(
        y,
        params.alpha0,
        params.alpha1,
        params.beta1,
        params.gamma,
        params.lam,
        params.r,
        var_init,
        cap,
        *args,
    )


def log_likelihood_terms(
    params: NgarchParams, dist, returns, var_init: float | None = None
) -> np.ndarray:
    """Per-observation log-likelihood contributions
    log f(eps_t) - 0.5 log sig2_t.  Raises NonFiniteError if the filter
    blows up."""
    y = np.ascontiguousarray(returns, dtype=float)
    if not np.all(np.isfinite(y)):
        raise NonFiniteError("returns contain non-finite values")
    if var_init is None:
        var_init = unconditional_variance(params)
    variances, innovations, ok = _run_filter(params, dist, y, float(var_init))
    if not ok:
        raise NonFiniteError("variance filter left its admissible range")
    return dist.logpdf(innovations) - 0.5 * np.log(variances)


def log_likelihood(params: NgarchParams, dist, returns, var_init: float | None = None) -> float:
    """Total log-likelihood of a return path under the model."""
    return float(np.sum(log_likelihood_terms(params, dist, returns, var_init)))


# ---------------------------------------------------------------------------
# reparametrization
# ---------------------------------------------------------------------------
#
# x = [log alpha0, logit persistence, logit share, gamma, lam (, log k, atanh-like a)]
# with alpha1 = persistence*share/(1+gamma^2), beta1 = persistence*(1-share).


def _unpack(x: np.ndarray, r: float, kind: str):
    a0 = np.exp(x[0])
    p = expit(x[1])
    q = expit(x[2])
    g = x[3]
    lam = x[4]
    a1 = p * q / (1.0 + g * g)
    b1 = p * (1.0 - q)
    params = NgarchParams(alpha0=a0, alpha1=a1, beta1=b1, gamma=g, lam=lam, r=r)
    if kind == "nig":
        k = np.exp(x[5])
        a = k * np.tanh(x[6])
        return params, Nig(k=k, a=a)
    return params, Gaussian()


def _pack(params: NgarchParams, dist) -> np.ndarray:
    p = params.persistence
    if not 0.0 < p < 1.0:
        raise ParamError(f"start persistence must lie in (0,1), got {p}")
    share = params.alpha1 * (1.0 + params.gamma**2) / p
    x = [
        np.log(params.alpha0),
        logit(p),
        logit(min(max(share, 1e-9), 1.0 - 1e-9)),
        params.gamma,
        params.lam,
    ]
    if dist.kind == "nig":
        x += [np.log(dist.k), np.arctanh(np.clip(dist.a / dist.k, -1 + 1e-12, 1 - 1e-12))]
    return np.array(x)


def _default_starts(y: np.ndarray, r: float, kind: str) -> list[np.ndarray]:
    vhat = float(np.var(y))
    lam0 = float((np.mean(y) - r) / np.sqrt(vhat))
    base = [
        # (persistence, share, gamma, lam)
        (0.98, 0.20, 0.8, lam0),
        (0.95, 0.10, 0.0, 0.0),
        (0.99, 0.30, 1.2, max(lam0, 0.02)),
        (0.90, 0.40, -0.5, lam0),
        (0.995, 0.15, 0.5, 0.05),
    ]
    shapes = [(1.5, -0.2), (2.0, 0.0), (1.1, -0.4), (3.0, 0.2), (1.3, -0.1)]
    starts = []
    for i, (p, q, g, lam) in enumerate(base):
        a0 = vhat * (1.0 - p)
        x = [np.log(a0), logit(p), logit(q), g, lam]
        if kind == "nig":
            k, a = shapes[i]
            x += [np.log(k), np.arctanh(a / k)]
        starts.append(np.array(x))
    return starts


# ---------------------------------------------------------------------------
# fitting
# ---------------------------------------------------------------------------


@dataclass
class FitResult:
    """Outcome of :func:`fit`."""

    params: NgarchParams
    dist: object
    loglik: float
    n_obs: int
    converged: bool
    n_iter: int
    grad_norm: float
    start_index: int
    std_errors: dict | None = None

    @property
    def dist_kind(self) -> str:
        return self.dist.kind

    def param_dict(self) -> dict:
        d = {
            "alpha0": self.params.alpha0,
            "alpha1": self.params.alpha1,
            "beta1": self.params.beta1,
            "gamma": self.params.gamma,
            "lam": self.params.lam,
        }
        if self.dist.kind == "nig":
            d["k"] = self.dist.k
            d["a"] = self.dist.a
        return d


_BIG = 1e10


def fit(
    returns,
    dist: str = "nig",
    r: float = 0.0,
    n_starts: int = 5,
    starts: list | None = None,
    maxiter: int = 400,
    compute_se: bool = True,
) -> FitResult:
    """Fit the NGARCH model to a return path by maximum likelihood.

    ``dist`` is "gaussian" or "nig".  The variance filter starts from the
    stationary variance of each parameter iterate.  Requires at least 500
    observations; degenerate (constant) series raise NonConvergenceError
    rather than returning a meaningless optimum.
    """
    y = np.ascontiguousarray(returns, dtype=float)
    if y.ndim != 1 or y.size < 500:
        raise ParamError(f"need a 1-d series of at least 500 returns, got shape {y.shape}")
    if not np.all(np.isfinite(y)):
        raise NonFiniteError("returns contain non-finite values")
    if float(np.std(y)) == 0.0:
        raise NonConvergenceError("returns are constant: the variance process is unidentified")
    if dist not in ("gaussian", "nig"):
        raise ParamError(f"dist must be 'gaussian' or 'nig', got {dist!r}")

    n = y.size

    def negloglik(x):
        try:
            params, d = _unpack(x, r, dist)
            terms = log_likelihood_terms(params, d, y)
        except (NonFiniteError, ParamError, FloatingPointError, OverflowError):
            return _BIG
        total = float(np.sum(terms))
        if not np.isfinite(total):
            return _BIG
        return -total / n

    if starts is None:
        starts = _default_starts(y, r, dist)[: max(1, n_starts)]

    best = None
    failures = []
    for i, x0 in enumerate(starts):
        try:
            res = minimize(
                negloglik,
                x0,
                method="L-BFGS-B",
                options={"maxiter": maxiter, "ftol": 1e-12, "gtol": 1e-8},
            )
        except Exception as exc:  # pragma: no cover - scipy internals
            failures.append(f"start {i}: {exc}")
            continue
        if res.fun >= _BIG / 2:
            failures.append(f"start {i}: objective never left the penalty region")
            continue
        if best is None or res.fun < best[1].fun:
            best = (i, res)
    if best is None:
        raise NonConvergenceError(
            "likelihood optimization failed from every start: " + "; ".join(failures)
        )

    start_index, res = best
    params, d = _unpack(res.x, r, dist)
    loglik = -res.fun * n
    grad_norm = float(np.max(np.abs(res.jac))) if res.jac is not None else np.nan
    converged = bool(res.success)
    if not converged and grad_norm < 1e-3:
        converged = True  # L-BFGS-B sometimes reports failure on flat tails

    se = _opg_std_errors(params, d, y) if compute_se else None
    return FitResult(
        params=params,
        dist=d,
        loglik=loglik,
        n_obs=n,
        converged=converged,
        n_iter=int(res.nit),
        grad_norm=grad_norm,
        start_index=start_index,
        std_errors=se,
    )


def _natural_vector(params: NgarchParams, dist):
    names = ["alpha0", "alpha1", "beta1", "gamma", "lam"]
    vals = [params.alpha0, params.alpha1, params.beta1, params.gamma, params.lam]
    if dist.kind == "nig":
        names += ["k", "a"]
        vals += [dist.k, dist.a]
    return names, np.array(vals)


def _terms_at(vals, r, kind, y):
    params = NgarchParams(
        alpha0=vals[0], alpha1=vals[1], beta1=vals[2], gamma=vals[3], lam=vals[4], r=r
    )
    d = Nig(k=vals[5], a=vals[6]) if kind == "nig" else Gaussian()
    return log_likelihood_terms(params, d, y)


def _opg_std_errors(params: NgarchParams, dist, y: np.ndarray) -> dict:
    """Outer-product-of-gradients standard errors of the natural
    parameters, from central finite differences of the per-observation
    likelihood contributions."""
    names, theta = _natural_vector(params, dist)
    n, p = y.size, theta.size
    G = np.empty((n, p))
    for i in range(p):
        step = 1e-4 * max(abs(theta[i]), 1e-6)
        up, dn = theta.copy(), theta.copy()
        up[i] += step
        dn[i] -= step
        try:
            t_up = _terms_at(up, params.r, dist.kind, y)
            t_dn = _terms_at(dn, params.r, dist.kind, y)
        except (NonFiniteError, ParamError):
            return {name: np.nan for name in names}
        G[:, i] = (t_up - t_dn) / (2.0 * step)
    cov = np.linalg.pinv(G.T @ G)
    se = np.sqrt(np.maximum(np.diag(cov), 0.0))
    return dict(zip(names, se))


# ---------------------------------------------------------------------------
# model files and synthetic paths
# ---------------------------------------------------------------------------


def save_model(result_or_dict, path) -> None:
    """Write a fitted model to a small JSON file.

    Schema: {"model": "ngarch11", "dist": "gaussian"|"nig", "r": float,
    "params": {alpha0, alpha1, beta1, gamma, lam}, ["nig": {k, a},]
    "loglik": float, "n_obs": int, ["std_errors": {...}]}.
    """
    if isinstance(result_or_dict, FitResult):
        res = result_or_dict
        payload = {
            "model": "ngarch11",
            "dist": res.dist.kind,
            "r": res.params.r,
            "params": {
                "alpha0": res.params.alpha0,
                "alpha1": res.params.alpha1,
                "beta1": res.params.beta1,
                "gamma": res.params.gamma,
                "lam": res.params.lam,
            },
            "loglik": res.loglik,
            "n_obs": res.n_obs,
        }
        if res.dist.kind == "nig":
            payload["nig"] = {"k": res.dist.k, "a": res.dist.a}
        if res.std_errors is not None:
            payload["std_errors"] = res.std_errors
    else:
        payload = result_or_dict
    with open(path, "w") as f:
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write("\n")


def load_model(path):
    """Read a model JSON file; returns (params, dist, meta)."""
    with open(path) as f:
        meta = json.load(f)
    if meta.get("model") != "ngarch11":
        raise ParamError(f"{path}: not an ngarch11 model file")
    p = meta["params"]
    params = NgarchParams(
        alpha0=p["alpha0"],
        alpha1=p["alpha1"],
        beta1=p["beta1"],
        gamma=p["gamma"],
        lam=p["lam"],
        r=meta.get("r", 0.0),
    )
    if meta["dist"] == "nig":
        dist = Nig(k=meta["nig"]["k"], a=meta["nig"]["a"])
    elif meta["dist"] == "gaussian":
        dist = Gaussian()
    else:
        raise ParamError(f"unknown dist {meta['dist']!r} in {path}")
    return params, dist, meta


def simulate_returns(
    params: NgarchParams, dist, n_steps: int, seed, var_init: float | None = None
) -> np.ndarray:
    """One physical-measure return path of length ``n_steps`` (for
    estimation experiments and synthetic data)."""
    if var_init is None:
        var_init = unconditional_variance(params)
    rng = np.random.default_rng(seed)
    y = np.empty(n_steps)
    v = float(var_init)
    eps = dist.sample(rng, n_steps)
    for t in range(n_steps):
        sig = np.sqrt(v)
        kap = dist.cgf(sig).value
        y[t] = params.r + params.lam * sig - kap + sig * eps[t]
        d = eps[t] - params.gamma
        v = params.alpha0 + (params.alpha1 * d * d + params.beta1) * v
    return y
