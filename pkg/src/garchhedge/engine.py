"""Path simulation engine.

Simulates NGARCH price paths under either the physical measure ("p") or the
shift-type risk-neutral measure ("q_egp"); the tilt and minimal-martingale
kernels reuse physical paths with per-path weights (see
:func:`ensemble_under_kernel`).

Conventions for a horizon of T steps (time is measured in trading days):

* ``prices[i, t]``      -- spot on path i at time t, t = 0..T;
* ``variances[i, t]``   -- conditional variance of the step t -> t+1
  (so column 0 is the known next-step variance at time 0, and column T is
  the one-step-ahead variance left over after the horizon);
* ``innovations[i, t]`` -- standardized innovation realized in step t -> t+1.

Paths whose variance recursion blows up (overflow, or a volatility outside
the innovation CGF domain) are discarded and redrawn; the count is recorded
and capped at 0.1% of the ensemble.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import InvalidMeasureError, NonFiniteError, ParamError
from .model import NgarchParams, unconditional_variance, variance_update

__all__ = [
    "SimSpec",
    "PathEnsemble",
    "simulate",
    "apply_ems",
    "conditional_expectation",
    "ensemble_under_kernel",
    "save_ensemble",
    "load_ensemble",
]

_MEASURES = ("p", "q_egp")
_RESAMPLE_CAP = 1e-3  # max fraction of paths that may be redrawn
_VAR_BLOWUP_FACTOR = 1e6


@dataclass(frozen=True)
class SimSpec:
    """Everything needed to reproduce one ensemble.

    The initial variance may be given either as the seed state
    ``(sigma2_0, eps0)`` -- in which case the first-step variance is obtained
    through one application of the physical recursion -- or directly as
    ``var1``, the conditional variance of the first simulated step.  Exactly
    one of the two forms must be supplied.
    """

    params: NgarchParams
    dist: object
    s0: float
    n_paths: int
    horizon: int
    seed: object
    measure: str = "q_egp"
    var1: float | None = None
    sigma2_0: float | None = None
    eps0: float | None = None

    def __post_init__(self):
        if self.measure not in _MEASURES:
            raise ParamError(f"measure must be one of {_MEASURES}, got {self.measure!r}")
        if self.n_paths < 2:
            raise ParamError(f"need at least 2 paths, got {self.n_paths}")
        if self.horizon < 1:
            raise ParamError(f"horizon must be >= 1, got {self.horizon}")
        if not (np.isfinite(self.s0) and self.s0 > 0.0):
            raise ParamError(f"s0 must be finite and > 0, got {self.s0}")
        has_state = self.sigma2_0 is not None or self.eps0 is not None
        if self.var1 is None and not has_state:
            raise ParamError("supply either var1 or the seed state (sigma2_0, eps0)")
        if self.var1 is not None and has_state:
            raise ParamError("supply var1 or (sigma2_0, eps0), not both")
        if self.var1 is None:
            if self.sigma2_0 is None or self.eps0 is None:
                raise ParamError("seed state requires both sigma2_0 and eps0")
            if not (np.isfinite(self.sigma2_0) and self.sigma2_0 > 0.0):
                raise ParamError(f"sigma2_0 must be finite and > 0, got {self.sigma2_0}")
            v1 = float(variance_update(self.params, self.sigma2_0, self.eps0))
            object.__setattr__(self, "var1", v1)
        if not (np.isfinite(self.var1) and self.var1 > 0.0):
            raise ParamError(f"first-step variance must be finite and > 0, got {self.var1}")


@dataclass
class PathEnsemble:
    """A simulated (or enumerated) set of price paths plus the bookkeeping
    needed to price and hedge on it.

    ``rn_weights`` are per-path Radon-Nikodym weights relative to the
    simulation measure (all ones unless a reweighting kernel was attached);
    ``path_probs`` are exact path probabilities for enumerated ensembles
    (None for Monte Carlo); ``kernel`` tags which pricing kernel the weights
    implement.
    """

    params: NgarchParams
    dist: object
    measure: str
    s0: float
    var1: float
    prices: np.ndarray
    variances: np.ndarray
    innovations: np.ndarray
    rn_weights: np.ndarray
    path_probs: np.ndarray | None = None
    kernel: str | None = None
    ems_applied: bool = False
    resampled: int = 0
    seed: object = None

    @property
    def n_paths(self) -> int:
        return self.prices.shape[0]

    @property
    def horizon(self) -> int:
        return self.prices.shape[1] - 1

    @property
    def r(self) -> float:
        return self.params.r

    @property
    def terminal(self) -> np.ndarray:
        return self.prices[:, -1]

    def weights(self) -> np.ndarray:
        """Normalized per-path weights combining Radon-Nikodym weights and
        (if present) exact path probabilities."""
        w = self.rn_weights if self.path_probs is None else self.rn_weights * self.path_probs
        return w / w.sum()

    @classmethod
    def from_arrays(
        cls,
        params,
        dist,
        measure,
        prices,
        variances,
        innovations,
        path_probs=None,
        kernel=None,
    ) -> "PathEnsemble":
        prices = np.asarray(prices, dtype=float)
        variances = np.asarray(variances, dtype=float)
        innovations = np.asarray(innovations, dtype=float)
        n, tp1 = prices.shape
        if variances.shape != (n, tp1) or innovations.shape != (n, tp1 - 1):
            raise ParamError(
                f"inconsistent array shapes: prices {prices.shape}, "
                f"variances {variances.shape}, innovations {innovations.shape}"
            )
        if path_probs is not None:
            path_probs = np.asarray(path_probs, dtype=float)
            if path_probs.shape != (n,):
                raise ParamError("path_probs must have one entry per path")
        return cls(
            params=params,
            dist=dist,
            measure=measure,
            s0=float(prices[0, 0]),
            var1=float(variances[0, 0]),
            prices=prices,
            variances=variances,
            innovations=innovations,
            rn_weights=np.ones(n),
            path_probs=path_probs,
            kernel=kernel,
        )


def _sigma_cap(dist) -> float:
    """Largest conditional volatility at which the innovation CGF is still
    evaluable (infinite for light-tailed laws)."""
    domain = getattr(dist, "cgf_domain", None)
    if domain is None:
        return np.inf
    lo, hi = domain()
    return hi * (1.0 - 1e-9)


def _simulate_rows(params, dist, measure, s0, var1, n, T, rng, var_cap, sig_cap):
    """Simulate n fresh paths; returns arrays plus a boolean mask of paths
    that hit a numerical guard and must be redrawn."""
    prices = np.empty((n, T + 1))
    variances = np.empty((n, T + 1))
    innovations = np.empty((n, T))
    prices[:, 0] = s0
    v = np.full(n, var1)
    bad = np.zeros(n, dtype=bool)
    a0, a1, b1 = params.alpha0, params.alpha1, params.beta1
    lam, gam, r = params.lam, params.gamma, params.r
    with np.errstate(over="ignore", invalid="ignore"):
        for t in range(T):
            hit = ~np.isfinite(v) | (v > var_cap) | (np.sqrt(v) >= sig_cap)
            if hit.any():
                bad |= hit
                v = np.where(hit, var1, v)  # placeholder; these rows get redrawn
            variances[:, t] = v
            sig = np.sqrt(v)
            eps = dist.sample(rng, n)
            kap = dist.cgf(sig).value
            if measure == "q_egp":
                y = r - kap + sig * eps
                dev = eps - lam - gam
            else:
                y = r + lam * sig - kap + sig * eps
                dev = eps - gam
            prices[:, t + 1] = prices[:, t] * np.exp(y)
            innovations[:, t] = eps
            v = a0 + (a1 * dev * dev + b1) * v
        hit = ~np.isfinite(v) | (v > var_cap) | (np.sqrt(v) >= sig_cap)
        bad |= hit
        variances[:, T] = np.where(hit, var1, v)
        bad |= ~np.isfinite(prices).all(axis=1)
    return prices, variances, innovations, bad


def simulate(spec: SimSpec) -> PathEnsemble:
    """Generate a fresh ensemble according to ``spec``.

    Reproducible: the same spec (including seed) always yields the same
    ensemble, regardless of how many worker threads the caller uses
    elsewhere.  Raises NonFiniteError if more than 0.1% of paths blow up.
    """
    params, dist = spec.params, spec.dist
    n, T = spec.n_paths, spec.horizon
    rng = np.random.default_rng(spec.seed)
    try:
        base = unconditional_variance(params)
    except Exception:
        base = spec.var1
    var_cap = _VAR_BLOWUP_FACTOR * max(base, spec.var1)
    sig_cap = _sigma_cap(dist)
    if np.sqrt(spec.var1) >= sig_cap:
        raise ParamError("initial volatility already outside the innovation CGF domain")

    prices, variances, innovations, bad = _simulate_rows(
        params, dist, spec.measure, spec.s0, spec.var1, n, T, rng, var_cap, sig_cap
    )
    resampled = 0
    max_bad = max(1, int(np.ceil(_RESAMPLE_CAP * n)))
    rounds = 0
    while bad.any():
        idx = np.flatnonzero(bad)
        resampled += idx.size
        rounds += 1
        if resampled > max_bad or rounds > 16:
            raise NonFiniteError(
                f"{resampled} of {n} paths hit numerical guards (cap {max_bad}); "
                "parameters are likely explosive at this horizon"
            )
        p2, v2, i2, bad2 = _simulate_rows(
            params, dist, spec.measure, spec.s0, spec.var1, idx.size, T, rng, var_cap, sig_cap
        )
        prices[idx] = p2
        variances[idx] = v2
        innovations[idx] = i2
        bad = np.zeros(n, dtype=bool)
        bad[idx[bad2]] = True

    return PathEnsemble(
        params=params,
        dist=dist,
        measure=spec.measure,
        s0=spec.s0,
        var1=spec.var1,
        prices=prices,
        variances=variances,
        innovations=innovations,
        rn_weights=np.ones(n),
        resampled=resampled,
        seed=spec.seed,
    )


def apply_ems(ensemble: PathEnsemble) -> PathEnsemble:
    """Empirical martingale correction: rescale each time slice by a scalar
    so the discounted cross-sectional mean equals s0 to within a couple of
    ulps, slice by slice.

    Only valid on plain risk-neutral ensembles (martingale measure, unit
    weights, no exact path probabilities); anything else raises
    InvalidMeasureError.  Returns a new ensemble; the input is not modified.
    """
    if ensemble.measure != "q_egp":
        raise InvalidMeasureError(
            f"martingale correction requires a risk-neutral ensemble, got measure {ensemble.measure!r}"
        )
    if ensemble.path_probs is not None or not np.all(ensemble.rn_weights == 1.0):
        raise InvalidMeasureError(
            "martingale correction requires unit weights and uniform path probabilities"
        )
    prices = ensemble.prices.copy()
    s0 = ensemble.s0
    r = ensemble.r
    T = ensemble.horizon
    for t in range(1, T + 1):
        d = np.exp(-r * t)
        col = prices[:, t]
        col *= s0 / (d * col.mean())
        # one or two fixed-point polish rounds against the exact check value
        for _ in range(3):
            err = d * col.mean() - s0
            if abs(err) <= np.spacing(s0):
                break
            col *= s0 / (d * col.mean())
    return replace(ensemble, prices=prices, ems_applied=True)


def conditional_expectation(ensemble: PathEnsemble, payoff, discount: float = 1.0):
    """Weighted ensemble average of ``payoff`` times ``discount``.

    ``payoff`` is either a callable applied to the terminal prices or an
    array of per-path values.  Returns ``(estimate, std_error)``; the
    standard error is zero for enumerated ensembles (exact probabilities).
    """
    x = payoff(ensemble.terminal) if callable(payoff) else np.asarray(payoff, dtype=float)
    if x.shape != (ensemble.n_paths,):
        raise ParamError(f"payoff must give one value per path, got shape {x.shape}")
    w = ensemble.weights()
    mean = float(np.dot(w, x))
    if ensemble.path_probs is not None:
        return discount * mean, 0.0
    se = float(np.sqrt(np.dot(w * w, (x - mean) ** 2)))
    return discount * mean, discount * se


def ensemble_under_kernel(
    params: NgarchParams,
    dist,
    kernel,
    s0: float,
    n_paths: int,
    horizon: int,
    seed,
    var1: float | None = None,
    sigma2_0: float | None = None,
    eps0: float | None = None,
    ems: bool = True,
) -> PathEnsemble:
    """Simulate the ensemble appropriate for a pricing kernel.

    * shift kernel ("egp"): simulate risk-neutral directly, then apply the
      empirical martingale correction (unless ``ems=False``);
    * tilt kernel ("esscher"): for Gaussian innovations this coincides with
      the shift kernel; otherwise simulate physically and attach per-path
      tilt weights (no martingale correction -- it does not apply to
      weighted ensembles);
    * minimal-martingale kernel ("mmm"): simulate physically with unit
      weights; density factors are estimated at hedge time.
    """
    from .measures import PricingKernel, esscher_rn_derivative

    if isinstance(kernel, PricingKernel):
        kind = kernel.kind
    else:
        kind = str(kernel)
    if kind not in ("egp", "esscher", "mmm"):
        raise ParamError(f"unknown kernel {kernel!r}")

    if kind == "esscher" and dist.kind == "gaussian":
        kind = "egp"  # the tilt and shift measures coincide for Gaussian innovations

    measure = "q_egp" if kind == "egp" else "p"
    spec = SimSpec(
        params=params,
        dist=dist,
        s0=s0,
        n_paths=n_paths,
        horizon=horizon,
        seed=seed,
        measure=measure,
        var1=var1,
        sigma2_0=sigma2_0,
        eps0=eps0,
    )
    ens = simulate(spec)
    if kind == "egp":
        if ems:
            ens = apply_ems(ens)
        ens.kernel = "egp"
    elif kind == "esscher":
        sig = np.sqrt(ens.variances[:, :horizon])
        ens.rn_weights = esscher_rn_derivative(params, dist, sig, ens.innovations)
        ens.kernel = "esscher"
    else:
        ens.kernel = "mmm"
    return ens


# ---------------------------------------------------------------------------
# binary snapshot format
# ---------------------------------------------------------------------------
#
# Layout (little-endian), not guaranteed stable across versions:
#   magic   4s   b"GHE1"
#   n, T    u32, u32
#   flags   u8 x 4: measure (0=p, 1=q_egp), ems, has_probs, reserved
#   meta    u32 length + UTF-8 JSON (params, dist, kernel, seed, resampled)
#   arrays  float64 row-major: prices (n,T+1), variances (n,T+1),
#           innovations (n,T), rn_weights (n), [path_probs (n)]

_MAGIC = b"GHE1"


def _dist_to_json(dist) -> dict:
    if dist.kind == "gaussian":
        return {"kind": "gaussian"}
    if dist.kind == "nig":
        return {"kind": "nig", "k": dist.k, "a": dist.a}
    raise ParamError(f"cannot serialize distribution kind {dist.kind!r}")


def dist_from_json(d: dict):
    from .distributions import Gaussian, Nig

    if d["kind"] == "gaussian":
        return Gaussian()
    if d["kind"] == "nig":
        return Nig(k=d["k"], a=d["a"])
    raise ParamError(f"cannot deserialize distribution kind {d['kind']!r}")


def save_ensemble(ensemble: PathEnsemble, path) -> None:
    """Dump an ensemble to the compact binary snapshot format above."""
    n, T = ensemble.n_paths, ensemble.horizon
    meta = {
        "params": {
            "alpha0": ensemble.params.alpha0,
            "alpha1": ensemble.params.alpha1,
            "beta1": ensemble.params.beta1,
            "gamma": ensemble.params.gamma,
            "lam": ensemble.params.lam,
            "r": ensemble.params.r,
        },
        "dist": _dist_to_json(ensemble.dist),
        "kernel": ensemble.kernel,
        "seed": ensemble.seed if isinstance(ensemble.seed, int) else None,
        "resampled": ensemble.resampled,
        "s0": ensemble.s0,
        "var1": ensemble.var1,
    }
    blob = json.dumps(meta, sort_keys=True).encode()
    with open(path, "wb") as f:
        f.write(_MAGIC)
        f.write(
            struct.pack(
                "<IIBBBB",
                n,
                T,
                _MEASURES.index(ensemble.measure),
                int(ensemble.ems_applied),
                int(ensemble.path_probs is not None),
                0,
            )
        )
        f.write(struct.pack("<I", len(blob)))
        f.write(blob)
        f.write(np.ascontiguousarray(ensemble.prices, dtype="<f8").tobytes())
        f.write(np.ascontiguousarray(ensemble.variances, dtype="<f8").tobytes())
        f.write(np.ascontiguousarray(ensemble.innovations, dtype="<f8").tobytes())
        f.write(np.ascontiguousarray(ensemble.rn_weights, dtype="<f8").tobytes())
        if ensemble.path_probs is not None:
            f.write(np.ascontiguousarray(ensemble.path_probs, dtype="<f8").tobytes())


def load_ensemble(path) -> PathEnsemble:
    """Inverse of :func:`save_ensemble`."""
    with open(path, "rb") as f:
        if f.read(4) != _MAGIC:
            raise ParamError(f"{path} is not an ensemble snapshot")
        n, T, mcode, ems, has_probs, _ = struct.unpack("<IIBBBB", f.read(12))
        (blob_len,) = struct.unpack("<I", f.read(4))
        meta = json.loads(f.read(blob_len).decode())

        def read_block(shape):
            count = int(np.prod(shape))
            arr = np.frombuffer(f.read(8 * count), dtype="<f8").reshape(shape)
            return arr.copy()

        prices = read_block((n, T + 1))
        variances = read_block((n, T + 1))
        innovations = read_block((n, T))
        weights = read_block((n,))
        probs = read_block((n,)) if has_probs else None

    params = NgarchParams(**meta["params"])
    return PathEnsemble(
        params=params,
        dist=dist_from_json(meta["dist"]),
        measure=_MEASURES[mcode],
        s0=meta["s0"],
        var1=meta["var1"],
        prices=prices,
        variances=variances,
        innovations=innovations,
        rn_weights=weights,
        path_probs=probs,
        kernel=meta["kernel"],
        ems_applied=bool(ems),
        resampled=meta["resampled"],
        seed=meta["seed"],
    )
