"""Standardized innovation distributions (zero mean, unit variance).

Two concrete families are provided: the standard normal, and a normal
inverse Gaussian (NIG) law parametrized by its per-unit-scale shape pair
``(k, a)`` with ``k > |a| >= 0`` -- ``k`` controls tail heaviness, ``a``
asymmetry.  The scale ``s`` and location ``loc`` that standardize the NIG
law are solved in closed form (:func:`standardize_nig`), so users only ever
choose the shape.

All downstream code talks to a distribution through four things:

* ``cgf(z)``          -- cumulant generating function with two derivatives,
* ``logpdf`` / ``pdf``-- density of the standardized innovation,
* ``sample(rng, n)``  -- exact draws,
* ``m3`` / ``m4``     -- third and fourth raw moments.

Any object exposing these (e.g. a discrete toy law in the test-suite) can be
plugged into the model, pricing and hedging layers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import k1e

from .errors import DomainError, ParamError

__all__ = [
    "CgfValue",
    "Gaussian",
    "Nig",
    "standardize_nig",
    "cgf",
    "density",
    "sample",
]

# Relative margin kept between a CGF argument and the NIG steepness bound.
_NIG_DOMAIN_MARGIN = 1e-10


@dataclass(frozen=True)
class CgfValue:
    """Value of a cumulant generating function together with its first two
    derivatives at the same point.  Fields are scalars or ndarrays depending
    on the argument."""

    value: float | np.ndarray
    d1: float | np.ndarray
    d2: float | np.ndarray


def standardize_nig(k: float, a: float) -> tuple[float, float]:
    """Scale and location that give the NIG(k, a) law zero mean and unit
    variance.

    With g = sqrt(k^2 - a^2) the variance of an NIG variable with shape
    (k, a) and scale s is s*k^2/g^3 and its mean is loc + s*a/g, hence

        s = g^3 / k^2,        loc = -a * g^2 / k^2.

    Raises ParamError unless k > |a| >= 0 and both are finite.
    """
    if not (np.isfinite(k) and np.isfinite(a)):
        raise ParamError(f"NIG shape parameters must be finite, got k={k}, a={a}")
    if not k > abs(a):
        raise ParamError(f"NIG requires k > |a|, got k={k}, a={a}")
    g2 = k * k - a * a
    g = math.sqrt(g2)
    s = g2 * g / (k * k)
    loc = -a * g2 / (k * k)
    return s, loc


@dataclass(frozen=True)
class Gaussian:
    """Standard normal innovation."""

    kind: str = field(default="gaussian", init=False)

    def cgf(self, z):
        z = np.asarray(z, dtype=float)
        val = CgfValue(0.5 * z * z, z.copy(), np.ones_like(z))
        if val.value.ndim == 0:
            return CgfValue(float(val.value), float(val.d1), 1.0)
        return val

    def logpdf(self, x):
        x = np.asarray(x, dtype=float)
        out = -0.5 * x * x - 0.5 * math.log(2.0 * math.pi)
        return float(out) if out.ndim == 0 else out

    def pdf(self, x):
        return np.exp(self.logpdf(x))

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return rng.standard_normal(n)

    @property
    def m3(self) -> float:
        return 0.0

    @property
    def m4(self) -> float:
        return 3.0


@dataclass(frozen=True)
class Nig:
    """Standardized normal inverse Gaussian innovation with shape (k, a).

    The stored ``s`` (scale) and ``loc`` (location) are the standardizing
    values from :func:`standardize_nig`; they are recomputed on construction
    and not meant to be overridden.
    """

    k: float
    a: float
    s: float = field(init=False)
    loc: float = field(init=False)
    kind: str = field(default="nig", init=False)

    def __post_init__(self):
        s, loc = standardize_nig(self.k, self.a)
        object.__setattr__(self, "s", s)
        object.__setattr__(self, "loc", loc)

    # -- derived quantities -------------------------------------------------

    @property
    def _g(self) -> float:
        return math.sqrt(self.k * self.k - self.a * self.a)

    @property
    def m3(self) -> float:
        """Third raw moment (= skewness): 3a / (k^2 - a^2)."""
        return 3.0 * self.a / (self.k * self.k - self.a * self.a)

    @property
    def m4(self) -> float:
        """Fourth raw moment: 3 + 3(k^2 + 4a^2) / (k^2 - a^2)^2."""
        g2 = self.k * self.k - self.a * self.a
        return 3.0 + 3.0 * (self.k * self.k + 4.0 * self.a * self.a) / (g2 * g2)

    def cgf_domain(self) -> tuple[float, float]:
        """Open interval of admissible CGF arguments (up to the safety
        margin): z must satisfy |a + z| < k."""
        return (-self.k - self.a, self.k - self.a)

    # -- core operations ----------------------------------------------------

    def cgf(self, z):
        """kappa(z) = loc*z + s*(g - sqrt(k^2 - (a+z)^2)) and derivatives.

        Raises DomainError if any |a + z| >= k*(1 - 1e-10): beyond the
        steepness bound the moment generating function does not exist, and
        near it the derivatives blow up.
        """
        z = np.asarray(z, dtype=float)
        u = self.a + z
        bound = self.k * (1.0 - _NIG_DOMAIN_MARGIN)
        if np.any(~np.isfinite(z)) or np.any(np.abs(u) >= bound):
            raise DomainError(
                f"CGF argument outside NIG domain |a + z| < k = {self.k} "
                f"(max |a+z| seen: {np.max(np.abs(u)):.6g})"
            )
        root = np.sqrt(self.k * self.k - u * u)
        val = self.loc * z + self.s * (self._g - root)
        d1 = self.loc + self.s * u / root
        d2 = self.s * self.k * self.k / root**3
        if val.ndim == 0:
            return CgfValue(float(val), float(d1), float(d2))
        return CgfValue(val, d1, d2)

    def logpdf(self, x):
        """Log-density of the standardized NIG law.

        Uses the exponentially scaled Bessel function K1e for stability in
        the tails:  log f(x) = log(kh/(pi*s)) + sg + ah*w + log K1e(kh*q)
        - kh*q - log q, with w = (x-loc)/s, q = sqrt(1+w^2), kh = k*s,
        ah = a*s, sg = s*g.
        """
        x = np.asarray(x, dtype=float)
        w = (x - self.loc) / self.s
        q = np.sqrt(1.0 + w * w)
        kh = self.k * self.s
        out = (
            math.log(kh / (math.pi * self.s))
            + self.s * self._g
            + self.a * self.s * w
            + np.log(k1e(kh * q))
            - kh * q
            - np.log(q)
        )
        return float(out) if out.ndim == 0 else out

    def pdf(self, x):
        return np.exp(self.logpdf(x))

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        """Exact draws via the inverse-Gaussian mixing representation:
        Z ~ IG(mean=s/g, shape=s^2),  X = loc + a*Z + sqrt(Z)*N(0,1)."""
        z = rng.wald(self.s / self._g, self.s * self.s, size=n)
        return self.loc + self.a * z + np.sqrt(z) * rng.standard_normal(n)


# -- functional entry points (thin wrappers over the methods) ----------------


def cgf(dist, z):
    """Cumulant generating function of ``dist`` at ``z`` (scalar or array),
    returned as a :class:`CgfValue`."""
    return dist.cgf(z)


def density(dist, x):
    """Density of the standardized innovation at ``x``."""
    return dist.pdf(x)


def sample(dist, rng: np.random.Generator, n: int) -> np.ndarray:
    """Draw ``n`` iid innovations using the supplied numpy Generator."""
    return dist.sample(rng, n)
