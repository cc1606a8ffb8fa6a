"""Exception and warning types shared across the package.

Every numerical guard in the library raises one of these instead of letting
NaNs propagate silently.
"""


class GarchHedgeError(Exception):
    """Base class for all library errors."""


class DomainError(GarchHedgeError):
    """An argument left the mathematical domain of a transform (e.g. the
    cumulant generating function of an NIG variable evaluated past its
    steepness bound)."""


class ParamError(GarchHedgeError):
    """Invalid static parameters (negative variance coefficients, k <= |a|,
    non-positive scale, ...)."""


class NonFiniteError(GarchHedgeError):
    """An overflow/NaN was detected in a recursion or input series."""


class NonStationaryError(GarchHedgeError):
    """Covariance-stationarity constraint violated where a stationary
    quantity (unconditional variance) was requested."""


class NoRootError(GarchHedgeError):
    """The one-step exponential-tilt (martingale) equation has no admissible
    real root at the supplied state."""


class DegenerateBlockError(GarchHedgeError):
    """A conditioning block in the minimal-martingale factor estimator has
    zero (or numerically vanishing) conditional variance."""


class InvalidMeasureError(GarchHedgeError):
    """An operation that requires a plain risk-neutral ensemble (unit
    weights, uniform path probabilities, martingale measure) was handed
    something else."""


class DegenerateVarianceError(GarchHedgeError):
    """The denominator of a hedge ratio (a conditional variance of price
    increments) is zero or numerically negligible."""


class FrequencyError(GarchHedgeError):
    """The hedging interval j is incompatible with the time grid (j does not
    divide the number of steps to maturity)."""


class InadmissibleHError(GarchHedgeError):
    """A requested observation interval h makes the induced GARCH parameters
    inadmissible (beta1(h) < 0)."""


class NonConvergenceError(GarchHedgeError):
    """Maximum-likelihood optimisation failed to converge from every start,
    or the data are degenerate."""


class InsufficientDataError(GarchHedgeError):
    """Too few valid option quotes on a date to fit the implied-vol
    regression."""


class InversionError(GarchHedgeError):
    """Implied-volatility inversion failed (price outside the no-arbitrage
    band or root not bracketed)."""


class MissingQuoteError(GarchHedgeError):
    """A contract tracked by the backtest has no usable quote on a required
    rebalancing date."""


class SignedMeasureWarning(UserWarning):
    """Some sampled minimal-martingale density factors are negative; results
    under that (signed) measure are still reported, with the negative mass
    recorded."""
