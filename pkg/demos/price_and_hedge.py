"""Price a European call and compare hedge constructions.

Uses the daily-calibrated NIG parameter set, prices a 30-trading-day
at-the-money call under the shift pricing kernel, and prints the
local-risk-minimizing ratio next to the plain delta and the
vega-corrected minimum-variance delta, for weekly and daily rebalancing.
"""

import numpy as np

from garchhedge import (
    HedgeRequest,
    NgarchParams,
    Nig,
    compute_hedges,
    lrm_q_hedge,
    ensemble_under_kernel,
    call_payoff,
    unconditional_variance,
)

PARAMS = NgarchParams(
    alpha0=8.665e-7, alpha1=0.047, beta1=0.909, gamma=0.860, lam=0.041, r=2.8e-5
)
DIST = Nig(k=1.322, a=-0.144)


def main() -> None:
    var1 = unconditional_variance(PARAMS)
    print(f"stationary daily variance: {var1:.3e}  (vol {np.sqrt(var1):.4%}/day)")

    req = HedgeRequest(
        strike=100.0,
        horizon=30,
        s0=100.0,
        var1=var1,
        call=True,
        j=1,
        kernel="egp",
        n_paths=100_000,
        seed=20260814,
    )
    out = compute_hedges(PARAMS, DIST, req)
    print(f"\n30-day ATM call, shift kernel, {req.n_paths:,} paths (EMS on)")
    print(f"  price           : {out['price']:.4f}  (se {out['price_se']:.1e})")
    print(f"  delta_S         : {out['delta_s'].ratio:+.4f}")
    print(f"  vega multiplier : {out['vm']:+.3e}")
    print(f"  delta_SV        : {out['delta_sv'].ratio:+.4f}")
    print(f"  LRM (j=1)       : {out['lrm'].ratio:+.4f}  (se {out['lrm'].se:.1e})")

    # weekly rebalancing: the LRM ratio is recomputed for a 5-step interval
    ens = ensemble_under_kernel(
        PARAMS, DIST, "egp",
        s0=100.0, n_paths=100_000, horizon=30, seed=20260814, var1=var1,
    )
    weekly = lrm_q_hedge(ens, call_payoff(100.0), j=5)
    print(f"  LRM (j=5)       : {weekly.ratio:+.4f}  (se {weekly.se:.1e})")
    print("\nThe j=1 LRM ratio sits close to delta_SV (its small-step"
          " approximation) and drifts away as the rebalance interval grows.")


if __name__ == "__main__":
    main()
