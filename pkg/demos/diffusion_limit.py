"""Show the small-step limit of the vega multiplier.

Shrinks the step size of an embedded model family toward its bivariate
diffusion limit and tabulates the one-step vega multiplier against its
closed-form limit value.  Also demonstrates that with symmetric
innovations the per-step market price of risk stays exactly at its limit
for every step size, while skewed innovations approach it from a distance.
"""

import numpy as np

from garchhedge import (
    Gaussian,
    Nig,
    NgarchParams,
    limit_market_price_of_risk,
    limit_params_from_ngarch,
    market_price_of_risk,
    unconditional_variance,
    vm_convergence_study,
)

GAUSS = NgarchParams(
    alpha0=9.941e-7, alpha1=0.041, beta1=0.917, gamma=0.863, lam=0.041, r=2.8e-5
)
NIG = NgarchParams(
    alpha0=8.665e-7, alpha1=0.047, beta1=0.909, gamma=0.860, lam=0.041, r=2.8e-5
)


def show(dist, params, label: str) -> None:
    limit = limit_params_from_ngarch(params, dist)
    sigma = float(np.sqrt(unconditional_variance(params)))
    table = vm_convergence_study(limit, dist, s=100.0, sigma=sigma,
                                 lam=params.lam, r=params.r)
    print(f"\n{label}: one-step vega multiplier vs diffusion-limit value")
    print(f"  limit vm = {table['vm_limit'].iloc[0]:+.6e}")
    print(f"  {'h':>8}  {'vm(h)':>14}  {'rel err':>10}")
    for row in table.itertuples():
        print(f"  {row.h:8.0e}  {row.vm:+14.6e}  {row.rel_err:10.2e}")

    rho_h = market_price_of_risk(params.lam, dist, sigma, h=1e-3)
    rho_lim = limit_market_price_of_risk(params.lam, dist, sigma)
    print(f"  market price of risk at h=1e-3: {rho_h:.6f} (limit {rho_lim:.6f})")


def main() -> None:
    show(Gaussian(), GAUSS, "Gaussian innovations")
    show(Nig(k=1.322, a=-0.144), NIG, "NIG innovations (skewed)")


if __name__ == "__main__":
    main()
