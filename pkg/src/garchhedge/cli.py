"""Command-line front end.

Subcommands map one-to-one onto the package's workflow stages:

* ``estimate``    fit the model to a return series, write a model file;
* ``price``       Monte Carlo value of one European option;
* ``hedge``       every hedge ratio for one contract, with standard errors;
* ``backtest``    weekly-rebalanced replication over an option-quote panel;
* ``limit-check`` variance-multiplier convergence table for shrinking steps.

Every stochastic subcommand requires ``--seed``; given the same options and
seed, output bytes are identical regardless of ``--threads``.  Exit codes:
0 success, 1 usage or I/O problem, 2 numerical failure (non-convergence,
domain violations, degenerate moments, ...).
"""

from __future__ import annotations

import json
import os

import click
import numpy as np
import pandas as pd

from .backtest import load_index_csv, load_quotes_csv, run_backtest
from .engine import conditional_expectation, ensemble_under_kernel
from .errors import GarchHedgeError
from .estimation import fit, load_model, save_model
from .hedging import HedgeRequest, call_payoff, compute_hedges, lrm_p_hedge, put_payoff
from .limits import DEFAULT_H_GRID, limit_params_from_ngarch, vm_convergence_study
from .model import unconditional_variance

__all__ = ["cli", "main"]


def _fmt(x) -> str:
    return f"{x:.10g}"


@click.group()
def cli():
    """Quadratic hedging of European options under asymmetric GARCH with
    Gaussian or normal-inverse-Gaussian innovations."""


# ---------------------------------------------------------------------------
# estimate
# ---------------------------------------------------------------------------


def _read_returns(path: str) -> np.ndarray:
    df = pd.read_csv(path)
    if "return" in df.columns:
        y = df["return"].to_numpy(dtype=float)
    elif "close" in df.columns:
        closes = df["close"].to_numpy(dtype=float)
        y = np.log(closes[1:] / closes[:-1])
    else:
        num = df.select_dtypes("number")
        if num.shape[1] == 0:
            raise click.UsageError(f"{path}: no 'return'/'close' column and no numeric column")
        y = num.iloc[:, 0].to_numpy(dtype=float)
    return y


@cli.command("estimate")
@click.option("--returns", "returns_path", required=True, type=click.Path(exists=True, dir_okay=False), help="CSV with a 'return' column (or 'close' prices).")
@click.option("--dist", type=click.Choice(["gaussian", "nig"]), default="nig", show_default=True)
@click.option("--r", "rate", type=float, default=0.0, show_default=True, help="Per-trading-day interest rate.")
@click.option("--starts", type=int, default=5, show_default=True, help="Number of optimizer starts.")
@click.option("--out", type=click.Path(dir_okay=False), default=None, help="Write the fitted model JSON here.")
def cmd_estimate(returns_path, dist, rate, starts, out):
    """Maximum-likelihood fit of the model to a return series."""
    y = _read_returns(returns_path)
    res = fit(y, dist=dist, r=rate, n_starts=starts)
    click.echo(f"dist: {res.dist.kind}   n_obs: {res.n_obs}   loglik: {_fmt(res.loglik)}")
    click.echo(f"converged: {res.converged}   grad_norm: {_fmt(res.grad_norm)}")
    for name, val in res.param_dict().items():
        se = (res.std_errors or {}).get(name)
        tail = f"   (se {_fmt(se)})" if se is not None else ""
        click.echo(f"  {name:<8} {_fmt(val)}{tail}")
    if out:
        save_model(res, out)
        click.echo(f"model written to {out}")


# ---------------------------------------------------------------------------
# price / hedge
# ---------------------------------------------------------------------------


def _contract_options(f):
    opts = [
        click.option("--model", "model_path", required=True, type=click.Path(exists=True, dir_okay=False), help="Model JSON from 'estimate'."),
        click.option("--kernel", type=click.Choice(["egp", "esscher", "mmm"]), default="egp", show_default=True),
        click.option("--strike", type=float, required=True),
        click.option("--horizon", type=int, required=True, help="Steps to maturity (trading days)."),
        click.option("--s0", type=float, required=True, help="Spot at the hedge date."),
        click.option("--var1", type=float, default=None, help="First-step conditional variance [default: stationary]."),
        click.option("--put", is_flag=True, help="Price/hedge a put instead of a call."),
        click.option("--paths", type=int, default=100_000, show_default=True),
        click.option("--seed", type=int, required=True, help="RNG seed (mandatory: runs are reproducible)."),
        click.option("--ems", type=click.Choice(["on", "off"]), default="on", show_default=True, help="Martingale correction of simulated paths."),
        click.option("--out", type=click.Path(dir_okay=False), default=None, help="Also write results as JSON."),
    ]
    for opt in reversed(opts):
        f = opt(f)
    return f


@cli.command("price")
@_contract_options
def cmd_price(model_path, kernel, strike, horizon, s0, var1, put, paths, seed, ems, out):
    """Monte Carlo value of one European option."""
    params, dist, _ = load_model(model_path)
    if var1 is None:
        var1 = unconditional_variance(params)
    ens = ensemble_under_kernel(
        params, dist, kernel, s0=s0, n_paths=paths, horizon=horizon,
        seed=seed, var1=var1, ems=(ems == "on"),
    )
    pay = put_payoff(strike) if put else call_payoff(strike)
    if kernel == "mmm":
        res = lrm_p_hedge(ens, pay, j=1)
        price, se = res.price, res.price_se
    else:
        price, se = conditional_expectation(ens, pay, float(np.exp(-params.r * horizon)))
    click.echo(f"price: {_fmt(price)}   se: {_fmt(se)}")
    if out:
        with open(out, "w") as f:
            json.dump({"price": price, "price_se": se}, f, indent=2, sort_keys=True)
        click.echo(f"written to {out}")


@cli.command("hedge")
@_contract_options
@click.option("--j", "j", type=int, default=1, show_default=True, help="Rebalance interval in steps (must divide the horizon).")
def cmd_hedge(model_path, kernel, strike, horizon, s0, var1, put, paths, seed, ems, out, j):
    """All hedge ratios for one contract on a shared ensemble."""
    params, dist, _ = load_model(model_path)
    if var1 is None:
        var1 = unconditional_variance(params)
    req = HedgeRequest(
        strike=strike, horizon=horizon, s0=s0, var1=var1, call=not put,
        j=j, kernel=kernel, n_paths=paths, seed=seed, ems=(ems == "on"),
    )
    res = compute_hedges(params, dist, req)
    click.echo(f"V0:           {_fmt(res['price'])}   se {_fmt(res['price_se'])}")
    lrm = res["lrm"]
    click.echo(f"xi_lrm(j={j}):  {_fmt(lrm.ratio)}   se {_fmt(lrm.se)}")
    if "delta_s" in res:
        click.echo(f"delta_s:      {_fmt(res['delta_s'].ratio)}   se {_fmt(res['delta_s'].se)}")
        click.echo(f"delta_sigma2: {_fmt(res['vega_sigma2'].ratio)}   se {_fmt(res['vega_sigma2'].se)}")
        click.echo(f"vm:           {_fmt(res['vm'])}")
        click.echo(f"delta_sv:     {_fmt(res['delta_sv'].ratio)}   se {_fmt(res['delta_sv'].se)}")
    if out:
        payload = {"price": res["price"], "price_se": res["price_se"]}
        for key in ("lrm", "delta_s", "vega_sigma2", "delta_sv"):
            if key in res:
                hr = res[key]
                payload[key] = {"ratio": hr.ratio, "se": hr.se}
        if "vm" in res:
            payload["vm"] = res["vm"]
        with open(out, "w") as f:
            json.dump(payload, f, indent=2, sort_keys=True)
        click.echo(f"written to {out}")


# ---------------------------------------------------------------------------
# backtest
# ---------------------------------------------------------------------------


@cli.command("backtest")
@click.option("--model", "model_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--quotes", "quotes_path", required=True, type=click.Path(exists=True, dir_okay=False), help="Option-quote CSV panel.")
@click.option("--index", "index_path", required=True, type=click.Path(exists=True, dir_okay=False), help="Underlying closes CSV.")
@click.option("--kernel", type=click.Choice(["egp", "esscher"]), default=None, help="Restrict to one pricing kernel [default: both].")
@click.option("--methods", default=None, help="Comma-separated subset of AdhocBS,LRM,Delta,Delta-SV [default: all].")
@click.option("--init", "init_mode", type=click.Choice(["garch", "adhoc"]), default=None, help="Restrict variance initialization [default: both].")
@click.option("--paths", type=int, default=10_000, show_default=True)
@click.option("--seed", type=int, required=True)
@click.option("--accrue-cash", is_flag=True, help="Let the bank-account leg earn the short rate between rebalances.")
@click.option("--ems", type=click.Choice(["on", "off"]), default="on", show_default=True)
@click.option("--threads", type=int, default=None, help="Worker threads for ensemble builds [default: cores]. Output does not depend on it.")
@click.option("--out", type=click.Path(dir_okay=False), default=None, help="Write the long-form CSV here (text table goes to <out>.txt).")
def cmd_backtest(model_path, quotes_path, index_path, kernel, methods, init_mode, paths, seed, accrue_cash, ems, threads, out):
    """Weekly-rebalanced hedge replication over an option-quote panel."""
    params, dist, _ = load_model(model_path)
    quotes = load_quotes_csv(quotes_path)
    index = load_index_csv(index_path)
    all_methods = ("AdhocBS", "LRM", "Delta", "Delta-SV")
    if methods is not None:
        chosen = tuple(m.strip() for m in methods.split(",") if m.strip())
        bad = [m for m in chosen if m not in all_methods]
        if bad:
            raise click.UsageError(f"unknown method(s) {bad}; choose from {all_methods}")
    else:
        chosen = all_methods
    report = run_backtest(
        quotes,
        index,
        params,
        dist,
        seed=seed,
        kernels=(kernel,) if kernel else ("egp", "esscher"),
        methods=chosen,
        init_modes=(init_mode,) if init_mode else ("garch", "adhoc"),
        n_paths=paths,
        accrue_cash=accrue_cash,
        ems=(ems == "on"),
        threads=threads if threads is not None else (os.cpu_count() or 1),
    )
    text = report.format_text()
    click.echo(text, nl=False)
    if report.failures:
        for cid, method, kern, msg in report.failures:
            click.echo(f"failed: {cid} {method}/{kern}: {msg}", err=True)
    if out:
        report.to_csv(out)
        with open(str(out) + ".txt", "w") as f:
            f.write(text)
        click.echo(f"report written to {out} and {out}.txt")


# ---------------------------------------------------------------------------
# limit-check
# ---------------------------------------------------------------------------


@cli.command("limit-check")
@click.option("--model", "model_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--s0", type=float, default=100.0, show_default=True)
@click.option("--sigma2", type=float, default=None, help="Per-unit-time variance [default: stationary].")
@click.option("--h-grid", "h_grid", default=None, help="Comma-separated step sizes [default: 1,1e-1,...,1e-5].")
@click.option("--out", type=click.Path(dir_okay=False), default=None, help="Write the convergence table CSV here.")
def cmd_limit_check(model_path, s0, sigma2, h_grid, out):
    """Variance-multiplier convergence to its diffusion-limit value."""
    params, dist, _ = load_model(model_path)
    limit = limit_params_from_ngarch(params, dist)
    if sigma2 is None:
        sigma2 = unconditional_variance(params)
    grid = DEFAULT_H_GRID if h_grid is None else tuple(float(x) for x in h_grid.split(","))
    df = vm_convergence_study(
        limit, dist, s0, float(np.sqrt(sigma2)), lam=params.lam, r=params.r, h_grid=grid
    )
    csv = df.to_csv(index=False)
    click.echo(csv, nl=False)
    if out:
        with open(out, "w") as f:
            f.write(csv)
        click.echo(f"written to {out}")


# ---------------------------------------------------------------------------
# entry point with the documented exit-code contract
# ---------------------------------------------------------------------------


def main(argv=None) -> int:
    """Run the CLI; returns 0 on success, 1 on usage/IO errors, 2 on
    numerical failures."""
    try:
        cli.main(args=argv, standalone_mode=False)
    except click.exceptions.Exit as e:
        return int(e.exit_code)
    except click.exceptions.Abort:
        return 1
    except click.UsageError as e:
        e.show()
        return 1
    except click.ClickException as e:
        e.show()
        return int(e.exit_code)
    except GarchHedgeError as e:
        click.echo(f"error: {type(e).__name__}: {e}", err=True)
        return 2
    except OSError as e:
        click.echo(f"error: {e}", err=True)
        return 1
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
