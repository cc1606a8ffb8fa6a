"""Command-line interface: subcommand outputs, exit-code contract, and
byte-level reproducibility."""

from __future__ import annotations

import json

import numpy as np
import pandas as pd
import pytest

from garchhedge import load_model, simulate_returns, synthetic_market
from garchhedge.cli import main

DAILY_RATE = 2.8e-5


@pytest.fixture(scope="module")
def gauss_model_file(tmp_path_factory):
    path = tmp_path_factory.mktemp("models") / "gauss.json"
    path.write_text(
        json.dumps(
            {
                "model": "ngarch11",
                "dist": "gaussian",
                "r": DAILY_RATE,
                "params": {
                    "alpha0": 9.941e-7,
                    "alpha1": 0.041,
                    "beta1": 0.917,
                    "gamma": 0.863,
                    "lam": 0.041,
                },
            }
        )
    )
    return str(path)


@pytest.fixture(scope="module")
def nig_model_file(tmp_path_factory):
    path = tmp_path_factory.mktemp("models") / "nig.json"
    path.write_text(
        json.dumps(
            {
                "model": "ngarch11",
                "dist": "nig",
                "r": DAILY_RATE,
                "params": {
                    "alpha0": 8.665e-7,
                    "alpha1": 0.047,
                    "beta1": 0.909,
                    "gamma": 0.860,
                    "lam": 0.041,
                },
                "nig": {"k": 1.322, "a": -0.144},
            }
        )
    )
    return str(path)


def _run(capsys, argv):
    code = main(argv)
    captured = capsys.readouterr()
    return code, captured.out, captured.err


# ---------------------------------------------------------------------------
# price
# ---------------------------------------------------------------------------


def test_price_runs_and_repeats_bytewise(capsys, gauss_model_file, tmp_path):
    argv = [
        "price", "--model", gauss_model_file, "--strike", "100", "--horizon", "20",
        "--s0", "100", "--paths", "2000", "--seed", "7",
    ]
    code, out1, _ = _run(capsys, argv)
    assert code == 0
    assert out1.startswith("price: ")
    code, out2, _ = _run(capsys, argv)
    assert code == 0 and out2 == out1

    code, out3, _ = _run(capsys, argv[:-1] + ["8"])
    assert code == 0 and out3 != out1

    dest = tmp_path / "price.json"
    code, _, _ = _run(capsys, argv + ["--out", str(dest)])
    assert code == 0
    payload = json.loads(dest.read_text())
    assert set(payload) == {"price", "price_se"}
    assert payload["price"] > 0


def test_price_put_and_mmm_kernel(capsys, nig_model_file):
    base = [
        "price", "--model", nig_model_file, "--strike", "102", "--horizon", "10",
        "--s0", "100", "--paths", "2000", "--seed", "3",
    ]
    code, call_out, _ = _run(capsys, base)
    assert code == 0
    code, put_out, _ = _run(capsys, base + ["--put"])
    assert code == 0 and put_out != call_out
    code, mmm_out, _ = _run(capsys, base + ["--kernel", "mmm"])
    assert code == 0 and mmm_out.startswith("price: ")


def test_price_missing_model_is_usage_error(capsys):
    code, _, err = _run(
        capsys,
        ["price", "--model", "/nonexistent/model.json", "--strike", "100",
         "--horizon", "20", "--s0", "100", "--seed", "1"],
    )
    assert code == 1
    assert "model" in err.lower() or "exist" in err.lower()


def test_price_rejects_foreign_model_file(capsys, tmp_path):
    bad = tmp_path / "heston.json"
    bad.write_text(json.dumps({"model": "heston", "params": {}}))
    code, _, err = _run(
        capsys,
        ["price", "--model", str(bad), "--strike", "100", "--horizon", "20",
         "--s0", "100", "--seed", "1"],
    )
    assert code == 2
    assert "ParamError" in err


# ---------------------------------------------------------------------------
# hedge
# ---------------------------------------------------------------------------


def test_hedge_full_output(capsys, gauss_model_file, tmp_path):
    dest = tmp_path / "hedge.json"
    code, out, _ = _run(
        capsys,
        ["hedge", "--model", gauss_model_file, "--strike", "100", "--horizon", "20",
         "--s0", "100", "--paths", "3000", "--seed", "11", "--j", "5",
         "--out", str(dest)],
    )
    assert code == 0
    for tag in ("V0:", "xi_lrm(j=5):", "delta_s:", "delta_sigma2:", "vm:", "delta_sv:"):
        assert tag in out
    payload = json.loads(dest.read_text())
    assert {"price", "price_se", "lrm", "delta_s", "vega_sigma2", "delta_sv", "vm"} <= set(payload)
    assert 0.0 < payload["delta_s"]["ratio"] < 1.0


def test_hedge_mmm_kernel_reports_lrm_only(capsys, nig_model_file):
    code, out, _ = _run(
        capsys,
        ["hedge", "--model", nig_model_file, "--strike", "100", "--horizon", "10",
         "--s0", "100", "--paths", "2000", "--seed", "11"] + ["--kernel", "mmm"],
    )
    assert code == 0
    assert "xi_lrm" in out
    assert "delta_s" not in out


def test_hedge_bad_rebalance_interval_is_numerical_failure(capsys, gauss_model_file):
    code, _, err = _run(
        capsys,
        ["hedge", "--model", gauss_model_file, "--strike", "100", "--horizon", "20",
         "--s0", "100", "--paths", "1000", "--seed", "11", "--j", "3"],
    )
    assert code == 2
    assert "FrequencyError" in err


# ---------------------------------------------------------------------------
# estimate
# ---------------------------------------------------------------------------


def test_estimate_fit_and_model_file(capsys, tmp_path, gauss_params, gauss_dist):
    y = simulate_returns(gauss_params, gauss_dist, 2500, seed=404)
    csv = tmp_path / "returns.csv"
    pd.DataFrame({"return": y}).to_csv(csv, index=False)
    dest = tmp_path / "fitted.json"
    code, out, _ = _run(
        capsys,
        ["estimate", "--returns", str(csv), "--dist", "gaussian",
         "--r", str(DAILY_RATE), "--starts", "1", "--out", str(dest)],
    )
    assert code == 0
    assert "loglik:" in out and "converged:" in out
    assert "alpha0" in out and "lam" in out
    params, dist, meta = load_model(dest)
    assert dist.kind == "gaussian"
    assert meta["n_obs"] == 2500
    assert 0.5 < params.beta1 < 0.999


def test_estimate_too_short_series_is_numerical_failure(capsys, tmp_path):
    closes = 100.0 * np.exp(np.cumsum(0.01 * np.random.default_rng(0).standard_normal(300)))
    csv = tmp_path / "short.csv"
    pd.DataFrame({"close": closes}).to_csv(csv, index=False)
    code, _, err = _run(capsys, ["estimate", "--returns", str(csv), "--dist", "gaussian"])
    assert code == 2
    assert "error:" in err


def test_estimate_missing_file(capsys):
    code, _, _ = _run(capsys, ["estimate", "--returns", "/no/such/file.csv"])
    assert code == 1


def test_estimate_csv_without_usable_column(capsys, tmp_path):
    csv = tmp_path / "words.csv"
    csv.write_text("name\nfoo\nbar\n")
    code, _, err = _run(capsys, ["estimate", "--returns", str(csv)])
    assert code == 1
    assert "column" in err


# ---------------------------------------------------------------------------
# backtest
# ---------------------------------------------------------------------------


@pytest.fixture(scope="module")
def market_files(tmp_path_factory, gauss_params, gauss_dist):
    quotes, index = synthetic_market(
        gauss_params,
        gauss_dist,
        seed=5,
        n_expiries=2,
        moneyness_grid=(0.93, 0.97, 1.0, 1.03, 1.06, 1.09),
        maturity_targets=(25,),
        warmup=20,
        price_paths=300,
    )
    d = tmp_path_factory.mktemp("market")
    qp, ip = d / "quotes.csv", d / "index.csv"
    quotes.to_csv(qp, index=False)
    index.rename_axis("date").to_csv(ip)
    return str(qp), str(ip)


def test_backtest_cli_end_to_end(capsys, gauss_model_file, market_files, tmp_path):
    qp, ip = market_files
    dest = tmp_path / "report.csv"
    argv = [
        "backtest", "--model", gauss_model_file, "--quotes", qp, "--index", ip,
        "--kernel", "egp", "--methods", "LRM", "--init", "garch",
        "--paths", "300", "--seed", "3", "--threads", "1", "--out", str(dest),
    ]
    code, out, _ = _run(capsys, argv)
    assert code == 0
    assert "== LRM  (kernel=egp, init=garch) ==" in out
    assert "== NoHedge" in out
    assert "Delta-SV" not in out  # restriction honored
    table = pd.read_csv(dest)
    assert set(table.columns) == {
        "method", "kernel", "init_mode", "moneyness_bin", "maturity_bin", "n", "mean_nhe"
    }
    text_copy = (tmp_path / "report.csv.txt").read_text()
    assert text_copy in out

    # byte-identical rerun on more worker threads
    dest2 = tmp_path / "report2.csv"
    argv2 = [a if a != str(dest) else str(dest2) for a in argv]
    argv2[argv2.index("--threads") + 1] = "3"
    code, _, _ = _run(capsys, argv2)
    assert code == 0
    assert dest.read_bytes() == dest2.read_bytes()


def test_backtest_cli_unknown_method(capsys, gauss_model_file, market_files):
    qp, ip = market_files
    code, _, err = _run(
        capsys,
        ["backtest", "--model", gauss_model_file, "--quotes", qp, "--index", ip,
         "--methods", "Gamma", "--seed", "3"],
    )
    assert code == 1
    assert "unknown method" in err


def test_backtest_cli_empty_screen_warns_and_succeeds(
    capsys, gauss_model_file, market_files, tmp_path
):
    qp, ip = market_files
    dead = pd.read_csv(qp)
    dead["volume"] = 0
    qp2 = tmp_path / "dead.csv"
    dead.to_csv(qp2, index=False)
    with pytest.warns(UserWarning, match="screens"):
        code, out, _ = _run(
            capsys,
            ["backtest", "--model", gauss_model_file, "--quotes", str(qp2),
             "--index", ip, "--seed", "3", "--paths", "200"],
        )
    assert code == 0
    assert "empty report" in out


# ---------------------------------------------------------------------------
# limit-check
# ---------------------------------------------------------------------------


def test_limit_check_outputs_convergence_table(capsys, nig_model_file, tmp_path):
    dest = tmp_path / "limit.csv"
    code, out, _ = _run(
        capsys,
        ["limit-check", "--model", nig_model_file, "--h-grid", "1,0.1,0.01",
         "--out", str(dest)],
    )
    assert code == 0
    lines = out.strip().splitlines()
    assert lines[0] == "h,vm,vm_limit,abs_err,rel_err"
    table = pd.read_csv(dest)
    assert len(table) == 3
    np.testing.assert_allclose(table["h"], [1.0, 0.1, 0.01])
    # errors shrink with h on this skewed model
    assert table["abs_err"].iloc[-1] < table["abs_err"].iloc[0]


def test_limit_check_default_grid(capsys, gauss_model_file):
    code, out, _ = _run(capsys, ["limit-check", "--model", gauss_model_file])
    assert code == 0
    assert out.splitlines()[0] == "h,vm,vm_limit,abs_err,rel_err"
    assert len(out.strip().splitlines()) >= 5


# ---------------------------------------------------------------------------
# group-level behavior
# ---------------------------------------------------------------------------


def test_no_arguments_is_usage_error_with_help(capsys):
    code, out, err = _run(capsys, [])
    assert code == 1
    assert "Usage" in out + err


def test_unknown_subcommand(capsys):
    code, _, err = _run(capsys, ["frobnicate"])
    assert code == 1
