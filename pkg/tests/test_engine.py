"""Simulation-engine tests: determinism, recursion conventions shared with
the filter, the martingale correction's exactness/idempotence/variance
reduction, kernel-aware ensemble construction, and the binary dump."""

import math

import numpy as np
import pytest

from garchhedge import (
    Gaussian,
    InvalidMeasureError,
    NgarchParams,
    Nig,
    NonFiniteError,
    ParamError,
    PathEnsemble,
    SimSpec,
    apply_ems,
    call_payoff,
    conditional_expectation,
    ensemble_under_kernel,
    esscher_rn_derivative,
    filter_variance,
    load_ensemble,
    save_ensemble,
    simulate,
    unconditional_variance,
    variance_update,
)


def _spec(params, dist, **kw):
    base = dict(s0=100.0, n_paths=2000, horizon=30, seed=1234, measure="q_egp", var1=1.5e-4)
    base.update(kw)
    return SimSpec(params=params, dist=dist, **base)


# ---------------------------------------------------------------------------
# SimSpec
# ---------------------------------------------------------------------------


def test_simspec_validation(nig_params, nig_dist):
    with pytest.raises(ParamError):
        _spec(nig_params, nig_dist, n_paths=1)
    with pytest.raises(ParamError):
        _spec(nig_params, nig_dist, horizon=0)
    with pytest.raises(ParamError):
        _spec(nig_params, nig_dist, var1=-1e-4)
    with pytest.raises(ParamError):
        _spec(nig_params, nig_dist, measure="q_mmm")
    with pytest.raises(ParamError):
        _spec(nig_params, nig_dist, var1=1e-4, sigma2_0=1e-4, eps0=0.0)
    with pytest.raises(ParamError):
        _spec(nig_params, nig_dist, var1=None, sigma2_0=1e-4)  # eps0 missing


def test_simspec_seed_state_equivalent_to_var1(nig_params, nig_dist):
    """Supplying (sigma2_0, eps0) must derive var1 through the variance
    recursion, matching an explicit var1 run path for path."""
    sigma2_0, eps0 = 2e-4, -0.8
    v1 = float(variance_update(nig_params, sigma2_0, eps0))
    a = simulate(_spec(nig_params, nig_dist, var1=None, sigma2_0=sigma2_0, eps0=eps0))
    b = simulate(_spec(nig_params, nig_dist, var1=v1))
    np.testing.assert_array_equal(a.prices, b.prices)


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------


def test_simulate_is_seed_deterministic(nig_params, nig_dist):
    a = simulate(_spec(nig_params, nig_dist))
    b = simulate(_spec(nig_params, nig_dist))
    np.testing.assert_array_equal(a.prices, b.prices)
    np.testing.assert_array_equal(a.innovations, b.innovations)
    c = simulate(_spec(nig_params, nig_dist, seed=999))
    assert not np.array_equal(a.prices, c.prices)


def test_simulate_shapes_and_seeds(nig_params, nig_dist):
    ens = simulate(_spec(nig_params, nig_dist, n_paths=50, horizon=7))
    assert ens.prices.shape == (50, 8)
    assert ens.variances.shape == (50, 8)
    assert ens.innovations.shape == (50, 7)
    assert np.all(ens.prices[:, 0] == 100.0)
    assert np.all(ens.variances[:, 0] == 1.5e-4)
    assert np.all(ens.prices > 0)


@pytest.mark.parametrize("measure", ["p", "q_egp"])
def test_simulate_recursions_internally_consistent(measure, nig_params, nig_dist):
    """Rebuild each step from the stored innovations: prices and variances
    must satisfy the exact published recursions for the tagged measure."""
    p, d = nig_params, nig_dist
    ens = simulate(_spec(p, d, n_paths=40, horizon=12, measure=measure))
    sig = np.sqrt(ens.variances[:, :-1])
    kap = d.cgf(sig.ravel()).value.reshape(sig.shape)
    if measure == "p":
        drift = p.r + p.lam * sig - kap
        dev = ens.innovations - p.gamma
    else:
        drift = p.r - kap
        dev = ens.innovations - p.lam - p.gamma
    np.testing.assert_allclose(
        np.log(ens.prices[:, 1:] / ens.prices[:, :-1]),
        drift + sig * ens.innovations,
        rtol=0, atol=1e-12,
    )
    v_next = p.alpha0 + (p.alpha1 * dev**2 + p.beta1) * ens.variances[:, :-1]
    np.testing.assert_allclose(ens.variances[:, 1:], v_next, rtol=1e-12)


def test_q_simulated_paths_refilter_to_same_variances(nig_params, nig_dist):
    """Risk-neutral variance dynamics are invariant: pushing Q-simulated
    returns back through the (measure-free) filter reproduces the simulated
    variance path to 1e-10."""
    ens = simulate(_spec(nig_params, nig_dist, n_paths=10, horizon=25))
    for i in range(10):
        y = np.diff(np.log(ens.prices[i]))
        res = filter_variance(nig_params, nig_dist, y, var_init=float(ens.variances[i, 0]))
        np.testing.assert_allclose(res.variances, ens.variances[i, :-1], rtol=1e-10)
        assert res.next_var == pytest.approx(ens.variances[i, -1], rel=1e-10)


def test_bs_collapse_terminal_distribution_ks():
    """alpha1 = beta1 = 0, Gaussian, lam = 0: the model is exact discretized
    Black-Scholes, so terminal log prices are N(ln S0 + (r - a0/2) T, a0 T)."""
    from scipy.stats import kstest

    a0, T, r = 1e-4, 20, 1e-4
    p = NgarchParams(alpha0=a0, alpha1=0.0, beta1=0.0, gamma=0.0, lam=0.0, r=r)
    ens = simulate(_spec(p, Gaussian(), n_paths=20_000, horizon=T, var1=a0, seed=5))
    z = np.log(ens.prices[:, -1])
    res = kstest(z, "norm", args=(math.log(100.0) + (r - a0 / 2) * T, math.sqrt(a0 * T)))
    assert res.pvalue > 0.01


def test_pre_ems_martingale_within_clt_band(nig_params, nig_dist):
    ens = simulate(_spec(nig_params, nig_dist, n_paths=100_000, horizon=15, seed=3))
    x = np.exp(-ens.r * 15) * ens.prices[:, -1]
    se = x.std() / math.sqrt(len(x))
    assert abs(x.mean() - 100.0) < 4 * se


def test_simulate_rejects_explosive_rates_via_resample_cap():
    """A parameter set whose paths overwhelmingly blow past the variance
    guard must abort with NonFiniteError rather than silently resample."""
    p = NgarchParams(alpha0=1e-6, alpha1=5.0, beta1=0.0, gamma=4.0, lam=0.0)
    with pytest.raises(NonFiniteError):
        simulate(_spec(p, Nig(1.322, -0.144), n_paths=500, horizon=60, var1=1e-4))


# ---------------------------------------------------------------------------
# empirical martingale correction
# ---------------------------------------------------------------------------


def _ulp_gap(values, target):
    return np.abs(values - target) / np.spacing(target)


def test_ems_exact_at_every_slice(nig_params, nig_dist):
    ens = simulate(_spec(nig_params, nig_dist, n_paths=5000, horizon=40, seed=8))
    fixed = apply_ems(ens)
    assert fixed.ems_applied
    T = fixed.horizon
    for t in range(T + 1):
        m = float(np.mean(np.exp(-fixed.r * t) * fixed.prices[:, t]))
        assert _ulp_gap(m, 100.0) <= 4.0


def test_ems_idempotent(nig_params, nig_dist):
    ens = simulate(_spec(nig_params, nig_dist, n_paths=3000, horizon=10, seed=9))
    once = apply_ems(ens)
    twice = apply_ems(once)
    np.testing.assert_allclose(twice.prices, once.prices, rtol=0, atol=1e-12 * 100.0)


def test_ems_requires_martingale_unit_weight_ensemble(nig_params, nig_dist):
    p_ens = simulate(_spec(nig_params, nig_dist, measure="p"))
    with pytest.raises(InvalidMeasureError):
        apply_ems(p_ens)
    q_ens = simulate(_spec(nig_params, nig_dist))
    q_ens.rn_weights = q_ens.rn_weights * 1.01
    with pytest.raises(InvalidMeasureError):
        apply_ems(q_ens)


def test_ems_reduces_pricing_variance_across_seeds(nig_params, nig_dist):
    """Raw vs corrected ATM call estimates across 50 seeds: the corrected
    estimator's dispersion must be strictly smaller."""
    pay = call_payoff(100.0)
    raw, ems = [], []
    for seed in range(50):
        ens = simulate(_spec(nig_params, nig_dist, n_paths=800, horizon=20, seed=seed))
        disc = math.exp(-ens.r * 20)
        raw.append(conditional_expectation(ens, pay, disc)[0])
        ems.append(conditional_expectation(apply_ems(ens), pay, disc)[0])
    assert np.std(ems) < np.std(raw)


# ---------------------------------------------------------------------------
# conditional expectation
# ---------------------------------------------------------------------------


def test_conditional_expectation_constant_payoff(nig_params, nig_dist):
    ens = simulate(_spec(nig_params, nig_dist, n_paths=500, horizon=5))
    disc = math.exp(-ens.r * 5)
    est, se = conditional_expectation(ens, lambda st: np.ones_like(st), disc)
    assert _ulp_gap(est, disc) <= 4.0
    assert se <= 1e-12 * disc


def test_conditional_expectation_of_terminal_spot_on_ems(nig_params, nig_dist):
    ens = apply_ems(simulate(_spec(nig_params, nig_dist, n_paths=4000, horizon=12)))
    est, _ = conditional_expectation(ens, lambda st: st, math.exp(-ens.r * 12))
    assert est == pytest.approx(100.0, abs=1e-9)


def test_conditional_expectation_accepts_arrays(nig_params, nig_dist):
    ens = simulate(_spec(nig_params, nig_dist, n_paths=300, horizon=4))
    vals = np.maximum(ens.terminal - 95.0, 0.0)
    a = conditional_expectation(ens, vals, 1.0)
    b = conditional_expectation(ens, call_payoff(95.0), 1.0)
    assert a == b


def test_se_shrinks_like_sqrt_n(nig_params, nig_dist):
    """Doubling the path count shrinks the reported standard error by a
    factor in [0.6, 0.82] on average over 20 replications."""
    pay = call_payoff(102.0)
    ratios = []
    for seed in range(20):
        e1 = simulate(_spec(nig_params, nig_dist, n_paths=2000, horizon=10, seed=100 + seed))
        e2 = simulate(_spec(nig_params, nig_dist, n_paths=4000, horizon=10, seed=200 + seed))
        disc = math.exp(-e1.r * 10)
        s1 = conditional_expectation(e1, pay, disc)[1]
        s2 = conditional_expectation(e2, pay, disc)[1]
        ratios.append(s2 / s1)
    assert 0.6 <= np.mean(ratios) <= 0.82


# ---------------------------------------------------------------------------
# kernel-aware construction
# ---------------------------------------------------------------------------


def test_ensemble_under_kernel_egp(nig_params, nig_dist):
    ens = ensemble_under_kernel(
        nig_params, nig_dist, "egp", s0=100.0, n_paths=3000, horizon=10, seed=77, var1=1.4e-4
    )
    assert ens.measure == "q_egp"
    assert ens.ems_applied
    assert np.all(ens.rn_weights == 1.0)


def test_ensemble_under_kernel_gaussian_esscher_is_egp(gauss_params):
    a = ensemble_under_kernel(
        gauss_params, Gaussian(), "esscher", s0=100.0, n_paths=2000, horizon=8, seed=5, var1=1e-4
    )
    b = ensemble_under_kernel(
        gauss_params, Gaussian(), "egp", s0=100.0, n_paths=2000, horizon=8, seed=5, var1=1e-4
    )
    np.testing.assert_array_equal(a.prices, b.prices)


def test_ensemble_under_kernel_nig_esscher_reweights_p(nig_params, nig_dist):
    ens = ensemble_under_kernel(
        nig_params, nig_dist, "esscher", s0=100.0, n_paths=2000, horizon=6, seed=6, var1=1.2e-4
    )
    assert ens.measure == "p"
    assert not np.all(ens.rn_weights == 1.0)
    assert np.all(ens.rn_weights > 0)
    sig = np.sqrt(ens.variances[:, :6])
    np.testing.assert_allclose(
        ens.rn_weights,
        esscher_rn_derivative(nig_params, nig_dist, sig, ens.innovations),
        rtol=1e-12,
    )


def test_p_ensemble_with_esscher_weights_prices_forward(nig_params, nig_dist):
    ens = ensemble_under_kernel(
        nig_params, nig_dist, "esscher", s0=100.0, n_paths=100_000, horizon=10, seed=17, var1=1e-4
    )
    w = ens.weights()
    x = np.exp(-ens.r * 10) * ens.terminal
    est = float(np.dot(w, x))
    se = math.sqrt(float(np.dot(w**2, (x - est) ** 2)))
    assert abs(est - 100.0) < 4 * se


# ---------------------------------------------------------------------------
# binary dump
# ---------------------------------------------------------------------------


def test_ensemble_dump_roundtrip(tmp_path, nig_params, nig_dist):
    ens = simulate(_spec(nig_params, nig_dist, n_paths=64, horizon=9, seed=11))
    path = tmp_path / "ens.bin"
    save_ensemble(ens, path)
    back = load_ensemble(path)
    np.testing.assert_array_equal(back.prices, ens.prices)
    np.testing.assert_array_equal(back.variances, ens.variances)
    np.testing.assert_array_equal(back.innovations, ens.innovations)
    np.testing.assert_array_equal(back.rn_weights, ens.rn_weights)
    assert back.measure == ens.measure
    assert back.params == ens.params
    assert back.dist.kind == ens.dist.kind
    assert back.ems_applied == ens.ems_applied


def test_ensemble_dump_rejects_foreign_file(tmp_path):
    path = tmp_path / "junk.bin"
    path.write_bytes(b"NOPE" + b"\x00" * 64)
    with pytest.raises(ParamError):
        load_ensemble(path)
