import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from icc.bridge import BridgeTable, fit_h_bridges, fit_outcome_bridge, fit_q_bridges, perturb_nullspace
from icc.data import ate_contrast
from icc.errors import CellSupportError, CommonSupportError, DomainError, IdentificationError
from icc.estimators import (EstimateReport, PlugIn, bias_identity_check, phi_dr, phi_ipw, phi_reg, tilde_phi_dr,
                            tilde_phi_ipw, tilde_phi_reg)
from icc.mc import DiscreteDGP, LinearDGP, run_mc, summarize
from icc.oracle import binned_frame, tilde_estimates
from icc.synth import default_linear_spec, random_first_stage_population, random_population, true_J

ATE = ate_contrast(1, 0)


def test_report_rejects_negative_se():
    with pytest.raises(ValueError):
        EstimateReport(0.0, "x", 1, se=-1.0)


def test_constant_outcome_ipw_zero():
    rng = np.random.default_rng(0)
    n = 500
    V, U = rng.integers(0, 3, n), rng.integers(0, 2, n)
    A = rng.integers(0, 2, n)
    assert phi_ipw(np.full(n, 4.2), A, V, U, ATE).J_hat == pytest.approx(0.0, abs=1e-12)


def test_randomized_ipw_is_difference_of_means():
    rng = np.random.default_rng(1)
    A = rng.integers(0, 2, 1000)
    Y = 2.0 * A + rng.normal(size=1000)
    diff = Y[A == 1].mean() - Y[A == 0].mean()
    assert phi_ipw(Y, A, None, None, ATE).J_hat == pytest.approx(diff, abs=1e-12)


def test_zero_propensity():
    with pytest.raises(CommonSupportError):
        phi_ipw(np.array([1.0, 2.0, 3.0, 4.0]), np.array([1, 1, 0, 0]), np.array([0, 0, 1, 1]), None, ATE)


@pytest.fixture(scope="module")
def fs11():
    return random_first_stage_population(11)


@pytest.fixture(scope="module")
def fs11_binned(fs11):
    f = fs11.frame()
    fb = binned_frame(f, f["v"], fs11.grid)
    return fb, fit_h_bridges(fb, [0.0, 1.0], w=("w0",)), fit_q_bridges(fb, [0.0, 1.0], w=("w0",))


def test_oracle_estimators_agree(fs11):
    f = fs11.frame()
    J = fs11.true_J(ATE)
    for phi in (phi_ipw, phi_reg, phi_dr):
        assert phi(f["y"], f["a"], f["v"], f["u"], ATE, f.w()).J_hat == pytest.approx(J, abs=1e-10)


def test_tilde_estimators_oracle_bins(fs11, fs11_binned):
    fb, h, q = fs11_binned
    assert h.valid and q.valid
    J = fs11.true_J(ATE)
    for est in tilde_estimates(fb, h, q, ATE):
        assert est == pytest.approx(J, abs=1e-8)


def test_tilde_estimators_degenerate_u():
    fs = random_first_stage_population(3, d_u=1, grid=7)
    f = fs.frame()
    fb = binned_frame(f, f["v"], fs.grid)
    w = fb.w()
    h_keys, h_vals, q_keys, q_vals = [], [], [], []
    for a in (0.0, 1.0):
        for b in np.unique(fb["b"]):
            in_bin = fb["b"] == b
            arm = in_bin & (fb["a"] == a)
            ey = float(w[arm] @ fb["y"][arm] / w[arm].sum())
            f_a = w[arm].sum() / w[in_bin].sum()
            h_keys += [(a, b, x) for x in np.unique(fb["w0"])]
            h_vals += [ey] * len(np.unique(fb["w0"]))
            q_keys += [(a, b, x) for x in np.unique(fb["z"])]
            q_vals += [1.0 / f_a] * len(np.unique(fb["z"]))
    h = PlugIn(np.array(h_keys), np.array(h_vals), "h")
    q = PlugIn(np.array(q_keys), np.array(q_vals), "q")
    cf_only = phi_reg(fb["y"], fb["a"], fb["b"], None, ATE, w).J_hat
    for est in tilde_estimates(fb, h, q, ATE):
        assert est == pytest.approx(cf_only, abs=1e-10)


def test_outcome_model_route_single_bin():
    pop = random_population((2, 4, 2, 3), 7)
    f = pop.frame()
    sol, _ = fit_outcome_bridge(f)
    keys = np.array([(a, 0.0, w) for a, w in sol.labels])
    h = PlugIn(keys, sol.coeffs, "h")
    assert tilde_phi_reg(None, f["w"], h, ATE, f.w()).J_hat == pytest.approx(true_J(pop, ATE), abs=1e-10)


def test_invalid_and_missing_bridges(fs11_binned):
    fb, h, q = fs11_binned
    bad_h = BridgeTable({k: s.with_tol(-1.0) for k, s in h.solutions.items()}, "h")
    bad_q = BridgeTable({k: s.with_tol(-1.0) for k, s in q.solutions.items()}, "q")
    with pytest.raises(IdentificationError):
        tilde_phi_reg(fb["b"], fb["w0"], bad_h, ATE)
    with pytest.raises(IdentificationError):
        tilde_phi_ipw(fb["y"], fb["a"], fb["b"], fb["z"], bad_q, ATE)
    with pytest.raises(IdentificationError):
        tilde_phi_dr(fb["y"], fb["a"], fb["b"], fb["z"], fb["w0"], bad_h, bad_q, ATE)
    only = PlugIn.from_table(BridgeTable({k: s for k, s in h.solutions.items() if k[1] != 0.0}, "h"))
    with pytest.raises(CellSupportError):
        tilde_phi_reg(fb["b"], fb["w0"], only, ATE)


@pytest.mark.parametrize("broken", ["h", "q"])
def test_double_robustness(fs11, fs11_binned, broken):
    fb, h, q = fs11_binned
    J = fs11.true_J(ATE)
    w = fb.w()
    for seed in range(5):
        hh = PlugIn.from_table(h).randomized(seed, 3.0) if broken == "h" else h
        qq = PlugIn.from_table(q).randomized(seed, 3.0) if broken == "q" else q
        est = tilde_phi_dr(fb["y"], fb["a"], fb["b"], fb["z"], fb["w0"], hh, qq, ATE, w).J_hat
        assert est == pytest.approx(J, abs=1e-8)


def _cols(fb):
    return {"y": fb["y"], "a": fb["a"], "b": fb["b"], "z": fb["z"], "w": fb["w0"]}


def test_bias_identity_valid_plugins(fs11, fs11_binned):
    fb, h, q = fs11_binned
    J = fs11.true_J(ATE)
    for kind, plug, valid in (("ipw", q, h), ("reg", h, q)):
        lhs, rhs = bias_identity_check(kind, plug, valid, _cols(fb), ATE, J, fb.w())
        assert abs(lhs) < 1e-10 and abs(rhs) < 1e-10


def test_bias_identity_perturbed_q(fs11, fs11_binned):
    fb, h, q = fs11_binned
    J = fs11.true_J(ATE)
    lhs, rhs = bias_identity_check("ipw", PlugIn.from_table(q).perturbed(4, 0.5), h, _cols(fb), ATE, J, fb.w())
    assert abs(lhs - rhs) < 1e-10
    assert abs(lhs) > 1e-4


@given(st.integers(0, 10_000))
@settings(max_examples=15, deadline=None)
def test_bias_identity_random_plugins(seed):
    fs = random_first_stage_population(11)
    f = fs.frame()
    fb = binned_frame(f, f["v"], fs.grid)
    h = fit_h_bridges(fb, [0.0, 1.0], w=("w0",))
    q = fit_q_bridges(fb, [0.0, 1.0], w=("w0",))
    J = fs.true_J(ATE)
    for kind, plug, valid in (("ipw", q, h), ("reg", h, q)):
        lhs, rhs = bias_identity_check(kind, PlugIn.from_table(plug).randomized(seed), valid, _cols(fb), ATE, J,
                                       fb.w())
        assert abs(lhs - rhs) < 1e-10


def test_bias_identity_nullspace_shift(fs11, fs11_binned):
    fb, h, q = fs11_binned
    J = fs11.true_J(ATE)
    shifted = BridgeTable({k: perturb_nullspace(s, 1.0, 2) if s.nullspace_dim else s
                           for k, s in h.solutions.items()}, "h")
    lhs, rhs = bias_identity_check("reg", PlugIn.from_table(shifted), q, _cols(fb), ATE, J, fb.w())
    assert abs(lhs) < 1e-8 and abs(rhs) < 1e-8


def test_bias_identity_unknown_kind(fs11_binned):
    fb, h, q = fs11_binned
    with pytest.raises(DomainError):
        bias_identity_check("nope", h, q, _cols(fb), ATE, 0.0, fb.w())


# --------------------------------------------------------------------------
# Monte Carlo harness


def test_mc_single_replication():
    tab = run_mc(LinearDGP(default_linear_spec()), ["icc"], R=1, n=300, seed=5)
    row = tab.row("icc")
    assert row.sd == 0.0 and row.R == 1
    assert row.bias == pytest.approx(tab.estimates["icc"][0][0] - 1.0, abs=1e-15)


def test_mc_moment_consistency_and_determinism():
    dgp = LinearDGP(default_linear_spec())
    a = run_mc(dgp, ["ols", "2sls", "icc"], R=25, n=400, seed=9)
    b = run_mc(dgp, ["ols", "2sls", "icc"], R=25, n=400, seed=9)
    assert a.to_csv() == b.to_csv() and a.seeds_csv() == b.seeds_csv()
    assert a.seeds == tuple(range(9, 34))
    for row in a.rows:
        est = np.array([e for e, _ in a.estimates[row.estimator]])
        assert row.rmse ** 2 == pytest.approx(row.bias ** 2 + row.sd ** 2, abs=1e-10)
        assert row.bias == pytest.approx(est.mean() - 1.0, abs=1e-12)


def test_mc_parallel_matches_serial():
    dgp = LinearDGP(default_linear_spec())
    a = run_mc(dgp, ["icc"], R=8, n=200, seed=1)
    b = run_mc(dgp, ["icc"], R=8, n=200, seed=1, workers=2)
    assert a.to_csv() == b.to_csv()


def test_mc_failures_counted():
    pop = random_population((3, 7, 2, 1), 7)
    tab = run_mc(DiscreteDGP(pop, solve_tol=1e-6), ["discrete"], R=3, n=500, seed=0)
    row = tab.row("discrete")
    assert row.failures == 3 and row.R == 0
    assert "NA" in tab.to_csv()


def test_mc_discrete_coverage_absent():
    tab = run_mc(DiscreteDGP(random_population((1, 3, 2, 2), 7)), ["discrete"], R=3, n=2000, seed=0)
    assert np.isnan(tab.row("discrete").coverage)


def test_mc_argument_checks():
    dgp = LinearDGP(default_linear_spec())
    with pytest.raises(DomainError):
        run_mc(dgp, ["icc"], R=0, n=100, seed=0)
    with pytest.raises(DomainError):
        run_mc(dgp, ["icc"], R=2, n=5, seed=0)
    with pytest.raises(DomainError):
        run_mc(dgp, ["bogus"], R=2, n=100, seed=0)


@given(st.lists(st.floats(-10, 10), min_size=1, max_size=50), st.floats(-5, 5))
@settings(max_examples=50, deadline=None)
def test_summary_rmse_decomposition(draws, truth):
    row = summarize("x", [(d, None) for d in draws], truth, 10)
    assert row.rmse ** 2 == pytest.approx(row.bias ** 2 + row.sd ** 2, abs=1e-10)
