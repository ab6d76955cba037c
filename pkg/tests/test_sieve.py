import warnings

import numpy as np
import pytest

from icc.bridge import fit_outcome_bridge
from icc.data import ContrastSpec, ate_contrast
from icc.errors import OverparameterizationError, SpecError
from icc.sieve import (INDICATOR, PIECEWISE, BasisSpec, build_features, effect_from_sieve, fit_sieve_bridge,
                       linear_sieve_moments, solve_moments)
from icc.synth import LinearDGPSpec, default_linear_spec, draw_linear, linear_population_cov, random_population

ATE = ate_contrast(1, 0)
DEG1 = BasisSpec()


def _aw_features():
    # a map on (A, W) whose recorded treatment range covers the contrast
    return build_features(np.array([[0.0, 0.0], [1.0, 0.0]]), DEG1, ("A", "W"), check_size=False)


def test_linear_features():
    f = build_features(np.array([[1.0, 2.0], [3.0, 4.0], [5.0, 7.0]]), DEG1, ("A", "W"))
    assert f.names == ("1", "A", "W")
    np.testing.assert_array_equal(f.matrix, [[1, 1, 2], [1, 3, 4], [1, 5, 7]])


def test_quadratic_with_interaction():
    X = np.random.default_rng(0).normal(size=(10, 2))
    f = build_features(X, BasisSpec(degree=2, interaction=2), ("A", "W"))
    assert set(f.names) == {"1", "A", "W", "A^2", "A*W", "W^2"}
    np.testing.assert_allclose(f.matrix[:, f.names.index("A*W")], X[:, 0] * X[:, 1])


def test_knots_outside_range():
    X = np.linspace(0, 1, 20)
    with pytest.warns(UserWarning):
        f = build_features(X, BasisSpec(family=PIECEWISE, knots=(0.5, 3.0)), ("A",))
    assert f.names == ("1", "A", "(A-0.5)+")
    assert any("outside data range" in d for d in f.diagnostics)


def test_overparameterization():
    X = np.random.default_rng(0).normal(size=(4, 3))
    with pytest.raises(OverparameterizationError):
        build_features(X, BasisSpec(degree=2, interaction=3))
    assert build_features(X, BasisSpec(degree=2, interaction=3, ridge=0.1)).matrix.shape[1] == 10


def test_basis_validation():
    with pytest.raises(SpecError):
        BasisSpec(family="wavelet")
    with pytest.raises(SpecError):
        BasisSpec(ridge=-1.0)


def _no_confounding():
    return LinearDGPSpec(beta=[1.0], gamma_Y=[0.0], gamma_A=[[0.0]], gamma_W=[[0.0]], zeta=[0.0],
                         pi_fs=[[1.0], [0.5]], gamma_tilde_Z=[[0.0], [0.0]])


def test_exogenous_truth_population():
    G, Gamma = linear_sieve_moments(linear_population_cov(_no_confounding()))
    theta, resid, *_ = solve_moments(G, Gamma)
    np.testing.assert_allclose(theta, [0.0, 1.0, 0.0], atol=1e-12)
    assert resid < 1e-12


def test_exogenous_truth_sample():
    d = draw_linear(_no_confounding(), 20_000, 3)
    fit = fit_sieve_bridge(d["y"][:, 0], d["a"], d["w"], d["z"], DEG1, DEG1)
    # W is irrelevant here, so only the intercept and the A slope are pinned down
    np.testing.assert_allclose(fit.theta[:2], [0.0, 1.0], atol=0.05)
    assert effect_from_sieve(fit.theta, fit.features, d["w"], ATE).J_hat == pytest.approx(1.0, abs=0.05)


def test_seed77_population_effect_exact():
    G, Gamma = linear_sieve_moments(linear_population_cov(default_linear_spec()))
    theta, resid, *_ = solve_moments(G, Gamma)
    assert resid < 1e-12
    J = effect_from_sieve(theta, _aw_features(), np.zeros((1, 1)), ATE).J_hat
    assert J == pytest.approx(1.0, abs=1e-12)


def test_omitting_proxy_leaves_moment_residual():
    cov = linear_population_cov(default_linear_spec())
    G, Gamma = linear_sieve_moments(cov)
    theta, resid, *_ = solve_moments(G[:, :2], Gamma)
    assert resid > 0.05


def test_effect_trivial_cases():
    f = _aw_features()
    W = np.random.default_rng(0).normal(size=(50, 1))
    assert effect_from_sieve([0.0, 1.0, 0.0], f, W, ATE).J_hat == pytest.approx(1.0, abs=1e-15)
    zero = ContrastSpec("discrete_weights", (0.0, 1.0), (0.0, 0.0))
    assert effect_from_sieve([0.3, 1.0, 2.0], f, W, zero).J_hat == 0.0
    rep = effect_from_sieve([0.0, 1.0, 0.0], f, W, ate_contrast(5, 0))
    assert "extrapolation" in dict(rep.diagnostics)


def test_orthogonal_feature_leaves_effect_unchanged():
    d = draw_linear(default_linear_spec(), 100_000, 8)
    Y, A, Z, W = d["y"][:, 0], d["a"], d["z"], d["w"]
    C = np.column_stack([np.ones(len(Y)), Z])
    noise = np.random.default_rng(1).normal(size=len(Y))
    # exactly orthogonal to every instrument feature in this sample
    N = noise - C @ np.linalg.lstsq(C, noise, rcond=None)[0]
    base = fit_sieve_bridge(Y, A, W, Z, DEG1, DEG1)
    extra = fit_sieve_bridge(Y, A, np.column_stack([W, N]), Z, DEG1, DEG1)
    assert extra.nullspace_dim == base.nullspace_dim + 1
    J0 = effect_from_sieve(base.theta, base.features, W, ATE).J_hat
    J1 = effect_from_sieve(extra.theta, extra.features, np.column_stack([W, N]), ATE).J_hat
    assert abs(J1 - J0) < 1e-6
    # any move along the new null direction keeps the effect
    moved = extra.theta + 5.0 * np.eye(len(extra.theta))[-1]
    J2 = effect_from_sieve(moved, extra.features, np.column_stack([W, N]), ATE).J_hat
    assert abs(J2 - J0) < 1e-6


def test_indicator_bases_match_discrete_solver():
    pop = random_population((2, 4, 2, 3), 7)
    f = pop.frame()
    sol, _ = fit_outcome_bridge(f)
    levels = tuple(np.atleast_1d(l) for l in sol.labels)
    fit = fit_sieve_bridge(f["y"], f["a"], f["w"], f["z"], BasisSpec(family=INDICATOR, levels=levels),
                           BasisSpec(family=INDICATOR), weights=f.w())
    np.testing.assert_allclose(fit.theta, sol.coeffs, atol=1e-10)


def test_ridge_continuity():
    G, Gamma = linear_sieve_moments(linear_population_cov(default_linear_spec()))
    G = np.column_stack([G, G[:, -1]])  # duplicated proxy column: one null direction
    theta0, _, _, null = solve_moments(G, Gamma)
    assert null == 1
    gaps = [np.linalg.norm(solve_moments(G, Gamma, ridge=lam)[0] - theta0) for lam in (1e-2, 1e-4, 1e-6)]
    assert gaps[0] > gaps[1] > gaps[2]
    assert gaps[2] < 1e-5


def test_underdetermined_diagnostic():
    d = draw_linear(default_linear_spec(), 500, 2)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        fit = fit_sieve_bridge(d["y"][:, 0], d["a"], d["w"], d["z"][:, :1], DEG1, DEG1)
    assert fit.nullspace_dim >= 1
    assert any("underdetermined" in m for m in fit.diagnostics)
