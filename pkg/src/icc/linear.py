"""Linear ICC estimator with rank-reduced proxy projection.

All estimators are computed in instrument coordinates: with ``Z = Q R`` the
projected regressors ``P_Z X`` are ``Q (Q' X)``, so every projection works on
``d_Z``-dimensional coordinates and no ``n x n`` matrix is ever formed. The
population version uses the same core on Cholesky-whitened moments.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, RelevanceError, SingularityError

REL_GAP = 1e-3
RCOND = 1e-10
RELEVANCE_TOL = 1e-8
STRUCTURAL = "structural"
PROJECTED = "projected"


def _2d(x):
    x = np.asarray(x, dtype=float)
    return x[:, None] if x.ndim == 1 else x


@dataclass(frozen=True)
class OLSResult:
    coef: np.ndarray
    cov: np.ndarray
    residuals: np.ndarray

    @property
    def se(self):
        return np.sqrt(np.diag(self.cov))


@dataclass(frozen=True)
class LinearICCFit:
    """Fitted linear ICC model.

    ``delta_hat`` holds the proxy slope in W coordinates; ``cov`` is the
    robust covariance of (beta_hat, slope on the rank-r projected proxies).
    """

    beta_hat: np.ndarray
    delta_hat: np.ndarray
    cov: np.ndarray | None
    rank_used: int
    residuals: np.ndarray | None
    singular_values: np.ndarray
    delta_reduced: np.ndarray
    directions: np.ndarray

    @property
    def se(self):
        d_a = len(self.beta_hat)
        return np.sqrt(np.diag(self.cov)[:d_a])


def _robust(X, e):
    XtX = X.T @ X
    try:
        bread = np.linalg.inv(XtX)
    except np.linalg.LinAlgError:
        raise SingularityError("regressor cross-product is singular") from None
    meat = (X * (e ** 2)[:, None]).T @ X
    cov = bread @ meat @ bread
    return (cov + cov.T) / 2


def _check_full_rank(X, what):
    s = np.linalg.svd(X, compute_uv=False)
    if s.size == 0 or s[-1] <= RCOND * max(s[0], 1e-300) * max(X.shape):
        raise SingularityError(f"{what} is rank deficient")


def fit_ols(Y, X) -> OLSResult:
    """OLS with HC0 covariance. ``X`` is used as given (add a constant yourself)."""
    Y = np.asarray(Y, dtype=float).reshape(-1)
    X = _2d(X)
    _check_full_rank(X, "regressor matrix")
    coef, *_ = np.linalg.lstsq(X, Y, rcond=None)
    e = Y - X @ coef
    return OLSResult(coef, _robust(X, e), e)


def _instrument_basis(Z):
    Z = _2d(Z)
    _check_full_rank(Z, "instrument matrix")
    Q, _ = np.linalg.qr(Z)
    return Q


def fit_2sls(Y, A, Z) -> OLSResult:
    """Two-stage least squares with HC0 covariance on structural residuals."""
    Y = np.asarray(Y, dtype=float).reshape(-1)
    A = _2d(A)
    Z = _2d(Z)
    if Z.shape[1] < A.shape[1]:
        raise DimensionError("2SLS needs at least as many instruments as treatments")
    Q = _instrument_basis(Z)
    A_hat = Q @ (Q.T @ A)
    _check_full_rank(A_hat, "projected treatment matrix")
    coef = np.linalg.solve(A_hat.T @ A_hat, A_hat.T @ Y)
    e = Y - A @ coef
    return OLSResult(coef, _robust(A_hat, e), e)


def select_rank(singular_values, declared_dU=None, rel_gap=REL_GAP, limit=None):
    """Number of projected-proxy directions to keep.

    A declared confounder dimension wins; otherwise singular values above
    ``rel_gap * max`` are counted. ``limit`` caps the result (and the
    declared value must not exceed it).
    """
    s = np.asarray(singular_values, dtype=float)
    if np.any(np.diff(s) > 0):
        raise ValueError("singular values must be sorted in descending order")
    cap = len(s) if limit is None else min(limit, len(s))
    if declared_dU is not None:
        if declared_dU < 0 or declared_dU > cap:
            raise DimensionError(f"declared d_U={declared_dU} exceeds the usable proxy rank {cap}")
        return int(declared_dU)
    if s.size == 0 or s[0] <= 0:
        return 0
    return int(min((s > rel_gap * s[0]).sum(), cap))


def _icc_core(a, w, y, rank):
    """ICC solve in instrument coordinates (each argument has d_Z rows)."""
    d_z, d_a = a.shape
    Uw, s, Vt = np.linalg.svd(w, full_matrices=False)
    declared = None if rank in (None, "auto") else int(rank)
    r = select_rank(s, declared, limit=min(w.shape[1], d_z - d_a))
    Ur = Uw[:, :r]
    Ma = a - Ur @ (Ur.T @ a)
    G = Ma.T @ Ma
    sa = np.linalg.svd(a, compute_uv=False)
    sg = np.linalg.svd(Ma, compute_uv=False)
    if sg.size == 0 or sg[-1] <= RELEVANCE_TOL * max(sa[0], 1e-300):
        raise RelevanceError("instruments not relevant conditional on projected proxies")
    beta = np.linalg.solve(G, Ma.T @ y)
    resid = y - a @ beta
    delta_r = (Ur.T @ resid) / s[:r] if r else np.zeros(0)
    V_r = Vt[:r].T
    return beta, delta_r, V_r, r, s


def fit_icc(Y, A, Z, W, rank="auto", residual=STRUCTURAL) -> LinearICCFit:
    """Linear ICC estimator.

    ``rank`` is the number of projected-proxy directions (an int, typically
    the declared d_U) or ``"auto"`` for the singular-value gap rule.
    """
    Y = np.asarray(Y, dtype=float).reshape(-1)
    A, Z, W = _2d(A), _2d(Z), _2d(W)
    n, d_z = Z.shape
    d_a = A.shape[1]
    if not n > d_z:
        raise DimensionError("need more observations than instruments")
    if d_z < d_a:
        raise DimensionError("need at least as many instruments as treatments")
    Q = _instrument_basis(Z)
    beta, delta_r, V_r, r, s = _icc_core(Q.T @ A, Q.T @ W, Q.T @ Y, rank)
    if d_z < d_a + r:
        raise DimensionError(f"d_Z={d_z} < d_A + r = {d_a + r}")
    fit = LinearICCFit(beta, V_r @ delta_r, None, r, None, s, delta_r, V_r)
    cov, e = _sandwich(fit, Y, A, Q, W, residual)
    return LinearICCFit(beta, fit.delta_hat, cov, r, e, s, delta_r, V_r)


def _sandwich(fit, Y, A, Q, W, residual):
    A_hat = Q @ (Q.T @ A)
    W_hat = Q @ (Q.T @ W)
    T = W_hat @ fit.directions
    X = np.hstack([A_hat, T])
    if residual == STRUCTURAL:
        e = Y - A @ fit.beta_hat - W @ fit.delta_hat
    elif residual == PROJECTED:
        e = Y - A @ fit.beta_hat - W_hat @ fit.delta_hat
    else:
        raise ValueError(f"unknown residual form {residual!r}")
    return _robust(X, e), e


def sandwich_cov(fit: LinearICCFit, Y, A, Z, W, residual=STRUCTURAL):
    """Heteroskedasticity-robust covariance of (beta_hat, reduced proxy slope).

    ``residual="structural"`` uses ``Y - A b - W d``; ``"projected"`` uses
    ``Y - A b - P_Z W d``.
    """
    Q = _instrument_basis(Z)
    cov, _ = _sandwich(fit, np.asarray(Y, dtype=float).reshape(-1), _2d(A), Q, _2d(W), residual)
    return cov


def fit_icc_two_stage(Y, A, Z, W, rank="auto") -> OLSResult:
    """Explicit second stage: OLS of Y on (P_Z A, rank-r projected proxies)."""
    A, Z, W = _2d(A), _2d(Z), _2d(W)
    Q = _instrument_basis(Z)
    A_hat = Q @ (Q.T @ A)
    W_hat = Q @ (Q.T @ W)
    U, s, Vt = np.linalg.svd(W_hat, full_matrices=False)
    r = select_rank(s, None if rank in (None, "auto") else int(rank), limit=min(W.shape[1], Z.shape[1] - A.shape[1]))
    return fit_ols(Y, np.hstack([A_hat, W_hat @ Vt[:r].T]))


def fit_icc_control_form(Y, A, Z, W, rank="auto", residual=STRUCTURAL) -> LinearICCFit:
    """OLS of Y on (A, rank-r projected proxies, first-stage residual A - P_Z A)."""
    Y = np.asarray(Y, dtype=float).reshape(-1)
    A, Z, W = _2d(A), _2d(Z), _2d(W)
    d_a = A.shape[1]
    Q = _instrument_basis(Z)
    W_hat = Q @ (Q.T @ W)
    U, s, Vt = np.linalg.svd(W_hat, full_matrices=False)
    r = select_rank(s, None if rank in (None, "auto") else int(rank), limit=min(W.shape[1], Z.shape[1] - d_a))
    V_r = Vt[:r].T
    T = W_hat @ V_r
    v_hat = A - Q @ (Q.T @ A)
    X = np.hstack([A, T, v_hat])
    sx = np.linalg.svd(np.hstack([Q @ (Q.T @ A), T]), compute_uv=False)
    if sx[-1] <= RELEVANCE_TOL * sx[0]:
        raise RelevanceError("instruments not relevant conditional on projected proxies")
    coef, *_ = np.linalg.lstsq(X, Y, rcond=None)
    beta = coef[:d_a]
    delta_r = coef[d_a:d_a + r]
    fit = LinearICCFit(beta, V_r @ delta_r, None, r, None, s, delta_r, V_r)
    cov, e = _sandwich(fit, Y, A, Q, W, residual)
    return LinearICCFit(beta, fit.delta_hat, cov, r, e, s, delta_r, V_r)


# --------------------------------------------------------------------------
# population versions


def _whitened(cov, z="z"):
    L = np.linalg.cholesky(cov[(z, z)])
    return lambda name: np.linalg.solve(L, cov[(z, name)])


def fit_icc_moments(cov, rank="auto"):
    """ICC estimand from second moments ``cov[(x, y)]`` over blocks y, a, z, w.

    Returns ``(beta, delta_in_W_coordinates, rank_used)``.
    """
    coord = _whitened(cov)
    beta, delta_r, V_r, r, _ = _icc_core(coord("a"), coord("w"), coord("y").reshape(-1), rank)
    return beta, V_r @ delta_r, r


def fit_2sls_moments(cov):
    coord = _whitened(cov)
    a, y = coord("a"), coord("y").reshape(-1)
    return np.linalg.solve(a.T @ a, a.T @ y)
