"""Sieve solver for the observable outcome bridge ``E[Y - h(A, W) | Z] = 0``.

``h`` is expanded in a finite basis B(A, W) and the conditional moment is
replaced by unconditional moments against instrument features C(Z):
``E[C B'] theta = E[C Y]``. The system is solved by min-norm least squares
(or ridge), mirroring the discrete bridge solvers.
"""
from __future__ import annotations

import itertools
import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

from .data import ContrastSpec
from .errors import OverparameterizationError, SpecError
from .estimators import EstimateReport
from .tables import RCOND, TIE_DECIMALS, as_weights, min_norm_solve

log = logging.getLogger(__name__)

POLYNOMIAL = "polynomial"
PIECEWISE = "piecewise_linear"
INDICATOR = "indicator"


@dataclass(frozen=True)
class BasisSpec:
    """Basis description.

    ``degree`` and ``interaction`` apply to polynomials: monomials of total
    degree <= ``degree`` involving at most ``interaction`` distinct variables.
    ``knots`` lists hinge locations per variable for piecewise-linear bases.
    ``levels`` optionally fixes the joint cells of an indicator basis.
    """

    family: str = POLYNOMIAL
    degree: int = 1
    interaction: int = 1
    knots: tuple = ()
    levels: tuple | None = None
    ridge: float = 0.0

    def __post_init__(self):
        if self.family not in (POLYNOMIAL, PIECEWISE, INDICATOR):
            raise SpecError(f"unknown basis family {self.family!r}")
        if self.degree < 0 or self.interaction < 1:
            raise SpecError("degree must be >= 0 and interaction >= 1")
        if self.ridge < 0:
            raise SpecError("ridge must be nonnegative")


@dataclass(frozen=True)
class Features:
    matrix: np.ndarray
    names: tuple
    spec: BasisSpec
    plan: tuple
    ranges: np.ndarray
    diagnostics: tuple = ()

    def transform(self, values):
        return _evaluate(np.atleast_2d(_as_matrix(values)), self.plan)


def _as_matrix(values):
    if isinstance(values, (list, tuple)):
        return np.column_stack([np.asarray(v, dtype=float) for v in values])
    x = np.asarray(values, dtype=float)
    return x[:, None] if x.ndim == 1 else x


def _evaluate(X, plan):
    cols = []
    for term in plan:
        kind = term[0]
        if kind == "const":
            cols.append(np.ones(len(X)))
        elif kind == "mono":
            col = np.ones(len(X))
            for j, p in term[1]:
                col = col * X[:, j] ** p
            cols.append(col)
        elif kind == "hinge":
            _, j, k = term
            cols.append(np.maximum(X[:, j] - k, 0.0))
        elif kind == "cell":
            key = np.asarray(term[1])
            cols.append(np.all(np.round(X, TIE_DECIMALS) == key, axis=1).astype(float))
    return np.column_stack(cols) if cols else np.empty((len(X), 0))


def _poly_plan(p, degree, interaction):
    plan = [("const",)]
    for total in range(1, degree + 1):
        for combo in itertools.combinations_with_replacement(range(p), total):
            powers = tuple(sorted({j: combo.count(j) for j in combo}.items()))
            if len(powers) <= interaction:
                plan.append(("mono", powers))
    return plan


def _name(term, names):
    if term[0] == "const":
        return "1"
    if term[0] == "mono":
        return "*".join(names[j] if p == 1 else f"{names[j]}^{p}" for j, p in term[1])
    if term[0] == "hinge":
        return f"({names[term[1]]}-{term[2]:g})+"
    return "1{" + ",".join(f"{n}={v:g}" for n, v in zip(names, term[1])) + "}"


def build_features(values, spec: BasisSpec, names=None, check_size=True) -> Features:
    """Deterministic feature map with an intercept (spanned by the cells for indicators).

    ``check_size=False`` skips the feature-count check, which is useful when
    ``values`` only serve to fix the map (e.g. population-moment fits).
    """
    X = _as_matrix(values)
    n, p = X.shape
    names = tuple(names) if names is not None else tuple(f"x{j + 1}" for j in range(p))
    diagnostics = []
    if spec.family == POLYNOMIAL:
        plan = _poly_plan(p, spec.degree, spec.interaction)
    elif spec.family == PIECEWISE:
        plan = [("const",)] + [("mono", ((j, 1),)) for j in range(p)]
        knots = spec.knots
        if knots and not isinstance(knots[0], (list, tuple)):
            knots = (tuple(knots),) * p
        for j, ks in enumerate(knots):
            lo, hi = X[:, j].min(), X[:, j].max()
            for k in ks:
                if k <= lo or k >= hi:
                    msg = f"knot {k:g} on {names[j]} outside data range [{lo:g}, {hi:g}]; segment dropped"
                    warnings.warn(msg, stacklevel=2)
                    diagnostics.append(msg)
                    continue
                plan.append(("hinge", j, float(k)))
    else:
        levels = spec.levels
        if levels is None:
            levels = np.unique(np.round(X, TIE_DECIMALS), axis=0)
        plan = [("cell", tuple(float(v) for v in np.atleast_1d(lev))) for lev in levels]
    plan = tuple(plan)
    M = _evaluate(X, plan)
    if check_size and M.shape[1] > n and spec.ridge == 0:
        raise OverparameterizationError(f"{M.shape[1]} features for {n} rows; add a ridge penalty")
    ranges = np.column_stack([X.min(axis=0), X.max(axis=0)]) if n else np.zeros((p, 2))
    return Features(M, tuple(_name(t, names) for t in plan), spec, plan, ranges, tuple(diagnostics))


@dataclass(frozen=True)
class SieveFit:
    theta: np.ndarray
    features: Features
    moment_residual: float
    rank: int
    nullspace_dim: int
    diagnostics: tuple = field(default=())


def solve_moments(G, Gamma, ridge=0.0, rcond=RCOND):
    """Min-norm (ridge if ``ridge > 0``) solution of ``G theta = Gamma``."""
    G = np.asarray(G, dtype=float)
    Gamma = np.asarray(Gamma, dtype=float)
    if ridge > 0:
        theta = np.linalg.solve(G.T @ G + ridge * np.eye(G.shape[1]), G.T @ Gamma)
        _, _, null = min_norm_solve(G, Gamma, rcond)
    else:
        theta, _, null = min_norm_solve(G, Gamma, rcond)
    rank = G.shape[1] - null.shape[1]
    return theta, float(np.linalg.norm(G @ theta - Gamma)), rank, null.shape[1]


def fit_sieve_bridge(Y, A, W, Z, basis_h: BasisSpec, basis_z: BasisSpec, weights=None,
                     names_h=None, names_z=None) -> SieveFit:
    """Sieve bridge coefficients ``theta`` for ``h(A, W) = B(A, W) theta``."""
    Y = np.asarray(Y, dtype=float).reshape(-1)
    AW = np.column_stack([_as_matrix(A), _as_matrix(W)]) if W is not None else _as_matrix(A)
    fb = build_features(AW, basis_h, names_h)
    fc = build_features(_as_matrix(Z), basis_z, names_z)
    w = as_weights(weights, len(Y))
    G = fc.matrix.T @ (w[:, None] * fb.matrix)
    Gamma = fc.matrix.T @ (w * Y)
    theta, resid, rank, null = solve_moments(G, Gamma, basis_h.ridge)
    diagnostics = list(fb.diagnostics + fc.diagnostics)
    if fc.matrix.shape[1] < fb.matrix.shape[1] and basis_h.ridge == 0:
        msg = (f"{fc.matrix.shape[1]} instrument features for {fb.matrix.shape[1]} bridge features; "
               "the bridge is underdetermined and the min-norm solution is returned")
        log.warning(msg)
        diagnostics.append(msg)
    return SieveFit(theta, fb, resid, rank, null, tuple(diagnostics))


def effect_from_sieve(theta, features: Features, W_sample, c: ContrastSpec, weights=None) -> EstimateReport:
    """``mean_i sum_a pi(a) B(a, W_i) theta`` (grid contrasts use their trapezoid weights)."""
    theta = np.asarray(theta, dtype=float)
    Wm = _as_matrix(W_sample) if W_sample is not None else np.empty((1, 0))
    n = len(Wm)
    w = as_weights(weights, n)
    diagnostics = []
    lo, hi = features.ranges[0]
    outside = [a for a in c.support if a < lo or a > hi]
    if outside:
        diagnostics.append(("extrapolation", f"contrast values {outside} outside fitted treatment range [{lo:g}, {hi:g}]"))
    total = np.zeros(n)
    for a, wt in zip(c.support, c.effective):
        X = np.column_stack([np.full(n, a), Wm])
        total += wt * (features.transform(X) @ theta)
    return EstimateReport(float(np.sum(w * total)), "sieve", n, None, tuple(diagnostics))


def linear_sieve_moments(cov, means=None):
    """``(G, Gamma)`` for bases (1, A, W) and (1, Z) from population second moments.

    ``cov[(x, y)]`` are covariance blocks over y, a, z, w; ``means`` optional
    block means (zero by default).
    """
    m = {k: np.zeros(cov[(k, k)].shape[0]) for k in ("y", "a", "z", "w")}
    if means:
        m.update({k: np.asarray(v, dtype=float) for k, v in means.items()})

    def E(x, y):
        return cov[(x, y)] + np.outer(m[x], m[y])

    top = np.concatenate([[1.0], m["a"], m["w"]])
    body = np.hstack([m["z"][:, None], E("z", "a"), E("z", "w")])
    G = np.vstack([top, body])
    Gamma = np.concatenate([m["y"], E("z", "y").reshape(-1)])
    return G, Gamma
