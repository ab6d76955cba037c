"""Weighted cell tables and the min-norm linear solver.

Everything here works on parallel arrays plus an optional weight vector, so the
same code evaluates empirical frequencies (uniform weights) and exact population
probabilities (cell masses as weights).
"""
from __future__ import annotations

import numpy as np

RCOND = 1e-10
TIE_DECIMALS = 10


def as_weights(weights, n):
    if weights is None:
        return np.full(n, 1.0 / n)
    w = np.asarray(weights, dtype=float)
    if w.shape != (n,):
        raise ValueError(f"weights must have shape ({n},), got {w.shape}")
    total = w.sum()
    if not total > 0:
        raise ValueError("weights must have positive total mass")
    return w / total


def _key_array(x):
    x = np.asarray(x)
    if x.dtype.kind == "f":
        # exact population values may differ in the last ulp across code paths
        return np.round(x, TIE_DECIMALS)
    return x


def joint_codes(*columns):
    """Integer codes for the joint cells of ``columns`` plus the unique keys.

    Keys are returned as an ``(n_cells, n_columns)`` array in lexicographic order.
    """
    if not columns:
        raise ValueError("need at least one column")
    stacked = np.column_stack([_key_array(c) for c in columns])
    keys, codes = np.unique(stacked, axis=0, return_inverse=True)
    return codes.reshape(-1), keys


def cell_mass(codes, weights, size):
    return np.bincount(codes, weights=weights, minlength=size)


def cond_mean(y, keys, weights=None):
    """Per-row weighted mean of ``y`` within the cell of ``keys``."""
    y = np.asarray(y, dtype=float)
    w = as_weights(weights, len(y))
    codes, uniq = joint_codes(*keys)
    mass = cell_mass(codes, w, len(uniq))
    tot = cell_mass(codes, w * y, len(uniq))
    return (tot / mass)[codes]


def cond_prob(target, given, weights=None):
    """Per-row P(target cell | given cell)."""
    n = len(np.asarray(target[0]))
    w = as_weights(weights, n)
    joint, kj = joint_codes(*target, *given)
    marg, km = joint_codes(*given)
    return cell_mass(joint, w, len(kj))[joint] / cell_mass(marg, w, len(km))[marg]


def min_norm_solve(M, b, rcond=RCOND):
    """Minimum-norm least-squares solution of ``M x = b`` via SVD.

    Returns ``(x, residual_norm, nullspace_basis)``; the basis columns span the
    null space of ``M`` at relative tolerance ``rcond``.
    """
    M = np.atleast_2d(np.asarray(M, dtype=float))
    b = np.asarray(b, dtype=float).reshape(-1)
    m, k = M.shape
    if m == 0 or k == 0:
        raise ValueError("empty system")
    U, s, Vt = np.linalg.svd(M, full_matrices=True)
    cut = rcond * s[0] if s.size and s[0] > 0 else 0.0
    keep = s > cut
    r = int(keep.sum())
    coef = (U[:, :r].T @ b) / s[:r]
    x = Vt[:r].T @ coef
    residual = float(np.linalg.norm(M @ x - b))
    null = Vt[r:].T.copy()
    return x, residual, null
