"""Discrete bridge-function solvers.

Every bridge here is the solution ``x`` of a finite system
``sum_t x(t) P(t | g) = r(g)`` over conditioning cells ``g``. The system is
solved in the min-norm least-squares sense; the residual decides validity and
the SVD null space describes the non-uniqueness of the solution.

Tables are built from a ``Frame`` so population tables (exact weights) and
sample frequency tables share one code path.
"""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .data import ContrastSpec
from .errors import (CellSupportError, CommonSupportError, DomainError, IdentificationError,
                     NoPerturbationError, SchemaError)
from .synth import Frame, LabeledMatrix
from .tables import RCOND, TIE_DECIMALS, min_norm_solve

log = logging.getLogger(__name__)

DEFAULT_TOL = 1e-8


@dataclass(frozen=True)
class BridgeSolution:
    """Min-norm solution of one bridge system.

    ``coeffs[j]`` is the bridge value at argument cell ``labels[j]``.
    """

    coeffs: np.ndarray
    labels: tuple
    residual_norm: float
    nullspace_dim: int
    nullspace_basis: np.ndarray | None
    design: np.ndarray
    rhs: np.ndarray
    tol: float = DEFAULT_TOL

    @property
    def scale(self):
        return max(float(np.linalg.norm(self.rhs)), 1e-300)

    @property
    def valid(self):
        return self.residual_norm <= self.tol * self.scale

    def with_tol(self, tol):
        return replace(self, tol=tol)

    def value(self, label):
        return self.as_dict()[label]

    def as_dict(self):
        return dict(zip(self.labels, self.coeffs))

    def residual_for(self, coeffs):
        return float(np.linalg.norm(self.design @ np.asarray(coeffs, dtype=float) - self.rhs))

    def to_csv(self, path, names=("cell",)):
        path = Path(path)
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow([*names, "coefficient"])
            for label, c in zip(self.labels, self.coeffs):
                label = label if isinstance(label, tuple) else (label,)
                writer.writerow([*(_fmt(x) for x in label), repr(float(c))])


def _fmt(x):
    x = float(x)
    return str(int(x)) if x.is_integer() else repr(x)


def solve_system(design, rhs, labels, tol=DEFAULT_TOL, rcond=RCOND):
    design = np.asarray(design, dtype=float)
    rhs = np.asarray(rhs, dtype=float)
    x, res, null = min_norm_solve(design, rhs, rcond)
    return BridgeSolution(x, tuple(labels), res, null.shape[1], null if null.shape[1] else None,
                          design, rhs, tol)


# --------------------------------------------------------------------------
# table construction


def _stack(frame, names):
    return np.column_stack([np.round(np.asarray(frame[n], dtype=float), TIE_DECIMALS) for n in names])


def _levels_index(values, levels):
    """Row index of every row of ``values`` inside ``levels`` (-1 when absent)."""
    both = np.vstack([levels, values])
    _, codes = np.unique(both, axis=0, return_inverse=True)
    codes = codes.reshape(-1)
    lev_codes = codes[: len(levels)]
    lookup = np.full(codes.max() + 1, -1)
    lookup[lev_codes] = np.arange(len(levels))
    return lookup[codes[len(levels):]]


def _labels(keys):
    return tuple(tuple(float(v) for v in row) if len(row) > 1 else float(row[0]) for row in keys)


def frame_levels(frame, names, mask=None):
    vals = _stack(frame, names)
    if mask is not None:
        vals = vals[mask]
    return np.unique(vals, axis=0)


def cond_table(frame: Frame, target, given, mask=None, target_levels=None, alpha=0.0):
    """``P(target | given)`` from a frame as a ``LabeledMatrix``.

    Rows are target cells (``target_levels`` when supplied), columns given
    cells present in the (masked) frame. ``alpha`` adds pseudo-counts to every
    target cell of every column before normalizing; it needs unweighted data.
    """
    target = tuple(target)
    given = tuple(given)
    w = frame.w()
    tv = _stack(frame, target)
    gv = _stack(frame, given)
    if mask is not None:
        tv, gv, w = tv[mask], gv[mask], w[mask]
    if len(w) == 0:
        raise CellSupportError("no rows in the requested cell")
    g_keys, g_idx = np.unique(gv, axis=0, return_inverse=True)
    g_idx = g_idx.reshape(-1)
    if target_levels is None:
        t_keys, t_idx = np.unique(tv, axis=0, return_inverse=True)
        t_idx = t_idx.reshape(-1)
    else:
        t_keys = np.asarray(target_levels, dtype=float).reshape(len(target_levels), -1)
        t_idx = _levels_index(tv, t_keys)
        if np.any(t_idx < 0):
            raise SchemaError("target values outside the supplied levels")
    mass = np.zeros((len(t_keys), len(g_keys)))
    np.add.at(mass, (t_idx, g_idx), w)
    if alpha > 0:
        mass = mass * frame.n + alpha
    col = mass.sum(axis=0)
    defined = col > 0
    vals = np.full(mass.shape, np.nan)
    vals[:, defined] = mass[:, defined] / col[defined]
    return LabeledMatrix(vals, _labels(t_keys), _labels(g_keys), target, given, defined)


def cond_mean_table(frame: Frame, values, given, mask=None):
    """Weighted mean of ``values`` per given cell: (labels, means, cell masses)."""
    w = frame.w()
    vals = np.asarray(values, dtype=float)
    gv = _stack(frame, given)
    if mask is not None:
        vals, gv, w = vals[mask], gv[mask], w[mask]
    keys, idx = np.unique(gv, axis=0, return_inverse=True)
    idx = idx.reshape(-1)
    mass = np.bincount(idx, weights=w, minlength=len(keys))
    tot = np.bincount(idx, weights=w * vals, minlength=len(keys))
    return _labels(keys), tot / mass, mass


def marginal(frame: Frame, names, levels=None):
    """Marginal probabilities of the cells of ``names`` (over ``levels`` if given)."""
    w = frame.w()
    vals = _stack(frame, names)
    if levels is None:
        levels = np.unique(vals, axis=0)
    levels = np.asarray(levels, dtype=float).reshape(len(levels), -1)
    idx = _levels_index(vals, levels)
    if np.any(idx < 0):
        raise SchemaError("values outside the supplied levels")
    return np.bincount(idx, weights=w, minlength=len(levels))


def _solve_labeled(P: LabeledMatrix, rhs, rhs_labels, tol, rcond=RCOND):
    if rhs_labels is not None and tuple(rhs_labels) != tuple(P.col_labels):
        raise SchemaError("right-hand side labels do not match the conditioning cells of the matrix")
    rhs = np.asarray(rhs, dtype=float)
    if rhs.shape != (len(P.col_labels),):
        raise SchemaError(f"right-hand side has length {rhs.size}, expected {len(P.col_labels)}")
    keep = P.defined
    return solve_system(P.values[:, keep].T, rhs[keep], P.row_labels, tol, rcond)


# --------------------------------------------------------------------------
# outcome bridge over (A, W) given Z


def solve_outcome_bridge(P_AW_given_Z: LabeledMatrix, EY_given_Z, tol=DEFAULT_TOL, ey_labels=None, rcond=RCOND):
    """Solve ``sum_{a,w} H(a, w) P(a, w | z) = E[Y | z]`` for every z.

    Singular values below ``rcond`` times the largest are treated as zero.
    """
    return _solve_labeled(P_AW_given_Z, EY_given_Z, ey_labels, tol, rcond)


@dataclass(frozen=True)
class OutcomeBridgeInputs:
    P: LabeledMatrix
    ey: np.ndarray
    ey_labels: tuple
    p_w: np.ndarray
    w_levels: tuple


def outcome_bridge_inputs(frame: Frame, y="y", a="a", w=("w",), z=("z",), alpha=0.0):
    w = (w,) if isinstance(w, str) else tuple(w)
    z = (z,) if isinstance(z, str) else tuple(z)
    P = cond_table(frame, (a, *w), z, alpha=alpha)
    labels, ey, _ = cond_mean_table(frame, frame[y], z)
    w_keys = frame_levels(frame, w)
    return OutcomeBridgeInputs(P, ey, labels, marginal(frame, w, w_keys), _labels(w_keys))


def fit_outcome_bridge(frame: Frame, tol=DEFAULT_TOL, rcond=RCOND, **names):
    inputs = outcome_bridge_inputs(frame, **names)
    return solve_outcome_bridge(inputs.P, inputs.ey, tol, inputs.ey_labels, rcond), inputs


def effect_from_outcome_bridge(sol: BridgeSolution, P_W, c: ContrastSpec, w_levels=None):
    """``sum_a pi(a) sum_w H(a, w) p(w)`` for a valid outcome bridge."""
    if not sol.valid:
        raise IdentificationError(
            "outcome bridge residual above tolerance: completeness of W for U likely violated "
            f"(residual {sol.residual_norm:.3g})")
    p_w = np.asarray(P_W, dtype=float)
    table = sol.as_dict()
    a_levels = sorted({_head(lab) for lab in sol.labels})
    if w_levels is None:
        w_levels = sorted({_tail(lab) for lab in sol.labels})
    if len(w_levels) != len(p_w):
        raise SchemaError("P_W length does not match the proxy levels")
    missing = [s for s in c.support if s not in a_levels]
    if missing:
        raise DomainError(f"contrast support {missing} outside bridge treatment levels {a_levels}")
    total = 0.0
    for a, weight in zip(c.support, c.effective):
        h = np.array([table.get(_join(a, wl), 0.0) for wl in w_levels])
        total += weight * float(h @ p_w)
    return total


def _head(label):
    return label[0]


def _tail(label):
    return label[1] if len(label) == 2 else tuple(label[1:])


def _join(a, wl):
    return (a, *wl) if isinstance(wl, tuple) else (a, wl)


def perturb_nullspace(sol: BridgeSolution, magnitude, seed):
    """Move along a random unit direction in the null space of the bridge system."""
    if sol.nullspace_dim == 0:
        raise NoPerturbationError("bridge solution is unique; the null space is trivial")
    if magnitude == 0:
        return sol
    rng = np.random.default_rng(seed)
    g = rng.normal(size=sol.nullspace_dim)
    g /= np.linalg.norm(g)
    coeffs = sol.coeffs + magnitude * (sol.nullspace_basis @ g)
    return replace(sol, coeffs=coeffs, residual_norm=sol.residual_for(coeffs))


def latent_outcome_system(frame: Frame, y="y", a="a", w=("w",), u=("u",), w_levels=None):
    """Design and rhs of ``E[H(A, W) | A, U] = E[Y | A, U]`` (needs the latent column)."""
    w = (w,) if isinstance(w, str) else tuple(w)
    u = (u,) if isinstance(u, str) else tuple(u)
    levels = frame_levels(frame, (a, *w)) if w_levels is None else w_levels
    P = cond_table(frame, (a, *w), (a, *u), target_levels=levels)
    labels, ey, _ = cond_mean_table(frame, frame[y], (a, *u))
    return _solve_labeled(P, ey, labels, DEFAULT_TOL)


# --------------------------------------------------------------------------
# bridge collections keyed by cell


@dataclass(frozen=True)
class BridgeTable:
    """Bridge solutions keyed by cell (e.g. z, or (a, bin))."""

    solutions: dict
    kind: str
    diagnostics: dict = field(default_factory=dict)

    @property
    def valid(self):
        return all(s.valid for s in self.solutions.values())

    @property
    def max_relative_residual(self):
        return max((s.residual_norm / s.scale for s in self.solutions.values()), default=0.0)

    def invalid_cells(self):
        return [k for k, s in self.solutions.items() if not s.valid]

    def with_tol(self, tol):
        return replace(self, solutions={k: s.with_tol(tol) for k, s in self.solutions.items()})

    def lookup(self, cells, args):
        """Vectorized ``bridge(cell, arg)``; arguments unseen in a cell's system map to 0."""
        out = np.empty(len(cells))
        cache = {k: s.as_dict() for k, s in self.solutions.items()}
        for i, (cell, arg) in enumerate(zip(cells, args)):
            table = cache.get(cell)
            if table is None:
                raise CellSupportError(f"no {self.kind} bridge for cell {cell}")
            out[i] = table.get(arg, 0.0)
        return out


def _cell_keys(frame, names, mask=None):
    vals = _stack(frame, names)
    if mask is not None:
        vals = vals[mask]
    return [tuple(row) if len(row) > 1 else float(row[0]) for row in vals]


def _level_labels(frame, names, mask=None):
    return _labels(frame_levels(frame, names, mask))


# --------------------------------------------------------------------------
# control bridges


def mid_cdf_indicator(a_values, a):
    a_values = np.asarray(a_values, dtype=float)
    return (a_values < a) + 0.5 * (a_values == a)


def solve_tau(a, F_A_given_Z_W0, P_W1_given_Z_W0, tol=DEFAULT_TOL):
    """Per-z control bridge for treatment value ``a``.

    ``F_A_given_Z_W0`` maps z to ``(w0_labels, F(a | z, w0))``;
    ``P_W1_given_Z_W0`` maps z to a ``LabeledMatrix`` with rows w1, columns w0.
    """
    out = {}
    for z, P in P_W1_given_Z_W0.items():
        if z not in F_A_given_Z_W0:
            raise SchemaError(f"no right-hand side for z = {z}")
        labels, rhs = F_A_given_Z_W0[z]
        out[z] = _solve_labeled(P, rhs, labels, tol)
    return BridgeTable(out, "tau", {"a": a})


def solve_kappa(f_W1_ratio, P_W0_given_Z_W1, tol=DEFAULT_TOL):
    """Per-z bridge ``sum_{w0} kappa(z, w0) P(w0 | z, w1) = p(w1) / p(w1 | z)``."""
    out = {}
    for z, P in P_W0_given_Z_W1.items():
        if z not in f_W1_ratio:
            raise SchemaError(f"no right-hand side for z = {z}")
        labels, rhs = f_W1_ratio[z]
        out[z] = _solve_labeled(P, rhs, labels, tol)
    return BridgeTable(out, "kappa")


def tau_inputs(frame: Frame, a, a_col="a", z="z", w0="w0", w1="w1", alpha=0.0):
    w1_levels = frame_levels(frame, (w1,))
    zv = np.round(np.asarray(frame[z], dtype=float), TIE_DECIMALS)
    ind = mid_cdf_indicator(frame[a_col], a)
    F, P = {}, {}
    for zl in np.unique(zv):
        mask = zv == zl
        labels, vals, _ = cond_mean_table(frame, ind, (w0,), mask)
        F[float(zl)] = (labels, vals)
        P[float(zl)] = cond_table(frame, (w1,), (w0,), mask, target_levels=w1_levels, alpha=alpha)
    return F, P


def kappa_inputs(frame: Frame, z="z", w0="w0", w1="w1", alpha=0.0):
    w0_levels = frame_levels(frame, (w0,))
    w1_levels = frame_levels(frame, (w1,))
    p_w1 = dict(zip(_labels(w1_levels), marginal(frame, (w1,), w1_levels)))
    zv = np.round(np.asarray(frame[z], dtype=float), TIE_DECIMALS)
    ratio, P = {}, {}
    for zl in np.unique(zv):
        mask = zv == zl
        cond = cond_table(frame, (w1,), (z,), mask, target_levels=w1_levels)
        p_w1_z = dict(zip(cond.row_labels, cond.values[:, 0]))
        P_z = cond_table(frame, (w0,), (w1,), mask, target_levels=w0_levels, alpha=alpha)
        ratio[float(zl)] = (P_z.col_labels, np.array([p_w1[l] / p_w1_z[l] for l in P_z.col_labels]))
        P[float(zl)] = P_z
    return ratio, P


def fit_tau(frame: Frame, a_values=None, tol=DEFAULT_TOL, alpha=0.0, a_col="a", z="z", w0="w0", w1="w1"):
    """Control bridges keyed by ``(a, z)``.

    By default only the treatment values observed within each z are solved,
    which is all the control quantity needs. Each z-system is factorized once.
    """
    w1_levels = frame_levels(frame, (w1,))
    zv = np.round(np.asarray(frame[z], dtype=float), TIE_DECIMALS)
    av = np.round(np.asarray(frame[a_col], dtype=float), TIE_DECIMALS)
    out = {}
    for zl in np.unique(zv):
        mask = zv == zl
        P = cond_table(frame, (w1,), (w0,), mask, target_levels=w1_levels, alpha=alpha)
        targets = np.unique(av[mask]) if a_values is None else np.asarray(a_values, dtype=float)
        rhs, labels = [], None
        for a in targets:
            labels, vals, _ = cond_mean_table(frame, mid_cdf_indicator(av, a), (w0,), mask)
            rhs.append(vals)
        if tuple(labels) != tuple(P.col_labels):
            raise SchemaError("right-hand side labels do not match the conditioning cells of the matrix")
        design = P.values[:, P.defined].T
        for a, sol in zip(targets, solve_many(design, np.array(rhs)[:, P.defined], P.row_labels, tol)):
            out[(float(a), float(zl))] = sol
    return BridgeTable(out, "tau")


def solve_many(design, rhs_rows, labels, tol=DEFAULT_TOL, rcond=RCOND):
    """Min-norm solutions for several right-hand sides sharing one design."""
    U, s, Vt = np.linalg.svd(design, full_matrices=True)
    cut = rcond * s[0] if s.size and s[0] > 0 else 0.0
    r = int((s > cut).sum())
    null = Vt[r:].T.copy()
    pinv = Vt[:r].T @ (U[:, :r].T / s[:r, None])
    out = []
    for b in np.atleast_2d(rhs_rows):
        x = pinv @ b
        res = float(np.linalg.norm(design @ x - b))
        out.append(BridgeSolution(x, tuple(labels), res, null.shape[1], null if null.shape[1] else None,
                                  design, b, tol))
    return out


def fit_kappa(frame: Frame, tol=DEFAULT_TOL, alpha=0.0, **names):
    ratio, P = kappa_inputs(frame, alpha=alpha, **names)
    return solve_kappa(ratio, P, tol)


def control_quantity_from_tau(tau: BridgeTable, P_W1, w1_levels):
    """``V(a, z) = sum_{w1} tau_a(z, w1) p(w1)`` clipped to [0, 1].

    Returns ``(table, clip)`` where ``clip`` is the largest clipping distance.
    """
    invalid = tau.invalid_cells()
    if invalid:
        raise IdentificationError(f"control bridge invalid for (a, z) cells {invalid[:5]}; "
                                  "W1 may not be complete for U given (Z, W0)")
    p_w1 = np.asarray(P_W1, dtype=float)
    out = {}
    clip = 0.0
    for key, sol in tau.solutions.items():
        table = sol.as_dict()
        v = float(sum(table.get(l, 0.0) * p for l, p in zip(w1_levels, p_w1)))
        clipped = min(max(v, 0.0), 1.0)
        clip = max(clip, abs(clipped - v))
        out[key] = clipped
    return out, clip


# --------------------------------------------------------------------------
# action and outcome bridges on (a, bin) cells


def solve_h_bridge(cell, EY_given_Z_cell, P_W_given_Z_cell: LabeledMatrix, tol=DEFAULT_TOL):
    """``sum_w h(cell, w) P(w | cell, z) = E[Y | cell, z]`` over z in the cell."""
    labels, ey = EY_given_Z_cell
    if len(labels) == 0:
        raise CellSupportError(f"cell {cell} has no instrument support")
    return _solve_labeled(P_W_given_Z_cell, ey, labels, tol)


def solve_q_bridge(cell, inv_f_A_given_VW, P_Z_given_W_cell: LabeledMatrix, tol=DEFAULT_TOL):
    """``sum_z q(cell, z) P(z | cell, w) = 1 / f(a | bin, w)`` over w in the bin."""
    labels, inv_f = inv_f_A_given_VW
    inv_f = np.asarray(inv_f, dtype=float)
    if not np.all(np.isfinite(inv_f)):
        bad = [l for l, v in zip(labels, inv_f) if not np.isfinite(v)]
        raise CommonSupportError(f"zero propensity for cell {cell} at proxy values {bad[:5]}")
    return _solve_labeled(P_Z_given_W_cell, inv_f, labels, tol)


def _as_tuple(x):
    return (x,) if isinstance(x, str) else tuple(x)


def fit_h_bridges(frame: Frame, a_values, b="b", y="y", a="a", w=("w",), z=("z",), tol=DEFAULT_TOL, alpha=0.0):
    """Outcome bridges ``h(a, b, w)`` for every (a, b) cell with a in ``a_values``."""
    w, z = _as_tuple(w), _as_tuple(z)
    w_levels = frame_levels(frame, w)
    av = np.round(np.asarray(frame[a], float), TIE_DECIMALS)
    bv = np.asarray(frame[b], float)
    out = {}
    for al in a_values:
        for bl in np.unique(bv):
            mask = (av == al) & (bv == bl)
            cell = (float(al), float(bl))
            if not mask.any():
                raise CellSupportError(f"empty cell (a={al}, bin={bl})")
            ey = cond_mean_table(frame, frame[y], z, mask)
            P = cond_table(frame, w, z, mask, target_levels=w_levels, alpha=alpha)
            out[cell] = solve_h_bridge(cell, ey[:2], P, tol)
    return BridgeTable(out, "h")


def fit_q_bridges(frame: Frame, a_values, b="b", a="a", w=("w",), z=("z",), tol=DEFAULT_TOL, alpha=0.0):
    """Action bridges ``q(a, b, z)`` for every (a, b) cell with a in ``a_values``."""
    w, z = _as_tuple(w), _as_tuple(z)
    av = np.round(np.asarray(frame[a], float), TIE_DECIMALS)
    bv = np.asarray(frame[b], float)
    out = {}
    for al in a_values:
        ind = (av == al).astype(float)
        for bl in np.unique(bv):
            cell = (float(al), float(bl))
            in_bin = bv == bl
            labels, f, _ = cond_mean_table(frame, ind, w, in_bin)
            with np.errstate(divide="ignore"):
                inv_f = np.where(f > 0, 1.0 / np.where(f > 0, f, 1.0), np.inf)
            mask = in_bin & (av == al)
            if not mask.any():
                raise CommonSupportError(f"no rows with a={al} in bin {bl}")
            P = cond_table(frame, z, w, mask, target_levels=frame_levels(frame, z, mask), alpha=alpha)
            out[cell] = solve_q_bridge(cell, (labels, inv_f), P, tol)
    return BridgeTable(out, "q")
