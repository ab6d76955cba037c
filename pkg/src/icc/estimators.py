"""Moment-function estimators of the contrast J.

The ``phi_*`` estimators condition on the latent confounders (oracle mode);
the ``tilde_phi_*`` estimators replace the infeasible regression and
propensity with outcome and action bridges. Each returns the weighted mean of
its moment function, so passing a population frame's weights evaluates the
population expectation exactly.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .bridge import BridgeTable, _levels_index
from .data import ContrastSpec
from .errors import CellSupportError, CommonSupportError, DomainError, IdentificationError
from .tables import TIE_DECIMALS, as_weights, joint_codes


@dataclass(frozen=True)
class EstimateReport:
    J_hat: float
    estimator: str
    n_used: int
    se: float | None = None
    diagnostics: tuple = ()

    def __post_init__(self):
        if self.se is not None and self.se < 0:
            raise ValueError("se must be nonnegative")

    def diag(self, name):
        return dict(self.diagnostics)[name]

    def as_dict(self):
        return {"estimator": self.estimator, "J_hat": self.J_hat, "se": self.se,
                "n_used": self.n_used, **dict(self.diagnostics)}


def _round(x):
    return np.round(np.asarray(x, dtype=float), TIE_DECIMALS)


def _cols(x):
    if x is None:
        return []
    if isinstance(x, (list, tuple)):
        return [np.asarray(c, dtype=float) for c in x]
    x = np.asarray(x, dtype=float)
    return [x] if x.ndim == 1 else [x[:, j] for j in range(x.shape[1])]


# --------------------------------------------------------------------------
# oracle estimators conditioning on (V, U)


def _cell_tables(Y, A, cond, c, w):
    """Per-cell propensity f(a | C) and regression k(a, C) for contrast arms."""
    codes, keys = joint_codes(*cond) if cond else (np.zeros(len(A), int), np.zeros((1, 0)))
    m = len(keys)
    mass = np.bincount(codes, weights=w, minlength=m)
    f, k = {}, {}
    for a in c.support:
        ind = A == a
        arm = np.bincount(codes, weights=w * ind, minlength=m)
        if np.any(arm <= 0):
            bad = np.flatnonzero(arm <= 0)[:5].tolist()
            raise CommonSupportError(f"treatment value {a} has zero propensity in control cells {bad}")
        f[a] = arm / mass
        k[a] = np.bincount(codes, weights=w * ind * Y, minlength=m) / arm
    return codes, f, k


def _prep(Y, A, V, U, weights):
    Y = np.asarray(Y, dtype=float)
    A = _round(A)
    cond = [_round(v) for v in _cols(V) + _cols(U)]
    return Y, A, cond, as_weights(weights, len(Y))


def _pi(A, c):
    return c.pi(A)


def phi_ipw(Y, A, V, U, c: ContrastSpec, weights=None):
    """Mean of ``Y pi(A) / f(A | V, U)`` with cell-frequency propensities."""
    Y, A, cond, w = _prep(Y, A, V, U, weights)
    codes, f, _ = _cell_tables(Y, A, cond, c, w)
    pi = _pi(A, c)
    fa = np.ones(len(A))
    for a in c.support:
        sel = A == a
        fa[sel] = f[a][codes[sel]]
    return EstimateReport(float(np.sum(w * Y * pi / fa)), "phi_ipw", len(Y))


def phi_reg(Y, A, V, U, c: ContrastSpec, weights=None):
    """Mean of ``sum_a pi(a) k(a, V, U)`` with cell-mean regressions."""
    Y, A, cond, w = _prep(Y, A, V, U, weights)
    codes, _, k = _cell_tables(Y, A, cond, c, w)
    reg = sum(wt * k[a][codes] for a, wt in zip(c.support, c.effective))
    return EstimateReport(float(np.sum(w * reg)), "phi_reg", len(Y))


def phi_dr(Y, A, V, U, c: ContrastSpec, weights=None):
    Y, A, cond, w = _prep(Y, A, V, U, weights)
    codes, f, k = _cell_tables(Y, A, cond, c, w)
    pi = _pi(A, c)
    fa = np.ones(len(A))
    ka = np.zeros(len(A))
    for a in c.support:
        sel = A == a
        fa[sel] = f[a][codes[sel]]
        ka[sel] = k[a][codes[sel]]
    reg = sum(wt * k[a][codes] for a, wt in zip(c.support, c.effective))
    return EstimateReport(float(np.sum(w * ((Y - ka) * pi / fa + reg))), "phi_dr", len(Y))


# --------------------------------------------------------------------------
# bridge tables as plug-ins


@dataclass(frozen=True)
class PlugIn:
    """Bridge values keyed by (a, bin, argument) in a flat lookup table.

    Built from a ``BridgeTable`` or arbitrary values; arguments missing from a
    cell evaluate to zero, missing cells raise a support error.
    """

    keys: np.ndarray
    values: np.ndarray
    kind: str

    @classmethod
    def from_table(cls, table: BridgeTable):
        rows, vals = [], []
        for (a, b), sol in table.solutions.items():
            for label, v in zip(sol.labels, sol.coeffs):
                arg = label if isinstance(label, tuple) else (label,)
                rows.append((a, b, *arg))
                vals.append(v)
        return cls(np.array(rows, dtype=float), np.array(vals, dtype=float), table.kind)

    def with_values(self, values):
        return replace(self, values=np.asarray(values, dtype=float))

    def randomized(self, seed, scale=1.0):
        rng = np.random.default_rng(seed)
        return self.with_values(rng.uniform(-scale, scale, len(self.values)))

    def perturbed(self, seed, scale=1.0):
        rng = np.random.default_rng(seed)
        return self.with_values(self.values + rng.normal(0.0, scale, len(self.values)))

    def __call__(self, a, b, args):
        q = np.column_stack([_round(a), _round(b), *[_round(x) for x in _cols(args)]])
        if len(q) == 0:
            return np.zeros(0)
        keys = np.round(self.keys, TIE_DECIMALS)
        idx = _levels_index(q, keys)
        out = np.where(idx >= 0, self.values[np.maximum(idx, 0)], 0.0)
        cells = {tuple(r) for r in keys[:, :2].tolist()}
        missing = [tuple(r) for r in q[idx < 0, :2].tolist() if tuple(r) not in cells]
        if missing:
            raise CellSupportError(f"no {self.kind} bridge for (a, bin) cells {sorted(set(missing))[:5]}")
        return out


def _plugin(x):
    return PlugIn.from_table(x) if isinstance(x, BridgeTable) else x


def _invalid(x):
    return isinstance(x, BridgeTable) and not x.valid


def _require(x, what):
    # solved tables must be valid; explicit PlugIn values are taken as given
    if _invalid(x):
        raise IdentificationError(f"{what} bridge residual above tolerance in some (a, bin) cell")


def _bins(B, n):
    return np.zeros(n) if B is None else _round(B)


def _T(h, B, W, c):
    n = len(B)
    return sum(wt * h(np.full(n, a), B, W) for a, wt in zip(c.support, c.effective))


def _on_support(A, c):
    return np.isin(A, np.asarray(c.support))


def tilde_phi_ipw(Y, A, B, Z, q, c: ContrastSpec, weights=None):
    """Mean of ``Y pi(A) q(A, B, Z)``; ``B`` is the binned control (None for one bin)."""
    Y = np.asarray(Y, dtype=float)
    A = _round(A)
    B = _bins(B, len(Y))
    w = as_weights(weights, len(Y))
    _require(q, "action")
    q = _plugin(q)
    sel = _on_support(A, c)
    qa = np.zeros(len(Y))
    qa[sel] = q(A[sel], B[sel], [z[sel] for z in _cols(Z)])
    return EstimateReport(float(np.sum(w * Y * c.pi(A) * qa)), "tilde_phi_ipw", len(Y))


def tilde_phi_reg(B, W, h, c: ContrastSpec, weights=None):
    """Mean of ``sum_a pi(a) h(a, B, W)``."""
    Wc = _cols(W)
    n = len(Wc[0])
    B = _bins(B, n)
    w = as_weights(weights, n)
    _require(h, "outcome")
    return EstimateReport(float(np.sum(w * _T(_plugin(h), B, Wc, c))), "tilde_phi_reg", n)


def tilde_phi_dr(Y, A, B, Z, W, h, q, c: ContrastSpec, weights=None):
    Y = np.asarray(Y, dtype=float)
    A = _round(A)
    n = len(Y)
    B = _bins(B, n)
    w = as_weights(weights, n)
    if _invalid(h) and _invalid(q):
        raise IdentificationError("neither the outcome nor the action bridge solves its moment system")
    h, q = _plugin(h), _plugin(q)
    Wc, Zc = _cols(W), _cols(Z)
    sel = _on_support(A, c)
    resid = np.zeros(n)
    resid[sel] = (Y[sel] - h(A[sel], B[sel], [x[sel] for x in Wc])) * q(A[sel], B[sel], [x[sel] for x in Zc])
    val = c.pi(A) * resid + _T(h, B, Wc, c)
    return EstimateReport(float(np.sum(w * val)), "tilde_phi_dr", n)


def inverse_propensity(A, B, W, c: ContrastSpec, weights=None):
    """``1 / f(A | B, W)`` at rows whose treatment is on the contrast support (else 0)."""
    A = _round(A)
    n = len(A)
    B = _bins(B, n)
    w = as_weights(weights, n)
    codes, keys = joint_codes(B, *[_round(x) for x in _cols(W)])
    mass = np.bincount(codes, weights=w, minlength=len(keys))
    out = np.zeros(n)
    for a in c.support:
        sel = A == a
        arm = np.bincount(codes, weights=w * sel, minlength=len(keys))
        out[sel] = mass[codes[sel]] / arm[codes[sel]]
    return out


def bias_identity_check(kind, plug_in, valid, frame_cols, c: ContrastSpec, J, weights):
    """Both sides of the plug-in bias identity in population mode.

    ``kind="ipw"``: ``plug_in`` is an arbitrary action bridge q and ``valid`` a
    valid outcome bridge h0. Returns ``(E[phi_ipw(q)] - J,
    E[h0 pi(A) (q - 1 / f(A | B, W))])``.

    ``kind="reg"``: ``plug_in`` is an arbitrary outcome bridge h and ``valid``
    a valid action bridge q0. Returns ``(E[phi_reg(h)] - J,
    E[pi(A) q0 (h - Y)])``.

    ``frame_cols`` maps ``y, a, b, z, w`` to arrays; ``b`` may be None.
    """
    Y = np.asarray(frame_cols["y"], dtype=float)
    A = _round(frame_cols["a"])
    n = len(Y)
    B = _bins(frame_cols.get("b"), n)
    Z, W = _cols(frame_cols["z"]), _cols(frame_cols["w"])
    w = as_weights(weights, n)
    pi = c.pi(A)
    sel = _on_support(A, c)
    sub = lambda cols: [x[sel] for x in cols]  # noqa: E731
    if kind == "ipw":
        q, h0 = _plugin(plug_in), _plugin(valid)
        lhs = tilde_phi_ipw(Y, A, B, Z, q, c, w).J_hat - J
        inv_f = inverse_propensity(A, B, W, c, w)
        term = np.zeros(n)
        term[sel] = h0(A[sel], B[sel], sub(W)) * (q(A[sel], B[sel], sub(Z)) - inv_f[sel])
        return lhs, float(np.sum(w * pi * term))
    if kind == "reg":
        h, q0 = _plugin(plug_in), _plugin(valid)
        lhs = tilde_phi_reg(B, W, h, c, w).J_hat - J
        term = np.zeros(n)
        term[sel] = q0(A[sel], B[sel], sub(Z)) * (h(A[sel], B[sel], sub(W)) - Y[sel])
        return lhs, float(np.sum(w * pi * term))
    raise DomainError(f"unknown identity kind {kind!r}")
