"""Control variables from conditional CDF ranks, control quantities and binning."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import ContrastSpec
from .errors import BinningError, CellSizeError, SupportError
from .tables import TIE_DECIMALS, as_weights, joint_codes

EMPIRICAL = "empirical_no_U"
ORACLE = "oracle_VU"
CONTROL_QUANTITY = "control_quantity"


@dataclass(frozen=True)
class ControlColumn:
    values: np.ndarray
    kind: str
    bins: np.ndarray | None = None
    edges: np.ndarray | None = None

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if np.any((vals < 0) | (vals > 1)):
            raise ValueError("control values must lie in [0, 1]")
        if self.kind not in (EMPIRICAL, ORACLE, CONTROL_QUANTITY):
            raise ValueError(f"unknown control kind {self.kind!r}")
        if self.edges is not None:
            e = np.asarray(self.edges, dtype=float)
            if e[0] != 0.0 or e[-1] != 1.0 or np.any(np.diff(e) <= 0):
                raise ValueError("bin edges must be strictly increasing from 0 to 1")
        object.__setattr__(self, "values", vals)

    def __len__(self):
        return len(self.values)


def mid_cdf(x, cells=None, weights=None):
    """Within-cell weighted mid-CDF ``P(X < x) + P(X = x) / 2`` at every row.

    Without weights this is the midrank ``(rank - 0.5) / n_cell``.
    """
    x = np.round(np.asarray(x, dtype=float), TIE_DECIMALS)
    n = len(x)
    w = as_weights(weights, n)
    codes = np.zeros(n, dtype=int) if cells is None else cells
    out = np.empty(n)
    order = np.lexsort((x, codes))
    xs, cs, ws = x[order], codes[order], w[order]
    starts = np.flatnonzero(np.r_[True, cs[1:] != cs[:-1]])
    ends = np.r_[starts[1:], n]
    for s, e in zip(starts, ends):
        xv, wv = xs[s:e], ws[s:e]
        lev, inv = np.unique(xv, return_inverse=True)
        mass = np.bincount(inv, weights=wv, minlength=len(lev))
        below = np.cumsum(mass) - mass
        out[order[s:e]] = (below[inv] + 0.5 * mass[inv]) / mass.sum()
    return out


def _cell_codes(*cols):
    codes, _ = joint_codes(*[np.asarray(c) for c in cols])
    return codes


def _check_sizes(codes, what):
    counts = np.bincount(codes)
    if np.any(counts[counts > 0] < 2):
        raise CellSizeError(f"every {what} cell needs at least two observations")


def empirical_cdf_control(A, Z, weights=None) -> ControlColumn:
    """Conditional rank of A within each instrument cell (Z must be discrete)."""
    codes = _cell_codes(Z)
    if weights is None:
        _check_sizes(codes, "z")
    return ControlColumn(mid_cdf(A, codes, weights), EMPIRICAL)


def oracle_control(A, Z, U, weights=None) -> ControlColumn:
    """Conditional rank of A within each (z, u) cell; needs the latent U."""
    codes = _cell_codes(Z, U)
    if weights is None:
        _check_sizes(codes, "(z, u)")
    return ControlColumn(mid_cdf(A, codes, weights), ORACLE)


def control_quantity(A, Z, V_table) -> ControlColumn:
    """Row-wise lookup of an identified control quantity ``V_table[(a, z)]``."""
    A = np.round(np.asarray(A, dtype=float), TIE_DECIMALS)
    Z = np.round(np.asarray(Z, dtype=float), TIE_DECIMALS)
    out = np.empty(len(A))
    table = {(round(float(a), TIE_DECIMALS), round(float(z), TIE_DECIMALS)): v for (a, z), v in V_table.items()}
    for i, key in enumerate(zip(A.tolist(), Z.tolist())):
        v = table.get(key)
        if v is None:
            raise SupportError(f"no control quantity for (a, z) = {key}")
        out[i] = v
    return ControlColumn(out, CONTROL_QUANTITY)


def bin_control(V: ControlColumn, n_bins, weights=None) -> ControlColumn:
    """Equal-mass bins from the weighted mid-CDF of the control values.

    Tied values always share a bin. Empty bins are skipped so bin codes run
    ``0..k-1``; edges sit halfway between neighbouring bins.
    """
    vals = np.asarray(V.values, dtype=float)
    n = len(vals)
    if n_bins < 2:
        raise BinningError("need at least two bins")
    if n_bins > n:
        raise BinningError(f"{n_bins} bins requested for {n} rows")
    mid = mid_cdf(vals, None, weights)
    raw = np.minimum(np.floor(n_bins * mid + 1e-9).astype(int), n_bins - 1)
    used, bins = np.unique(raw, return_inverse=True)
    bins = bins.reshape(-1)
    lo = np.array([vals[bins == b].min() for b in range(len(used))])
    hi = np.array([vals[bins == b].max() for b in range(len(used))])
    inner = (hi[:-1] + lo[1:]) / 2
    edges = np.r_[0.0, inner, 1.0]
    if edges[1] <= 0.0 or edges[-2] >= 1.0:
        edges = None
    return ControlColumn(vals, V.kind, bins, edges)


@dataclass(frozen=True)
class SupportReport:
    """Mass share of each contrast arm inside each control bin."""

    shares: dict
    flags: list = field(default_factory=list)
    min_overlap: float = 0.0

    @property
    def ok(self):
        return not self.flags

    def flagged_bins(self, a):
        return sorted(b for a_, b in self.flags if a_ == a)


def check_common_support(A, V: ControlColumn, c: ContrastSpec, min_overlap=0.0, n_bins=5, weights=None):
    """Flag (a, bin) pairs where arm ``a`` has share <= ``min_overlap`` of the bin mass."""
    if V.bins is None:
        V = bin_control(V, n_bins, weights)
    A = np.round(np.asarray(A, dtype=float), TIE_DECIMALS)
    w = as_weights(weights, len(A))
    bins = V.bins
    k = bins.max() + 1
    total = np.bincount(bins, weights=w, minlength=k)
    shares, flags = {}, []
    for a in c.support:
        arm = np.bincount(bins, weights=w * (A == a), minlength=k)
        for b in range(k):
            share = arm[b] / total[b]
            shares[(a, b)] = share
            if share <= min_overlap:
                flags.append((a, b))
    return SupportReport(shares, flags, min_overlap)
