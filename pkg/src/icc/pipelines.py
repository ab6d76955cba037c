"""End-to-end estimation pipelines on a ``Dataset``.

Each pipeline returns an ``EstimateReport`` whose diagnostics carry every
quantity that qualifies the point estimate (ranks, residual norms, support
flags). Identification failures raise after attaching the diagnostics
gathered so far, so callers can persist them alongside the error.
"""
from __future__ import annotations

import numpy as np

from .bridge import (effect_from_outcome_bridge, fit_h_bridges, fit_outcome_bridge, fit_q_bridges, fit_tau,
                     frame_levels, marginal, control_quantity_from_tau)
from .control import bin_control, check_common_support, control_quantity
from .data import ContrastSpec, Dataset, VariableRole, ate_contrast
from .errors import IdentificationError, SchemaError
from .estimators import EstimateReport, tilde_phi_dr, tilde_phi_ipw, tilde_phi_reg
from .linear import STRUCTURAL, fit_icc
from .sieve import BasisSpec, effect_from_sieve, fit_sieve_bridge
from .synth import Frame

SAMPLE_TOL = 0.1
DEFAULT_BINS = 5
METHODS = ("linear", "discrete", "first_stage", "sieve")


def _attach(exc, diagnostics):
    exc.diagnostics = tuple(diagnostics)
    return exc


def _names(ds: Dataset, role):
    return tuple(c.name for c in ds.with_role(role))


def _one(ds, role):
    names = _names(ds, role)
    if len(names) != 1:
        raise SchemaError(f"expected exactly one {role.value} column, found {len(names)}")
    return names[0]


def _frame(ds: Dataset):
    return Frame({c.name: c.values for c in ds.columns}, None)


def estimate_linear(ds: Dataset, rank="auto", residual=STRUCTURAL, **_):
    ds.require_instruments()
    Z = ds.matrix(VariableRole.INSTRUMENT)
    W = ds.matrix(VariableRole.OUTCOME_PROXY)
    if W.shape[1] == 0:
        raise SchemaError("the linear estimator needs at least one outcome_proxy column")
    fit = fit_icc(ds.y, ds.a, Z, W, rank=rank, residual=residual)
    diagnostics = [
        ("rank_used", fit.rank_used),
        ("singular_values", [float(s) for s in fit.singular_values]),
        ("delta_hat", [float(d) for d in fit.delta_hat]),
        ("residual_form", residual),
    ]
    return EstimateReport(float(fit.beta_hat[0]), "linear_icc", ds.n, float(fit.se[0]), tuple(diagnostics))


def sample_rcond(n, rcond="auto"):
    """Singular-value cutoff for sample bridge systems; ``"auto"`` is ``n ** -0.5``.

    Sampling noise lifts exact zero singular values of a population design to
    order ``n ** -0.5``; keeping them would invert noise.
    """
    return 1.0 / np.sqrt(n) if rcond == "auto" else float(rcond)


def estimate_discrete(ds: Dataset, contrast: ContrastSpec | None = None, solve_tol=SAMPLE_TOL, rcond="auto", **_):
    c = contrast or ate_contrast(1, 0)
    rcond = sample_rcond(ds.n, rcond)
    w = _names(ds, VariableRole.OUTCOME_PROXY)
    ds.require_instruments()
    z = _names(ds, VariableRole.INSTRUMENT)
    if not w:
        raise SchemaError("the discrete bridge needs at least one outcome_proxy column")
    y, a = _one(ds, VariableRole.OUTCOME), _one(ds, VariableRole.TREATMENT)
    frame = _frame(ds)
    sol, inputs = fit_outcome_bridge(frame, tol=solve_tol, rcond=rcond, y=y, a=a, w=w, z=z)
    rel = sol.residual_norm / sol.scale
    diagnostics = [
        ("relative_residual", rel),
        ("solve_tol", solve_tol),
        ("rcond", rcond),
        ("rank", len(sol.labels) - sol.nullspace_dim),
        ("nullspace_dim", sol.nullspace_dim),
        ("bridge_valid", bool(sol.valid)),
        ("n_instrument_cells", len(inputs.ey_labels)),
        ("n_bridge_cells", len(sol.labels)),
    ]
    try:
        J = effect_from_outcome_bridge(sol, inputs.p_w, c, inputs.w_levels)
    except IdentificationError as exc:
        raise _attach(exc, diagnostics)
    return EstimateReport(float(J), "discrete_outcome_bridge", ds.n, None, tuple(diagnostics))


def estimate_first_stage(ds: Dataset, contrast: ContrastSpec | None = None, solve_tol=SAMPLE_TOL,
                         n_bins=DEFAULT_BINS, moment="dr", **_):
    """Control bridges give V(a, z); its bins index outcome and action bridges."""
    c = contrast or ate_contrast(1, 0)
    y, a = _one(ds, VariableRole.OUTCOME), _one(ds, VariableRole.TREATMENT)
    z = _one(ds, VariableRole.INSTRUMENT)
    w0, w1 = _one(ds, VariableRole.PROXY_W0), _one(ds, VariableRole.PROXY_W1)
    frame = _frame(ds)
    diagnostics = [("solve_tol", solve_tol), ("n_bins", n_bins)]

    tau = fit_tau(frame, tol=solve_tol, a_col=a, z=z, w0=w0, w1=w1)
    diagnostics.append(("tau_max_relative_residual", tau.max_relative_residual))
    w1_levels = frame_levels(frame, (w1,))
    try:
        table, clip = control_quantity_from_tau(tau, marginal(frame, (w1,), w1_levels),
                                                tuple(float(x) for x in w1_levels[:, 0]))
    except IdentificationError as exc:
        raise _attach(exc, diagnostics)
    diagnostics.append(("control_clip", clip))
    V = bin_control(control_quantity(frame[a], frame[z], table), n_bins)
    support = check_common_support(frame[a], V, c)
    diagnostics.append(("support_flags", [list(f) for f in support.flags]))
    diagnostics.append(("n_bins_used", int(V.bins.max()) + 1))
    cols = dict(frame.columns)
    cols["b"] = V.bins.astype(float)
    fb = Frame(cols, None)
    try:
        h = fit_h_bridges(fb, list(c.support), y=y, a=a, w=(w0,), z=(z,), tol=solve_tol)
        q = fit_q_bridges(fb, list(c.support), a=a, w=(w0,), z=(z,), tol=solve_tol)
    except Exception as exc:
        raise _attach(exc, diagnostics)
    diagnostics += [
        ("h_max_relative_residual", h.max_relative_residual),
        ("q_max_relative_residual", q.max_relative_residual),
        ("h_valid", bool(h.valid)),
        ("q_valid", bool(q.valid)),
    ]
    # each moment needs its own bridge; DR needs either one
    ipw = tilde_phi_ipw(fb[y], fb[a], fb["b"], fb[z], q, c).J_hat if q.valid else None
    reg = tilde_phi_reg(fb["b"], fb[w0], h, c).J_hat if h.valid else None
    dr = tilde_phi_dr(fb[y], fb[a], fb["b"], fb[z], fb[w0], h, q, c).J_hat if h.valid or q.valid else None
    diagnostics += [("J_ipw", ipw), ("J_reg", reg), ("J_dr", dr)]
    if dr is None:
        raise _attach(IdentificationError(
            "neither outcome nor action bridges solve their moment systems: completeness of W0 or Z "
            "for U within control bins likely violated"), diagnostics)
    chosen = {"ipw": ipw, "reg": reg, "dr": dr}[moment]
    if chosen is None:
        raise _attach(IdentificationError(
            f"the {moment} moment needs a valid {'action' if moment == 'ipw' else 'outcome'} bridge; "
            "use moment dr"), diagnostics)
    return EstimateReport(float(chosen), f"first_stage_{moment}", ds.n, None, tuple(diagnostics))


def estimate_sieve(ds: Dataset, contrast: ContrastSpec | None = None, basis_h: BasisSpec | None = None,
                   basis_z: BasisSpec | None = None, **_):
    c = contrast or ate_contrast(1, 0)
    basis_h = basis_h or BasisSpec()
    basis_z = basis_z or BasisSpec()
    W = ds.matrix(VariableRole.OUTCOME_PROXY)
    ds.require_instruments()
    Z = ds.matrix(VariableRole.INSTRUMENT)
    w_names = _names(ds, VariableRole.OUTCOME_PROXY)
    fit = fit_sieve_bridge(ds.y, ds.a, W if W.shape[1] else None, Z, basis_h, basis_z,
                           names_h=(_one(ds, VariableRole.TREATMENT), *w_names),
                           names_z=_names(ds, VariableRole.INSTRUMENT))
    rep = effect_from_sieve(fit.theta, fit.features, W if W.shape[1] else None, c)
    diagnostics = [
        ("moment_residual", fit.moment_residual),
        ("rank", fit.rank),
        ("nullspace_dim", fit.nullspace_dim),
        ("features", list(fit.features.names)),
        ("theta", [float(t) for t in fit.theta]),
        *[("note", d) for d in fit.diagnostics],
        *rep.diagnostics,
    ]
    return EstimateReport(rep.J_hat, "sieve_bridge", ds.n, None, tuple(diagnostics))


PIPELINES = {
    "linear": estimate_linear,
    "discrete": estimate_discrete,
    "first_stage": estimate_first_stage,
    "sieve": estimate_sieve,
}


def run_pipeline(method, ds: Dataset, **options) -> EstimateReport:
    if method not in PIPELINES:
        raise SchemaError(f"unknown method {method!r}; choose from {', '.join(METHODS)}")
    return PIPELINES[method](ds, **options)


def report_rows(report: EstimateReport):
    """Flatten a report to ``(key, value)`` string pairs with stable formatting."""
    rows = [("estimator", report.estimator), ("J_hat", _fmt(report.J_hat)),
            ("se", _fmt(report.se)), ("n_used", str(report.n_used))]
    for k, v in report.diagnostics:
        rows.append((k, _fmt(v)))
    return rows


def _fmt(v):
    if v is None:
        return "NA"
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (list, tuple)):
        return "[" + "; ".join(_fmt(x) for x in v) + "]"
    return str(v)
