"""Population oracles and synthetic data generators.

Two discrete populations are provided. ``DiscretePopulation`` is a joint table
over (U, Z, A, W) with structural outcome means ``k0[a, u]``, used for the
outcome-bridge route. ``FirstStagePopulation`` adds a scalar first-stage
disturbance on a finite grid and the proxies (W0, W1) used by the control
bridges. ``LinearDGPSpec`` describes the Gaussian linear model.

Populations can be expanded into a weighted ``Frame`` whose rows are the
support cells and whose weights are cell probabilities. All estimators accept
such frames, so population identities are evaluated by the same code that
handles samples.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import norm

from .data import CATEGORICAL, Column, ContrastSpec, Dataset, VariableRole
from .errors import DomainError, SpecError

DEFAULT_FLOOR = 1e-4
DEFAULT_GRID = 101


@dataclass(frozen=True)
class Frame:
    """Parallel columns plus row weights (cell probabilities or 1/n)."""

    columns: dict
    weights: np.ndarray | None = None

    def __getitem__(self, name):
        return self.columns[name]

    def __contains__(self, name):
        return name in self.columns

    @property
    def n(self):
        return len(next(iter(self.columns.values())))

    def w(self):
        if self.weights is None:
            return np.full(self.n, 1.0 / self.n)
        return self.weights / self.weights.sum()


def frame_from_dataset(ds: Dataset) -> Frame:
    return Frame({c.name: np.asarray(c.values) for c in ds.columns})


@dataclass(frozen=True)
class LabeledMatrix:
    """Conditional probability matrix: rows are target cells, columns given cells."""

    values: np.ndarray
    row_labels: tuple
    col_labels: tuple
    target: tuple
    given: tuple
    defined: np.ndarray

    @property
    def shape(self):
        return self.values.shape


def _cond_matrix(p, axes, target, given):
    target = tuple(target)
    given = tuple(given)
    if set(target) & set(given):
        raise DomainError("target and given roles must be disjoint")
    unknown = set(target + given) - set(axes)
    if unknown:
        raise DomainError(f"unknown roles {sorted(unknown)}; available {list(axes)}")
    keep = target + given
    drop = tuple(i for i, ax in enumerate(axes) if ax not in keep)
    marg = p.sum(axis=drop) if drop else p
    remaining = [ax for ax in axes if ax in keep]
    marg = np.transpose(marg, [remaining.index(ax) for ax in keep])
    t_shape = marg.shape[: len(target)]
    g_shape = marg.shape[len(target):]
    joint = marg.reshape(int(np.prod(t_shape)), int(np.prod(g_shape)))
    mass = joint.sum(axis=0)
    defined = mass > 0
    vals = np.full(joint.shape, np.nan)
    vals[:, defined] = joint[:, defined] / mass[defined]
    rows = tuple(itertools.product(*[range(s) for s in t_shape]))
    cols = tuple(itertools.product(*[range(s) for s in g_shape]))
    return LabeledMatrix(vals, rows, cols, target, given, defined)


def completeness_rank(m, tol=1e-10):
    """Numerical rank of a (conditional) matrix and whether it has full column rank."""
    if not tol > 0:
        raise DomainError("tol must be positive")
    vals = m.values if isinstance(m, LabeledMatrix) else np.asarray(m, dtype=float)
    if vals.size == 0:
        raise DomainError("empty matrix")
    if isinstance(m, LabeledMatrix):
        vals = vals[:, m.defined]
    s = np.linalg.svd(vals, compute_uv=False)
    rank = int((s > tol * s[0]).sum()) if s[0] > 0 else 0
    return rank, rank == vals.shape[1]


def _dirichlet(rng, size, k, floor):
    draws = rng.dirichlet(np.ones(k), size=size)
    if floor > 0:
        draws = np.maximum(draws, floor)
        draws /= draws.sum(axis=-1, keepdims=True)
    return draws


def _check_contrast(c, values):
    values = np.asarray(values, dtype=float)
    bad = [s for s in c.support if not np.any(values == s)]
    if bad:
        raise DomainError(f"contrast support {bad} outside treatment values {values.tolist()}")


# --------------------------------------------------------------------------
# outcome-route population


@dataclass(frozen=True)
class DiscretePopulation:
    """Joint table ``p[u, z, a, w]`` with structural outcome means ``k0[a, u]``.

    Treatment values are the codes ``0..d_A-1``.
    """

    p: np.ndarray
    k0: np.ndarray
    y_noise_sd: float = 0.0

    axes = ("U", "Z", "A", "W")

    def __post_init__(self):
        p = np.array(self.p, dtype=float)
        k0 = np.array(self.k0, dtype=float)
        if p.ndim != 4:
            raise SpecError("p must be a 4-way table over (u, z, a, w)")
        if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-12:
            raise SpecError("p must be nonnegative and sum to one")
        if k0.shape != (p.shape[2], p.shape[0]):
            raise SpecError(f"k0 must have shape (d_A, d_U) = {(p.shape[2], p.shape[0])}")
        if self.y_noise_sd < 0:
            raise SpecError("y_noise_sd must be nonnegative")
        p.setflags(write=False)
        k0.setflags(write=False)
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "k0", k0)

    @classmethod
    def from_factors(cls, p_u, p_z_u, p_a_zu, p_w_u, k0, y_noise_sd=0.0):
        """Build ``p(u) p(z|u) p(a|z,u) p(w|u)``.

        ``p_z_u`` is (d_U, d_Z), ``p_a_zu`` is (d_U, d_Z, d_A), ``p_w_u`` is (d_U, d_W).
        """
        p_u = np.asarray(p_u, float)
        p = (p_u[:, None, None, None] * np.asarray(p_z_u, float)[:, :, None, None]
             * np.asarray(p_a_zu, float)[:, :, :, None] * np.asarray(p_w_u, float)[:, None, None, :])
        return cls(p / p.sum(), k0, y_noise_sd)

    @property
    def dims(self):
        return self.p.shape

    @property
    def treatment_values(self):
        return np.arange(self.p.shape[2], dtype=float)

    def marginal(self, *roles):
        drop = tuple(i for i, ax in enumerate(self.axes) if ax not in roles)
        return self.p.sum(axis=drop)

    def cond_matrix(self, target, given):
        return _cond_matrix(self.p, self.axes, target, given)

    def frame(self):
        idx = np.argwhere(self.p > 0)
        u, z, a, w = idx.T
        cols = {
            "u": u.astype(float), "z": z.astype(float), "a": a.astype(float),
            "w": w.astype(float), "y": self.k0[a, u],
        }
        return Frame(cols, self.p[u, z, a, w])


def random_population(dims, seed, support_floor=DEFAULT_FLOOR, y_noise_sd=1.0):
    """Random ``DiscretePopulation`` with dims ``(d_U, d_Z, d_A, d_W)``.

    Each factor of ``p(u) p(z|u) p(a|z,u) p(w|u)`` is a symmetric Dirichlet(1)
    draw floored at ``support_floor``. The factorization keeps W independent
    of (A, Z) given U.
    """
    d_u, d_z, d_a, d_w = (int(d) for d in dims)
    if min(d_u, d_z, d_a, d_w) < 1:
        raise SpecError("all dims must be at least 1")
    cells = d_u * d_z * d_a * d_w
    if not 0 <= support_floor <= 0.5 / cells:
        raise SpecError(f"support_floor must lie in [0, {0.5 / cells:g}]")
    rng = np.random.default_rng(seed)
    p_u = _dirichlet(rng, None, d_u, support_floor)
    p_z_u = _dirichlet(rng, d_u, d_z, support_floor)
    p_a_zu = _dirichlet(rng, (d_u, d_z), d_a, support_floor)
    p_w_u = _dirichlet(rng, d_u, d_w, support_floor)
    k0 = rng.uniform(-1.0, 1.0, size=(d_a, d_u))
    return DiscretePopulation.from_factors(p_u, p_z_u, p_a_zu, p_w_u, k0, y_noise_sd)


def true_J(pop, c: ContrastSpec):
    """Causal contrast J computed from the structural tables."""
    if isinstance(pop, FirstStagePopulation):
        return pop.true_J(c)
    _check_contrast(c, pop.treatment_values)
    p_u = pop.marginal("U")
    total = 0.0
    for a, weight in zip(c.support, c.effective):
        total += weight * float(p_u @ pop.k0[int(a)])
    return total


def sample_discrete(pop: DiscretePopulation, n, seed) -> Dataset:
    if n < 1:
        raise DomainError("n must be at least 1")
    rng = np.random.default_rng(seed)
    flat = pop.p.ravel()
    draws = rng.choice(flat.size, size=n, p=flat / flat.sum())
    u, z, a, w = np.unravel_index(draws, pop.p.shape)
    y = pop.k0[a, u] + (rng.normal(0.0, pop.y_noise_sd, n) if pop.y_noise_sd > 0 else 0.0)
    cols = (
        Column("y", VariableRole.OUTCOME, y),
        Column("a", VariableRole.TREATMENT, a, CATEGORICAL),
        Column("z", VariableRole.INSTRUMENT, z, CATEGORICAL),
        Column("w", VariableRole.OUTCOME_PROXY, w, CATEGORICAL),
        Column("u", VariableRole.LATENT_CONFOUNDER, u, CATEGORICAL),
    )
    return Dataset(cols, simulated=True)


# --------------------------------------------------------------------------
# first-stage population


@dataclass(frozen=True)
class FirstStagePopulation:
    """First-stage design ``A = h(Z, m(U, eta))`` with eta on a finite grid.

    Parameters
    ----------
    p : array (d_U, d_Z, d_W0, d_W1)
        Joint table of the discrete variables. eta is independent of all of
        them and uniform over the grid.
    m_table : array (d_U, G)
        ``m(u, eta_k)``, strictly increasing in k for every u.
    m_levels : array
        Sorted support of m on which ``h_table`` is tabulated.
    h_table : array (d_Z, len(m_levels))
        ``h(z, m)``, strictly increasing in m for every z.
    a_values : array
        Sorted treatment values with a row in ``k0v``.
    k0v : array (len(a_values), G, d_U)
        Structural mean of Y(a) given (eta_k, u).
    """

    p: np.ndarray
    m_table: np.ndarray
    m_levels: np.ndarray
    h_table: np.ndarray
    a_values: np.ndarray
    k0v: np.ndarray
    y_noise_sd: float = 0.0
    eta_grid: np.ndarray = field(default=None)

    axes = ("U", "Z", "W0", "W1")

    def __post_init__(self):
        p = np.array(self.p, dtype=float)
        if p.ndim != 4 or np.any(p < 0) or abs(p.sum() - 1.0) > 1e-12:
            raise SpecError("p must be a nonnegative 4-way table over (u, z, w0, w1) summing to one")
        m_table = np.array(self.m_table, dtype=float)
        m_levels = np.array(self.m_levels, dtype=float)
        h_table = np.array(self.h_table, dtype=float)
        d_u, d_z = p.shape[:2]
        if m_table.shape[0] != d_u:
            raise SpecError("m_table must have one row per u")
        if h_table.shape != (d_z, len(m_levels)):
            raise SpecError("h_table must be (d_Z, len(m_levels))")
        if np.any(np.diff(m_table, axis=1) <= 0):
            raise SpecError("m(u, eta) must be strictly increasing in eta for every u")
        if np.any(np.diff(m_levels) <= 0):
            raise SpecError("m_levels must be strictly increasing")
        if np.any(np.diff(h_table, axis=1) <= 0):
            raise SpecError("h(z, m) must be strictly increasing in m for every z")
        if not np.all(np.isin(m_table, m_levels)):
            raise SpecError("every value of m_table must appear in m_levels")
        grid = m_table.shape[1]
        a_values = np.array(self.a_values, dtype=float)
        k0v = np.array(self.k0v, dtype=float)
        if k0v.shape != (len(a_values), grid, d_u):
            raise SpecError("k0v must be (len(a_values), G, d_U)")
        eta = self.eta_grid
        eta = norm.ppf((np.arange(grid) + 0.5) / grid) if eta is None else np.array(eta, dtype=float)
        for name, arr in [("p", p), ("m_table", m_table), ("m_levels", m_levels), ("h_table", h_table),
                          ("a_values", a_values), ("k0v", k0v), ("eta_grid", eta)]:
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if not np.all(np.isin(self.a_table, a_values)):
            raise SpecError("k0v must cover every attainable treatment value")

    @property
    def dims(self):
        return self.p.shape

    @property
    def grid(self):
        return self.m_table.shape[1]

    @property
    def a_table(self):
        """Treatment value ``A[z, u, k]``."""
        j = np.searchsorted(self.m_levels, self.m_table)
        return self.h_table[:, j]

    def marginal(self, *roles):
        drop = tuple(i for i, ax in enumerate(self.axes) if ax not in roles)
        return self.p.sum(axis=drop)

    def cond_matrix(self, target, given):
        return _cond_matrix(self.p, self.axes, target, given)

    def cdf_given_zu(self, a, z, u):
        """Mid-CDF ``P(A < a | z, u) + P(A = a | z, u) / 2``."""
        row = self.a_table[z, u]
        return float(np.mean(row < a) + 0.5 * np.mean(row == a))

    def control_quantity(self, a, z):
        """U-averaged conditional CDF at (a, z)."""
        p_u = self.marginal("U")
        row = self.a_table[z]
        F = np.mean(row < a, axis=1) + 0.5 * np.mean(row == a, axis=1)
        return float(p_u @ F)

    def _k0(self, a, k, u):
        return self.k0v[np.searchsorted(self.a_values, a), k, u]

    def true_J(self, c):
        _check_contrast(c, self.a_values)
        p_u = self.marginal("U")
        total = 0.0
        for a, weight in zip(c.support, c.effective):
            total += weight * float(p_u @ self.k0v[np.searchsorted(self.a_values, a)].mean(axis=0))
        return total

    def frame(self):
        """Rows over (u, z, w0, w1, eta-grid index) with exact cell weights."""
        G = self.grid
        idx = np.argwhere(self.p > 0)
        reps = np.repeat(idx, G, axis=0)
        k = np.tile(np.arange(G), len(idx))
        u, z, w0, w1 = reps.T
        a = self.a_table[z, u, k]
        weights = self.p[u, z, w0, w1] / G
        v43_table = self._v43_table()
        cols = {
            "u": u.astype(float), "z": z.astype(float), "w0": w0.astype(float), "w1": w1.astype(float),
            "k": k.astype(float), "eta": self.eta_grid[k], "a": a,
            "y": self._k0(a, k, u), "v": (k + 0.5) / G, "v43": v43_table[z, u, k],
        }
        return Frame(cols, weights)

    def _v43_table(self):
        d_u, d_z = self.p.shape[:2]
        out = np.empty((d_z, d_u, self.grid))
        for z in range(d_z):
            for u in range(d_u):
                for k in range(self.grid):
                    out[z, u, k] = self.control_quantity(self.a_table[z, u, k], z)
        return out


def lattice_first_stage(p, shifts, grid, k0v_fn, y_noise_sd=0.0):
    """First stage with ``m(u, k) = k + shifts[u]`` and ``h(z, m) = rank(m) + 1 - z``.

    With ``d_Z >= grid * d_U + 1`` every (u, eta) cell reaches both treatment
    values 0 and 1 for some z, which gives exact common support for the
    contrast between them.
    """
    shifts = np.asarray(shifts, dtype=float)
    if np.any(np.abs(shifts) >= 0.5) or len(np.unique(shifts)) != len(shifts):
        raise SpecError("shifts must be distinct and inside (-0.5, 0.5)")
    d_u, d_z = p.shape[:2]
    m_table = np.arange(grid)[None, :] + shifts[:, None]
    m_levels = np.sort(m_table.ravel())
    ranks = np.arange(len(m_levels))
    h_table = ranks[None, :] + 1.0 - np.arange(d_z)[:, None]
    a_values = np.unique(h_table)
    A, K, U = np.meshgrid(a_values, np.arange(grid), np.arange(d_u), indexing="ij")
    k0v = k0v_fn(A, K, U)
    return FirstStagePopulation(p, m_table, m_levels, h_table, a_values, k0v, y_noise_sd)


def random_first_stage_population(seed, d_u=2, d_w0=3, d_w1=3, grid=21, support_floor=DEFAULT_FLOOR,
                                  y_noise_sd=0.5):
    """Random lattice first-stage population with ``d_Z = grid * d_U + 1``.

    The discrete table factorizes as ``p(u) p(z|u) p(w0|u) p(w1|u)``, so W0
    and W1 are conditionally independent given U and both are independent of
    (Z, A) given U.
    """
    rng = np.random.default_rng(seed)
    d_z = grid * d_u + 1
    p_u = _dirichlet(rng, None, d_u, support_floor)
    p_z_u = _dirichlet(rng, d_u, d_z, support_floor)
    p_w0_u = _dirichlet(rng, d_u, d_w0, support_floor)
    p_w1_u = _dirichlet(rng, d_u, d_w1, support_floor)
    p = (p_u[:, None, None, None] * p_z_u[:, :, None, None]
         * p_w0_u[:, None, :, None] * p_w1_u[:, None, None, :])
    p /= p.sum()
    shifts = np.sort(rng.uniform(-0.45, 0.45, d_u)) if d_u > 1 else np.zeros(1)
    c = rng.uniform(-1.0, 1.0, size=(2, grid, d_u))

    def k0v(A, K, U):
        return 0.3 * A + c[np.clip(A, 0, 1).astype(int), K, U]

    return lattice_first_stage(p, shifts, grid, k0v, y_noise_sd)


def sample_monotone(fs: FirstStagePopulation, n, seed) -> Dataset:
    """Draw from a first-stage population.

    Besides the observables, the dataset records the latent confounder ``u``,
    the disturbance ``eta``, the oracle control ``v`` and the U-averaged
    control quantity ``v43``; all of them carry latent roles.
    """
    if n < 1:
        raise DomainError("n must be at least 1")
    rng = np.random.default_rng(seed)
    flat = fs.p.ravel()
    draws = rng.choice(flat.size, size=n, p=flat / flat.sum())
    u, z, w0, w1 = np.unravel_index(draws, fs.p.shape)
    k = rng.integers(0, fs.grid, size=n)
    a = fs.a_table[z, u, k]
    y = fs._k0(a, k, u)
    if fs.y_noise_sd > 0:
        y = y + rng.normal(0.0, fs.y_noise_sd, n)
    v43 = fs._v43_table()[z, u, k]
    latent = VariableRole.LATENT_DISTURBANCE
    cols = (
        Column("y", VariableRole.OUTCOME, y),
        Column("a", VariableRole.TREATMENT, a),
        Column("z", VariableRole.INSTRUMENT, z, CATEGORICAL),
        Column("w0", VariableRole.PROXY_W0, w0, CATEGORICAL),
        Column("w1", VariableRole.PROXY_W1, w1, CATEGORICAL),
        Column("u", VariableRole.LATENT_CONFOUNDER, u, CATEGORICAL),
        Column("eta", latent, fs.eta_grid[k]),
        Column("v", latent, (k + 0.5) / fs.grid),
        Column("v43", latent, v43),
    )
    return Dataset(cols, simulated=True)


# --------------------------------------------------------------------------
# linear model


def _mat(x, rows, cols, name):
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 0:
        arr = np.full((rows, cols), float(arr))
    arr = arr.reshape(rows, cols) if arr.size == rows * cols else arr
    if arr.shape != (rows, cols):
        raise SpecError(f"{name} must have shape ({rows}, {cols}), got {np.shape(x)}")
    return arr


@dataclass(frozen=True)
class LinearDGPSpec:
    """Gaussian linear model with common confounders U.

    ``U = Z gamma_tilde_Z + e_U``, ``A = Z pi_fs + U gamma_A + e_A``,
    ``W = U gamma_W + e_W``, ``Y = A beta + U gamma_Y + W zeta + e_Y``.
    ``noise_cov`` is the joint covariance of ``(e_Y, e_A, e_W, e_U)``; a
    nonzero e_Y/e_A block plays the role of a non-common confounder.
    """

    beta: np.ndarray
    gamma_Y: np.ndarray
    gamma_A: np.ndarray
    gamma_W: np.ndarray
    zeta: np.ndarray
    pi_fs: np.ndarray
    gamma_tilde_Z: np.ndarray
    noise_cov: np.ndarray | None = None
    z_cov: np.ndarray | None = None

    def __post_init__(self):
        beta = np.atleast_1d(np.asarray(self.beta, dtype=float))
        d_a = beta.size
        gamma_Y = np.atleast_1d(np.asarray(self.gamma_Y, dtype=float))
        d_u = gamma_Y.size
        zeta = np.atleast_1d(np.asarray(self.zeta, dtype=float))
        d_w = zeta.size
        pi_fs = np.asarray(self.pi_fs, dtype=float)
        d_z = pi_fs.size // d_a
        fields = {
            "beta": beta, "gamma_Y": gamma_Y, "zeta": zeta,
            "gamma_A": _mat(self.gamma_A, d_u, d_a, "gamma_A"),
            "gamma_W": _mat(self.gamma_W, d_u, d_w, "gamma_W"),
            "pi_fs": _mat(pi_fs, d_z, d_a, "pi_fs"),
            "gamma_tilde_Z": _mat(self.gamma_tilde_Z, d_z, d_u, "gamma_tilde_Z"),
        }
        k = 1 + d_a + d_w + d_u
        noise = np.eye(k) if self.noise_cov is None else _mat(self.noise_cov, k, k, "noise_cov")
        zc = np.eye(d_z) if self.z_cov is None else _mat(self.z_cov, d_z, d_z, "z_cov")
        for name, cov in (("noise_cov", noise), ("z_cov", zc)):
            if not np.allclose(cov, cov.T, atol=1e-12):
                raise SpecError(f"{name} must be symmetric")
            if np.linalg.eigvalsh(cov).min() < -1e-10:
                raise SpecError(f"{name} must be positive semidefinite")
        fields["noise_cov"] = noise
        fields["z_cov"] = zc
        for name, val in fields.items():
            val.setflags(write=False)
            object.__setattr__(self, name, val)

    @property
    def dims(self):
        """(d_A, d_Z, d_W, d_U)."""
        return self.beta.size, self.pi_fs.shape[0], self.zeta.size, self.gamma_Y.size

    def as_dict(self):
        return {name: getattr(self, name).tolist() for name in
                ("beta", "gamma_Y", "gamma_A", "gamma_W", "zeta", "pi_fs", "gamma_tilde_Z", "noise_cov", "z_cov")}

    def loadings(self):
        """Coefficients of (Y, A, Z, W, U) on the base vector (Z, e_Y, e_A, e_W, e_U)."""
        d_a, d_z, d_w, d_u = self.dims
        k = d_z + 1 + d_a + d_w + d_u
        sl = np.cumsum([0, d_z, 1, d_a, d_w, d_u])
        ez, ey, ea, ew, eu = (np.eye(k)[:, sl[i]:sl[i + 1]] for i in range(5))
        Z = ez
        U = Z @ self.gamma_tilde_Z + eu
        A = Z @ self.pi_fs + U @ self.gamma_A + ea
        W = U @ self.gamma_W + ew
        Y = A @ self.beta[:, None] + U @ self.gamma_Y[:, None] + W @ self.zeta[:, None] + ey
        return {"y": Y, "a": A, "z": Z, "w": W, "u": U}

    def base_cov(self):
        d_z = self.dims[1]
        k = d_z + self.noise_cov.shape[0]
        cov = np.zeros((k, k))
        cov[:d_z, :d_z] = self.z_cov
        cov[d_z:, d_z:] = self.noise_cov
        return cov


def default_linear_spec():
    """Scalar treatment, two instruments, one confounder and one proxy."""
    return LinearDGPSpec(
        beta=[1.0], gamma_Y=[1.0], gamma_A=[[1.0]], gamma_W=[[1.0]], zeta=[0.5],
        pi_fs=[[1.0], [0.5]], gamma_tilde_Z=[[0.3], [-0.2]],
    )


def linear_population_cov(spec: LinearDGPSpec, blocks=("y", "a", "z", "w", "u")):
    """Population covariance between named blocks, e.g. ``cov[("z", "a")]``."""
    L = spec.loadings()
    S = spec.base_cov()
    return {(r, c): L[r].T @ S @ L[c] for r in blocks for c in blocks}


def draw_linear(spec: LinearDGPSpec, n, seed):
    """Arrays (y, a, z, w, u) drawn from the linear model."""
    rng = np.random.default_rng(seed)
    S = spec.base_cov()
    base = rng.multivariate_normal(np.zeros(S.shape[0]), S, size=n, method="eigh")
    L = spec.loadings()
    return {name: base @ load for name, load in L.items()}


def sample_linear(spec: LinearDGPSpec, n, seed) -> Dataset:
    if n < 1:
        raise DomainError("n must be at least 1")
    d_a = spec.dims[0]
    if d_a != 1:
        raise SpecError("datasets hold a single treatment column; use draw_linear for d_A > 1")
    draw = draw_linear(spec, n, seed)
    cols = [Column("y", VariableRole.OUTCOME, draw["y"][:, 0]),
            Column("a", VariableRole.TREATMENT, draw["a"][:, 0])]
    cols += [Column(f"z{j + 1}", VariableRole.INSTRUMENT, draw["z"][:, j]) for j in range(draw["z"].shape[1])]
    cols += [Column(f"w{j + 1}", VariableRole.OUTCOME_PROXY, draw["w"][:, j]) for j in range(draw["w"].shape[1])]
    d_u = draw["u"].shape[1]
    cols += [Column("u" if d_u == 1 else f"u{j + 1}", VariableRole.LATENT_CONFOUNDER, draw["u"][:, j])
             for j in range(d_u)]
    return Dataset(tuple(cols), simulated=True)
