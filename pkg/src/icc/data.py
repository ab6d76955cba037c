"""Dataset container, variable roles, categorical encoding and contrasts."""
from __future__ import annotations

import csv
import enum
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping

import numpy as np

from .errors import ContrastError, ParseError, SchemaError

log = logging.getLogger(__name__)


class VariableRole(str, enum.Enum):
    OUTCOME = "outcome"
    TREATMENT = "treatment"
    INSTRUMENT = "instrument"
    OUTCOME_PROXY = "outcome_proxy"
    PROXY_W0 = "proxy_w0"
    PROXY_W1 = "proxy_w1"
    COVARIATE = "covariate"
    LATENT_CONFOUNDER = "latent_confounder"
    LATENT_DISTURBANCE = "latent_disturbance"

    @property
    def latent(self):
        return self in (VariableRole.LATENT_CONFOUNDER, VariableRole.LATENT_DISTURBANCE)


CONTINUOUS = "continuous"
CATEGORICAL = "categorical"


@dataclass(frozen=True)
class Column:
    name: str
    role: VariableRole
    values: np.ndarray
    kind: str = CONTINUOUS
    # original label -> integer code
    codebook: Mapping[float, int] | None = None

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "role", VariableRole(self.role))
        if self.kind not in (CONTINUOUS, CATEGORICAL):
            raise SchemaError(f"column {self.name!r}: unknown kind {self.kind!r}")
        if self.kind == CATEGORICAL:
            if self.codebook is None:
                labels = np.unique(vals)
                object.__setattr__(self, "codebook", {_label(v): _label(v) for v in labels})
            codes = set(self.codebook.values())
            if not set(np.unique(vals).tolist()) <= codes:
                raise SchemaError(f"column {self.name!r}: values outside its codebook")

    @property
    def n_levels(self):
        return len(self.codebook) if self.codebook is not None else None


def _label(v):
    v = float(v)
    return int(v) if v.is_integer() else v


@dataclass(frozen=True)
class Dataset:
    columns: tuple[Column, ...]
    simulated: bool = False
    diagnostics: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "columns", tuple(self.columns))
        if not self.columns:
            raise SchemaError("dataset has no columns")
        lengths = {len(c.values) for c in self.columns}
        if len(lengths) != 1:
            raise SchemaError(f"columns have unequal lengths {sorted(lengths)}")
        names = [c.name for c in self.columns]
        if len(set(names)) != len(names):
            raise SchemaError("duplicate column names")
        for c in self.columns:
            if not np.all(np.isfinite(c.values)):
                raise SchemaError(f"column {c.name!r} has missing or non-finite values")
            if c.role.latent and not self.simulated:
                raise SchemaError(f"latent role on column {c.name!r} requires a simulated dataset")
        roles = [c.role for c in self.columns]
        for role in (VariableRole.OUTCOME, VariableRole.TREATMENT):
            k = roles.count(role)
            if k != 1:
                raise SchemaError(f"expected exactly one {role.value} column, found {k}")

    @property
    def n(self):
        return len(self.columns[0].values)

    @property
    def names(self):
        return [c.name for c in self.columns]

    def column(self, name):
        for c in self.columns:
            if c.name == name:
                return c
        raise KeyError(name)

    def with_role(self, role):
        role = VariableRole(role)
        return [c for c in self.columns if c.role == role]

    def values(self, role):
        """Values of a single-column role, or an (n, k) matrix for multi-column roles."""
        cols = self.with_role(role)
        if not cols:
            raise SchemaError(f"no column with role {VariableRole(role).value}")
        if len(cols) == 1:
            return cols[0].values
        return np.column_stack([c.values for c in cols])

    def matrix(self, role):
        cols = self.with_role(role)
        if not cols:
            return np.empty((self.n, 0))
        return np.column_stack([c.values for c in cols])

    @property
    def y(self):
        return self.values(VariableRole.OUTCOME)

    @property
    def a(self):
        return self.values(VariableRole.TREATMENT)

    def require_instruments(self):
        if not self.with_role(VariableRole.INSTRUMENT):
            raise SchemaError("at least one instrument column is required")

    def subset(self, mask):
        mask = np.asarray(mask, dtype=bool)
        cols = tuple(replace(c, values=c.values[mask]) for c in self.columns)
        return replace(self, columns=cols)


def _parse_role_spec(spec):
    if isinstance(spec, Mapping):
        role = spec.get("role")
        kind = spec.get("kind", CONTINUOUS)
    else:
        role, kind = spec, CONTINUOUS
    try:
        role = VariableRole(role)
    except ValueError:
        raise SchemaError(f"unknown role {role!r}") from None
    return role, kind


def load_csv(path, role_map: Mapping[str, object], simulated=None) -> Dataset:
    """Read a header-first, comma separated numeric file.

    ``role_map`` maps column name to a role string or to ``{"role": ..., "kind": ...}``.
    Unmapped columns are dropped with a warning. Latent roles mark the dataset as
    simulated unless ``simulated`` says otherwise.
    """
    path = Path(path)
    if not path.exists():
        raise SchemaError(f"file not found: {path}")
    parsed = {name: _parse_role_spec(spec) for name, spec in role_map.items()}
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise SchemaError(f"{path}: empty file") from None
        missing = [name for name in parsed if name not in header]
        if missing:
            raise SchemaError(f"{path}: columns {missing} named in the role map are absent from the header")
        index = {name: header.index(name) for name in parsed}
        raw = {name: [] for name in parsed}
        for row_no, row in enumerate(reader, start=1):
            if not row:
                continue
            if len(row) != len(header):
                raise ParseError(f"{path}: row {row_no} has {len(row)} fields, expected {len(header)}", row=row_no)
            for name, j in index.items():
                cell = row[j].strip()
                try:
                    val = float(cell)
                except ValueError:
                    raise ParseError(f"{path}: row {row_no}, column {name!r}: non-numeric value {cell!r}", row=row_no) from None
                if not math.isfinite(val):
                    raise ParseError(f"{path}: row {row_no}, column {name!r}: missing value {cell!r}", row=row_no)
                raw[name].append(val)
    diagnostics = []
    dropped = [h for h in header if h not in parsed]
    if dropped:
        msg = f"dropped unmapped columns: {', '.join(dropped)}"
        log.warning(msg)
        diagnostics.append(msg)
    cols = []
    for name in header:
        if name not in parsed:
            continue
        role, kind = parsed[name]
        vals = np.array(raw[name], dtype=float)
        if kind == CATEGORICAL and not np.all(vals == np.round(vals)):
            raise ParseError(f"{path}: categorical column {name!r} holds non-integer codes")
        cols.append(Column(name, role, vals, kind))
    if simulated is None:
        simulated = any(c.role.latent for c in cols)
    return Dataset(tuple(cols), simulated=simulated, diagnostics=tuple(diagnostics))


def encode_categorical(ds: Dataset) -> Dataset:
    """Re-code categorical columns to contiguous integers ``0..k-1``."""
    cols = []
    changed = False
    for c in ds.columns:
        if c.kind != CATEGORICAL:
            cols.append(c)
            continue
        present = np.unique(c.values)
        if np.array_equal(present, np.arange(len(present))):
            cols.append(c)
            continue
        remap = {int(old): new for new, old in enumerate(present)}
        codes = np.array([remap[int(v)] for v in c.values], dtype=float)
        inverse = {code: label for label, code in c.codebook.items()}
        book = {inverse[old]: new for old, new in remap.items()}
        cols.append(replace(c, values=codes, codebook=book))
        changed = True
    if not changed:
        return ds
    return replace(ds, columns=tuple(cols))


DISCRETE_WEIGHTS = "discrete_weights"
GRID_WEIGHTS = "grid_weights"


@dataclass(frozen=True)
class ContrastSpec:
    """Contrast function over treatment values.

    ``base`` holds the base-measure weight of each support point: ones for a
    counting measure, trapezoid weights for a grid.
    """

    kind: str
    support: tuple[float, ...]
    weights: tuple[float, ...]
    base: tuple[float, ...] = field(default=())

    def __post_init__(self):
        support = tuple(float(s) for s in self.support)
        weights = tuple(float(w) for w in self.weights)
        if len(support) != len(weights):
            raise ContrastError("support and weights differ in length")
        if len(support) == 0:
            raise ContrastError("empty contrast support")
        if any(b <= a for a, b in zip(support, support[1:])):
            raise ContrastError("contrast support must be strictly increasing")
        if not all(math.isfinite(w) for w in weights):
            raise ContrastError("contrast weights must be finite")
        if self.kind == DISCRETE_WEIGHTS:
            base = (1.0,) * len(support)
        elif self.kind == GRID_WEIGHTS:
            base = tuple(_trapezoid(support))
        else:
            raise ContrastError(f"unknown contrast kind {self.kind!r}")
        object.__setattr__(self, "support", support)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "base", base)

    @property
    def effective(self):
        """pi(a) times the base-measure weight at each support point."""
        return np.asarray(self.weights) * np.asarray(self.base)

    def as_dict(self):
        return dict(zip(self.support, self.weights))

    def pi(self, a):
        """Contrast weight times base weight evaluated at treatment values ``a``."""
        a = np.asarray(a, dtype=float)
        out = np.zeros(a.shape)
        for s, w in zip(self.support, self.effective):
            out[a == s] = w
        return out

    def __add__(self, other):
        if self.kind != other.kind:
            raise ContrastError("cannot add contrasts of different kinds")
        merged = dict(self.as_dict())
        for s, w in other.as_dict().items():
            merged[s] = merged.get(s, 0.0) + w
        keys = sorted(merged)
        return ContrastSpec(self.kind, tuple(keys), tuple(merged[k] for k in keys))

    def scaled(self, factor):
        return ContrastSpec(self.kind, self.support, tuple(factor * w for w in self.weights))


def _trapezoid(x):
    x = np.asarray(x, dtype=float)
    if len(x) == 1:
        return np.ones(1)
    d = np.diff(x)
    w = np.zeros(len(x))
    w[:-1] += d / 2
    w[1:] += d / 2
    return w


def ate_contrast(a1, a0) -> ContrastSpec:
    if a1 == a0:
        raise ContrastError(f"ATE contrast needs two distinct treatment values, got {a1!r} twice")
    pairs = sorted([(float(a0), -1.0), (float(a1), 1.0)])
    return ContrastSpec(DISCRETE_WEIGHTS, tuple(p[0] for p in pairs), tuple(p[1] for p in pairs))


def grid_contrast(support, weights) -> ContrastSpec:
    return ContrastSpec(GRID_WEIGHTS, tuple(support), tuple(weights))
