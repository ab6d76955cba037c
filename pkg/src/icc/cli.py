"""Command-line interface: ``icc simulate | estimate | mc | oracle-check | checklist``.

Every command except ``checklist`` reads a YAML config. Flags override config
keys, which override defaults. Outputs carry no timestamps, so reruns of the
same config produce byte-identical files.

Exit codes: 0 success, 1 oracle check failure, 2 config error,
3 identification error, 4 internal error.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from pathlib import Path

import numpy as np
import yaml

from . import errors as E
from .data import CATEGORICAL, ContrastSpec, Dataset, ate_contrast, grid_contrast, load_csv
from .estimators import EstimateReport
from .linear import STRUCTURAL
from .mc import DiscreteDGP, LinearDGP, run_mc
from .oracle import discrete_suite, first_stage_suite
from .pipelines import DEFAULT_BINS, METHODS, SAMPLE_TOL, report_rows, run_pipeline
from .sieve import BasisSpec
from .synth import (LinearDGPSpec, default_linear_spec, random_first_stage_population, random_population,
                    sample_discrete, sample_linear, sample_monotone, true_J)

log = logging.getLogger("icc")

EXIT_OK, EXIT_CHECK_FAILED, EXIT_CONFIG, EXIT_IDENTIFICATION, EXIT_INTERNAL = 0, 1, 2, 3, 4

CONFIG_ERRORS = (E.ConfigError, E.SchemaError, E.ParseError, E.SpecError, E.ContrastError, E.DomainError)
IDENTIFICATION_ERRORS = (E.IdentificationError, E.SupportError, E.SingularityError, E.DimensionError,
                         E.BinningError, E.NoPerturbationError, E.OverparameterizationError)

CHECKLIST = (
    ("Z exogeneity", "Y(a) independent of Z given U, for every treatment value a."),
    ("W exogeneity", "W(a, z) = W and W independent of (A, Z) given U; unobservables needed for this go into U."),
    ("W relevance",
     "E[g(A, U) | A, W] = 0 implies g = 0 (W complete for U given A). "
     "Discrete check: rank P(W | U) = d_U, so d_W >= d_U."),
    ("Z relevance",
     "E[g(A, U) | Z] = 0 implies g = 0 (Z complete for (A, U)). "
     "Discrete check: rank P(A, U | Z) = d_A * d_U, so d_Z >= d_A * d_U."),
)


# --------------------------------------------------------------------------
# config access


class Config:
    """Nested mapping with path-aware typed access."""

    def __init__(self, data, path=""):
        if data is None:
            data = {}
        if not isinstance(data, dict):
            raise E.ConfigError("expected a mapping", path or "<root>")
        self.data = data
        self.path = path

    def _p(self, key):
        return f"{self.path}.{key}" if self.path else key

    def has(self, key):
        return key in self.data and self.data[key] is not None

    def section(self, key, required=False):
        if not self.has(key):
            if required:
                raise E.ConfigError("missing section", self._p(key))
            return Config({}, self._p(key))
        return Config(self.data[key], self._p(key))

    def get(self, key, kind=None, default=None, required=False, choices=None):
        if not self.has(key):
            if required:
                raise E.ConfigError("missing required key", self._p(key))
            return default
        val = self.data[key]
        try:
            if kind is int:
                if isinstance(val, bool) or float(val) != int(val):
                    raise ValueError
                val = int(val)
            elif kind is float:
                if isinstance(val, bool):
                    raise ValueError
                val = float(val)
            elif kind is list:
                if not isinstance(val, list):
                    raise ValueError
            elif kind is str:
                val = str(val)
        except (TypeError, ValueError):
            raise E.ConfigError(f"expected {kind.__name__}, got {val!r}", self._p(key)) from None
        if choices is not None and val not in choices:
            raise E.ConfigError(f"must be one of {list(choices)}, got {val!r}", self._p(key))
        return val

    def only(self, *allowed):
        extra = sorted(set(self.data) - set(allowed))
        if extra:
            raise E.ConfigError(f"unknown key(s) {extra}; allowed: {sorted(allowed)}", self._p(extra[0]))
        return self


def load_config(path):
    path = Path(path)
    if not path.exists():
        raise E.ConfigError(f"config file not found: {path}")
    try:
        data = yaml.safe_load(path.read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise E.ConfigError(f"invalid YAML: {exc}") from None
    if not data:
        raise E.ConfigError("config is empty")
    cfg = Config(data)
    cfg.only("seed", "out", "n", "dgp", "data", "estimator", "mc", "populations", "contrast")
    return cfg


def _seed(cfg, args):
    if args.seed is not None:
        return int(args.seed)
    return cfg.get("seed", int, required=True)


def _out(cfg, args, default):
    return Path(args.out or cfg.get("out", str, default))


def _contrast(cfg: Config) -> ContrastSpec:
    sec = cfg.section("contrast").only("kind", "a1", "a0", "support", "weights")
    kind = sec.get("kind", str, "ate", choices=("ate", "grid", "weights"))
    if kind == "ate":
        return ate_contrast(sec.get("a1", float, 1.0), sec.get("a0", float, 0.0))
    support = sec.get("support", list, required=True)
    weights = sec.get("weights", list, required=True)
    if kind == "grid":
        return grid_contrast(support, weights)
    return ContrastSpec("discrete_weights", tuple(float(s) for s in support), tuple(float(w) for w in weights))


# --------------------------------------------------------------------------
# data-generating processes


def build_dgp(sec: Config, seed):
    """``(kind, object)`` for a ``dgp`` section; population seeds default to ``seed``."""
    kind = sec.get("kind", str, required=True, choices=("linear", "discrete", "first_stage"))
    if kind == "linear":
        sec.only("kind", "spec", "rank")
        spec_sec = sec.section("spec")
        if spec_sec.data:
            base = default_linear_spec().as_dict()
            spec_sec.only(*base)
            base.update(spec_sec.data)
            try:
                spec = LinearDGPSpec(**base)
            except E.SpecError as exc:
                raise E.ConfigError(str(exc), spec_sec.path) from None
        else:
            spec = default_linear_spec()
        return kind, spec
    if kind == "discrete":
        sec.only("kind", "dims", "population_seed", "y_noise_sd", "support_floor")
        dims = sec.get("dims", list, required=True)
        if len(dims) != 4:
            raise E.ConfigError("dims must list (d_U, d_Z, d_A, d_W)", sec._p("dims"))
        return kind, random_population(dims, sec.get("population_seed", int, seed),
                                       sec.get("support_floor", float, 1e-4), sec.get("y_noise_sd", float, 1.0))
    sec.only("kind", "population_seed", "d_u", "d_w0", "d_w1", "grid", "y_noise_sd")
    return kind, random_first_stage_population(
        sec.get("population_seed", int, seed), sec.get("d_u", int, 2), sec.get("d_w0", int, 3),
        sec.get("d_w1", int, 3), sec.get("grid", int, 21), y_noise_sd=sec.get("y_noise_sd", float, 0.5))


def _simulate(kind, dgp, n, seed) -> Dataset:
    if kind == "linear":
        return sample_linear(dgp, n, seed)
    if kind == "discrete":
        return sample_discrete(dgp, n, seed)
    return sample_monotone(dgp, n, seed)


def _truth(kind, dgp, c):
    if kind == "linear":
        return {"beta": [float(b) for b in dgp.beta]}
    return {"J": float(true_J(dgp, c))}


def _describe(kind, dgp, sec: Config):
    if kind == "linear":
        return {"kind": kind, **dgp.as_dict()}
    return {"kind": kind, **{k: v for k, v in sec.data.items() if k != "kind"}, "dims": list(dgp.dims)}


# --------------------------------------------------------------------------
# writers


def _num(x, categorical=False):
    x = float(x)
    return str(int(x)) if categorical else repr(x)


def dataset_csv(ds: Dataset) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(ds.names)
    cats = [c.kind == CATEGORICAL for c in ds.columns]
    for row in zip(*[c.values for c in ds.columns]):
        writer.writerow([_num(v, cat) for v, cat in zip(row, cats)])
    return buf.getvalue()


def role_map(ds: Dataset):
    return {c.name: {"role": c.role.value, "kind": c.kind} for c in ds.columns}


def _dump(data) -> str:
    return yaml.safe_dump(_plain(data), sort_keys=True, default_flow_style=None, width=100)


def _plain(x):
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, np.ndarray):
        return _plain(x.tolist())
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        return float(x)
    return x


def _write(path: Path, text):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


def _emit(args, payload, text):
    if args.json:
        print(json.dumps(_plain(payload), sort_keys=True))
    else:
        sys.stdout.write(text)


def sidecar_path(csv_path):
    csv_path = Path(csv_path)
    return csv_path.with_name(csv_path.stem + ".truth.yaml")


# --------------------------------------------------------------------------
# commands


def cmd_simulate(cfg: Config, args):
    seed = _seed(cfg, args)
    n = cfg.get("n", int, required=True)
    if n < 1:
        raise E.ConfigError("must be positive", "n")
    dgp_sec = cfg.section("dgp", required=True)
    kind, dgp = build_dgp(dgp_sec, seed)
    c = _contrast(cfg)
    ds = _simulate(kind, dgp, n, seed)
    out = _out(cfg, args, "out")
    data_path = out / "data.csv"
    _write(data_path, dataset_csv(ds))
    truth = _truth(kind, dgp, c)
    side = {
        "truth": truth, "dgp": _describe(kind, dgp, dgp_sec), "n": n, "seed": seed,
        "contrast": {"support": list(c.support), "weights": list(c.weights), "kind": c.kind},
        "roles": role_map(ds), "latent_columns": [col.name for col in ds.columns if col.role.latent],
    }
    _write(sidecar_path(data_path), _dump(side))
    _emit(args, {"data": str(data_path), "sidecar": str(sidecar_path(data_path)), "truth": truth},
          f"wrote {data_path} and {sidecar_path(data_path)}\n")
    return EXIT_OK


def _estimator_options(sec: Config, cfg: Config):
    sec.only("method", "rank", "residual", "solve_tol", "rcond", "bins", "moment", "basis_h", "basis_z")
    opts = {"contrast": _contrast(cfg)}
    rank = sec.get("rank", None, "auto")
    if rank != "auto":
        rank = sec.get("rank", int)
    opts["rank"] = rank
    opts["residual"] = sec.get("residual", str, STRUCTURAL, choices=("structural", "projected"))
    opts["solve_tol"] = sec.get("solve_tol", float, SAMPLE_TOL)
    if opts["solve_tol"] <= 0:
        raise E.ConfigError("must be positive", sec._p("solve_tol"))
    opts["rcond"] = sec.get("rcond", None, "auto")
    if opts["rcond"] != "auto":
        opts["rcond"] = sec.get("rcond", float)
    opts["n_bins"] = sec.get("bins", int, DEFAULT_BINS)
    opts["moment"] = sec.get("moment", str, "dr", choices=("ipw", "reg", "dr"))
    for key in ("basis_h", "basis_z"):
        b = sec.section(key).only("family", "degree", "interaction", "knots", "levels", "ridge")
        if b.data:
            try:
                opts[key] = BasisSpec(**{k: tuple(v) if isinstance(v, list) else v for k, v in b.data.items()})
            except (TypeError, E.SpecError) as exc:
                raise E.ConfigError(str(exc), b.path) from None
    return opts


def _load_data(cfg: Config, args):
    """Dataset from ``data`` (CSV) or ``dgp`` (simulated); exactly one must be given."""
    if cfg.has("data") == cfg.has("dgp"):
        raise E.ConfigError("give exactly one data source: 'data' or 'dgp'")
    if cfg.has("data"):
        sec = cfg.section("data").only("path", "roles")
        path = Path(sec.get("path", str, required=True))
        roles = sec.get("roles", None)
        if roles is None:
            side = sidecar_path(path)
            if not side.exists():
                raise E.ConfigError("no role map given and no sidecar next to the data file", sec._p("roles"))
            roles = yaml.safe_load(side.read_text(encoding="utf-8")).get("roles")
        if not isinstance(roles, dict):
            raise E.ConfigError("expected a mapping of column name to role", sec._p("roles"))
        return load_csv(path, roles), None
    seed = _seed(cfg, args)
    kind, dgp = build_dgp(cfg.section("dgp"), seed)
    n = cfg.get("n", int, required=True)
    return _simulate(kind, dgp, n, seed), (kind, dgp)


def _observed(ds: Dataset) -> Dataset:
    keep = tuple(c for c in ds.columns if not c.role.latent)
    return Dataset(keep, simulated=False, diagnostics=ds.diagnostics)


def _report_md(rows, title):
    lines = [f"# {title}", "", "| key | value |", "|---|---|"]
    lines += [f"| {k} | {v} |" for k, v in rows]
    return "\n".join(lines) + "\n"


def _rows_csv(rows, header=("key", "value")):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def cmd_estimate(cfg: Config, args):
    sec = cfg.section("estimator", required=True)
    method = sec.get("method", str, required=True, choices=METHODS)
    opts = _estimator_options(sec, cfg)
    ds, _ = _load_data(cfg, args)
    ds = _observed(ds)
    out = _out(cfg, args, "out")
    try:
        report = run_pipeline(method, ds, **opts)
    except IDENTIFICATION_ERRORS as exc:
        rows = [("status", "identification_error"), ("error", str(exc)), ("method", method)]
        rows += [(k, v) for k, v in report_rows_from(getattr(exc, "diagnostics", ()))]
        _write(out / "estimate.csv", _rows_csv(rows))
        _write(out / "estimate.md", _report_md(rows, "Estimate"))
        raise
    rows = [("status", "ok"), ("method", method)] + report_rows(report)
    rows += [("data_note", d) for d in ds.diagnostics]
    _write(out / "estimate.csv", _rows_csv(rows))
    md = _report_md(rows, "Estimate")
    _write(out / "estimate.md", md)
    _emit(args, dict(rows), md)
    return EXIT_OK


def report_rows_from(diagnostics):
    return report_rows(EstimateReport(float("nan"), "", 0, None, tuple(diagnostics)))[4:]


def cmd_mc(cfg: Config, args):
    seed = _seed(cfg, args)
    sec = cfg.section("mc", required=True).only("R", "n", "estimators", "workers")
    R = sec.get("R", int, required=True)
    n = sec.get("n", int, required=True)
    if R < 1:
        raise E.ConfigError("must be at least 1", sec._p("R"))
    if n < 10:
        raise E.ConfigError("must be at least 10", sec._p("n"))
    workers = sec.get("workers", int, 1)
    dgp_sec = cfg.section("dgp", required=True)
    kind, obj = build_dgp(dgp_sec, seed)
    if kind == "linear":
        dgp = LinearDGP(obj, dgp_sec.get("rank", int, None))
        default = ["ols", "2sls", "icc"]
    elif kind == "discrete":
        est_sec = cfg.section("estimator")
        dgp = DiscreteDGP(obj, _contrast(cfg), est_sec.get("solve_tol", float, SAMPLE_TOL))
        default = ["discrete"]
    else:
        raise E.ConfigError("Monte Carlo supports linear and discrete dgps", dgp_sec._p("kind"))
    names = sec.get("estimators", list, default)
    allowed = ("ols", "2sls", "icc") if kind == "linear" else ("discrete",)
    for i, name in enumerate(names):
        if name not in allowed:
            raise E.ConfigError(f"unknown estimator {name!r} for a {kind} dgp; allowed: {list(allowed)}",
                                f"{sec._p('estimators')}[{i}]")
    table = run_mc(dgp, names, R, n, seed, workers)
    out = _out(cfg, args, "out")
    _write(out / "mc.csv", table.to_csv())
    _write(out / "mc.md", table.to_markdown())
    _write(out / "mc_seeds.csv", table.seeds_csv())
    payload = {"truth": table.truth, "rows": [r.__dict__ for r in table.rows]}
    _emit(args, payload, table.to_markdown())
    return EXIT_OK


def cmd_oracle_check(cfg: Config, args):
    pops = cfg.get("populations", list, None)
    if pops is None:
        if not cfg.has("dgp"):
            raise E.ConfigError("give 'populations' (a list) or a single 'dgp' section")
        pops = [cfg.data["dgp"]]
        base_path = "dgp"
    else:
        base_path = "populations"
    seed = cfg.get("seed", int, 0) if args.seed is None else int(args.seed)
    c = _contrast(cfg)
    reports = []
    for i, raw in enumerate(pops):
        sec = Config(raw, f"{base_path}[{i}]" if base_path == "populations" else base_path)
        kind, obj = build_dgp(sec, seed)
        label = f"{kind}:{sec.get('population_seed', int, seed)}"
        if kind == "discrete":
            reports.append(discrete_suite(obj, c, seed=seed, label=label))
        elif kind == "first_stage":
            reports.append(first_stage_suite(obj, c, seed=seed, label=label))
        else:
            raise E.ConfigError("oracle checks need a discrete or first_stage population", sec._p("kind"))
    rows = []
    for rep in reports:
        for ch in rep.checks:
            rows.append((rep.population, ch.name, ch.status,
                         "NA" if ch.residual is None else repr(ch.residual),
                         "NA" if ch.tol is None else repr(ch.tol), ch.reason))
    header = ("population", "check", "status", "residual", "tol", "reason")
    out = _out(cfg, args, "out")
    _write(out / "oracle.csv", _rows_csv(rows, header))
    md = ["| " + " | ".join(header) + " |", "|" + "---|" * len(header)]
    md += ["| " + " | ".join(r) + " |" for r in rows]
    passed = all(r.passed for r in reports)
    md_text = "\n".join(md) + f"\n\noverall: {'pass' if passed else 'fail'}\n"
    _write(out / "oracle.md", md_text)
    _emit(args, {"passed": passed, "reports": [r.as_dict() for r in reports]}, md_text)
    return EXIT_OK if passed else EXIT_CHECK_FAILED


def cmd_checklist(args):
    if args.json:
        print(json.dumps([{"step": i + 1, "name": n, "check": t} for i, (n, t) in enumerate(CHECKLIST)],
                         indent=2))
    else:
        for i, (name, text) in enumerate(CHECKLIST, start=1):
            print(f"{i}. {name}: {text}")
    return EXIT_OK


# --------------------------------------------------------------------------
# entry point


def build_parser():
    parser = argparse.ArgumentParser(prog="icc", description="Instrumented common confounding toolkit")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_ in (("simulate", "draw a synthetic dataset and its truth sidecar"),
                        ("estimate", "estimate a causal contrast"),
                        ("mc", "run a Monte Carlo experiment"),
                        ("oracle-check", "run the population invariant suite")):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", required=True, help="YAML config file")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--out", help="output directory (overrides config 'out')")
        p.add_argument("--json", action="store_true", help="print machine-readable output")
    p = sub.add_parser("checklist", help="print the model-construction checklist")
    p.add_argument("--json", action="store_true")
    return parser


COMMANDS = {"simulate": cmd_simulate, "estimate": cmd_estimate, "mc": cmd_mc, "oracle-check": cmd_oracle_check}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "checklist":
            return cmd_checklist(args)
        cfg = load_config(args.config)
        return COMMANDS[args.command](cfg, args)
    except CONFIG_ERRORS as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except IDENTIFICATION_ERRORS as exc:
        print(f"identification error: {exc}", file=sys.stderr)
        return EXIT_IDENTIFICATION
    except E.ICCError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except Exception as exc:  # noqa: BLE001
        log.exception("internal error")
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
