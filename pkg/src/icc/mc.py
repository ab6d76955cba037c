"""Monte Carlo harness.

Replication ``r`` uses seed ``seed + r``. Each replication yields one row per
estimator; rows are aggregated in replication order, so results do not depend
on the number of workers.
"""
from __future__ import annotations

import csv
import io
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .bridge import effect_from_outcome_bridge, fit_outcome_bridge
from .data import ContrastSpec, ate_contrast
from .errors import DomainError, ICCError
from .linear import fit_2sls, fit_icc, fit_ols
from .synth import (DiscretePopulation, LinearDGPSpec, draw_linear, frame_from_dataset,
                    sample_discrete, true_J)

log = logging.getLogger(__name__)

Z975 = 1.959963984540054


# --------------------------------------------------------------------------
# data-generating processes and estimators


@dataclass(frozen=True)
class LinearDGP:
    spec: LinearDGPSpec
    rank: int | str | None = None

    @property
    def truth(self):
        return float(self.spec.beta[0])

    def sample(self, n, seed):
        return draw_linear(self.spec, n, seed)

    def describe(self):
        return {"kind": "linear", **self.spec.as_dict()}


@dataclass(frozen=True)
class DiscreteDGP:
    population: DiscretePopulation
    contrast: ContrastSpec = field(default_factory=lambda: ate_contrast(1, 0))
    solve_tol: float = 0.1

    @property
    def truth(self):
        return true_J(self.population, self.contrast)

    def sample(self, n, seed):
        return frame_from_dataset(sample_discrete(self.population, n, seed))

    def describe(self):
        return {"kind": "discrete", "dims": list(self.population.dims)}


def _linear_ols(dgp, d):
    r = fit_ols(d["y"], d["a"])
    return r.coef[0], r.se[0]


def _linear_2sls(dgp, d):
    r = fit_2sls(d["y"], d["a"], d["z"])
    return r.coef[0], r.se[0]


def _linear_icc(dgp, d):
    rank = dgp.rank if dgp.rank is not None else dgp.spec.dims[3]
    r = fit_icc(d["y"], d["a"], d["z"], d["w"], rank=rank)
    return r.beta_hat[0], r.se[0]


def _discrete_bridge(dgp, frame):
    sol, inputs = fit_outcome_bridge(frame, tol=dgp.solve_tol, rcond=1.0 / np.sqrt(frame.n))
    return effect_from_outcome_bridge(sol, inputs.p_w, dgp.contrast), None


ESTIMATORS = {
    "ols": _linear_ols,
    "2sls": _linear_2sls,
    "icc": _linear_icc,
    "discrete": _discrete_bridge,
}


def _resolve(est):
    if callable(est):
        return getattr(est, "__name__", "estimator"), est
    if est not in ESTIMATORS:
        raise DomainError(f"unknown estimator {est!r}; choose from {sorted(ESTIMATORS)}")
    return est, ESTIMATORS[est]


# --------------------------------------------------------------------------
# harness


@dataclass(frozen=True)
class McRow:
    estimator: str
    mean: float
    bias: float
    sd: float
    rmse: float
    coverage: float
    R: int
    failures: int
    n: int


@dataclass(frozen=True)
class McTable:
    rows: tuple
    truth: float
    seeds: tuple
    n: int
    estimates: dict

    def row(self, name):
        for r in self.rows:
            if r.estimator == name:
                return r
        raise KeyError(name)

    def to_csv(self):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["estimator", "mean", "bias", "sd", "rmse", "coverage", "R", "failures", "n", "truth"])
        for r in self.rows:
            writer.writerow([r.estimator, _f(r.mean), _f(r.bias), _f(r.sd), _f(r.rmse), _f(r.coverage),
                             r.R, r.failures, r.n, _f(self.truth)])
        return buf.getvalue()

    def seeds_csv(self):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["replication", "seed"])
        writer.writerows(enumerate(self.seeds))
        return buf.getvalue()

    def to_markdown(self):
        lines = [
            f"truth = {_f(self.truth)}, n = {self.n}, R = {len(self.seeds)}, "
            f"seeds {self.seeds[0]}..{self.seeds[-1]}",
            "",
            "| estimator | mean | bias | sd | rmse | coverage | R | failures |",
            "|---|---|---|---|---|---|---|---|",
        ]
        for r in self.rows:
            lines.append(f"| {r.estimator} | {_f(r.mean, 6)} | {_f(r.bias, 6)} | {_f(r.sd, 6)} | "
                         f"{_f(r.rmse, 6)} | {_f(r.coverage, 4)} | {r.R} | {r.failures} |")
        return "\n".join(lines) + "\n"


def _f(x, digits=12):
    if x is None or (isinstance(x, float) and np.isnan(x)):
        return "NA"
    return f"{x:.{digits}g}"


def _replicate(args):
    dgp, names, n, seed = args
    data = dgp.sample(n, seed)
    out = []
    for name in names:
        _, fn = _resolve(name)
        try:
            est, se = fn(dgp, data)
            out.append((float(est), None if se is None else float(se)))
        except (ICCError, np.linalg.LinAlgError) as exc:
            log.debug("replication seed %d, %s failed: %s", seed, name, exc)
            out.append(None)
    return out


def summarize(name, draws, truth, n):
    ok = [d for d in draws if d is not None]
    failures = len(draws) - len(ok)
    if not ok:
        nan = float("nan")
        return McRow(name, nan, nan, nan, nan, nan, 0, failures, n)
    est = np.array([e for e, _ in ok])
    mean = float(est.mean())
    bias = mean - truth
    sd = float(est.std())  # ddof=0 so that rmse^2 = bias^2 + sd^2
    rmse = float(np.sqrt(np.mean((est - truth) ** 2)))
    ses = [s for _, s in ok]
    if all(s is not None for s in ses):
        se = np.array(ses)
        coverage = float(np.mean(np.abs(est - truth) <= Z975 * se))
    else:
        coverage = float("nan")
    return McRow(name, mean, bias, sd, rmse, coverage, len(ok), failures, n)


def run_mc(dgp, estimators, R, n, seed, workers=1) -> McTable:
    """Repeat sample-and-estimate ``R`` times; replication r uses ``seed + r``."""
    if R < 1:
        raise DomainError("R must be at least 1")
    if n < 10:
        raise DomainError("n must be at least 10")
    names = [_resolve(e)[0] if not callable(e) else e for e in estimators]
    seeds = tuple(int(seed) + r for r in range(R))
    jobs = [(dgp, names, n, s) for s in seeds]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_replicate, jobs, chunksize=max(1, R // (4 * workers))))
    else:
        results = [_replicate(job) for job in jobs]
    truth = dgp.truth
    labels = [_resolve(e)[0] for e in names]
    rows = tuple(summarize(label, [res[j] for res in results], truth, n) for j, label in enumerate(labels))
    estimates = {label: [res[j] for res in results] for j, label in enumerate(labels)}
    return McTable(rows, truth, seeds, n, estimates)
