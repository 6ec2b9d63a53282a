"""
Monte Carlo estimator studies for the ZIP3 regression.

A :class:`ScenarioConfig` describes the true coefficients and how each design
column is generated. :func:`run_study` draws ``n_reps`` datasets per sample
size, fits each one and reports bias and MSE of every coefficient over the
converged replicates.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field
from functools import partial
from typing import Dict, List, Sequence, Tuple

import numpy as np

from . import distribution as dist
from ._parallel import pmap, substream
from .errors import Zip3Error
from .links import get_link
from .regression import ModelSpec, fit

__all__ = [
    "ScenarioConfig",
    "McCell",
    "McSummary",
    "SCENARIO_1",
    "parse_generator",
    "generate_dataset",
    "run_study",
]

log = logging.getLogger(__name__)

_BERNOULLI = re.compile(r"^bernoulli\(\s*([0-9.eE+-]+)\s*\)$")


def parse_generator(tag: str):
    """Validate a covariate generator tag and return ``(kind, arg)``."""
    t = tag.strip().lower()
    if t in ("constant1", "uniform01"):
        return t, None
    m = _BERNOULLI.match(t)
    if m:
        p = float(m.group(1))
        if not 0.0 <= p <= 1.0:
            raise ValueError(f"bernoulli probability {p} outside [0, 1]")
        return "bernoulli", p
    raise ValueError(f"unknown covariate generator {tag!r}; use constant1, uniform01 or bernoulli(p)")


@dataclass(frozen=True)
class ScenarioConfig:
    beta_true: Tuple[float, ...]
    gamma_true: Tuple[float, ...]
    x_generators: Tuple[str, ...]
    z_generators: Tuple[str, ...]
    n_list: Tuple[int, ...]
    n_reps: int
    seed: int
    links: Tuple[str, str] = ("log", "log")

    def __post_init__(self):
        for name in ("beta_true", "gamma_true", "x_generators", "z_generators", "n_list", "links"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        object.__setattr__(self, "beta_true", tuple(float(b) for b in self.beta_true))
        object.__setattr__(self, "gamma_true", tuple(float(g) for g in self.gamma_true))
        object.__setattr__(self, "n_list", tuple(int(n) for n in self.n_list))
        for coefs, gens, label in ((self.beta_true, self.x_generators, "x"),
                                   (self.gamma_true, self.z_generators, "z")):
            if len(coefs) != len(gens):
                raise ValueError(f"{label}_generators has {len(gens)} entries for {len(coefs)} coefficients")
            if not gens or parse_generator(gens[0])[0] != "constant1":
                raise ValueError(f"first {label} generator must be constant1 (intercept)")
            for g in gens:
                parse_generator(g)
        if self.n_reps < 1:
            raise ValueError("n_reps must be >= 1")
        if not self.n_list or min(self.n_list) < 1:
            raise ValueError("n_list must contain positive sample sizes")
        if len(self.links) != 2:
            raise ValueError("links must name the mu and phi links")
        for tag in self.links:
            get_link(tag)

    @property
    def theta_true(self) -> np.ndarray:
        return np.array(self.beta_true + self.gamma_true)

    @property
    def param_names(self) -> List[str]:
        return [f"beta{j}" for j in range(len(self.beta_true))] + [
            f"gamma{j}" for j in range(len(self.gamma_true))
        ]


SCENARIO_1 = ScenarioConfig(
    beta_true=(-1.0, 1.0, 0.5),
    gamma_true=(1.0, 0.5),
    x_generators=("constant1", "uniform01", "bernoulli(0.5)"),
    z_generators=("constant1", "uniform01"),
    n_list=(50, 100, 200, 500),
    n_reps=1000,
    seed=20240517,
)


def _draw_design(generators: Sequence[str], n: int, rng: np.random.Generator) -> np.ndarray:
    cols = []
    for tag in generators:
        kind, arg = parse_generator(tag)
        if kind == "constant1":
            cols.append(np.ones(n))
        elif kind == "uniform01":
            cols.append(rng.random(n))
        else:
            cols.append((rng.random(n) < arg).astype(float))
    return np.column_stack(cols)


def generate_dataset(config: ScenarioConfig, n: int, rng) -> ModelSpec:
    """Draw covariates, then the response, for one replicate of size ``n``.

    ``rng`` is a ``numpy.random.Generator`` or anything accepted by
    ``numpy.random.default_rng``. Covariates of the mean and dispersion
    submodels are drawn independently.
    """
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    link_mu, link_phi = (get_link(t) for t in config.links)
    X = _draw_design(config.x_generators, n, rng)
    Z = _draw_design(config.z_generators, n, rng)
    mu = link_mu.inverse(X @ np.array(config.beta_true))
    phi = link_phi.inverse(Z @ np.array(config.gamma_true))
    y = dist.sample(dist.Zip3Params(mu, phi), None, rng)
    return ModelSpec(y, X, Z, link_mu, link_phi)


@dataclass
class McCell:
    """Replicate-level results and summaries for one sample size."""

    n: int
    estimates: np.ndarray      # (n_reps, s); NaN rows for failed replicates
    std_errors: np.ndarray     # (n_reps, s)
    converged: np.ndarray      # (n_reps,) bool
    truth: np.ndarray

    @property
    def n_converged(self) -> int:
        return int(self.converged.sum())

    @property
    def n_failed(self) -> int:
        return int((~self.converged).sum())

    @property
    def bias(self) -> np.ndarray:
        ok = self.estimates[self.converged]
        if ok.shape[0] == 0:
            return np.full(self.truth.shape, np.nan)
        return ok.mean(axis=0) - self.truth

    @property
    def mse(self) -> np.ndarray:
        ok = self.estimates[self.converged]
        if ok.shape[0] == 0:
            return np.full(self.truth.shape, np.nan)
        return ((ok - self.truth) ** 2).mean(axis=0)

    @property
    def coverage(self) -> np.ndarray:
        """Fraction of converged replicates whose 95% Wald interval covers the truth."""
        ok = self.converged
        if not ok.any():
            return np.full(self.truth.shape, np.nan)
        hit = np.abs(self.estimates[ok] - self.truth) <= 1.96 * self.std_errors[ok]
        return hit.mean(axis=0)


@dataclass
class McSummary:
    config: ScenarioConfig
    cells: Dict[int, McCell] = field(default_factory=dict)

    @property
    def param_names(self) -> List[str]:
        return self.config.param_names

    def bias(self, n: int) -> np.ndarray:
        return self.cells[n].bias

    def mse(self, n: int) -> np.ndarray:
        return self.cells[n].mse

    def table_columns(self) -> List[str]:
        """Column order: biases then MSEs for beta, then the same for gamma."""
        q1 = len(self.config.beta_true)
        names = self.param_names
        cols = ["n"]
        for block in (names[:q1], names[q1:]):
            cols += [f"B_{p}" for p in block]
            cols += [f"MSE_{p}" for p in block]
        return cols + ["n_converged", "n_failed"]

    def table_rows(self) -> List[list]:
        index = {p: j for j, p in enumerate(self.param_names)}
        rows = []
        for n in self.config.n_list:
            cell = self.cells[n]
            bias, mse = cell.bias, cell.mse
            row = [n]
            for col in self.table_columns()[1:-2]:
                kind, p = col.split("_", 1)
                row.append(float(bias[index[p]] if kind == "B" else mse[index[p]]))
            rows.append(row + [cell.n_converged, cell.n_failed])
        return rows


def _replicate(task, config: ScenarioConfig, fit_options: dict):
    n, rep = task
    s = len(config.beta_true) + len(config.gamma_true)
    rng = substream(config.seed, n, rep)
    try:
        spec = generate_dataset(config, n, rng)
        res = fit(spec, **fit_options)
    except (Zip3Error, np.linalg.LinAlgError, FloatingPointError) as exc:
        log.debug("replicate (n=%d, rep=%d) failed: %s", n, rep, exc)
        return np.full(s, np.nan), np.full(s, np.nan), False
    if not res.converged or not np.all(np.isfinite(res.se)):
        return res.params, res.se, False
    return res.params, res.se, True


def run_study(config: ScenarioConfig, n_jobs=1, **fit_options) -> McSummary:
    """Run every replicate of every sample size and aggregate.

    Each replicate draws from its own stream keyed by ``(seed, n, rep)``, so the
    result is identical for any ``n_jobs``. Replicates whose fit raises or does
    not converge are counted in ``n_failed`` and left out of bias and MSE.
    """
    tasks = [(n, rep) for n in config.n_list for rep in range(config.n_reps)]
    out = pmap(partial(_replicate, config=config, fit_options=fit_options), tasks, n_jobs=n_jobs)
    summary = McSummary(config)
    truth = config.theta_true
    k = 0
    for n in config.n_list:
        block = out[k:k + config.n_reps]
        k += config.n_reps
        est = np.array([b[0] for b in block])
        se = np.array([b[1] for b in block])
        conv = np.array([b[2] for b in block], dtype=bool)
        summary.cells[n] = McCell(n=n, estimates=est, std_errors=se, converged=conv, truth=truth)
        if (~conv).any():
            log.info("n=%d: %d of %d replicates failed", n, int((~conv).sum()), config.n_reps)
    return summary
