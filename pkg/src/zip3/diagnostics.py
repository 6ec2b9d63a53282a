"""
Residual and influence diagnostics for fitted ZIP3 regressions.

Randomized quantile residuals put ``u_i`` uniformly between the fitted cdf at
``y_i - 1`` and at ``y_i`` and map it through the standard normal quantile.
Simulated envelopes refit the model on responses drawn from the fitted
distribution. Case-deletion influence refits without each observation,
warm-started at the full-data estimate.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass
from functools import partial
from typing import Optional

import numpy as np
from scipy.special import ndtri

from . import distribution as dist
from ._parallel import pmap, substream
from .errors import Zip3Error
from .regression import FitResult, ModelSpec, fit as fit_model, log_likelihood

__all__ = [
    "ResidualSet",
    "EnvelopeBand",
    "InfluenceReport",
    "quantile_residuals",
    "residuals_from_uniforms",
    "normal_scores",
    "simulated_envelope",
    "deletion_fits",
    "likelihood_displacement",
    "relative_changes",
    "influence",
]

log = logging.getLogger(__name__)

_MIN_WIDTH = 1e-15
_MAX_DROP_FRACTION = 0.2


@dataclass(frozen=True)
class ResidualSet:
    q: np.ndarray
    seed: int
    u: np.ndarray


@dataclass(frozen=True)
class EnvelopeBand:
    sorted_residuals: np.ndarray
    lower: np.ndarray
    median: np.ndarray
    upper: np.ndarray
    n_sim: int
    coverage: float
    theoretical: np.ndarray
    n_dropped: int = 0

    def inside_fraction(self) -> float:
        r = self.sorted_residuals
        return float(np.mean((r >= self.lower) & (r <= self.upper)))


@dataclass(frozen=True)
class InfluenceReport:
    ld: np.ndarray      # (n,)
    rc: np.ndarray      # (n, s), percent
    rcse: np.ndarray    # (n, s), percent


def _open_uniform(rng: np.random.Generator, n: int) -> np.ndarray:
    # 53-bit grid strictly inside (0, 1)
    return rng.integers(1, 2**53, size=n, dtype=np.int64) / float(2**53)


def residuals_from_uniforms(y, mu, phi, uniforms) -> np.ndarray:
    """Quantile residuals for given ``U ~ Uniform(0, 1)`` draws.

    ``u_i = F(y_i - 1) + U_i (F(y_i) - F(y_i - 1))``; a midpoint residual is
    obtained with ``U_i = 0.5``.
    """
    y = np.asarray(y)
    lo = dist._cdf(y - 1, mu, phi)
    hi = dist._cdf(y, mu, phi)
    width = hi - lo
    thin = width < _MIN_WIDTH
    if np.any(thin):
        warnings.warn(
            f"{int(thin.sum())} residual interval(s) narrower than {_MIN_WIDTH:g}; widened",
            RuntimeWarning,
            stacklevel=2,
        )
        width = np.where(thin, _MIN_WIDTH, width)
        lo = np.where(thin, np.minimum(lo, 1.0 - _MIN_WIDTH), lo)
    u = lo + np.asarray(uniforms, dtype=float) * width
    u = np.clip(u, np.finfo(float).tiny, 1.0 - np.finfo(float).epsneg)
    return ndtri(u), u


def _draw_residuals(y, mu, phi, rng):
    return residuals_from_uniforms(y, mu, phi, _open_uniform(rng, np.size(y)))


def quantile_residuals(fit: FitResult, spec: ModelSpec, seed: int) -> ResidualSet:
    """Randomized quantile residuals of a fitted model, reproducible from ``seed``."""
    q, u = _draw_residuals(spec.y, fit.mu_hat, fit.phi_hat, np.random.default_rng(seed))
    return ResidualSet(q=q, seed=int(seed), u=u)


def normal_scores(n: int) -> np.ndarray:
    """Expected standard normal order statistics (Blom's approximation)."""
    i = np.arange(1, n + 1)
    return ndtri((i - 0.375) / (n + 0.25))


def _envelope_replicate(r, spec: ModelSpec, fit: FitResult, seed: int, fit_options: dict):
    rng = substream(seed, 1, r)
    y_sim = dist._sample(fit.mu_hat, fit.phi_hat, rng)
    try:
        sim_spec = spec.with_response(y_sim)
        res = fit_model(sim_spec, start=fit.theta_hat, **fit_options)
    except (Zip3Error, np.linalg.LinAlgError) as exc:
        log.debug("envelope replicate %d failed: %s", r, exc)
        return None
    if not res.converged:
        return None
    q, _ = _draw_residuals(y_sim, res.mu_hat, res.phi_hat, rng)
    return np.sort(q)


def simulated_envelope(fit: FitResult, spec: ModelSpec, n_sim: int = 100, coverage: float = 0.95,
                       seed: int = 0, n_jobs=1, **fit_options) -> EnvelopeBand:
    """Pointwise band for sorted quantile residuals from refits on simulated responses.

    The observed residuals are those of :func:`quantile_residuals` with the
    same ``seed``. Replicate ``r`` uses its own stream keyed by ``(seed, r)``.
    Replicates whose refit fails are dropped with a warning; more than 20%
    dropped raises ``RuntimeError``.
    """
    if n_sim < 1:
        raise ValueError("n_sim must be >= 1")
    if not 0.0 < coverage < 1.0:
        raise ValueError("coverage must lie in (0, 1)")
    observed = np.sort(quantile_residuals(fit, spec, seed).q)
    task = partial(_envelope_replicate, spec=spec, fit=fit, seed=seed, fit_options=fit_options)
    sims = pmap(task, range(n_sim), n_jobs=n_jobs)
    kept = [q for q in sims if q is not None]
    dropped = n_sim - len(kept)
    if dropped:
        warnings.warn(f"{dropped} of {n_sim} envelope replicates failed to refit and were dropped",
                      RuntimeWarning, stacklevel=2)
    if dropped > _MAX_DROP_FRACTION * n_sim:
        raise RuntimeError(f"{dropped} of {n_sim} envelope replicates failed (limit 20%)")
    M = np.vstack(kept)
    alpha = 0.5 * (1.0 - coverage)
    lower, median, upper = np.quantile(M, [alpha, 0.5, 1.0 - alpha], axis=0)
    return EnvelopeBand(
        sorted_residuals=observed,
        lower=lower,
        median=median,
        upper=upper,
        n_sim=len(kept),
        coverage=float(coverage),
        theoretical=normal_scores(spec.n),
        n_dropped=dropped,
    )


def _deletion_task(i, spec: ModelSpec, start, fit_options: dict) -> Optional[FitResult]:
    keep = np.ones(spec.n, dtype=bool)
    keep[i] = False
    try:
        res = fit_model(spec.subset(keep), start=start, **fit_options)
    except (Zip3Error, np.linalg.LinAlgError) as exc:
        log.debug("deletion fit without case %d failed: %s", i, exc)
        return None
    return res if res.converged else None


def deletion_fits(fit: FitResult, spec: ModelSpec, cases=None, n_jobs=1, **fit_options):
    """Refit without each case in ``cases`` (default: every case).

    Returns a list aligned with ``cases``; failed refits are ``None``.
    """
    if spec.n < spec.s + 2:
        raise ValueError(f"need n >= s + 2 = {spec.s + 2} for case deletion, have n = {spec.n}")
    cases = range(spec.n) if cases is None else cases
    task = partial(_deletion_task, spec=spec, start=fit.theta_hat, fit_options=fit_options)
    return pmap(task, cases, n_jobs=n_jobs)


def _ld_from_fits(fit: FitResult, spec: ModelSpec, fits, form: str) -> np.ndarray:
    ld = np.full(len(fits), np.nan)
    failed = 0
    for i, res in enumerate(fits):
        if res is None:
            failed += 1
            continue
        if form == "cook":
            ld[i] = 2.0 * (fit.loglik - log_likelihood(spec, res.theta_hat))
        else:
            ld[i] = 2.0 * (fit.loglik - res.loglik)
    if failed:
        warnings.warn(f"{failed} case-deletion refit(s) failed; LD set to NaN", RuntimeWarning, stacklevel=3)
    return ld


def likelihood_displacement(fit: FitResult, spec: ModelSpec, n_jobs=1, form: str = "cook",
                            **fit_options) -> np.ndarray:
    """Likelihood displacement of every case.

    Parameters
    ----------
    form : {"cook", "deletion"}
        ``"cook"`` (default) compares the full-data log-likelihood at the
        full-data estimate with the full-data log-likelihood at the estimate
        obtained without case ``i``; it is non-negative. ``"deletion"``
        subtracts the reduced-data log-likelihood at its own maximum instead,
        which also absorbs the case's own log-probability and is therefore
        negative.

    Failed refits give NaN entries.
    """
    if form not in ("cook", "deletion"):
        raise ValueError("form must be 'cook' or 'deletion'")
    fits = deletion_fits(fit, spec, n_jobs=n_jobs, **fit_options)
    return _ld_from_fits(fit, spec, fits, form)


def relative_changes(fit_full: FitResult, fit_without_i: FitResult):
    """Percent relative change of each estimate and its standard error.

    Returns ``{"rc": ..., "rcse": ...}``; entries whose full-data value is
    zero are NaN.
    """
    a, b = fit_full.params, fit_without_i.params
    if a.shape != b.shape or fit_full.theta_hat.beta.size != fit_without_i.theta_hat.beta.size:
        raise ValueError("fits have different model structures")
    with np.errstate(divide="ignore", invalid="ignore"):
        rc = np.abs((a - b) / a) * 100.0
        rcse = np.abs((fit_full.se - fit_without_i.se) / fit_full.se) * 100.0
    rc[a == 0] = np.nan
    rcse[fit_full.se == 0] = np.nan
    return {"rc": rc, "rcse": rcse}


def influence(fit: FitResult, spec: ModelSpec, n_jobs=1, **fit_options) -> InfluenceReport:
    """Likelihood displacement plus RC/RCSE for every single-case deletion."""
    fits = deletion_fits(fit, spec, n_jobs=n_jobs, **fit_options)
    ld = _ld_from_fits(fit, spec, fits, "cook")
    rc = np.full((spec.n, spec.s), np.nan)
    rcse = np.full((spec.n, spec.s), np.nan)
    for i, res in enumerate(fits):
        if res is not None:
            ch = relative_changes(fit, res)
            rc[i], rcse[i] = ch["rc"], ch["rcse"]
    return InfluenceReport(ld=ld, rc=rc, rcse=rcse)
