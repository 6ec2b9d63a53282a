"""
Zero-inflated Poisson distribution indexed by its mean and a dispersion parameter.

The ZIP3 parameterization uses ``mu = E(Y)`` and ``phi`` with
``Var(Y) = mu * (1 + phi)``. It maps onto the classical (lambda, p) form through
``p = phi / (mu + phi)`` and ``lambda = mu + phi``::

    P(Y = 0) = (phi + mu * exp(-(mu + phi))) / (mu + phi)
    P(Y = y) = mu * (mu + phi)**(y - 1) * exp(-(mu + phi)) / y!,   y >= 1

``phi = 0`` is admitted and gives Poisson(mu) exactly. The derivative routines
require ``phi > 0``.

All functions broadcast over numpy arrays: ``y``, ``params.mu`` and
``params.phi`` may be scalars or arrays of compatible shape.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np
from scipy.special import gammaln

__all__ = [
    "Zip1Params",
    "Zip2Params",
    "Zip3Params",
    "LogPmfDerivatives",
    "convert",
    "log_pmf",
    "pmf",
    "cdf",
    "quantile",
    "sample",
    "mean",
    "variance",
    "log_pmf_derivatives",
]

ArrayLike = Union[float, np.ndarray]

_CDF_CLAMP = 1e-15


@dataclass(frozen=True)
class Zip3Params:
    """Mean ``mu > 0`` and dispersion ``phi >= 0``."""

    mu: ArrayLike
    phi: ArrayLike

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=float)
        phi = np.asarray(self.phi, dtype=float)
        if not np.all(np.isfinite(mu)) or np.any(mu <= 0):
            raise ValueError("ZIP3 mean mu must be finite and > 0")
        if not np.all(np.isfinite(phi)) or np.any(phi < 0):
            raise ValueError("ZIP3 dispersion phi must be finite and >= 0")

    @property
    def p(self):
        """Zero-state (structural zero) probability."""
        return np.asarray(self.phi) / (np.asarray(self.mu) + np.asarray(self.phi))

    @property
    def lam(self):
        """Poisson rate of the susceptible subpopulation."""
        return np.asarray(self.mu) + np.asarray(self.phi)


@dataclass(frozen=True)
class Zip1Params:
    """Classical form: Poisson rate ``lam`` and zero-state probability ``p``."""

    lam: ArrayLike
    p: ArrayLike

    def __post_init__(self):
        lam = np.asarray(self.lam, dtype=float)
        p = np.asarray(self.p, dtype=float)
        if not np.all(np.isfinite(lam)) or np.any(lam <= 0):
            raise ValueError("ZIP1 rate lam must be finite and > 0")
        if np.any(~(p >= 0)) or np.any(p >= 1):
            raise ValueError("ZIP1 zero-state probability p must lie in [0, 1)")


@dataclass(frozen=True)
class Zip2Params:
    """Marginal-mean form: mean ``mu_star`` and zero-state probability ``delta_star``."""

    mu_star: ArrayLike
    delta_star: ArrayLike

    def __post_init__(self):
        mu = np.asarray(self.mu_star, dtype=float)
        delta = np.asarray(self.delta_star, dtype=float)
        if not np.all(np.isfinite(mu)) or np.any(mu <= 0):
            raise ValueError("ZIP2 mean mu_star must be finite and > 0")
        if np.any(~(delta >= 0)) or np.any(delta >= 1):
            raise ValueError("ZIP2 zero-state probability delta_star must lie in [0, 1)")


@dataclass(frozen=True)
class LogPmfDerivatives:
    """First and second partials of the log-pmf in (mu, phi)."""

    d_mu: np.ndarray
    d_phi: np.ndarray
    d_mumu: np.ndarray
    d_phiphi: np.ndarray
    d_muphi: np.ndarray


def _plain(x):
    x = np.asarray(x, dtype=float)
    return float(x) if x.ndim == 0 else x


_TAGS = {"zip1": Zip1Params, "zip2": Zip2Params, "zip3": Zip3Params}


def _to_zip1(params) -> Zip1Params:
    if isinstance(params, Zip1Params):
        return params
    if isinstance(params, Zip2Params):
        mu = np.asarray(params.mu_star, dtype=float)
        delta = np.asarray(params.delta_star, dtype=float)
        return Zip1Params(lam=_plain(mu / (1.0 - delta)), p=_plain(delta))
    if isinstance(params, Zip3Params):
        return Zip1Params(lam=_plain(params.lam), p=_plain(params.p))
    raise TypeError(f"unsupported parameter object {type(params).__name__}")


def convert(params, target: str):
    """Re-express ``params`` in another parameterization.

    Parameters
    ----------
    params : Zip1Params, Zip2Params or Zip3Params
    target : {"zip1", "zip2", "zip3"}

    Conversions go through the (lam, p) form except for the direct
    ZIP3 -> ZIP2 route, which keeps ``mu`` untouched.
    """
    target = target.lower()
    if target not in _TAGS:
        raise ValueError(f"unknown parameterization {target!r}; expected one of {sorted(_TAGS)}")
    if isinstance(params, _TAGS[target]):
        return params
    if target == "zip2" and isinstance(params, Zip3Params):
        return Zip2Params(mu_star=_plain(params.mu), delta_star=_plain(params.p))
    z1 = _to_zip1(params)
    lam = np.asarray(z1.lam, dtype=float)
    p = np.asarray(z1.p, dtype=float)
    if target == "zip1":
        return z1
    if target == "zip2":
        return Zip2Params(mu_star=_plain((1.0 - p) * lam), delta_star=_plain(p))
    return Zip3Params(mu=_plain((1.0 - p) * lam), phi=_plain(p * lam))


def _as_counts(y) -> np.ndarray:
    y_arr = np.asarray(y)
    if y_arr.dtype.kind not in "iu":
        y_float = y_arr.astype(float)
        if np.any(y_float != np.floor(y_float)):
            raise ValueError("counts must be integers")
        y_arr = y_float.astype(np.int64)
    if np.any(y_arr < 0):
        raise ValueError("counts must be non-negative")
    return y_arr


def _log_pmf(y, mu, phi):
    """Array kernel for the log-pmf; no validation."""
    y, mu, phi = np.broadcast_arrays(np.asarray(y), np.asarray(mu, float), np.asarray(phi, float))
    s = mu + phi
    with np.errstate(divide="ignore"):
        log_mu = np.log(mu)
        log_phi = np.log(phi)
    zero = np.logaddexp(log_phi, log_mu - s) - np.log(s)
    yf = y.astype(float)
    pos = log_mu + (yf - 1.0) * np.log(s) - s - gammaln(yf + 1.0)
    return np.where(y == 0, zero, pos)


def log_pmf(y, params: Zip3Params):
    """Log probability of count(s) ``y``.

    The zero branch is evaluated as
    ``logaddexp(log phi, log mu - (mu + phi)) - log(mu + phi)`` so neither
    ``exp(mu + phi)`` nor ``exp(-(mu + phi))`` is formed.
    """
    out = _log_pmf(_as_counts(y), params.mu, params.phi)
    return out[()] if out.ndim == 0 else out


def pmf(y, params: Zip3Params):
    return np.exp(log_pmf(y, params))


def _cdf(y, mu, phi):
    """Array kernel for the cdf; ``y = -1`` gives 0."""
    y, mu, phi = np.broadcast_arrays(np.asarray(y), np.asarray(mu, float), np.asarray(phi, float))
    y = y.astype(np.int64)
    s = mu + phi
    out = np.zeros(y.shape, dtype=float)
    have = y >= 0
    if not np.any(have):
        return out
    out[have] = np.exp(_log_pmf(0, mu[have], phi[have]))
    # log pmf(k+1) = log pmf(k) + log(s) - log(k+1), seeded at log pmf(1) = log(mu) - s
    idx = np.flatnonzero(y >= 1)
    if idx.size:
        yi = y.flat[idx]
        mu_i = mu.flat[idx]
        s_i = s.flat[idx]
        log_s = np.log(s_i)
        acc = out.flat[idx].copy()
        log_term = np.log(mu_i) - s_i
        for k in range(1, int(yi.max()) + 1):
            live = yi >= k
            acc = np.where(live, acc + np.exp(log_term), acc)
            log_term = log_term + log_s - np.log(k + 1.0)
        out.flat[idx] = acc
    np.minimum(out, 1.0, out=out)
    out[have & (1.0 - out < _CDF_CLAMP)] = 1.0
    return out


def cdf(y, params: Zip3Params):
    """P(Y <= y), with the convention ``cdf(-1) = 0``.

    Summation runs upward from zero using the ratio of successive Poisson
    terms, so the cost is linear in ``max(y)``.
    """
    y_arr = np.asarray(y)
    if y_arr.dtype.kind not in "iu":
        if np.any(y_arr != np.floor(y_arr)):
            raise ValueError("counts must be integers")
    if np.any(y_arr < -1):
        raise ValueError("cdf is defined for y >= -1")
    out = _cdf(y_arr, params.mu, params.phi)
    return out[()] if out.ndim == 0 else out


def _quantile(u, mu, phi):
    u, mu, phi = np.broadcast_arrays(np.asarray(u, float), np.asarray(mu, float), np.asarray(phi, float))
    hi = np.ceil(mu + 10.0 * np.sqrt(mu * (1.0 + phi)) + 10.0).astype(np.int64)
    while True:
        short = _cdf(hi, mu, phi) < u
        if not np.any(short):
            break
        hi = np.where(short, 2 * hi, hi)
    # invariant: cdf(lo) < u <= cdf(hi)
    lo = np.full(hi.shape, -1, dtype=np.int64)
    while np.any(hi - lo > 1):
        mid = (lo + hi) // 2
        ok = _cdf(mid, mu, phi) >= u
        hi = np.where(ok, mid, hi)
        lo = np.where(ok, lo, mid)
    return hi


def quantile(u, params: Zip3Params):
    """Smallest count ``y`` with ``cdf(y) >= u`` for ``u`` in (0, 1)."""
    u_arr = np.asarray(u, dtype=float)
    if np.any(~(u_arr > 0)) or np.any(u_arr >= 1):
        raise ValueError("quantile level u must lie in the open interval (0, 1)")
    out = _quantile(u_arr, params.mu, params.phi)
    return out[()] if out.ndim == 0 else out


def _sample(mu, phi, rng, size=None):
    mu = np.asarray(mu, float)
    phi = np.asarray(phi, float)
    shape = np.broadcast_shapes(mu.shape, phi.shape) if size is None else size
    lam = mu + phi
    structural_zero = rng.random(shape) < phi / lam
    counts = rng.poisson(np.broadcast_to(lam, shape))
    return np.where(structural_zero, 0, counts).astype(np.int64)


def sample(params: Zip3Params, count: int | None, rng: np.random.Generator):
    """Draw from the two-subpopulation mixture.

    With probability ``phi / (mu + phi)`` the draw is a structural zero,
    otherwise it is Poisson(mu + phi).

    Parameters
    ----------
    params : Zip3Params
    count : int or None
        Number of draws for scalar parameters. ``None`` draws one value per
        element of the (broadcast) parameter arrays.
    rng : numpy.random.Generator
        Caller-owned random stream.
    """
    if count is not None and count < 0:
        raise ValueError("count must be >= 0")
    size = None if count is None else (int(count),) + np.broadcast_shapes(np.shape(params.mu), np.shape(params.phi))
    return _sample(params.mu, params.phi, rng, size=size)


def mean(params: Zip3Params):
    return params.mu


def variance(params: Zip3Params):
    return np.asarray(params.mu) * (1.0 + np.asarray(params.phi))


def _log_pmf_derivatives(y, mu, phi) -> LogPmfDerivatives:
    y, mu, phi = np.broadcast_arrays(np.asarray(y), np.asarray(mu, float), np.asarray(phi, float))
    s = mu + phi
    zero = y == 0
    ym1 = y.astype(float) - 1.0
    inv_s = 1.0 / s
    inv_s2 = inv_s * inv_s

    # D = mu + phi * exp(s), kept in log space; r = mu / D, 1 - r = phi * exp(s) / D
    log_mu = np.log(mu)
    log_phi = np.log(phi)
    log_d = np.logaddexp(log_mu, log_phi + s)
    r = np.exp(log_mu - log_d)
    q = np.exp(log_phi + s - log_d)
    inv_d = np.exp(-log_d)           # 1 / D
    e_over_d = np.exp(s - log_d)     # exp(s) / D
    rq = r * q                        # phi * exp(s) * mu / D**2

    z_mu = (1.0 - mu) * inv_d - inv_s
    z_phi = e_over_d - mu * inv_d - inv_s
    z_mumu = (mu - 2.0) * rq / mu - inv_d * inv_d + inv_s2
    z_phiphi = (phi + 2.0) * rq / phi - e_over_d * e_over_d + inv_s2
    z_muphi = (mu - 1.0) * (phi + 1.0) * rq / (mu * phi) + inv_s2

    p_mu = 1.0 / mu + ym1 * inv_s - 1.0
    p_phi = ym1 * inv_s - 1.0
    p_mumu = -1.0 / mu**2 - ym1 * inv_s2
    p_phiphi = -ym1 * inv_s2

    return LogPmfDerivatives(
        d_mu=np.where(zero, z_mu, p_mu),
        d_phi=np.where(zero, z_phi, p_phi),
        d_mumu=np.where(zero, z_mumu, p_mumu),
        d_phiphi=np.where(zero, z_phiphi, p_phiphi),
        d_muphi=np.where(zero, z_muphi, p_phiphi),
    )


def log_pmf_derivatives(y, params: Zip3Params) -> LogPmfDerivatives:
    """Analytic first and second partials of the log-pmf.

    Requires ``phi > 0``: the zero-count expressions divide by
    ``mu + phi * exp(mu + phi)``, which is handled in log space.
    """
    if np.any(np.asarray(params.phi) <= 0):
        raise ValueError("log-pmf derivatives require phi > 0")
    out = _log_pmf_derivatives(_as_counts(y), params.mu, params.phi)
    if np.ndim(out.d_mu) == 0:
        return LogPmfDerivatives(*(float(v) for v in (out.d_mu, out.d_phi, out.d_mumu, out.d_phiphi, out.d_muphi)))
    return out
