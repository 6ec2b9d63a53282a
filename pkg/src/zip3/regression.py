"""
ZIP3 double regression: ``g1(mu_i) = x_i' beta`` and ``g2(phi_i) = z_i' gamma``.

Maximum likelihood fitting uses Newton-Raphson on the analytic observed
information with step halving, so the log-likelihood never decreases across
iterations. Standard errors come from the inverse observed information at the
estimate.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.special import gammaincc

from . import distribution as dist
from .errors import BoundaryError, DesignError, DomainError
from .links import LOG, LinkFunction, get_link

__all__ = [
    "ModelSpec",
    "Theta",
    "ScoreParts",
    "FitResult",
    "LRTest",
    "linear_predictors",
    "log_likelihood",
    "score",
    "score_parts",
    "score_compact",
    "observed_information",
    "start_values",
    "fit",
    "evaluate",
    "lr_test",
    "chi2_sf",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class ModelSpec:
    """Response, the two design matrices and their links.

    Both ``X`` (mean submodel) and ``Z`` (dispersion submodel) must carry an
    intercept column of ones first and have full column rank.
    """

    y: np.ndarray
    X: np.ndarray
    Z: np.ndarray
    link_mu: LinkFunction = LOG
    link_phi: LinkFunction = LOG
    x_names: Optional[Sequence[str]] = None
    z_names: Optional[Sequence[str]] = None

    def __post_init__(self):
        y = np.asarray(self.y)
        if y.ndim != 1:
            raise DesignError("response must be one-dimensional")
        try:
            y = dist._as_counts(y)
        except ValueError as exc:
            raise DesignError(f"response: {exc}") from None
        n = y.shape[0]
        X = self._check_design(self.X, n, "X")
        Z = self._check_design(self.Z, n, "Z")
        if n < X.shape[1] + Z.shape[1]:
            raise DesignError(
                f"n = {n} observations cannot identify {X.shape[1] + Z.shape[1]} coefficients"
            )
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "Z", Z)
        object.__setattr__(self, "link_mu", get_link(self.link_mu))
        object.__setattr__(self, "link_phi", get_link(self.link_phi))
        for attr, mat, prefix in (("x_names", X, "x"), ("z_names", Z, "z")):
            names = getattr(self, attr)
            if names is None:
                names = ["(Intercept)"] + [f"{prefix}{j}" for j in range(1, mat.shape[1])]
            names = tuple(str(v) for v in names)
            if len(names) != mat.shape[1]:
                raise DesignError(f"{attr} has {len(names)} entries for {mat.shape[1]} columns")
            object.__setattr__(self, attr, names)

    @staticmethod
    def _check_design(M, n, label):
        M = np.asarray(M, dtype=float)
        if M.ndim == 1:
            M = M[:, None]
        if M.ndim != 2 or M.shape[0] != n:
            raise DesignError(f"{label} must be an n x q matrix with n = {n} rows")
        if not np.all(np.isfinite(M)):
            raise DesignError(f"{label} contains non-finite entries")
        if not np.all(M[:, 0] == 1.0):
            raise DesignError(f"first column of {label} must be the intercept (all ones)")
        if np.linalg.matrix_rank(M) < M.shape[1]:
            raise DesignError(f"{label} is rank deficient (constant or collinear columns)")
        return M

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def q1(self) -> int:
        return self.X.shape[1]

    @property
    def q2(self) -> int:
        return self.Z.shape[1]

    @property
    def s(self) -> int:
        return self.q1 + self.q2

    @property
    def rho(self) -> np.ndarray:
        """Zero indicator I(y_i = 0)."""
        return (self.y == 0).astype(float)

    def subset(self, keep) -> "ModelSpec":
        """Spec restricted to the rows selected by ``keep`` (mask or indices)."""
        return ModelSpec(
            self.y[keep], self.X[keep], self.Z[keep], self.link_mu, self.link_phi,
            self.x_names, self.z_names,
        )

    def with_response(self, y) -> "ModelSpec":
        return ModelSpec(y, self.X, self.Z, self.link_mu, self.link_phi, self.x_names, self.z_names)


@dataclass(frozen=True)
class Theta:
    beta: np.ndarray
    gamma: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "beta", np.atleast_1d(np.asarray(self.beta, dtype=float)))
        object.__setattr__(self, "gamma", np.atleast_1d(np.asarray(self.gamma, dtype=float)))

    @property
    def vector(self) -> np.ndarray:
        return np.concatenate([self.beta, self.gamma])

    @property
    def s(self) -> int:
        return self.beta.size + self.gamma.size

    @classmethod
    def from_vector(cls, vec, q1: int) -> "Theta":
        vec = np.asarray(vec, dtype=float)
        return cls(vec[:q1].copy(), vec[q1:].copy())


@dataclass(frozen=True)
class ScoreParts:
    """Per-observation pieces of the score in both the elementwise and matrix forms."""

    d_mu: np.ndarray
    l_mu: np.ndarray
    d_phi: np.ndarray
    l_phi: np.ndarray
    c1: np.ndarray
    c2: np.ndarray
    y_star: np.ndarray
    mu_star_vec: np.ndarray
    rho: np.ndarray


@dataclass
class FitResult:
    theta_hat: Theta
    se: np.ndarray
    loglik: float
    aic: float
    bic: float
    observed_info: np.ndarray
    iterations: int
    converged: bool
    mu_hat: np.ndarray
    phi_hat: np.ndarray
    n: int
    score: np.ndarray
    trace: list = field(default_factory=list)

    @property
    def s(self) -> int:
        return self.theta_hat.s

    @property
    def params(self) -> np.ndarray:
        return self.theta_hat.vector


@dataclass(frozen=True)
class LRTest:
    statistic: float
    df: int
    p_value: float


def _as_theta(spec: ModelSpec, theta) -> Theta:
    if isinstance(theta, Theta):
        t = theta
    else:
        t = Theta.from_vector(theta, spec.q1)
    if t.beta.size != spec.q1 or t.gamma.size != spec.q2:
        raise DesignError(
            f"coefficient sizes ({t.beta.size}, {t.gamma.size}) do not match design ({spec.q1}, {spec.q2})"
        )
    return t


def linear_predictors(spec: ModelSpec, theta):
    """Return ``(mu, phi)`` for every row, checking they are in the parameter space."""
    t = _as_theta(spec, theta)
    with np.errstate(over="ignore", under="ignore"):
        mu = spec.link_mu.inverse(spec.X @ t.beta)
        phi = spec.link_phi.inverse(spec.Z @ t.gamma)
    for name, v in (("mu", mu), ("phi", phi)):
        bad = ~(np.isfinite(v) & (v > 0))
        if np.any(bad):
            i = int(np.flatnonzero(bad)[0])
            raise DomainError(f"linear predictor maps {name} outside (0, inf) at row {i} ({name} = {float(v[i])!r})")
    return mu, phi


def log_likelihood(spec: ModelSpec, theta) -> float:
    mu, phi = linear_predictors(spec, theta)
    return float(np.sum(dist._log_pmf(spec.y, mu, phi)))


def score_parts(spec: ModelSpec, theta) -> ScoreParts:
    mu, phi = linear_predictors(spec, theta)
    d = dist._log_pmf_derivatives(spec.y, mu, phi)
    s = mu + phi
    y = spec.y.astype(float)
    # 1/(mu + phi e^s) and e^s/(mu + phi e^s) without forming e^s
    log_d = np.logaddexp(np.log(mu), np.log(phi) + s)
    inv_d = np.exp(-log_d)
    e_over_d = np.exp(s - log_d)
    return ScoreParts(
        d_mu=d.d_mu,
        l_mu=spec.link_mu.dinverse(mu),
        d_phi=d.d_phi,
        l_phi=spec.link_phi.dinverse(phi),
        c1=(1.0 - mu) * inv_d + (mu - 1.0) / mu - y / s,
        c2=e_over_d - mu * inv_d + (s - y) / s,
        y_star=(y - 1.0) / s,
        mu_star_vec=1.0 - 1.0 / mu,
        rho=spec.rho,
    )


def score(spec: ModelSpec, theta) -> np.ndarray:
    """Score vector ``(U_beta, U_gamma)`` from the per-observation derivatives."""
    mu, phi = linear_predictors(spec, theta)
    d = dist._log_pmf_derivatives(spec.y, mu, phi)
    u_beta = spec.X.T @ (d.d_mu * spec.link_mu.dinverse(mu))
    u_gamma = spec.Z.T @ (d.d_phi * spec.link_phi.dinverse(phi))
    return np.concatenate([u_beta, u_gamma])


def score_compact(spec: ModelSpec, theta) -> np.ndarray:
    """Score in matrix form: ``X' L_mu [(y* - mu*) + rho * c1]`` and ``Z' L_phi [(y* - 1) + rho * c2]``."""
    p = score_parts(spec, theta)
    u_beta = spec.X.T @ (p.l_mu * ((p.y_star - p.mu_star_vec) + p.rho * p.c1))
    u_gamma = spec.Z.T @ (p.l_phi * ((p.y_star - 1.0) + p.rho * p.c2))
    return np.concatenate([u_beta, u_gamma])


def _score_and_information(spec: ModelSpec, theta):
    mu, phi = linear_predictors(spec, theta)
    d = dist._log_pmf_derivatives(spec.y, mu, phi)
    m1 = spec.link_mu.dinverse(mu)
    m2 = spec.link_mu.d2inverse(mu)
    f1 = spec.link_phi.dinverse(phi)
    f2 = spec.link_phi.d2inverse(phi)
    X, Z = spec.X, spec.Z

    u = np.concatenate([X.T @ (d.d_mu * m1), Z.T @ (d.d_phi * f1)])

    w_bb = d.d_mumu * m1 * m1 + d.d_mu * m2
    w_gg = d.d_phiphi * f1 * f1 + d.d_phi * f2
    w_bg = d.d_muphi * m1 * f1
    h_bb = X.T @ (w_bb[:, None] * X)
    h_gg = Z.T @ (w_gg[:, None] * Z)
    h_bg = X.T @ (w_bg[:, None] * Z)
    info = -np.block([[h_bb, h_bg], [h_bg.T, h_gg]])
    info = 0.5 * (info + info.T)
    return u, info


def observed_information(spec: ModelSpec, theta) -> np.ndarray:
    """Negative Hessian of the log-likelihood in ``(beta, gamma)``."""
    return _score_and_information(spec, theta)[1]


def start_values(spec: ModelSpec) -> Theta:
    """Method-of-moments start from ``Var(Y) = mu (1 + phi)``, slopes at zero."""
    y = spec.y.astype(float)
    ybar = max(float(y.mean()), 0.05)
    s2 = float(y.var(ddof=1)) if y.size > 1 else 0.0
    phi0 = max(s2 / ybar - 1.0, 0.05)
    beta = np.zeros(spec.q1)
    gamma = np.zeros(spec.q2)
    beta[0] = spec.link_mu.link(np.float64(ybar))
    gamma[0] = spec.link_phi.link(np.float64(phi0))
    return Theta(beta, gamma)


def _newton_direction(info, u):
    try:
        c = np.linalg.cholesky(info)
        return _cho_solve(c, u)
    except np.linalg.LinAlgError:
        pass
    eye = np.eye(info.shape[0])
    tau = 1e-6
    while tau < 1e12:
        try:
            c = np.linalg.cholesky(info + tau * eye)
            return _cho_solve(c, u)
        except np.linalg.LinAlgError:
            tau *= 10.0
    return u / max(np.abs(u).max(), 1.0)


def _cho_solve(c, b):
    z = np.linalg.solve(c, b)
    return np.linalg.solve(c.T, z)


def _safe_loglik(spec, vec):
    try:
        ll = log_likelihood(spec, vec)
    except DomainError:
        return -np.inf
    return ll if np.isfinite(ll) else -np.inf


def evaluate(spec: ModelSpec, theta, *, converged: bool = True, iterations: int = 0,
             trace: Optional[list] = None) -> FitResult:
    """Assemble a :class:`FitResult` at fixed coefficients (no optimization)."""
    t = _as_theta(spec, theta)
    mu, phi = linear_predictors(spec, t)
    ll = float(np.sum(dist._log_pmf(spec.y, mu, phi)))
    u, info = _score_and_information(spec, t)
    s = t.s
    try:
        c = np.linalg.cholesky(info)
        c_inv = np.linalg.inv(c)
        cov = c_inv.T @ c_inv
        se = np.sqrt(np.diag(cov))
    except np.linalg.LinAlgError:
        se = np.full(s, np.nan)
        if converged:
            log.info("observed information is not positive definite at the estimate")
            converged = False
    return FitResult(
        theta_hat=t,
        se=se,
        loglik=ll,
        aic=-2.0 * ll + 2.0 * s,
        bic=-2.0 * ll + s * np.log(spec.n),
        observed_info=info,
        iterations=iterations,
        converged=bool(converged),
        mu_hat=mu,
        phi_hat=phi,
        n=spec.n,
        score=u,
        trace=list(trace) if trace is not None else [ll],
    )


def fit(spec: ModelSpec, *, max_iter: int = 100, tol_loglik: float = 1e-8,
        tol_score: float = 1e-6, start=None) -> FitResult:
    """Maximum likelihood fit of the ZIP3 regression.

    Parameters
    ----------
    spec : ModelSpec
    max_iter : int
        Maximum number of Newton updates.
    tol_loglik : float
        Relative change in log-likelihood required at convergence.
    tol_score : float
        Bound on ``max |score|`` required at convergence.
    start : Theta or array-like, optional
        Starting coefficients; defaults to :func:`start_values`.

    Returns
    -------
    FitResult
        ``converged`` is False when ``max_iter`` is exhausted or no ascent
        step can be found; the log-likelihood trace is kept either way.

    Raises
    ------
    BoundaryError
        If every response is zero (the mean estimate runs to the boundary).
    DomainError
        If the starting point lies outside the parameter space.
    """
    if not np.any(spec.y > 0):
        raise BoundaryError("all responses are zero; the ML estimate lies on the boundary")
    theta = (start_values(spec) if start is None else _as_theta(spec, start)).vector.copy()
    ll = log_likelihood(spec, theta)
    trace = [ll]
    converged = False
    rel_change = np.inf
    it = 0
    while True:
        u, info = _score_and_information(spec, theta)
        if it > 0 and np.max(np.abs(u)) <= tol_score and rel_change <= tol_loglik:
            converged = True
            # one polishing Newton step; near the optimum it costs nothing and
            # pins the estimate down to working precision
            cand = theta + _newton_direction(info, u)
            ll_new = _safe_loglik(spec, cand)
            if ll_new >= ll:
                theta, ll = cand, ll_new
                trace.append(ll)
                it += 1
            break
        if it >= max_iter:
            break
        step = _newton_direction(info, u)
        t = 1.0
        accepted = False
        for _ in range(31):
            cand = theta + t * step
            ll_new = _safe_loglik(spec, cand)
            if ll_new >= ll:
                accepted = True
                break
            t *= 0.5
        it += 1
        if not accepted:
            # no ascent even at the smallest step; stationary to working precision
            converged = bool(np.max(np.abs(u)) <= tol_score)
            break
        rel_change = abs(ll_new - ll) / max(abs(ll), 1.0)
        theta, ll = cand, ll_new
        trace.append(ll)
    if not converged:
        log.info("ZIP3 fit did not converge after %d iterations", it)
    return evaluate(spec, theta, converged=converged, iterations=it, trace=trace)


def chi2_sf(x: float, df: int) -> float:
    """Upper tail of the chi-square distribution via the regularized incomplete gamma."""
    if x <= 0:
        return 1.0
    return float(gammaincc(0.5 * df, 0.5 * x))


def lr_test(fit_full: FitResult, fit_reduced: FitResult) -> LRTest:
    """Likelihood-ratio test of a reduced model nested in a full one.

    Nesting is the caller's responsibility; only the parameter counts and the
    sign of the statistic are checked.
    """
    df = fit_full.s - fit_reduced.s
    if df <= 0:
        raise ValueError(f"reduced model must have fewer parameters (df = {df})")
    stat = 2.0 * (fit_full.loglik - fit_reduced.loglik)
    if stat < -1e-8:
        raise ValueError(
            f"negative LR statistic {stat:.3g}: models are not nested or a fit did not converge"
        )
    stat = max(stat, 0.0)
    return LRTest(statistic=stat, df=int(df), p_value=chi2_sf(stat, df))
