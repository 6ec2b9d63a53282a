import mpmath as mp
import numpy as np
import pytest

from zip3.regression import ModelSpec

MU_GRID = (0.1, 1.0, 5.0, 20.0)
PHI_GRID = (0.0, 0.5, 2.0, 10.0)


def zip1_pmf(y, lam, p):
    """Classical ZIP probability, written independently of the package."""
    pois = mp.e ** (-lam) * mp.mpf(lam) ** y / mp.factorial(y)
    return (p + (1 - p) * mp.e ** (-lam)) if y == 0 else (1 - p) * pois


def mp_log_pmf(y, mu, phi):
    """High-precision ZIP3 log-pmf used as a differentiation oracle."""
    mu, phi = mp.mpf(mu), mp.mpf(phi)
    s = mu + phi
    if y == 0:
        return mp.log(phi + mu * mp.e ** (-s)) - mp.log(s)
    return mp.log(mu) + (y - 1) * mp.log(s) - s - mp.loggamma(y + 1)


def random_spec(rng, n=60, q1=3, q2=2):
    X = np.column_stack([np.ones(n)] + [rng.normal(size=n) for _ in range(q1 - 1)])
    Z = np.column_stack([np.ones(n)] + [rng.random(n) for _ in range(q2 - 1)])
    beta = rng.normal(scale=0.4, size=q1)
    gamma = rng.normal(scale=0.4, size=q2)
    mu = np.exp(X @ beta)
    phi = np.exp(Z @ gamma)
    lam = mu + phi
    y = np.where(rng.random(n) < phi / lam, 0, rng.poisson(lam))
    if not y.any():
        y[0] = 1
    return ModelSpec(y, X, Z), np.concatenate([beta, gamma])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_ACCEPTANCE_LINES = []


def record_acceptance(line):
    _ACCEPTANCE_LINES.append(line)


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
