"""Synthetic data sets for examples and the end-to-end walkthrough."""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from . import distribution as dist

__all__ = ["MORTALITY_LIKE_TRUTH", "make_mortality_like", "write_csv"]

# Coefficients in the style of an under-five mortality model: three
# categorical covariates in the mean submodel, intercept-only dispersion.
MORTALITY_LIKE_TRUTH = {
    "intercept": -2.539,
    "age": {"15-24": 0.0, "25-34": 0.9798, "35-49": 1.6787},
    "education": {"No educ": 0.0, "Primary": -0.5303, "Sec/Higher": -0.7934},
    "residence": {"Urban": 0.0, "Rural": 0.7759},
    "phi_intercept": -1.737,
}

_LEVEL_PROBS = {
    "age": (0.3, 0.4, 0.3),
    "education": (0.6, 0.3, 0.1),
    "residence": (0.2, 0.8),
}


def make_mortality_like(n: int = 691, seed: int = 2024):
    """Draw ``n`` rows with columns ``deaths, age, education, residence``.

    Category frequencies are chosen so the expected share of zero counts is
    about 73%.
    """
    rng = np.random.default_rng(seed)
    truth = MORTALITY_LIKE_TRUTH
    cols = {}
    eta = np.full(n, truth["intercept"])
    for name in ("age", "education", "residence"):
        levels = list(truth[name])
        idx = rng.choice(len(levels), size=n, p=_LEVEL_PROBS[name])
        cols[name] = [levels[i] for i in idx]
        eta += np.array([truth[name][levels[i]] for i in idx])
    mu = np.exp(eta)
    phi = np.full(n, np.exp(truth["phi_intercept"]))
    y = dist.sample(dist.Zip3Params(mu, phi), None, rng)
    return [
        {"deaths": int(y[i]), "age": cols["age"][i], "education": cols["education"][i],
         "residence": cols["residence"][i]}
        for i in range(n)
    ]


def write_csv(rows, path) -> None:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
        writer.writeheader()
        writer.writerows(rows)
