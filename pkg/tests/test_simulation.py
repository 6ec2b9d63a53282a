import dataclasses

import numpy as np
import pytest

from zip3._parallel import substream
from zip3.regression import fit
from zip3.simulation import (
    SCENARIO_1,
    ScenarioConfig,
    generate_dataset,
    parse_generator,
    run_study,
)


def test_parse_generator():
    assert parse_generator("constant1") == ("constant1", None)
    assert parse_generator("uniform01") == ("uniform01", None)
    assert parse_generator(" bernoulli(0.25) ") == ("bernoulli", 0.25)
    for bad in ("normal", "bernoulli(1.5)", "bernoulli(x)"):
        with pytest.raises(ValueError):
            parse_generator(bad)


def test_config_validation():
    ok = dict(beta_true=(0.0, 1.0), gamma_true=(0.0,), x_generators=("constant1", "uniform01"),
              z_generators=("constant1",), n_list=(10,), n_reps=1, seed=1)
    ScenarioConfig(**ok)
    for change in (dict(n_reps=0), dict(x_generators=("uniform01", "constant1")),
                   dict(beta_true=(0.0,)), dict(n_list=()), dict(links=("log", "probit"))):
        with pytest.raises(ValueError):
            ScenarioConfig(**{**ok, **change})


def test_generated_design():
    spec = generate_dataset(SCENARIO_1, 300, 1)
    assert np.all(spec.X[:, 0] == 1) and np.all(spec.Z[:, 0] == 1)
    assert np.all((spec.X[:, 1] > 0) & (spec.X[:, 1] < 1))
    assert set(np.unique(spec.X[:, 2])) == {0.0, 1.0}
    assert not np.array_equal(spec.X[:, 1], spec.Z[:, 1])


def test_mean_at_zero_covariates():
    eta = np.array([1.0, 0.0, 0.0]) @ np.array(SCENARIO_1.beta_true)
    assert np.exp(eta) == pytest.approx(0.36787944117144233, rel=1e-15)


def test_large_replicate_mean_matches_average_mu():
    spec = generate_dataset(SCENARIO_1, 100_000, 2024)
    mu = np.exp(spec.X @ np.array(SCENARIO_1.beta_true))
    assert abs(spec.y.mean() / mu.mean() - 1) <= 0.02


def test_generate_accepts_seed_or_generator():
    a = generate_dataset(SCENARIO_1, 50, 3)
    b = generate_dataset(SCENARIO_1, 50, np.random.default_rng(3))
    assert np.array_equal(a.y, b.y) and np.array_equal(a.X, b.X)


def test_single_replicate_bias_is_fit_error():
    cfg = dataclasses.replace(SCENARIO_1, n_list=(80,), n_reps=1, seed=7)
    summary = run_study(cfg)
    res = fit(generate_dataset(cfg, 80, substream(7, 80, 0)))
    cell = summary.cells[80]
    assert cell.n_converged + cell.n_failed == 1
    assert np.array_equal(summary.bias(80), res.params - cfg.theta_true)
    assert np.array_equal(summary.mse(80), (res.params - cfg.theta_true) ** 2)


def test_study_deterministic_across_workers():
    cfg = dataclasses.replace(SCENARIO_1, n_list=(60, 90), n_reps=6, seed=11)
    a = run_study(cfg, n_jobs=1)
    b = run_study(cfg, n_jobs=1)
    c = run_study(cfg, n_jobs=2)
    for n in cfg.n_list:
        assert np.array_equal(a.cells[n].estimates, b.cells[n].estimates, equal_nan=True)
        assert np.array_equal(a.cells[n].estimates, c.cells[n].estimates, equal_nan=True)
    assert a.table_rows() == c.table_rows()


def test_table_layout():
    cfg = dataclasses.replace(SCENARIO_1, n_list=(60,), n_reps=3, seed=1)
    summary = run_study(cfg)
    cols = summary.table_columns()
    assert cols == ["n", "B_beta0", "B_beta1", "B_beta2", "MSE_beta0", "MSE_beta1", "MSE_beta2",
                    "B_gamma0", "B_gamma1", "MSE_gamma0", "MSE_gamma1", "n_converged", "n_failed"]
    row = summary.table_rows()[0]
    assert len(row) == len(cols) and row[0] == 60
    assert row[-2] + row[-1] == 3


def test_failed_replicates_excluded():
    cfg = dataclasses.replace(SCENARIO_1, n_list=(60,), n_reps=8, seed=5)
    summary = run_study(cfg, max_iter=1)
    cell = summary.cells[60]
    assert cell.n_failed == 8
    assert np.all(np.isnan(cell.bias))


@pytest.mark.slow
def test_wald_coverage_at_n500():
    cfg = dataclasses.replace(SCENARIO_1, n_list=(500,), n_reps=1000)
    cov = run_study(cfg).cells[500].coverage
    assert np.all((cov >= 0.90) & (cov <= 0.98)), cov
