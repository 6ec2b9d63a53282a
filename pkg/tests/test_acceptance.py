"""Acceptance criteria, one test per criterion.

Each test prints a single ``[ACCEPTANCE n] PASS/FAIL`` line; the lines are
also repeated in the pytest terminal summary. Run on its own with

    pytest tests/test_acceptance.py -s
"""

import csv
import json
import math
import shutil
import time
from pathlib import Path

import numpy as np
import pytest
from scipy.stats import kstest

from zip3 import cli
from zip3 import diagnostics as diag
from zip3 import distribution as dist
from zip3.io import RunConfig, scenario_from_file
from zip3.regression import (
    ModelSpec,
    fit,
    log_likelihood,
    observed_information,
    score,
    score_compact,
)
from zip3.simulation import SCENARIO_1, generate_dataset, run_study

from .conftest import MU_GRID, PHI_GRID, random_spec, record_acceptance, zip1_pmf

REPO = Path(__file__).parent.parent
DATA = Path(__file__).parent / "data"
GOLDEN = Path(__file__).parent / "golden"

REFERENCE_MSE_500 = np.array([0.0734, 0.1305, 0.0489, 0.0167, 0.0411])


def report(number, title, passed, detail):
    line = f"[ACCEPTANCE {number}] {'PASS' if passed else 'FAIL'}  {title}: {detail}"
    print(line)
    record_acceptance(line)
    assert passed, line


def _rel(a, b):
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    return float(np.max(np.abs(a - b) / np.maximum(np.abs(b), 1e-12)))


# 1 ---------------------------------------------------------------------------

def test_criterion_1_scenario_table():
    config = scenario_from_file(REPO / "configs" / "scenario1.cfg")
    assert config.n_reps == 1000
    t0 = time.perf_counter()
    summary = run_study(config, n_jobs=-1)
    elapsed = time.perf_counter() - t0
    bias, mse = summary.bias(500), summary.mse(500)
    bias_ok = bool(np.all(np.abs(bias) <= 0.05))
    ratio = mse / REFERENCE_MSE_500
    mse_ok = bool(np.all((ratio >= 0.5) & (ratio <= 1.5)))
    trend = np.vstack([summary.mse(n) for n in (100, 200, 500)])
    trend_ok = bool(np.all(np.diff(trend, axis=0) < 0))
    failed = {n: summary.cells[n].n_failed for n in config.n_list}
    detail = (f"bias@500={np.round(bias, 4).tolist()} mse@500={np.round(mse, 4).tolist()} "
              f"mse/ref={np.round(ratio, 2).tolist()} decreasing(100,200,500)={trend_ok} "
              f"failed={failed} time={elapsed:.1f}s")
    report(1, "Scenario 1 bias/MSE", bias_ok and mse_ok and trend_ok, detail)


# 2 ---------------------------------------------------------------------------

def test_criterion_2_distribution_suite():
    t0 = time.perf_counter()
    norm = mean = var = zip1 = pois = 0.0
    for mu in MU_GRID:
        for phi in PHI_GRID:
            prm = dist.Zip3Params(mu, phi)
            sd = math.sqrt(mu * (1 + phi))
            y = np.arange(int(mu + phi + 40 * sd + 60))
            p = dist.pmf(y, prm)
            norm = max(norm, abs(p.sum() - 1))
            mean = max(mean, abs((y * p).sum() - mu))
            var = max(var, abs(((y - mu) ** 2 * p).sum() - mu * (1 + phi)))
            lam, pz = mu + phi, phi / (mu + phi)
            for k in range(0, 30):
                zip1 = max(zip1, abs(float(dist.pmf(k, prm)) - float(zip1_pmf(k, lam, pz))))
            if phi == 0:
                ref = np.exp(-mu + y[:30] * np.log(mu) - np.array([math.lgamma(k + 1) for k in y[:30]]))
                pois = max(pois, float(np.max(np.abs(p[:30] - ref))))
    elapsed = time.perf_counter() - t0
    ok = norm <= 1e-10 and mean <= 1e-8 and var <= 1e-6 and zip1 <= 1e-12 and pois <= 1e-12 and elapsed <= 10
    detail = (f"norm={norm:.1e} mean={mean:.1e} var={var:.1e} zip1={zip1:.1e} poisson={pois:.1e} "
              f"time={elapsed:.2f}s")
    report(2, "distribution suite", ok, detail)


# 3 ---------------------------------------------------------------------------

def _first(d):
    return np.array([d.d_mu, d.d_phi])


def _central(f, x, h):
    return (f(x + h) - f(x - h)) / (2 * h)


def test_criterion_3_derivative_suite():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    first = second = 0.0
    for k in range(50):
        y = 0 if k % 2 == 0 else int(rng.integers(1, 8))
        mu = float(np.exp(rng.uniform(np.log(0.05), np.log(20))))
        phi = float(np.exp(rng.uniform(np.log(0.02), np.log(10))))
        d = dist.log_pmf_derivatives(y, dist.Zip3Params(mu, phi))
        lp = lambda m, f: float(dist.log_pmf(y, dist.Zip3Params(m, f)))
        grad = lambda m, f: _first(dist.log_pmf_derivatives(y, dist.Zip3Params(m, f)))
        hm, hp = 1e-6 * mu, 1e-6 * phi
        fd_mu = _central(lambda m: lp(m, phi), mu, hm)
        fd_phi = _central(lambda f: lp(mu, f), phi, hp)
        first = max(first, _rel([d.d_mu, d.d_phi], [fd_mu, fd_phi]))
        dmu = _central(lambda m: grad(m, phi), mu, hm)
        dphi = _central(lambda f: grad(mu, f), phi, hp)
        second = max(second, _rel([d.d_mumu, d.d_phiphi, d.d_muphi, d.d_muphi],
                                  [dmu[0], dphi[1], dmu[1], dphi[0]]))
    rng = np.random.default_rng(7)
    sc = info = 0.0
    for _ in range(50):
        spec, theta = random_spec(rng)
        steps = np.diag(1e-6 * np.maximum(1.0, np.abs(theta)))
        fd = np.array([(log_likelihood(spec, theta + e) - log_likelihood(spec, theta - e)) / (2 * e[j])
                       for j, e in enumerate(steps)])
        sc = max(sc, _rel(score(spec, theta), fd))
        hess = np.column_stack([(score(spec, theta + e) - score(spec, theta - e)) / (2 * e[j])
                                for j, e in enumerate(steps)])
        info = max(info, _rel(observed_information(spec, theta), -hess))
    elapsed = time.perf_counter() - t0
    ok = first <= 1e-5 and sc <= 1e-5 and second <= 1e-4 and info <= 1e-4 and elapsed <= 10
    detail = (f"max rel err: pmf 1st={first:.1e} pmf 2nd={second:.1e} score={sc:.1e} "
              f"information={info:.1e} time={elapsed:.2f}s")
    report(3, "derivative/score/information vs finite differences", ok, detail)


# 4 ---------------------------------------------------------------------------

def test_criterion_4_two_path_score():
    rng = np.random.default_rng(4)
    worst = 0.0
    for _ in range(50):
        spec, theta = random_spec(rng, n=int(rng.integers(30, 200)))
        worst = max(worst, float(np.max(np.abs(score(spec, theta) - score_compact(spec, theta)))))
    report(4, "elementwise vs compact score", worst <= 1e-10, f"max abs diff={worst:.1e} over 50 cases")


# 5 ---------------------------------------------------------------------------

def test_criterion_5_recovery():
    spec = generate_dataset(SCENARIO_1, 20000, 20000)
    res = fit(spec)
    z = (res.params - SCENARIO_1.theta_true) / res.se
    ok = res.converged and res.iterations <= 30 and bool(np.all(np.abs(z) <= 3))
    detail = f"iterations={res.iterations} converged={res.converged} z={np.round(z, 2).tolist()}"
    report(5, "parameter recovery at n=20000", ok, detail)


# 6 ---------------------------------------------------------------------------

def test_criterion_6_residual_calibration():
    n = 2000
    crit = 1.63 / math.sqrt(n)
    stats = []
    for s in range(20):
        spec = generate_dataset(SCENARIO_1, n, 6000 + s)
        res = fit(spec)
        q = diag.quantile_residuals(res, spec, seed=s).q
        stats.append(kstest(q, "norm").statistic)
    passes = int(np.sum(np.array(stats) < crit))
    detail = f"{passes}/20 seeds below {crit:.4f}; max KS={max(stats):.4f}"
    report(6, "quantile residual calibration", passes >= 19, detail)


# 7 ---------------------------------------------------------------------------

def test_criterion_7_outlier_ld():
    hits = 0
    for s in range(20):
        rng = np.random.default_rng(7000 + s)
        spec = generate_dataset(SCENARIO_1, 200, rng)
        i = int(rng.integers(200))
        y = spec.y.copy()
        y[i] = 50
        spec = spec.with_response(y)
        ld = diag.likelihood_displacement(fit(spec), spec)
        hits += bool(ld[i] > np.nanquantile(np.delete(ld, i), 0.99))
    report(7, "outlier likelihood displacement", hits >= 18, f"{hits}/20 seeds above 99th percentile")


# 8 ---------------------------------------------------------------------------

def _csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def _golden_close(got, want, tol=1e-10):
    g, w = _csv(got), _csv(want)
    if len(g) != len(w):
        return False
    for rg, rw in zip(g, w):
        for k in rw:
            try:
                a, b = float(rg[k]), float(rw[k])
            except ValueError:
                if rg[k] != rw[k]:
                    return False
                continue
            if abs(a - b) > tol * max(1.0, abs(b)):
                return False
    return True


def test_criterion_8_cli_parity(tmp_path, capsys):
    for f in DATA.iterdir():
        shutil.copy(f, tmp_path / f.name)
    cfg_path = tmp_path / "toy.cfg"
    checks = {}

    assert cli.main(["fit", "--config", str(cfg_path)]) == 0
    report_json = json.loads((tmp_path / "out" / "toy_fit.json").read_text())
    config = RunConfig.from_file(cfg_path)
    design, res, _ = cli.run_fit(config)
    checks["fit"] = (report_json["theta"] == res.params.tolist()
                     and [c["std_error"] for c in report_json["coefficients"]] == res.se.tolist()
                     and report_json["loglik"] == res.loglik and report_json["aic"] == res.aic
                     and report_json["bic"] == res.bic
                     and all(c["exp_estimate"] == math.exp(c["estimate"]) for c in report_json["coefficients"]))

    assert cli.main(["diagnose", "--config", str(cfg_path), "--envelope", "--ld", "--nsim", "20"]) == 0
    spec = design.spec
    out = tmp_path / "out"
    q = diag.quantile_residuals(res, spec, config.seed).q
    band = diag.simulated_envelope(res, spec, n_sim=20, seed=config.seed)
    ld = diag.likelihood_displacement(res, spec)
    env = _csv(out / "envelope.csv")
    checks["diagnose"] = (
        [float(r["residual"]) for r in _csv(out / "residuals.csv")] == q.tolist()
        and [float(r["ld_value"]) for r in _csv(out / "ld.csv")] == ld.tolist()
        and all([float(r[k]) for r in env] == getattr(band, a).tolist()
                for k, a in (("lower", "lower"), ("median", "median"), ("upper", "upper"),
                             ("observed_sorted_residual", "sorted_residuals"),
                             ("theoretical_normal_quantile", "theoretical")))
    )

    assert cli.main(["casewise", "--config", str(cfg_path), "--drop", "none", "--drop", "3",
                     "--drop", "1,20"]) == 0
    rows = _csv(out / "casewise.csv")
    keep = np.setdiff1d(np.arange(spec.n), [0, 19])
    sub = fit(spec.subset(keep), start=res.theta_hat)
    ch = diag.relative_changes(res, sub)
    got = [(float(r["rc_percent"]), float(r["rcse_percent"])) for r in rows if r["removed"] == "1 20"]
    checks["casewise"] = got == list(zip(ch["rc"].tolist(), ch["rcse"].tolist()))

    scen = (REPO / "configs" / "scenario1.cfg").read_text().replace("n_reps = 1000", "n_reps = 5")
    scen = scen.replace("n_list = 50, 100, 200, 500", "n_list = 50, 100")
    (tmp_path / "s.cfg").write_text(scen)
    capsys.readouterr()
    assert cli.main(["simulate", "--scenario", str(tmp_path / "s.cfg")]) == 0
    sim_rows = list(csv.reader(capsys.readouterr().out.splitlines()))
    lib_rows = run_study(scenario_from_file(tmp_path / "s.cfg")).table_rows()
    checks["simulate"] = [[float(v) for v in r] for r in sim_rows[1:]] == [[float(v) for v in r] for r in lib_rows]

    checks["golden"] = (
        all(_golden_close(out / f"{name}.csv", GOLDEN / f"toy_{name}.csv")
            for name in ("residuals", "envelope", "ld", "casewise"))
    )
    golden_fit = json.loads((GOLDEN / "toy_fit.json").read_text())
    checks["golden"] &= bool(np.allclose(report_json["theta"], golden_fit["theta"], rtol=1e-10, atol=1e-12))

    report(8, "CLI parity and golden files", all(checks.values()),
           " ".join(f"{k}={'ok' if v else 'MISMATCH'}" for k, v in checks.items()))


# 9 ---------------------------------------------------------------------------

def test_criterion_9_walkthrough(tmp_path, capsys):
    assert cli.main(["make-data", "--output", str(tmp_path / "mortality_like.csv")]) == 0
    shutil.copy(REPO / "configs" / "walkthrough.cfg", tmp_path / "walkthrough.cfg")
    cfg = tmp_path / "walkthrough.cfg"
    steps = {
        "fit": cli.main(["fit", "--config", str(cfg)]),
        "diagnose": cli.main(["diagnose", "--config", str(cfg), "--envelope", "--ld", "--nsim", "50"]),
    }
    ld = _csv(tmp_path / "out" / "ld.csv")
    top = sorted(ld, key=lambda r: -float(r["ld_value"]))[:2]
    drops = [top[0]["case_index"], top[1]["case_index"], f"{top[0]['case_index']},{top[1]['case_index']}"]
    steps["casewise"] = cli.main(["casewise", "--config", str(cfg)] + sum((["--drop", d] for d in drops), []))
    capsys.readouterr()

    report_json = json.loads((tmp_path / "out" / "fit.json").read_text())
    y = np.array([int(r["deaths"]) for r in _csv(tmp_path / "mortality_like.csv")])
    zeros = float(np.mean(y == 0))
    rows = _csv(tmp_path / "out" / "casewise.csv")
    max_rc = max(float(r["rc_percent"]) for r in rows)
    n_cat = len(report_json["levels"])
    ok = (all(code == 0 for code in steps.values()) and report_json["convergence"]["converged"]
          and n_cat == 3 and abs(zeros - 0.729) <= 0.03)
    detail = (f"exit codes={steps} n={report_json['n']} zeros={100 * zeros:.1f}% categorical={n_cat} "
              f"AIC={report_json['aic']:.2f} BIC={report_json['bic']:.2f} "
              f"largest LD cases={[int(d) for d in drops[:2]]} max RC={max_rc:.1f}%")
    report(9, "synthetic look-alike walkthrough", ok, detail)
