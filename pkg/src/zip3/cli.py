"""
Command line front end.

    zip3 fit --config run.cfg
    zip3 diagnose --config run.cfg [--envelope] [--ld] [--nsim N] [--seed S]
    zip3 simulate --scenario scenario.cfg [--output table.csv] [--jobs J]
    zip3 casewise --config run.cfg --drop 233 --drop 248 --drop 233,248
    zip3 make-data --output data.csv [--n 691] [--seed 2024]

Exit codes: 0 success, 1 usage or config error, 2 data error, 3 non-convergence.
Case numbers on the command line and in output files count data rows from 1.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import diagnostics as diag
from .datasets import make_mortality_like, write_csv
from .errors import Zip3Error
from .io import (
    ConfigError,
    DataError,
    Design,
    RunConfig,
    build_design,
    dump_json,
    fit_report,
    format_fit_table,
    load_csv,
    scenario_from_file,
    write_rows,
)
from .regression import Theta, evaluate, fit, lr_test
from .simulation import run_study

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NONCONV = 0, 1, 2, 3

log = logging.getLogger("zip3")


class NonConvergence(Zip3Error):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _load(config: RunConfig, levels=None) -> Design:
    columns = [config.response] + list(dict.fromkeys(config.mu_terms + config.phi_terms))
    table = load_csv(config.data_path, columns)
    return build_design(config, table, levels=levels)


def _lr_tests(config: RunConfig, design: Design, res):
    tests = []
    for sub, term in config.lr_tests:
        reduced = fit(design.drop_term(sub, term), **config.fit_options)
        if not reduced.converged:
            raise NonConvergence(f"fit for LR test dropping {sub}:{term} did not converge")
        tests.append(((sub, term), lr_test(res, reduced)))
    return tests


def _fit_with_tests(config: RunConfig, design: Design, start=None):
    res = fit(design.spec, start=start, **config.fit_options)
    if not res.converged:
        return res, []
    return res, _lr_tests(config, design, res)


def run_fit(config: RunConfig):
    """Fit the configured model; returns ``(design, fit, report)``."""
    design = _load(config)
    res, tests = _fit_with_tests(config, design)
    report = fit_report(config, design, res, tests)
    return design, res, report


def cmd_fit(args) -> int:
    config = RunConfig.from_file(args.config)
    design, res, report = run_fit(config)
    config.output_path.parent.mkdir(parents=True, exist_ok=True)
    dump_json(report, config.output_path)
    print(format_fit_table(report))
    print(f"report written to {config.output_path}")
    if not res.converged:
        print("error: fit did not converge", file=sys.stderr)
        return EXIT_NONCONV
    return EXIT_OK


def load_fitted(config: RunConfig, artifact_path):
    """Rebuild the design and the fitted model from a ``fit`` report."""
    artifact_path = Path(artifact_path)
    try:
        report = json.loads(artifact_path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise DataError(f"{artifact_path}: cannot read fit report ({exc.strerror})") from None
    except json.JSONDecodeError as exc:
        raise DataError(f"{artifact_path}: not a fit report ({exc})") from None
    if not report.get("convergence", {}).get("converged", False):
        raise NonConvergence(f"{artifact_path}: fitted model did not converge")
    design = _load(config, levels=report.get("levels"))
    theta = Theta.from_vector(report["theta"], report["q1"])
    if theta.s != design.spec.s:
        raise DataError(f"{artifact_path}: coefficient count does not match the configured model")
    res = evaluate(design.spec, theta, converged=True, iterations=report["convergence"]["iterations"])
    return design, res


def cmd_diagnose(args) -> int:
    config = RunConfig.from_file(args.config)
    seed = config.seed if args.seed is None else args.seed
    artifact = Path(args.fit) if args.fit else config.output_path
    outdir = Path(args.outdir) if args.outdir else config.output_path.parent
    outdir.mkdir(parents=True, exist_ok=True)
    design, res = load_fitted(config, artifact)
    spec = design.spec

    rs = diag.quantile_residuals(res, spec, seed)
    write_rows(outdir / "residuals.csv", ["case_index", "y", "mu_hat", "phi_hat", "residual"],
               ([i + 1, int(spec.y[i]), res.mu_hat[i], res.phi_hat[i], rs.q[i]] for i in range(spec.n)))
    summary = {
        "seed": seed,
        "n": spec.n,
        "residuals": {"file": "residuals.csv", "mean": float(rs.q.mean()), "sd": float(rs.q.std(ddof=1))},
    }
    if args.envelope:
        band = diag.simulated_envelope(res, spec, n_sim=args.nsim, coverage=args.coverage, seed=seed,
                                       n_jobs=args.jobs, **config.fit_options)
        write_rows(outdir / "envelope.csv",
                   ["index", "theoretical_normal_quantile", "observed_sorted_residual", "lower", "median", "upper"],
                   ([i + 1, band.theoretical[i], band.sorted_residuals[i], band.lower[i], band.median[i],
                     band.upper[i]] for i in range(spec.n)))
        summary["envelope"] = {
            "file": "envelope.csv",
            "n_sim": band.n_sim,
            "n_dropped": band.n_dropped,
            "coverage": band.coverage,
            "fraction_inside": band.inside_fraction(),
        }
    if args.ld:
        ld = diag.likelihood_displacement(res, spec, n_jobs=args.jobs, **config.fit_options)
        write_rows(outdir / "ld.csv", ["case_index", "ld_value"], ([i + 1, ld[i]] for i in range(spec.n)))
        order = np.argsort(-np.nan_to_num(ld, nan=-np.inf))[:5]
        summary["ld"] = {
            "file": "ld.csv",
            "n_missing": int(np.isnan(ld).sum()),
            "largest": [{"case_index": int(i + 1), "ld_value": float(ld[i])} for i in order],
        }
    dump_json(summary, outdir / "diagnostics.json")
    print(json.dumps(summary, indent=2))
    return EXIT_OK


def cmd_simulate(args) -> int:
    scenario = scenario_from_file(args.scenario)
    summary = run_study(scenario, n_jobs=args.jobs)
    header = summary.table_columns()
    rows = summary.table_rows()
    if args.output:
        write_rows(args.output, header, rows)
        print(_format_mc_table(header, rows))
    else:
        write_rows(sys.stdout, header, rows)
    return EXIT_OK


def _format_mc_table(header, rows) -> str:
    out = ["  ".join(f"{h:>12}" for h in header)]
    for row in rows:
        out.append("  ".join(f"{v:12.4f}" if isinstance(v, float) else f"{v:>12}" for v in row))
    return "\n".join(out)


def _parse_drop(values, n):
    sets = []
    for v in values or ["none"]:
        if v.strip().lower() == "none":
            sets.append(())
            continue
        try:
            idx = tuple(sorted({int(t) for t in v.split(",") if t.strip()}))
        except ValueError:
            raise ConfigError(f"--drop expects comma-separated case numbers, got {v!r}") from None
        bad = [i for i in idx if not 1 <= i <= n]
        if bad:
            raise ConfigError(f"--drop case number(s) {bad} outside 1..{n}")
        sets.append(idx)
    return sets


def casewise_rows(config: RunConfig, drops):
    """RC/RCSE rows for each set of dropped (1-based) cases."""
    design = _load(config)
    full, full_tests = _fit_with_tests(config, design)
    if not full.converged:
        raise NonConvergence("full-data fit did not converge")
    spec = design.spec
    rows = []
    for drop in drops:
        label = "none" if not drop else " ".join(str(i) for i in drop)
        if drop:
            keep = np.setdiff1d(np.arange(spec.n), np.array(drop) - 1)
            if keep.size < spec.s + 2:
                raise DataError(f"dropping {label} leaves n = {keep.size} < s + 2 = {spec.s + 2}")
            sub_design = Design(spec=spec.subset(keep), labels=design.labels, levels=design.levels)
            reduced, tests = _fit_with_tests(config, sub_design, start=full.theta_hat)
            if not reduced.converged:
                raise NonConvergence(f"fit without case(s) {label} did not converge")
        else:
            reduced, tests = full, full_tests
        ch = diag.relative_changes(full, reduced)
        p_of = {key: t.p_value for key, t in tests}
        for k, (sub, term, level) in enumerate(design.labels):
            rows.append([label, sub, term, level, float(ch["rc"][k]), float(ch["rcse"][k]),
                         p_of.get((sub, term), float("nan"))])
    return rows


def cmd_casewise(args) -> int:
    config = RunConfig.from_file(args.config)
    n = load_csv(config.data_path, [config.response]).n
    drops = _parse_drop(args.drop, n)
    rows = casewise_rows(config, drops)
    out = Path(args.output) if args.output else config.output_path.parent / "casewise.csv"
    out.parent.mkdir(parents=True, exist_ok=True)
    write_rows(out, ["removed", "submodel", "term", "level", "rc_percent", "rcse_percent", "lr_p_value"], rows)
    print(f"{'Removed':<10} {'Sub':<4} {'Term':<16} {'Level':<12} {'RC%':>8} {'RCSE%':>8} {'p-value':>8}")
    for r in rows:
        p = f"{r[6]:8.4f}" if r[6] == r[6] else f"{'':>8}"
        print(f"{r[0]:<10} {r[1]:<4} {r[2]:<16} {r[3]:<12} {r[4]:8.2f} {r[5]:8.2f} {p}")
    print(f"table written to {out}")
    return EXIT_OK


def cmd_make_data(args) -> int:
    rows = make_mortality_like(n=args.n, seed=args.seed)
    write_csv(rows, args.output)
    zeros = sum(r["deaths"] == 0 for r in rows) / len(rows)
    print(f"wrote {len(rows)} rows to {args.output} ({100 * zeros:.1f}% zeros)")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="zip3", description="ZIP3 regression: fit, diagnose, simulate.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    f = sub.add_parser("fit", help="fit the configured model")
    f.add_argument("--config", required=True)
    f.set_defaults(func=cmd_fit)

    d = sub.add_parser("diagnose", help="residuals, simulated envelope, likelihood displacement")
    d.add_argument("--config", required=True)
    d.add_argument("--fit", help="fit report to diagnose (default: the config's output_path)")
    d.add_argument("--outdir", help="directory for CSV outputs (default: next to the fit report)")
    d.add_argument("--envelope", action="store_true")
    d.add_argument("--ld", action="store_true")
    d.add_argument("--nsim", type=int, default=100)
    d.add_argument("--coverage", type=float, default=0.95)
    d.add_argument("--seed", type=int)
    d.add_argument("--jobs", type=int, default=1)
    d.set_defaults(func=cmd_diagnose)

    s = sub.add_parser("simulate", help="Monte Carlo bias/MSE study")
    s.add_argument("--scenario", required=True)
    s.add_argument("--output")
    s.add_argument("--jobs", type=int, default=1)
    s.set_defaults(func=cmd_simulate)

    c = sub.add_parser("casewise", help="relative changes after deleting cases")
    c.add_argument("--config", required=True)
    c.add_argument("--drop", action="append", help="comma-separated case numbers (1-based), or 'none'; repeatable")
    c.add_argument("--output")
    c.set_defaults(func=cmd_casewise)

    m = sub.add_parser("make-data", help="write a synthetic under-five-mortality-like data set")
    m.add_argument("--output", required=True)
    m.add_argument("--n", type=int, default=691)
    m.add_argument("--seed", type=int, default=2024)
    m.set_defaults(func=cmd_make_data)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NonConvergence as exc:
        print(f"non-convergence: {exc}", file=sys.stderr)
        return EXIT_NONCONV
    except (DataError, Zip3Error) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
