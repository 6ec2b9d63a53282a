"""
File formats used by the command line: key-value config files, CSV data
ingestion with dummy coding, and report serialization.

Config files hold one ``key = value`` setting per line; ``#`` starts a comment
and list values are comma separated.
"""

from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import Zip3Error
from .links import get_link
from .regression import FitResult, ModelSpec
from .simulation import ScenarioConfig

__all__ = [
    "ConfigError",
    "DataError",
    "read_kv",
    "RunConfig",
    "scenario_from_file",
    "DataTable",
    "load_csv",
    "write_table",
    "Design",
    "build_design",
    "fmt_float",
    "to_jsonable",
    "dump_json",
    "write_rows",
    "fit_report",
    "format_fit_table",
]

MISSING_TOKENS = {"", "na", "nan", "null", "none", "."}


class ConfigError(Zip3Error):
    """Invalid or incomplete configuration (usage error)."""


class DataError(Zip3Error):
    """Data file that cannot be turned into a model."""


def read_kv(path) -> Dict[str, str]:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config file ({exc.strerror})") from None
    out: Dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        key = key.lower()
        if not key:
            raise ConfigError(f"{path}:{lineno}: empty key")
        if key in out:
            raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def _split(value: str) -> List[str]:
    return [v.strip() for v in value.split(",") if v.strip()]


def _typed(kv, key, cast, path, default=None, required=False):
    if key not in kv or kv[key] == "":
        if required:
            raise ConfigError(f"{path}: missing required key {key!r}")
        return default
    try:
        return cast(kv[key])
    except (TypeError, ValueError):
        raise ConfigError(f"{path}: invalid value for {key!r}: {kv[key]!r}") from None


def _int_list(v):
    return [int(x) for x in _split(v)]


def _float_list(v):
    return [float(x) for x in _split(v)]


def _links(v):
    tags = _split(v)
    if len(tags) != 2:
        raise ValueError("need two links")
    for t in tags:
        get_link(t)
    return tuple(t.lower() for t in tags)


@dataclass
class RunConfig:
    data_path: Path
    response: str
    mu_terms: List[str]
    phi_terms: List[str]
    output_path: Path
    links: Tuple[str, str] = ("log", "log")
    categorical: Dict[str, Optional[str]] = field(default_factory=dict)
    max_iter: int = 100
    tol_loglik: float = 1e-8
    tol_score: float = 1e-6
    seed: int = 0
    lr_tests: List[Tuple[str, str]] = field(default_factory=list)
    source: Optional[Path] = None

    KEYS = (
        "data_path", "response", "mu_terms", "phi_terms", "links", "categorical",
        "max_iter", "tol_loglik", "tol_score", "seed", "output_path", "lr_tests",
    )

    @property
    def fit_options(self) -> dict:
        return {"max_iter": self.max_iter, "tol_loglik": self.tol_loglik, "tol_score": self.tol_score}

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        path = Path(path)
        kv = read_kv(path)
        unknown = sorted(set(kv) - set(cls.KEYS))
        if unknown:
            raise ConfigError(f"{path}: unknown key(s) {', '.join(unknown)}")
        base = path.parent

        def rel(p):
            p = Path(p)
            return p if p.is_absolute() else base / p

        categorical: Dict[str, Optional[str]] = {}
        for item in _split(kv.get("categorical", "")):
            col, _, ref = item.partition(":")
            categorical[col.strip()] = ref.strip() or None
        lr_tests = []
        for item in _split(kv.get("lr_tests", "")):
            sub, sep, term = item.partition(":")
            if not sep or sub.strip().lower() not in ("mu", "phi") or not term.strip():
                raise ConfigError(f"{path}: lr_tests entries must look like 'mu:term' or 'phi:term', got {item!r}")
            lr_tests.append((sub.strip().lower(), term.strip()))

        cfg = cls(
            data_path=rel(_typed(kv, "data_path", str, path, required=True)),
            response=_typed(kv, "response", str, path, required=True),
            mu_terms=_split(kv.get("mu_terms", "")),
            phi_terms=_split(kv.get("phi_terms", "")),
            output_path=rel(_typed(kv, "output_path", str, path, required=True)),
            links=_typed(kv, "links", _links, path, default=("log", "log")),
            categorical=categorical,
            max_iter=_typed(kv, "max_iter", int, path, default=100),
            tol_loglik=_typed(kv, "tol_loglik", float, path, default=1e-8),
            tol_score=_typed(kv, "tol_score", float, path, default=1e-6),
            seed=_typed(kv, "seed", int, path, default=0),
            lr_tests=lr_tests,
            source=path,
        )
        cfg.validate()
        return cfg

    def validate(self):
        where = self.source or "config"
        if self.response in self.mu_terms or self.response in self.phi_terms:
            raise ConfigError(f"{where}: response {self.response!r} is also listed as a term")
        for sub, terms in (("mu", self.mu_terms), ("phi", self.phi_terms)):
            if len(set(terms)) != len(terms):
                raise ConfigError(f"{where}: repeated term in {sub}_terms")
        for sub, term in self.lr_tests:
            terms = self.mu_terms if sub == "mu" else self.phi_terms
            if term not in terms:
                raise ConfigError(f"{where}: lr test drops {term!r} which is not in {sub}_terms")
        for col in self.categorical:
            if col not in self.mu_terms and col not in self.phi_terms:
                raise ConfigError(f"{where}: categorical column {col!r} is not used as a term")


def scenario_from_file(path) -> ScenarioConfig:
    path = Path(path)
    kv = read_kv(path)
    keys = ("beta_true", "gamma_true", "x_generators", "z_generators", "n_list", "n_reps", "seed", "links")
    unknown = sorted(set(kv) - set(keys))
    if unknown:
        raise ConfigError(f"{path}: unknown key(s) {', '.join(unknown)}")
    try:
        return ScenarioConfig(
            beta_true=_typed(kv, "beta_true", _float_list, path, required=True),
            gamma_true=_typed(kv, "gamma_true", _float_list, path, required=True),
            x_generators=_typed(kv, "x_generators", _split, path, required=True),
            z_generators=_typed(kv, "z_generators", _split, path, required=True),
            n_list=_typed(kv, "n_list", _int_list, path, required=True),
            n_reps=_typed(kv, "n_reps", int, path, required=True),
            seed=_typed(kv, "seed", int, path, required=True),
            links=_typed(kv, "links", _links, path, default=("log", "log")),
        )
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from None


@dataclass
class DataTable:
    """Raw string cells of the columns a model needs, in file order."""

    path: Path
    columns: Dict[str, List[str]]

    @property
    def n(self) -> int:
        return len(next(iter(self.columns.values()))) if self.columns else 0

    def subset(self, keep: Sequence[int]) -> "DataTable":
        return DataTable(self.path, {k: [v[i] for i in keep] for k, v in self.columns.items()})


def load_csv(path, columns: Sequence[str]) -> DataTable:
    """Read the named columns of a headed CSV file.

    A missing file, missing column or missing cell raises :class:`DataError`
    naming the file, row and column. Rows are numbered from 1 after the header.
    """
    path = Path(path)
    try:
        fh = path.open(newline="", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"{path}: cannot open data file ({exc.strerror})") from None
    with fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        missing = [c for c in columns if c not in header]
        if missing:
            raise DataError(f"{path}: column(s) not found: {', '.join(missing)}")
        pos = {c: header.index(c) for c in columns}
        out: Dict[str, List[str]] = {c: [] for c in columns}
        for row_no, row in enumerate(reader, start=1):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != len(header):
                raise DataError(f"{path}: row {row_no} has {len(row)} fields, header has {len(header)}")
            for c in columns:
                cell = row[pos[c]].strip()
                if cell.lower() in MISSING_TOKENS:
                    raise DataError(f"{path}: row {row_no}, column {c!r}: missing value")
                out[c].append(cell)
    if not out or not next(iter(out.values())):
        raise DataError(f"{path}: no data rows")
    return DataTable(path, out)


def write_table(table: DataTable, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        cols = list(table.columns)
        w.writerow(cols)
        for i in range(table.n):
            w.writerow([table.columns[c][i] for c in cols])


@dataclass
class Design:
    spec: ModelSpec
    labels: List[Tuple[str, str, str]]   # (submodel, term, level) per coefficient
    levels: Dict[str, List[str]]         # categorical column -> levels, reference first

    def columns_of(self, submodel: str, term: str) -> List[int]:
        return [k for k, (sub, t, _) in enumerate(self.labels) if sub == submodel and t == term]

    def drop_term(self, submodel: str, term: str) -> ModelSpec:
        """Spec with every coefficient of ``term`` removed from ``submodel``."""
        q1 = self.spec.q1
        drop = set(self.columns_of(submodel, term))
        if not drop:
            raise ConfigError(f"term {term!r} not in {submodel} submodel")
        keep_x = [j for j in range(q1) if j not in drop]
        keep_z = [j for j in range(self.spec.q2) if j + q1 not in drop]
        sp = self.spec
        return ModelSpec(sp.y, sp.X[:, keep_x], sp.Z[:, keep_z], sp.link_mu, sp.link_phi,
                         [sp.x_names[j] for j in keep_x], [sp.z_names[j] for j in keep_z])


def _parse_float(table: DataTable, col: str) -> np.ndarray:
    vals = np.empty(table.n)
    for i, cell in enumerate(table.columns[col]):
        try:
            v = float(cell)
        except ValueError:
            raise DataError(f"{table.path}: row {i + 1}, column {col!r}: cannot parse {cell!r} as a number") from None
        if not math.isfinite(v):
            raise DataError(f"{table.path}: row {i + 1}, column {col!r}: non-finite value {cell!r}")
        vals[i] = v
    return vals


def _parse_counts(table: DataTable, col: str) -> np.ndarray:
    vals = np.empty(table.n, dtype=np.int64)
    for i, cell in enumerate(table.columns[col]):
        try:
            v = float(cell)
        except ValueError:
            v = math.nan
        if not (math.isfinite(v) and v >= 0 and v == math.floor(v)):
            raise DataError(f"{table.path}: row {i + 1}, column {col!r}: {cell!r} is not a non-negative integer count")
        vals[i] = int(v)
    return vals


def _levels(table: DataTable, col: str, ref: Optional[str]) -> List[str]:
    seen: List[str] = []
    for cell in table.columns[col]:
        if cell not in seen:
            seen.append(cell)
    if len(seen) < 2:
        raise DataError(f"{table.path}: column {col!r} has fewer than two levels")
    if ref is None:
        warnings.warn(f"no reference level declared for {col!r}; using first observed level {seen[0]!r}",
                      UserWarning, stacklevel=3)
        ref = seen[0]
    if ref not in seen:
        raise DataError(f"{table.path}: reference level {ref!r} not found in column {col!r}")
    return [ref] + [lv for lv in seen if lv != ref]


def build_design(config: RunConfig, table: DataTable, levels: Optional[Dict[str, List[str]]] = None) -> Design:
    """Dummy-code categoricals and assemble the model matrices.

    ``levels`` fixes the level coding (e.g. to reuse the full-data coding on a
    subset of rows).
    """
    y = _parse_counts(table, config.response)
    n = table.n
    level_map: Dict[str, List[str]] = {}
    for col, ref in config.categorical.items():
        level_map[col] = list(levels[col]) if levels and col in levels else _levels(table, col, ref)

    labels: List[Tuple[str, str, str]] = []
    mats = []
    names_all = []
    for sub, terms in (("mu", config.mu_terms), ("phi", config.phi_terms)):
        cols = [np.ones(n)]
        names = ["(Intercept)"]
        labels.append((sub, "(Intercept)", ""))
        for term in terms:
            if term in level_map:
                cells = table.columns[term]
                for lv in level_map[term][1:]:
                    cols.append(np.array([c == lv for c in cells], dtype=float))
                    names.append(f"{term}[{lv}]")
                    labels.append((sub, term, lv))
            else:
                cols.append(_parse_float(table, term))
                names.append(term)
                labels.append((sub, term, ""))
        mats.append(np.column_stack(cols))
        names_all.append(names)
    try:
        spec = ModelSpec(y, mats[0], mats[1], config.links[0], config.links[1], names_all[0], names_all[1])
    except Zip3Error as exc:
        raise DataError(f"{table.path}: {exc}") from None
    return Design(spec=spec, labels=labels, levels=level_map)


def fmt_float(x) -> str:
    """Shortest text that round-trips to the same double."""
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return ""
    return repr(float(x))


def to_jsonable(obj):
    if isinstance(obj, dict):
        return {k: to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [to_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, Path):
        return str(obj)
    return obj


def dump_json(obj, path) -> None:
    Path(path).write_text(json.dumps(to_jsonable(obj), indent=2) + "\n", encoding="utf-8")


def write_rows(dest, header: Sequence[str], rows) -> None:
    """Write a CSV table to a path or an open text stream; floats round-trip exactly."""
    if hasattr(dest, "write"):
        _write_rows(dest, header, rows)
        return
    with Path(dest).open("w", newline="", encoding="utf-8") as fh:
        _write_rows(fh, header, rows)


def _write_rows(fh, header, rows):
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt_float(v) if isinstance(v, (float, np.floating)) else v for v in row])


def fit_report(config: RunConfig, design: Design, fit: FitResult, lr_results) -> dict:
    """JSON-ready summary of a fit, including the coefficient vector for later reuse."""
    log_link = {"mu": design.spec.link_mu.tag == "log", "phi": design.spec.link_phi.tag == "log"}
    coefs = []
    for (sub, term, level), est, se in zip(design.labels, fit.params, fit.se):
        coefs.append({
            "submodel": sub,
            "term": term,
            "level": level,
            "estimate": float(est),
            "std_error": float(se),
            "exp_estimate": math.exp(est) if log_link[sub] else None,
        })
    return {
        "data_path": str(config.data_path),
        "response": config.response,
        "links": {"mu": design.spec.link_mu.tag, "phi": design.spec.link_phi.tag},
        "n": fit.n,
        "s": fit.s,
        "q1": design.spec.q1,
        "levels": design.levels,
        "coefficients": coefs,
        "theta": fit.params,
        "loglik": fit.loglik,
        "aic": fit.aic,
        "bic": fit.bic,
        "convergence": {
            "converged": fit.converged,
            "iterations": fit.iterations,
            "max_abs_score": float(np.max(np.abs(fit.score))),
            "loglik_trace": list(fit.trace),
        },
        "lr_tests": [
            {"submodel": sub, "term": term, "statistic": t.statistic, "df": t.df, "p_value": t.p_value}
            for (sub, term), t in lr_results
        ],
    }


def format_fit_table(report: dict) -> str:
    lines = [
        f"{'Submodel':<8} {'Term':<16} {'Level':<12} {'Estimate':>10} {'Std.Error':>10} {'Exp(est)':>10}",
        "-" * 71,
    ]
    for c in report["coefficients"]:
        exp_txt = f"{c['exp_estimate']:10.4f}" if c["exp_estimate"] is not None else f"{'':>10}"
        se_txt = f"{c['std_error']:10.4f}" if c["std_error"] is not None else f"{'nan':>10}"
        lines.append(f"{c['submodel']:<8} {c['term']:<16} {c['level']:<12} {c['estimate']:10.4f} {se_txt} {exp_txt}")
    lines.append("-" * 71)
    lines.append(f"n = {report['n']}   loglik = {report['loglik']:.4f}   AIC = {report['aic']:.4f}   BIC = {report['bic']:.4f}")
    conv = report["convergence"]
    lines.append(f"converged = {conv['converged']}   iterations = {conv['iterations']}")
    for t in report["lr_tests"]:
        lines.append(f"LR test drop {t['submodel']}:{t['term']}  stat = {t['statistic']:.4f}  df = {t['df']}  p = {t['p_value']:.4f}")
    return "\n".join(lines)
