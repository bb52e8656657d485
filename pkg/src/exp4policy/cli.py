"""Command line batch runner.

    exp4policy run CONFIG [--set key=value ...] [--output DIR] [--force] [--workers N]
    exp4policy summarize GLOB [--metric NAME]
    exp4policy enumerate POINTS.csv --dim J [--output CATALOG.csv]
    exp4policy difficulty --sigma-grid 0 0.1 ... [--n-mc N] [--seed S]
    exp4policy harding --t T --j J

Exit codes: 0 success, 2 configuration error, 3 runtime or validation error.
"""
from __future__ import annotations

import argparse
import csv
import glob as globlib
import hashlib
import json
import logging
import math
import os
import shutil
import sys
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
import yaml

from . import __version__
from .arrangement import CellCatalog, enumerate_cells, harding
from .bench import (
    ConstantArm,
    WelfareReport,
    fixed_policy,
    make_report,
    run_fixed,
    run_tau_ewm,
)
from .core import Exp4Error, LesRule, Trajectory, UniformRandom
from .envs import LogNormalDesign, TabularEnvironment, derive_seed, difficulty, load_tabular
from .exp4p import compute_tuning, run_f_exp4p
from .vcexp4p import Les, LogArg, compute_tau, run_vc_exp4p

logger = logging.getLogger(__name__)

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3
EXPERIMENTS = ("FExp4p", "VcExp4p", "Benchmarks", "Enumerate", "Difficulty")
ESTIMATORS = ("FExp4p", "VcExp4p", "TauEwm", "TreatAll", "TreatNone", "OracleLogNormal")
QUANTILES = (0, 10, 25, 50, 75, 90, 100)


class ConfigError(Exception):
    pass


# ------------------------------------------------------------------ config


def _line_index(node, path=(), out=None):
    """Map key paths of a composed YAML document to 1-based line numbers."""
    out = {} if out is None else out
    if isinstance(node, yaml.MappingNode):
        for k, v in node.value:
            key = path + (k.value,)
            out[key] = k.start_mark.line + 1
            _line_index(v, key, out)
    elif isinstance(node, yaml.SequenceNode):
        for i, v in enumerate(node.value):
            out[path + (i,)] = v.start_mark.line + 1
            _line_index(v, path + (i,), out)
    return out


@dataclass
class RunConfig:
    experiment: str
    raw: dict
    source: str = "<config>"
    lines: dict = field(default_factory=dict)

    def where(self, *path) -> str:
        line = self.lines.get(tuple(path))
        loc = f"{self.source}:{line}" if line else self.source
        return f"{loc}: field '{'.'.join(map(str, path))}'"

    def get(self, *path, default=None, kind=None, check=None, msg=None):
        node = self.raw
        for p in path:
            if not isinstance(node, dict) or p not in node:
                return default
            node = node[p]
        if kind is not None:
            try:
                if kind is int and (isinstance(node, bool) or (isinstance(node, float) and not node.is_integer())):
                    raise TypeError
                node = kind(node)
            except (TypeError, ValueError):
                raise ConfigError(f"{self.where(*path)}: expected {kind.__name__}, got {node!r}") from None
        if check is not None and not check(node):
            raise ConfigError(f"{self.where(*path)}: {msg or 'invalid value'} ({node!r})")
        return node

    def require(self, *path, **kw):
        value = self.get(*path, **kw)
        if value is None:
            raise ConfigError(f"{self.where(*path[:-1]) if len(path) > 1 else self.source}: missing field '{'.'.join(path)}'")
        return value


def parse_config(text: str, source: str = "<config>", overrides: Optional[List[str]] = None) -> RunConfig:
    try:
        node = yaml.compose(text)
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"{source}:{mark.line + 1}" if mark else source
        raise ConfigError(f"{where}: YAML syntax error: {getattr(exc, 'problem', exc)}") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"{source}: configuration must be a mapping")
    for item in overrides or []:
        if "=" not in item:
            raise ConfigError(f"--set {item!r}: expected key=value")
        key, value = item.split("=", 1)
        target = raw
        parts = key.split(".")
        for p in parts[:-1]:
            target = target.setdefault(p, {})
            if not isinstance(target, dict):
                raise ConfigError(f"--set {item!r}: '{p}' is not a section")
        target[parts[-1]] = yaml.safe_load(value)
    cfg = RunConfig(raw.get("experiment"), raw, source, _line_index(node) if node is not None else {})
    if cfg.experiment not in EXPERIMENTS:
        raise ConfigError(f"{cfg.where('experiment')}: must be one of {', '.join(EXPERIMENTS)}, got {cfg.experiment!r}")
    known = {"experiment", "environment", "T", "delta", "log_arg", "seeds", "tuning", "M", "m_inflation",
             "estimators", "experts", "output", "workers", "J", "points", "sigma_grid", "n_mc", "seed",
             "population_n_mc", "classification", "description", "catalog_cache"}
    for key in raw:
        if key not in known:
            raise ConfigError(f"{cfg.where(key)}: unknown field")
    return cfg


def load_config(path, overrides=None) -> RunConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text, str(path), overrides)


# ------------------------------------------------------------ environments


@dataclass(frozen=True)
class EnvSpec:
    kind: str
    design: Optional[LogNormalDesign] = None
    table: Optional[TabularEnvironment] = None
    M: Optional[float] = None  # fixed cap from the config, if any

    def build(self, base_seed: int, replication: int) -> TabularEnvironment:
        if self.kind == "lognormal":
            env = self.design.generate(base_seed, replication)
            cap = self.M if self.M is not None else float(env.Y.max())
            return env.with_cap(cap)
        return self.table if self.M is None else self.table.with_cap(self.M)


def env_spec(cfg: RunConfig, T: int) -> EnvSpec:
    kind = cfg.get("environment", "kind", default="lognormal")
    M = cfg.get("M", default="oracle")
    if M == "oracle":
        M = None
    elif M == "plugin":
        M = None
    else:
        M = cfg.get("M", kind=float, check=lambda v: v > 0, msg="must be positive")
    if kind == "lognormal":
        sigma = cfg.get("environment", "sigma", default=0.0, kind=float, check=lambda v: v >= 0, msg="must be >= 0")
        mode = cfg.get("environment", "covariates", default="fixed")
        if mode not in ("fixed", "fresh"):
            raise ConfigError(f"{cfg.where('environment', 'covariates')}: must be 'fixed' or 'fresh'")
        cov_seed = cfg.get("environment", "covariate_seed", default=0, kind=int) if mode == "fixed" else None
        return EnvSpec("lognormal", design=LogNormalDesign(sigma, T, cov_seed), M=M)
    if kind == "csv":
        path = cfg.require("environment", "path")
        base = Path(cfg.source).parent if cfg.source != "<config>" else Path(".")
        p = Path(path) if Path(path).is_absolute() else base / path
        shift = cfg.get("environment", "shift", default=0.0, kind=float)
        table = load_tabular(p, shift=shift, M=M, simulator=cfg.get("environment", "simulator", default=True, kind=bool))
        if table.T < T:
            raise ConfigError(f"{cfg.where('T')}: {p} has only {table.T} rows")
        return EnvSpec("csv", table=table, M=M)
    raise ConfigError(f"{cfg.where('environment', 'kind')}: must be 'lognormal' or 'csv'")


def parse_experts(cfg: RunConfig, J: int, K: int):
    items = cfg.get("experts")
    if not isinstance(items, list) or not items:
        raise ConfigError(f"{cfg.where('experts')}: FExp4p needs a nonempty list of experts")
    out = []
    for i, item in enumerate(items):
        if item == "uniform":
            out.append(UniformRandom())
        elif isinstance(item, dict) and "les" in item:
            coef = item["les"]
            if not isinstance(coef, list) or len(coef) != J + 1:
                raise ConfigError(f"{cfg.where('experts', i)}: 'les' needs {J + 1} coefficients")
            out.append(LesRule(np.array(coef, dtype=float)))
        elif isinstance(item, dict) and "arm" in item:
            arm = item["arm"]
            if not isinstance(arm, int) or not 1 <= arm <= K:
                raise ConfigError(f"{cfg.where('experts', i)}: arm must be in 1..{K}")
            out.append(ConstantArm(arm))
        else:
            raise ConfigError(f"{cfg.where('experts', i)}: expected 'uniform', {{les: [...]}} or {{arm: k}}")
    return out


# ------------------------------------------------------------ replications


@dataclass
class Job:
    experiment: str
    replication: int
    base_seed: int
    T: int
    delta: float
    log_arg: str
    overrides: Dict[str, float]
    estimators: Tuple[str, ...]
    spec: EnvSpec
    plugin: Optional[float]
    experts: Optional[list]
    catalog: Optional[CellCatalog]
    population: Dict[str, Tuple[float, float]]
    reference: Optional[Any]


def _policy_seed(job: Job) -> int:
    return derive_seed(job.base_seed, job.replication, "policy")


def run_job(job: Job) -> List[WelfareReport]:
    env = job.spec.build(job.base_seed, job.replication)
    seed = _policy_seed(job)
    J = env.J
    reports = []
    vc_experts = None
    for name in job.estimators:
        if name == "FExp4p":
            M = env.M
            params = compute_tuning(len(job.experts), env.K, job.T, M, job.delta)
            if job.overrides:
                params = params.scaled(**job.overrides)
            traj = run_f_exp4p(env, job.experts, params, seed)
            rep = make_report(traj, name, job.replication, job.experts, job.population.get("finite"), job.reference)
        elif name == "VcExp4p":
            traj = run_vc_exp4p(env, J, job.T, job.delta, seed, job.overrides or None, job.log_arg, job.catalog,
                                M=None if job.plugin else env.M, m_inflation=job.plugin)
            vc_experts = traj.meta["experts"]
            rep = make_report(traj, name, job.replication, vc_experts, job.population.get("les"), job.reference)
        else:
            if name == "TauEwm":
                traj = run_tau_ewm(env, J, job.T, job.delta, seed, job.log_arg, job.catalog)
            else:
                traj = run_fixed(env, fixed_policy(name, K=env.K), job.T)
                traj = _with_boundary(traj, job)
            comparison = vc_experts
            if comparison is None and job.catalog is not None:
                comparison = tuple(job.catalog.experts()) + (UniformRandom(),)
            rep = make_report(traj, name, job.replication, comparison, job.population.get("les"), job.reference)
        rep.meta["M"] = float(env.M) if env.M is not None else None
        reports.append(rep)
    return reports


def _with_boundary(traj, job: Job):
    if job.experiment == "FExp4p":
        return traj
    tc = compute_tau(job.T, Les(traj.J), job.delta, job.log_arg).tau_ceil
    return Trajectory(traj.x, traj.p, traj.arms, traj.realized, traj.counterfactuals, tc, traj.seed, traj.meta)


def plan_jobs(cfg: RunConfig) -> List[Job]:
    T = cfg.require("T", kind=int, check=lambda v: v >= 2, msg="must be >= 2")
    delta = cfg.get("delta", default=0.05, kind=float, check=lambda v: 0 < v < 1, msg="must lie in (0, 1)")
    log_arg = cfg.get("log_arg", default="TwoOverDelta")
    try:
        log_arg = LogArg.parse(log_arg).name
    except ValueError as exc:
        raise ConfigError(f"{cfg.where('log_arg')}: {exc}") from None
    base = cfg.get("seeds", "base", default=0, kind=int)
    reps = cfg.get("seeds", "replications", default=1, kind=int, check=lambda v: v >= 1, msg="must be >= 1")
    overrides = {}
    for k in ("beta", "gamma", "eta"):
        v = cfg.get("tuning", k, kind=float, check=lambda v: v > 0 and math.isfinite(v), msg="multiplier must be positive")
        if v is not None and v != 1.0:
            overrides[k] = v
    default_est = {"FExp4p": ["FExp4p"], "VcExp4p": ["VcExp4p"],
                   "Benchmarks": ["VcExp4p", "TauEwm", "TreatAll", "TreatNone", "OracleLogNormal"]}[cfg.experiment]
    estimators = cfg.get("estimators", default=default_est)
    if not isinstance(estimators, list) or not estimators or any(e not in ESTIMATORS for e in estimators):
        raise ConfigError(f"{cfg.where('estimators')}: choose a nonempty list from {', '.join(ESTIMATORS)}")
    if cfg.experiment != "FExp4p" and "FExp4p" in estimators:
        raise ConfigError(f"{cfg.where('estimators')}: FExp4p needs experiment FExp4p")
    plugin = None
    if cfg.get("M") == "plugin":
        plugin = cfg.get("m_inflation", default=1.5, kind=float, check=lambda v: v > 0, msg="must be positive")

    spec = env_spec(cfg, T)
    J = 2 if spec.kind == "lognormal" else spec.table.J
    K = 2 if spec.kind == "lognormal" else spec.table.K
    experts = parse_experts(cfg, J, K) if cfg.experiment == "FExp4p" else None

    reference = None
    ref_cfg = cfg.get("classification", default="OracleLogNormal" if spec.kind == "lognormal" else None)
    if ref_cfg is not None:
        if isinstance(ref_cfg, list):
            reference = LesRule(np.array(ref_cfg, dtype=float))
        elif ref_cfg in ("TreatAll", "TreatNone", "OracleLogNormal"):
            reference = fixed_policy(ref_cfg, K=K)
        else:
            raise ConfigError(f"{cfg.where('classification')}: expected a fixed policy name or LES coefficients")

    population: Dict[str, Tuple[float, float]] = {}
    if spec.kind == "lognormal":
        # the LES class contains the first-best rule
        population["les"] = (LogNormalDesign.first_best_welfare(), 0.0)
        if experts is not None:
            n_mc = cfg.get("population_n_mc", default=10**6, kind=int, check=lambda v: v >= 1000, msg="must be >= 1000")
            vals = [spec.design.mean_welfare(e, n_mc=n_mc, seed=base) for e in experts]
            population["finite"] = max(vals, key=lambda v: v[0])

    cache = cfg.get("catalog_cache")
    if cache is not None:
        cache = Path(cache)
    jobs = []
    catalogs: Dict[bytes, CellCatalog] = {}
    needs_catalog = any(e in ("VcExp4p", "TauEwm", "TreatAll", "TreatNone", "OracleLogNormal") for e in estimators)
    tc = None
    if cfg.experiment != "FExp4p" and needs_catalog:
        tc = compute_tau(T, Les(J), delta, log_arg).tau_ceil
    for r in range(reps):
        catalog = None
        if tc is not None:
            X = spec.build(base, r).X[:tc]
            key = X.tobytes()
            if key not in catalogs:
                catalogs[key] = cached_catalog(X, J, cache)
            catalog = catalogs[key]
        jobs.append(Job(cfg.experiment, r, base, T, delta, log_arg, overrides, tuple(estimators), spec, plugin,
                        experts, catalog, population, reference))
    return jobs


def cached_catalog(X, J: int, cache: Optional[Path]) -> CellCatalog:
    """Enumerate the cells of ``X``, reusing a catalog stored under ``cache`` if present."""
    if cache is None:
        return enumerate_cells(X, J)
    digest = hashlib.sha256(np.ascontiguousarray(X, dtype=float).tobytes() + str(J).encode()).hexdigest()[:24]
    path = cache / f"cells-{digest}.csv"
    if path.exists() and path.with_suffix(".json").exists():
        catalog = CellCatalog.from_csv(path)
        rows = np.column_stack([np.ones(len(X)), X])
        if catalog.J == J and np.array_equal(catalog.hyperplanes[catalog.dedup_map], rows):
            return catalog
        logger.warning("ignoring stale catalog %s", path)
    logger.info("enumerating cells for %d coarsening points", len(X))
    catalog = enumerate_cells(X, J)
    cache.mkdir(parents=True, exist_ok=True)
    tmp = Path(tempfile.mkdtemp(dir=cache))
    try:
        catalog.to_csv(tmp / path.name)
        os.replace(tmp / path.with_suffix(".json").name, path.with_suffix(".json"))
        os.replace(tmp / path.name, path)
    finally:
        shutil.rmtree(tmp, ignore_errors=True)
    return catalog


# ------------------------------------------------------------------ output


AGG_COLUMNS = ["replication", "estimator", "welfare", "empirical_regret", "regret",
               "welfare_coarsening", "welfare_run", "regret_coarsening", "regret_run", "terminal_classification"]


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_outputs(out: Path, reports: List[WelfareReport]):
    (out / "reports").mkdir(parents=True)
    for rep in reports:
        (out / "reports" / f"rep{rep.replication:04d}_{rep.estimator}.json").write_text(rep.to_json(), encoding="utf-8")
    with open(out / "aggregate.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(AGG_COLUMNS)
        for rep in reports:
            pp = rep.per_phase
            w.writerow([_fmt(x) for x in (
                rep.replication, rep.estimator, rep.empirical_welfare, rep.empirical_regret, rep.regret,
                pp.get("coarsening", {}).get("empirical_welfare"), pp.get("run", {}).get("empirical_welfare"),
                pp.get("coarsening", {}).get("regret"), pp.get("run", {}).get("regret"),
                rep.correct_classification[-1] if rep.correct_classification else None,
            )])
    with open(out / "classification.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["replication", "estimator", "period", "probability"])
        for rep in reports:
            for t, prob in enumerate(rep.correct_classification or (), start=1):
                w.writerow([rep.replication, rep.estimator, t, repr(prob)])


def atomic_output(target: Path, force: bool, writer):
    """Write into a sibling temporary directory, then rename it into place."""
    target = Path(target)
    if target.exists() and not force:
        raise ConfigError(f"output directory {target} exists; pass --force to replace it")
    target.parent.mkdir(parents=True, exist_ok=True)
    tmp = Path(tempfile.mkdtemp(prefix=f".{target.name}-", dir=target.parent))
    try:
        writer(tmp)
        if target.exists():
            shutil.rmtree(target)
        os.replace(tmp, target)
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise


def execute(cfg: RunConfig, output: Optional[str] = None, force: bool = False, workers: Optional[int] = None) -> Path:
    """Run a parsed configuration and write its artifacts; returns the output directory."""
    start = time.time()
    out = Path(output or cfg.get("output", default="results"))
    if out.exists() and not force:
        raise ConfigError(f"output directory {out} exists; pass --force to replace it")
    workers = workers or cfg.get("workers", default=1, kind=int, check=lambda v: v >= 1, msg="must be >= 1")

    if cfg.experiment == "Difficulty":
        grid = cfg.require("sigma_grid")
        if not isinstance(grid, list) or not grid:
            raise ConfigError(f"{cfg.where('sigma_grid')}: expected a list of sigmas")
        n_mc = cfg.get("n_mc", default=10**6, kind=int, check=lambda v: v >= 10**5, msg="must be >= 1e5")
        seed = cfg.get("seed", default=0, kind=int)
        rows = [(float(s), *difficulty(float(s), n_mc, seed)) for s in grid]

        def writer(tmp):
            with open(tmp / "difficulty.csv", "w", newline="", encoding="utf-8") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(["sigma", "difficulty", "se"])
                for row in rows:
                    w.writerow([repr(v) for v in row])
            _manifest(tmp, cfg, start)
    elif cfg.experiment == "Enumerate":
        J = cfg.require("J", kind=int, check=lambda v: v >= 1, msg="must be >= 1")
        points = cfg.require("points")
        if isinstance(points, str):
            base = Path(cfg.source).parent if cfg.source != "<config>" else Path(".")
            points = read_points(base / points if not Path(points).is_absolute() else Path(points), J)
        else:
            points = np.array(points, dtype=float)
        catalog = enumerate_cells(points, J)

        def writer(tmp):
            catalog.to_csv(tmp / "catalog.csv")
            _manifest(tmp, cfg, start, {"n_cells": len(catalog)})
    else:
        jobs = plan_jobs(cfg)
        if workers > 1 and len(jobs) > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                batches = list(pool.map(run_job, jobs))
        else:
            batches = [run_job(j) for j in jobs]
        reports = [rep for batch in batches for rep in batch]

        def writer(tmp):
            write_outputs(tmp, reports)
            _manifest(tmp, cfg, start, {"replications": len(jobs)})

    atomic_output(out, force, writer)
    return out


def _manifest(tmp: Path, cfg: RunConfig, start: float, extra=None):
    manifest = {"config": cfg.raw, "source": cfg.source, "version": __version__,
                "numpy": np.__version__, "wall_time_s": round(time.time() - start, 3)}
    manifest.update(extra or {})
    (tmp / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True, default=str) + "\n", encoding="utf-8")


def read_points(path, J: int) -> np.ndarray:
    """Points CSV with header ``x1..xJ``; extra columns are ignored."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = [h.strip() for h in next(reader, [])]
        cols = []
        for j in range(1, J + 1):
            if f"x{j}" not in header:
                raise ValueError(f"{path}: missing column x{j}")
            cols.append(header.index(f"x{j}"))
        pts = []
        for rownum, row in enumerate(reader, start=1):
            if not row:
                continue
            try:
                pts.append([float(row[c]) for c in cols])
            except (ValueError, IndexError):
                raise ValueError(f"{path}: row {rownum}: non-numeric or missing covariate") from None
    if not pts:
        raise ValueError(f"{path}: no points")
    return np.array(pts)


# --------------------------------------------------------------- summarize


def summarize(paths: List[str], metric: str = "empirical_welfare") -> List[dict]:
    """Per-estimator quantiles and mean of ``metric`` across report files."""
    if not paths:
        raise ValueError("no report files matched")
    groups: Dict[str, List[float]] = {}
    shape = None
    for p in sorted(paths):
        rep = WelfareReport.from_json(Path(p).read_text(encoding="utf-8"))
        if shape is None:
            shape = (rep.K, rep.T)
        elif (rep.K, rep.T) != shape:
            raise ValueError(f"{p}: K={rep.K}, T={rep.T} differs from K={shape[0]}, T={shape[1]} of earlier reports")
        value = getattr(rep, metric, None)
        if value is None:
            raise ValueError(f"{p}: report has no value for {metric!r}")
        groups.setdefault(rep.estimator, []).append(float(value))
    rows = []
    for est in sorted(groups):
        vals = np.array(groups[est])
        row = {"estimator": est, "n": vals.size}
        for q in QUANTILES:
            row[f"q{q}"] = float(np.quantile(vals, q / 100))
        row["mean"] = float(vals.mean())
        rows.append(row)
    return rows


# --------------------------------------------------------------------- main


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="exp4policy", description="EXP4.P policy learning experiments")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run an experiment configuration")
    r.add_argument("config")
    r.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override a config field")
    r.add_argument("--output")
    r.add_argument("--force", action="store_true", help="replace an existing output directory")
    r.add_argument("--workers", type=int)
    r.add_argument("--catalog-cache", metavar="DIR", help="directory for reusable cell catalogs")

    s = sub.add_parser("summarize", help="quantile table over WelfareReport JSON files")
    s.add_argument("pattern")
    s.add_argument("--metric", default="empirical_welfare")

    e = sub.add_parser("enumerate", help="enumerate LES cells for a points CSV")
    e.add_argument("points")
    e.add_argument("--dim", type=int, required=True)
    e.add_argument("--output", help="catalog CSV path (a JSON sidecar is written next to it)")
    e.add_argument("--method", choices=("restricted", "lp"), default="restricted")

    d = sub.add_parser("difficulty", help="misclassification probability of the optimal rule")
    d.add_argument("--sigma-grid", type=float, nargs="+", required=True)
    d.add_argument("--n-mc", type=int, default=10**6)
    d.add_argument("--seed", type=int, default=0)

    h = sub.add_parser("harding", help="maximal number of LES cells")
    h.add_argument("--t", type=int, required=True)
    h.add_argument("--j", type=int, required=True)
    return ap


def _print_rows(rows, columns, stream):
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_fmt(row[c]) for c in columns])


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "run":
            cfg = load_config(args.config, args.set)
            if args.catalog_cache:
                cfg.raw["catalog_cache"] = str(Path(args.catalog_cache).resolve())
            out = execute(cfg, args.output, args.force, args.workers)
            print(out)
        elif args.command == "summarize":
            rows = summarize(globlib.glob(args.pattern, recursive=True), args.metric)
            _print_rows(rows, ["estimator", "n"] + [f"q{q}" for q in QUANTILES] + ["mean"], sys.stdout)
        elif args.command == "enumerate":
            catalog = enumerate_cells(read_points(args.points, args.dim), args.dim, method=args.method)
            if args.output:
                catalog.to_csv(args.output)
            else:
                _print_rows([{"label": lab, **{f"beta_{j}": float(b) for j, b in enumerate(w)}} for lab, w in catalog.cells],
                            ["label"] + [f"beta_{j}" for j in range(args.dim + 1)], sys.stdout)
            print(f"{len(catalog)} cells", file=sys.stderr)
        elif args.command == "difficulty":
            rows = [dict(zip(("sigma", "difficulty", "se"), (s, *difficulty(s, args.n_mc, args.seed)))) for s in args.sigma_grid]
            _print_rows(rows, ["sigma", "difficulty", "se"], sys.stdout)
        elif args.command == "harding":
            print(harding(args.t, args.j))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (Exp4Error, ValueError, OSError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
