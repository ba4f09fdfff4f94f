"""Command line entry point: ``collapse-lab run`` and ``collapse-lab verify``.

Exit status: 0 on success, 2 on invalid configuration or arguments, 3 when a
solver does not converge or fails numerically.
"""
from __future__ import annotations

import argparse
import csv
import io
import itertools
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .counterexamples import mean_field as mf
from .counterexamples import three_neuron as tn
from .errors import InvalidArgument, NonConverged, NumericFailure
from .final_layer import SolverSettings, minimize_risk_on_ball
from .loss import LabeledPointSet
from .metrics import collapse_report
from .penultimate import check_isometry, optimize_penultimate
from .plotting import line_chart_svg
from .simplex import oracle_risk, simplex_l2, simplex_lp, vertices
from .verify import SUITES, run_suite

EXIT_OK, EXIT_INVALID, EXIT_NONCONVERGED = 0, 2, 3
THREADS_ENV = "COLLAPSE_LAB_THREADS"


class ConfigError(InvalidArgument):
    pass


@dataclass
class ExperimentResult:
    columns: list
    rows: list
    report: dict
    plot: dict
    converged: bool = True
    message: str = ""
    extra_rows: dict = field(default_factory=dict)


# ---------------------------------------------------------------- validation

_REQUIRED = object()


def _number(v, name, *, integer=False):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"'{name}' must be a number, got {v!r}")
    if not math.isfinite(v):
        raise ConfigError(f"'{name}' must be finite")
    if integer:
        if int(v) != v:
            raise ConfigError(f"'{name}' must be an integer, got {v!r}")
        return int(v)
    return float(v)


def _positive(v, name, *, integer=False):
    v = _number(v, name, integer=integer)
    if v <= 0:
        raise ConfigError(f"'{name}' must be positive, got {v!r}")
    return v


def _vector(v, name, n=None):
    if not isinstance(v, list) or (n is not None and len(v) != n):
        size = "" if n is None else f" of length {n}"
        raise ConfigError(f"'{name}' must be a list{size}")
    return [_number(x, name) for x in v]


def _probabilities(v, name, n):
    p = _vector(v, name, n)
    if any(x < 0 for x in p) or abs(sum(p) - 1.0) > 1e-12:
        raise ConfigError(f"'{name}' must be non-negative and sum to 1")
    return p


def _solver_fields(cfg, default_tol):
    return dict(
        step=_positive(cfg.get("step", 1.0), "step"),
        max_iter=_positive(cfg.get("max_iter", 20000), "max_iter", integer=True),
        tol=_positive(cfg.get("tol", default_tol), "tol"),
    )


def _common(cfg):
    return dict(seed=_number(cfg.get("seed", 0), "seed", integer=True))


def validate_final_layer(cfg):
    if "k" not in cfg:
        raise ConfigError("missing required key 'k'")
    k = _number(cfg["k"], "k", integer=True)
    if k < 2:
        raise ConfigError("'k' must be at least 2")
    R = _positive(cfg.get("R", 1.0), "R")
    p = _number(cfg.get("p", 2.0), "p")
    if not 1.0 < p < math.inf:
        raise ConfigError(f"'p' must lie in (1, inf), got {p}")
    weights = cfg.get("weights")
    if weights is not None:
        weights = _probabilities(weights, "weights", k)
        if min(weights) <= 0:
            raise ConfigError("'weights' must be strictly positive")
    return dict(k=k, R=R, p=p, weights=weights, **_solver_fields(cfg, 1e-10), **_common(cfg))


def validate_penultimate(cfg):
    base = validate_final_layer({**cfg, "p": 2.0})
    if "m" not in cfg:
        raise ConfigError("missing required key 'm'")
    m = _number(cfg["m"], "m", integer=True)
    if m < base["k"] - 1:
        raise ConfigError(f"'m' must be at least k-1 = {base['k'] - 1}")
    if "p" in cfg and _number(cfg["p"], "p") != 2.0:
        raise ConfigError("penultimate experiments are Euclidean only (p = 2)")
    base.update(m=m, tol=_positive(cfg.get("tol", 1e-8), "tol"))
    del base["p"]
    return base


def validate_ode(cfg):
    if "p" not in cfg:
        raise ConfigError("missing required key 'p'")
    p = _probabilities(cfg["p"], "p", 3)
    if p[0] <= 0 or p[2] <= 0:
        raise ConfigError("'p' needs p1 > 0 and p3 > 0")
    return dict(
        p=p,
        a0=_vector(cfg.get("a0", [0.0, 0.0, 0.0]), "a0", 3),
        T=_positive(cfg.get("T", 1e6), "T"),
        dt=_positive(cfg.get("dt", 1e-2), "dt"),
        stretch=_bool(cfg.get("stretch", True), "stretch"),
        n_checkpoints=_positive(cfg.get("n_checkpoints", 100), "n_checkpoints", integer=True),
        **_common(cfg),
    )


def _bool(v, name):
    if not isinstance(v, bool):
        raise ConfigError(f"'{name}' must be true or false")
    return v


def validate_margin(cfg):
    m = _positive(cfg.get("m", 500), "m", integer=True)
    if m < 100:
        raise ConfigError("'m' must be at least 100 particles")
    return dict(
        m=m,
        T=_positive(cfg.get("T", 1e4), "T"),
        dt=_positive(cfg.get("dt", 1.0), "dt"),
        n_checkpoints=_positive(cfg.get("n_checkpoints", 50), "n_checkpoints", integer=True),
        **_common(cfg),
    )


def validate_metrics(cfg):
    for key in ("features", "labels"):
        if key not in cfg:
            raise ConfigError(f"missing required key '{key}'")
    X = cfg["features"]
    if not isinstance(X, list) or not X:
        raise ConfigError("'features' must be a non-empty list of vectors")
    rows = [_vector(r, "features") if isinstance(r, list) else [_number(r, "features")] for r in X]
    if len({len(r) for r in rows}) != 1:
        raise ConfigError("'features' rows must have equal length")
    labels = cfg["labels"]
    if not isinstance(labels, list) or len(labels) != len(rows):
        raise ConfigError("'labels' must be a list with one label per feature row")
    labels = [_number(v, "labels", integer=True) for v in labels]
    if min(labels) < 0:
        raise ConfigError("'labels' must be non-negative")
    k = max(labels) + 1
    if k < 2 or set(labels) != set(range(k)):
        raise ConfigError("'labels' must cover classes 0..k-1 with k >= 2")
    A = cfg.get("A")
    if A is not None:
        if not isinstance(A, list) or len(A) != k:
            raise ConfigError(f"'A' must have {k} rows")
        A = [_vector(r, "A", len(rows[0])) for r in A]
    return dict(features=rows, labels=labels, A=A, **_common(cfg))


# ----------------------------------------------------------------- runners

def run_final_layer(c) -> ExperimentResult:
    k = c["k"]
    ds = LabeledPointSet.one_point_classes(k, c["weights"])
    settings = SolverSettings(step=c["step"], max_iter=c["max_iter"], tol=c["tol"],
                              R=c["R"], p=c["p"], seed=c["seed"])
    oracle = simplex_lp(k, c["R"], c["p"])
    columns = ["iteration", "risk", "residual", "step"]
    try:
        sol = minimize_risk_on_ball(ds, settings)
        Z, iters, res, trace, ok, msg = sol.z, sol.iterations, sol.residual, sol.trace, True, ""
    except NonConverged as exc:
        Z, iters, res, trace, ok, msg = exc.last, len(exc.trace) - 1, exc.residual, exc.trace, False, str(exc)
    rows = [[r["iteration"], r["value"], r["residual"], r["step"]] for r in trace]
    diag = np.diag(Z)
    off = Z[~np.eye(k, dtype=bool)]
    report = dict(
        k=k, R=c["R"], p=c["p"], seed=c["seed"],
        alpha=oracle.alpha, beta=oracle.beta,
        solver_alpha=float(diag.mean()), solver_beta=float(off.mean()),
        max_vertex_error=float(np.abs(Z - vertices(oracle)).max()),
        risk=trace[-1]["value"], oracle_risk=oracle_risk(oracle),
        iterations=iters, residual=res, converged=ok,
    )
    return ExperimentResult(columns, rows, report,
                            dict(x="iteration", y="risk", title="final-layer risk"), ok, msg)


def run_penultimate(c) -> ExperimentResult:
    k, m, R = c["k"], c["m"], c["R"]
    ds = LabeledPointSet.one_point_classes(k, c["weights"])
    settings = SolverSettings(step=c["step"], max_iter=c["max_iter"], tol=c["tol"], R=R, seed=c["seed"])
    try:
        res = optimize_penultimate(ds, m, R, settings)
        ok, msg = True, ""
    except NonConverged as exc:
        res, ok, msg = exc.last, False, str(exc)
    st = res.state
    iso = check_isometry(st)
    G = st.Y @ st.Y.T
    d = np.diag(G)
    D = d[:, None] + d[None, :] - 2 * G
    dist = D[~np.eye(k, dtype=bool)]
    nc = collapse_report(st.Y, np.arange(k), st.A)
    columns = ["iteration", "risk", "residual", "gram_deviation", "isometry_residual"]
    rows = [[r[col] for col in columns] for r in res.trace]
    report = dict(
        k=k, m=m, R=R, seed=c["seed"],
        risk=res.risk, oracle_risk=res.oracle_risk, risk_gap=res.risk - res.oracle_risk,
        pairwise_distance_sq_expected=2 * k * R**2 / (k - 1),
        pairwise_distance_sq_max_error=float(np.abs(dist - 2 * k * R**2 / (k - 1)).max()),
        operator_norm=float(np.linalg.norm(st.A, 2)),
        **iso.as_dict(),
        equinorm_deviation=nc.equinorm_deviation,
        equiangular_deviation=nc.equiangular_deviation,
        self_duality_deviation=nc.self_duality_deviation,
        iterations=res.iterations, residual=res.residual, converged=ok,
    )
    return ExperimentResult(columns, rows, report,
                            dict(x="iteration", y="risk", title="penultimate risk"), ok, msg)


def run_ode(c) -> ExperimentResult:
    p = c["p"]
    s0 = tn.ThreeNeuronState(*c["a0"], *p)
    traj = tn.integrate_three_neuron(s0, c["T"], c["dt"], tn.default_checkpoints(c["T"], c["n_checkpoints"]),
                                     c["stretch"])
    gap = tn.class_gap(traj)
    columns = ["t", "a1", "a2", "a3", "gap"]
    rows = [[r[col] for col in columns] for r in traj.records()]
    vals = tn.outputs(traj.a[-1])
    nc = collapse_report(vals, [0, 1, 0])
    report = dict(
        p1=p[0], p2=p[1], p3=p[2], T=c["T"], dt=c["dt"], seed=c["seed"],
        gap_final=float(gap[-1]), gap_limit=tn.limit_gap(p),
        gap_error=float(gap[-1] - tn.limit_gap(p)),
        a1_final=float(traj.a[-1, 0]), a2_final=float(traj.a[-1, 1]), a3_final=float(traj.a[-1, 2]),
        a1_relative_error=float(abs(traj.a[-1, 0] / tn.a1_exact(traj.t[-1], c["a0"][0], p[0]) - 1))
        if tn.a1_exact(traj.t[-1], c["a0"][0], p[0]) != 0 else 0.0,
        invariant_factor_final=float(tn.invariant_factor(traj)[-1]) if p[1] > 0 else float("nan"),
        invariant_factor_limit=2 * p[1] / (3 * p[2]),
        within_class_variance=nc.within_class_variance,
        steps=traj.steps,
    )
    return ExperimentResult(columns, rows, report,
                            dict(x="t", y="gap", title="h(t,1) - h(t,-1)", logx=True))


def run_margin(c) -> ExperimentResult:
    data = mf.MarginDataset.standard()
    run = mf.train_mean_field_relu(data, m=c["m"], T=c["T"], dt=c["dt"], seed=c["seed"],
                                   n_checkpoints=c["n_checkpoints"])
    rep = mf.margin_report(run.ensemble, data)
    columns = ["t", "risk", "margin", "path_norm", "spread"]
    rows = [[r[col] for col in columns] for r in run.trace]
    report = dict(
        m=c["m"], T=c["T"], dt=c["dt"], seed=c["seed"],
        **rep.as_dict(),
        fitted_b=mf.fit_b(run.ensemble),
        risk_final=run.trace[-1]["risk"],
        steps=run.steps,
    )
    return ExperimentResult(columns, rows, report,
                            dict(x="t", y="margin", title="normalized margin", logx=True))


def run_metrics(c) -> ExperimentResult:
    X = np.array(c["features"])
    labels = np.array(c["labels"])
    rep = collapse_report(X, labels, None if c["A"] is None else np.array(c["A"]))
    k = labels.max() + 1
    columns = ["class", "count", "centered_norm"]
    means = np.array([X[labels == i].mean(axis=0) for i in range(k)])
    norms = np.linalg.norm(means - rep.center, axis=1)
    rows = [[i, int(np.sum(labels == i)), float(norms[i])] for i in range(k)]
    report = dict(seed=c["seed"], k=int(k), **rep.as_dict())
    return ExperimentResult(columns, rows, report, dict(x="class", y="centered_norm", title="class mean norms"))


EXPERIMENTS = {
    "final-layer": (validate_final_layer, run_final_layer),
    "penultimate": (validate_penultimate, run_penultimate),
    "ode": (validate_ode, run_ode),
    "margin": (validate_margin, run_margin),
    "metrics": (validate_metrics, run_metrics),
}

RESERVED = {"experiment", "grid", "output_dir"}
ALLOWED = {
    "final-layer": {"k", "R", "p", "weights", "step", "max_iter", "tol", "seed"},
    "penultimate": {"k", "m", "R", "p", "weights", "step", "max_iter", "tol", "seed"},
    "ode": {"p", "a0", "T", "dt", "stretch", "n_checkpoints", "seed"},
    "margin": {"m", "T", "dt", "n_checkpoints", "seed"},
    "metrics": {"features", "labels", "A", "seed"},
}


def expand_config(cfg: dict) -> list[dict]:
    """Validate a raw config and return one validated parameter set per grid cell."""
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    kind = cfg.get("experiment")
    if kind not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment kind {kind!r}; expected one of {sorted(EXPERIMENTS)}")
    unknown = set(cfg) - RESERVED - ALLOWED[kind]
    if unknown:
        raise ConfigError(f"unknown keys for '{kind}': {sorted(unknown)}")
    grid = cfg.get("grid") or {}
    if not isinstance(grid, dict):
        raise ConfigError("'grid' must map parameter names to lists of values")
    for key, values in grid.items():
        if key not in ALLOWED[kind]:
            raise ConfigError(f"grid key {key!r} is not a parameter of '{kind}'")
        if not isinstance(values, list) or not values:
            raise ConfigError(f"grid values for {key!r} must be a non-empty list")
    base = {k: v for k, v in cfg.items() if k not in RESERVED}
    validate = EXPERIMENTS[kind][0]
    keys = list(grid)
    cells = []
    for combo in itertools.product(*(grid[k] for k in keys)):
        raw = {**base, **dict(zip(keys, combo))}
        cells.append((dict(zip(keys, combo)), validate(raw)))
    return cells


# ------------------------------------------------------------------ output

def _cell(v):
    if isinstance(v, bool):
        return int(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def write_csv(path: Path, columns, rows) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_cell(v) for v in r])
    path.write_text(buf.getvalue(), encoding="utf-8", newline="")


def flat_report(report: dict) -> dict:
    out = {}
    for key, v in report.items():
        if v is None:
            continue
        if isinstance(v, bool):
            v = int(v)
        elif isinstance(v, (np.integer,)):
            v = int(v)
        elif isinstance(v, (float, np.floating)):
            v = float(v)
            if not math.isfinite(v):
                v = None
        out[key] = v
    return out


def write_outputs(out_dir: Path, result: ExperimentResult, plot: bool) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    write_csv(out_dir / "results.csv", result.columns, result.rows)
    (out_dir / "report.json").write_text(
        json.dumps(flat_report(result.report), indent=2, allow_nan=False) + "\n", encoding="utf-8"
    )
    if plot:
        chart = result.plot
        xi, yi = result.columns.index(chart["x"]), result.columns.index(chart["y"])
        svg = line_chart_svg([r[xi] for r in result.rows], [r[yi] for r in result.rows],
                             title=chart.get("title", ""), xlabel=chart["x"], ylabel=chart["y"],
                             logx=chart.get("logx", False))
        (out_dir / "plot.svg").write_text(svg, encoding="utf-8")


def _threads() -> int:
    raw = os.environ.get(THREADS_ENV)
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            pass
    return os.cpu_count() or 1


def _run_cell(kind, params):
    try:
        return EXPERIMENTS[kind][1](params), EXIT_OK, ""
    except (NonConverged, NumericFailure) as exc:
        return None, EXIT_NONCONVERGED, str(exc)


def run(config_path: str, out: str | None = None, plot: bool = False) -> int:
    try:
        with open(config_path, encoding="utf-8") as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: cannot read config {config_path}: {exc}", file=sys.stderr)
        return EXIT_INVALID
    try:
        cells = expand_config(cfg)
    except InvalidArgument as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    out_dir = Path(out or cfg.get("output_dir") or "out")
    kind = cfg["experiment"]
    gridded = bool(cfg.get("grid"))
    if not gridded:
        results = [_run_cell(kind, cells[0][1])]
    else:
        with ThreadPoolExecutor(max_workers=min(_threads(), len(cells))) as pool:
            results = list(pool.map(lambda c: _run_cell(kind, c[1]), cells))
    status = EXIT_OK
    summary = []
    for n, ((grid_params, _), (result, code, msg)) in enumerate(zip(cells, results)):
        cell_dir = out_dir / f"cell_{n:03d}" if gridded else out_dir
        if result is not None:
            write_outputs(cell_dir, result, plot)
            if not result.converged:
                code, msg = EXIT_NONCONVERGED, result.message
            summary.append({"cell": n, **grid_params, **flat_report(result.report)})
        if code != EXIT_OK:
            print(f"error: {'cell %d: ' % n if gridded else ''}{msg}", file=sys.stderr)
        status = max(status, code)
    if gridded and summary:
        cols = list(dict.fromkeys(k for row in summary for k in row))
        write_csv(out_dir / "grid.csv", cols, [[row.get(c, "") for c in cols] for row in summary])
    return status


def verify(suite: str) -> int:
    checks = run_suite(suite)
    for c in checks:
        print(c.line())
    failed = sum(not c.passed for c in checks)
    print(f"{len(checks) - failed}/{len(checks)} checks passed")
    return EXIT_OK if failed == 0 else 1


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="collapse-lab", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run an experiment from a JSON config")
    r.add_argument("config")
    r.add_argument("--plot", action="store_true", help="also write plot.svg")
    r.add_argument("--out", help="output directory (default: config output_dir or ./out)")
    v = sub.add_parser("verify", help="run an invariant suite")
    v.add_argument("suite", choices=[*SUITES, "all"])
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "run":
        return run(args.config, args.out, args.plot)
    return verify(args.suite)


if __name__ == "__main__":
    sys.exit(main())
