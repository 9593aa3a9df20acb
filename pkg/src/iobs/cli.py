"""Command-line front end: ``iobs check``, ``iobs design`` and ``iobs simulate``.

Exit codes: 0 success, 1 check or guarantee failure, 2 usage or config error.
``IOBS_LOG`` sets the log level (name such as ``INFO`` or a number).
"""

import argparse
import csv
import json
import logging
import math
import os
import sys
import warnings
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np
from sklearn.base import clone

from . import matops
from .config import load_config
from .errors import ConfigError, DesignError, IobsError, NonFiniteState, SingularFk
from .exprs import ExprEvalError
from .lti import default_target, design_lti
from .ltv_ct import KklTarget, empirical_observability_check
from .ltv_dt import uco_check
from .sim import simulate

logger = logging.getLogger("iobs")

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


def _configure_logging():
    level = os.environ.get("IOBS_LOG", "WARNING").strip()
    value = int(level) if level.isdigit() else logging.getLevelName(level.upper())
    if not isinstance(value, int):
        value = logging.WARNING
    logging.basicConfig(level=value, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    logging.captureWarnings(True)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        obj = float(obj)
        return obj if math.isfinite(obj) else None
    return obj


def _dump_json(obj, path):
    text = json.dumps(_jsonable(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"
    Path(path).write_text(text, encoding="utf-8")


def _entry(name, passed, hard=True, error=None, **details):
    return {"name": name, "passed": bool(passed), "hard": hard, "error": error, "details": details}


# --- check ---------------------------------------------------------------

def _checks_lti(doc):
    sc = doc.scenario
    plant, obs = sc.plant, sc.observer
    F, H = plant.F, plant.H
    out = []
    rank = matops.numerical_rank(matops.observability_matrix(F, H))
    observable = rank == plant.n_x
    out.append(_entry("observability", observable, error=None if observable else "NotObservable",
                      rank=rank, n_x=plant.n_x))
    try:
        if obs.A is None or obs.B is None:
            A, B = default_target(plant.n_x, plant.n_y, plant.time_kind, matops.eigvals(F),
                                  spectrum=obs.spectrum)
            A = A if obs.A is None else obs.A
            B = B if obs.B is None else obs.B
        else:
            A, B = obs.A, obs.B
    except DesignError as exc:
        out.append(_entry("target", False, error=exc.code, message=str(exc)))
        return out
    cert = matops.spectral_certificate(A)
    if plant.time_kind == "ct":
        ok = cert.is_metzler and cert.max_real_part < 0
    else:
        ok = cert.is_nonnegative and cert.spectral_radius < 1
    out.append(_entry("target_structure", ok, error=None if ok else "BadTargetStructure", **cert.as_dict()))
    ctrl = matops.is_controllable(A, B)
    out.append(_entry("controllability", ctrl, error=None if ctrl else "NotControllable",
                      rank=matops.numerical_rank(matops.controllability_matrix(A, B))))
    gap, tol = matops.spectral_gap(A, F), matops.default_gap_tol(A, F)
    out.append(_entry("spectral_gap", gap > tol, error=None if gap > tol else "SpectraOverlap",
                      gap=gap, tolerance=tol))
    if all(c["passed"] for c in out):
        try:
            design = design_lti(plant, A, B, seed=sc.seed, max_redraws=obs.max_redraws, gap_tol=obs.gap_tol)
        except DesignError as exc:
            out.append(_entry("transformation", False, error=exc.code, message=str(exc)))
        else:
            c = design.certificates
            out.append(_entry("transformation", True, sigma_min_T=c["sigma_min_T"], cond_T=c["cond_T"],
                              sylvester_residual=c["sylvester_residual"],
                              inverse_residual=c["inverse_residual"], B_redraws=c["B_redraws"]))
    return out


def _target_entry(sc):
    obs = sc.observer
    try:
        target = KklTarget(tuple(obs.blocks), float(obs.gain), sc.plant.time_kind)
    except DesignError as exc:
        return _entry("target_structure", False, error=exc.code, message=str(exc)), None
    if len(target.blocks) != sc.plant.n_y:
        return _entry("target_structure", False, error="BadTargetStructure",
                      message=f"need one block per output ({sc.plant.n_y})"), None
    return _entry("target_structure", True, gain=target.gain, block_dims=target.block_dims,
                  **target.certificate().as_dict()), target


def _checks_dt_ltv(doc):
    sc = doc.scenario
    plant = sc.plant
    entry, target = _target_entry(sc)
    out = [entry]
    horizon = int(sc.horizon)
    smallest, at = math.inf, None
    for k in range(horizon):
        s = matops.singular_values(plant.F(k))
        rel = s[-1] / max(s[0], 1.0)
        if rel < smallest:
            smallest, at = rel, k
    invertible = smallest > 1e-13
    out.append(_entry("transition_invertibility", invertible, error=None if invertible else "SingularFk",
                      min_relative_sigma=smallest, argmin_k=at))
    m = doc.check.get("m") or (target.block_dims if target else [1] * plant.n_y)
    k_range = doc.check.get("k_range") or [max(m), max(horizon, max(m))]
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            rep = uco_check(plant, m, range(int(k_range[0]), int(k_range[1]) + 1))
    except (SingularFk, ValueError) as exc:
        out.append(_entry("uco", False, error=type(exc).__name__, message=str(exc), m=list(m)))
    else:
        out.append(_entry("uco", rep.passed, error=None if rep.passed else "NotObservable",
                          c_o=rep.c_o, argmin_k=rep.argmin, m=list(m), k_range=list(k_range)))
    return out


def _checks_ct_ltv(doc):
    sc = doc.scenario
    plant = sc.plant
    entry, target = _target_entry(sc)
    out = [entry]
    step = float(doc.check.get("grid_step", max(sc.horizon / 200.0, 1e-3)))
    grid = np.arange(0.0, sc.horizon + 0.5 * step, step)
    c_F, c_H = plant.norm_bounds(grid)
    bounded = math.isfinite(c_F) and math.isfinite(c_H)
    out.append(_entry("boundedness", bounded, c_F=c_F, c_H=c_H, grid_step=step))
    m = doc.check.get("m") or (target.block_dims if target else [1] * plant.n_y)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        rep = empirical_observability_check(plant, m, grid)
    out.append(_entry("empirical_observability", rep.passed, hard=False, c_o=rep.c_o,
                      argmin_t=rep.argmin, m=list(m), note="advisory finite-difference estimate"))
    return out


def run_check(config_path):
    """Return ``(exit_code, report_dict)`` for one config file."""
    try:
        doc = load_config(config_path)
        if doc.kind.endswith("lti"):
            checks = _checks_lti(doc)
        elif doc.kind == "dt-ltv":
            checks = _checks_dt_ltv(doc)
        else:
            checks = _checks_ct_ltv(doc)
    except ConfigError as exc:
        return EXIT_CONFIG, {"config": str(config_path), "passed": False, "config_error": str(exc)}
    except ExprEvalError as exc:
        return EXIT_CONFIG, {"config": str(config_path), "passed": False, "config_error": str(exc)}
    passed = all(c["passed"] for c in checks if c["hard"])
    report = {"config": str(config_path), "kind": doc.kind, "passed": passed, "checks": checks}
    return (EXIT_OK if passed else EXIT_FAIL), report


def _format_check(report):
    lines = [f"config: {report['config']}"]
    if "config_error" in report:
        lines.append(f"config error: {report['config_error']}")
        return "\n".join(lines)
    lines.append(f"kind: {report['kind']}")
    for c in report["checks"]:
        status = "PASS" if c["passed"] else ("FAIL" if c["hard"] else "WARN")
        extra = ", ".join(f"{k}={_short(v)}" for k, v in sorted(c["details"].items()))
        err = f" [{c['error']}]" if c["error"] else ""
        lines.append(f"{status} {c['name']}{err}: {extra}")
    lines.append("result: " + ("all hard checks passed" if report["passed"] else "check failure"))
    return "\n".join(lines)


def _short(v):
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)


def cmd_check(args):
    code, report = run_check(args.config)
    print(_format_check(report))
    if args.report:
        _dump_json(report, args.report)
    return code


# --- design --------------------------------------------------------------

def cmd_design(args):
    try:
        doc = load_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if not doc.is_lti:
        print("config error: design is trajectory-valued; use simulate", file=sys.stderr)
        return EXIT_CONFIG
    sc = doc.scenario
    try:
        obs = clone(sc.observer).set_params(seed=sc.seed).fit(sc.plant)
    except DesignError as exc:
        print(f"design failed [{exc.code}]: {exc}", file=sys.stderr)
        return EXIT_FAIL
    d = obs.design_
    artifact = {
        "kind": doc.kind,
        "A": d.A, "B": d.B, "T": d.T, "T_inv": d.T_inv,
        "certificates": d.certificates,
    }
    _dump_json(artifact, args.output)
    c = d.certificates
    print(f"wrote {args.output}: sigma_min(T)={c['sigma_min_T']:.6g} cond(T)={c['cond_T']:.6g} "
          f"residual={c['sylvester_residual']:.3g}")
    return EXIT_OK


# --- simulate ------------------------------------------------------------

def csv_header(n_x, n_z):
    cols = ["time"]
    cols += [f"x_{i}" for i in range(1, n_x + 1)]
    cols += [f"xlo_{i}" for i in range(1, n_x + 1)]
    cols += [f"xhi_{i}" for i in range(1, n_x + 1)]
    cols += [f"zlo_{i}" for i in range(1, n_z + 1)]
    cols += [f"zhi_{i}" for i in range(1, n_z + 1)]
    return cols + ["sigma_min", "contained", "z_contained"]


def write_csv(trace, path):
    n_x, n_z = trace.x.shape[1], trace.z_lo.shape[1]
    values = np.column_stack([trace.times, trace.x, trace.x_lo, trace.x_hi, trace.z_lo, trace.z_hi,
                              trace.sigma_min])
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(csv_header(n_x, n_z))
        for row, c, zc in zip(values, trace.contained, trace.z_contained):
            w.writerow(["%.17g" % v for v in row] + [int(c), int(zc)])


def plot_script(csv_path, n_x):
    lines = [
        "# gnuplot template: true state and interval bounds per component",
        "set datafile separator ','",
        "set key autotitle columnhead",
        "set xlabel 'time'",
        f"data = '{csv_path}'",
        f"n = {n_x}",
        "do for [i=1:n] {",
        "  set title sprintf('component %d', i)",
        "  plot data using 1:(column(1+i)) with lines title sprintf('x_%d', i), \\",
        "       data using 1:(column(1+n+i)) with lines dt 2 title sprintf('xlo_%d', i), \\",
        "       data using 1:(column(1+2*n+i)) with lines dt 2 title sprintf('xhi_%d', i)",
        "  pause -1",
        "}",
    ]
    return "\n".join(lines) + "\n"


def _resolve(explicit, fallback, config_path):
    if explicit:
        return explicit
    if fallback:
        p = Path(fallback)
        return str(p if p.is_absolute() else Path(config_path).parent / p)
    return None


def simulate_one(config_path, csv_path=None, report_path=None, plot_path=None):
    """Run one scenario file; returns ``(exit_code, message)``."""
    try:
        doc = load_config(config_path)
    except ConfigError as exc:
        return EXIT_CONFIG, f"{config_path}: config error: {exc}"
    csv_path = _resolve(csv_path, doc.output.get("csv"), config_path)
    report_path = _resolve(report_path, doc.output.get("report"), config_path)
    try:
        trace = simulate(doc.scenario)
    except ConfigError as exc:
        return EXIT_CONFIG, f"{config_path}: config error: {exc}"
    except ExprEvalError as exc:
        return EXIT_CONFIG, f"{config_path}: expression error: {exc}"
    except (NonFiniteState, SingularFk, DesignError) as exc:
        return EXIT_FAIL, f"{config_path}: simulation failed [{type(exc).__name__}]: {exc}"
    if csv_path:
        write_csv(trace, csv_path)
        if plot_path:
            Path(plot_path).write_text(plot_script(csv_path, trace.x.shape[1]), encoding="utf-8")
    summary = trace.summary()
    summary["name"] = doc.scenario.name
    if report_path:
        _dump_json(summary, report_path)
    star = "tstar" if doc.kind.startswith("ct") else "kstar"
    det = summary[star]
    when = f"{star}={det['time']:.6g}" if det["reached"] else f"{star} not reached ({det['reason']})"
    msg = (f"{config_path}: {when}, contained={summary['contained_after_' + star]}, "
           f"final_width={summary['final_width']:.6g}")
    return (EXIT_OK if trace.guaranteed else EXIT_FAIL), msg


def cmd_simulate(args):
    configs = args.configs
    many = len(configs) > 1
    jobs = []
    for cfg in configs:
        stem = Path(cfg).stem
        if many:
            csv_path = str(Path(args.output) / f"{stem}.csv") if args.output else None
            rep = str(Path(args.report) / f"{stem}.json") if args.report else None
            plot = str(Path(args.plot_script) / f"{stem}.gp") if args.plot_script else None
        else:
            csv_path, rep, plot = args.output, args.report, args.plot_script
        jobs.append((cfg, csv_path, rep, plot))
    if many:
        for d in (args.output, args.report, args.plot_script):
            if d:
                Path(d).mkdir(parents=True, exist_ok=True)
    if args.jobs > 1 and many:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(simulate_one, *zip(*jobs)))
    else:
        results = [simulate_one(*j) for j in jobs]
    for code, msg in results:
        print(msg, file=sys.stdout if code == EXIT_OK else sys.stderr)
    return max(code for code, _ in results)


def build_parser():
    p = argparse.ArgumentParser(prog="iobs", description="Interval observer design and simulation.")
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("check", help="verify design assumptions for a config")
    c.add_argument("config")
    c.add_argument("--report", "--json", dest="report", help="write the JSON report here")
    c.set_defaults(func=cmd_check)

    d = sub.add_parser("design", help="compute the constant transformation of an LTI config")
    d.add_argument("config")
    d.add_argument("-o", "--output", required=True, help="JSON artifact path")
    d.set_defaults(func=cmd_design)

    s = sub.add_parser("simulate", help="simulate plant and observer; write CSV and report")
    s.add_argument("configs", nargs="+", metavar="config")
    s.add_argument("-o", "--output", help="CSV path (a directory when several configs are given)")
    s.add_argument("--report", help="JSON report path (a directory when several configs are given)")
    s.add_argument("--plot-script", help="write a gnuplot template for the CSV")
    s.add_argument("--jobs", type=int, default=1, help="run several configs in parallel processes")
    s.set_defaults(func=cmd_simulate)
    return p


def main(argv=None):
    _configure_logging()
    args = build_parser().parse_args(argv)
    if getattr(args, "jobs", 1) < 1:
        print("--jobs must be at least 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args)
    except IobsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
