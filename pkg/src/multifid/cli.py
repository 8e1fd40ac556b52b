"""Command-line front end: ``multifid validate|run|compare``.

Exit codes: 0 success, 1 validation failure, 2 solver failure, 3 I/O failure.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .analysis import small_signal
from .errors import ConfigError, MultifidError, ValidationError
from .scenario import FORMULATIONS, compare, diagnose, initialize, load_scenario, run

EXIT_OK, EXIT_VALIDATION, EXIT_SOLVER, EXIT_IO = 0, 1, 2, 3
LOG_LEVELS = {"error": logging.ERROR, "warn": logging.WARNING, "info": logging.INFO, "debug": logging.DEBUG}

log = logging.getLogger("multifid.cli")


@dataclass
class RunReport:
    """Summary of one simulation run.

    ``wall_seconds`` is only written to files when timing output is
    requested, so report files stay byte-identical across runs.
    """

    scenario: str
    digest: str
    formulation: str
    status: str
    stats: dict
    outputs: dict
    sigma: dict | None = None
    failure: dict | None = None
    wall_seconds: float | None = None
    events: list = field(default_factory=list)

    def as_dict(self, timing: bool = False) -> dict:
        d = {"scenario": self.scenario, "digest": self.digest, "formulation": self.formulation,
             "status": self.status, "stats": self.stats, "events": self.events, "outputs": self.outputs}
        if self.sigma is not None:
            d["sigma"] = self.sigma
        if self.failure is not None:
            d["failure"] = self.failure
        if timing:
            d["wall_seconds"] = self.wall_seconds
        return d


def file_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=False) + "\n")


def _solver_for(sc, f: str, args):
    cfg = sc.solver_config(f)
    over = {"abstol": args.abstol, "reltol": args.reltol}
    if args.dt is not None:
        over["dt_fixed"] = args.dt
    return cfg.replace(**over)


def sigma_for(sc, f: str) -> dict:
    """Stiffness ratios at the initial equilibrium (dq and QSP only)."""
    if f == "abc":
        return {"formulation": f, "available": False, "reason": "time-varying formulation has no equilibrium"}
    ic = initialize(sc, f)
    rep = small_signal(ic.model, ic.x0)
    d = rep.as_dict()
    return {"formulation": f, "available": True, "sigma": rep.stiffness_ratio_plain, **d}


def _load(path):
    """Scenario or an exit code with a printed message."""
    try:
        return load_scenario(path), None
    except OSError as exc:
        print(f"error: cannot read {path}: {exc}", file=sys.stderr)
        return None, EXIT_IO
    except MultifidError as exc:
        print(f"error: {path}: {exc}", file=sys.stderr)
        return None, EXIT_VALIDATION


def _check(sc, formulations) -> int | None:
    bad = False
    for f in formulations:
        for msg in diagnose(sc, f):
            print(f"{f}: {msg}", file=sys.stderr)
            bad = True
    return EXIT_VALIDATION if bad else None


def _simulate(sc, path, f: str, args, out: Path, analysis: bool):
    """Run one formulation and write its CSV and stats sidecar."""
    cfg = _solver_for(sc, f, args)
    t0 = time.perf_counter()
    res = run(sc, f, solver=cfg, t_end=args.t_end)
    wall = time.perf_counter() - t0
    csv_name, stats_name = f"{f}.csv", f"{f}_stats.json"
    res.to_csv(out / csv_name)
    failure = None
    if not res.ok:
        failure = {"message": res.failure, "time": res.failure_time, "state": res.failure_state}
    stats = res.stats.as_dict()
    sidecar = {"formulation": f, "solver": cfg.as_dict(), "stats": stats, "events": res.events,
               "initialization": res.init_info, "failure": failure}
    _write_json(out / stats_name, sidecar)
    sigma = sigma_for(sc, f) if analysis else None
    rep = RunReport(str(Path(path).name), file_digest(path), f, "ok" if res.ok else "failed", stats,
                    {"csv": csv_name, "stats": stats_name}, sigma, failure, wall, res.events)
    return res, rep


def cmd_validate(args) -> int:
    sc, code = _load(args.scenario)
    if sc is None:
        return code
    forms = [args.formulation] if args.formulation else list(FORMULATIONS)
    n = 0
    for f in forms:
        for msg in diagnose(sc, f):
            print(f"{f}: {msg}")
            n += 1
    print(f"{args.scenario}: {n} diagnostic(s)")
    return EXIT_OK if n == 0 else EXIT_VALIDATION


def cmd_run(args) -> int:
    sc, code = _load(args.scenario)
    if sc is None:
        return code
    f = args.formulation or sc.formulation
    code = _check(sc, [f])
    if code is not None:
        return code
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        res, rep = _simulate(sc, args.scenario, f, args, out, args.analysis)
        _write_json(out / f"report_{f}.json", rep.as_dict(args.timing))
    except OSError as exc:
        print(f"error: cannot write results: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except MultifidError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    s = res.stats
    print(f"{f}: {rep.status}, accepted steps {s.accepted_steps}, rejected {s.rejected_steps}, "
          f"rhs evaluations {s.rhs_evaluations}, jacobians {s.jacobian_evaluations}")
    if rep.sigma is not None and rep.sigma.get("available"):
        print(f"{f}: stiffness ratio {rep.sigma['sigma']:.6g}")
    if args.timing:
        print(f"{f}: wall clock {rep.wall_seconds:.3f} s")
    if not res.ok:
        print(f"{f}: solver failure: {res.failure}", file=sys.stderr)
        return EXIT_SOLVER
    return EXIT_OK


def long_format_rows(results: dict, signals: list[str], plot_dt: float):
    """``(time, signal, formulation, value)`` rows on a uniform plot grid,
    ordered by signal, then formulation, then time."""
    for sig in signals:
        for f, res in results.items():
            if len(res.t) == 0:
                continue
            n = int(np.floor(res.t[-1] / plot_dt + 1e-9))
            grid = np.arange(n + 1) * plot_dt
            vals = np.interp(grid, res.t, res[sig])
            for t, v in zip(grid, vals):
                yield f"{t:.17g}", sig, f, f"{v:.17g}"


def cmd_compare(args) -> int:
    sc, code = _load(args.scenario)
    if sc is None:
        return code
    forms = [f.strip() for f in args.formulations.split(",") if f.strip()]
    unknown = [f for f in forms if f not in FORMULATIONS]
    if unknown or not forms or len(set(forms)) != len(forms):
        print(f"error: --formulations must list distinct entries of {FORMULATIONS}", file=sys.stderr)
        return EXIT_VALIDATION
    code = _check(sc, forms)
    if code is not None:
        return code
    out = Path(args.out)
    results, reports, failed = {}, {}, []
    try:
        out.mkdir(parents=True, exist_ok=True)
        for f in forms:
            try:
                res, rep = _simulate(sc, args.scenario, f, args, out, True)
            except ValidationError as exc:
                print(f"error: {exc}", file=sys.stderr)
                return EXIT_VALIDATION
            except MultifidError as exc:
                print(f"{f}: failed: {exc}", file=sys.stderr)
                failed.append(f)
                reports[f] = {"formulation": f, "status": "failed", "failure": {"message": str(exc)}}
                continue
            results[f], reports[f] = res, rep
            if not res.ok:
                failed.append(f)
        signals = [n for n in next(iter(results.values())).names()
                   if all(n in r.signals for r in results.values())] if results else []
        pairs = []
        for i, fa in enumerate(forms):
            for fb in forms[i + 1:]:
                if fa in results and fb in results:
                    cr = compare(results[fa], results[fb], {s: s for s in signals})
                    pairs.append({"a": fa, "b": fb, "t_start": cr.t_start, "t_stop": cr.t_stop,
                                  "errors": cr.as_rows()})
        sigma = {f: (reports[f].sigma if f in results else None) for f in forms}
        ratio = None
        if all(f in forms and f in results and sigma[f].get("available") for f in ("dq", "qsp")):
            ratio = sigma["dq"]["sigma"] / sigma["qsp"]["sigma"]
        work = [{"formulation": f, **{k: results[f].stats.as_dict()[k] for k in
                                      ("accepted_steps", "rejected_steps", "rhs_evaluations",
                                       "jacobian_evaluations", "jacobian_rhs_evaluations",
                                       "lu_factorizations", "newton_iterations")}}
                for f in forms if f in results]
        with open(out / "compare_long.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["time_s", "signal", "formulation", "value"])
            w.writerows(long_format_rows(results, signals, args.plot_dt))
        with open(out / "compare_errors.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["a", "b", "signal", "max_abs", "rms"])
            for p in pairs:
                for e in p["errors"]:
                    w.writerow([p["a"], p["b"], e["signal_a"], f"{e['max_abs']:.17g}", f"{e['rms']:.17g}"])
        report = {"scenario": Path(args.scenario).name, "digest": file_digest(args.scenario),
                  "formulations": forms, "failed": failed,
                  "runs": {f: (r.as_dict(args.timing) if isinstance(r, RunReport) else r)
                           for f, r in reports.items()},
                  "sigma": sigma, "sigma_ratio_dq_over_qsp": ratio, "work": work, "comparisons": pairs,
                  "outputs": {"long_csv": "compare_long.csv", "errors_csv": "compare_errors.csv"}}
        _write_json(out / "compare_report.json", report)
    except OSError as exc:
        print(f"error: cannot write results: {exc}", file=sys.stderr)
        return EXIT_IO
    for row in work:
        print(f"work {row['formulation']}: accepted steps {row['accepted_steps']}, "
              f"rhs evaluations {row['rhs_evaluations']}")
    for f in forms:
        s = sigma.get(f)
        if s and s.get("available"):
            print(f"sigma {f}: {s['sigma']:.6g}")
    if ratio is not None:
        print(f"sigma ratio dq/qsp: {ratio:.4g}")
    for p in pairs:
        mags = [e for e in p["errors"] if e["signal_a"].endswith(".v_mag")]
        if mags:
            worst = max(mags, key=lambda e: e["max_abs"])
            print(f"{p['a']} vs {p['b']}: max bus-voltage magnitude error {worst['max_abs']:.3e} "
                  f"({worst['signal_a']})")
    if args.timing:
        for f, r in reports.items():
            if isinstance(r, RunReport):
                print(f"{f}: wall clock {r.wall_seconds:.3f} s")
    if failed:
        print(f"failed runs: {', '.join(failed)}", file=sys.stderr)
        return EXIT_SOLVER
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="multifid", description="Multi-fidelity power-system simulation.")
    sub = p.add_subparsers(dest="command", required=True)

    v = sub.add_parser("validate", help="check a scenario file")
    v.add_argument("scenario")
    v.add_argument("--formulation", choices=FORMULATIONS, help="check one formulation only")
    v.set_defaults(func=cmd_validate)

    def sim_flags(q):
        q.add_argument("scenario")
        q.add_argument("--out", default="results", help="output directory (default: results)")
        q.add_argument("--dt", type=float, help="fixed step size in s")
        q.add_argument("--abstol", type=float)
        q.add_argument("--reltol", type=float)
        q.add_argument("--t-end", type=float, dest="t_end", help="override the scenario end time")
        q.add_argument("--timing", action="store_true", help="print and record wall-clock seconds")

    r = sub.add_parser("run", help="simulate one formulation")
    sim_flags(r)
    r.add_argument("--formulation", choices=FORMULATIONS)
    r.add_argument("--analysis", action="store_true", help="append the small-signal report")
    r.set_defaults(func=cmd_run)

    c = sub.add_parser("compare", help="simulate several formulations and compare them")
    sim_flags(c)
    c.add_argument("--formulations", default="qsp,dq", help="comma-separated list (default: qsp,dq)")
    c.add_argument("--plot-dt", type=float, default=1e-3, dest="plot_dt",
                   help="grid of the long-format CSV in s (default: 1e-3)")
    c.set_defaults(func=cmd_compare)
    return p


def main(argv=None) -> int:
    level = os.environ.get("MULTIFID_LOG", "warn").lower()
    logging.basicConfig(level=LOG_LEVELS.get(level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
