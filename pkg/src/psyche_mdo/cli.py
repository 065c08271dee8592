"""Command-line entry point.

Exit codes: 0 success, 2 configuration error, 3 solver did not converge,
4 numerical failure. The default output root is ``$PSYCHE_MDO_OUT`` or
``./runs``.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from . import scenario as sc
from .fourier_guess import FitError
from .nlp import SolverUnavailable
from .plotting import emit_plot_data, render_figures
from .propagate import IntegrationError, mass_audit, propagate, write_trajectory_csv
from .transcription import NodeGuess, Solution, build

EXIT_OK, EXIT_CONFIG, EXIT_NOT_CONVERGED, EXIT_NUMERICAL = 0, 2, 3, 4
OUT_ENV = "PSYCHE_MDO_OUT"

log = logging.getLogger("psyche_mdo")


def _csv_list(kind):
    def parse(text):
        try:
            return [kind(v) for v in text.split(",") if v.strip()]
        except ValueError:
            raise argparse.ArgumentTypeError(f"expected a comma-separated list, got {text!r}") from None
    return parse


def _add_config_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="YAML scenario file (defaults apply when omitted)")
    p.add_argument("--preset", choices=sorted(sc.PRESETS), help="named preset merged under the config file")
    p.add_argument("--mode", choices=sc.MODES, help="shortcut for --set mode=...")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                   help="dotted-path override, e.g. grid.n_segments=20 (repeatable)")
    p.add_argument("--unscaled", action="store_true", help="solve in SI units instead of canonical units")
    p.add_argument("--out", type=Path, help=f"output directory (default: ${OUT_ENV} or ./runs, plus a run name)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="psyche-mdo",
                                 description="Coupled low-thrust transfer and solar-array sizing optimisation.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("-v", "--verbose", action="count", default=0, help="more logging (repeatable)")
    sub = ap.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("guess", help="build the shape-based initial guess and write it out")
    _add_config_args(p)

    p = sub.add_parser("solve", help="solve one scenario and write a run directory")
    _add_config_args(p)
    p.add_argument("--no-figures", action="store_true", help="skip PNG rendering (CSVs are always written)")
    p.add_argument("--no-verify", action="store_true", help="skip explicit re-propagation")

    p = sub.add_parser("propagate", help="re-propagate the solution stored in a run directory")
    p.add_argument("run", type=Path, help="run directory written by 'solve'")
    p.add_argument("--rtol", type=float, help="relative tolerance (default from the run config)")
    p.add_argument("--atol", type=float, help="absolute tolerance (default from the run config)")
    p.add_argument("--no-figures", action="store_true", help="skip PNG rendering")

    p = sub.add_parser("compare", help="tabulate a baseline run against a coupled run")
    p.add_argument("--baseline", type=Path, required=True, help="baseline run directory")
    p.add_argument("--coupled", type=Path, required=True, help="coupled run directory")
    p.add_argument("--out", type=Path, help="directory for comparison.csv/json (default: output root)")

    p = sub.add_parser("sweep-area", help="solve the fixed-area problem over a list of array areas")
    _add_config_args(p)
    p.add_argument("--areas", type=_csv_list(float), required=True, help="comma-separated areas in m^2")
    p.add_argument("--jobs", type=int, default=1, help="parallel worker processes")

    p = sub.add_parser("defect-study", help="re-propagation divergence versus segment count")
    _add_config_args(p)
    p.add_argument("--segments", type=_csv_list(int), required=True, help="comma-separated segment counts")
    p.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    return ap


def _resolve_config(args) -> sc.ScenarioConfig:
    overrides = list(args.overrides)
    if args.mode:
        overrides.append(f"mode={args.mode}")
    if args.unscaled:
        overrides.append("scaling=false")
    return sc.load_config(args.config, preset=args.preset, overrides=overrides)


def _out_dir(args, name: str) -> Path:
    if getattr(args, "out", None) is not None:
        out = args.out
    else:
        out = Path(os.environ.get(OUT_ENV, "runs")) / name
    out.mkdir(parents=True, exist_ok=True)
    return out


def node_rows(sol: Solution) -> np.ndarray:
    return np.column_stack([sol.t, sol.states, sol.P_E, sol.alpha, sol.thrust, sol.mdot,
                            sol.P_SA, sol.P_avail])


def _json_default(v):
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    raise TypeError(type(v).__name__)


def _write_json(path: Path, data) -> None:
    path.write_text(json.dumps(data, indent=2, default=_json_default) + "\n", encoding="utf-8")


def write_run(run: sc.RunResult, out: Path, figures: bool = True) -> None:
    """Persist every artifact of a solved scenario into ``out``."""
    sc.dump_config(run.config, out / "config.yaml")
    sol = run.solution
    write_trajectory_csv(out / "solution.csv", node_rows(sol))
    if sol.defects is not None:
        sol.defects.to_csv(out / "defects.csv")
    run.solve.write_log(out / "iterations.csv")
    if run.propagation is not None:
        run.propagation.to_csv(out / "trajectory.csv")
    _write_json(out / "summary.json", run.summary())
    emit_plot_data(sol, run.propagation, out)
    if figures:
        render_figures(out)


def load_solution(run_dir: Path) -> tuple[sc.ScenarioConfig, Solution]:
    """Rebuild the exact solution stored by :func:`write_run`."""
    cfg = sc.load_config(run_dir / "config.yaml")
    data = np.genfromtxt(run_dir / "solution.csv", delimiter=",", names=True, encoding="utf-8")
    states = np.column_stack([data[k] for k in ("r", "theta", "v_r", "v_theta", "m")])
    summary = json.loads((run_dir / "summary.json").read_text(encoding="utf-8"))
    nodes = NodeGuess(states, np.asarray(data["P_E"]), np.asarray(data["alpha"]),
                      float(data["t"][-1]), float(summary["A_SA"]))
    problem = build(cfg.grid, cfg, nodes)
    x = problem.pack(nodes)
    return cfg, Solution.from_problem(problem, x, summary.get("status", "unsolved"))


def _status_code(status: str) -> int:
    if status == "converged":
        return EXIT_OK
    if status == "numerical-failure":
        return EXIT_NUMERICAL
    return EXIT_NOT_CONVERGED


def cmd_guess(args) -> int:
    cfg = _resolve_config(args)
    out = _out_dir(args, f"guess-{cfg.mode}")
    g = sc.make_guess(cfg)
    sc.dump_config(cfg, out / "config.yaml")
    problem = build(cfg.grid, cfg, g.nodes)
    sol = Solution.from_problem(problem, problem.x0, "guess")
    write_trajectory_csv(out / "guess.csv", node_rows(sol))
    d = g.dense
    with open(out / "guess_dense.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "r", "theta", "v_r", "v_theta", "m", "thrust", "alpha", "a_r", "a_theta"])
        for row in np.column_stack([d.t, d.states, d.thrust, d.alpha, d.accel]):
            w.writerow([repr(float(v)) for v in row])
    info = {"t_f": g.nodes.t_f, "revs": g.shape.revs, "A_SA": g.nodes.area,
            "thrust_ref": g.thrust_ref, "max_violation": sol.max_violation,
            "max_boundary_residual": float(np.abs(g.shape.boundary_residuals()).max())}
    _write_json(out / "summary.json", info)
    print(json.dumps(info, indent=2, default=_json_default))
    return EXIT_OK


def cmd_solve(args) -> int:
    cfg = _resolve_config(args)
    out = _out_dir(args, f"solve-{cfg.mode}")
    run = sc.run_scenario(cfg, verify=not args.no_verify)
    write_run(run, out, figures=not args.no_figures)
    s = run.summary()
    print(f"{s['status']}: t_f = {s['t_f']:.6f} s, A_SA = {s['A_SA']:.6f} m^2, "
          f"max violation = {s['max_violation']:.3e}, wrote {out}")
    if not run.converged:
        print(f"solver did not converge: {run.solve.message}", file=sys.stderr)
    return _status_code(run.solve.status)


def cmd_propagate(args) -> int:
    cfg, sol = load_solution(args.run)
    rtol = args.rtol or cfg.verify.rtol
    atol = args.atol or cfg.verify.atol
    res = propagate(sol, rtol, atol, cfg.scale_set())
    audit = mass_audit(res, sol)
    res.to_csv(args.run / "trajectory.csv")
    emit_plot_data(sol, res, args.run)
    if not args.no_figures:
        render_figures(args.run)
    info = {"max_radius_divergence": res.max_radius_divergence,
            "max_radius_divergence_rel_rf": res.max_radius_divergence / sol.rf,
            "divergence_max": dict(zip(("r", "theta", "v_r", "v_theta", "m"), res.divergence_max)),
            "divergence_rms": dict(zip(("r", "theta", "v_r", "v_theta", "m"), res.divergence_rms)),
            "propagated_propellant": audit.consumed, "propellant_quadrature": audit.quadrature,
            "mass_audit_residual": audit.residual}
    _write_json(args.run / "propagation.json", info)
    print(json.dumps(info, indent=2, default=_json_default))
    return EXIT_OK


def cmd_compare(args) -> int:
    summaries = []
    for d in (args.baseline, args.coupled):
        path = d / "summary.json"
        try:
            summaries.append(json.loads(path.read_text(encoding="utf-8")))
        except (OSError, json.JSONDecodeError) as exc:
            raise sc.ConfigError(f"cannot read {path}: {exc}") from None
    try:
        report = sc.compare_values(*summaries)
    except ValueError as exc:
        raise sc.ConfigError(str(exc)) from None
    out = _out_dir(args, "compare")
    with open(out / "comparison.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["variable", "baseline", "coupled", "delta_pct"])
        for r in report.rows:
            w.writerow([r.name, "" if r.baseline is None else repr(r.baseline),
                        "" if r.coupled is None else repr(r.coupled),
                        "" if r.delta_pct is None else repr(r.delta_pct)])
    _write_json(out / "comparison.json", report.to_records())
    print(report.as_table())
    return EXIT_OK


def _sweep_one(item):
    cfg, area = item
    run = sc.run_scenario(cfg.with_overrides({"mode": "baseline", "power.A_SA": area}))
    s = run.summary()
    return [area, s["status"], s["t_f"], s["initial_mass"], s["final_mass"],
            s["propellant_consumed"], s["max_violation"]]


def _study_one(item):
    cfg, n = item
    run = sc.run_scenario(cfg.with_overrides({"grid.n_segments": n}))
    s = run.summary()
    return [n, s["status"], s["t_f"], s["max_violation"], s.get("max_radius_divergence", float("nan")),
            s.get("max_radius_divergence_rel_rf", float("nan"))]


def _map(fn, items, jobs):
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            return list(ex.map(fn, items))
    return [fn(i) for i in items]


def _write_table(path: Path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in row])


def cmd_sweep_area(args) -> int:
    cfg = _resolve_config(args)
    out = _out_dir(args, "sweep-area")
    sc.dump_config(cfg, out / "config.yaml")
    rows = _map(_sweep_one, [(cfg, a) for a in args.areas], args.jobs)
    header = ["A_SA", "status", "t_f", "initial_mass", "final_mass", "propellant_consumed", "max_violation"]
    _write_table(out / "sweep_area.csv", header, rows)
    for row in rows:
        print(f"A_SA = {row[0]:8.3f} m^2  {row[1]:<12} t_f = {row[2]:.6f} s")
    return EXIT_OK if all(r[1] == "converged" for r in rows) else EXIT_NOT_CONVERGED


def cmd_defect_study(args) -> int:
    cfg = _resolve_config(args)
    out = _out_dir(args, "defect-study")
    sc.dump_config(cfg, out / "config.yaml")
    rows = _map(_study_one, [(cfg, n) for n in args.segments], args.jobs)
    header = ["n_segments", "status", "t_f", "max_violation", "max_radius_divergence",
              "max_radius_divergence_rel_rf"]
    _write_table(out / "defect_study.csv", header, rows)
    for row in rows:
        print(f"{row[0]:4d} segments  {row[1]:<12} divergence = {row[4]:.6g} m")
    return EXIT_OK if all(r[1] == "converged" for r in rows) else EXIT_NOT_CONVERGED


COMMANDS = {
    "guess": cmd_guess, "solve": cmd_solve, "propagate": cmd_propagate, "compare": cmd_compare,
    "sweep-area": cmd_sweep_area, "defect-study": cmd_defect_study,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except sc.ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, SolverUnavailable) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (IntegrationError, FitError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
