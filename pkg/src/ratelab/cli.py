"""``rate-lab``: run scenarios, optimise bounds, batch-run a directory."""
from __future__ import annotations

import argparse
import csv
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import bound as bd
from . import flux as fx
from . import verify as vf
from .errors import RateLabError
from .scenario import data_norm, load_scenario, parse_flux_spec, sample_initial
from .solver import Form, discrete_gradient, solve_dirichlet, solve_neumann_primitive, sup_norm_history, write_trajectory_csv

__all__ = ["RunResult", "run_scenario", "solver_flux", "scenario_bound", "m_floor_for", "main"]


@dataclass(frozen=True)
class RunResult:
    trajectory: object
    bound: bd.RateBound
    report: vf.VerificationReport

    @property
    def exit_code(self):
        return 0 if self.report.passed else 1


def m_floor_for(model, b0):
    """Smallest admissible m for data norm b0: 1 without a finite threshold."""
    if b0 == 0:
        return 1.0
    if model.kind is fx.Kind.ANGUIGE_SCHMEISER and model.params[0] > 0.75:
        return bd.strong_aggregation_mstar(model.params[0], b0)
    if model.kind is fx.Kind.PERONA_MALIK:
        return bd.pm_mstar(b0)
    return bd.generic_mstar(fx.parabolicity_threshold(model), b0)


def scenario_bound(s, values=None):
    """RateBound for the scenario: its fixed triple, or the optimiser's."""
    model = s.flux.model()
    norm = data_norm(s, values)
    if s.bound.mode == "fixed":
        p = bd.BoundParams(s.bound.tau, s.bound.lam, s.bound.m, norm, s.L)
        return bd.compute_rate_bound(model, p)
    floor = s.bound.m_floor if s.bound.m_floor is not None else m_floor_for(model, norm)
    return bd.optimize_rate(model, norm, s.L, m_lower=floor).bound


def solver_flux(s, b):
    """Flux handed to the time stepper: the base model, or a smooth extension past
    the midpoint between the bound radius and the parabolicity threshold."""
    model = s.flux.model()
    thr = fx.parabolicity_threshold(model)
    if s.flux.extension == "none" or math.isinf(thr):
        return model
    s_bar = 0.5 * (b.R + thr)
    if s.flux.extension_width is not None:
        return fx.build_extension(model, s_bar, s.flux.extension_width)
    return fx.auto_extension(model, s_bar, max_width=0.5)


def run_scenario(s, out_dir=None, backend=None):
    """bound -> solve -> verify; write CSVs and the report when ``out_dir`` is given."""
    try:
        values = sample_initial(s)
        b = scenario_bound(s, values)
        model = solver_flux(s, b)
        if s.form is Form.DENSITY_DIRICHLET:
            values[0] = values[-1] = 0.0
            traj = solve_dirichlet(model, values, s.grid, s.solver, backend)
            controlled = traj
        else:
            traj = solve_neumann_primitive(model, values, s.grid, s.solver, backend)
            controlled = discrete_gradient(traj)
    except RateLabError as err:
        raise type(err)(f"scenario {s.name}: {err}") from err

    v = s.verify
    base = s.flux.model()
    bar = bd.Barrier.from_rate_bound(b)
    report = vf.VerificationReport(s.name, b)
    on = set(v.enabled)
    if "maximum_principle" in on:
        report.add(vf.check_maximum_principle(traj, v.tolerance))
    if "monotone_envelopes" in on:
        report.add(vf.check_monotone_envelopes(controlled if s.form is Form.DENSITY_DIRICHLET else traj, v.tolerance))
    if "bound_domination" in on:
        report.add(vf.check_bound_domination(controlled, b, v.slack))
    if "barrier_domination" in on:
        report.add(vf.check_barrier_domination(controlled, bar, v.slack))
    if "supersolution" in on:
        report.add(vf.check_supersolution(bar, base, v.lattice))
    if "decay_rate" in on:
        report.add(vf.check_decay_rate(controlled, b, v.fit_window, v.decay_factor))
    if s.form is Form.PRIMITIVE_NEUMANN:
        if "conservation" in on:
            report.add(vf.check_conservation(traj, v.conservation_tol))
        if "gradient_envelope" in on:
            report.add(vf.check_gradient_envelope(traj, v.tolerance))
    if model is not base:
        report.notes.append(f"solver flux: {model.describe()}")
    st = traj.stats
    report.notes.append(f"solver: {st.n_steps} steps, {st.rejected} rejected, max Newton iterations {max(st.newton_iterations)}")

    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_trajectory_csv(traj, out / "trajectory.csv")
        hist = sup_norm_history(controlled)
        with open(out / "supnorm.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "sup_norm"])
            w.writerows([f"{t:.17g}", f"{y:.17g}"] for t, y in hist)
        with open(out / "bound.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "bound"])
            w.writerows([f"{t:.17g}", f"{bd.evaluate_bound(b, t):.17g}"] for t in traj.times)
        (out / "report.txt").write_text(report.to_text() + "\n")
        report.write_csv(out / "report.csv")
    return RunResult(traj, b, report)


# -- commands ------------------------------------------------------------


def _cmd_run(args):
    s = load_scenario(args.scenario)
    out = args.out or os.path.join("out", s.name)
    result = run_scenario(s, out)
    print(result.report.to_text())
    print(f"outputs written to {out}")
    return result.exit_code


def _cmd_optimize(args):
    spec = parse_flux_spec(args.flux)
    model = spec.model()
    if args.m_floor == "auto":
        floor = m_floor_for(model, args.rho0_norm)
    else:
        floor = float(args.m_floor)
    print(f"flux: {model.describe()}  ||rho0||_inf = {args.rho0_norm:g}  L = {args.L:g}")
    print(f"m floor: {floor:.12g}")
    res = bd.optimize_rate(model, args.rho0_norm, args.L, m_lower=floor)
    p, b = res.params, res.bound
    print(f"{'':>10} {'tau':>14} {'lambda':>14} {'m':>14} {'gamma':>14} {'C':>14}")
    print(f"{'best':>10} {p.tau:>14.8g} {p.lam:>14.8g} {p.m:>14.8g} {b.gamma:>14.10g} {b.prefactor:>14.8g}")
    top = sorted(res.trace, key=lambda r: -r[3])[: args.top]
    for i, (tau, lam, m, g) in enumerate(top, 1):
        print(f"{'grid ' + str(i):>10} {tau:>14.8g} {lam:>14.8g} {m:>14.8g} {g:>14.10g}")
    print(f"feasible grid points: {res.n_feasible} of {bd.GRID_N ** 3}")
    print("gamma* is the best interior point found (approximates a supremum over open constraints)")
    if b.prefactor == 0:
        print("note: zero data norm gives C = 0, so the bound is vacuous (the solution is identically zero)")
    if args.trace:
        with open(args.trace, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["tau", "lambda", "m", "gamma"])
            w.writerows([f"{v:.17g}" for v in row] for row in res.trace)
        print(f"grid trace written to {args.trace}")
    return 0


def _run_one(path, out_root):
    try:
        s = load_scenario(path)
        result = run_scenario(s, Path(out_root) / s.name)
    except RateLabError as err:
        return Path(path).stem, 2, str(err)
    return s.name, result.exit_code, ""


def _cmd_batch(args):
    paths = sorted(Path(args.directory).glob("*.scn"))
    if not paths:
        print(f"no .scn files in {args.directory}", file=sys.stderr)
        return 2
    cap = int(os.environ.get("RATE_LAB_THREADS", os.cpu_count() or 1))
    workers = max(1, min(cap, len(paths)))
    with ThreadPoolExecutor(max_workers=workers) as pool:
        results = list(pool.map(lambda p: _run_one(p, args.out), paths))
    worst = 0
    for name, code, msg in results:
        print(f"{name:<28} {'PASS' if code == 0 else 'FAIL'}" + (f"  {msg}" if msg else ""))
        worst = max(worst, code)
    return worst


def build_parser():
    ap = argparse.ArgumentParser(prog="rate-lab", description="Decay-rate bounds for 1-D quasilinear diffusion.")
    sub = ap.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run one scenario file")
    r.add_argument("scenario")
    r.add_argument("--out", help="output directory (default out/<name>)")
    r.set_defaults(func=_cmd_run)

    o = sub.add_parser("optimize", help="maximise the decay rate over (tau, lambda, m)")
    o.add_argument("--flux", required=True, help="kind[:key=value,...], e.g. anguige_schmeiser:a=1")
    o.add_argument("--rho0-norm", type=float, required=True)
    o.add_argument("--L", type=float, required=True)
    o.add_argument("--m-floor", default="auto", help="'auto' (from the parabolicity threshold) or a number >= 1")
    o.add_argument("--top", type=int, default=5, help="grid points to list")
    o.add_argument("--trace", help="write every feasible grid point to this CSV")
    o.set_defaults(func=_cmd_optimize)

    b = sub.add_parser("batch", help="run every .scn in a directory concurrently")
    b.add_argument("directory")
    b.add_argument("--out", default="out")
    b.set_defaults(func=_cmd_batch)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except RateLabError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
