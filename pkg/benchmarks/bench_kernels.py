#!/usr/bin/env python3
"""Compare the numba and numpy backends.

    python3 benchmarks/bench_kernels.py [--quick]

Times one implicit Newton step per flux and grid size, then a full
heat_sine run. The first numba call (compilation) is excluded.
"""
import argparse
import timeit
from pathlib import Path

import numpy as np

import ratelab
from ratelab import cli, kernels
from ratelab import flux as fx
from ratelab.scenario import load_scenario, with_solver

FLUXES = {
    "heat": fx.heat(),
    "anguige_schmeiser(a=0.5)": fx.anguige_schmeiser(0.5),
    "perona_malik(ext)": fx.auto_extension(fx.perona_malik(), 0.8),
}


def step_case(model, n, form):
    x = np.linspace(0, 1, n + 1)
    if form == "dirichlet":
        state = 0.3 * np.sin(np.pi * x)
    else:
        state = 0.5 + 0.1 / np.pi * np.cos(np.pi * x)
    return lambda backend: kernels.implicit_step(form, model, state, 1e-3, 1 / n, 1.0, 1e-12, 30, backend=backend)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--quick", action="store_true", help="small grids and one repeat")
    args = ap.parse_args()
    sizes = [100] if args.quick else [100, 400, 1600]
    repeat = 1 if args.quick else 5

    print(f"{'case':<44} {'numpy [ms]':>12} {'numba [ms]':>12} {'speedup':>9}")
    for name, model in FLUXES.items():
        form = "neumann" if name.startswith("perona") else "dirichlet"
        for n in sizes:
            step = step_case(model, n, form)
            step("numba")  # compile
            t = {}
            for b in ("numpy", "numba"):
                number = 3 if b == "numpy" else 50
                t[b] = min(timeit.repeat(lambda: step(b), number=number, repeat=repeat)) / number * 1e3
            print(f"{name + ' ' + form + ' n=' + str(n):<44} {t['numpy']:>12.3f} {t['numba']:>12.4f} {t['numpy'] / t['numba']:>8.0f}x")

    s = load_scenario(Path(ratelab.__file__).parent / "scenarios" / "heat_sine.scn")
    if args.quick:
        s = with_solver(s, t_final=0.05, output_every=0.005)
    t = {}
    for b in ("numpy", "numba"):
        t[b] = min(timeit.repeat(lambda: cli.run_scenario(s, backend=b), number=1, repeat=1 if b == "numpy" else 2))
    print(f"\nfull {s.name} run (t_final={s.solver.t_final:g}): numpy {t['numpy']:.2f} s, numba {t['numba']:.2f} s")


if __name__ == "__main__":
    main()
