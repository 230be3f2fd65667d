"""Finite-difference time integration on a uniform grid of [0, L].

Two problem forms are supported:

* density form with homogeneous Dirichlet data, rho_t = (sigma(rho))_xx,
  discretised as the second difference of sigma(rho) at the nodes;
* primitive form with homogeneous Neumann data, u_t = (sigma(u_x))_x,
  discretised with face fluxes sigma((u_{i+1} - u_i)/h) and half control
  volumes at the two end nodes, so the trapezoid mass is conserved.

Each step is implicit (Euler or Crank-Nicolson) and solved by damped Newton
with a tridiagonal Jacobian; see ``ratelab.kernels``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from . import flux as fx
from . import kernels
from .errors import NewtonDiverged, NonParabolicState, WrongForm

__all__ = [
    "Form",
    "Scheme",
    "Grid",
    "SolverConfig",
    "SolverStats",
    "Trajectory",
    "solve_dirichlet",
    "solve_neumann_primitive",
    "discrete_gradient",
    "sup_norm_history",
    "mass_history",
    "exact_heat_mode",
    "write_trajectory_csv",
]

GUARD_FRACTION = 0.999


class Form(str, Enum):
    DENSITY_DIRICHLET = "density_dirichlet"
    PRIMITIVE_NEUMANN = "primitive_neumann"
    FACE_GRADIENT = "face_gradient"


class Scheme(str, Enum):
    IMPLICIT_EULER = "implicit_euler"
    CRANK_NICOLSON = "crank_nicolson"

    @property
    def weight(self):
        return 1.0 if self is Scheme.IMPLICIT_EULER else 0.5


@dataclass(frozen=True)
class Grid:
    L: float
    n_cells: int

    def __post_init__(self):
        if not self.L > 0:
            raise ValueError("L must be positive")
        if int(self.n_cells) != self.n_cells or self.n_cells < 4:
            raise ValueError("n_cells must be an integer >= 4")

    @property
    def h(self):
        return self.L / self.n_cells

    @property
    def nodes(self):
        x = np.arange(self.n_cells + 1) * self.h
        x[-1] = self.L
        return x

    @property
    def faces(self):
        return (np.arange(self.n_cells) + 0.5) * self.h


@dataclass(frozen=True)
class SolverConfig:
    dt_initial: float = 1e-4
    dt_min: float = 1e-10
    dt_max: float = 1e-2
    newton_tol: float = 1e-10
    newton_max_iter: int = 30
    scheme: Scheme = Scheme.IMPLICIT_EULER
    t_final: float = 1.0
    output_every: float = 0.01

    def __post_init__(self):
        if not 0 < self.dt_min <= self.dt_initial <= self.dt_max:
            raise ValueError("need 0 < dt_min <= dt_initial <= dt_max")
        if not self.newton_tol > 0:
            raise ValueError("newton_tol must be positive")
        if self.newton_max_iter < 1:
            raise ValueError("newton_max_iter must be at least 1")
        if not (self.t_final > 0 and self.output_every > 0):
            raise ValueError("t_final and output_every must be positive")
        object.__setattr__(self, "scheme", Scheme(self.scheme))

    def output_times(self):
        n = int(math.floor(self.t_final / self.output_every + 1e-9))
        times = [k * self.output_every for k in range(n + 1)]
        if self.t_final - times[-1] > 1e-12 * self.t_final:
            times.append(self.t_final)
        else:
            times[-1] = self.t_final if n else times[-1]
        return np.array(times)


@dataclass
class SolverStats:
    newton_iterations: list = field(default_factory=list)
    residuals: list = field(default_factory=list)
    dt: list = field(default_factory=list)
    rejected: int = 0

    @property
    def n_steps(self):
        return len(self.dt)


@dataclass(frozen=True)
class Trajectory:
    grid: Grid
    times: np.ndarray
    states: np.ndarray  # (n_times, n_points)
    form: Form
    x: np.ndarray
    stats: SolverStats | None = None
    flux: fx.FluxModel | None = None
    config: SolverConfig | None = None

    @property
    def initial(self):
        return self.states[0]


def _guard(flux):
    if flux.kind is fx.Kind.EXTENDED:
        return math.inf
    return GUARD_FRACTION * fx.parabolicity_threshold(flux)


def _integrate(form, flux, state0, grid, cfg, backend):
    out_times = cfg.output_times()
    states = [state0.copy()]
    stats = SolverStats()
    guard = _guard(flux)
    w = cfg.scheme.weight
    state = state0.copy()
    t, dt, clean = 0.0, cfg.dt_initial, 0
    for target in out_times[1:]:
        while t < target:
            step = min(dt, target - t)
            new, iters, res, status = kernels.implicit_step(
                form, flux, state, step, grid.h, w, cfg.newton_tol, cfg.newton_max_iter, guard, backend
            )
            if status != kernels.STATUS_OK:
                stats.rejected += 1
                clean = 0
                dt = step / 2
                if dt < cfg.dt_min:
                    err = NonParabolicState if status == kernels.STATUS_NONPARABOLIC else NewtonDiverged
                    raise err(
                        f"step at t={t:.6g} failed with dt={step:.3g} (residual {res:.3g}); "
                        f"dt would drop below dt_min={cfg.dt_min:g}"
                    )
                continue
            state = new
            stats.newton_iterations.append(int(iters))
            stats.residuals.append(float(res))
            stats.dt.append(step)
            t = target if step == target - t else t + step
            clean += 1
            if clean >= 5:
                dt = min(dt * 1.2, cfg.dt_max)
                clean = 0
        states.append(state.copy())
    return out_times, np.array(states), stats


def solve_dirichlet(flux, rho0, grid, cfg, backend=None):
    """Integrate rho_t = (sigma(rho))_xx with rho = 0 at both ends."""
    rho0 = np.array(rho0, dtype=float)
    if rho0.shape != (grid.n_cells + 1,):
        raise ValueError(f"rho0 must have {grid.n_cells + 1} node values")
    scale = max(1.0, float(np.max(np.abs(rho0))))
    if abs(rho0[0]) > 1e-12 * scale or abs(rho0[-1]) > 1e-12 * scale:
        raise ValueError("rho0 must vanish at both end nodes")
    rho0[0] = rho0[-1] = 0.0
    lo, hi = float(rho0.min()), float(rho0.max())
    if fx._sampled_min(flux.dsigma, lo, hi) <= 0:
        raise NonParabolicState(f"sigma' is not positive on the data range [{lo:.6g}, {hi:.6g}]")
    times, states, stats = _integrate("dirichlet", flux, rho0, grid, cfg, backend)
    return Trajectory(grid, times, states, Form.DENSITY_DIRICHLET, grid.nodes, stats, flux, cfg)


def solve_neumann_primitive(flux, u0, grid, cfg, backend=None):
    """Integrate u_t = (sigma(u_x))_x with zero boundary flux."""
    u0 = np.array(u0, dtype=float)
    if u0.shape != (grid.n_cells + 1,):
        raise ValueError(f"u0 must have {grid.n_cells + 1} node values")
    g = np.diff(u0) / grid.h
    lo, hi = float(min(g.min(), 0.0)), float(max(g.max(), 0.0))
    if fx._sampled_min(flux.dsigma, lo, hi) <= 0:
        raise NonParabolicState(f"sigma' is not positive on the gradient range [{lo:.6g}, {hi:.6g}]")
    times, states, stats = _integrate("neumann", flux, u0, grid, cfg, backend)
    return Trajectory(grid, times, states, Form.PRIMITIVE_NEUMANN, grid.nodes, stats, flux, cfg)


def discrete_gradient(traj):
    """Face gradients (u_{i+1} - u_i)/h, padded with the boundary value 0 at x = 0 and x = L."""
    if traj.form is not Form.PRIMITIVE_NEUMANN:
        raise WrongForm(f"discrete_gradient needs a primitive Neumann trajectory, got {traj.form.value}")
    g = np.diff(traj.states, axis=1) / traj.grid.h
    zeros = np.zeros((g.shape[0], 1))
    states = np.hstack([zeros, g, zeros])
    x = np.concatenate(([0.0], traj.grid.faces, [traj.grid.L]))
    return Trajectory(traj.grid, traj.times, states, Form.FACE_GRADIENT, x, traj.stats, traj.flux, traj.config)


def sup_norm_history(traj):
    """[(t, max_i |value_i|)] for every output instant."""
    sups = np.max(np.abs(traj.states), axis=1)
    return [(float(t), float(s)) for t, s in zip(traj.times, sups)]


def mass_history(traj):
    """Trapezoid-rule integral of the state at each output instant."""
    if traj.form is not Form.PRIMITIVE_NEUMANN:
        raise WrongForm("mass is tracked for primitive Neumann trajectories only")
    return np.trapezoid(traj.states, traj.x, axis=1)


def exact_heat_mode(k, L, x, t):
    """exp(-(k pi / L)^2 t) sin(k pi x / L): a Dirichlet heat-equation solution."""
    x = np.asarray(x, dtype=float)
    t = np.asarray(t, dtype=float)
    w = k * math.pi / L
    return (np.exp(-w * w * t) * np.sin(w * x))[()]


def write_trajectory_csv(traj, path):
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["t", "x", "value"])
        for t, row in zip(traj.times, traj.states):
            for x, v in zip(traj.x, row):
                out.writerow([f"{t:.17g}", f"{x:.17g}", f"{v:.17g}"])
