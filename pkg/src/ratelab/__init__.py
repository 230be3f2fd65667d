"""Exponential decay-rate bounds for rho_t = (sigma(rho))_xx on a bounded interval.

Modules: ``flux`` (flux models and diffusivity extrema), ``bound`` (rate
bound, barrier, closed forms, optimiser), ``solver`` (implicit finite
differences), ``verify`` (property checks) and ``cli`` (scenario runner).
"""
from . import bound, flux, kernels, solver, verify
from .bound import (
    Barrier,
    BoundParams,
    RateBound,
    barrier_residual,
    barrier_value,
    compute_rate_bound,
    evaluate_bound,
    optimize_rate,
)
from .errors import *  # noqa: F401,F403
from .flux import FluxModel, Kind, anguige_schmeiser, heat, parabolicity_threshold, perona_malik, turchin
from .scenario import Scenario, format_scenario, load_scenario, parse_scenario
from .solver import Form, Grid, Scheme, SolverConfig, Trajectory, solve_dirichlet, solve_neumann_primitive

__version__ = "0.1.0"
