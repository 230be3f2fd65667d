"""Explicit exponential decay bound ||rho(., t)||_inf <= C exp(-gamma t).

For free parameters 0 < tau < 1, lambda > 0, m > 1 and R = ||rho0|| m/(m-1)::

    theta  = min_{[-R, R]} sigma'          theta~ = max_{[-R, R]} |sigma''|
    s      = max(||rho0|| theta~ / ((1 - tau) theta) + 1, m)
    gamma  = tau theta lambda^2 e^{-lambda L} / (s - e^{-lambda L})
    C      = ||rho0|| (s - e^{-lambda L}) / (s - 1)

The guarantee comes from the comparison barrier
psi(x, t) = A (s - e^{-lambda x}) / (s - 1) e^{-gamma t}, evaluated here with
A = ||rho0||, together with its residual -psi_t + (sigma(psi))_xx.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from . import flux as fx
from .errors import InvalidParams, NoFeasiblePoint, NonParabolic, ThresholdViolated

__all__ = [
    "BoundParams",
    "RateBound",
    "Barrier",
    "compute_rate_bound",
    "evaluate_bound",
    "barrier_value",
    "barrier_residual",
    "heat_rate",
    "strong_aggregation_threshold",
    "strong_aggregation_mstar",
    "pm_mstar",
    "generic_mstar",
    "as_theta_closed_form",
    "pm_theta_closed_form",
    "optimize_rate",
    "OptimizeResult",
]


@dataclass(frozen=True)
class BoundParams:
    tau: float
    lam: float
    m: float
    rho0_norm: float
    L: float

    def __post_init__(self):
        for name in ("tau", "lam", "m", "rho0_norm", "L"):
            if not math.isfinite(getattr(self, name)):
                raise InvalidParams(f"{name} must be finite")
        if not 0 < self.tau < 1:
            raise InvalidParams(f"tau must lie in (0, 1), got {self.tau}")
        if not self.lam > 0:
            raise InvalidParams(f"lambda must be positive, got {self.lam}")
        if not self.m > 1:
            raise InvalidParams(f"m must exceed 1, got {self.m}")
        if not self.L > 0:
            raise InvalidParams(f"L must be positive, got {self.L}")
        if not self.rho0_norm >= 0:
            raise InvalidParams(f"rho0_norm must be nonnegative, got {self.rho0_norm}")

    @property
    def R(self):
        return self.rho0_norm * self.m / (self.m - 1)


@dataclass(frozen=True)
class RateBound:
    R: float
    theta: float
    theta_tilde: float
    s: float
    gamma: float
    prefactor: float
    params: BoundParams

    def __call__(self, t):
        return evaluate_bound(self, t)


def _s_value(rho0_norm, theta, theta_tilde, tau, m):
    if theta_tilde == 0 or rho0_norm == 0:
        first = 1.0
    else:
        first = rho0_norm * theta_tilde / ((1 - tau) * theta) + 1
    return max(first, m)


def _assemble(theta, theta_tilde, p):
    s = _s_value(p.rho0_norm, theta, theta_tilde, p.tau, p.m)
    e = math.exp(-p.lam * p.L)
    gamma = p.tau * theta * p.lam**2 * e / (s - e)
    prefactor = p.rho0_norm * (s - e) / (s - 1)
    return RateBound(p.R, theta, theta_tilde, s, gamma, prefactor, p)


def compute_rate_bound(flux, p, method="auto"):
    """RateBound for ``flux`` at parameters ``p``.

    Raises NonParabolic when sigma' is not positive on [-R, R].
    """
    if flux.kind is not fx.Kind.EXTENDED:
        if flux.degenerate:
            raise NonParabolic(f"{flux.describe()} is degenerate parabolic; no bound is provided")
        thr = fx.parabolicity_threshold(flux)
        if p.R >= thr:
            raise NonParabolic(
                f"R = {p.R:.6g} is not inside the parabolicity threshold {thr:.6g}; "
                "shrink the data, increase m or use an extended flux"
            )
    theta = fx.theta_on_interval(flux, p.R, method)
    if not theta > 0:
        raise NonParabolic(f"min sigma' on [-{p.R:.6g}, {p.R:.6g}] is {theta:.6g} <= 0")
    theta_tilde = fx.theta_tilde_on_interval(flux, p.R, method)
    return _assemble(theta, theta_tilde, p)


def evaluate_bound(b, t):
    """C exp(-gamma t); vectorised over t."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("t must be nonnegative")
    return (b.prefactor * np.exp(-b.gamma * t))[()]


# -- barrier -------------------------------------------------------------


@dataclass(frozen=True)
class Barrier:
    """psi(x, t) = A (s - e^{-lam x}) / (s - 1) e^{-gamma t} on [0, L]."""

    A: float
    s: float
    lam: float
    gamma: float
    L: float
    rate_bound: RateBound | None = None

    @classmethod
    def from_rate_bound(cls, b):
        p = b.params
        return cls(p.rho0_norm, b.s, p.lam, b.gamma, p.L, b)

    @property
    def delta0(self):
        return self.s - 1

    @property
    def delta1(self):
        return self.s - math.exp(-self.lam * self.L)

    def replace(self, **kw):
        d = dict(A=self.A, s=self.s, lam=self.lam, gamma=self.gamma, L=self.L, rate_bound=self.rate_bound)
        d.update(kw)
        return Barrier(**d)


def barrier_value(bar, x, t):
    x = np.asarray(x, dtype=float)
    t = np.asarray(t, dtype=float)
    return (bar.A * (bar.s - np.exp(-bar.lam * x)) / bar.delta0 * np.exp(-bar.gamma * t))[()]


def barrier_residual(bar, flux, x, t):
    """L psi = -psi_t + sigma'(psi) psi_xx + sigma''(psi) psi_x^2, from analytic partials."""
    x = np.asarray(x, dtype=float)
    t = np.asarray(t, dtype=float)
    k = bar.A / bar.delta0
    ex = np.exp(-bar.lam * x)
    et = np.exp(-bar.gamma * t)
    psi = k * (bar.s - ex) * et
    psi_x = k * bar.lam * ex * et
    psi_xx = -k * bar.lam**2 * ex * et
    psi_t = -bar.gamma * psi
    return (-psi_t + flux.dsigma(psi) * psi_xx + flux.d2sigma(psi) * psi_x**2)[()]


# -- closed forms ------------------------------------------------------------


def heat_rate(lam, m, tau=1.0):
    """Decay exponent of the heat equation bound on the unit interval."""
    if not 0 < tau <= 1:
        raise InvalidParams("tau must lie in (0, 1]")
    e = np.exp(-np.asarray(lam, dtype=float))
    return (tau * np.asarray(lam, dtype=float) ** 2 * e / (m - e))[()]


def strong_aggregation_threshold(a):
    if not 0.75 < a <= 1:
        raise InvalidParams("strong aggregation needs 3/4 < a <= 1")
    return (2 * a - math.sqrt(a * (4 * a - 3))) / (3 * a)


def strong_aggregation_mstar(a, b0):
    """Smallest admissible m: m*/(m*-1) equals threshold / b0."""
    thr = strong_aggregation_threshold(a)
    if not 0 < b0 < thr:
        raise ThresholdViolated(f"b0 = {b0:.6g} must lie in (0, {thr:.6g}) for a = {a:g}")
    r = math.sqrt(a * (4 * a - 3))
    return (2 * a - r) / (a * (2 - 3 * b0) - r)


def pm_mstar(b0):
    if not 0 < b0 < 1:
        raise InvalidParams(f"Perona-Malik needs 0 < ||u0'|| < 1, got {b0:.6g}")
    return 1 / (1 - b0)


def generic_mstar(threshold, b0):
    """m* with b0 m*/(m*-1) = threshold; 1 when the threshold is infinite."""
    if math.isinf(threshold) or b0 == 0:
        return 1.0
    if not b0 < threshold:
        raise ThresholdViolated(f"data norm {b0:.6g} is not below the threshold {threshold:.6g}")
    return threshold / (threshold - b0)


def as_theta_closed_form(a, R):
    """(theta, theta~) for the Anguige-Schmeiser flux with 0 <= R inside the parabolic range."""
    if R < 2 / 3:
        theta = 3 * a * (R - 2 / 3) ** 2 + 1 - 4 * a / 3
    else:
        theta = 1 - 4 * a / 3
    return theta, 2 * a * (3 * R + 2)


def pm_theta_closed_form(R):
    """(theta, theta~) for the Perona-Malik flux with 0 < R < 1."""
    r2 = R * R
    theta = (1 - r2) / (r2 + 1) ** 2
    if R < fx.SQRT2 - 1:
        theta_t = 2 * R * (3 - r2) / (r2 + 1) ** 3
    else:
        theta_t = 0.75 + 1 / fx.SQRT2
    return theta, theta_t


# -- optimisation ------------------------------------------------------------

GRID_N = 16
TAU_RANGE = (0.5, 1 - 1e-6)
LAM_RANGE = (0.05, 20.0)
DM_RANGE = (1e-6, 1e3)


@dataclass(frozen=True)
class OptimizeResult:
    params: BoundParams
    bound: RateBound
    grid_best: float
    n_feasible: int
    trace: tuple  # (tau, lam, m, gamma) for every feasible grid point


def _logit(p):
    return math.log(p / (1 - p))


def _expit(z):
    if z >= 0:
        return 1 / (1 + math.exp(-z))
    ez = math.exp(z)
    return ez / (1 + ez)


def optimize_rate(flux, rho0_norm, L, m_lower=1.0, maxiter=500):
    """Search (tau, lambda, m) for the largest gamma.

    Coarse 16^3 grid in (logit tau, log lambda, log(m - m_lower)), then
    Nelder-Mead from the best grid point, confined to the grid box. The
    result is never worse than the best grid point.
    """
    if m_lower < 1:
        raise InvalidParams("m_lower must be at least 1")
    box_lo = np.array([_logit(TAU_RANGE[0]), math.log(LAM_RANGE[0]), math.log(DM_RANGE[0])])
    box_hi = np.array([_logit(TAU_RANGE[1]), math.log(LAM_RANGE[1]), math.log(DM_RANGE[1])])

    def decode(z):
        return _expit(z[0]), math.exp(z[1]), m_lower + math.exp(z[2])

    cache = {}

    def evaluate(z):
        key = tuple(z)
        if key not in cache:
            tau, lam, m = decode(z)
            try:
                p = BoundParams(tau, lam, m, rho0_norm, L)
                cache[key] = compute_rate_bound(flux, p)
            except (NonParabolic, InvalidParams):
                cache[key] = None
        return cache[key]

    axes = [np.linspace(lo, hi, GRID_N) for lo, hi in zip(box_lo, box_hi)]
    best_z, best = None, None
    trace = []
    for z0 in axes[0]:
        for z1 in axes[1]:
            for z2 in axes[2]:
                z = np.array([z0, z1, z2])
                b = evaluate(z)
                if b is None:
                    continue
                p = b.params
                trace.append((p.tau, p.lam, p.m, b.gamma))
                if best is None or b.gamma > best.gamma:
                    best_z, best = z, b
    if best is None:
        raise NoFeasiblePoint(f"no feasible (tau, lambda, m) for {flux.describe()} with data norm {rho0_norm:g}")
    grid_best = best.gamma

    def objective(z):
        if np.any(z < box_lo) or np.any(z > box_hi):
            return math.inf
        b = evaluate(z)
        return math.inf if b is None else -b.gamma

    # default simplex steps outward past the box when the grid optimum sits on it
    centre = 0.5 * (box_lo + box_hi)
    simplex = [best_z]
    for i in range(3):
        v = best_z.copy()
        v[i] += 0.05 * (box_hi[i] - box_lo[i]) * (1.0 if best_z[i] <= centre[i] else -1.0)
        simplex.append(v)
    res = minimize(
        objective,
        best_z,
        method="Nelder-Mead",
        options={
            "maxiter": maxiter,
            "xatol": 1e-10,
            "fatol": math.inf,
            "initial_simplex": np.array(simplex),
        },
    )
    if math.isfinite(res.fun) and -res.fun > best.gamma:
        best = evaluate(res.x)
    return OptimizeResult(best.params, best, grid_best, len(trace), tuple(trace))
