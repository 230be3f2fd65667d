"""Property checks on computed trajectories.

Each ``check_*`` function is pure and returns a :class:`CheckRecord`; a
:class:`VerificationReport` collects them for one scenario.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .bound import Barrier, RateBound, barrier_residual, barrier_value, evaluate_bound
from .errors import DegenerateData, MismatchedScenario, WrongForm
from .solver import Form, discrete_gradient, mass_history, sup_norm_history

__all__ = [
    "CheckRecord",
    "VerificationReport",
    "check_maximum_principle",
    "check_monotone_envelopes",
    "check_bound_domination",
    "check_barrier_domination",
    "check_supersolution",
    "check_conservation",
    "check_gradient_envelope",
    "check_decay_rate",
    "fit_decay_rate",
    "FIT_FLOOR",
]

FIT_FLOOR = 1e-13


@dataclass(frozen=True)
class CheckRecord:
    name: str
    passed: bool
    margin: float
    tolerance: float
    x: float | None = None
    t: float | None = None
    detail: str = ""

    def __post_init__(self):
        object.__setattr__(self, "margin", float(self.margin) + 0.0)  # no "-0" in reports


@dataclass
class VerificationReport:
    scenario: str
    bound: RateBound | None = None
    checks: list = field(default_factory=list)
    notes: list = field(default_factory=list)

    def add(self, record):
        self.checks.append(record)
        return record

    @property
    def passed(self):
        return all(c.passed for c in self.checks)

    def to_text(self):
        lines = [f"scenario: {self.scenario}"]
        if self.bound is not None:
            b, p = self.bound, self.bound.params
            lines.append(
                f"bound: gamma={b.gamma:.6g} C={b.prefactor:.6g} theta={b.theta:.6g} "
                f"theta~={b.theta_tilde:.6g} s={b.s:.6g} (tau={p.tau:.6g}, lambda={p.lam:.6g}, m={p.m:.6g})"
            )
        lines.extend(self.notes)
        width = max([len(c.name) for c in self.checks] + [5])
        lines.append(f"{'check':<{width}}  result  {'margin':>13}  {'tolerance':>10}  where")
        for c in self.checks:
            where = " ".join(f"{k}={v:.6g}" for k, v in (("x", c.x), ("t", c.t)) if v is not None)
            lines.append(
                f"{c.name:<{width}}  {'PASS' if c.passed else 'FAIL':<6}  {c.margin:>13.6g}  {c.tolerance:>10.3g}  {where}"
                + (f"  {c.detail}" if c.detail else "")
            )
        lines.append("overall: " + ("PASS" if self.passed else "FAIL"))
        return "\n".join(lines)

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            out = csv.writer(fh)
            out.writerow(["check", "pass", "margin", "tolerance", "x", "t"])
            for c in self.checks:
                out.writerow([c.name, int(c.passed), f"{c.margin:.17g}", f"{c.tolerance:.17g}", _fmt(c.x), _fmt(c.t)])


def _fmt(v):
    return "" if v is None else f"{v:.17g}"


def _where(traj, flat_index):
    k, i = np.unravel_index(flat_index, traj.states.shape)
    return float(traj.x[i]), float(traj.times[k])


def check_maximum_principle(traj, tol=1e-8):
    """Every value stays within [min initial - tol, max initial + tol]."""
    lo, hi = float(traj.initial.min()), float(traj.initial.max())
    excursion = np.maximum(traj.states - hi, lo - traj.states)
    k = int(np.argmax(excursion))
    worst = float(excursion.flat[k])
    x, t = _where(traj, k) if worst > tol else (None, None)
    return CheckRecord("maximum_principle", worst <= tol, worst, tol, x, t)


def check_monotone_envelopes(traj, tol=1e-8):
    """Per-instant max is nonincreasing and min nondecreasing."""
    if len(traj.times) < 2:
        raise DegenerateData("need at least two output instants")
    rise = np.diff(traj.states.max(axis=1))
    fall = -np.diff(traj.states.min(axis=1))
    worst_steps = np.maximum(rise, fall)
    k = int(np.argmax(worst_steps))
    worst = float(worst_steps[k])
    t = float(traj.times[k + 1]) if worst > tol else None
    return CheckRecord("monotone_envelopes", worst <= tol, worst, tol, None, t)


def _check_norm(traj, rho0_norm):
    measured = float(np.max(np.abs(traj.initial)))
    if abs(measured - rho0_norm) > 1e-12 * max(1.0, measured):
        raise MismatchedScenario(
            f"bound built for data norm {rho0_norm:.17g} but trajectory starts at {measured:.17g}"
        )


def _density_like(traj):
    if traj.form is Form.PRIMITIVE_NEUMANN:
        return discrete_gradient(traj)
    return traj


def check_bound_domination(traj, b, slack=1e-8):
    """sup-norm at each instant <= C exp(-gamma t) + slack."""
    traj = _density_like(traj)
    _check_norm(traj, b.params.rho0_norm)
    hist = np.array(sup_norm_history(traj))
    gap = evaluate_bound(b, hist[:, 0]) - hist[:, 1]
    gap = np.atleast_1d(gap)
    k = int(np.argmin(gap))
    margin = float(gap[k])
    ok = bool(np.all(gap >= -slack))
    return CheckRecord("bound_domination", ok, margin, slack, None, float(hist[k, 0]))


def check_barrier_domination(traj, bar, slack=1e-8):
    """|value(x_i, t_k)| <= psi(x_i, t_k) + slack at every node and instant."""
    traj = _density_like(traj)
    if bar.rate_bound is not None:
        _check_norm(traj, bar.rate_bound.params.rho0_norm)
    psi = barrier_value(bar, traj.x[None, :], traj.times[:, None])
    gap = psi - np.abs(traj.states)
    k = int(np.argmin(gap))
    margin = float(gap.flat[k])
    x, t = _where(traj, k)
    return CheckRecord("barrier_domination", margin >= -slack, margin, slack, x, t)


def check_supersolution(bar, flux, n=101, t_max=None):
    """Sample the barrier residual on an n x n lattice of (0, L) x (0, t_max]; all must be < 0.

    ``t_max`` defaults to 3 / gamma.
    """
    if t_max is None:
        t_max = 3.0 / bar.gamma
    xs = bar.L * np.arange(1, n + 1) / (n + 1)
    ts = t_max * np.arange(1, n + 1) / n
    res = barrier_residual(bar, flux, xs[None, :], ts[:, None])
    k = int(np.argmax(res))
    worst = float(res.flat[k])
    kt, kx = np.unravel_index(k, res.shape)
    return CheckRecord("supersolution", worst < 0, worst, 0.0, float(xs[kx]), float(ts[kt]))


def fit_decay_rate(history, window=None):
    """Least-squares fit of log(sup-norm) against t.

    Returns (gamma_emp, prefactor_emp, r_squared). ``window`` defaults to the
    middle 80% of the time span; values below FIT_FLOOR are dropped.
    """
    hist = np.asarray(history, dtype=float)
    t, y = hist[:, 0], hist[:, 1]
    if window is None:
        window = (0.1 * t[-1], 0.9 * t[-1])
    sel = (t >= window[0] - 1e-12) & (t <= window[1] + 1e-12)
    if np.any(y[sel] <= 0):
        raise DegenerateData("sup-norm vanishes inside the fit window")
    sel &= y >= FIT_FLOOR
    if sel.sum() < 5:
        raise DegenerateData(f"only {int(sel.sum())} usable instants in window {window}")
    t, logy = t[sel], np.log(y[sel])
    slope, intercept = np.polyfit(t, logy, 1)
    resid = logy - (slope * t + intercept)
    ss_tot = float(np.sum((logy - logy.mean()) ** 2))
    ss_res = float(np.sum(resid**2))
    r2 = 1.0 if ss_tot == 0 else 1.0 - ss_res / ss_tot
    return float(-slope), float(math.exp(intercept)), r2


def check_decay_rate(traj, b, window=None, factor=0.99):
    """Measured exponential rate is at least ``factor`` times the proven one."""
    gamma_emp, _, r2 = fit_decay_rate(sup_norm_history(_density_like(traj)), window)
    margin = gamma_emp - factor * b.gamma
    return CheckRecord(
        "decay_rate", margin >= 0, margin, 0.0, detail=f"gamma_emp={gamma_emp:.6g} r2={r2:.6f} bound={b.gamma:.6g}"
    )


def check_conservation(traj, tol=1e-8):
    """Relative drift of the trapezoid mass stays within tol."""
    if traj.form is not Form.PRIMITIVE_NEUMANN:
        raise WrongForm("conservation applies to primitive Neumann trajectories")
    mass = mass_history(traj)
    scale = abs(mass[0])
    if scale == 0:
        scale = float(np.trapezoid(np.abs(traj.initial), traj.x)) or 1.0
    drift = np.abs(mass - mass[0]) / scale
    k = int(np.argmax(drift))
    worst = float(drift[k])
    return CheckRecord("conservation", worst <= tol, worst, tol, None, float(traj.times[k]))


def check_gradient_envelope(traj, tol=1e-8):
    """Face-gradient max nonincreasing, min nondecreasing, and min <= 0 <= max."""
    if traj.form is not Form.PRIMITIVE_NEUMANN:
        raise WrongForm("gradient envelope applies to primitive Neumann trajectories")
    g = discrete_gradient(traj).states
    gmax, gmin = g.max(axis=1), g.min(axis=1)
    viol = np.concatenate([np.diff(gmax), -np.diff(gmin)])
    sign_viol = np.concatenate([gmin, -gmax])
    worst = float(max(viol.max(initial=-math.inf), sign_viol.max()))
    return CheckRecord("gradient_envelope", worst <= tol, worst, tol)
