"""Independent reference computations used by the tests.

Nothing here imports ratelab: formulas are re-derived with mpmath at 50
digits, extrema by brute-force dense sampling, roots by bisection.
"""
import math

import mpmath as mp
import numpy as np

mp.mp.dps = 50


def sigma_ref(kind, params, s):
    s = mp.mpf(s)
    if kind == "heat":
        return s
    if kind == "turchin":
        k0, om, mu = (mp.mpf(p) for p in params)
        return 2 * k0 / (3 * om) * s**3 - k0 * s**2 + mu / 2 * s
    if kind == "anguige_schmeiser":
        a = mp.mpf(params[0])
        return a * s**3 - 2 * a * s**2 + s
    if kind == "perona_malik":
        return s / (1 + s**2)
    raise ValueError(kind)


def dsigma_ref(kind, params, s, order=1):
    return mp.diff(lambda v: sigma_ref(kind, params, v), mp.mpf(s), order)


def dense_extrema(kind, params, R, n=200001):
    """(min sigma', max |sigma''|) on [-R, R] by sampling, with the endpoints included."""
    xs = np.linspace(-R, R, n)
    if kind == "heat":
        return 1.0, 0.0
    if kind == "turchin":
        k0, om, mu = params
        d1 = 2 * k0 / om * xs**2 - 2 * k0 * xs + mu / 2
        d2 = 4 * k0 / om * xs - 2 * k0
    elif kind == "anguige_schmeiser":
        (a,) = params
        d1 = 3 * a * xs**2 - 4 * a * xs + 1
        d2 = 6 * a * xs - 4 * a
    else:
        d1 = (1 - xs**2) / (1 + xs**2) ** 2
        d2 = 2 * xs * (xs**2 - 3) / (1 + xs**2) ** 3
    return float(d1.min()), float(np.abs(d2).max())


def bound_ref(theta, theta_tilde, tau, lam, m, rho0, L):
    """(s, gamma, C) straight from the decay-bound display, in 50-digit arithmetic."""
    theta, theta_tilde, tau, lam, m, rho0, L = (mp.mpf(v) for v in (theta, theta_tilde, tau, lam, m, rho0, L))
    first = rho0 * theta_tilde / ((1 - tau) * theta) + 1
    s = max(first, m)
    e = mp.e ** (-lam * L)
    gamma = tau * theta * lam**2 * e / (s - e)
    C = rho0 * (s - e) / (s - 1)
    return s, gamma, C


def barrier_ref(A, s, lam, gamma, x, t):
    A, s, lam, gamma, x, t = (mp.mpf(v) for v in (A, s, lam, gamma, x, t))
    return A * (s - mp.e ** (-lam * x)) / (s - 1) * mp.e ** (-gamma * t)


def barrier_residual_ref(kind, params, A, s, lam, gamma, x, t):
    """-psi_t + (sigma(psi))_xx by high-precision numerical differentiation."""
    psi = lambda xx, tt: barrier_ref(A, s, lam, gamma, xx, tt)
    psi_t = mp.diff(lambda tt: psi(x, tt), mp.mpf(t))
    flux_xx = mp.diff(lambda xx: sigma_ref(kind, params, psi(xx, t)), mp.mpf(x), 2)
    return -psi_t + flux_xx


def bisect(f, lo, hi, tol=1e-15, iters=400):
    flo = f(lo)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if (fm > 0) == (flo > 0):
            lo, flo = mid, fm
        else:
            hi = mid
        if hi - lo < tol * max(1.0, abs(mid)):
            break
    return 0.5 * (lo + hi)


def mstar_ref(threshold, b0):
    """Solve m/(m-1) = threshold/b0 for m > 1 by bisection."""
    target = threshold / b0
    return bisect(lambda m: m / (m - 1) - target, 1 + 1e-14, 1e12)


def heat_sup_ref():
    """sup over lam > 0 of lam^2 e^-lam / (1 - e^-lam), the m -> 1, tau -> 1 heat rate."""
    f = lambda lam: lam**2 / (mp.e**lam - 1)
    lam = mp.findroot(lambda v: mp.diff(f, v), 1.6)
    return float(lam), float(f(lam))


def exact_heat_sup(t):
    return math.exp(-math.pi**2 * t)
