"""Hot loops of the implicit time stepper.

Two interchangeable backends implement one damped-Newton implicit step for
the Dirichlet density form and the Neumann primitive form:

* ``numba``: scalar loops compiled with ``@njit``; the flux is passed as an
  integer kind code plus a packed parameter vector (``FluxModel.packed``).
* ``numpy``: vectorised residual/Jacobian assembly on ``FluxModel`` methods
  and a plain-Python Thomas sweep.

The backend is chosen by the ``RATE_LAB_BACKEND`` environment variable
("numba" or "numpy"); numba is the default when it imports.
"""
from __future__ import annotations

import math
import os

import numpy as np

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    HAVE_NUMBA = False

__all__ = [
    "HAVE_NUMBA",
    "default_backend",
    "thomas",
    "implicit_step",
    "flux_eval",
    "STATUS_OK",
    "STATUS_DIVERGED",
    "STATUS_NONPARABOLIC",
]

STATUS_OK = 0
STATUS_DIVERGED = 1
STATUS_NONPARABOLIC = 2
MAX_HALVINGS = 30


def default_backend():
    name = os.environ.get("RATE_LAB_BACKEND", "numba" if HAVE_NUMBA else "numpy").strip().lower()
    if name not in ("numba", "numpy"):
        raise ValueError(f"RATE_LAB_BACKEND must be 'numba' or 'numpy', got {name!r}")
    if name == "numba" and not HAVE_NUMBA:
        return "numpy"
    return name


def _njit(fn):
    if HAVE_NUMBA:
        return numba.njit(cache=True, nogil=True)(fn)
    return fn


# ---------------------------------------------------------------------------
# numba backend
# ---------------------------------------------------------------------------


@_njit
def _base_eval(code, p0, p1, p2, s):
    if code == 0:
        return s, 1.0
    if code == 1:
        k0, om, mu = p0, p1, p2
        return (2 * k0 / (3 * om)) * s**3 - k0 * s * s + 0.5 * mu * s, (2 * k0 / om) * s * s - 2 * k0 * s + 0.5 * mu
    if code == 2:
        a = p0
        return a * s**3 - 2 * a * s * s + s, 3 * a * s * s - 4 * a * s + 1
    s2 = s * s
    return s / (1 + s2), (1 - s2) / ((1 + s2) * (1 + s2))


@_njit
def _blend_eval(p, off, sb, w, r):
    # mirrored flux f(r) and f'(r) for r > sb; layout: seam, end, plateau, c0..c5
    seam, end, plateau = p[off], p[off + 1], p[off + 2]
    u = (r - sb) / w
    if u > 1.0:
        return end + plateau * (r - sb - w), plateau
    c0, c1, c2, c3, c4, c5 = p[off + 3], p[off + 4], p[off + 5], p[off + 6], p[off + 7], p[off + 8]
    q = c0 + u * (c1 + u * (c2 + u * (c3 + u * (c4 + u * c5))))
    integ = u * (c0 + u * (c1 / 2 + u * (c2 / 3 + u * (c3 / 4 + u * (c4 / 5 + u * c5 / 6)))))
    return seam + w * integ, q


@_njit
def flux_eval(code, p, s):
    """(sigma(s), sigma'(s)) for a packed flux."""
    if code != 4:
        return _base_eval(code, p[0], p[1], p[2], s)
    sb, w = p[4], p[5]
    if s > sb:
        return _blend_eval(p, 6, sb, w, s)
    if s < -sb:
        f, d = _blend_eval(p, 15, sb, w, -s)
        return -f, d
    return _base_eval(int(p[0]), p[1], p[2], p[3], s)


@_njit
def _thomas_nb(lower, diag, upper, rhs):
    n = rhs.size
    cp = np.empty(n)
    dp = np.empty(n)
    cp[0] = upper[0] / diag[0]
    dp[0] = rhs[0] / diag[0]
    for i in range(1, n):
        den = diag[i] - lower[i] * cp[i - 1]
        cp[i] = upper[i] / den
        dp[i] = (rhs[i] - lower[i] * dp[i - 1]) / den
    x = np.empty(n)
    x[n - 1] = dp[n - 1]
    for i in range(n - 2, -1, -1):
        x[i] = dp[i] - cp[i] * x[i + 1]
    return x


@_njit
def _dir_residual(code, p, rho, old_term, c, w, sig, dsig, res):
    n = rho.size
    for i in range(n):
        sig[i], dsig[i] = flux_eval(code, p, rho[i])
    worst = 0.0
    for i in range(1, n - 1):
        r = rho[i] - old_term[i] - c * w * (sig[i + 1] - 2 * sig[i] + sig[i - 1])
        res[i - 1] = r
        if abs(r) > worst:
            worst = abs(r)
    return worst


@_njit
def _dirichlet_nb(code, p, rho_old, dt, h, w, tol, max_iter, lo, hi):
    n = rho_old.size
    m = n - 2
    c = dt / (h * h)
    sig = np.empty(n)
    dsig = np.empty(n)
    old_term = rho_old.copy()
    if w < 1.0:
        for i in range(n):
            sig[i], dsig[i] = flux_eval(code, p, rho_old[i])
        for i in range(1, n - 1):
            old_term[i] = rho_old[i] + c * (1 - w) * (sig[i + 1] - 2 * sig[i] + sig[i - 1])
    rho = rho_old.copy()
    trial = rho_old.copy()
    res = np.empty(m)
    res_t = np.empty(m)
    lower = np.empty(m)
    diag = np.empty(m)
    upper = np.empty(m)
    clamped = False
    norm = _dir_residual(code, p, rho, old_term, c, w, sig, dsig, res)
    for it in range(max_iter + 1):
        # at least one Newton update, so tiny per-step changes are not frozen out
        if norm <= tol and it > 0:
            return rho, it, norm, 0
        if it == max_iter:
            break
        for k in range(m):
            i = k + 1
            diag[k] = 1 + 2 * c * w * dsig[i]
            lower[k] = -c * w * dsig[i - 1]
            upper[k] = -c * w * dsig[i + 1]
            res[k] = -res[k]
        delta = _thomas_nb(lower, diag, upper, res)
        alpha = 1.0
        accepted = False
        for _ in range(MAX_HALVINGS):
            outside = False
            for k in range(m):
                v = rho[k + 1] + alpha * delta[k]
                if v < lo or v > hi:
                    outside = True
                trial[k + 1] = v
            if outside:
                if clamped:
                    return rho, it, norm, 2
                clamped = True
                for k in range(m):
                    trial[k + 1] = min(max(trial[k + 1], lo), hi)
            norm_t = _dir_residual(code, p, trial, old_term, c, w, sig, dsig, res_t)
            if norm_t < norm:
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            return rho, it, norm, 0 if norm <= tol else 1
        rho, trial = trial, rho
        res, res_t = res_t, res
        norm = norm_t
    return rho, max_iter, norm, 1


@_njit
def _neu_residual(code, p, u, old_term, dt, h, w, fx, dfx, res):
    n = u.size
    for j in range(n - 1):
        fx[j], dfx[j] = flux_eval(code, p, (u[j + 1] - u[j]) / h)
    worst = 0.0
    for i in range(n):
        right = fx[i] if i < n - 1 else 0.0
        left = fx[i - 1] if i > 0 else 0.0
        vol = h if 0 < i < n - 1 else 0.5 * h
        r = u[i] - old_term[i] - dt / vol * w * (right - left)
        res[i] = r
        if abs(r) > worst:
            worst = abs(r)
    return worst


@_njit
def _neumann_nb(code, p, u_old, dt, h, w, tol, max_iter, glim):
    n = u_old.size
    fx = np.empty(n - 1)
    dfx = np.empty(n - 1)
    old_term = u_old.copy()
    if w < 1.0:
        for j in range(n - 1):
            fx[j], dfx[j] = flux_eval(code, p, (u_old[j + 1] - u_old[j]) / h)
        for i in range(n):
            right = fx[i] if i < n - 1 else 0.0
            left = fx[i - 1] if i > 0 else 0.0
            vol = h if 0 < i < n - 1 else 0.5 * h
            old_term[i] = u_old[i] + dt / vol * (1 - w) * (right - left)
    u = u_old.copy()
    trial = u_old.copy()
    res = np.empty(n)
    res_t = np.empty(n)
    lower = np.zeros(n)
    diag = np.empty(n)
    upper = np.zeros(n)
    norm = _neu_residual(code, p, u, old_term, dt, h, w, fx, dfx, res)
    for it in range(max_iter + 1):
        # at least one Newton update, so tiny per-step changes are not frozen out
        if norm <= tol and it > 0:
            return u, it, norm, 0
        if it == max_iter:
            break
        for i in range(n):
            vol = h if 0 < i < n - 1 else 0.5 * h
            k = dt * w / (vol * h)
            dr = dfx[i] if i < n - 1 else 0.0
            dl = dfx[i - 1] if i > 0 else 0.0
            diag[i] = 1 + k * (dr + dl)
            upper[i] = -k * dr
            lower[i] = -k * dl
            res[i] = -res[i]
        delta = _thomas_nb(lower, diag, upper, res)
        alpha = 1.0
        accepted = False
        for _ in range(MAX_HALVINGS):
            for i in range(n):
                trial[i] = u[i] + alpha * delta[i]
            for j in range(n - 1):
                if abs(trial[j + 1] - trial[j]) > glim * h:
                    return u, it, norm, 2
            norm_t = _neu_residual(code, p, trial, old_term, dt, h, w, fx, dfx, res_t)
            if norm_t < norm:
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            return u, it, norm, 0 if norm <= tol else 1
        u, trial = trial, u
        res, res_t = res_t, res
        norm = norm_t
    return u, max_iter, norm, 1


# ---------------------------------------------------------------------------
# numpy backend
# ---------------------------------------------------------------------------


def _thomas_py(lower, diag, upper, rhs):
    a, b, c, d = lower.tolist(), diag.tolist(), upper.tolist(), rhs.tolist()
    n = len(d)
    cp = [0.0] * n
    dp = [0.0] * n
    cp[0] = c[0] / b[0]
    dp[0] = d[0] / b[0]
    for i in range(1, n):
        den = b[i] - a[i] * cp[i - 1]
        cp[i] = c[i] / den
        dp[i] = (d[i] - a[i] * dp[i - 1]) / den
    x = [0.0] * n
    x[-1] = dp[-1]
    for i in range(n - 2, -1, -1):
        x[i] = dp[i] - cp[i] * x[i + 1]
    return np.array(x)


def thomas(lower, diag, upper, rhs, backend=None):
    """Solve a tridiagonal system; ``lower[0]`` and ``upper[-1]`` are ignored."""
    args = [np.ascontiguousarray(v, dtype=float) for v in (lower, diag, upper, rhs)]
    if (backend or default_backend()) == "numba":
        return _thomas_nb(*args)
    return _thomas_py(*args)


def _dirichlet_np(flux, rho_old, dt, h, w, tol, max_iter, lo, hi):
    c = dt / (h * h)

    def lap(sig):
        return sig[2:] - 2 * sig[1:-1] + sig[:-2]

    old_term = rho_old[1:-1].copy()
    if w < 1.0:
        old_term += c * (1 - w) * lap(flux.sigma(rho_old))

    def residual(rho):
        return rho[1:-1] - old_term - c * w * lap(flux.sigma(rho))

    rho = rho_old.copy()
    res = residual(rho)
    norm = float(np.max(np.abs(res)))
    clamped = False
    for it in range(max_iter + 1):
        if norm <= tol and it > 0:
            return rho, it, norm, STATUS_OK
        if it == max_iter:
            break
        ds = flux.dsigma(rho)
        diag = 1 + 2 * c * w * ds[1:-1]
        lower = -c * w * ds[:-2]
        upper = -c * w * ds[2:]
        delta = _thomas_py(lower, diag, upper, -res)
        alpha = 1.0
        for _ in range(MAX_HALVINGS):
            trial = rho.copy()
            trial[1:-1] += alpha * delta
            if np.any((trial < lo) | (trial > hi)):
                if clamped:
                    return rho, it, norm, STATUS_NONPARABOLIC
                clamped = True
                np.clip(trial, lo, hi, out=trial)
            res_t = residual(trial)
            norm_t = float(np.max(np.abs(res_t)))
            if norm_t < norm:
                break
            alpha *= 0.5
        else:
            return rho, it, norm, STATUS_OK if norm <= tol else STATUS_DIVERGED
        rho, res, norm = trial, res_t, norm_t
    return rho, max_iter, norm, STATUS_DIVERGED


def _neumann_np(flux, u_old, dt, h, w, tol, max_iter, glim):
    n = u_old.size
    vol = np.full(n, h)
    vol[0] = vol[-1] = 0.5 * h

    def divergence(fx):
        padded = np.concatenate(([0.0], fx, [0.0]))
        return (padded[1:] - padded[:-1]) / vol

    old_term = u_old.copy()
    if w < 1.0:
        old_term += dt * (1 - w) * divergence(flux.sigma(np.diff(u_old) / h))

    def residual(u):
        return u - old_term - dt * w * divergence(flux.sigma(np.diff(u) / h))

    u = u_old.copy()
    res = residual(u)
    norm = float(np.max(np.abs(res)))
    for it in range(max_iter + 1):
        if norm <= tol and it > 0:
            return u, it, norm, STATUS_OK
        if it == max_iter:
            break
        d = np.concatenate(([0.0], flux.dsigma(np.diff(u) / h), [0.0]))
        k = dt * w / (vol * h)
        diag = 1 + k * (d[1:] + d[:-1])
        upper = -k * d[1:]
        lower = -k * d[:-1]
        delta = _thomas_py(lower, diag, upper, -res)
        alpha = 1.0
        for _ in range(MAX_HALVINGS):
            trial = u + alpha * delta
            if np.any(np.abs(np.diff(trial)) > glim * h):
                return u, it, norm, STATUS_NONPARABOLIC
            res_t = residual(trial)
            norm_t = float(np.max(np.abs(res_t)))
            if norm_t < norm:
                break
            alpha *= 0.5
        else:
            return u, it, norm, STATUS_OK if norm <= tol else STATUS_DIVERGED
        u, res, norm = trial, res_t, norm_t
    return u, max_iter, norm, STATUS_DIVERGED


# ---------------------------------------------------------------------------


def implicit_step(form, flux, state, dt, h, weight, tol, max_iter, guard=math.inf, backend=None):
    """One theta-weighted implicit step; returns (state, iterations, residual, status).

    ``form`` is "dirichlet" or "neumann"; ``weight`` is 1 for implicit Euler
    and 0.5 for Crank-Nicolson. ``guard`` bounds |rho| (Dirichlet) or the
    face gradients (Neumann).
    """
    state = np.ascontiguousarray(state, dtype=float)
    backend = backend or default_backend()
    if backend == "numba":
        code, p = flux.packed()
        if form == "dirichlet":
            return _dirichlet_nb(code, p, state, dt, h, weight, tol, max_iter, -guard, guard)
        return _neumann_nb(code, p, state, dt, h, weight, tol, max_iter, guard)
    if form == "dirichlet":
        return _dirichlet_np(flux, state, dt, h, weight, tol, max_iter, -guard, guard)
    return _neumann_np(flux, state, dt, h, weight, tol, max_iter, guard)
