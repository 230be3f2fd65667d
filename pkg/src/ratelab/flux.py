"""Flux functions sigma for rho_t = (sigma(rho))_xx.

Every model carries analytic first and second derivatives. Evaluation is
vectorised over numpy arrays; scalar input returns a numpy scalar.

Extended models replace a base flux outside a symmetric window [-s_bar, s_bar]
by a quintic Hermite blend of the diffusivity sigma' that settles on a
positive constant plateau, so that sigma' is bounded between two positive
constants on the whole real line.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import ExtensionError, UnsupportedModel

__all__ = [
    "Kind",
    "FluxModel",
    "heat",
    "turchin",
    "anguige_schmeiser",
    "perona_malik",
    "eval_sigma",
    "eval_sigma_prime",
    "eval_sigma_double_prime",
    "theta_on_interval",
    "theta_tilde_on_interval",
    "parabolicity_threshold",
    "build_extension",
    "auto_extension",
    "PLATEAU_FLOOR",
]

PLATEAU_FLOOR = 1e-3
SQRT2 = math.sqrt(2.0)
N_SAMPLES = 4096
GOLDEN_TOL = 1e-12
DEGENERATE_RTOL = 1e-12


class Kind(str, Enum):
    HEAT = "heat"
    TURCHIN = "turchin"
    ANGUIGE_SCHMEISER = "anguige_schmeiser"
    PERONA_MALIK = "perona_malik"
    EXTENDED = "extended"


# integer codes understood by the compiled kernels
KIND_CODES = {
    Kind.HEAT: 0,
    Kind.TURCHIN: 1,
    Kind.ANGUIGE_SCHMEISER: 2,
    Kind.PERONA_MALIK: 3,
    Kind.EXTENDED: 4,
}


@dataclass(frozen=True)
class _Blend:
    """One side of an extension, in the outward coordinate r = +-s >= s_bar.

    On r = s_bar + w*u, u in [0, 1], the diffusivity is sum(c_k u^k). Flux
    values are stored mirrored, f(r) = sign * sigma(sign * r), so that
    f(r) = sigma_seam + w * sum(c_k u^(k+1) / (k+1)) on the blend.
    """

    coeffs: tuple
    plateau: float
    sigma_seam: float
    sigma_end: float

    def q(self, u):
        c = self.coeffs
        return c[0] + u * (c[1] + u * (c[2] + u * (c[3] + u * (c[4] + u * c[5]))))

    def dq(self, u):
        c = self.coeffs
        return c[1] + u * (2 * c[2] + u * (3 * c[3] + u * (4 * c[4] + u * 5 * c[5])))

    def integral(self, u):
        c = self.coeffs
        return u * (c[0] + u * (c[1] / 2 + u * (c[2] / 3 + u * (c[3] / 4 + u * (c[4] / 5 + u * c[5] / 6)))))

    def minimum(self):
        """Exact minimum of the blend polynomial on [0, 1]."""
        c = self.coeffs
        dcoef = [5 * c[5], 4 * c[4], 3 * c[3], 2 * c[2], c[1]]
        cands = [0.0, 1.0]
        for r in np.roots(dcoef):
            if abs(r.imag) < 1e-12 and 0.0 <= r.real <= 1.0:
                cands.append(float(r.real))
        return min(float(self.q(u)) for u in cands)

    def maximum(self):
        c = self.coeffs
        dcoef = [5 * c[5], 4 * c[4], 3 * c[3], 2 * c[2], c[1]]
        cands = [0.0, 1.0]
        for r in np.roots(dcoef):
            if abs(r.imag) < 1e-12 and 0.0 <= r.real <= 1.0:
                cands.append(float(r.real))
        return max(float(self.q(u)) for u in cands)


@dataclass(frozen=True)
class FluxModel:
    """A flux function sigma with analytic sigma' and sigma''.

    ``params`` holds the model constants: (k0, omega, mu) for Turchin, (a,)
    for Anguige-Schmeiser, empty for heat and Perona-Malik. Extended models
    keep a reference to their base model plus the blend data.
    """

    kind: Kind
    params: tuple = ()
    base: "FluxModel | None" = None
    s_bar: float = 0.0
    blend_width: float = 0.0
    right: _Blend | None = None
    left: _Blend | None = None

    # -- evaluation -------------------------------------------------------
    def sigma(self, s):
        s = np.asarray(s, dtype=float)
        k = self.kind
        if k is Kind.HEAT:
            out = s.copy()
        elif k is Kind.TURCHIN:
            k0, om, mu = self.params
            out = (2 * k0 / (3 * om)) * s**3 - k0 * s**2 + 0.5 * mu * s
        elif k is Kind.ANGUIGE_SCHMEISER:
            (a,) = self.params
            out = a * s**3 - 2 * a * s**2 + s
        elif k is Kind.PERONA_MALIK:
            out = s / (1 + s**2)
        else:
            out = self._extended(s, 0)
        return out[()]

    def dsigma(self, s):
        s = np.asarray(s, dtype=float)
        k = self.kind
        if k is Kind.HEAT:
            out = np.ones_like(s)
        elif k is Kind.TURCHIN:
            k0, om, mu = self.params
            out = (2 * k0 / om) * s**2 - 2 * k0 * s + 0.5 * mu
        elif k is Kind.ANGUIGE_SCHMEISER:
            (a,) = self.params
            out = 3 * a * s**2 - 4 * a * s + 1
        elif k is Kind.PERONA_MALIK:
            s2 = s**2
            out = (1 - s2) / (1 + s2) ** 2
        else:
            out = self._extended(s, 1)
        return out[()]

    def d2sigma(self, s):
        s = np.asarray(s, dtype=float)
        k = self.kind
        if k is Kind.HEAT:
            out = np.zeros_like(s)
        elif k is Kind.TURCHIN:
            k0, om, _ = self.params
            out = (4 * k0 / om) * s - 2 * k0
        elif k is Kind.ANGUIGE_SCHMEISER:
            (a,) = self.params
            out = 6 * a * s - 4 * a
        elif k is Kind.PERONA_MALIK:
            s2 = s**2
            out = 2 * s * (s2 - 3) / (1 + s2) ** 3
        else:
            out = self._extended(s, 2)
        return out[()]

    def _d3sigma(self, s):
        # only needed to match curvature of sigma' at extension seams
        s = float(s)
        k = self.kind
        if k is Kind.HEAT:
            return 0.0
        if k is Kind.TURCHIN:
            k0, om, _ = self.params
            return 4 * k0 / om
        if k is Kind.ANGUIGE_SCHMEISER:
            return 6 * self.params[0]
        if k is Kind.PERONA_MALIK:
            s2 = s * s
            return (-6 * s2 * s2 + 36 * s2 - 6) / (1 + s2) ** 4
        raise UnsupportedModel("third derivative not available for extended models")

    def _extended(self, s, order):
        base, sb, w = self.base, self.s_bar, self.blend_width
        fn = (base.sigma, base.dsigma, base.d2sigma)[order]
        out = np.empty_like(s)
        mid = np.abs(s) <= sb
        out[mid] = fn(s[mid])
        for blend, sign in ((self.right, 1.0), (self.left, -1.0)):
            mask = (sign * s) > sb
            if not mask.any():
                continue
            r = sign * s[mask]
            u = (r - sb) / w
            inblend = u <= 1.0
            uc = np.minimum(u, 1.0)
            if order == 0:
                val = np.where(
                    inblend,
                    blend.sigma_seam + w * blend.integral(uc),
                    blend.sigma_end + blend.plateau * (r - sb - w),
                )
                out[mask] = sign * val
            elif order == 1:
                out[mask] = np.where(inblend, blend.q(uc), blend.plateau)
            else:
                val = np.where(inblend, blend.dq(uc) / w, 0.0)
                out[mask] = sign * val
        return out

    # -- metadata ---------------------------------------------------------
    @property
    def is_odd(self):
        if self.kind is Kind.EXTENDED:
            return self.base.is_odd
        return self.kind in (Kind.HEAT, Kind.PERONA_MALIK)

    @property
    def degenerate(self):
        """True when sigma' has a double root (a = 3/4, or k0 omega = mu), up to rounding."""
        if self.kind is Kind.ANGUIGE_SCHMEISER:
            return abs(self.params[0] - 0.75) <= DEGENERATE_RTOL
        if self.kind is Kind.TURCHIN:
            k0, om, mu = self.params
            return abs(k0 * om - mu) <= DEGENERATE_RTOL * mu
        return False

    def packed(self):
        """Integer kind code and flat float64 parameter vector for the kernels."""
        code = KIND_CODES[self.kind]
        if self.kind is not Kind.EXTENDED:
            p = np.zeros(3)
            p[: len(self.params)] = self.params
            return code, p
        bcode, bp = self.base.packed()
        vec = [float(bcode), *bp, self.s_bar, self.blend_width]
        for bl in (self.right, self.left):
            vec += [bl.sigma_seam, bl.sigma_end, bl.plateau, *bl.coeffs]
        return code, np.asarray(vec, dtype=float)

    def describe(self):
        if self.kind is Kind.EXTENDED:
            return f"extended({self.base.describe()}, s_bar={self.s_bar:.6g}, width={self.blend_width:.6g})"
        names = {Kind.TURCHIN: ("k0", "omega", "mu"), Kind.ANGUIGE_SCHMEISER: ("a",)}.get(self.kind, ())
        args = ", ".join(f"{n}={v:g}" for n, v in zip(names, self.params))
        return f"{self.kind.value}({args})"


def heat():
    return FluxModel(Kind.HEAT)


def turchin(k0, omega, mu):
    if not (k0 > 0 and omega > 0 and 0 < mu <= 1):
        raise ValueError("Turchin flux needs k0 > 0, omega > 0, 0 < mu <= 1")
    return FluxModel(Kind.TURCHIN, (float(k0), float(omega), float(mu)))


def anguige_schmeiser(a):
    if not 0 <= a <= 1:
        raise ValueError("adhesion constant a must lie in [0, 1]")
    return FluxModel(Kind.ANGUIGE_SCHMEISER, (float(a),))


def perona_malik():
    return FluxModel(Kind.PERONA_MALIK)


def eval_sigma(model, s):
    return model.sigma(s)


def eval_sigma_prime(model, s):
    return model.dsigma(s)


def eval_sigma_double_prime(model, s):
    return model.d2sigma(s)


# -- interval extrema ------------------------------------------------------


def _golden_min(f, a, b, tol=GOLDEN_TOL):
    invphi = (math.sqrt(5.0) - 1) / 2
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = f(c), f(d)
    while abs(b - a) > tol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
    return min(fc, fd)


def _sampled_min(f, lo, hi, n=N_SAMPLES):
    """Minimum of f on [lo, hi]: dense sampling, then golden-section refinement."""
    if hi <= lo:
        return float(f(lo))
    xs = np.linspace(lo, hi, n)
    vals = np.asarray(f(xs), dtype=float)
    k = int(np.argmin(vals))
    best = float(vals[k])
    a, b = xs[max(k - 1, 0)], xs[min(k + 1, n - 1)]
    refined = _golden_min(lambda x: float(f(x)), a, b)
    return min(best, refined, float(vals[0]), float(vals[-1]))


def _closed_extrema(model, R):
    """(min sigma', max |sigma''|) on [-R, R] by critical-point analysis, or None."""
    k = model.kind
    if k is Kind.HEAT:
        return 1.0, 0.0
    if k in (Kind.TURCHIN, Kind.ANGUIGE_SCHMEISER):
        if k is Kind.TURCHIN:
            k0, om, _ = model.params
            vertex = om / 2
        else:
            vertex = 2.0 / 3.0
        pts = [-R, R]
        if -R <= vertex <= R:
            pts.append(vertex)
        theta = min(float(model.dsigma(p)) for p in pts)
        theta_t = max(abs(float(model.d2sigma(-R))), abs(float(model.d2sigma(R))))
        return theta, theta_t
    if k is Kind.PERONA_MALIK:
        # sigma' even with critical points 0, sqrt 3; |sigma''| peaks at sqrt2 -+ 1
        pts = [0.0, R]
        if R >= math.sqrt(3.0):
            pts.append(math.sqrt(3.0))
        theta = min(float(model.dsigma(p)) for p in pts)
        pts = [R] + [c for c in (SQRT2 - 1, SQRT2 + 1) if c <= R]
        theta_t = max(abs(float(model.d2sigma(p))) for p in pts)
        return theta, theta_t
    if k is Kind.EXTENDED and R <= model.s_bar:
        return _closed_extrema(model.base, R)
    return None


def theta_on_interval(model, R, method="auto"):
    """min of sigma' over [-R, R].

    ``method`` is "auto" (closed form where available), "closed" or
    "generic" (sampling plus golden-section refinement). The raw value is
    returned even when it is not positive.
    """
    R = float(R)
    if R < 0:
        raise ValueError("R must be nonnegative")
    if method != "generic":
        res = _closed_extrema(model, R)
        if res is not None:
            return res[0]
        if method == "closed":
            raise UnsupportedModel(f"no closed form for {model.describe()} on radius {R}")
    return _sampled_min(model.dsigma, -R, R)


def theta_tilde_on_interval(model, R, method="auto"):
    """max of |sigma''| over [-R, R]."""
    R = float(R)
    if R < 0:
        raise ValueError("R must be nonnegative")
    if method != "generic":
        res = _closed_extrema(model, R)
        if res is not None:
            return res[1]
        if method == "closed":
            raise UnsupportedModel(f"no closed form for {model.describe()} on radius {R}")
    return -_sampled_min(lambda x: -np.abs(model.d2sigma(x)), -R, R)


def parabolicity_threshold(model):
    """Largest b with sigma' > 0 on (-b, b); ``math.inf`` if none bounds it.

    Degenerate models (double root of sigma') return the double-root
    location; check ``model.degenerate`` to tell them apart.
    """
    k = model.kind
    if k is Kind.EXTENDED:
        raise UnsupportedModel("extended fluxes are parabolic on the whole line")
    if k is Kind.HEAT:
        return math.inf
    if k is Kind.PERONA_MALIK:
        return 1.0
    if k is Kind.ANGUIGE_SCHMEISER:
        (a,) = model.params
        if a < 0.75:
            return math.inf
        return (2 * a - math.sqrt(a * (4 * a - 3))) / (3 * a)
    # Turchin: sigma'(s) = (2k0/om) s^2 - 2k0 s + mu/2, positive for s <= 0
    k0, om, mu = model.params
    disc = k0 * k0 - k0 * mu / om
    if disc < 0:
        return math.inf
    return (k0 - math.sqrt(disc)) * om / (2 * k0)


# -- extension -------------------------------------------------------------


def _quintic(d0, d1, d2, p, w):
    """Coefficients in u of the quintic with value/slope/curvature (d0, w d1, w^2 d2)
    at u=0 and (p, 0, 0) at u=1."""
    c0, c1, c2 = d0, w * d1, 0.5 * w * w * d2
    e0 = p - c0 - c1 - c2
    e1 = -c1 - 2 * c2
    e2 = -2 * c2
    c3 = 10 * e0 - 4 * e1 + 0.5 * e2
    c4 = -15 * e0 + 7 * e1 - e2
    c5 = 6 * e0 - 3 * e1 + 0.5 * e2
    return (c0, c1, c2, c3, c4, c5)


def _build_side(base, sign, s_bar, w):
    seam = sign * s_bar
    d0 = float(base.dsigma(seam))
    d1 = sign * float(base.d2sigma(seam))
    d2 = base._d3sigma(seam)
    sig = float(base.sigma(seam))
    # outward coordinate r: sigma(-r) mirrored, so store sign * sigma
    sig_r = sign * sig
    p0 = max(d0 / 2, PLATEAU_FLOOR)
    worst = None
    for k in range(12):
        p = p0 * 2.0**k
        coeffs = _quintic(d0, d1, d2, p, w)
        trial = _Blend(coeffs, p, sig_r, 0.0)
        lo = trial.minimum()
        if lo > 0:
            end = sig_r + w * float(trial.integral(1.0))
            return _Blend(coeffs, p, sig_r, end)
        worst = lo if worst is None else max(worst, lo)
    raise ExtensionError(
        f"no positive plateau keeps the blended diffusivity positive on "
        f"[{s_bar:.6g}, {s_bar + w:.6g}] (best minimum {worst:.3g})"
    )


def build_extension(base, s_bar, blend_width):
    """C^3 extension of ``base`` equal to it on [-s_bar, s_bar].

    Beyond each seam the diffusivity follows a quintic Hermite blend (matching
    sigma', sigma'', sigma''' of the base) over ``blend_width`` and is constant
    afterwards. Raises ExtensionError when no plateau keeps it positive.
    """
    if base.kind is Kind.EXTENDED:
        raise UnsupportedModel("cannot extend an extended model")
    s_bar, w = float(s_bar), float(blend_width)
    if w <= 0:
        raise ValueError("blend_width must be positive")
    thr = parabolicity_threshold(base)
    if not 0 < s_bar < thr:
        raise ExtensionError(f"s_bar={s_bar:.6g} must lie in (0, {thr:.6g})")
    if theta_on_interval(base, s_bar) <= 0:
        raise ExtensionError(f"base diffusivity not positive on [-{s_bar:.6g}, {s_bar:.6g}]")
    right = _build_side(base, 1.0, s_bar, w)
    left = _build_side(base, -1.0, s_bar, w)
    return FluxModel(Kind.EXTENDED, (), base, s_bar, w, right, left)


def auto_extension(base, s_bar, max_width=0.5, min_width=1e-6):
    """build_extension with the widest blend (halving from ``max_width``) that works."""
    w = max_width
    last = None
    while w >= min_width:
        try:
            return build_extension(base, s_bar, w)
        except ExtensionError as err:
            last = err
            w /= 2
    raise last


def extension_bounds(model):
    """(min, max) of sigma' over the real line for an extended model."""
    if model.kind is not Kind.EXTENDED:
        raise UnsupportedModel("only extended models have global diffusivity bounds")
    sb = model.s_bar
    lo = theta_on_interval(model.base, sb)
    hi = -_sampled_min(lambda x: -np.asarray(model.base.dsigma(x)), -sb, sb)
    for bl in (model.right, model.left):
        lo = min(lo, bl.minimum(), bl.plateau)
        hi = max(hi, bl.maximum(), bl.plateau)
    return lo, hi
