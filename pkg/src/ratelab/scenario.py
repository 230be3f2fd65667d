"""Scenario documents: flat ``key = value`` lines, ``#`` comments, dotted keys.

Example::

    name = heat_sine
    flux.kind = heat
    form = density_dirichlet
    L = 1
    initial.family = sine
    initial.amplitude = 1
    grid.n_cells = 200
    bound.mode = optimize

Every key not given takes the default shown by :func:`format_scenario`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace

import numpy as np

from . import bound as bd
from . import flux as fx
from .errors import ParseError, ValidationError
from .solver import Form, Grid, Scheme, SolverConfig

__all__ = [
    "FluxSpec",
    "InitialSpec",
    "BoundSpec",
    "VerifySpec",
    "Scenario",
    "parse_scenario",
    "format_scenario",
    "load_scenario",
    "parse_flux_spec",
    "sample_initial",
    "data_norm",
]

FLUX_PARAMS = {
    "heat": (),
    "turchin": ("k0", "omega", "mu"),
    "anguige_schmeiser": ("a",),
    "perona_malik": (),
}
FAMILIES = {
    "sine": ("amplitude", "mode"),
    "cosine": ("amplitude", "mode", "offset"),
    "bump": ("center", "width", "height"),
    "table": (),
}
FAMILY_DEFAULTS = {"amplitude": 1.0, "mode": 1.0, "offset": 0.0, "center": 0.5, "width": 0.25, "height": 1.0}
CHECKS = (
    "maximum_principle",
    "monotone_envelopes",
    "bound_domination",
    "barrier_domination",
    "supersolution",
    "decay_rate",
    "conservation",
    "gradient_envelope",
)


@dataclass(frozen=True)
class FluxSpec:
    kind: str = "heat"
    params: tuple = ()  # values in FLUX_PARAMS[kind] order
    extension: str = "auto"  # auto | none
    extension_width: float | None = None

    def model(self):
        named = dict(zip(FLUX_PARAMS[self.kind], self.params))
        if self.kind == "heat":
            return fx.heat()
        if self.kind == "turchin":
            return fx.turchin(**named)
        if self.kind == "anguige_schmeiser":
            return fx.anguige_schmeiser(**named)
        return fx.perona_malik()


@dataclass(frozen=True)
class InitialSpec:
    family: str = "sine"
    amplitude: float = 1.0
    mode: float = 1.0
    offset: float = 0.0
    center: float = 0.5
    width: float = 0.25
    height: float = 1.0
    values: tuple = ()


@dataclass(frozen=True)
class BoundSpec:
    mode: str = "optimize"  # optimize | fixed
    tau: float | None = None
    lam: float | None = None
    m: float | None = None
    m_floor: float | None = None  # None: derived from the parabolicity threshold


@dataclass(frozen=True)
class VerifySpec:
    enabled: tuple = CHECKS
    tolerance: float = 1e-8
    slack: float = 1e-8
    conservation_tol: float = 1e-8
    decay_factor: float = 0.99
    fit_window: tuple | None = None
    lattice: int = 101


@dataclass(frozen=True)
class Scenario:
    name: str
    flux: FluxSpec = field(default_factory=FluxSpec)
    form: Form = Form.DENSITY_DIRICHLET
    L: float = 1.0
    initial: InitialSpec = field(default_factory=InitialSpec)
    n_cells: int = 200
    bound: BoundSpec = field(default_factory=BoundSpec)
    solver: SolverConfig = field(default_factory=SolverConfig)
    verify: VerifySpec = field(default_factory=VerifySpec)

    @property
    def grid(self):
        return Grid(self.L, self.n_cells)


# -- lexing --------------------------------------------------------------


def _lines(text):
    seen = {}
    for no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError(f"expected 'key = value', got {raw.strip()!r}", no)
        key, value = (part.strip() for part in line.split("=", 1))
        if not key or not value:
            raise ParseError(f"empty key or value in {raw.strip()!r}", no)
        if key in seen:
            raise ParseError(f"duplicate key {key!r} (first on line {seen[key][0]})", no)
        seen[key] = (no, value)
    return seen


def _float(entries, key, default=None):
    if key not in entries:
        return default
    no, value = entries.pop(key)
    try:
        out = float(value)
    except ValueError:
        raise ParseError(f"{key} must be a number, got {value!r}", no) from None
    if not math.isfinite(out):
        raise ParseError(f"{key} must be finite", no)
    return out


def _int(entries, key, default):
    if key not in entries:
        return default
    no, value = entries.pop(key)
    try:
        return int(value)
    except ValueError:
        raise ParseError(f"{key} must be an integer, got {value!r}", no) from None


def _choice(entries, key, options, default):
    if key not in entries:
        return default
    no, value = entries.pop(key)
    if value not in options:
        raise ParseError(f"{key} must be one of {', '.join(options)}; got {value!r}", no)
    return value


def _bool(entries, key, default):
    if key not in entries:
        return default
    no, value = entries.pop(key)
    low = value.lower()
    if low in ("on", "true", "yes", "1"):
        return True
    if low in ("off", "false", "no", "0"):
        return False
    raise ParseError(f"{key} must be on/off, got {value!r}", no)


def _floats(entries, key):
    no, value = entries.pop(key)
    try:
        return no, tuple(float(v) for v in value.split(","))
    except ValueError:
        raise ParseError(f"{key} must be a comma-separated list of numbers", no) from None


# -- parse ---------------------------------------------------------------


def parse_scenario(text):
    """Parse and validate a scenario document; see the module docstring for the format."""
    e = _lines(text)
    if "name" not in e:
        raise ParseError("missing required key 'name'")
    name = e.pop("name")[1]

    kind = _choice(e, "flux.kind", tuple(FLUX_PARAMS), "heat")
    params = []
    for p in FLUX_PARAMS[kind]:
        v = _float(e, f"flux.{p}")
        if v is None:
            raise ParseError(f"flux.kind = {kind} needs flux.{p}")
        params.append(v)
    extension = _choice(e, "flux.extension", ("auto", "none"), "auto")
    ext_width = _float(e, "flux.extension_width")
    flux_spec = FluxSpec(kind, tuple(params), extension, ext_width)

    form = Form(_choice(e, "form", (Form.DENSITY_DIRICHLET.value, Form.PRIMITIVE_NEUMANN.value), "density_dirichlet"))
    L = _float(e, "L", 1.0)

    family = _choice(e, "initial.family", tuple(FAMILIES), "sine" if form is Form.DENSITY_DIRICHLET else "cosine")
    init_kw = {"family": family}
    for p in FAMILIES[family]:
        init_kw[p] = _float(e, f"initial.{p}", FAMILY_DEFAULTS[p])
    if family == "table":
        if "initial.values" not in e:
            raise ParseError("initial.family = table needs initial.values")
        init_kw["values"] = _floats(e, "initial.values")[1]
    initial = InitialSpec(**init_kw)

    n_cells = _int(e, "grid.n_cells", 200)

    bmode = _choice(e, "bound.mode", ("optimize", "fixed"), "optimize")
    tau, lam, m = _float(e, "bound.tau"), _float(e, "bound.lambda"), _float(e, "bound.m")
    if bmode == "fixed" and None in (tau, lam, m):
        raise ParseError("bound.mode = fixed needs bound.tau, bound.lambda and bound.m")
    m_floor = None
    if "bound.m_floor" in e and e["bound.m_floor"][1] == "auto":
        e.pop("bound.m_floor")
    else:
        m_floor = _float(e, "bound.m_floor")
    bound_spec = BoundSpec(bmode, tau, lam, m, m_floor)

    d = SolverConfig()
    scheme = _choice(e, "solver.scheme", tuple(s.value for s in Scheme), d.scheme.value)
    try:
        cfg = SolverConfig(
            dt_initial=_float(e, "solver.dt_initial", d.dt_initial),
            dt_min=_float(e, "solver.dt_min", d.dt_min),
            dt_max=_float(e, "solver.dt_max", d.dt_max),
            newton_tol=_float(e, "solver.newton_tol", d.newton_tol),
            newton_max_iter=_int(e, "solver.newton_max_iter", d.newton_max_iter),
            scheme=Scheme(scheme),
            t_final=_float(e, "solver.t_final", d.t_final),
            output_every=_float(e, "solver.output_every", d.output_every),
        )
    except ValueError as exc:
        raise ValidationError(f"solver settings: {exc}") from None

    v = VerifySpec()
    enabled = tuple(c for c in CHECKS if _bool(e, f"verify.{c}", True))
    window = None
    if "verify.fit_window" in e:
        no, window = _floats(e, "verify.fit_window")
        if len(window) != 2 or not window[0] < window[1]:
            raise ParseError("verify.fit_window must be 'lo, hi' with lo < hi", no)
    verify_spec = VerifySpec(
        enabled=enabled,
        tolerance=_float(e, "verify.tolerance", v.tolerance),
        slack=_float(e, "verify.slack", v.slack),
        conservation_tol=_float(e, "verify.conservation_tol", v.conservation_tol),
        decay_factor=_float(e, "verify.decay_factor", v.decay_factor),
        fit_window=window,
        lattice=_int(e, "verify.lattice", v.lattice),
    )

    if e:
        key, (no, _) = min(e.items(), key=lambda kv: kv[1][0])
        raise ParseError(f"unknown key {key!r}", no)

    try:
        grid = Grid(L, n_cells)
    except ValueError as exc:
        raise ValidationError(str(exc)) from None
    s = Scenario(name, flux_spec, form, L, initial, grid.n_cells, bound_spec, cfg, verify_spec)
    validate(s)
    return s


def load_scenario(path):
    with open(path) as fh:
        return parse_scenario(fh.read())


# -- datum ---------------------------------------------------------------


def sample_initial(s):
    """Node values of the initial datum on the scenario grid."""
    x = s.grid.nodes
    ini = s.initial
    if ini.family == "sine":
        return ini.amplitude * np.sin(ini.mode * math.pi * x / s.L)
    if ini.family == "cosine":
        return ini.offset + ini.amplitude * np.cos(ini.mode * math.pi * x / s.L)
    if ini.family == "bump":
        z = (x - ini.center) / ini.width
        out = np.zeros_like(x)
        inside = np.abs(z) < 1
        out[inside] = ini.height * np.exp(1 - 1 / (1 - z[inside] ** 2))
        return out
    return np.array(ini.values, dtype=float)


def data_norm(s, values=None):
    """Sup norm of the quantity the bound controls: the density, or the face gradient of u."""
    values = sample_initial(s) if values is None else values
    if s.form is Form.DENSITY_DIRICHLET:
        return float(np.max(np.abs(values)))
    return float(np.max(np.abs(np.diff(values)))) / s.grid.h


def _analytic_norm(s, values):
    """Norm used for admissibility: exact for the analytic families, discrete for tables."""
    ini = s.initial
    if s.form is Form.DENSITY_DIRICHLET:
        if ini.family == "sine":
            return abs(ini.amplitude) if ini.mode >= 1 else float(np.max(np.abs(values)))
        if ini.family == "bump":
            return abs(ini.height)
    elif ini.family == "cosine":
        return abs(ini.amplitude) * ini.mode * math.pi / s.L
    return data_norm(s, values)


def validate(s):
    """Check the datum against the form and the flux's admissible range."""
    ini = s.initial
    if ini.family not in ("table",) and ini.mode != int(ini.mode):
        raise ValidationError("initial.mode must be a whole number")
    if s.form is Form.DENSITY_DIRICHLET and ini.family == "cosine":
        raise ValidationError("the cosine family has nonzero end values; use sine, bump or table")
    if s.form is Form.PRIMITIVE_NEUMANN and ini.family in ("sine", "bump"):
        raise ValidationError("Neumann problems need zero end slopes; use cosine or table")
    if ini.family == "bump" and not (ini.width > 0 and ini.width <= ini.center and ini.center + ini.width <= s.L):
        raise ValidationError("bump support [center - width, center + width] must lie inside [0, L]")
    if ini.family == "table" and len(ini.values) != s.n_cells + 1:
        raise ValidationError(f"initial.values has {len(ini.values)} entries, grid needs {s.n_cells + 1}")

    values = sample_initial(s)
    scale = max(1.0, float(np.max(np.abs(values))))
    if s.form is Form.DENSITY_DIRICHLET:
        if abs(values[0]) > 1e-12 * scale or abs(values[-1]) > 1e-12 * scale:
            raise ValidationError("density data must vanish at x = 0 and x = L")
    elif ini.family == "table":
        if abs(values[1] - values[0]) > 1e-12 * scale or abs(values[-1] - values[-2]) > 1e-12 * scale:
            raise ValidationError("Neumann table data must have zero end slopes (equal first two and last two values)")

    model = s.flux.model()
    if model.degenerate:
        raise ValidationError(f"{model.describe()} degenerates (sigma' has a double root); choose other parameters")
    norm = _analytic_norm(s, values)
    thr = fx.parabolicity_threshold(model)
    if norm >= thr:
        raise ValidationError(_threshold_message(s, model, norm, thr))

    b = s.bound
    if b.mode == "fixed":
        try:
            p = bd.BoundParams(b.tau, b.lam, b.m, data_norm(s, values), s.L)
        except ValueError as exc:
            raise ValidationError(f"bound parameters: {exc}") from None
        if p.R >= thr:
            raise ValidationError(
                f"bound radius ||data|| m/(m-1) = {p.R:.6g} reaches the parabolicity threshold {thr:.6g}; increase bound.m"
            )
    if b.m_floor is not None and b.m_floor < 1:
        raise ValidationError("bound.m_floor must be at least 1")
    if s.flux.extension_width is not None and not s.flux.extension_width > 0:
        raise ValidationError("flux.extension_width must be positive")
    v = s.verify
    if min(v.tolerance, v.slack, v.conservation_tol) < 0 or v.lattice < 2:
        raise ValidationError("verification tolerances must be nonnegative and lattice >= 2")


def _threshold_message(s, model, norm, thr):
    if s.flux.kind == "perona_malik":
        return f"Perona-Malik is well posed only for ||u0'||_inf < 1 (threshold {thr:.6g}); got ||u0'||_inf = {norm:.6g}"
    if s.flux.kind == "anguige_schmeiser":
        a = model.params[0]
        return (
            f"strong aggregation threshold (2a - sqrt(a(4a-3)))/(3a) = {thr:.6g} at a = {a:g}; "
            f"data norm {norm:.6g} is not below it"
        )
    what = "||u0'||_inf" if s.form is Form.PRIMITIVE_NEUMANN else "||rho0||_inf"
    return f"{what} = {norm:.6g} is not below the parabolicity threshold {thr:.6g} of {model.describe()}"


# -- serialise -------------------------------------------------------------


def _num(v):
    if isinstance(v, int):
        return str(v)
    return repr(float(v))


def format_scenario(s):
    """Canonical text form; parse_scenario(format_scenario(s)) == s."""
    out = [f"name = {s.name}", f"flux.kind = {s.flux.kind}"]
    for p, v in zip(FLUX_PARAMS[s.flux.kind], s.flux.params):
        out.append(f"flux.{p} = {_num(v)}")
    out.append(f"flux.extension = {s.flux.extension}")
    if s.flux.extension_width is not None:
        out.append(f"flux.extension_width = {_num(s.flux.extension_width)}")
    out += [f"form = {s.form.value}", f"L = {_num(s.L)}", f"initial.family = {s.initial.family}"]
    for p in FAMILIES[s.initial.family]:
        out.append(f"initial.{p} = {_num(getattr(s.initial, p))}")
    if s.initial.family == "table":
        out.append("initial.values = " + ", ".join(_num(v) for v in s.initial.values))
    out.append(f"grid.n_cells = {s.n_cells}")
    b = s.bound
    out.append(f"bound.mode = {b.mode}")
    for key, v in (("tau", b.tau), ("lambda", b.lam), ("m", b.m)):
        if v is not None:
            out.append(f"bound.{key} = {_num(v)}")
    out.append(f"bound.m_floor = {'auto' if b.m_floor is None else _num(b.m_floor)}")
    c = s.solver
    out.append(f"solver.scheme = {c.scheme.value}")
    for f in fields(SolverConfig):
        if f.name != "scheme":
            out.append(f"solver.{f.name} = {_num(getattr(c, f.name))}")
    v = s.verify
    for check in CHECKS:
        out.append(f"verify.{check} = {'on' if check in v.enabled else 'off'}")
    for key in ("tolerance", "slack", "conservation_tol", "decay_factor"):
        out.append(f"verify.{key} = {_num(getattr(v, key))}")
    if v.fit_window is not None:
        out.append(f"verify.fit_window = {_num(v.fit_window[0])}, {_num(v.fit_window[1])}")
    out.append(f"verify.lattice = {v.lattice}")
    return "\n".join(out) + "\n"


def parse_flux_spec(text):
    """'kind' or 'kind:key=value,...', e.g. 'anguige_schmeiser:a=1'."""
    kind, _, rest = text.partition(":")
    kind = kind.strip()
    if kind not in FLUX_PARAMS:
        raise ParseError(f"unknown flux kind {kind!r}; expected one of {', '.join(FLUX_PARAMS)}")
    given = {}
    for item in filter(None, (part.strip() for part in rest.split(","))):
        key, eq, value = item.partition("=")
        if not eq:
            raise ParseError(f"flux parameter {item!r} must be key=value")
        try:
            given[key.strip()] = float(value)
        except ValueError:
            raise ParseError(f"flux parameter {key.strip()} must be a number") from None
    missing = [p for p in FLUX_PARAMS[kind] if p not in given]
    extra = [p for p in given if p not in FLUX_PARAMS[kind]]
    if missing or extra:
        raise ParseError(f"flux {kind} takes parameters ({', '.join(FLUX_PARAMS[kind]) or 'none'})")
    return FluxSpec(kind, tuple(given[p] for p in FLUX_PARAMS[kind]))


def with_solver(s, **kw):
    """Copy of ``s`` with solver settings replaced."""
    return replace(s, solver=replace(s.solver, **kw))
