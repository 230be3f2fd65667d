import numpy as np
import pytest
from scipy.linalg import solve_banded

from ratelab import flux as fx
from ratelab import kernels

pytest.importorskip("numba")

FLUXES = [
    fx.heat(),
    fx.turchin(1.0, 2.0, 0.5),
    fx.anguige_schmeiser(0.5),
    fx.anguige_schmeiser(1.0),
    fx.perona_malik(),
    fx.auto_extension(fx.perona_malik(), 0.8),
    fx.auto_extension(fx.anguige_schmeiser(1.0), 0.32),
]


def test_backend_selected_by_environment(monkeypatch):
    monkeypatch.setenv("RATE_LAB_BACKEND", "numpy")
    assert kernels.default_backend() == "numpy"
    monkeypatch.setenv("RATE_LAB_BACKEND", "NUMBA")
    assert kernels.default_backend() == "numba"
    monkeypatch.delenv("RATE_LAB_BACKEND")
    assert kernels.default_backend() == "numba"
    monkeypatch.setenv("RATE_LAB_BACKEND", "cuda")
    with pytest.raises(ValueError):
        kernels.default_backend()


def test_thomas_against_banded_solver(backend):
    rng = np.random.default_rng(3)
    n = 300
    lower, upper = rng.uniform(-1, 0, n), rng.uniform(-1, 0, n)
    diag = 2.5 + rng.uniform(0, 1, n)
    rhs = rng.normal(size=n)
    ab = np.zeros((3, n))
    ab[0, 1:] = upper[:-1]
    ab[1] = diag
    ab[2, :-1] = lower[1:]
    ref = solve_banded((1, 1), ab, rhs)
    got = kernels.thomas(lower, diag, upper, rhs, backend=backend)
    assert np.allclose(got, ref, rtol=1e-13, atol=1e-14)


@pytest.mark.parametrize("model", FLUXES, ids=lambda m: m.describe())
def test_compiled_flux_matches_model(model):
    code, p = model.packed()
    for s in np.linspace(-3, 3, 241):
        sig, dsig = kernels.flux_eval(code, p, s)
        assert sig == pytest.approx(float(model.sigma(s)), rel=1e-14, abs=1e-15)
        assert dsig == pytest.approx(float(model.dsigma(s)), rel=1e-14, abs=1e-15)


@pytest.mark.parametrize("model", FLUXES, ids=lambda m: m.describe())
@pytest.mark.parametrize("weight", [1.0, 0.5])
def test_backends_agree_dirichlet(model, weight):
    x = np.linspace(0, 1, 101)
    rho = 0.3 * np.sin(np.pi * x) * (1 + 0.2 * np.cos(5 * x))
    rho[0] = rho[-1] = 0
    out = {}
    for b in ("numpy", "numba"):
        out[b] = kernels.implicit_step("dirichlet", model, rho, 1e-3, 0.01, weight, 1e-12, 30, backend=b)
    (s1, i1, r1, st1), (s2, i2, r2, st2) = out["numpy"], out["numba"]
    assert st1 == st2 == kernels.STATUS_OK
    assert i1 == i2
    assert np.max(np.abs(s1 - s2)) <= 1e-13
    assert s1[0] == s1[-1] == 0.0


@pytest.mark.parametrize("model", FLUXES, ids=lambda m: m.describe())
@pytest.mark.parametrize("weight", [1.0, 0.5])
def test_backends_agree_neumann(model, weight):
    x = np.linspace(0, 1, 101)
    u = 0.5 + 0.04 * np.cos(np.pi * x) + 0.01 * np.cos(3 * np.pi * x)
    out = {}
    for b in ("numpy", "numba"):
        out[b] = kernels.implicit_step("neumann", model, u, 1e-3, 0.01, weight, 1e-12, 30, backend=b)
    (s1, i1, _, st1), (s2, i2, _, st2) = out["numpy"], out["numba"]
    assert st1 == st2 == kernels.STATUS_OK
    assert i1 == i2
    assert np.max(np.abs(s1 - s2)) <= 1e-13


def test_step_always_updates_once(backend):
    # a state already within tolerance still gets one Newton update
    x = np.linspace(0, 1, 51)
    u = 0.5 + 1e-9 * np.cos(np.pi * x)
    new, iters, _, status = kernels.implicit_step("neumann", fx.perona_malik(), u, 0.1, 0.02, 1.0, 1e-10, 30, backend=backend)
    assert status == kernels.STATUS_OK and iters >= 1
    assert np.ptp(new) < np.ptp(u)


def test_guard_reports_nonparabolic(backend):
    x = np.linspace(0, 1, 51)
    u = 0.95 / np.pi * np.cos(np.pi * x)
    # the guard sits below the data's own slope, so every trial step trips it
    _, _, _, status = kernels.implicit_step("neumann", fx.perona_malik(), u, 1e-3, 0.02, 1.0, 1e-12, 30, guard=0.5, backend=backend)
    assert status == kernels.STATUS_NONPARABOLIC


def test_unreachable_tolerance_diverges(backend):
    x = np.linspace(0, 1, 51)
    rho = 0.5 * np.sin(np.pi * x)
    _, _, _, status = kernels.implicit_step("dirichlet", fx.anguige_schmeiser(0.5), rho, 1e-2, 0.02, 1.0, 1e-300, 3, backend=backend)
    assert status == kernels.STATUS_DIVERGED
