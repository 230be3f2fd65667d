import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from oracles import barrier_ref, barrier_residual_ref, bound_ref, heat_sup_ref, mstar_ref
from ratelab import bound as bd
from ratelab import flux as fx
from ratelab.errors import InvalidParams, NonParabolic, NoFeasiblePoint, ThresholdViolated

HEAT_EXAMPLE = bd.BoundParams(tau=0.99, lam=1.6, m=1.01, rho0_norm=1.0, L=1.0)
AS_EXAMPLE = bd.BoundParams(tau=0.5, lam=1.0, m=2.0, rho0_norm=0.5, L=1.0)


# -- params ----------------------------------------------------------------------


@pytest.mark.parametrize(
    "kw",
    [
        dict(tau=0.0),
        dict(tau=1.0),
        dict(lam=0.0),
        dict(m=1.0),
        dict(L=-1.0),
        dict(rho0_norm=-0.1),
        dict(lam=math.nan),
    ],
)
def test_params_validated(kw):
    base = dict(tau=0.5, lam=1.0, m=2.0, rho0_norm=1.0, L=1.0)
    base.update(kw)
    with pytest.raises(InvalidParams):
        bd.BoundParams(**base)


# -- compute_rate_bound ------------------------------------------------------------


def test_heat_example():
    b = bd.compute_rate_bound(fx.heat(), HEAT_EXAMPLE)
    s, gamma, C = bound_ref(1, 0, 0.99, 1.6, 1.01, 1.0, 1.0)
    assert (b.theta, b.theta_tilde, b.s) == (1.0, 0.0, 1.01)
    assert b.gamma == pytest.approx(float(gamma), rel=1e-14)
    assert b.prefactor == pytest.approx(float(C), rel=1e-13)
    # the rounded values quoted for this example carry about four digits
    assert b.gamma == pytest.approx(0.63318, abs=5e-5)
    assert b.prefactor == pytest.approx(80.810, abs=1e-3)


def test_heat_example_at_t10():
    b = bd.compute_rate_bound(fx.heat(), HEAT_EXAMPLE)
    _, gamma, C = bound_ref(1, 0, 0.99, 1.6, 1.01, 1.0, 1.0)
    expected = float(C * math.e ** (-10 * gamma))
    assert bd.evaluate_bound(b, 10.0) == pytest.approx(expected, rel=1e-12)
    assert expected == pytest.approx(0.143727206, rel=1e-8)


def test_aggregation_example():
    b = bd.compute_rate_bound(fx.anguige_schmeiser(0.5), AS_EXAMPLE)
    assert b.R == pytest.approx(1.0, abs=1e-15)
    assert b.theta == pytest.approx(1 / 3, abs=1e-14)
    assert b.theta_tilde == pytest.approx(5.0, abs=1e-14)
    assert b.s == pytest.approx(16.0, abs=1e-12)
    _, gamma, _ = bound_ref(1 / 3, 5, 0.5, 1.0, 2.0, 0.5, 1.0)
    assert b.gamma == pytest.approx(float(gamma), rel=1e-12)
    assert b.gamma == pytest.approx(0.003922259937, rel=1e-9)


@pytest.mark.parametrize("model", [fx.heat(), fx.anguige_schmeiser(1.0), fx.perona_malik(), fx.turchin(1, 2, 0.5)])
def test_zero_data_zero_prefactor(model):
    b = bd.compute_rate_bound(model, bd.BoundParams(0.5, 1.0, 2.0, 0.0, 1.0))
    assert b.prefactor == 0.0
    assert bd.evaluate_bound(b, [0.0, 1.0, 10.0]).tolist() == [0.0, 0.0, 0.0]


def test_nonparabolic_rejected():
    with pytest.raises(NonParabolic):
        bd.compute_rate_bound(fx.perona_malik(), bd.BoundParams(0.5, 1.0, 2.0, 0.5, 1.0))  # R = 1
    with pytest.raises(NonParabolic):
        bd.compute_rate_bound(fx.anguige_schmeiser(0.75), bd.BoundParams(0.5, 1.0, 2.0, 0.1, 1.0))


def test_extended_flux_skips_threshold():
    ext = fx.build_extension(fx.perona_malik(), 0.9, 0.3)
    b = bd.compute_rate_bound(ext, bd.BoundParams(0.5, 1.0, 2.0, 0.4, 1.0))
    direct = bd.compute_rate_bound(fx.perona_malik(), bd.BoundParams(0.5, 1.0, 2.0, 0.4, 1.0))
    assert b.gamma == pytest.approx(direct.gamma, rel=1e-14)


FLUXES = {
    "heat": (fx.heat(), math.inf),
    "as_weak": (fx.anguige_schmeiser(0.5), math.inf),
    "as_strong": (fx.anguige_schmeiser(0.9), fx.parabolicity_threshold(fx.anguige_schmeiser(0.9))),
    "pm": (fx.perona_malik(), 1.0),
    "turchin": (fx.turchin(1, 2, 0.5), fx.parabolicity_threshold(fx.turchin(1, 2, 0.5))),
}


def admissible(name, tau, lam, m, frac, L):
    model, thr = FLUXES[name]
    cap = 2.0 if math.isinf(thr) else thr
    rho0 = frac * cap * (m - 1) / m
    return model, bd.BoundParams(tau, lam, m, rho0, L)


params_strategy = dict(
    name=st.sampled_from(sorted(FLUXES)),
    tau=st.floats(0.01, 0.99),
    lam=st.floats(0.05, 10),
    m=st.floats(1.01, 50),
    frac=st.floats(0.01, 0.99),
    L=st.floats(0.2, 5),
)


@settings(max_examples=1000, deadline=None)
@given(**params_strategy)
def test_formula_fidelity(name, tau, lam, m, frac, L):
    model, p = admissible(name, tau, lam, m, frac, L)
    b = bd.compute_rate_bound(model, p)
    s, gamma, C = bound_ref(b.theta, b.theta_tilde, tau, lam, m, p.rho0_norm, L)
    assert b.s == pytest.approx(float(s), rel=1e-14)
    assert b.gamma == pytest.approx(float(gamma), rel=1e-14)
    assert b.prefactor == pytest.approx(float(C), rel=1e-14, abs=1e-300)
    assert b.s >= m > 1
    assert b.prefactor >= p.rho0_norm
    assert b.R == pytest.approx(p.rho0_norm * m / (m - 1), rel=1e-15)


@settings(max_examples=300, deadline=None)
@given(tau=st.floats(0.01, 0.99), lam=st.floats(0.05, 10), m=st.floats(1.001, 100), rho=st.floats(0, 10), L=st.floats(0.1, 5))
def test_heat_matches_closed_form(tau, lam, m, rho, L):
    b = bd.compute_rate_bound(fx.heat(), bd.BoundParams(tau, lam, m, rho, L))
    e = math.exp(-lam * L)
    assert b.s == m
    if L == 1.0:
        assert b.gamma == pytest.approx(bd.heat_rate(lam, m, tau), rel=1e-14)
    assert b.gamma == pytest.approx(tau * lam**2 * e / (m - e), rel=1e-14)
    assert b.prefactor == pytest.approx(rho * (m - e) / (m - 1), rel=1e-14, abs=1e-300)


@settings(max_examples=200, deadline=None)
@given(**params_strategy)
def test_gamma_increases_with_tau_when_s_is_m(name, tau, lam, m, frac, L):
    model, p = admissible(name, tau, lam, m, frac, L)
    b1 = bd.compute_rate_bound(model, p)
    tau2 = tau + 0.5 * (1 - tau)
    b2 = bd.compute_rate_bound(model, bd.BoundParams(tau2, lam, m, p.rho0_norm, L))
    assume(b1.s == m and b2.s == m)
    assert b2.gamma > b1.gamma


def test_gamma_can_fall_with_tau_when_s_is_data_driven():
    # s = rho0 theta~/((1-tau) theta) + 1 grows like 1/(1-tau), so gamma is not monotone in tau
    model = fx.anguige_schmeiser(0.5)
    gammas = [bd.compute_rate_bound(model, bd.BoundParams(t, 1.0, 2.0, 0.5, 1.0)).gamma for t in (0.5, 0.9, 0.99)]
    assert gammas[2] < gammas[1]


@settings(max_examples=200, deadline=None)
@given(lam=st.floats(0.05, 10), m=st.floats(1.01, 50), L=st.floats(0.2, 5), tau=st.floats(0.01, 0.99))
def test_gamma_decreases_in_s(lam, m, L, tau):
    # heat has s = m, so moving m moves s alone among the rate's inputs
    g1 = bd.compute_rate_bound(fx.heat(), bd.BoundParams(tau, lam, m, 1.0, L)).gamma
    g2 = bd.compute_rate_bound(fx.heat(), bd.BoundParams(tau, lam, m * 1.5, 1.0, L)).gamma
    assert g2 < g1


# -- evaluate_bound ------------------------------------------------------------------


def _fake_bound(C, gamma):
    p = bd.BoundParams(0.5, 1.0, 2.0, 1.0, 1.0)
    return bd.RateBound(2.0, 1.0, 0.0, 2.0, gamma, C, p)


def test_evaluate_bound_examples():
    b = _fake_bound(2.0, 0.5)
    assert bd.evaluate_bound(b, 0.0) == 2.0
    assert bd.evaluate_bound(b, math.log(4) / 0.5) == pytest.approx(0.5, rel=1e-15)
    t = np.linspace(0, 30, 301)
    assert np.all(np.diff(bd.evaluate_bound(b, t)) <= 0)
    with pytest.raises(ValueError):
        bd.evaluate_bound(b, -1.0)


# -- barrier -------------------------------------------------------------------------


def test_barrier_examples():
    b = bd.compute_rate_bound(fx.heat(), HEAT_EXAMPLE)
    bar = bd.Barrier.from_rate_bound(b)
    assert bd.barrier_value(bar, 0.0, 0.0) == pytest.approx(1.0, rel=1e-15)
    assert bd.barrier_value(bar, 1.0, 0.0) == pytest.approx(b.prefactor, rel=1e-14)
    assert bar.delta0 == pytest.approx(b.s - 1)
    assert bar.delta1 > bar.delta0

    bar2 = bd.Barrier(A=1.0, s=2.0, lam=1.0, gamma=0.1, L=1.0)
    v = bd.barrier_value(bar2, 0.5, 2.0)
    assert v == pytest.approx(float(barrier_ref(1, 2, 1, 0.1, 0.5, 2)), rel=1e-14)
    assert v == pytest.approx(1.1408762024, rel=1e-9)


@settings(max_examples=200, deadline=None)
@given(**params_strategy)
def test_barrier_boundary_domination(name, tau, lam, m, frac, L):
    model, p = admissible(name, tau, lam, m, frac, L)
    bar = bd.Barrier.from_rate_bound(bd.compute_rate_bound(model, p))
    x = np.linspace(0, L, 257)
    assert np.all(bd.barrier_value(bar, x, 0.0) >= p.rho0_norm * (1 - 1e-15))
    t = np.linspace(0.01, 50, 50)
    if p.rho0_norm > 0:
        assert np.all(bd.barrier_value(bar, 0.0, t) > 0)
        assert np.all(bd.barrier_value(bar, L, t) > 0)
    # pointwise barrier never exceeds the sup-norm bound
    xx, tt = np.meshgrid(x, t)
    assert np.all(bd.barrier_value(bar, xx, tt) <= bd.evaluate_bound(bar.rate_bound, tt) * (1 + 1e-14))


@pytest.mark.parametrize(
    "name,params",
    [("heat", ()), ("anguige_schmeiser", (0.5,)), ("perona_malik", ()), ("turchin", (1.0, 2.0, 0.5))],
)
def test_residual_matches_numerical_differentiation(name, params):
    model = {"heat": fx.heat, "anguige_schmeiser": fx.anguige_schmeiser, "perona_malik": fx.perona_malik, "turchin": fx.turchin}[name](*params)
    bar = bd.Barrier(A=0.05, s=3.0, lam=1.3, gamma=0.2, L=1.0)
    for x, t in ((0.1, 0.5), (0.5, 2.0), (0.9, 0.01)):
        ref = float(barrier_residual_ref(name, params, 0.05, 3.0, 1.3, 0.2, x, t))
        assert bd.barrier_residual(bar, model, x, t) == pytest.approx(ref, rel=1e-10, abs=1e-15)


def _lattice(bar, n=101):
    x = bar.L * np.arange(1, n + 1) / (n + 1)
    t = (3 / bar.gamma) * np.arange(1, n + 1) / n
    return x[None, :], t[:, None]


@settings(max_examples=100, deadline=None)
@given(**params_strategy)
def test_supersolution_on_lattice(name, tau, lam, m, frac, L):
    model, p = admissible(name, tau, lam, m, frac, L)
    assume(p.rho0_norm > 0)
    bar = bd.Barrier.from_rate_bound(bd.compute_rate_bound(model, p))
    x, t = _lattice(bar)
    assert np.max(bd.barrier_residual(bar, model, x, t)) < 0


def test_inflated_gamma_breaks_supersolution():
    b = bd.compute_rate_bound(fx.heat(), HEAT_EXAMPLE)
    bar = bd.Barrier.from_rate_bound(b).replace(gamma=10 * b.gamma)
    x, t = np.meshgrid(np.linspace(0.01, 0.99, 99), np.linspace(1e-3, 1.0, 50))
    assert np.max(bd.barrier_residual(bar, fx.heat(), x, t)) > 0


def test_zero_barrier_zero_residual():
    bar = bd.Barrier(A=0.0, s=2.0, lam=1.0, gamma=0.5, L=1.0)
    assert np.all(bd.barrier_residual(bar, fx.perona_malik(), np.linspace(0.1, 0.9, 9), 1.0) == 0)


# -- closed forms -----------------------------------------------------------------------


def test_heat_rate_examples():
    assert bd.heat_rate(1.6, 1.01) == pytest.approx(2.56 * math.exp(-1.6) / (1.01 - math.exp(-1.6)), rel=1e-15)
    assert bd.heat_rate(1.6, 1.01) == pytest.approx(0.63958, abs=5e-5)
    small = bd.heat_rate(1e-6, 2.0)
    assert 0 < small < 1e-11


def test_heat_rate_supremum_interval():
    lam, sup = heat_sup_ref()
    assert 0.64 < sup < 0.65
    lams = np.linspace(0.01, 10, 100001)
    assert np.max(bd.heat_rate(lams, 1 + 1e-12)) == pytest.approx(sup, abs=1e-8)


def test_strong_aggregation_mstar():
    assert bd.strong_aggregation_mstar(1.0, 0.2) == pytest.approx(2.5, abs=1e-12)
    m = bd.strong_aggregation_mstar(0.8, 0.1)
    thr = bd.strong_aggregation_threshold(0.8)
    assert m == pytest.approx(mstar_ref(thr, 0.1), rel=1e-12)
    assert m / (m - 1) == pytest.approx(thr / 0.1, rel=1e-12)
    assert bd.strong_aggregation_mstar(1.0, 1 / 3 - 1e-9) > 1e7
    with pytest.raises(ThresholdViolated):
        bd.strong_aggregation_mstar(1.0, 0.34)


@settings(max_examples=200, deadline=None)
@given(a=st.floats(0.76, 1.0), frac=st.floats(0.01, 0.99))
def test_strong_aggregation_mstar_matches_defining_relation(a, frac):
    thr = bd.strong_aggregation_threshold(a)
    b0 = frac * thr
    assert bd.strong_aggregation_mstar(a, b0) == pytest.approx(mstar_ref(thr, b0), rel=1e-10)


def test_pm_mstar():
    assert bd.pm_mstar(0.5) == 2.0
    assert bd.pm_mstar(0.9) == pytest.approx(10.0, rel=1e-14)
    assert 1 < bd.pm_mstar(1e-9) < 1 + 2e-9
    with pytest.raises(InvalidParams):
        bd.pm_mstar(1.0)


# -- optimiser --------------------------------------------------------------------------


def test_optimize_heat():
    res = bd.optimize_rate(fx.heat(), 1.0, 1.0)
    assert 0.63 < res.bound.gamma < 0.65
    assert res.bound.gamma >= res.grid_best
    assert res.bound.gamma >= max(r[3] for r in res.trace)
    assert res.n_feasible == len(res.trace) == bd.GRID_N**3


def test_optimize_zero_data():
    res = bd.optimize_rate(fx.perona_malik(), 0.0, 1.0)
    assert res.bound.prefactor == 0.0


def test_optimize_beats_hand_picked_point():
    res = bd.optimize_rate(fx.anguige_schmeiser(0.5), 0.5, 1.0)
    hand = bd.compute_rate_bound(fx.anguige_schmeiser(0.5), AS_EXAMPLE)
    assert res.bound.gamma >= hand.gamma
    assert res.bound.gamma >= 0.0039209


def test_optimize_respects_m_floor():
    res = bd.optimize_rate(fx.perona_malik(), 0.5, 1.0, m_lower=bd.pm_mstar(0.5))
    assert res.params.m > 2.0
    assert res.bound.R < 1.0


def test_optimize_infeasible():
    with pytest.raises(NoFeasiblePoint):
        bd.optimize_rate(fx.perona_malik(), 0.999999, 1.0)


def test_optimize_deterministic():
    a = bd.optimize_rate(fx.anguige_schmeiser(1.0), 0.2, 1.0, m_lower=2.5)
    b = bd.optimize_rate(fx.anguige_schmeiser(1.0), 0.2, 1.0, m_lower=2.5)
    assert a.params == b.params and a.bound == b.bound
