import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad, solve_ivp
from scipy.optimize import brentq

from insidertc import fbode as fb
from insidertc.errors import IntegrationError, ParameterError, SingularityError
from insidertc.fbode import TimeGrid
from insidertc.params import MarketParams

from conftest import BACKENDS, FIG3, RISK_NEUTRAL

# (A=1, c=0.2, sigma=1, x1=0.5, k=1), mpmath at 40 digits
RHO_REF = 0.045576962185713526


def full_fbode_oracle(p, rtol=1e-12):
    """Shoot on x2(0) with an adaptive integrator of the two-dimensional system."""
    s2 = p.sigma ** 2

    def rhs(t, y):
        den = p.c * s2 + y[1]
        return [-s2 * y[0] ** 2 / (4 * den ** 2), -s2 * y[0] * (den - 2 * p.A * y[1] ** 2) / (4 * den ** 2)]

    def end(x20):
        sol = solve_ivp(rhs, (0, p.T), [p.Sigma0v, x20], method="DOP853", rtol=rtol, atol=1e-14)
        return sol.y[1, -1]

    hi = p.Sigma0v
    while end(hi) <= 0:
        hi *= 2
    lo = hi / 2
    while end(lo) > 0:
        lo /= 2
    x20 = brentq(end, lo, hi, xtol=1e-15, rtol=1e-14)
    sol = solve_ivp(rhs, (0, p.T), [p.Sigma0v, x20], method="DOP853", rtol=rtol, atol=1e-14,
                    dense_output=True)
    return x20, sol


# -- grid and right-hand side ------------------------------------------------

def test_grid():
    g = TimeGrid(2.0, 4)
    assert g.dt == 0.5
    assert list(g.nodes) == [0.0, 0.5, 1.0, 1.5, 2.0]
    assert g.refined(3).n_steps == 12
    for bad in ({"T": 0.0}, {"T": math.nan}, {"n_steps": 0}, {"n_steps": 2.5}, {"n_steps": True}):
        with pytest.raises(ParameterError):
            TimeGrid(**{"T": 1.0, "n_steps": 10, **bad})


def test_rhs_at_terminal_state():
    p = MarketParams(A=0.7, c=0.3, sigma=1.5, Sigma0v=2.0)
    F1, F2 = fb.fbode_rhs((2.0, 0.0), p)
    assert F1 == pytest.approx(-1.5 ** 2 * 4.0 / (4 * 0.09 * 1.5 ** 4), rel=1e-15)
    assert F2 == pytest.approx(-2.0 / (4 * 0.3), rel=1e-15)


def test_rhs_vanishes_with_variance():
    assert fb.fbode_rhs((0.0, 0.3), FIG3) == (0.0, 0.0)


def test_rhs_hand_values():
    F1, F2 = fb.fbode_rhs((0.5, 0.1), FIG3)
    assert F1 == pytest.approx(-0.25 / 0.36, rel=1e-14)
    assert F2 == pytest.approx(-0.5 * 0.28 / 0.36, rel=1e-14)


def test_rhs_singularity():
    with pytest.raises(SingularityError):
        fb.fbode_rhs((0.5, 0.0), FIG3.replace(c=0.0))


# -- invariant curve ---------------------------------------------------------

def test_rho_zero_on_terminal_relation():
    gamma, gm1 = fb.gamma_parts(FIG3)
    x1 = 0.37
    k = (gamma + 1) / gm1 * x1 ** gamma
    assert abs(fb.rho_manifold(x1, k, FIG3)) < 1e-15


def test_rho_small_k_limit():
    gamma, _ = fb.gamma_parts(FIG3)
    assert fb.rho_manifold(0.5, 1e-300, FIG3) == pytest.approx((gamma + 1) / (4 * FIG3.A), rel=1e-14)


def test_rho_reference_value():
    assert fb.rho_manifold(0.5, 1.0, FIG3) == pytest.approx(RHO_REF, rel=1e-14)


@pytest.mark.parametrize("x1,k", [(0.5, 1.0), (0.2, 0.3), (1.5, 4.0)])
def test_rho_solves_its_ode(x1, k):
    h = 1e-5 * x1
    d = (fb.rho_manifold(x1 + h, k, FIG3) - fb.rho_manifold(x1 - h, k, FIG3)) / (2 * h)
    rho = fb.rho_manifold(x1, k, FIG3)
    want = FIG3.c * FIG3.sigma ** 2 / x1 + rho / x1 - 2 * FIG3.A * rho ** 2 / x1
    assert d == pytest.approx(want, rel=1e-8)


def test_rho_needs_risk_aversion():
    with pytest.raises(ParameterError):
        fb.rho_manifold(0.5, 1.0, FIG3.replace(A=0.0))


# -- reduced ODE and shooting -----------------------------------------------

def test_short_horizon_keeps_prior_variance():
    p = FIG3.replace(T=1e-12)
    x1 = fb.integrate_x1(0.3, p, TimeGrid(1e-12, 1))
    assert x1[0] == p.Sigma0v and x1[-1] == pytest.approx(p.Sigma0v, rel=1e-10)


def test_rk4_order(fig3_profiles):
    k = fig3_profiles.k
    ends = [fb.integrate_x1(k, FIG3, TimeGrid(1.0, n))[-1] for n in (10, 20, 40)]
    ratio = (ends[0] - ends[1]) / (ends[1] - ends[2])
    assert 12 <= ratio <= 20


def test_x1_profile_shape(fig3_profiles):
    x1 = fb.integrate_x1(fig3_profiles.k, FIG3, fig3_profiles.grid)
    assert np.all(np.diff(x1) < 0)
    assert 0 < x1[-1] < FIG3.Sigma0v


def test_integration_failure_reported():
    with pytest.raises(IntegrationError, match="node 1"):
        fb.integrate_x1(1.0, FIG3.replace(A=1e200, Sigma0v=1.0), TimeGrid(1.0, 2))


def test_bracket_signs_and_residual():
    grid = TimeGrid(1.0, 2000)
    shot = fb.shoot_k(FIG3, grid)
    gamma, gm1 = fb.gamma_parts(FIG3)
    kl, kr = shot.bracket_scaled

    def g(kt):
        xT = fb._integrate_scaled(kt, FIG3, grid)[-1] / FIG3.Sigma0v
        return (gamma + 1) * xT ** gamma - gm1 * kt

    assert g(kl) > 0 > g(kr)
    assert kl <= shot.k_scaled <= kr
    assert shot.k > 0 and shot.relative_residual < 1e-10
    assert shot.k == pytest.approx(shot.k_scaled * FIG3.Sigma0v ** gamma, rel=1e-15)


def test_shooting_converged_in_grid():
    a = fb.shoot_k(FIG3, TimeGrid(1.0, 2000))
    b = fb.shoot_k(FIG3, TimeGrid(1.0, 4000))
    assert b.k == pytest.approx(a.k, rel=1e-6)


def test_shooting_tolerance_nesting():
    grid = TimeGrid(1.0, 500)
    loose = fb.shoot_k(FIG3, grid, tol=1e-8)
    tight = fb.shoot_k(FIG3, grid, tol=1e-12)
    assert loose.relative_residual <= 1e-8 and tight.relative_residual <= 1e-12
    assert tight.iterations >= loose.iterations
    assert tight.k == pytest.approx(loose.k, rel=1e-7)


def test_shooting_matches_adaptive_oracle(fig3_profiles):
    x20, sol = full_fbode_oracle(FIG3)
    assert fig3_profiles.x2[0] == pytest.approx(x20, rel=1e-8)
    t = fig3_profiles.t
    np.testing.assert_allclose(fig3_profiles.x1, sol.sol(t)[0], rtol=1e-8)
    np.testing.assert_allclose(fig3_profiles.x2, sol.sol(t)[1], rtol=1e-7, atol=1e-10)


# -- equilibrium profiles ----------------------------------------------------

def test_fig3_shape(fig3_profiles):
    pr = fig3_profiles
    assert np.all(np.diff(pr.beta) > 0) and pr.beta[-1] == pytest.approx(2.5, abs=1e-6)
    assert np.all(np.diff(pr.lam) < 0)
    assert pr.Sigma[-1] > 0
    assert np.all(pr.beta[:-1] < 2.5)
    assert fb.check_profiles(pr, FIG3) == []


def test_rules_and_filter_identity(fig3_profiles):
    pr, s2, c = fig3_profiles, FIG3.sigma ** 2, FIG3.c
    np.testing.assert_allclose(pr.beta, s2 / (2 * (c * s2 + pr.x2)), rtol=1e-15)
    np.testing.assert_allclose(pr.lam, pr.x1 / (2 * (c * s2 + pr.x2)), rtol=1e-15)
    np.testing.assert_allclose(pr.lam * s2, pr.beta * pr.x1, rtol=1e-14)
    np.testing.assert_allclose(pr.h, pr.x2 / pr.x1, rtol=1e-15)


def test_profiles_lie_on_the_curve(fig3_profiles):
    pr = fig3_profiles
    np.testing.assert_allclose(pr.x2, fb.rho_manifold(pr.x1, pr.k, FIG3), rtol=0, atol=1e-12)


def test_variance_decays_at_the_filter_rate(fig3_profiles):
    pr = fig3_profiles
    dx1 = (pr.x1[2:] - pr.x1[:-2]) / (2 * pr.grid.dt)
    assert np.max(np.abs(dx1 + FIG3.sigma ** 2 * pr.lam[1:-1] ** 2)) < 1e-6


def test_fbode_residual_second_order():
    r1 = fb.fbode_residual(fb.solve_equilibrium(FIG3, TimeGrid(1.0, 500)), FIG3)
    r2 = fb.fbode_residual(fb.solve_equilibrium(FIG3, TimeGrid(1.0, 1000)), FIG3)
    assert r1[0] / r2[0] >= 3 and r1[1] / r2[1] >= 3


def test_backends_agree():
    if len(BACKENDS) < 2:
        pytest.skip("single backend")
    a = fb.solve_equilibrium(FIG3, backend="cython")
    b = fb.solve_equilibrium(FIG3, backend="python")
    np.testing.assert_allclose(a.beta, b.beta, rtol=1e-12)
    np.testing.assert_allclose(a.lam, b.lam, rtol=1e-12)


def test_risk_neutral_closed_form():
    pr = fb.solve_equilibrium(RISK_NEUTRAL, TimeGrid(1.0, 2000))
    assert np.max(np.abs(pr.lam - (math.sqrt(1.25) - 0.5))) < 1e-15
    assert pr.beta[-1] == 1.0
    assert pr.x1[0] == pytest.approx(1.0, abs=1e-15)
    assert fb.check_profiles(pr, RISK_NEUTRAL) == []


@pytest.mark.parametrize("c", [0.05, 0.5, 3.0])
def test_risk_neutral_prior_variance_exact(c):
    p = RISK_NEUTRAL.replace(c=c, Sigma0v=2.3, sigma=0.7, T=1.9)
    pr = fb.solve_equilibrium(p, TimeGrid(p.T, 100))
    assert pr.x1[0] == pytest.approx(2.3, rel=1e-14)


def test_risk_neutral_solves_the_fbode():
    grid = TimeGrid(1.0, 4000)
    pr = fb.solve_equilibrium(RISK_NEUTRAL, grid)
    x = np.array([pr.x1[0], pr.x2[0]])
    out = [x.copy()]
    dt = grid.dt
    f = lambda y: np.array(fb.fbode_rhs(y, RISK_NEUTRAL))
    for _ in range(grid.n_steps):
        k1 = f(x)
        k2 = f(x + 0.5 * dt * k1)
        k3 = f(x + 0.5 * dt * k2)
        k4 = f(x + dt * k3)
        x = x + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        out.append(x.copy())
    out = np.array(out)
    assert np.max(np.abs(out[:, 0] - pr.x1)) < 1e-8
    assert np.max(np.abs(out[:, 1] - pr.x2)) < 1e-8


def test_zero_cost_routes():
    with pytest.raises(ParameterError):
        fb.solve_equilibrium(FIG3.replace(c=0.0))
    pr = fb.solve_equilibrium(MarketParams(), TimeGrid(1.0, 10))
    assert "degenerate" in pr.meta and np.all(pr.lam == 1.0)


def test_grid_horizon_must_match():
    with pytest.raises(ParameterError):
        fb.solve_equilibrium(FIG3, TimeGrid(2.0, 10))


@settings(max_examples=25, deadline=None)
@given(A=st.floats(0.01, 5.0), c=st.floats(0.005, 5.0), sigma=st.floats(0.2, 3.0),
       S0=st.floats(0.05, 5.0), T=st.floats(0.1, 5.0))
def test_invariants_hold_broadly(A, c, sigma, S0, T):
    p = MarketParams(A=A, c=c, sigma=sigma, Sigma0v=S0, T=T)
    pr = fb.solve_equilibrium(p, TimeGrid(T, 400))
    assert fb.check_profiles(pr, p) == []
    assert pr.x1[-1] > 0


# -- insider's problem -------------------------------------------------------

def test_riccati_risk_neutral():
    pr = fb.solve_equilibrium(RISK_NEUTRAL, TimeGrid(1.0, 2000))
    assert fb.riccati_residual(pr, RISK_NEUTRAL) <= 1e-5


def test_riccati_inhomogeneous_term(fig3_profiles):
    zero = dataclasses.replace(fig3_profiles, h=np.zeros_like(fig3_profiles.h))
    assert fb.riccati_residual(zero, FIG3) == pytest.approx(1 / (4 * FIG3.c), rel=1e-15)


def test_riccati_second_order():
    r = [fb.riccati_residual(fb.solve_equilibrium(FIG3, TimeGrid(1.0, n)), FIG3) for n in (500, 1000)]
    assert r[1] <= 1e-4 and r[0] / r[1] > 3


def test_value_function_terminal():
    pr = fb.solve_equilibrium(RISK_NEUTRAL, TimeGrid(1.0, 100))
    assert fb.value_function(1.0, 0.3, 1.0, pr, RISK_NEUTRAL) == 0.0
    pa = fb.solve_equilibrium(FIG3, TimeGrid(1.0, 100))
    # h(T) is zero up to the shooting residual
    assert fb.value_function(1.0, 0.3, 1.0, pa, FIG3) == pytest.approx(-1.0, abs=1e-12)


def test_value_function_no_signal():
    pr = fb.solve_equilibrium(RISK_NEUTRAL, TimeGrid(1.0, 100))
    assert fb.value_function(0.5, 0.2, 0.2, pr, RISK_NEUTRAL) >= 0


def test_value_function_against_quadrature():
    pr = fb.solve_equilibrium(RISK_NEUTRAL, TimeGrid(1.0, 2000))
    lam0, c = pr.meta["lambda0"], RISK_NEUTRAL.c
    h = lambda t: (1 - t) / (2 * lam0 * (1 - t) + 4 * c)
    want = h(0.0) + lam0 ** 2 * quad(h, 0, 1, epsabs=1e-14)[0]
    assert fb.value_function(0.0, 0.0, 1.0, pr, RISK_NEUTRAL) == pytest.approx(want, rel=1e-7)


def test_value_function_needs_grid_time():
    pr = fb.solve_equilibrium(RISK_NEUTRAL, TimeGrid(1.0, 10))
    with pytest.raises(ParameterError):
        fb.value_function(0.05, 0.0, 1.0, pr, RISK_NEUTRAL)


def test_value_function_integral_shape(fig3_profiles):
    spec = fb.value_function_parts(fig3_profiles, FIG3)
    assert spec.integral_term[-1] == 0.0
    assert np.all(np.diff(spec.integral_term) <= 0) and np.all(spec.integral_term >= 0)


# -- frictionless limit ------------------------------------------------------

def test_kyle_limit():
    pr = fb.limit_profiles_c0(MarketParams(), TimeGrid(1.0, 10))
    assert np.all(pr.lam == 1.0)
    assert pr.beta[5] == pytest.approx(2.0, rel=1e-15)
    assert pr.x1[-1] == 0.0 and math.isnan(pr.beta[-1])


def test_limit_initial_slope():
    pr = fb.limit_profiles_c0(FIG3)
    assert pr.lam[0] == pytest.approx(1.0, rel=1e-15)
    near = fb.solve_equilibrium(FIG3.replace(c=1e-4))
    assert abs(near.lam[0] - 1.0) < 2e-3


@pytest.mark.parametrize("A", [0.5, 1.0, 3.0])
def test_limit_profiles_solve_the_frictionless_fbode(A):
    p = FIG3.replace(A=A, c=0.0)
    pr = fb.limit_profiles_c0(p, TimeGrid(1.0, 4000))
    dt = pr.grid.dt
    s2 = p.sigma ** 2
    x1, x2 = pr.x1[1:-1], pr.x2[1:-1]
    F1 = -s2 * x1 ** 2 / (4 * x2 ** 2)
    F2 = -s2 * x1 * (x2 - 2 * A * x2 ** 2) / (4 * x2 ** 2)
    sl = slice(0, int(0.9 * pr.grid.n_steps))
    assert np.max(np.abs((pr.x1[2:] - pr.x1[:-2]) / (2 * dt) - F1)[sl]) < 1e-5
    assert np.max(np.abs((pr.x2[2:] - pr.x2[:-2]) / (2 * dt) - F2)[sl]) < 1e-5
    assert pr.x1[0] == pytest.approx(p.Sigma0v, rel=1e-14) and abs(pr.x2[-1]) < 1e-15
    np.testing.assert_allclose(pr.lam[:-1], pr.x1[:-1] / (2 * pr.x2[:-1]), rtol=1e-12)


def test_limit_check_sequence():
    table = fb.limit_check(FIG3, TimeGrid(1.0, 1000), [0.1, 0.05, 0.025])
    assert table.monotone_beta and table.monotone_lambda
    gaps = [r.gap_lambda for r in table.rows]
    assert gaps[0] > gaps[1] > gaps[2]
    assert table.sup_beta_large < 0.005 and table.sup_lambda_large < 0.0025


def test_limit_check_risk_neutral_gap_is_closed_form():
    p = RISK_NEUTRAL
    table = fb.limit_check(p, TimeGrid(1.0, 200), [0.3])
    want = abs(math.sqrt(1 + 0.09) - 0.3 - 1.0)
    assert table.rows[0].gap_lambda == pytest.approx(want, rel=1e-13)


@pytest.mark.parametrize("seq", [[0.05, 0.1], [0.1, 0.0], [0.1, -0.1]])
def test_limit_check_rejects_bad_sequences(seq):
    with pytest.raises(ParameterError):
        fb.limit_check(FIG3, TimeGrid(1.0, 100), seq)
