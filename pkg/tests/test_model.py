import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from habitgrowth import CoState, ModelParams, State, validate_params
from habitgrowth.model import (
    f_tilde,
    g_branches,
    generator_terms,
    h_max,
    hamiltonian_G,
    hamiltonian_g,
    lower_bound_rhs,
    optimal_consumption,
    running_utility,
)

from conftest import BASELINE

pos = st.floats(0.1, 10.0)
grad = st.floats(-5.0, 5.0)


def test_params_reject_out_of_range_fields():
    for field, bad, msg in [("sigma", 0.5, "sigma must be > 1"), ("rho", 1.0, "rho"),
                            ("gamma", 1.0, "gamma"), ("beta1", 0.0, "beta1"), ("R", 0.01, "R must be >= B")]:
        with pytest.raises(ValueError, match=msg):
            ModelParams(**{**BASELINE, field: bad})
    with pytest.raises(TypeError, match="theta"):
        ModelParams(**{**BASELINE, "theta": "0.05"})


def test_validate_baseline(frozen):
    rep = validate_params(ModelParams(**BASELINE))
    assert rep.passed and rep.case == frozen["threshold_baseline"]["case"]
    assert rep.threshold == pytest.approx(frozen["threshold_baseline"]["value"], rel=1e-12)
    assert rep.slack == pytest.approx(frozen["threshold_baseline"]["slack"], rel=1e-12)
    assert rep.continuity_regime


def test_validate_first_case(frozen):
    rep = validate_params(ModelParams(**{**BASELINE, "rho": 0.01, "beta1": 0.5, "theta": 0.7}))
    assert rep.passed and rep.case == "i"
    assert rep.threshold == pytest.approx(frozen["threshold_case_i"]["value"], rel=1e-12)


def test_validate_fails_below_threshold(frozen):
    rep = validate_params(ModelParams(**{**BASELINE, "theta": 0.02}))
    assert not rep.passed
    assert rep.slack == pytest.approx(frozen["threshold_baseline"]["slack_theta_002"], rel=1e-12)


def test_validate_warns_on_thin_slack():
    thr = validate_params(ModelParams(**BASELINE)).threshold
    with pytest.warns(UserWarning, match="low slack"):
        rep = validate_params(ModelParams(**{**BASELINE, "theta": thr + 1e-9}))
    assert rep.passed and rep.low_slack


def test_zero_habit_weight_never_validates():
    assert not validate_params(ModelParams(**{**BASELINE, "gamma": 0.0, "theta": 50.0})).passed


def test_running_utility_values(frozen, params):
    assert running_utility(1.0, 1.0, params) == pytest.approx(-1.0)
    assert running_utility(4.0, 1.0, params) == pytest.approx(-0.25)
    p3 = params.replace(sigma=3.0)
    assert running_utility(1.0, 4.0, p3) == pytest.approx(frozen["utility_c1_h4_s3"], rel=1e-14)
    with pytest.raises(ValueError):
        running_utility(0.0, 1.0, params)


def test_hamiltonian_g_values(frozen, params):
    s = State(2.0, 1.0)
    assert hamiltonian_g(1.0, s, 0.0, 0.0, params) == pytest.approx(-1.0)
    assert hamiltonian_g(1.0, s, 2.0, 1.0, params) == pytest.approx(frozen["g_example"], rel=1e-14)
    with pytest.raises(ValueError):
        hamiltonian_g(2.5, s, 0.0, 0.0, params)
    with pytest.raises(ValueError):
        hamiltonian_g(0.0, s, 0.0, 0.0, params)


def test_optimal_consumption_against_brute_force(frozen, params):
    s = State(1.0, 1.0)
    assert optimal_consumption(s, 2.0, 1.0, params) == pytest.approx(frozen["argmax_interior"]["c"], rel=1e-9)
    assert optimal_consumption(s, 0.5, 1.0, params) == frozen["argmax_corner"]["c"]
    assert optimal_consumption(s, 0.1, 1.0, params) == 1.0
    assert hamiltonian_G(s, 2.0, 1.0, params) == pytest.approx(frozen["argmax_interior"]["G"], rel=1e-12)
    assert hamiltonian_G(s, 0.5, 1.0, params) == pytest.approx(frozen["argmax_corner"]["G"], rel=1e-12)


def test_h_max_and_f_tilde(frozen, params):
    s = State(1.0, 1.0)
    assert h_max(s, CoState(0.0, 0.0), params) == pytest.approx(-1.0)
    p = params.replace(beta1=0.2)
    assert h_max(s, CoState(0.0, 0.0, q_kk=1.0), p) - h_max(s, CoState(0.0, 0.0), p) == pytest.approx(0.02)
    assert f_tilde(CoState(0.0, 0.0), 0.0, s, params) == h_max(s, CoState(0.0, 0.0), params)
    assert f_tilde(CoState(0.0, 0.0), 1.0, s, params) == pytest.approx(frozen["f_tilde_v1"], rel=1e-14)


def test_mixed_derivative_has_no_effect(params):
    s = State(1.3, 0.7)
    assert h_max(s, CoState(0.2, -0.4, 1.0, 2.0, 0.0), params) == h_max(s, CoState(0.2, -0.4, 1.0, 2.0, 9.0), params)


def test_lower_bound_rhs(frozen, params):
    assert lower_bound_rhs(1.0, 1.0, 1.0, params) == pytest.approx(-2.0)
    assert lower_bound_rhs(4.0, 1.0, 1.0, params) == pytest.approx(frozen["lower_bound_k4"], rel=1e-14)
    with pytest.raises(ValueError):
        lower_bound_rhs(1.0, 1.0, 0.0, params)


@settings(max_examples=300, deadline=None)
@given(k=pos, h=pos, p_k=grad, p_h=grad, sigma=st.floats(1.1, 6.0), gamma=st.floats(0.0, 0.95))
def test_argmax_beats_every_feasible_c(k, h, p_k, p_h, sigma, gamma):
    p = ModelParams(**{**BASELINE, "sigma": sigma, "gamma": gamma})
    s = State(k, h)
    c_star = optimal_consumption(s, p_k, p_h, p)
    assert 0 < c_star <= p.R * k
    g_star = hamiltonian_g(c_star, s, p_k, p_h, p)
    c = np.geomspace(1e-4, 1.0, 400) * p.R * k
    g = hamiltonian_g(c, s, p_k, p_h, p)
    assert np.max(g) - g_star <= 1e-9 * (1 + abs(g_star))
    assert hamiltonian_G(s, p_k, p_h, p) == pytest.approx(g_star, rel=1e-9, abs=1e-12)


@settings(max_examples=200, deadline=None)
@given(k=pos, h=pos, p_h=grad, sigma=st.floats(1.1, 6.0), gamma=st.floats(0.0, 0.95))
def test_branches_meet_at_switch(k, h, p_h, sigma, gamma):
    p = ModelParams(**{**BASELINE, "sigma": sigma, "gamma": gamma})
    P = h ** p.habit_power * (p.R * k) ** (-sigma)
    corner, interior, _ = g_branches(State(k, h), P + p.rho * p_h, p_h, p)
    assert corner == pytest.approx(interior, rel=1e-12)


@settings(max_examples=200, deadline=None)
@given(k=pos, h=pos, p_k=grad, p_h=grad, q1=grad, q2=grad, v=grad)
def test_h_max_is_generator_plus_G(k, h, p_k, p_h, q1, q2, v):
    p = ModelParams(**BASELINE)
    s, cs = State(k, h), CoState(p_k, p_h, q1, q2)
    want = generator_terms(s, cs, p) + hamiltonian_G(s, p_k, p_h, p)
    assert h_max(s, cs, p) == pytest.approx(want, rel=1e-12, abs=1e-12)
    assert f_tilde(cs, v, s, p) == pytest.approx(want - p.theta * v, rel=1e-12, abs=1e-12)


@settings(max_examples=200, deadline=None)
@given(c=pos, h=pos, sigma=st.floats(1.01, 8.0), gamma=st.floats(0.0, 0.99))
def test_utility_nonpositive_and_increasing(c, h, sigma, gamma):
    p = ModelParams(**{**BASELINE, "sigma": sigma, "gamma": gamma})
    u = running_utility(c, h, p)
    assert u <= 0
    assert running_utility(1.01 * c, h, p) >= u
    assert running_utility(c, 1.01 * h, p) <= u


@settings(max_examples=200, deadline=None)
@given(k=pos, h=pos, a=st.floats(0.2, 5.0))
def test_lower_bound_rhs_is_homogeneous(k, h, a):
    p = ModelParams(**BASELINE)
    lhs = lower_bound_rhs(a * k, a * h, 1.0, p)
    assert lhs == pytest.approx(a ** p.homogeneity_degree * lower_bound_rhs(k, h, 1.0, p), rel=1e-12)


@settings(max_examples=200, deadline=None)
@given(k=pos, h=pos, p_k=grad, p_h=grad, sigma=st.floats(1.1, 6.0), gamma=st.floats(0.0, 0.95))
def test_g_is_concave_in_consumption(k, h, p_k, p_h, sigma, gamma):
    p = ModelParams(**{**BASELINE, "sigma": sigma, "gamma": gamma})
    c = np.geomspace(1e-3, 1.0, 200) * p.R * k
    g = hamiltonian_g(c, State(k, h), p_k, p_h, p)
    # second divided difference on a nonuniform grid
    d1 = np.diff(g) / np.diff(c)
    d2 = np.diff(d1) / (0.5 * (c[2:] - c[:-2]))
    assert np.all(d2 <= 1e-9 * (1 + np.abs(g[1:-1])))
