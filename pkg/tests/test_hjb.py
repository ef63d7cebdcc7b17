import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from habitgrowth import GridSpec, ModelParams, PolicyField, ValueField, solve_hjb
from habitgrowth.checks import monotonicity_violation, sign_violation
from habitgrowth.hjb import (
    boundary_closure,
    build_closure,
    discretize_generator,
    hjb_residual,
    nodal_utility,
    policy_evaluation,
    policy_improvement,
    stencil_coefficients,
    write_grid_csv,
    write_metadata_json,
)
from habitgrowth.model import optimal_consumption, State

from conftest import BASELINE, solved

G33 = GridSpec.square(33)


def rate_policy(grid, rate):
    K, _ = grid.states()
    return PolicyField(grid, rate * K)


def test_grid_spec_checks():
    with pytest.raises(ValueError):
        GridSpec(n_x=8)
    with pytest.raises(ValueError):
        GridSpec(x_min=1.0, x_max=0.0)
    m = GridSpec.square(65).interior_mask(0.5)
    assert m.sum() == 33 * 33


def test_generator_kills_constants_and_reads_drift_from_linear_fields(params):
    X, Y = G33.mesh()
    pol = rate_policy(G33, 0.04)
    assert np.nanmax(np.abs(discretize_generator(ValueField(G33, np.full(G33.shape, 3.0)), pol, params))) == 0.0
    Lx = discretize_generator(ValueField(G33, X.copy()), pol, params)
    want = params.B - 0.04 - 0.5 * params.beta1**2
    np.testing.assert_allclose(Lx[1:-1, 1:-1], want, rtol=1e-10)
    K, H = G33.states()
    Ly = discretize_generator(ValueField(G33, Y.copy()), pol, params)
    want = -params.rho - 0.5 * params.beta2**2 + params.rho * 0.04 * K / H
    np.testing.assert_allclose(Ly[1:-1, 1:-1], want[1:-1, 1:-1], rtol=1e-10)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32))
def test_stencil_is_monotone_for_any_feasible_policy(seed):
    p = ModelParams(**BASELINE)
    rng = np.random.default_rng(seed)
    K, _ = G33.states()
    c = rng.uniform(1e-6, 1.0, G33.shape) * p.R * K
    coef = stencil_coefficients(G33, c, p)
    assert all(np.all(np.asarray(w) >= 0) for w in coef.values())


def test_constant_field_gives_corner_policy(params):
    pol = policy_improvement(ValueField(G33, np.full(G33.shape, -5.0)), params)
    K, _ = G33.states()
    np.testing.assert_allclose(pol.c, params.R * K, rtol=1e-12)


def test_habit_only_field_switches_branch(params):
    p = params
    X, Y = G33.mesh()
    K, H = G33.states()
    v = -np.exp(p.habit_power * Y)
    pol = policy_improvement(ValueField(G33, v), p)
    inner = (slice(1, -1), slice(1, -1))
    c = pol.c[inner]
    corner = np.isclose(c, (p.R * K)[inner], rtol=1e-12)
    assert corner.any() and (~corner).any()
    # interior nodes: closed form with one of the one-sided habit differences, or the drift switch point
    hh = H[inner]
    fwd = (v[1:-1, 2:] - v[1:-1, 1:-1]) / G33.dy / hh
    bwd = (v[1:-1, 1:-1] - v[1:-1, :-2]) / G33.dy / hh
    kk = K[inner]
    cands = [optimal_consumption(State(kk, hh), 0.0, fwd, p), optimal_consumption(State(kk, hh), 0.0, bwd, p),
             hh * (1 + 0.5 * p.beta2**2 / p.rho)]
    match = np.zeros_like(corner)
    for cand in cands:
        match |= np.isclose(c, cand, rtol=1e-10)
    assert np.all(match[~corner])
    # analytic switch: interior iff rho * habit_power * (R k)^sigma > h, up to one cell
    analytic = p.rho * p.habit_power * (p.R * kk) ** p.sigma > hh
    assert np.mean(analytic == ~corner) > 0.95


def test_zero_utility_gives_zero_value(params):
    v = policy_evaluation(rate_policy(G33, 0.05), params, utility=np.zeros(G33.shape))
    assert np.max(np.abs(v.v)) == 0.0


def test_evaluation_solves_its_linear_system(params):
    pol = rate_policy(G33, 0.05)
    v = policy_evaluation(pol, params)
    lhs = params.theta * v.v - discretize_generator(v, pol, params)
    u = nodal_utility(G33, pol.c, params)
    np.testing.assert_allclose(lhs[1:-1, 1:-1], u[1:-1, 1:-1], rtol=1e-9, atol=1e-9)


def test_residual_of_zero_field(params):
    res = hjb_residual(ValueField(G33, np.zeros(G33.shape)), params)["field"]
    K, H = G33.states()
    want = (H**params.gamma / (params.R * K)) ** (params.sigma - 1) / (params.sigma - 1)
    np.testing.assert_allclose(res[1:-1, 1:-1], want[1:-1, 1:-1], rtol=1e-12)


def test_closure_scaling_and_idempotence(params):
    rng = np.random.default_rng(0)
    v = ValueField(G33, -rng.uniform(1, 2, G33.shape))
    once = boundary_closure(v, params)
    twice = boundary_closure(once, params)
    assert np.array_equal(once.v, twice.v)
    s = G33.dx
    # bottom-left faces reach the interior along the diagonal in one cell
    for j in range(1, 30):
        assert once.v[0, j] == pytest.approx(np.exp(0.5 * s) * once.v[1, j + 1], rel=1e-14)
    assert np.array_equal(once.v[1:-1, 1:-1], v.v[1:-1, 1:-1])
    cl = build_closure(G33, params)
    assert cl.heuristic.sum() > 0 and cl.heuristic.sum() < cl.nodes.size


def test_baseline_solve_converges(params):
    res = solved(65)
    assert res.converged and res.value.iterations <= 50
    # independent residual: plug the returned policy into the linear operator
    lhs = params.theta * res.value.v - discretize_generator(res.value, res.policy, params)
    u = nodal_utility(res.value.grid, res.policy.c, params)
    assert np.max(np.abs(lhs - u)[1:-1, 1:-1]) <= 1e-6
    assert hjb_residual(res.value, params)["interior"] <= 1e-6
    hist = res.value.residual_history
    assert hist[-1] <= 1e-6 and hist[0] > hist[-1]


def test_first_order_convergence_under_refinement():
    v = [solved(n).value.v for n in (33, 65, 129)]
    d1 = abs(v[0][16, 16] - v[1][32, 32])
    d2 = abs(v[1][32, 32] - v[2][64, 64])
    assert 1.5 < d1 / d2 < 2.5


@pytest.mark.parametrize("changes", [
    {},
    {"sigma": 3.0, "gamma": 0.3, "theta": 0.15},
    {"rho": 0.1, "beta1": 0.2, "beta2": 0.05, "theta": 0.2},
    {"R": 0.1},
    {"B": 0.05, "gamma": 0.8, "theta": 0.1},
])
def test_solution_sign_and_monotonicity(changes):
    p = ModelParams(**{**BASELINE, **changes})
    res = solve_hjb(G33, p)
    assert res.converged
    assert sign_violation(res.value) == 0.0
    dk, dh = monotonicity_violation(res.value)
    assert dk <= 1e-8 and dh <= 1e-8


def test_solver_refuses_invalid_parameters(params):
    with pytest.raises(ValueError, match="discount"):
        solve_hjb(G33, params.replace(theta=0.02))


def test_grid_outputs(tmp_path, params):
    res = solved(33)
    write_grid_csv(res, params, tmp_path / "grid.csv")
    lines = (tmp_path / "grid.csv").read_text().splitlines()
    assert lines[0] == "k,h,v,c_star,residual" and len(lines) == 33 * 33 + 1
    write_metadata_json(res, params, tmp_path / "solve.json")
    meta = json.loads((tmp_path / "solve.json").read_text())
    assert meta["converged"] and meta["grid"]["n_x"] == 33 and meta["params"]["theta"] == 0.05
