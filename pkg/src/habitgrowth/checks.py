"""Property checks shared by the ``check`` subcommand and the test-suite."""

from __future__ import annotations

import numpy as np

from .hjb import GridSpec, SolveResult, ValueField, solve_hjb
from .model import ModelParams, State, g_branches, hamiltonian_g, optimal_consumption
from .reduced import ReducedSolution


def random_costates(n: int, rng: np.random.Generator, state_range=(0.1, 10.0), p_range=(-5.0, 5.0)):
    k = rng.uniform(*state_range, n)
    h = rng.uniform(*state_range, n)
    p_k = rng.uniform(*p_range, n)
    p_h = rng.uniform(*p_range, n)
    return k, h, p_k, p_h


def argmax_deficit(params: ModelParams, n_draws: int = 10_000, n_grid: int = 10_000, seed: int = 0,
                   chunk: int = 250) -> float:
    """max over draws and a geometric c-grid of g(c) - g(c*); <= ~0 when c* is the argmax."""
    rng = np.random.default_rng(seed)
    k, h, p_k, p_h = random_costates(n_draws, rng)
    c_star = optimal_consumption(State(k, h), p_k, p_h, params)
    g_star = hamiltonian_g(c_star, State(k, h), p_k, p_h, params)
    frac = np.geomspace(1e-6, 1.0, n_grid)
    worst = -np.inf
    for a in range(0, n_draws, chunk):
        sl = slice(a, a + chunk)
        Rk = params.R * k[sl, None]
        c = np.minimum(frac[None, :] * Rk, Rk)
        g = hamiltonian_g(c, State(k[sl, None], h[sl, None]), p_k[sl, None], p_h[sl, None], params)
        worst = max(worst, float(np.max(g.max(axis=1) - g_star[sl])))
    return worst


def branch_continuity_error(params: ModelParams, n: int = 1000, seed: int = 0) -> float:
    """Relative gap between the two branches of G right at the switching point."""
    rng = np.random.default_rng(seed)
    k = rng.uniform(0.1, 10.0, n)
    h = rng.uniform(0.1, 10.0, n)
    p_h = rng.uniform(-5.0, 5.0, n)
    P = np.power(h, params.habit_power) * (params.R * k) ** (-params.sigma)
    worst = 0.0
    for eps in (-1e-12, 0.0, 1e-12):
        p_k = P * (1 + eps) + params.rho * p_h
        corner, interior, _ = g_branches(State(k, h), p_k, p_h, params)
        worst = max(worst, float(np.max(np.abs(corner - interior) / (1 + np.abs(corner)))))
    return worst


def sign_violation(value: ValueField) -> float:
    return max(0.0, float(np.max(value.v)))


def monotonicity_violation(value: ValueField) -> tuple[float, float]:
    """(amount v decreases along ln k, amount v increases along ln h), both >= 0."""
    dx = np.diff(value.v, axis=0)
    dy = np.diff(value.v, axis=1)
    return max(0.0, -float(dx.min())), max(0.0, float(dy.max()))


def diagonal_homogeneity_error(value: ValueField, params: ModelParams, fraction: float = 0.5) -> float:
    """max |v(x+s, y+s) - e^{m s} v(x, y)| / |v(x+s, y+s)| over neighbouring diagonal node pairs."""
    g = value.grid
    if abs(g.dx - g.dy) > 1e-12 * g.dx:
        raise ValueError("diagonal pairs need equal spacing on both axes")
    m = params.homogeneity_degree
    mask = g.interior_mask(fraction)
    a, b = value.v[:-1, :-1], value.v[1:, 1:]
    pair = mask[:-1, :-1] & mask[1:, 1:]
    err = np.abs(b - np.exp(m * g.dx) * a) / np.abs(b)
    return float(err[pair].max())


def cross_solver_error(result: SolveResult, reduced: ReducedSolution, params: ModelParams,
                       fraction: float = 0.5) -> float:
    v2 = result.value.v
    v1 = reduced.reconstruct(result.value.grid, params)
    mask = result.value.grid.interior_mask(fraction)
    return float(np.max(np.abs(v2 - v1)[mask] / np.abs(v2[mask])))


def refined(grid: GridSpec) -> GridSpec:
    """Same box, spacing halved; the coarse nodes are every other fine node."""
    return GridSpec(grid.x_min, grid.x_max, 2 * grid.n_x - 1, grid.y_min, grid.y_max, 2 * grid.n_y - 1)


def scheme_tolerance(result: SolveResult, params: ModelParams, fine: SolveResult | None = None,
                     tol: float = 1e-6) -> np.ndarray:
    """Nodal discretization error estimate 2 |v_h - v_{h/2}| of a first-order scheme."""
    if fine is None:
        fine = solve_hjb(refined(result.value.grid), params, tol=tol)
    return 2.0 * np.abs(result.value.v - fine.value.v[::2, ::2])
