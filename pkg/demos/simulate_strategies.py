"""
Simulating consumption strategies
=================================

Exact capital and habit paths for the open-loop strategies, closed-loop
paths for the optimal feedback, and Monte Carlo estimates of the
discounted utility of each.
"""

import numpy as np

from habitgrowth import GridSpec, ModelParams, evaluate_utility, solve_hjb
from habitgrowth.sde import TimeGrid, brownian_pair, feasible_constant_rate_control, lower_bound_strategy, simulate_bundle
from habitgrowth.verify import FeedbackMap, simulate_closed_loop

params = ModelParams(B=0.02, rho=0.3, beta1=0.1, beta2=0.1, theta=0.05, sigma=2.0, gamma=0.5, R=1.0)
grid = TimeGrid.from_dt(20.0, 0.01)
noise = brownian_pair(seed=42, grid=grid, path_indices=np.arange(2000))

# consuming the deterministic growth keeps k = c / B
lb = simulate_bundle(1.0, 1.0, lower_bound_strategy(1.0, noise, grid, params), noise, params)
print("lower bound: max |B k / c - 1| =", np.max(np.abs(params.B * lb.k / lb.c - 1)))

control, feasible = feasible_constant_rate_control(1.0, 0.01, noise, grid, params)
cr = simulate_bundle(1.0, 1.0, control, noise, params)
print(f"constant rate 0.01: feasible={feasible}, min k = {cr.k.min():.3f}")

result = solve_hjb(GridSpec.square(65), params)
fmap = FeedbackMap.from_policy(result.policy, params)
fb = simulate_closed_loop(1.0, 1.0, fmap, grid, 42, params, path_indices=np.arange(2000))
print(f"feedback: mean c/k at t=20 {np.mean(fb.c[:, -1] / fb.k[:, -1]):.4f}, truncated paths {fb.flags['truncated'].sum()}")

for name, b in [("lower bound", lb), ("constant rate", cr), ("feedback", fb)]:
    print(f"{name:>14}: E k_20 = {b.k[:, -1].mean():.3f}, E h_20 = {b.h[:, -1].mean():.3f}")

# discounted utility over 10/theta, same noise for every control
for name, source in [("lower bound", lower_bound_strategy), ("feedback", fmap)]:
    est = evaluate_utility(1.0, 1.0, source, n_paths=1000, dt=0.01, params=params)
    lo, hi = est.ci()
    print(f"J[{name}] = {est.mean:.2f}  95% CI [{lo:.2f}, {hi:.2f}]")
print(f"v(1, 1) = {result.value.v[32, 32]:.2f}")
