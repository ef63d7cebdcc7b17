"""Monte Carlo estimates of the discounted utility of a consumption plan.

A control source is either an open-loop *recipe* (a callable
``recipe(k0, noise, grid, params) -> ControlPath`` such as
``sde.lower_bound_strategy``) or a feedback rule (``PolicyField`` or
``verify.FeedbackMap``).  Recipes are simulated with the exact solution of
the state equations, feedback rules by closed-loop time stepping.

Paths are processed in chunks but per-path integrals are kept in path-index
order and reduced with numpy's pairwise summation, so the estimate does not
depend on the chunk size.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import asdict, dataclass
from typing import Callable

import numpy as np

from .model import ModelParams, validate_params
from .sde import (
    ControlPath,
    TimeGrid,
    brownian_pair,
    capital_path_exact,
    habit_path_exact,
    path_admissibility,
    stochastic_exponential,
)

CLAMP = 1e-12
MAX_REJECT = 0.01
TAIL_FRACTION = 0.1


class McError(RuntimeError):
    def __init__(self, msg, diagnostics: dict | None = None):
        super().__init__(msg)
        self.diagnostics = diagnostics or {}


@dataclass(frozen=True)
class McEstimate:
    mean: float
    std_err: float
    n_paths: int
    t_trunc: float
    tail_proxy: float
    n_rejected: int = 0
    n_clamped: int = 0
    dt: float = 0.0
    seed: int = 0

    def ci(self, z: float = 1.959963984540054) -> tuple[float, float]:
        return self.mean - z * self.std_err, self.mean + z * self.std_err

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class TailCheck:
    passed: bool
    ratio: float
    anomaly: bool
    message: str


def default_t_trunc(params: ModelParams) -> float:
    return 10.0 / params.theta


def discounted_utility_integrals(c, h, k, grid: TimeGrid, params: ModelParams):
    """Per-path trapezoid integrals of e^{-theta t} u(c, h) on [0, t_end].

    Returns (total, tail, n_clamped).  ``tail`` is the part of the integral
    over the last 10% of the horizon.  Consumption is floored at
    CLAMP * R * k before the utility is formed.
    """
    floor = CLAMP * params.R * np.asarray(k)
    clamped = c < floor
    c = np.where(clamped, floor, c)
    s = params.sigma
    t = grid.times
    f = -((np.power(h, params.gamma) / c) ** (s - 1.0)) / (s - 1.0) * np.exp(-params.theta * t)
    seg = 0.5 * grid.dt * (f[..., 1:] + f[..., :-1])
    total = np.sum(seg, axis=-1)
    start = int(math.floor((1.0 - TAIL_FRACTION) * grid.n_steps + 1e-9))
    tail = np.sum(seg[..., start:], axis=-1)
    return total, tail, int(np.count_nonzero(clamped))


def proportional_recipe(rate: float) -> Callable:
    """c = rate * k, written open-loop: k = k0 E((B - rate) t + beta1 W1)."""
    if not rate > 0:
        raise ValueError("rate must be > 0")

    def recipe(k0, noise, grid, params):
        k0 = np.asarray(k0, dtype=float)[..., None] if np.ndim(k0) else k0
        E = stochastic_exponential(params.B - rate, params.beta1, noise.w1, grid)
        return ControlPath(rate * k0 * E, "user")

    recipe.__name__ = f"proportional_{rate:g}"
    return recipe


def _is_feedback(source) -> bool:
    from .hjb import PolicyField

    return isinstance(source, PolicyField) or getattr(source, "is_feedback", False)


def _simulate_chunk(k0, h0, source, grid, seed, idx, params):
    if _is_feedback(source):
        from .hjb import PolicyField
        from .verify import FeedbackMap, simulate_closed_loop

        fmap = FeedbackMap.from_policy(source, params) if isinstance(source, PolicyField) else source
        b = simulate_closed_loop(k0, h0, fmap, grid, seed, params, path_indices=idx)
        return b.c, b.k, b.h, b.flags.get("truncated", np.zeros(len(idx), dtype=bool))
    noise = brownian_pair(seed, grid, idx)
    control = source(k0, noise, grid, params)
    c = np.broadcast_to(control.c, noise.w1.shape)
    cp = ControlPath(c, control.provenance)
    k = capital_path_exact(k0, cp, noise, grid, params)
    h = habit_path_exact(h0, cp, noise, grid, params)
    return c, k, h, np.zeros(len(idx), dtype=bool)


def evaluate_utility(
    k0: float,
    h0: float,
    control_source,
    t_trunc: float | None = None,
    n_paths: int = 10_000,
    seed: int = 42,
    params: ModelParams | None = None,
    dt: float = 1e-3,
    chunk: int | None = None,
) -> McEstimate:
    """Sample mean and standard error of the truncated discounted utility."""
    if params is None:
        raise ValueError("params is required")
    if not validate_params(params).passed:
        raise ValueError("discount condition fails; utility may be -inf for every control")
    if not (k0 > 0 and h0 > 0):
        raise ValueError("initial state must be positive")
    if n_paths < 2:
        raise ValueError("n_paths must be >= 2 for a standard error")
    t_trunc = default_t_trunc(params) if t_trunc is None else float(t_trunc)
    grid = TimeGrid.from_dt(t_trunc, dt)
    if chunk is None:
        chunk = max(1, min(n_paths, int(4e6 // (grid.n_steps + 1))))
    totals = np.empty(n_paths)
    tails = np.empty(n_paths)
    ok = np.ones(n_paths, dtype=bool)
    n_clamped = 0
    for start in range(0, n_paths, chunk):
        idx = np.arange(start, min(n_paths, start + chunk))
        c, k, h, truncated = _simulate_chunk(k0, h0, control_source, grid, seed, idx, params)
        ok[idx] = path_admissibility(k, h, c, params) & ~truncated
        with np.errstate(all="ignore"):
            tot, tail, nc = discounted_utility_integrals(c, h, k, grid, params)
        totals[idx], tails[idx] = tot, tail
        n_clamped += nc
    n_rej = int(n_paths - ok.sum())
    if n_rej > MAX_REJECT * n_paths:
        raise McError(
            f"{n_rej} of {n_paths} paths violated the state constraints",
            {"rejected": n_rej, "n_paths": n_paths, "first_rejected": np.flatnonzero(~ok)[:10].tolist()},
        )
    if n_clamped:
        warnings.warn(f"{n_clamped} nodes had consumption floored at {CLAMP:g}*R*k", stacklevel=2)
    vals = totals[ok]
    n = vals.size
    mean = float(np.sum(vals) / n)
    std_err = float(np.std(vals, ddof=1) / math.sqrt(n)) if n > 1 else math.inf
    tail_proxy = abs(float(np.sum(tails[ok]) / n))
    return McEstimate(mean, std_err, n, t_trunc, tail_proxy, n_rej, n_clamped, grid.dt, seed)


def utility_tail_check(estimate: McEstimate) -> TailCheck:
    """Truncation is deemed adequate when the last 10% window holds <= 1% of |mean|."""
    if estimate.mean == 0.0:
        return TailCheck(True, 0.0, True, "mean is exactly zero; check is vacuous")
    ratio = estimate.tail_proxy / abs(estimate.mean)
    if ratio <= 0.01:
        return TailCheck(True, ratio, False, "ok")
    return TailCheck(False, ratio, False, f"tail holds {100 * ratio:.2f}% of |J|; increase t_trunc")


ESTIMATE_FIELDS = ["k0", "h0", "mean", "std_err", "n_paths", "t_trunc", "tail_proxy"]


def write_estimates_csv(rows: list[tuple[float, float, McEstimate]], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(ESTIMATE_FIELDS)
        for k0, h0, e in rows:
            w.writerow([repr(float(k0)), repr(float(h0)), repr(e.mean), repr(e.std_err), e.n_paths, repr(e.t_trunc), repr(e.tail_proxy)])
